/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const contrastive_bound: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const detect_shilling: (a: number, b: number, c: number, d: bigint) => [number, number];
export const explore_spectrum: (a: number, b: number, c: bigint) => [number, number];
export const flag_items: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

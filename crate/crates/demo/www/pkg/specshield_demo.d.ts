/* tslint:disable */
/* eslint-disable */

/**
 * Upper bound on the contrastive loss for two spectra that share singular
 * vectors, with `n` nodes.
 */
export function contrastive_bound(first: Float64Array, second: Float64Array, n: number): string;

/**
 * Trains on a graph poisoned with random fake profiles and returns the
 * per-item reconstruction errors, the promoted items and the flagged set.
 */
export function detect_shilling(attack_size: number, rank: number, gamma: number, seed: bigint): string;

/**
 * Item-embedding spectra of a small synthetic recommender trained with the
 * given contrastive weight and without it.
 */
export function explore_spectrum(gcl_weight: number, epochs: number, seed: bigint): string;

/**
 * Re-thresholds reconstruction errors at a new γ without retraining.
 */
export function flag_items(epsilon: Float64Array, gamma: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly contrastive_bound: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly detect_shilling: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly explore_spectrum: (a: number, b: number, c: bigint) => [number, number];
    readonly flag_items: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

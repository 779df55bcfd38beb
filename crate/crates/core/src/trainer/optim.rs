use ndarray::{Array2, Zip};

use crate::trainer::config::Optimizer;

#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: Optimizer,
    learning_rate: f64,
    step: i32,
    first_moment: Array2<f64>,
    second_moment: Array2<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, learning_rate: f64, shape: (usize, usize)) -> Self {
        let (first_moment, second_moment) = match kind {
            Optimizer::Sgd => (Array2::zeros((0, 0)), Array2::zeros((0, 0))),
            Optimizer::Adam { .. } => (Array2::zeros(shape), Array2::zeros(shape)),
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            first_moment,
            second_moment,
        }
    }

    pub fn apply(&mut self, params: &mut Array2<f64>, grad: &Array2<f64>) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            Optimizer::Sgd => params.scaled_add(-lr, grad),
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                Zip::from(params)
                    .and(grad)
                    .and(&mut self.first_moment)
                    .and(&mut self.second_moment)
                    .for_each(|p, &g, m, v| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    });
            }
        }
    }
}

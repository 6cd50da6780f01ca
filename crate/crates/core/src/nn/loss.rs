use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mae,
    Mse,
    /// Expects probabilities (softmax output) against one-hot targets.
    CrossEntropy,
}

const PROB_FLOOR: f64 = 1e-12;

impl Loss {
    /// Mean loss and its gradient w.r.t. `pred`.
    pub fn value_and_grad(self, pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut grad = Array2::zeros(pred.raw_dim());
        let rows = pred.nrows().max(1) as f64;
        let n = pred.len().max(1) as f64;
        let mut total = 0.0;
        match self {
            Loss::Mae => Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
                let r = p - t;
                total += r.abs();
                // subgradient 0 at a zero residual
                *g = if r > 0.0 { 1.0 / n } else if r < 0.0 { -1.0 / n } else { 0.0 };
            }),
            Loss::Mse => Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
                let r = p - t;
                total += r * r;
                *g = 2.0 * r / n;
            }),
            Loss::CrossEntropy => {
                Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
                    let p = p.max(PROB_FLOOR);
                    total -= t * p.ln();
                    *g = -t / p / rows;
                });
                return (total / rows, grad);
            }
        }
        (total / n, grad)
    }

    pub fn value(self, pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
        self.value_and_grad(pred, target).0
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ParamSet;

/// Adaptive-moment descent with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(hyper: AdamHyper, params: &ParamSet) -> Self {
        Adam {
            hyper,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One descent step on every array named in `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        let AdamHyper { lr, beta1, beta2, eps } = self.hyper;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (name, g) in grads.iter() {
            let p = params.get_mut(name)?;
            let m = self.m.get_mut(name)?;
            if p.shape() != g.shape() || m.shape() != g.shape() {
                return Err(Error::arg(format!("gradient shape mismatch for {name}")));
            }
            let v = self.v.get_mut(name)?;
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamSet::new();
        p.insert("w", array![1.0, -2.0, 0.5].into_dyn());
        let mut g = p.zeros_like();
        g.insert("w", array![3.0, -0.01, 0.0].into_dyn());
        let hyper = AdamHyper {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut adam = Adam::new(hyper, &p);
        adam.step(&mut p, &g).unwrap();
        let w = p.get("w").unwrap();
        assert!((w[0] - 0.9).abs() < 1e-8);
        assert!((w[1] + 1.9).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
        assert_eq!(adam.t, 1);
    }
}

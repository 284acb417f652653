use ndarray::Zip;

use super::{ModelParams, Scalar};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let c1 = T::cast(1.0 - self.beta1.powi(self.step));
        let c2 = T::cast(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::cast(lr), T::cast(self.eps));
        let one = T::one();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpottingConfig;

    #[test]
    fn first_step_moves_each_weight_by_the_learning_rate() {
        let cfg = SpottingConfig::tiny();
        let mut p = ModelParams::<f64>::init(&cfg, 3);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.mlp1.w.fill(0.5);
        g.tcnn.b.fill(-2.0);
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &g, 1e-3);
        for (a, b) in p.mlp1.w.iter().zip(&before.mlp1.w) {
            assert!((b - a - 1e-3).abs() < 1e-9);
        }
        for (a, b) in p.tcnn.b.iter().zip(&before.tcnn.b) {
            assert!((a - b - 1e-3).abs() < 1e-9);
        }
        assert_eq!(p.mlp2, before.mlp2);
        assert_eq!(adam.steps_taken(), 1);
    }
}

use crate::error::{Error, Result};

use super::ModelParams;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters are left untouched if any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        for (name, g) in grads.fields() {
            if let Some(i) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::Training {
                    param: name,
                    message: format!("gradient entry {i} is {}", g.data()[i]),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let slots = params
            .fields_mut()
            .into_iter()
            .zip(grads.fields())
            .zip(self.m.fields_mut())
            .zip(self.v.fields_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in slots {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut());
            for (((p, &g), m), v) in it {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnConfig;
    use crate::training::ModelConfig;

    fn setup() -> (ModelParams, ModelParams) {
        let cfg = ModelConfig {
            gnn: GnnConfig::new(2, 1, 1).unwrap(),
            num_labels: 2,
            baseline: false,
        };
        let p = ModelParams::init(&cfg, 1);
        let mut g = p.zeros_like();
        let mut k = 0;
        for (_, t) in g.fields_mut() {
            for x in t.data_mut() {
                k += 1;
                *x = if k % 3 == 0 { 0.0 } else if k % 2 == 0 { 2.5 } else { -0.01 };
            }
        }
        (p, g)
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let (p0, g) = setup();
        let mut p = p0.clone();
        let mut adam = Adam::new(&p, 1e-3);
        adam.step(&mut p, &g).unwrap();
        for (((_, a), (_, b)), (_, g)) in p.fields().into_iter().zip(p0.fields()).zip(g.fields()) {
            for ((a, b), g) in a.data().iter().zip(b.data()).zip(g.data()) {
                let want = -1e-3 * g.signum() * (g.abs() / (g.abs() + 1e-8));
                assert!((a - b - want).abs() < 1e-12, "{} vs {}", a - b, want);
            }
        }
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let (mut p, mut g) = setup();
        let before = p.clone();
        g.heads.edge_b.data_mut()[1] = f64::NAN;
        let mut adam = Adam::new(&p, 1e-3);
        match adam.step(&mut p, &g) {
            Err(Error::Training { param, .. }) => assert_eq!(param, "heads.edge_b"),
            other => panic!("expected a training error, got {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps_taken(), 0);
    }
}

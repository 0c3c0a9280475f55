//! Adam optimizer over flat parameter buffers, with bias correction.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Step size and moment decay settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamOptions<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamOptions<F> {
    /// Standard decay rates with a caller-chosen step size.
    pub fn with_learning_rate(learning_rate: F) -> Self {
        AdamOptions { learning_rate, beta1: F::of(0.9), beta2: F::of(0.999), epsilon: F::of(1e-8) }
    }
}

impl<F: Scalar> Default for AdamOptions<F> {
    fn default() -> Self {
        Self::with_learning_rate(F::of(0.001))
    }
}

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
    opts: AdamOptions<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(param_count: usize, opts: AdamOptions<F>) -> Result<Self> {
        if !(opts.learning_rate > F::zero())
            || !(opts.beta1 >= F::zero() && opts.beta1 < F::one())
            || !(opts.beta2 >= F::zero() && opts.beta2 < F::one())
            || !(opts.epsilon > F::zero())
        {
            return Err(Error::Parameter(format!(
                "optimizer settings out of range: lr {}, beta1 {}, beta2 {}, eps {}",
                opts.learning_rate, opts.beta1, opts.beta2, opts.epsilon
            )));
        }
        Ok(AdamState {
            m: vec![F::zero(); param_count],
            v: vec![F::zero(); param_count],
            step: 0,
            opts,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update, in place. A non-finite gradient aborts
    /// without touching the parameters, so callers can fail the whole run.
    pub fn apply(&mut self, theta: &mut [F], grads: &[F]) -> Result<()> {
        if theta.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                what: "optimizer buffers",
                expected: self.m.len(),
                got: theta.len().min(grads.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let o = self.opts;
        let one = F::one();
        let mc = one - o.beta1.powi(self.step as i32);
        let vc = one - o.beta2.powi(self.step as i32);
        for k in 0..theta.len() {
            let g = grads[k];
            self.m[k] = o.beta1 * self.m[k] + (one - o.beta1) * g;
            self.v[k] = o.beta2 * self.v[k] + (one - o.beta2) * g * g;
            let m_hat = self.m[k] / mc;
            let v_hat = self.v[k] / vc;
            theta[k] -= o.learning_rate * m_hat / (v_hat.sqrt() + o.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        let opts = AdamOptions::<f64>::default();
        let mut state = AdamState::new(1, opts).unwrap();
        let mut theta = [0.4];
        state.apply(&mut theta, &[3.7]).unwrap();
        let moved = (0.4 - theta[0]).abs();
        assert!((moved - opts.learning_rate).abs() < 1e-6, "moved {}", moved);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradients_leave_parameters_untouched() {
        let mut state = AdamState::new(3, AdamOptions::<f64>::default()).unwrap();
        let mut theta = [0.1, -0.2, 0.3];
        for _ in 0..5 {
            state.apply(&mut theta, &[0.0; 3]).unwrap();
        }
        assert_eq!(theta, [0.1, -0.2, 0.3]);
    }

    #[test]
    fn ten_steps_on_a_quadratic_shrink_the_parameter() {
        let mut state = AdamState::new(1, AdamOptions::<f64>::default()).unwrap();
        let mut theta = [1.0f64];
        let mut prev = theta[0].abs();
        for _ in 0..10 {
            let grad = 2.0 * theta[0];
            state.apply(&mut theta, &[grad]).unwrap();
            assert!(theta[0].abs() < prev);
            prev = theta[0].abs();
        }
    }

    #[test]
    fn matches_a_direct_transcription_of_the_update_rule() {
        let opts = AdamOptions::<f64>::default();
        let mut state = AdamState::new(4, opts).unwrap();
        let mut theta = [0.5, -1.0, 2.0, 0.0];
        let mut oracle_theta = theta;
        let mut m = [0.0; 4];
        let mut v = [0.0; 4];
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        for t in 1..=200u64 {
            let grads: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            state.apply(&mut theta, &grads).unwrap();
            for k in 0..4 {
                m[k] = 0.9 * m[k] + 0.1 * grads[k];
                v[k] = 0.999 * v[k] + 0.001 * grads[k] * grads[k];
                let m_hat = m[k] / (1.0 - 0.9f64.powi(t as i32));
                let v_hat = v[k] / (1.0 - 0.999f64.powi(t as i32));
                oracle_theta[k] -= 0.001 * m_hat / (v_hat.sqrt() + 1e-8);
                assert!((theta[k] - oracle_theta[k]).abs() < 1e-15, "step {} param {}", t, k);
            }
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut bad = AdamOptions::<f64>::default();
        bad.learning_rate = 0.0;
        assert!(AdamState::new(1, bad).is_err());
        let mut bad = AdamOptions::<f64>::default();
        bad.beta2 = 1.0;
        assert!(AdamState::new(1, bad).is_err());

        let mut state = AdamState::new(2, AdamOptions::<f64>::default()).unwrap();
        let mut theta = [0.0, 0.0];
        assert!(matches!(state.apply(&mut theta, &[1.0]), Err(Error::Shape { .. })));
        let before = theta;
        assert!(matches!(
            state.apply(&mut theta, &[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(theta, before);
        assert_eq!(state.step_count(), 0);
    }
}

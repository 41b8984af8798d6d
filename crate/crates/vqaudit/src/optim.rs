//! Adam optimizer over [`ParamSet`]s.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// One Adam update with bias correction over every parameter in `params`,
/// consuming the gradients currently stored on each parameter.
///
/// Each parameter keeps its own moment tensors and step counter; the counter
/// increments by exactly one per call. Deterministic: two identical sequences
/// of gradients produce bit-identical parameters.
pub fn adam_step(
    params: &mut ParamSet,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if learning_rate <= 0.0 {
        return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
    }
    if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
        return Err(Error::Config(format!("betas must lie in [0, 1), got {beta1}, {beta2}")));
    }
    for p in params.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let g = p.grad.data();
        let m = p.m.data_mut();
        let v = p.v.data_mut();
        let x = p.value.data_mut();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::{Param, ParamSet, Tensor};

    const LR: f64 = 1e-3;
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn single_param(value: Vec<f64>) -> ParamSet {
        let mut set = ParamSet::new();
        let n = value.len();
        set.push(Param::new("w", Tensor::from_vec(&[n], value).unwrap()));
        set
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut set = single_param(vec![1.0, -2.0, 3.0]);
        adam_step(&mut set, LR, B1, B2, EPS).unwrap();
        assert_eq!(set.get("w").unwrap().value.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(set.get("w").unwrap().step_count(), 1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // After one step from zero moments:
        //   m̂ = g, v̂ = g², so Δ = −lr · g / (|g| + ε).
        let g = -0.37;
        let mut set = single_param(vec![2.0]);
        set.get_mut("w").unwrap().grad.data_mut()[0] = g;
        adam_step(&mut set, LR, B1, B2, EPS).unwrap();
        let expected = 2.0 - LR * g / (g.abs() + EPS);
        let got = set.get("w").unwrap().value.data()[0];
        assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
        // The step opposes the gradient sign.
        assert!(got > 2.0);
    }

    #[test]
    fn nonpositive_learning_rate_is_rejected() {
        let mut set = single_param(vec![0.0]);
        assert!(adam_step(&mut set, 0.0, B1, B2, EPS).is_err());
        assert!(adam_step(&mut set, -1.0, B1, B2, EPS).is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut rng = Rng::seed_from_u64(99);
            let mut set = single_param((0..16).map(|i| i as f64 / 7.0).collect());
            for _ in 0..50 {
                for g in set.get_mut("w").unwrap().grad.data_mut() {
                    *g = rng.normal();
                }
                adam_step(&mut set, 3e-3, B1, B2, EPS).unwrap();
            }
            set.get("w").unwrap().value.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_counter_increments_per_call() {
        let mut set = single_param(vec![0.0]);
        for expected in 1..=5 {
            adam_step(&mut set, LR, B1, B2, EPS).unwrap();
            assert_eq!(set.get("w").unwrap().step_count(), expected);
        }
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize (w − 3)²; Adam should get close within a few thousand steps.
        let mut set = single_param(vec![0.0]);
        for _ in 0..4000 {
            let w = set.get("w").unwrap().value.data()[0];
            set.get_mut("w").unwrap().grad.data_mut()[0] = 2.0 * (w - 3.0);
            adam_step(&mut set, 5e-3, B1, B2, EPS).unwrap();
        }
        let w = set.get("w").unwrap().value.data()[0];
        assert!((w - 3.0).abs() < 1e-2, "w {w}");
    }
}

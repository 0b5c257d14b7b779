//! Adadelta and Adam parameter updates.

use crate::error::{Error, Result};
use crate::nn::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Decay-averaged squared gradients and squared updates. The classical
    /// method is step-size free; `lr` scales the computed update (1.0 by
    /// default).
    Adadelta { rho: f32, eps: f32, lr: f32 },
    /// Bias-corrected first/second moments.
    Adam {
        beta1: f32,
        beta2: f32,
        eps: f32,
        lr: f32,
    },
}

impl OptimizerKind {
    pub fn adadelta() -> Self {
        OptimizerKind::Adadelta {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }

    pub fn adam(lr: f32) -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// Per-parameter accumulators: (sq-gradient avg, sq-update avg) for Adadelta,
/// (first moment, second moment) for Adam.
#[derive(Debug, Clone)]
struct Slots {
    a: Vec<f32>,
    b: Vec<f32>,
}

/// Optimizer state across steps; buffers are shape-aligned with the
/// parameters handed to [`OptimizerState::new`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    step: u64,
    slots: Vec<Slots>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &[Param]) -> Self {
        let slots = params
            .iter()
            .map(|p| Slots {
                a: vec![0.0; p.numel()],
                b: vec![0.0; p.numel()],
            })
            .collect();
        OptimizerState {
            kind,
            step: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i]` is the gradient for `params[i]`; an empty
    /// gradient slice means "no gradient this step" and leaves the parameter
    /// untouched. Deterministic given (state, grads).
    pub fn step(&mut self, params: &mut [Param], grads: &[Vec<f32>]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.slots.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            if grad.is_empty() {
                continue;
            }
            if grad.len() != param.numel() {
                return Err(Error::Shape(format!(
                    "gradient length {} does not match parameter '{}' ({} elements)",
                    grad.len(),
                    param.name,
                    param.numel()
                )));
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    param.name
                )));
            }
            match self.kind {
                OptimizerKind::Adadelta { rho, eps, lr } => {
                    for ((x, &g), (eg2, edx2)) in param
                        .data
                        .iter_mut()
                        .zip(grad)
                        .zip(slot.a.iter_mut().zip(&mut slot.b))
                    {
                        *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
                        let dx = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
                        *edx2 = rho * *edx2 + (1.0 - rho) * dx * dx;
                        *x += lr * dx;
                    }
                }
                OptimizerKind::Adam {
                    beta1,
                    beta2,
                    eps,
                    lr,
                } => {
                    let t = (self.step + 1) as i32;
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    for ((x, &g), (m, v)) in param
                        .data
                        .iter_mut()
                        .zip(grad)
                        .zip(slot.a.iter_mut().zip(&mut slot.b))
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f32) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            shape: vec![1],
            data: vec![v],
        }]
    }

    #[test]
    fn zero_gradient_leaves_params_and_increments_step() {
        for kind in [OptimizerKind::adadelta(), OptimizerKind::adam(0.005)] {
            let mut params = one_param(0.7);
            let mut state = OptimizerState::new(kind, &params);
            state.step(&mut params, &[vec![0.0]]).unwrap();
            assert_eq!(params[0].data[0], 0.7);
            assert_eq!(state.step_count(), 1);
        }
    }

    /// Independent scalar Adam reference, written directly from the update
    /// equations.
    fn adam_reference(x0: f64, g: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        x
    }

    #[test]
    fn adam_single_step_matches_scalar_reference() {
        let mut params = one_param(1.0);
        let mut state = OptimizerState::new(OptimizerKind::adam(0.005), &params);
        state.step(&mut params, &[vec![1.0]]).unwrap();
        let want = adam_reference(1.0, 1.0, 0.005, 1);
        assert!(
            (params[0].data[0] as f64 - want).abs() < 1e-7,
            "{} vs {}",
            params[0].data[0],
            want
        );
        // and a few more steps with the same gradient
        for _ in 0..4 {
            state.step(&mut params, &[vec![1.0]]).unwrap();
        }
        let want5 = adam_reference(1.0, 1.0, 0.005, 5);
        assert!((params[0].data[0] as f64 - want5).abs() < 1e-6);
    }

    /// Independent scalar Adadelta reference.
    fn adadelta_reference(x0: f64, g: f64, steps: usize) -> f64 {
        let (rho, eps) = (0.95f64, 1e-6f64);
        let (mut x, mut eg2, mut edx2) = (x0, 0.0, 0.0);
        for _ in 0..steps {
            eg2 = rho * eg2 + (1.0 - rho) * g * g;
            let dx = -((edx2 + eps).sqrt() / (eg2 + eps).sqrt()) * g;
            edx2 = rho * edx2 + (1.0 - rho) * dx * dx;
            x += dx;
        }
        x
    }

    #[test]
    fn adadelta_matches_scalar_reference() {
        let mut params = one_param(0.5);
        let mut state = OptimizerState::new(OptimizerKind::adadelta(), &params);
        for _ in 0..3 {
            state.step(&mut params, &[vec![2.0]]).unwrap();
        }
        let want = adadelta_reference(0.5, 2.0, 3);
        assert!((params[0].data[0] as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn identical_state_and_grads_evolve_identically() {
        let grads = vec![vec![0.3, -0.2, 0.9]];
        let mk = || {
            vec![Param {
                name: "w".into(),
                shape: vec![3],
                data: vec![0.1, 0.2, 0.3],
            }]
        };
        for kind in [OptimizerKind::adadelta(), OptimizerKind::adam(0.01)] {
            let (mut p1, mut p2) = (mk(), mk());
            let mut s1 = OptimizerState::new(kind, &p1);
            let mut s2 = OptimizerState::new(kind, &p2);
            for _ in 0..10 {
                s1.step(&mut p1, &grads).unwrap();
                s2.step(&mut p2, &grads).unwrap();
            }
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut params = one_param(0.0);
        let mut state = OptimizerState::new(OptimizerKind::adam(0.001), &params);
        let err = state.step(&mut params, &[vec![f32::NAN]]).unwrap_err();
        assert!(err.to_string().contains("'w'"), "{err}");
    }
}

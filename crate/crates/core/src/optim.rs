//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
    pub max_grad_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 2.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
            max_grad_norm: 10.0,
        }
    }
}

/// Scale all gradient tensors so the global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in &mut grads.tensors {
            t.scale(scale);
        }
    }
}

/// One Adam update over all parameter tensors.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    config: &OptimConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    if grads.tensors.len() != params.tensor_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors for {} parameter tensors",
            grads.tensors.len(),
            params.tensor_count()
        )));
    }
    let NetworkParams {
        conv1,
        conv2,
        heads,
        adam,
        stamp,
    } = params;
    let mut tensors: Vec<&mut crate::tensor::Tensor> =
        vec![&mut conv1.w, &mut conv1.b, &mut conv2.w, &mut conv2.b];
    for h in heads {
        tensors.push(&mut h.hidden.w);
        tensors.push(&mut h.hidden.b);
        tensors.push(&mut h.output.w);
        tensors.push(&mut h.output.b);
    }

    adam.step += 1;
    let t = adam.step as f64;
    let bc1 = 1.0 - config.beta1.powf(t);
    let bc2 = 1.0 - config.beta2.powf(t);
    for ((tensor, grad), (m, v)) in tensors
        .into_iter()
        .zip(&grads.tensors)
        .zip(adam.m.iter_mut().zip(adam.v.iter_mut()))
    {
        if !tensor.same_shape(grad) {
            return Err(Error::ShapeMismatch(format!(
                "gradient shape {:?} vs parameter shape {:?}",
                grad.shape, tensor.shape
            )));
        }
        for i in 0..tensor.data.len() {
            let g = grad.data[i];
            m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * g;
            v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            tensor.data[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps_stability);
        }
    }
    *stamp += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;
    use crate::variant::AgentVariant;

    fn net() -> NetworkParams {
        init_network(AgentVariant::Standard { capacity: 32 }, 0).unwrap()
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let p = net();
        let mut g = Gradients::zeros_like(&p);
        g.tensors[0].data[0] = 5.0;
        clip_global_norm(&mut g, 10.0);
        assert_eq!(g.tensors[0].data[0], 5.0);
    }

    #[test]
    fn clip_halves_at_double_norm() {
        let p = net();
        let mut g = Gradients::zeros_like(&p);
        g.tensors[0].data[0] = 20.0;
        clip_global_norm(&mut g, 10.0);
        assert!((g.tensors[0].data[0] - 10.0).abs() < 1e-12);
        assert!(g.global_norm() <= 10.0 + 1e-12);
    }

    #[test]
    fn clip_zero_gradients_noop() {
        let p = net();
        let mut g = Gradients::zeros_like(&p);
        clip_global_norm(&mut g, 10.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn first_adam_step_magnitude_is_lr() {
        let mut p = net();
        let before = p.conv1.w.data[0];
        let mut g = Gradients::zeros_like(&p);
        for t in &mut g.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.37);
        }
        let cfg = OptimConfig::default();
        adam_step(&mut p, &g, &cfg).unwrap();
        let delta = p.conv1.w.data[0] - before;
        let expect = -cfg.learning_rate * 0.37 / (0.37 + cfg.eps_stability);
        assert!((delta - expect).abs() < 1e-12);
        assert!(delta.abs() <= cfg.learning_rate);
    }

    #[test]
    fn zero_gradient_zero_moments_leaves_params() {
        let mut p = net();
        let snapshot = p.conv1.w.clone();
        let g = Gradients::zeros_like(&p);
        adam_step(&mut p, &g, &OptimConfig::default()).unwrap();
        assert_eq!(p.conv1.w, snapshot);
        assert_eq!(p.adam.step, 1);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = net();
        let mut g = Gradients::zeros_like(&p);
        g.tensors[0].data[0] = f64::NAN;
        assert!(adam_step(&mut p, &g, &OptimConfig::default()).is_err());
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimise 0.5 x^2 from x = 1, driving one parameter entry
        let mut p = net();
        p.conv1.w.data[0] = 1.0;
        let cfg = OptimConfig {
            learning_rate: 1e-2,
            ..OptimConfig::default()
        };
        for _ in 0..1000 {
            let mut g = Gradients::zeros_like(&p);
            g.tensors[0].data[0] = p.conv1.w.data[0]; // d/dx 0.5 x^2
            adam_step(&mut p, &g, &cfg).unwrap();
        }
        assert!(p.conv1.w.data[0].abs() < 0.01, "final x = {}", p.conv1.w.data[0]);
    }
}

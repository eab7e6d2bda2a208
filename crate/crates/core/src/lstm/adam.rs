use super::model::DeepLstmModel;

/// Adam moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments shaped like `model`, with `α = 0.001, β₁ = 0.9,
    /// β₂ = 0.999, ε = 1e-8`.
    pub fn new(model: &DeepLstmModel) -> Self {
        Self::with_lr(model, 1e-3)
    }

    pub fn with_lr(model: &DeepLstmModel, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .param_slices()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `model` in place.
pub fn adam_step(model: &mut DeepLstmModel, grads: &DeepLstmModel, state: &mut AdamState) {
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((p, g), m), v) in model
        .param_slices_mut()
        .into_iter()
        .zip(grads.param_slices())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn scalar_model(theta: f64) -> DeepLstmModel {
        let mut m =
            DeepLstmModel::with_architecture(1, 1, &[0.0], 1, &mut SeededRng::new(0)).unwrap();
        m.head_b[0] = theta;
        m
    }

    fn grad_on_head_bias(model: &DeepLstmModel, g: f64) -> DeepLstmModel {
        let mut grads = model.zeros_like();
        grads.head_b[0] = g;
        grads
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut m = DeepLstmModel::new(3, &mut SeededRng::new(1));
        let before = m.clone();
        let g = m.zeros_like();
        let mut st = AdamState::new(&m);
        adam_step(&mut m, &g, &mut st);
        assert_eq!(m, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = scalar_model(0.0);
        let mut st = AdamState::new(&m);
        let g = grad_on_head_bias(&m, 1.0);
        adam_step(&mut m, &g, &mut st);
        let expect = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((m.head_b[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn two_steps_match_scalar_oracle() {
        // scalar recurrence written out independently
        let (b1, b2, lr, eps) = (0.9_f64, 0.999_f64, 1e-3_f64, 1e-8_f64);
        let (mut theta, mut m1, mut v1) = (0.5_f64, 0.0_f64, 0.0_f64);
        for (t, g) in [(1, 1.0_f64), (2, -1.0_f64)] {
            m1 = b1 * m1 + (1.0 - b1) * g;
            v1 = b2 * v1 + (1.0 - b2) * g * g;
            let mh = m1 / (1.0 - b1.powi(t));
            let vh = v1 / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }

        let mut m = scalar_model(0.5);
        let mut st = AdamState::new(&m);
        for g in [1.0, -1.0] {
            let grads = grad_on_head_bias(&m, g);
            adam_step(&mut m, &grads, &mut st);
        }
        assert!((m.head_b[0] - theta).abs() < 1e-15);
        assert_eq!(st.step_count, 2);
    }
}

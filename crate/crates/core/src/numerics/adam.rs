use super::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: DenseMatrix,
    pub second_moment: DenseMatrix,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: DenseMatrix::zeros(rows, cols),
            second_moment: DenseMatrix::zeros(rows, cols),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update, in place. `name` identifies the parameter in errors.
pub fn adam_step(name: &str, param: &mut DenseMatrix, grad: &DenseMatrix, state: &mut AdamState) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.first_moment.shape() {
        return Err(Error::dims(
            "adam_step",
            format!("{:?}", param.shape()),
            format!("grad {:?}, state {:?}", grad.shape(), state.first_moment.shape()),
        ));
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient(name.to_string()));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (((p, &g), mi), vi) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param_and_decays_moments() {
        let mut p = DenseMatrix::from_rows(&[vec![1.0, -2.0]]);
        let mut st = AdamState::new(1, 2, AdamConfig::with_lr(0.1));
        let before = p.clone();
        adam_step("p", &mut p, &DenseMatrix::zeros(1, 2), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count, 1);

        st.first_moment = DenseMatrix::from_rows(&[vec![1.0, 1.0]]);
        st.second_moment = DenseMatrix::from_rows(&[vec![1.0, 1.0]]);
        adam_step("p", &mut p, &DenseMatrix::zeros(1, 2), &mut st).unwrap();
        assert_eq!(st.first_moment[(0, 0)], 0.9);
        assert!(p[(0, 0)] < before[(0, 0)]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // After bias correction m̂ = g and v̂ = g², so the step is lr·g/(|g|+eps).
        let lr = 0.01;
        let g = 3.7;
        let mut p = DenseMatrix::zeros(1, 1);
        let mut st = AdamState::new(1, 1, AdamConfig::with_lr(lr));
        adam_step("p", &mut p, &DenseMatrix::from_rows(&[vec![g]]), &mut st).unwrap();
        let expected = -lr * g / (g + 1e-8);
        assert!((p[(0, 0)] - expected).abs() < 1e-15);
        assert!((p[(0, 0)].abs() - lr).abs() < 1e-9);
    }

    #[test]
    fn rejects_nan_and_shape_mismatch() {
        let mut p = DenseMatrix::zeros(1, 1);
        let mut st = AdamState::new(1, 1, AdamConfig::with_lr(0.1));
        let err = adam_step("e_meta_c", &mut p, &DenseMatrix::from_rows(&[vec![f64::NAN]]), &mut st).unwrap_err();
        assert!(err.to_string().contains("e_meta_c"));
        assert!(adam_step("p", &mut p, &DenseMatrix::zeros(2, 1), &mut st).is_err());
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = DenseMatrix::from_rows(&[vec![0.5, -0.5]]);
            let mut st = AdamState::new(1, 2, AdamConfig::with_lr(0.05));
            for k in 0..10 {
                let g = DenseMatrix::from_rows(&[vec![k as f64 * 0.1, -(k as f64)]]);
                adam_step("p", &mut p, &g, &mut st).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}

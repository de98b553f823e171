use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter in a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: BTreeMap<String, Vec<T>>,
    pub second_moment: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |(name, p): (&str, &super::params::Param<T>)| {
            (name.to_string(), vec![T::zero(); p.value.len()])
        };
        AdamState {
            config,
            step: 0,
            first_moment: params.iter().map(zeros).collect(),
            second_moment: params.iter().map(zeros).collect(),
        }
    }

    /// One bias-corrected Adam update using the gradients held in `params`.
    pub fn step(&mut self, params: &mut ParamStore<T>) {
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        let one = T::one();
        let correct1 = one - b1.powi(t);
        let correct2 = one - b2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .first_moment
                .entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); p.value.len()]);
            let v = self
                .second_moment
                .entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); p.value.len()]);
            let values = p.value.data_mut();
            for (((w, &g), mi), vi) in values.iter_mut().zip(p.grad.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / correct1;
                let v_hat = *vi / correct2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(values));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = store(vec![0.3, -1.2, 4.0]);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.step(&mut p);
        assert_eq!(adam.step, 1);
        assert_eq!(p.value("w").unwrap(), before.value("w").unwrap());
    }

    #[test]
    fn first_step_moves_each_weight_by_learning_rate() {
        let mut p = store(vec![1.0, 1.0, 1.0]);
        p.grad_mut("w")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[0.5, -3.0, 1e-3]);
        let config = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &p);
        adam.step(&mut p);
        let w = p.value("w").unwrap().data();
        assert!((w[0] - 0.99).abs() < 1e-7);
        assert!((w[1] - 1.01).abs() < 1e-7);
        assert!((w[2] - 0.99).abs() < 1e-6);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        // loss = x², gradient 2x
        let mut p = store(vec![1.0]);
        let config = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &p);
        let mut trace = vec![1.0f64];
        for _ in 0..100 {
            let x = p.value("w").unwrap().data()[0];
            p.grad_mut("w").unwrap().data_mut()[0] = 2.0 * x;
            adam.step(&mut p);
            trace.push(p.value("w").unwrap().data()[0].abs());
        }
        // Adam's momentum overshoots zero late in the run; the descent
        // phase before the first crossing is monotone.
        let first_cross = trace.windows(2).position(|w| w[1] >= w[0]).unwrap_or(trace.len());
        assert!(first_cross >= 9, "monotone for {first_cross} steps");
        assert!(*trace.last().unwrap() < 0.1, "final |x| = {}", trace.last().unwrap());
    }
}

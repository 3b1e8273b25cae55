//! Adam updates and Xavier initialisation.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a fixed group of parameters, with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    config: AdamConfig,
    group: Vec<ParamId>,
    first: Vec<Array2<S>>,
    second: Vec<Array2<S>>,
    steps: i32,
}

impl<S: Scalar> Adam<S> {
    pub fn new(store: &ParamStore<S>, group: Vec<ParamId>, config: AdamConfig) -> Self {
        let zeros: Vec<Array2<S>> = group
            .iter()
            .map(|&id| Array2::zeros(store.get(id).value.raw_dim()))
            .collect();
        Self {
            config,
            group,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn group(&self) -> &[ParamId] {
        &self.group
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// Applies one update from the accumulated gradients. Nothing is changed
    /// if any gradient in the group is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        if let Some(&bad) = self
            .group
            .iter()
            .find(|&&id| store.get(id).grad.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::NonFiniteGradient(store.get(bad).name.clone()));
        }
        self.steps += 1;
        let (b1, b2) = (S::of(self.config.beta1), S::of(self.config.beta2));
        let lr = S::of(self.config.lr);
        let eps = S::of(self.config.eps);
        let c1 = S::one() - b1.powi(self.steps);
        let c2 = S::one() - b2.powi(self.steps);
        for (k, &id) in self.group.iter().enumerate() {
            let p = store.get_mut(id);
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform `fan_in x fan_out` matrix.
pub fn xavier_uniform<S: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Array2<S> {
    let bound = xavier_bound(fan_in, fan_out);
    Array2::from_shape_simple_fn((fan_in, fan_out), || {
        S::of(rng.random_range(-bound..=bound))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Owner;
    use crate::rng;
    use ndarray::array;

    fn scalar_store(v: f64) -> (ParamStore<f64>, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Owner::Encoder, array![[v]]).unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let (mut store, id) = scalar_store(1.5);
        let mut adam = Adam::new(&store, vec![id], AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.get(id).value[[0, 0]], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut store, id) = scalar_store(0.0);
        store.get_mut(id).grad[[0, 0]] = 1.0;
        let mut adam = Adam::new(&store, vec![id], AdamConfig::default());
        adam.step(&mut store).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        let expected = -0.003 / (1.0 + 1e-8);
        assert!((store.get(id).value[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let (mut store, id) = scalar_store(0.0);
        let mut adam = Adam::new(&store, vec![id], AdamConfig::default());
        let mut last = 0.0;
        for _ in 0..2000 {
            store.get_mut(id).grad[[0, 0]] = 0.7;
            let before = store.get(id).value[[0, 0]];
            adam.step(&mut store).unwrap();
            last = before - store.get(id).value[[0, 0]];
        }
        assert!((last - 0.003).abs() < 1e-6, "{last}");
    }

    #[test]
    fn nan_gradient_aborts_with_name() {
        let (mut store, id) = scalar_store(0.0);
        store.get_mut(id).grad[[0, 0]] = f64::NAN;
        let mut adam = Adam::new(&store, vec![id], AdamConfig::default());
        let err = adam.step(&mut store).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(store.get(id).value[[0, 0]], 0.0);
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let bound = xavier_bound(128, 7);
        assert!((bound - (6.0f64 / 135.0).sqrt()).abs() < 1e-15);
        assert!((bound - 0.2108).abs() < 1e-4);
        let a: Array2<f64> = xavier_uniform(128, 7, &mut rng::substream(3, rng::INIT));
        let b: Array2<f64> = xavier_uniform(128, 7, &mut rng::substream(3, rng::INIT));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn xavier_variance() {
        let bound = xavier_bound(128, 7);
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..10 {
            let w: Array2<f64> = xavier_uniform(128, 7, &mut rng::substream(seed, rng::INIT));
            total += w.iter().map(|v| v * v).sum::<f64>();
            count += w.len() as f64;
        }
        let var = total / count;
        let expected = bound * bound / 3.0;
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "{var} vs {expected}"
        );
    }
}

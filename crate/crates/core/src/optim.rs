//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale the joint gradient when its L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam over every trainable parameter of a store.
///
/// Row-sparse parameters are updated lazily: only rows that received
/// gradient in the current step move, and their moments are left alone
/// otherwise.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    moments: Vec<Option<Moments>>,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        if let Some(c) = config.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(Adam {
            config,
            moments: Vec::new(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Apply one update from the gradients accumulated in `store`, then
    /// zero them. Returns the pre-clipping global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<f64> {
        let norm = global_grad_norm(store);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm}")));
        }
        let scale = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.steps += 1;
        let t = self.steps as i32;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            ..
        } = self.config;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for (slot, p) in self.moments.iter_mut().zip(store.iter_mut()) {
            if !p.trainable {
                continue;
            }
            let n = p.value.len();
            let mo = slot.get_or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let cols = p.value.cols();
            let ranges: Vec<std::ops::Range<usize>> = if p.sparse_rows {
                p.touched_rows().map(|r| r * cols..(r + 1) * cols).collect()
            } else {
                std::iter::once(0..n).collect()
            };
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for range in ranges {
                for i in range {
                    let g = grad[i] * scale;
                    mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * g;
                    mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * g * g;
                    value[i] -= lr * (mo.m[i] / c1) / ((mo.v[i] / c2).sqrt() + eps);
                }
            }
        }
        store.zero_grad();
        Ok(norm)
    }
}

/// L2 norm of all trainable gradients taken together.
pub fn global_grad_norm(store: &ParamStore) -> f64 {
    let mut total = 0.0;
    for (_, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        if p.sparse_rows {
            let cols = p.value.cols();
            for r in p.touched_rows() {
                total += p.grad.data()[r * cols..(r + 1) * cols].iter().map(|g| g * g).sum::<f64>();
            }
        } else {
            total += p.grad.l2_norm_sq();
        }
    }
    total.sqrt()
}

/// Scale `grads` in place so their joint norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::l2_norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        for g in grads.iter_mut() {
            g.scale_assign(max_norm / norm);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![
            Tensor::vector(vec![3.0, 0.0]).unwrap(),
            Tensor::vector(vec![0.0, 4.0]).unwrap(),
        ];
        assert_eq!(clip_global_norm(&mut g, 5.0), 5.0);
        assert_eq!(g[0].data(), &[3.0, 0.0]);
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        let after: f64 = g.iter().map(Tensor::l2_norm_sq).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        assert!((g[1].data()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -1.0]).unwrap()).unwrap();
        store.get_mut(id).grad = Tensor::vector(vec![0.3, -2.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut store).unwrap();
        let v = store.value(id).data();
        assert!((v[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((v[1] - (-1.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(store.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn frozen_parameters_stay_put() {
        let mut store = ParamStore::new();
        let id = store.add("e", Tensor::vector(vec![0.5]).unwrap()).unwrap();
        store.set_trainable(id, false);
        store.get_mut(id).grad = Tensor::vector(vec![10.0]).unwrap();
        Adam::new(AdamConfig::default()).unwrap().step(&mut store).unwrap();
        assert_eq!(store.value(id).data(), &[0.5]);
    }

    #[test]
    fn sparse_rows_update_only_touched() {
        let mut store = ParamStore::new();
        let id = store.add("emb", Tensor::filled(&[3, 2], 1.0)).unwrap();
        store.set_sparse_rows(id, true);
        let grads = {
            let mut tape = Tape::new(&store);
            let e = tape.embed_columns(id, &[1]).unwrap();
            let s = tape.sum(e).unwrap();
            tape.backward(s).unwrap()
        };
        store.accumulate(&grads);
        Adam::new(AdamConfig::default()).unwrap().step(&mut store).unwrap();
        let rows = store.value(id).to_rows();
        assert_eq!(rows[0], vec![1.0, 1.0]);
        assert_eq!(rows[2], vec![1.0, 1.0]);
        assert!(rows[1].iter().all(|&x| x < 1.0));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::vector(vec![3.0, -2.0]).unwrap()).unwrap();
        let mut adam = Adam::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        })
        .unwrap();
        for _ in 0..2000 {
            let grads = {
                let mut tape = Tape::new(&store);
                let x = tape.param(id);
                let sq = tape.mul(x, x).unwrap();
                let s = tape.sum(sq).unwrap();
                tape.backward(s).unwrap()
            };
            store.accumulate(&grads);
            adam.step(&mut store).unwrap();
        }
        assert!(store.value(id).l2_norm_sq() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Adam::new(AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        })
        .is_err());
    }
}

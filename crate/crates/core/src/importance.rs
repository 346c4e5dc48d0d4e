//! Gradient-based per-parameter importance.
//!
//! For each batch the squared norm of the network's SDF outputs is
//! backpropagated; the absolute gradient is accumulated per parameter and
//! averaged over batches.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{weak_augment, Sample};
use crate::error::{Error, Result};
use crate::model::{probe_points, SdfNet};
use crate::nnet::{forward_backward, Gradient, InputBatch, Loss, NetworkSpec, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub omega: Vec<f64>,
    pub n_batches: usize,
    pub normalized: bool,
}

impl ImportanceMap {
    pub fn zeros(len: usize) -> Self {
        Self {
            omega: vec![0.0; len],
            n_batches: 0,
            normalized: false,
        }
    }

    pub fn mean(&self) -> f64 {
        if self.omega.is_empty() {
            0.0
        } else {
            self.omega.iter().sum::<f64>() / self.omega.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub n_batches: usize,
    pub batch_size: usize,
    /// Query points per image.
    pub n_probes: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            n_batches: 20,
            batch_size: 4,
            n_probes: 64,
        }
    }
}

/// `sum_j sdf_j^2`
pub fn importance_loss(sdf: &[f64]) -> Result<f64> {
    if sdf.is_empty() {
        return Err(Error::Precondition("importance loss of an empty vector".into()));
    }
    Ok(sdf.iter().map(|v| v * v).sum())
}

/// Importance from explicit batches. Each batch is a list of input batches
/// whose squared-norm losses are summed before taking the absolute gradient.
pub fn importance_from_batches(
    params: &ParamVector,
    spec: &NetworkSpec,
    batches: &[Vec<InputBatch>],
) -> Result<ImportanceMap> {
    if batches.is_empty() {
        return Err(Error::Precondition("importance needs at least one batch".into()));
    }
    estimate_importance_with(params, spec, batches.len(), |b| Ok(batches[b].clone()))
}

/// Core estimator: `make_batch(b)` supplies the inputs of batch `b`.
pub fn estimate_importance_with<F>(
    params: &ParamVector,
    spec: &NetworkSpec,
    n_batches: usize,
    mut make_batch: F,
) -> Result<ImportanceMap>
where
    F: FnMut(usize) -> Result<Vec<InputBatch>>,
{
    if n_batches == 0 {
        return Err(Error::Precondition("importance needs at least one batch".into()));
    }
    let mut acc = vec![0.0; params.total_len()];
    for b in 0..n_batches {
        let parts = make_batch(b)?;
        let grad = batch_gradient(params, spec, &parts).map_err(|e| tag_batch(e, b))?;
        for (a, g) in acc.iter_mut().zip(&grad.values) {
            *a += g.abs();
        }
    }
    let n = n_batches as f64;
    Ok(ImportanceMap {
        omega: acc.into_iter().map(|a| a / n).collect(),
        n_batches,
        normalized: false,
    })
}

fn batch_gradient(params: &ParamVector, spec: &NetworkSpec, parts: &[InputBatch]) -> Result<Gradient> {
    let mut grad = Gradient::zeros(params.total_len());
    for part in parts {
        let (_, g) = forward_backward(params, spec, part, &Loss::SquaredNorm)?;
        grad.add_scaled(&g, 1.0);
    }
    Ok(grad)
}

fn tag_batch(e: Error, batch: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite {
            context: format!("importance batch ({context})"),
            index: batch,
        },
        other => other,
    }
}

/// Importance of `teacher` over weakly augmented unlabeled images. Batches
/// are drawn with replacement from `unlabeled`.
pub fn estimate_importance<R: Rng + ?Sized>(
    teacher: &SdfNet,
    unlabeled: &[&Sample],
    cfg: &ImportanceConfig,
    rng: &mut R,
) -> Result<ImportanceMap> {
    if unlabeled.is_empty() {
        return Err(Error::Precondition("importance needs unlabeled samples".into()));
    }
    if cfg.n_batches == 0 || cfg.batch_size == 0 || cfg.n_probes == 0 {
        return Err(Error::Config(
            "importance n_batches, batch_size and n_probes must be positive".into(),
        ));
    }
    estimate_importance_with(&teacher.params, &teacher.spec, cfg.n_batches, |_| {
        let mut parts = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let sample = unlabeled[rng.random_range(0..unlabeled.len())];
            let aug = weak_augment(&sample.image, rng);
            let points: Vec<_> = probe_points(cfg.n_probes, rng)
                .into_iter()
                .map(|p| aug.map_point(p))
                .collect();
            parts.push(teacher.input_batch(&aug.image, &points)?);
        }
        Ok(parts)
    })
}

/// Rescale to mean 1. An all-zero map stays zero.
pub fn normalize_importance(map: &ImportanceMap) -> ImportanceMap {
    let mean = map.mean();
    let omega = if mean > 0.0 {
        map.omega.iter().map(|w| w / mean).collect()
    } else {
        map.omega.clone()
    };
    ImportanceMap {
        omega,
        n_batches: map.n_batches,
        normalized: true,
    }
}

/// `index,name,omega` rows, one per parameter.
pub fn write_importance_csv(map: &ImportanceMap, params: &ParamVector, path: &Path) -> Result<()> {
    if map.omega.len() != params.total_len() {
        return Err(Error::Shape(format!(
            "importance map has {} entries, parameters {}",
            map.omega.len(),
            params.total_len()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "name", "omega"])?;
    for (i, omega) in map.omega.iter().enumerate() {
        let name = params.scalar_name(i).unwrap_or_default();
        w.write_record([i.to_string(), name, omega.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{init_network, Activation};

    fn linear_net(theta: f64) -> (NetworkSpec, ParamVector) {
        let spec = NetworkSpec::mlp(&[1, 1], Activation::Identity, Activation::Identity, 0);
        let p = ParamVector::from_values(&spec, vec![theta, 0.0]).unwrap();
        (spec, p)
    }

    fn scalar_batch(xs: &[f64]) -> Vec<InputBatch> {
        xs.iter()
            .map(|&x| InputBatch::from_rows(&[vec![x]]).unwrap())
            .collect()
    }

    #[test]
    fn importance_loss_values() {
        assert_eq!(importance_loss(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(importance_loss(&[1.0, -2.0]).unwrap(), 5.0);
        assert!(importance_loss(&[]).is_err());
    }

    #[test]
    fn linear_model_importance() {
        // d/dtheta (theta x)^2 = 2 theta x^2 = 24 at theta = 3, x = 2.
        let (spec, p) = linear_net(3.0);
        let map = importance_from_batches(&p, &spec, &[scalar_batch(&[2.0])]).unwrap();
        assert_eq!(map.omega[0], 24.0);
        assert_eq!(map.n_batches, 1);
        assert!(!map.normalized);
    }

    #[test]
    fn two_batches_average_absolute_gradients() {
        // g = 2 theta x^2 for the weight; with theta = -1.5: g1 (x=1) = -3, g2 (x=2) = -12.
        let (spec, p) = linear_net(-1.5);
        let map =
            importance_from_batches(&p, &spec, &[scalar_batch(&[1.0]), scalar_batch(&[2.0])]).unwrap();
        assert!((map.omega[0] - 7.5).abs() < 1e-15);
        // bias gradient 2 theta x: -3 and -6
        assert!((map.omega[1] - 4.5).abs() < 1e-15);
    }

    #[test]
    fn zero_teacher_has_zero_importance() {
        let spec = NetworkSpec::mlp(&[3, 4, 1], Activation::Identity, Activation::Identity, 0);
        let p = ParamVector::zeros(&spec).unwrap();
        let batches = vec![vec![InputBatch::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap()]];
        let map = importance_from_batches(&p, &spec, &batches).unwrap();
        assert!(map.omega.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn normalization() {
        let map = |v: Vec<f64>| ImportanceMap {
            omega: v,
            n_batches: 1,
            normalized: false,
        };
        let n = normalize_importance(&map(vec![2.0, 4.0]));
        assert!((n.omega[0] - 2.0 / 3.0).abs() < 1e-15 && (n.omega[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!(n.normalized);
        let z = normalize_importance(&map(vec![0.0, 0.0]));
        assert_eq!(z.omega, vec![0.0, 0.0]);
        assert!(z.normalized);
        assert_eq!(normalize_importance(&map(vec![5.0])).omega, vec![1.0]);
    }

    #[test]
    fn odd_symmetric_net_sign_invariance() {
        // Bias-free tanh net: negating all parameters flips (or keeps) the
        // output sign, so |grad| of the squared norm is unchanged.
        let spec = NetworkSpec::mlp(&[3, 5, 4, 1], Activation::Tanh, Activation::Identity, 21);
        let p = init_network(&spec).unwrap();
        let neg = p.with_values(p.values().iter().map(|v| -v).collect()).unwrap();
        let batches = vec![
            vec![InputBatch::from_rows(&[vec![0.3, -0.7, 1.1], vec![0.5, 0.2, -0.4]]).unwrap()],
            vec![InputBatch::from_rows(&[vec![-1.0, 0.1, 0.9]]).unwrap()],
        ];
        let a = importance_from_batches(&p, &spec, &batches).unwrap();
        let b = importance_from_batches(&neg, &spec, &batches).unwrap();
        for (x, y) in a.omega.iter().zip(&b.omega) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn output_scaling_follows_chain_rule() {
        // sdf = c * (theta * x): d/dtheta sdf^2 = 2 c^2 theta x^2.
        let spec = NetworkSpec::mlp(&[1, 1, 1], Activation::Identity, Activation::Identity, 0);
        let (theta, x) = (0.7, 1.3);
        for c in [0.5, 2.0, -3.0] {
            let p = ParamVector::from_values(&spec, vec![theta, 0.0, c, 0.0]).unwrap();
            let map = importance_from_batches(&p, &spec, &[scalar_batch(&[x])]).unwrap();
            let expected = 2.0 * c * c * theta * x * x;
            assert!((map.omega[0] - expected.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_order_does_not_matter() {
        let spec = NetworkSpec::mlp(&[2, 3, 1], Activation::Tanh, Activation::Identity, 4);
        let p = init_network(&spec).unwrap();
        let b = |x: f64| vec![InputBatch::from_rows(&[vec![x, 1.0 - x]]).unwrap()];
        let fwd = importance_from_batches(&p, &spec, &[b(0.1), b(0.5), b(0.9)]).unwrap();
        let rev = importance_from_batches(&p, &spec, &[b(0.9), b(0.1), b(0.5)]).unwrap();
        for (x, y) in fwd.omega.iter().zip(&rev.omega) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

//! Pseudo-label reliability scoring and loss blending.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{strong_augment, weak_augment, Augmented, Image, Sample};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::{probe_points, SdfModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Optional hard cap on the weight, applied after the clip.
    pub w_max: Option<f64>,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 4.0,
            lambda: 0.2,
            w_max: None,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if let Some(cap) = self.w_max {
            if !(0.0..=1.0).contains(&cap) {
                return Err(Error::Config(format!("w_max {cap} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsistencyKind {
    #[default]
    L1,
    L2,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("prediction lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Precondition("consistency of empty predictions".into()));
    }
    Ok(())
}

/// Mean absolute difference between the two predictions.
pub fn consistency_loss(f_s: &[f64], f_w: &[f64]) -> Result<f64> {
    consistency_loss_with(ConsistencyKind::L1, f_s, f_w)
}

pub fn consistency_loss_with(kind: ConsistencyKind, f_s: &[f64], f_w: &[f64]) -> Result<f64> {
    check_pair(f_s, f_w)?;
    let n = f_s.len() as f64;
    let sum: f64 = match kind {
        ConsistencyKind::L1 => f_s.iter().zip(f_w).map(|(a, b)| (a - b).abs()).sum(),
        ConsistencyKind::L2 => f_s.iter().zip(f_w).map(|(a, b)| (a - b) * (a - b)).sum(),
    };
    Ok(sum / n)
}

/// Unbiased sample variance.
pub fn sdf_variance(f_w: &[f64]) -> Result<f64> {
    if f_w.len() < 2 {
        return Err(Error::Precondition(format!(
            "variance needs at least 2 values, got {}",
            f_w.len()
        )));
    }
    let n = f_w.len() as f64;
    let mean = f_w.iter().sum::<f64>() / n;
    Ok(f_w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

/// `clip(1 - alpha cons - beta var, 0, 1)`, then the optional cap.
pub fn pseudo_weight(cons: f64, var: f64, params: &WeightParams) -> f64 {
    let w = (1.0 - params.alpha * cons - params.beta * var).clamp(0.0, 1.0);
    match params.w_max {
        Some(cap) => w.min(cap),
        None => w,
    }
}

/// `sum_k (1 - lambda w) sup_k + lambda w unsup_k`. Both lists must carry the
/// same keys; terms are matched by key.
pub fn blended_loss(sup: &[(&str, f64)], unsup: &[(&str, f64)], w: f64, lambda: f64) -> Result<f64> {
    let keys = |terms: &[(&str, f64)]| -> Result<BTreeSet<String>> {
        let set: BTreeSet<String> = terms.iter().map(|(k, _)| k.to_string()).collect();
        if set.len() != terms.len() {
            return Err(Error::Config("duplicate loss term key".into()));
        }
        Ok(set)
    };
    if keys(sup)? != keys(unsup)? {
        return Err(Error::Config(format!(
            "loss term keys differ: {:?} vs {:?}",
            sup.iter().map(|t| t.0).collect::<Vec<_>>(),
            unsup.iter().map(|t| t.0).collect::<Vec<_>>()
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Precondition(format!("pseudo weight {w} outside [0, 1]")));
    }
    let lw = lambda * w;
    Ok(sup
        .iter()
        .map(|&(k, s)| {
            let u = unsup.iter().find(|t| t.0 == k).map(|t| t.1).unwrap_or(0.0);
            (1.0 - lw) * s + lw * u
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    #[default]
    Standard,
    /// Both views are the untouched image.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessOptions {
    pub n_probes: usize,
    pub augment: AugmentMode,
    pub consistency: ConsistencyKind,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            n_probes: 64,
            augment: AugmentMode::Standard,
            consistency: ConsistencyKind::L1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAssessment {
    pub cons_loss: f64,
    pub variance: f64,
    pub weight: f64,
    /// Query points in the original image frame.
    pub points: Vec<Point2>,
    /// Teacher output on the weak view; the student's regression target.
    pub targets: Vec<f64>,
    /// The strong view, which is what the student sees.
    pub strong: Augmented,
}

/// Assess the teacher on an unlabeled sample at freshly drawn probe points.
pub fn assess_sample<M, R>(
    teacher: &M,
    sample: &Sample,
    rng: &mut R,
    params: &WeightParams,
    opts: &AssessOptions,
) -> Result<PseudoAssessment>
where
    M: SdfModel + ?Sized,
    R: Rng + ?Sized,
{
    if sample.labeled {
        return Err(Error::Precondition(format!(
            "sample {} is labeled; pseudo-labels are for unlabeled data",
            sample.index
        )));
    }
    let points = probe_points(opts.n_probes, rng);
    assess_points(teacher, &sample.image, points, rng, params, opts)
}

/// Assessment at caller-chosen points.
pub fn assess_points<M, R>(
    teacher: &M,
    image: &Image,
    points: Vec<Point2>,
    rng: &mut R,
    params: &WeightParams,
    opts: &AssessOptions,
) -> Result<PseudoAssessment>
where
    M: SdfModel + ?Sized,
    R: Rng + ?Sized,
{
    let (weak, strong) = match opts.augment {
        AugmentMode::Standard => (weak_augment(image, rng), strong_augment(image, rng)),
        AugmentMode::Disabled => (Augmented::identity(image), Augmented::identity(image)),
    };
    let in_frame = |aug: &Augmented| points.iter().map(|&p| aug.map_point(p)).collect::<Vec<_>>();
    let f_w = teacher.predict(&weak.image, &in_frame(&weak))?;
    let f_s = teacher.predict(&strong.image, &in_frame(&strong))?;
    if let Some(i) = f_w.iter().chain(&f_s).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "teacher prediction during pseudo-label assessment".into(),
            index: i % points.len().max(1),
        });
    }
    let cons_loss = consistency_loss_with(opts.consistency, &f_s, &f_w)?;
    let variance = sdf_variance(&f_w)?;
    Ok(PseudoAssessment {
        cons_loss,
        variance,
        weight: pseudo_weight(cons_loss, variance, params),
        points,
        targets: f_w,
        strong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{analytic_sdf, gen_dataset, DatasetConfig, GtAccess, Shape};
    use crate::model::AnalyticModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Constant(f64);

    impl SdfModel for Constant {
        fn predict(&self, _: &Image, points: &[Point2]) -> Result<Vec<f64>> {
            Ok(vec![self.0; points.len()])
        }
    }

    fn small_dataset() -> crate::data::Dataset {
        gen_dataset(&DatasetConfig {
            n: 12,
            labeled_fraction: 0.25,
            seed: 5,
            ..DatasetConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(consistency_loss(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(consistency_loss(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(consistency_loss(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        assert_eq!(
            consistency_loss_with(ConsistencyKind::L2, &[1.0, 1.0], &[0.0, 3.0]).unwrap(),
            2.5
        );
    }

    #[test]
    fn consistency_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle = 0.0;
        for i in 0..100 {
            oracle += (a[i] - b[i]).abs() / 100.0;
        }
        assert!((consistency_loss(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sdf_variance(&[0.7; 5]).unwrap(), 0.0);
        assert_eq!(sdf_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(sdf_variance(&[1.0]), Err(Error::Precondition(_))));
        // textbook sum-of-squares oracle
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..57).map(|_| rng.random_range(-0.5..0.5)).collect();
        let n = v.len() as f64;
        let s1: f64 = v.iter().sum();
        let s2: f64 = v.iter().map(|x| x * x).sum();
        let oracle = (s2 - s1 * s1 / n) / (n - 1.0);
        assert!((sdf_variance(&v).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn weight_examples() {
        let p = WeightParams::default();
        assert_eq!(pseudo_weight(0.0, 0.0, &p), 1.0);
        assert!((pseudo_weight(0.1, 0.05, &p) - 0.4).abs() < 1e-15);
        assert_eq!(pseudo_weight(0.3, 0.0, &p), 0.0);
        let capped = WeightParams {
            w_max: Some(0.4),
            ..p
        };
        assert_eq!(pseudo_weight(0.0, 0.0, &capped), 0.4);
        assert_eq!(pseudo_weight(0.3, 0.0, &capped), 0.0);
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blended_loss(&[("sdf_l1", 0.7)], &[("sdf_l1", 5.0)], 0.0, 0.2).unwrap(), 0.7);
        assert!((blended_loss(&[("sdf_l1", 1.0)], &[("sdf_l1", 2.0)], 1.0, 0.2).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(blended_loss(&[("sdf_l1", 0.3)], &[("sdf_l1", 9.0)], 0.8, 0.0).unwrap(), 0.3);
        let two = blended_loss(
            &[("sdf_l1", 1.0), ("grad_penalty", 0.5)],
            &[("grad_penalty", 1.5), ("sdf_l1", 2.0)],
            0.5,
            0.2,
        )
        .unwrap();
        assert!((two - (0.9 * 1.0 + 0.1 * 2.0 + 0.9 * 0.5 + 0.1 * 1.5)).abs() < 1e-15);
        assert!(matches!(
            blended_loss(&[("sdf_l1", 1.0)], &[("other", 1.0)], 0.5, 0.2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(WeightParams::default().validate().is_ok());
        assert!(WeightParams { lambda: 1.5, ..Default::default() }.validate().is_err());
        assert!(WeightParams { alpha: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_teacher_is_fully_trusted() {
        let ds = small_dataset();
        let s = ds.samples.iter().find(|s| !s.labeled).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = assess_sample(&Constant(0.25), s, &mut rng, &WeightParams::default(), &AssessOptions::default())
            .unwrap();
        assert_eq!((a.cons_loss, a.variance, a.weight), (0.0, 0.0, 1.0));
    }

    #[test]
    fn labeled_sample_is_rejected() {
        let ds = small_dataset();
        let s = ds.samples.iter().find(|s| s.labeled).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = assess_sample(&Constant(0.0), s, &mut rng, &WeightParams::default(), &AssessOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn assessment_is_deterministic() {
        let ds = small_dataset();
        let s = ds.samples.iter().find(|s| !s.labeled).unwrap();
        let teacher = AnalyticModel {
            shape: s.ground_truth(GtAccess::Evaluation).unwrap().shape,
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            assess_sample(&teacher, s, &mut rng, &WeightParams::default(), &AssessOptions::default()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn oracle_teacher_without_augmentation() {
        let shape = Shape::circle(Point2::new(0.45, 0.55), 0.2, [0.9, 0.1, 0.2]);
        let img = crate::data::render(&shape, 32, 32).unwrap();
        let teacher = AnalyticModel { shape };
        let opts = AssessOptions {
            augment: AugmentMode::Disabled,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = probe_points(64, &mut rng);
        // Without the variance term the oracle is trusted completely.
        let no_var = WeightParams {
            beta: 0.0,
            ..Default::default()
        };
        let a = assess_points(&teacher, &img, pts.clone(), &mut rng, &no_var, &opts).unwrap();
        assert_eq!(a.cons_loss, 0.0);
        assert_eq!(a.weight, 1.0);
        for (p, t) in pts.iter().zip(&a.targets) {
            assert_eq!(*t, analytic_sdf(&shape, *p));
        }
        // With the default beta the spread of a true SDF still discounts it.
        let d = assess_points(&teacher, &img, pts, &mut rng, &WeightParams::default(), &opts).unwrap();
        assert_eq!(d.weight, (1.0 - 4.0 * d.variance).clamp(0.0, 1.0));
    }
}

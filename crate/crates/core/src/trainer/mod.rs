//! Two-stage training: supervised warm-up of the teacher, then the
//! semi-supervised teacher-student loop, plus the ablation harness and
//! evaluation.

mod ablation;
mod config;
mod eval;
mod runlog;
mod semi;
mod warmup;

pub use ablation::{ablation_csv, run_ablation, AblationRow};
pub use config::{
    AblationConfig, AblationName, EmaMode, LossConfig, NetConfig, PhaseConfig, Preset, RunConfig, Weighting,
};
pub use eval::{evaluate, evaluate_oracle, EvalResult, EvalSet, Split, REFERENCE_SPACING};
pub use runlog::{RunLog, RunLogRow, RUNLOG_VERSION_LINE};
pub use semi::{semi_train, semi_train_observed, EpochSnapshot, SemiOutcome};
pub use warmup::{warmup_train, WarmupOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, GtAccess, Image, Sample};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::{SdfModel, SdfNet};
use crate::nnet::{forward_backward, Gradient, Loss};

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    WarmupOrder = 1,
    SemiOrder = 2,
    Augment = 3,
    Importance = 4,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Accumulate `scale * d/dparams mean|f(points) - targets|` into `grad`; returns the loss.
pub(crate) fn l1_grad(
    net: &SdfNet,
    image: &Image,
    points: &[Point2],
    targets: &[f64],
    grad: &mut Gradient,
    scale: f64,
) -> Result<f64> {
    let batch = net.input_batch(image, points)?;
    let (value, g) = forward_backward(
        &net.params,
        &net.spec,
        &batch,
        &Loss::L1 {
            targets: targets.to_vec(),
        },
    )?;
    grad.add_scaled(&g, scale);
    Ok(value)
}

/// Supervised loss of a labeled sample (SDF L1 plus the optional gradient
/// penalty), accumulating `scale` times its gradient.
pub(crate) fn supervised_grad(
    net: &SdfNet,
    sample: &Sample,
    loss: &LossConfig,
    grad: &mut Gradient,
    scale: f64,
) -> Result<f64> {
    let gt = sample.ground_truth(GtAccess::Training)?;
    let points = gt.query_points();
    let mut value = l1_grad(net, &sample.image, &points, &gt.query_sdf(), grad, scale)?;
    if loss.grad_penalty_weight > 0.0 {
        let batch = net.stencil_batch(&sample.image, &points, loss.grad_penalty_h)?;
        let (v, g) = forward_backward(
            &net.params,
            &net.spec,
            &batch,
            &Loss::Eikonal {
                h: loss.grad_penalty_h,
            },
        )?;
        grad.add_scaled(&g, scale * loss.grad_penalty_weight);
        value += loss.grad_penalty_weight * v;
    }
    Ok(value)
}

/// Mean SDF L1 at the stored queries of labeled `indices`; `None` when empty.
pub(crate) fn validation_loss(net: &SdfNet, dataset: &Dataset, indices: &[usize]) -> Result<Option<f64>> {
    if indices.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for &i in indices {
        let s = &dataset.samples[i];
        let gt = s.ground_truth(GtAccess::Training)?;
        let pred = net.predict(&s.image, &gt.query_points())?;
        let n = pred.len() as f64;
        total += pred.iter().zip(&gt.queries).map(|(p, q)| (p - q.sdf).abs()).sum::<f64>() / n;
    }
    let mean = total / indices.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite {
            context: "validation loss".into(),
            index: 0,
        });
    }
    Ok(Some(mean))
}

pub(crate) fn check_finite(value: f64, context: &str, index: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_owned(),
            index,
        })
    }
}

use super::{semi_train, AblationConfig, RunConfig, SemiOutcome};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub seed: u64,
    pub config: AblationConfig,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Validation metrics of the selected teacher.
    pub metrics: MetricsReport,
    /// Validation metrics of the shared warm-up start.
    pub warmup: MetricsReport,
}

/// Run every configuration for `cfg.ablation_epochs` from the same warm-up
/// checkpoint and seed.
pub fn run_ablation(
    cfg: &RunConfig,
    dataset: &Dataset,
    warm: &Checkpoint,
    suite: &[AblationConfig],
) -> Result<Vec<(AblationRow, SemiOutcome)>> {
    let phase = cfg.semi.with_epochs(cfg.ablation_epochs);
    suite
        .iter()
        .map(|variant| {
            let out = semi_train(cfg, dataset, warm, variant, &phase)?;
            let (metrics, warmup) = match (out.best_metrics, out.initial_metrics) {
                (Some(m), Some(w)) => (m, w),
                _ => return Err(Error::Config("ablation needs validation samples".into())),
            };
            Ok((
                AblationRow {
                    seed: cfg.seed,
                    config: *variant,
                    epochs: phase.epochs,
                    best_epoch: out.best_epoch,
                    metrics,
                    warmup,
                },
                out,
            ))
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow], m0: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "seed",
        "config",
        "ema",
        "importance_reg",
        "weighting",
        "epochs",
        "best_epoch",
        "chamfer_x100",
        "iou_pct",
        "fscore_pct",
        "nc",
        "warmup_chamfer_x100",
        "warmup_iou_pct",
        "warmup_fscore_pct",
        "warmup_nc",
    ])?;
    for r in rows {
        let c = &r.config;
        let m = &r.metrics;
        let u = &r.warmup;
        w.write_record([
            r.seed.to_string(),
            c.name.to_string(),
            c.ema_label(m0),
            if c.importance_reg { "Yes" } else { "No" }.to_owned(),
            c.weighting.label(),
            r.epochs.to_string(),
            r.best_epoch.to_string(),
            m.chamfer_x100.to_string(),
            m.iou_pct.to_string(),
            m.fscore_pct.to_string(),
            m.normal_consistency.to_string(),
            u.chamfer_x100.to_string(),
            u.iou_pct.to_string(),
            u.fscore_pct.to_string(),
            u.normal_consistency.to_string(),
        ])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Config(e.to_string()))
}

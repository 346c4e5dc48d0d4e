use rand::seq::SliceRandom;

use super::{check_finite, stream_rng, supervised_grad, validation_loss, EvalSet, RunConfig, RunLog, RunLogRow, Stream};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::SdfNet;
use crate::nnet::{init_network, sgd_step, Gradient};

pub const WARMUP_PHASE: &str = "warmup";

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupOutcome {
    pub checkpoint: Checkpoint,
    pub log: RunLog,
}

/// Supervised training of the teacher on the labeled training split.
pub fn warmup_train(cfg: &RunConfig, dataset: &Dataset) -> Result<WarmupOutcome> {
    cfg.validate()?;
    let splits = dataset.splits(cfg.val_fraction);
    if splits.train_labeled.is_empty() {
        return Err(Error::Config("warm-up needs at least one labeled training sample".into()));
    }
    let spec = cfg.network.spec();
    let mut net = SdfNet::new(spec.clone(), init_network(&spec)?)?;
    let val = EvalSet::new(dataset, splits.val.clone(), cfg.eval_grid)?;
    let phase = &cfg.warmup;
    let mut rng = stream_rng(cfg.seed, Stream::WarmupOrder);
    let mut order = splits.train_labeled.clone();
    let mut log = RunLog::default();

    for epoch in 1..=phase.epochs {
        let mut run = || -> Result<RunLogRow> {
            let lr = phase.lr_at(epoch);
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(phase.batch_size) {
                let mut grad = Gradient::zeros(net.params.total_len());
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let loss = supervised_grad(&net, &dataset.samples[i], &cfg.loss, &mut grad, scale)?;
                    check_finite(loss, "warm-up training loss", i)?;
                    total += loss;
                }
                net.params = sgd_step(&net.params, &grad, lr)?;
            }
            let mut row = RunLogRow::new(WARMUP_PHASE, epoch);
            row.lr = Some(lr);
            row.train_loss = Some(total / order.len() as f64);
            row.val_loss_teacher = validation_loss(&net, dataset, &val.indices)?;
            if !val.is_empty() && (epoch % cfg.eval_every == 0 || epoch == phase.epochs) {
                if let Some(m) = val.evaluate_model(dataset, &net)?.mean {
                    row.set_metrics(&m);
                }
            }
            Ok(row)
        };
        let row = run().map_err(|e| e.in_phase(WARMUP_PHASE, epoch))?;
        log.push(row);
    }

    let meta = CheckpointMeta {
        phase: WARMUP_PHASE.to_owned(),
        epoch: phase.epochs,
        seed: cfg.seed,
    };
    Ok(WarmupOutcome {
        checkpoint: Checkpoint::new(&spec, &net.params, meta),
        log,
    })
}

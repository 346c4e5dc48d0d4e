use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semisdf::checkpoint::Checkpoint;
use semisdf::data::{gen_dataset, Dataset};
use semisdf::trainer::{
    ablation_csv, evaluate, evaluate_oracle, run_ablation, semi_train, warmup_train, AblationConfig, AblationName,
    Preset, RunConfig, RunLog, Split,
};

#[derive(Parser)]
#[command(name = "semisdf", version, about = "Semi-supervised teacher-student SDF training on a synthetic 2D task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; missing fields take preset defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch override for the phase this command runs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Dataset file; defaults to `<output-dir>/dataset.bin`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Write the importance map of every semi-supervised epoch as CSV.
    #[arg(long)]
    dump_importance: bool,
    /// Feed the unnormalized importance map to the EMA update.
    #[arg(long)]
    raw_importance: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Remove unlabeled ground truth from the written file.
        #[arg(long)]
        hide_unlabeled_gt: bool,
    },
    /// Supervised warm-up of the teacher.
    Warmup {
        #[command(flatten)]
        common: Common,
    },
    /// Semi-supervised teacher-student phase for one configuration.
    Semi {
        #[command(flatten)]
        common: Common,
        /// Warm-up checkpoint; defaults to `<output-dir>/teacher_warmup.ckpt`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long, default_value = "Dyn-ImpEMA-adaptive", value_parser = parse_ablation)]
        variant: AblationName,
    },
    /// Run ablation configurations from one warm-up checkpoint.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Comma-separated configuration names; all six by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
        configs: Vec<AblationName>,
    },
    /// Evaluate a checkpoint (or the analytic oracle) on a split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<output-dir>/teacher_best.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "val", value_parser = parse_split)]
        split: Split,
        /// Evaluate exact shape SDFs instead of a network.
        #[arg(long)]
        oracle: bool,
    },
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: semisdf::Error| e.to_string())
}

fn parse_ablation(s: &str) -> std::result::Result<AblationName, String> {
    s.parse().map_err(|e: semisdf::Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: semisdf::Error| e.to_string())
}

const WARMUP_CKPT: &str = "teacher_warmup.ckpt";
const BEST_CKPT: &str = "teacher_best.ckpt";
const STUDENT_CKPT: &str = "student_final.ckpt";
const RUNLOG: &str = "runlog.csv";

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), Some(_)) => bail!("--config and --preset are mutually exclusive ({})", path.display()),
            (Some(path), None) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, p) => RunConfig::preset(p.unwrap_or(Preset::Toy)),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(ds) = &self.dataset {
            cfg.dataset = Some(ds.clone());
        }
        cfg.dump_importance |= self.dump_importance;
        cfg.ema_config.raw_importance |= self.raw_importance;
        cfg.validate()?;
        fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
        Ok(cfg)
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset_path();
    Dataset::load(&path).with_context(|| format!("loading dataset {} (run gen-data first?)", path.display()))
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            common,
            hide_unlabeled_gt,
        } => {
            if common.epochs.is_some() {
                bail!("gen-data takes no --epochs");
            }
            let cfg = common.config()?;
            let mut ds = gen_dataset(&cfg.data)?;
            if hide_unlabeled_gt {
                ds.strip_unlabeled_gt();
            }
            let path = cfg.dataset_path();
            ds.save(&path).with_context(|| format!("writing {}", path.display()))?;
            let labeled = ds.samples.iter().filter(|s| s.labeled).count();
            println!("wrote {} ({} samples, {} labeled)", path.display(), ds.samples.len(), labeled);
        }
        Command::Warmup { common } => {
            let mut cfg = common.config()?;
            if let Some(e) = common.epochs {
                cfg.warmup = cfg.warmup.with_epochs(e);
            }
            let ds = load_dataset(&cfg)?;
            let out = warmup_train(&cfg, &ds)?;
            out.checkpoint.save(&cfg.output_dir.join(WARMUP_CKPT))?;
            out.log.save(&cfg.output_dir.join(RUNLOG))?;
            write(&cfg.output_dir.join("config.json"), &cfg.to_json()?)?;
            if let Some(last) = out.log.rows.last() {
                println!(
                    "warm-up done: {} epochs, train loss {:.5}, val loss {}",
                    last.epoch,
                    last.train_loss.unwrap_or(f64::NAN),
                    last.val_loss_teacher.map_or("n/a".into(), |v| format!("{v:.5}"))
                );
            }
        }
        Command::Semi {
            common,
            teacher,
            variant,
        } => {
            let mut cfg = common.config()?;
            if let Some(e) = common.epochs {
                cfg.semi = cfg.semi.with_epochs(e);
            }
            let ds = load_dataset(&cfg)?;
            let warm = load_ckpt(&teacher.unwrap_or_else(|| cfg.output_dir.join(WARMUP_CKPT)))?;
            let variant = AblationConfig::named(variant);
            let out = semi_train(&cfg, &ds, &warm, &variant, &cfg.semi)?;
            out.best_teacher.save(&cfg.output_dir.join(BEST_CKPT))?;
            out.student.save(&cfg.output_dir.join(STUDENT_CKPT))?;
            // keep the warm-up rows of an earlier run in the same directory
            let log_path = cfg.output_dir.join(RUNLOG);
            let mut log = match RunLog::load(&log_path) {
                Ok(prev) => RunLog {
                    rows: prev.rows.into_iter().filter(|r| r.phase == "warmup").collect(),
                },
                Err(_) => RunLog::default(),
            };
            log.rows.extend(out.log.rows);
            log.save(&log_path)?;
            match out.best_metrics {
                Some(m) => println!(
                    "{}: best teacher at epoch {}: chamfer_x100 {:.4}, iou {:.2}%, fscore {:.2}%, nc {:.4}",
                    variant.name, out.best_epoch, m.chamfer_x100, m.iou_pct, m.fscore_pct, m.normal_consistency
                ),
                None => println!("{}: done (no validation split)", variant.name),
            }
        }
        Command::Ablate {
            common,
            teacher,
            configs,
        } => {
            let mut cfg = common.config()?;
            if let Some(e) = common.epochs {
                cfg.ablation_epochs = e;
            }
            let ds = load_dataset(&cfg)?;
            let warm = load_ckpt(&teacher.unwrap_or_else(|| cfg.output_dir.join(WARMUP_CKPT)))?;
            let names = if configs.is_empty() {
                AblationName::ALL.to_vec()
            } else {
                configs
            };
            let suite: Vec<_> = names.into_iter().map(AblationConfig::named).collect();
            let results = run_ablation(&cfg, &ds, &warm, &suite)?;
            let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
            write(&cfg.output_dir.join("ablation.csv"), &ablation_csv(&rows, cfg.ema_config.m0)?)?;
            let mut log = RunLog::default();
            for (row, out) in &results {
                for r in &out.log.rows {
                    let mut r = r.clone();
                    r.phase = format!("ablation:{}", row.config.name);
                    log.push(r);
                }
            }
            log.save(&cfg.output_dir.join("ablation_runlog.csv"))?;
            for r in &rows {
                println!(
                    "{:<20} best epoch {:>3}  chamfer_x100 {:.4}  iou {:.2}%",
                    r.config.name, r.best_epoch, r.metrics.chamfer_x100, r.metrics.iou_pct
                );
            }
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            oracle,
        } => {
            if common.epochs.is_some() {
                bail!("eval takes no --epochs");
            }
            let cfg = common.config()?;
            let ds = load_dataset(&cfg)?;
            let result = if oracle {
                evaluate_oracle(&ds, split, cfg.val_fraction, cfg.eval_grid)?
            } else {
                let ckpt = load_ckpt(&checkpoint.unwrap_or_else(|| cfg.output_dir.join(BEST_CKPT)))?;
                evaluate(&ckpt, &ds, split, cfg.val_fraction, cfg.eval_grid)?
            };
            result.save(&cfg.output_dir.join(format!("metrics_{split}.csv")))?;
            match result.mean {
                Some(m) => println!(
                    "{split}: {} samples, chamfer_x100 {:.4}, iou {:.2}%, fscore {:.2}%, nc {:.4}",
                    result.rows.len(),
                    m.chamfer_x100,
                    m.iou_pct,
                    m.fscore_pct,
                    m.normal_consistency
                ),
                None => println!("{split}: empty split"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

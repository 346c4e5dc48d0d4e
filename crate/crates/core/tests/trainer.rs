mod common;

use common::tiny_config;
use semisdf::checkpoint::{Checkpoint, CheckpointMeta};
use semisdf::data::{gen_dataset, Dataset};
use semisdf::nnet::init_network;
use semisdf::trainer::{
    ablation_csv, evaluate, evaluate_oracle, run_ablation, semi_train, semi_train_observed, warmup_train,
    AblationConfig, AblationName, PhaseConfig, RunConfig, Split,
};

fn setup(seed: u64) -> (RunConfig, Dataset, Checkpoint) {
    let cfg = tiny_config(seed);
    let ds = gen_dataset(&cfg.data).unwrap();
    let warm = warmup_train(&cfg, &ds).unwrap().checkpoint;
    (cfg, ds, warm)
}

#[test]
fn warmup_overfits_a_single_sample() {
    let mut cfg = tiny_config(1);
    cfg.data.n = 10;
    cfg.data.labeled_fraction = 0.1;
    cfg.warmup = PhaseConfig {
        epochs: 50,
        batch_size: 1,
        lr: 0.05,
        decay_epochs: vec![],
    };
    let ds = gen_dataset(&cfg.data).unwrap();
    let out = warmup_train(&cfg, &ds).unwrap();
    let first = out.log.rows[0].train_loss.unwrap();
    let last = out.log.rows.last().unwrap().train_loss.unwrap();
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn zero_warmup_epochs_return_the_initialization() {
    let mut cfg = tiny_config(2);
    cfg.warmup = PhaseConfig {
        epochs: 0,
        decay_epochs: vec![],
        ..cfg.warmup.clone()
    };
    let ds = gen_dataset(&cfg.data).unwrap();
    let out = warmup_train(&cfg, &ds).unwrap();
    let init = init_network(&cfg.network.spec()).unwrap();
    assert_eq!(out.checkpoint.params().unwrap(), init);
    assert!(out.log.rows.is_empty());
}

#[test]
fn warmup_is_deterministic() {
    let cfg = tiny_config(3);
    let ds = gen_dataset(&cfg.data).unwrap();
    let a = warmup_train(&cfg, &ds).unwrap();
    let b = warmup_train(&cfg, &ds).unwrap();
    assert_eq!(a.checkpoint.to_json().unwrap(), b.checkpoint.to_json().unwrap());
    assert_eq!(a.log.to_csv().unwrap(), b.log.to_csv().unwrap());
}

#[test]
fn lr_changes_only_at_milestones() {
    let (cfg, ds, warm) = setup(4);
    let warm_log = warmup_train(&cfg, &ds).unwrap().log;
    for row in &warm_log.rows {
        let expected = if row.epoch >= 4 { 0.005 } else { 0.05 };
        assert!((row.lr.unwrap() - expected).abs() < 1e-15, "warm-up epoch {}", row.epoch);
    }
    let variant = AblationConfig::named(AblationName::DynImpEmaAdaptive);
    let out = semi_train(&cfg, &ds, &warm, &variant, &cfg.semi).unwrap();
    let lrs: Vec<f64> = out.log.rows.iter().filter(|r| r.epoch > 0).map(|r| r.lr.unwrap()).collect();
    assert_eq!(lrs.len(), 3);
    assert_eq!(lrs[0], 0.05);
    assert!((lrs[1] - 0.005).abs() < 1e-15 && lrs[1] == lrs[2]);
}

#[test]
fn zero_semi_epochs_keep_the_warm_teacher() {
    let (cfg, ds, warm) = setup(5);
    let phase = cfg.semi.with_epochs(0);
    let out = semi_train(&cfg, &ds, &warm, &AblationConfig::named(AblationName::DynImpEmaAdaptive), &phase).unwrap();
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.best_teacher.params().unwrap(), warm.params().unwrap());
    assert_eq!(out.student.params().unwrap(), warm.params().unwrap());
}

#[test]
fn without_pseudo_label_weight_the_student_ignores_the_teacher() {
    let (mut cfg, ds, warm) = setup(6);
    cfg.weight_params.lambda = 0.0;
    let students: Vec<String> = AblationConfig::suite()
        .iter()
        .map(|v| semi_train(&cfg, &ds, &warm, v, &cfg.semi).unwrap().student.params().unwrap())
        .map(|p| format!("{:?}", p.values()))
        .collect();
    assert!(students.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn all_labeled_data_trains_supervised_only() {
    let mut cfg = tiny_config(7);
    cfg.data.labeled_fraction = 1.0;
    cfg.weight_params.lambda = 0.0;
    let ds = gen_dataset(&cfg.data).unwrap();
    let warm = warmup_train(&cfg, &ds).unwrap().checkpoint;
    let out = semi_train(&cfg, &ds, &warm, &AblationConfig::named(AblationName::DynImpEmaAdaptive), &cfg.semi).unwrap();
    assert!(out.log.rows.iter().all(|r| r.mean_w_pseudo.is_none()));
    let first = out.log.rows[1].val_loss_student.unwrap();
    assert!(first.is_finite());
}

#[test]
fn fixed_ema_matches_a_hand_rolled_average() {
    let (mut cfg, ds, warm) = setup(8);
    let phase = PhaseConfig {
        epochs: 5,
        decay_epochs: vec![],
        ..cfg.semi.clone()
    };
    cfg.ema_config.m_min = 0.5;
    cfg.ema_config.m0 = 0.9;
    let m = cfg.ema_config.m0;
    let mut seen = Vec::new();
    semi_train_observed(&cfg, &ds, &warm, &AblationConfig::named(AblationName::EmaFixed1), &phase, &mut |s| {
        seen.push((s.teacher.values().to_vec(), s.student.values().to_vec()));
    })
    .unwrap();
    assert_eq!(seen.len(), 5);
    let mut teacher = warm.params().unwrap().values().to_vec();
    for (observed, student) in &seen {
        for (t, s) in teacher.iter_mut().zip(student) {
            *t = m * *t + (1.0 - m) * s;
        }
        let gap = teacher.iter().zip(observed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-12, "gap {gap}");
    }
}

#[test]
fn best_teacher_has_the_minimum_logged_chamfer() {
    let (cfg, ds, warm) = setup(9);
    let phase = cfg.semi.with_epochs(4);
    let out = semi_train(&cfg, &ds, &warm, &AblationConfig::named(AblationName::DynImpEmaAdaptive), &phase).unwrap();
    let logged: Vec<f64> = out.log.rows.iter().map(|r| r.chamfer_x100.unwrap()).collect();
    assert_eq!(logged.len(), 5);
    let min = logged.iter().copied().fold(f64::INFINITY, f64::min);
    let best = out.best_metrics.unwrap().chamfer_x100;
    assert_eq!(best, min);
    assert_eq!(logged[out.best_epoch], min);
    let again = evaluate(&out.best_teacher, &ds, Split::Val, cfg.val_fraction, cfg.eval_grid).unwrap();
    assert_eq!(again.mean.unwrap().chamfer_x100, min);
}

#[test]
fn ablation_rows_share_the_warm_start() {
    let (cfg, ds, warm) = setup(10);
    let results = run_ablation(&cfg, &ds, &warm, &AblationConfig::suite()).unwrap();
    assert_eq!(results.len(), 6);
    let epoch0: Vec<_> = results.iter().map(|(_, o)| o.log.rows[0].clone()).collect();
    assert!(epoch0.windows(2).all(|w| w[0] == w[1]));
    assert!(results.iter().all(|(r, _)| r.warmup == results[0].0.warmup && r.epochs == cfg.ablation_epochs));

    let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    let csv = ablation_csv(&rows, cfg.ema_config.m0).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("seed,config,ema,importance_reg,weighting,epochs,best_epoch,chamfer_x100"));
    assert!(lines[1].contains(",Baseline,No,No,No,"));
    assert!(lines[2].contains(",EMA-fixed-1,Yes (0.996),No,Fixed (0.5),"));
    assert!(lines[4].contains(",ImpEMA-fixed,Yes (0.996),Yes,Fixed (0.2),"));
    assert!(lines[6].contains(",Dyn-ImpEMA-adaptive,Yes (dynamic),Yes,Adaptive,"));
}

#[test]
fn baseline_row_is_plain_continuation() {
    let (cfg, ds, warm) = setup(11);
    let variant = AblationConfig::named(AblationName::Baseline);
    let row = run_ablation(&cfg, &ds, &warm, &[variant]).unwrap().remove(0);
    let direct = semi_train(&cfg, &ds, &warm, &variant, &cfg.semi.with_epochs(cfg.ablation_epochs)).unwrap();
    assert_eq!(row.1, direct);
    assert_eq!(row.0.metrics, direct.best_metrics.unwrap());
    // the teacher follows the student exactly
    assert_eq!(direct.final_teacher, direct.student.params().unwrap());
}

#[test]
fn unknown_ablation_name_is_a_configuration_error() {
    let err = "Dyn-EMA".parse::<AblationName>().unwrap_err();
    assert!(err.to_string().contains("unknown ablation configuration"));
}

#[test]
fn hiding_unlabeled_ground_truth_changes_nothing() {
    let (cfg, ds, warm) = setup(12);
    let mut hidden = ds.clone();
    hidden.strip_unlabeled_gt();
    assert!(hidden.samples.iter().any(|s| !s.has_ground_truth()));
    let warm_hidden = warmup_train(&cfg, &hidden).unwrap().checkpoint;
    assert_eq!(warm.to_json().unwrap(), warm_hidden.to_json().unwrap());
    let variant = AblationConfig::named(AblationName::DynImpEmaAdaptive);
    let a = semi_train(&cfg, &ds, &warm, &variant, &cfg.semi).unwrap();
    let b = semi_train(&cfg, &hidden, &warm_hidden, &variant, &cfg.semi).unwrap();
    assert_eq!(a.best_teacher.to_json().unwrap(), b.best_teacher.to_json().unwrap());
    assert_eq!(a.student.to_json().unwrap(), b.student.to_json().unwrap());
    assert_eq!(a.log.to_csv().unwrap(), b.log.to_csv().unwrap());
}

#[test]
fn evaluation_is_deterministic_and_the_oracle_wins() {
    let (cfg, ds, _) = setup(13);
    let untrained = Checkpoint::new(
        &cfg.network.spec(),
        &init_network(&cfg.network.spec()).unwrap(),
        CheckpointMeta {
            phase: "init".into(),
            epoch: 0,
            seed: 13,
        },
    );
    let a = evaluate(&untrained, &ds, Split::Test, cfg.val_fraction, cfg.eval_grid).unwrap();
    let b = evaluate(&untrained, &ds, Split::Test, cfg.val_fraction, cfg.eval_grid).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    let oracle = evaluate_oracle(&ds, Split::Test, cfg.val_fraction, cfg.eval_grid).unwrap();
    assert_eq!(oracle.rows.len(), a.rows.len());
    for ((i, o), (_, u)) in oracle.rows.iter().zip(&a.rows) {
        assert!(o.chamfer_x100 < u.chamfer_x100, "sample {i}");
        assert!(o.iou_pct > u.iou_pct, "sample {i}");
    }
}

#[test]
fn test_split_needs_unlabeled_ground_truth() {
    let (cfg, mut ds, warm) = setup(14);
    ds.strip_unlabeled_gt();
    assert!(evaluate(&warm, &ds, Split::Test, cfg.val_fraction, cfg.eval_grid).is_err());
    assert!(evaluate(&warm, &ds, Split::Val, cfg.val_fraction, cfg.eval_grid).is_ok());
}

use std::sync::OnceLock;

use blockprune_core::data::{build_edges, generate_dataset, Dataset, GeneratorSpec, Split};
use blockprune_core::model::{
    init_checkpoint, predict, Checkpoint, LossWeights, ModelConfig, Prediction,
};
use blockprune_core::surgery::{reduce_blocks, Strategy};
use blockprune_core::training::{
    distill, distill_sample_count, distill_subset, evaluate, finetune, kd_loss, prepare_all,
    pretrain, train, KdConfig, Objective, TrainBudget, TrainOptions,
};
use blockprune_core::{Error, Tensor};

fn config() -> ModelConfig {
    ModelConfig {
        blocks: 4,
        mlp_layers: 2,
        node_dim: 12,
        edge_dim: 8,
        n_rbf: 8,
        seed: 2,
        ..ModelConfig::default()
    }
}

fn upstream() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| generate_dataset(&GeneratorSpec::upstream(400, 21)).unwrap())
}

fn teacher() -> &'static Checkpoint {
    static T: OnceLock<Checkpoint> = OnceLock::new();
    T.get_or_init(|| {
        let budget = TrainBudget::steps(600, 8, 1e-3, 21);
        pretrain(
            &config(),
            upstream(),
            &budget,
            LossWeights::default(),
            0,
            None,
        )
        .unwrap()
        .checkpoint
    })
}

fn prediction(ckpt: &Checkpoint) -> Prediction {
    let s = &upstream().samples[0];
    predict(
        ckpt,
        s,
        &build_edges(&s.positions, ckpt.config().cutoff).unwrap(),
        LossWeights::default(),
    )
    .unwrap()
    .0
}

fn shifted(t: &Tensor, c: f64) -> Tensor {
    let mut t = t.clone();
    t.data_mut().iter_mut().for_each(|v| *v += c);
    t
}

fn only_output() -> KdConfig {
    KdConfig {
        distill_mlp_layers: 0,
        distill_n2n: false,
        distill_e2e: false,
        ..KdConfig::default()
    }
}

#[test]
fn kd_loss_of_identical_predictions_is_zero() {
    let p = prediction(&init_checkpoint(&config()).unwrap());
    let kd = KdConfig {
        distill_energy: true,
        distill_mlp_layers: 2,
        ..KdConfig::default()
    };
    assert_eq!(kd_loss(&p, &p, &kd).unwrap(), 0.0);
}

#[test]
fn kd_loss_of_unit_force_offset_is_one() {
    let t = prediction(&init_checkpoint(&config()).unwrap());
    let mut s = t.clone();
    s.forces = shifted(&t.forces, 1.0);
    assert!((kd_loss(&t, &s, &only_output()).unwrap() - 1.0).abs() < 1e-12);
    // Only the forces moved, so feature terms add nothing.
    assert!((kd_loss(&t, &s, &KdConfig::default()).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn kd_loss_sums_matched_mlp_layers() {
    let t = prediction(&init_checkpoint(&config()).unwrap());
    let mut s = t.clone();
    s.mlp_layer_outputs[0] = shifted(&t.mlp_layer_outputs[0], 0.5);
    s.mlp_layer_outputs[1] = shifted(&t.mlp_layer_outputs[1], -0.25);
    let kd = KdConfig {
        distill_output: false,
        distill_mlp_layers: 2,
        ..only_output()
    };
    assert!((kd_loss(&t, &s, &kd).unwrap() - 0.75).abs() < 1e-12);
    let first = KdConfig {
        distill_mlp_layers: 1,
        ..kd.clone()
    };
    assert!((kd_loss(&t, &s, &first).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn kd_loss_energy_term_is_per_atom() {
    let t = prediction(&init_checkpoint(&config()).unwrap());
    let mut s = t.clone();
    s.energy += 3.0;
    let kd = KdConfig {
        distill_output: false,
        distill_energy: true,
        ..only_output()
    };
    let n = t.forces.rows() as f64;
    assert!((kd_loss(&t, &s, &kd).unwrap() - 3.0 / n).abs() < 1e-12);
}

#[test]
fn kd_loss_rejects_mismatched_shapes() {
    let full = init_checkpoint(&config()).unwrap();
    let t = prediction(&full);
    let mut s = t.clone();
    s.forces = Tensor::zeros(&[t.forces.rows() + 1, 3]);
    assert!(matches!(
        kd_loss(&t, &s, &only_output()),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn default_fraction_of_ten_thousand_is_150() {
    assert_eq!(distill_sample_count(10_000, 8_000, 0.015), 150);
    assert_eq!(distill_sample_count(10, 8, 1.0), 8);
    let a = distill_subset(8_000, 150, 4);
    assert_eq!(a.len(), 150);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(a, distill_subset(8_000, 150, 4));
    assert_ne!(a, distill_subset(8_000, 150, 5));
}

#[test]
fn zero_lambda_returns_the_student() {
    let t = init_checkpoint(&config()).unwrap();
    let s = reduce_blocks(&t, 2, Strategy::Sliced).unwrap();
    let kd = KdConfig {
        lambda: 0.0,
        ..KdConfig::default()
    };
    let out = distill(
        &t,
        s.clone(),
        upstream(),
        &kd,
        &TrainBudget::steps(50, 4, 1e-3, 0),
        LossWeights::default(),
        0,
    )
    .unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.checkpoint, s);
}

#[test]
fn distill_rejects_incompatible_pairs() {
    let t = init_checkpoint(&config()).unwrap();
    let other = init_checkpoint(&ModelConfig {
        node_dim: 6,
        blocks: 2,
        ..config()
    })
    .unwrap();
    let r = distill(
        &t,
        other,
        upstream(),
        &KdConfig::default(),
        &TrainBudget::steps(1, 1, 1e-3, 0),
        LossWeights::default(),
        0,
    );
    assert!(matches!(r, Err(Error::Incompatible(_))));
}

#[test]
fn zero_steps_leave_parameters_untouched() {
    let init = init_checkpoint(&config()).unwrap();
    let graphs = prepare_all(&config(), &upstream().samples[..8]).unwrap();
    let out = train(
        init.clone(),
        &graphs,
        Objective::Supervised(LossWeights::default()),
        &TrainBudget::steps(0, 4, 1e-3, 0),
        TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(out.checkpoint, init);
    assert!(out.log.is_empty());
}

#[test]
fn zero_step_finetune_is_zero_shot() {
    let t = teacher().clone();
    let down = generate_dataset(&GeneratorSpec::upstream(60, 21).downstream(60, 5)).unwrap();
    let (_, m) = finetune(
        t.clone(),
        &down,
        &TrainBudget::steps(0, 8, 1e-3, 0),
        LossWeights::default(),
        false,
        0,
        None,
    )
    .unwrap();
    assert_eq!(m, evaluate(&t, &down.split(Split::Test).samples).unwrap());
}

#[test]
fn same_seed_is_bit_identical() {
    let budget = TrainBudget::steps(15, 4, 1e-3, 9);
    let run = || {
        pretrain(
            &config(),
            upstream(),
            &budget,
            LossWeights::default(),
            5,
            None,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.log, b.log);
    let other = pretrain(
        &config(),
        upstream(),
        &TrainBudget { seed: 10, ..budget },
        LossWeights::default(),
        5,
        None,
    )
    .unwrap();
    assert_ne!(a.checkpoint, other.checkpoint);
}

#[test]
fn pretraining_beats_the_untrained_model() {
    let test = upstream().split(Split::Test).samples;
    let before = evaluate(&init_checkpoint(&config()).unwrap(), &test)
        .unwrap()
        .force_mae;
    let after = evaluate(teacher(), &test).unwrap().force_mae;
    assert!(after < 0.7 * before, "{before} -> {after}");
}

#[test]
fn distillation_improves_the_reduced_student() {
    let t = teacher();
    let student = reduce_blocks(t, 2, Strategy::Random { seed: 3 }).unwrap();
    let val = upstream().split(Split::Val).samples;
    let before = evaluate(&student, &val).unwrap().force_mae;
    let kd = KdConfig {
        data_fraction: 0.5,
        ..KdConfig::default()
    };
    let out = distill(
        t,
        student,
        upstream(),
        &kd,
        &TrainBudget::steps(300, 8, 1e-3, 3),
        LossWeights::default(),
        100,
    )
    .unwrap();
    let after = evaluate(&out.checkpoint, &val).unwrap().force_mae;
    assert!(after < before, "{before} -> {after}");
    assert!(out
        .log
        .iter()
        .all(|r| r.loss_kd > 0.0 && r.loss_total == r.loss_kd));
    assert_eq!(
        out.log.iter().filter(|r| r.val_force_mae.is_some()).count(),
        3
    );
}

#[test]
fn non_finite_labels_abort_training() {
    let mut graphs = prepare_all(&config(), &upstream().samples[..4]).unwrap();
    graphs[2].energy = f64::NAN;
    let r = train(
        init_checkpoint(&config()).unwrap(),
        &graphs,
        Objective::Supervised(LossWeights::default()),
        &TrainBudget::steps(5, 4, 1e-3, 0),
        TrainOptions::default(),
    );
    assert_eq!(r.unwrap_err(), Error::NonFiniteLoss(1));
}

#[test]
fn wall_clock_budget_needs_a_clock() {
    let graphs = prepare_all(&config(), &upstream().samples[..4]).unwrap();
    let budget = TrainBudget {
        budget: blockprune_core::training::Budget::WallClock(1.0),
        ..TrainBudget::steps(0, 4, 1e-3, 0)
    };
    let r = train(
        init_checkpoint(&config()).unwrap(),
        &graphs,
        Objective::Supervised(LossWeights::default()),
        &budget,
        TrainOptions::default(),
    );
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

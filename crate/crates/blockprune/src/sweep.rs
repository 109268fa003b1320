//! The full reduction sweep: every retained depth under every strategy,
//! producing the relevance profile, upstream and downstream accuracy,
//! efficiency and convergence tables.

use std::path::Path;

use blockprune_core::data::{Dataset, Split};
use blockprune_core::model::{Checkpoint, LossWeights};
use blockprune_core::relevance::{block_relevance, BlockRelevance};
use blockprune_core::rng;
use blockprune_core::surgery::{reduce_blocks, Strategy};
use blockprune_core::training::{
    distill, evaluate, evaluate_graphs, finetune, prepare_all, train, Budget, KdConfig, Objective,
    TrainBudget, TrainOptions,
};

use crate::efficiency::{efficiency_table, EfficiencyReport};
use crate::error::{Error, Result};
use crate::report::{
    figure3_csv, figure4_csv, relevance_csv, table1_csv, table2_csv, write_text, Figure3Row,
    Figure4Row, Table1Row,
};
use crate::WallClock;

/// A reduction recipe compared in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Trailing blocks removed, FinalMLP input sliced.
    Br,
    /// Trailing blocks removed, FinalMLP input layer re-initialized.
    BrRandom,
    /// Sliced reduction followed by distillation from the teacher.
    BrKd,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Br, Arm::BrRandom, Arm::BrKd];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Br => "BR",
            Arm::BrRandom => "BR/RandomMLP",
            Arm::BrKd => "BR+KD",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s.to_ascii_lowercase().as_str() {
            "br" | "sliced" => Some(Arm::Br),
            "br/randommlp" | "random" => Some(Arm::BrRandom),
            "br+kd" | "kd" => Some(Arm::BrKd),
            _ => None,
        }
    }

    fn strategy(self, seed: u64) -> Strategy {
        match self {
            Arm::BrRandom => Strategy::Random { seed },
            _ => Strategy::Sliced,
        }
    }
}

/// Builds the student for one arm: reduction to `interaction_blocks`, then
/// distillation on the upstream data for [`Arm::BrKd`].
pub fn reduced_student(
    teacher: &Checkpoint,
    upstream: &Dataset,
    interaction_blocks: usize,
    arm: Arm,
    kd: &KdConfig,
    kd_budget: &TrainBudget,
    weights: LossWeights,
) -> Result<Checkpoint> {
    let student = reduce_blocks(
        teacher,
        interaction_blocks + 1,
        arm.strategy(kd_budget.seed),
    )?;
    if arm != Arm::BrKd {
        return Ok(student);
    }
    Ok(distill(teacher, student, upstream, kd, kd_budget, weights, 0)?.checkpoint)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Retained interaction block counts below the teacher's.
    pub blocks: Vec<usize>,
    pub arms: Vec<Arm>,
    pub kd: KdConfig,
    pub kd_budget: TrainBudget,
    /// Downstream fine-tuning budget shared by every arm.
    pub finetune_budget: TrainBudget,
    pub head_reset: bool,
    pub weights: LossWeights,
    pub bench_samples: usize,
    pub bench_warmup: usize,
    pub bench_passes: usize,
    pub bench_workers: usize,
    /// Retained interaction block counts for the convergence curves.
    pub curve_blocks: Vec<usize>,
    pub curve_seconds: f64,
    pub curve_eval_every: usize,
    /// Re-initialize the heads before each convergence run, so every depth
    /// starts from the same kind of untrained readout.
    pub curve_head_reset: bool,
}

impl SweepConfig {
    pub fn new(seed: u64) -> Self {
        SweepConfig {
            blocks: vec![5, 4, 3, 2],
            arms: Arm::ALL.to_vec(),
            kd: KdConfig::default(),
            kd_budget: TrainBudget::steps(300, 8, 3e-4, seed),
            finetune_budget: TrainBudget::steps(300, 8, 3e-4, seed),
            head_reset: false,
            weights: LossWeights::default(),
            bench_samples: 64,
            bench_warmup: 1,
            bench_passes: 3,
            bench_workers: 1,
            curve_blocks: vec![6, 3],
            curve_seconds: 10.0,
            curve_eval_every: 25,
            curve_head_reset: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub relevance: BlockRelevance,
    pub table1: Vec<Table1Row>,
    pub figure3: Vec<Figure3Row>,
    pub table2: Vec<EfficiencyReport>,
    pub figure4: Vec<Figure4Row>,
}

/// Validation force MAE against training wall-clock time (evaluation time
/// excluded), starting with the untrained point at `t = 0`.
pub fn convergence_curve(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    budget: &TrainBudget,
    weights: LossWeights,
    eval_every: usize,
) -> Result<Vec<(f64, f64)>> {
    let cfg = *ckpt.config();
    let train_graphs = prepare_all(&cfg, &dataset.split(Split::Train).samples)?;
    let val = prepare_all(&cfg, &dataset.split(Split::Val).samples)?;
    if val.is_empty() {
        return Err(Error::Invalid(
            "convergence curve needs a validation split".into(),
        ));
    }
    let clock = WallClock::start();
    let mut curve = vec![(0.0, evaluate_graphs(ckpt, &val)?.force_mae)];
    let opts = TrainOptions {
        clock: Some(&clock),
        validation: Some(&val),
        eval_every,
    };
    let out = train(
        ckpt.clone(),
        &train_graphs,
        Objective::Supervised(weights),
        budget,
        opts,
    )?;
    curve.extend(
        out.log
            .iter()
            .filter_map(|r| Some((r.wall_clock_s?, r.val_force_mae?))),
    );
    Ok(curve)
}

pub fn run_sweep(
    teacher: &Checkpoint,
    upstream: &Dataset,
    downstream: &Dataset,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let full = teacher.config().interaction_blocks();
    if let Some(b) = cfg.blocks.iter().find(|&&b| b >= full || b == 0) {
        return Err(Error::Invalid(format!(
            "cannot reduce a {full}-interaction-block teacher to {b}"
        )));
    }
    let up_val = upstream.split(Split::Val).samples;
    let relevance = block_relevance(teacher, &up_val, cfg.weights)?;

    let up_test = upstream.split(Split::Test).samples;
    let teacher_up = evaluate(teacher, &up_test)?.force_mae;
    let mut table1 = vec![Table1Row {
        strategy: "teacher".into(),
        blocks: full,
        upstream_force_mae: teacher_up,
        delta_vs_teacher: 0.0,
    }];
    let ft = |ckpt: Checkpoint| {
        finetune(
            ckpt,
            downstream,
            &cfg.finetune_budget,
            cfg.weights,
            cfg.head_reset,
            0,
            None,
        )
        .map(|(_, m)| m)
    };
    let m = ft(teacher.clone())?;
    let mut figure3 = vec![Figure3Row {
        strategy: "teacher".into(),
        blocks: full,
        downstream_force_mae: m.force_mae,
        downstream_energy_mae_per_atom: m.energy_mae_per_atom,
    }];
    for &b in &cfg.blocks {
        for &arm in &cfg.arms {
            let student = reduced_student(
                teacher,
                upstream,
                b,
                arm,
                &cfg.kd,
                &cfg.kd_budget,
                cfg.weights,
            )?;
            let up = evaluate(&student, &up_test)?.force_mae;
            table1.push(Table1Row {
                strategy: arm.label().into(),
                blocks: b,
                upstream_force_mae: up,
                delta_vs_teacher: up - teacher_up,
            });
            let m = ft(student)?;
            figure3.push(Figure3Row {
                strategy: arm.label().into(),
                blocks: b,
                downstream_force_mae: m.force_mae,
                downstream_energy_mae_per_atom: m.energy_mae_per_atom,
            });
        }
    }

    let mut reduced = Vec::new();
    for &b in &cfg.blocks {
        reduced.push(reduce_blocks(teacher, b + 1, Strategy::Sliced)?);
    }
    let mut models: Vec<&Checkpoint> = vec![teacher];
    models.extend(reduced.iter());
    let bench: Vec<_> = up_val
        .iter()
        .take(cfg.bench_samples.max(1))
        .cloned()
        .collect();
    let table2 = efficiency_table(
        &models,
        &bench,
        cfg.bench_warmup,
        cfg.bench_passes,
        cfg.bench_workers,
    )?;

    let mut figure4 = Vec::new();
    let curve_budget = TrainBudget {
        budget: Budget::WallClock(cfg.curve_seconds),
        ..cfg.finetune_budget
    };
    for &b in &cfg.curve_blocks {
        let mut start = if b == full {
            teacher.clone()
        } else {
            reduced_student(
                teacher,
                upstream,
                b,
                Arm::BrKd,
                &cfg.kd,
                &cfg.kd_budget,
                cfg.weights,
            )?
        };
        if cfg.curve_head_reset {
            start.reset_heads(rng::derive(curve_budget.seed, 0x4ead));
        }
        for (t, v) in convergence_curve(
            &start,
            downstream,
            &curve_budget,
            cfg.weights,
            cfg.curve_eval_every,
        )? {
            figure4.push(Figure4Row {
                blocks: b,
                wall_clock_s: t,
                val_force_mae: v,
            });
        }
    }
    Ok(SweepResult {
        relevance,
        table1,
        figure3,
        table2,
        figure4,
    })
}

pub const SWEEP_FILES: [&str; 5] = [
    "figure2.csv",
    "table1.csv",
    "figure3.csv",
    "table2.csv",
    "figure4.csv",
];

pub fn write_sweep(dir: &Path, r: &SweepResult) -> Result<()> {
    let texts = [
        relevance_csv(&r.relevance)?,
        table1_csv(&r.table1)?,
        figure3_csv(&r.figure3)?,
        table2_csv(&r.table2)?,
        figure4_csv(&r.figure4)?,
    ];
    for (name, text) in SWEEP_FILES.iter().zip(texts) {
        write_text(&dir.join(name), &text)?;
    }
    Ok(())
}

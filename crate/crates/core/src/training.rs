//! Optimization loops: supervised training, distillation from a frozen
//! teacher, fine-tuning and evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{build_edges, Dataset, MolecularSample, Split};
use crate::error::{Error, Result};
use crate::model::{
    forward_on_tape, init_checkpoint, loss_on_tape, predict_graph, prepare, Checkpoint,
    ForwardVars, Graph, LossWeights, ModelConfig, Prediction,
};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Adam with a global gradient-norm clip.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(10.0),
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &mut [Vec<f64>]) {
        if let Some(max) = self.clip_norm {
            let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
            if norm > max {
                let s = max / norm;
                grads.iter_mut().flatten().for_each(|g| *g *= s);
            }
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Steps(usize),
    /// Training seconds, evaluation time excluded. Needs a [`Clock`].
    WallClock(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainBudget {
    pub budget: Budget,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainBudget {
    pub fn steps(steps: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        TrainBudget {
            budget: Budget::Steps(steps),
            batch_size,
            learning_rate,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if let Budget::WallClock(s) = self.budget {
            if !(s > 0.0) {
                return Err(Error::invalid("wall-clock budget must be positive"));
            }
        }
        Ok(())
    }
}

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Optional extras for a training run.
#[derive(Default, Clone, Copy)]
pub struct TrainOptions<'a> {
    pub clock: Option<&'a dyn Clock>,
    /// Graphs scored at every eval interval.
    pub validation: Option<&'a [Graph]>,
    /// Steps between validation evaluations (0 disables).
    pub eval_every: usize,
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss_total: f64,
    pub loss_energy: f64,
    pub loss_force: f64,
    pub loss_kd: f64,
    pub val_force_mae: Option<f64>,
    /// Training time so far, when a clock was supplied.
    pub wall_clock_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub steps: usize,
}

/// Which intermediate features the distillation terms compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMatch {
    DeepestRetained,
    AllRetained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdConfig {
    pub lambda: f64,
    pub distill_output: bool,
    /// Per-atom L1 between predicted energies (off by default).
    pub distill_energy: bool,
    /// Number of leading FinalMLP layers matched (`n'`).
    pub distill_mlp_layers: usize,
    pub distill_n2n: bool,
    pub distill_e2e: bool,
    pub feature_match: FeatureMatch,
    pub include_ground_truth_loss: bool,
    pub data_fraction: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            lambda: 1.0,
            distill_output: true,
            distill_energy: false,
            distill_mlp_layers: 1,
            distill_n2n: true,
            distill_e2e: true,
            feature_match: FeatureMatch::DeepestRetained,
            include_ground_truth_loss: false,
            data_fraction: 0.015,
        }
    }
}

impl KdConfig {
    pub fn any_term(&self) -> bool {
        self.distill_output
            || self.distill_energy
            || self.distill_mlp_layers > 0
            || self.distill_n2n
            || self.distill_e2e
    }

    pub fn validate(&self, mlp_layers: usize) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if self.lambda > 0.0 && !self.any_term() {
            return Err(Error::invalid(
                "lambda > 0 needs at least one distillation term",
            ));
        }
        if self.distill_mlp_layers > mlp_layers {
            return Err(Error::invalid(format!(
                "n' = {} exceeds FinalMLP depth {mlp_layers}",
                self.distill_mlp_layers
            )));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::invalid("data fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_same(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "kd_loss",
            format!("{op}: student {:?} vs teacher {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn matched_blocks(kd: &KdConfig, retained: usize) -> core::ops::Range<usize> {
    match kd.feature_match {
        FeatureMatch::DeepestRetained => retained - 1..retained,
        FeatureMatch::AllRetained => 0..retained,
    }
}

/// Sum of the enabled mean-L1 distillation terms, built on the tape so the
/// student's parameters receive gradients. `None` when nothing is enabled.
pub fn kd_on_tape(
    tape: &mut Tape,
    student: &ForwardVars,
    teacher: &Prediction,
    kd: &KdConfig,
) -> Result<Option<Var>> {
    let mut terms: Vec<Var> = Vec::new();
    fn l1(tape: &mut Tape, terms: &mut Vec<Var>, s: Var, t: &Tensor, what: &str) -> Result<()> {
        check_same(what, tape.value(s), t)?;
        let tv = tape.constant(t.clone());
        terms.push(tape.l1_loss(s, tv)?);
        Ok(())
    }
    if kd.distill_output {
        l1(tape, &mut terms, student.forces, &teacher.forces, "forces")?;
    }
    if kd.distill_energy {
        let n = teacher.forces.rows() as f64;
        let tv = tape.constant(Tensor::scalar(teacher.energy));
        let d = tape.l1_loss(student.energy, tv)?;
        let s = tape.scale(d, 1.0 / n);
        terms.push(s);
    }
    if kd.distill_mlp_layers > 0 {
        if kd.distill_mlp_layers > student.mlp_outputs.len()
            || kd.distill_mlp_layers > teacher.mlp_layer_outputs.len()
        {
            return Err(Error::shape("kd_loss", "n' exceeds FinalMLP depth"));
        }
        for i in 0..kd.distill_mlp_layers {
            l1(
                tape,
                &mut terms,
                student.mlp_outputs[i],
                &teacher.mlp_layer_outputs[i],
                "mlp",
            )?;
        }
    }
    let teacher_nodes = &teacher.features.block_node_features;
    if kd.distill_n2n {
        for i in matched_blocks(kd, student.node_features.len()) {
            let t = teacher_nodes
                .get(i)
                .ok_or_else(|| Error::shape("kd_loss", format!("teacher has no node block {i}")))?;
            l1(tape, &mut terms, student.node_features[i], t, "n2n")?;
        }
    }
    let teacher_edges = &teacher.features.block_edge_features;
    if kd.distill_e2e {
        for i in matched_blocks(kd, student.edge_features.len()) {
            let t = teacher_edges
                .get(i)
                .ok_or_else(|| Error::shape("kd_loss", format!("teacher has no edge block {i}")))?;
            l1(tape, &mut terms, student.edge_features[i], t, "e2e")?;
        }
    }
    let Some((&first, rest)) = terms.split_first() else {
        return Ok(None);
    };
    let mut total = first;
    for &t in rest {
        total = tape.add(total, t)?;
    }
    Ok(Some(total))
}

/// Distillation loss between two predictions on the same sample (lambda
/// not applied).
pub fn kd_loss(teacher: &Prediction, student: &Prediction, kd: &KdConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let c = |tape: &mut Tape, t: &Tensor| tape.constant(t.clone());
    let fv = ForwardVars {
        node_features: student
            .features
            .block_node_features
            .iter()
            .map(|t| c(&mut tape, t))
            .collect(),
        edge_features: student
            .features
            .block_edge_features
            .iter()
            .map(|t| c(&mut tape, t))
            .collect(),
        concat: c(&mut tape, &student.features.concatenated),
        mlp_outputs: student
            .mlp_layer_outputs
            .iter()
            .map(|t| c(&mut tape, t))
            .collect(),
        energy: c(&mut tape, &Tensor::scalar(student.energy)),
        forces: c(&mut tape, &student.forces),
    };
    Ok(match kd_on_tape(&mut tape, &fv, teacher, kd)? {
        Some(v) => tape.value(v).item().expect("scalar"),
        None => 0.0,
    })
}

/// What a training step minimizes.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    Supervised(LossWeights),
    /// `[L0] + lambda * L_KD` against cached teacher predictions, one per
    /// training graph.
    Distill {
        teacher: &'a [Prediction],
        kd: &'a KdConfig,
        weights: LossWeights,
    },
}

#[derive(Debug, Clone, Copy, Default)]
struct StepStats {
    total: f64,
    energy: f64,
    force: f64,
    kd: f64,
}

fn sample_gradient(
    ckpt_cfg: &ModelConfig,
    params: &[Tensor],
    graph: &Graph,
    index: usize,
    objective: &Objective<'_>,
) -> Result<(Vec<Tensor>, StepStats)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let fv = forward_on_tape(&mut tape, ckpt_cfg, &vars, graph)?;
    let (weights, include_gt, kd) = match objective {
        Objective::Supervised(w) => (*w, true, None),
        Objective::Distill {
            teacher,
            kd,
            weights,
        } => (
            *weights,
            kd.include_ground_truth_loss,
            Some((&teacher[index], *kd)),
        ),
    };
    let loss = loss_on_tape(&mut tape, fv.energy, fv.forces, graph, weights)?;
    let mut stats = StepStats {
        energy: tape.value(loss.energy).item().unwrap_or(f64::NAN),
        force: tape.value(loss.force).item().unwrap_or(f64::NAN),
        ..StepStats::default()
    };
    let mut total = include_gt.then_some(loss.total);
    if let Some((teacher, kd)) = kd {
        if kd.lambda > 0.0 {
            if let Some(k) = kd_on_tape(&mut tape, &fv, teacher, kd)? {
                stats.kd = tape.value(k).item().unwrap_or(f64::NAN);
                let scaled = tape.scale(k, kd.lambda);
                total = Some(match total {
                    Some(t) => tape.add(t, scaled)?,
                    None => scaled,
                });
            }
        }
    }
    let Some(total) = total else {
        return Ok((
            params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            stats,
        ));
    };
    stats.total = tape.value(total).item().unwrap_or(f64::NAN);
    tape.backward(total)?;
    let grads = vars
        .iter()
        .map(|v| tape.grad(*v).expect("param grad"))
        .collect();
    Ok((grads, stats))
}

/// Sum of absolute force errors, force component count and per-atom energy
/// error for one graph.
fn graph_errors(ckpt: &Checkpoint, graph: &Graph) -> Result<(f64, usize, f64)> {
    let (pred, _) = predict_graph(ckpt, graph, LossWeights::default())?;
    let f_err: f64 = pred
        .forces
        .data()
        .iter()
        .zip(graph.forces.data())
        .map(|(a, b)| libm::fabs(a - b))
        .sum();
    let e_err = libm::fabs(pred.energy - graph.energy) / graph.n_atoms as f64;
    Ok((f_err, 3 * graph.n_atoms, e_err))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub force_mae: f64,
    pub energy_mae_per_atom: f64,
    pub sample_count: usize,
}

/// Pools per-sample errors. Contributions are sorted before summation so
/// the result does not depend on sample order.
pub fn pool_errors(mut per_sample: Vec<(f64, usize, f64)>) -> EvalMetrics {
    per_sample.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let n = per_sample.len();
    let f_sum: f64 = per_sample.iter().map(|x| x.0).sum();
    let count: usize = per_sample.iter().map(|x| x.1).sum();
    let mut e: Vec<f64> = per_sample.iter().map(|x| x.2).collect();
    e.sort_by(f64::total_cmp);
    EvalMetrics {
        force_mae: f_sum / count.max(1) as f64,
        energy_mae_per_atom: e.iter().sum::<f64>() / n.max(1) as f64,
        sample_count: n,
    }
}

pub fn evaluate_graphs(ckpt: &Checkpoint, graphs: &[Graph]) -> Result<EvalMetrics> {
    if graphs.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let per = graphs
        .iter()
        .map(|g| graph_errors(ckpt, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool_errors(per))
}

pub fn evaluate(ckpt: &Checkpoint, samples: &[MolecularSample]) -> Result<EvalMetrics> {
    evaluate_graphs(ckpt, &prepare_all(ckpt.config(), samples)?)
}

/// Edges and radial features for every sample at the model's cutoff.
pub fn prepare_all(config: &ModelConfig, samples: &[MolecularSample]) -> Result<Vec<Graph>> {
    samples
        .iter()
        .map(|s| {
            let e = build_edges(&s.positions, config.cutoff)?;
            prepare(config, s, &e)
        })
        .collect()
}

/// The shared optimization loop. Batches are drawn from a seeded per-epoch
/// shuffle; per-sample gradients are averaged in batch order.
pub fn train(
    mut ckpt: Checkpoint,
    graphs: &[Graph],
    objective: Objective<'_>,
    budget: &TrainBudget,
    opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    budget.validate()?;
    if graphs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Objective::Distill { teacher, .. } = objective {
        if teacher.len() != graphs.len() {
            return Err(Error::invalid(
                "one teacher prediction per training graph is required",
            ));
        }
    }
    let clock = match (budget.budget, opts.clock) {
        (Budget::WallClock(_), None) => {
            return Err(Error::invalid("wall-clock budget needs a clock"))
        }
        (_, c) => c,
    };
    let cfg = *ckpt.config();
    let mut params: Vec<Tensor> = ckpt.tensors().cloned().collect();
    let mut adam = Adam::new(&params, budget.learning_rate);
    let mut rng = rng::seeded(budget.seed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut cursor = order.len();
    let mut log = Vec::new();
    let start = clock.map_or(0.0, |c| c.seconds());
    let mut eval_time = 0.0;
    let elapsed = |eval_time: f64| clock.map(|c| c.seconds() - start - eval_time);

    let mut step = 0;
    loop {
        let done = match budget.budget {
            Budget::Steps(n) => step >= n,
            Budget::WallClock(s) => elapsed(eval_time).unwrap_or(0.0) >= s,
        };
        if done {
            break;
        }
        let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut stats = StepStats::default();
        for _ in 0..budget.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            let (g, s) = sample_gradient(&cfg, &params, &graphs[idx], idx, &objective)?;
            for (acc, g) in grads.iter_mut().zip(&g) {
                acc.iter_mut().zip(g.data()).for_each(|(a, x)| *a += x);
            }
            stats.total += s.total;
            stats.energy += s.energy;
            stats.force += s.force;
            stats.kd += s.kd;
        }
        let scale = 1.0 / budget.batch_size as f64;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        step += 1;
        if !stats.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss(step));
        }
        adam.step(&mut params, &mut grads);

        let mut row = LogRow {
            step,
            loss_total: stats.total * scale,
            loss_energy: stats.energy * scale,
            loss_force: stats.force * scale,
            loss_kd: stats.kd * scale,
            val_force_mae: None,
            wall_clock_s: elapsed(eval_time),
        };
        if let Some(val) = opts.validation {
            if opts.eval_every > 0 && step % opts.eval_every == 0 {
                let t0 = clock.map_or(0.0, |c| c.seconds());
                ckpt.set_tensors(params.clone())?;
                row.val_force_mae = Some(evaluate_graphs(&ckpt, val)?.force_mae);
                eval_time += clock.map_or(0.0, |c| c.seconds()) - t0;
            }
        }
        log.push(row);
    }
    ckpt.set_tensors(params)?;
    Ok(TrainOutcome {
        checkpoint: ckpt,
        log,
        steps: step,
    })
}

/// Trains a fresh model on the dataset's train split; the val split, if
/// any, is scored every `opts.eval_every` steps.
pub fn pretrain(
    config: &ModelConfig,
    dataset: &Dataset,
    budget: &TrainBudget,
    weights: LossWeights,
    eval_every: usize,
    clock: Option<&dyn Clock>,
) -> Result<TrainOutcome> {
    let init = init_checkpoint(config)?;
    supervised(init, dataset, budget, weights, eval_every, clock)
}

fn supervised(
    ckpt: Checkpoint,
    dataset: &Dataset,
    budget: &TrainBudget,
    weights: LossWeights,
    eval_every: usize,
    clock: Option<&dyn Clock>,
) -> Result<TrainOutcome> {
    let cfg = *ckpt.config();
    let train_graphs = prepare_all(&cfg, &dataset.split(Split::Train).samples)?;
    let val_graphs = prepare_all(&cfg, &dataset.split(Split::Val).samples)?;
    let opts = TrainOptions {
        clock,
        validation: (!val_graphs.is_empty()).then_some(&val_graphs[..]),
        eval_every,
    };
    train(
        ckpt,
        &train_graphs,
        Objective::Supervised(weights),
        budget,
        opts,
    )
}

/// Number of samples used for distillation: `floor(fraction * len)`,
/// capped at the train split size.
pub fn distill_sample_count(dataset_len: usize, train_len: usize, fraction: f64) -> usize {
    let k = libm::floor(fraction * dataset_len as f64 + 1e-9) as usize;
    k.min(train_len)
}

/// Indices of the distillation subset within the train split, ascending.
pub fn distill_subset(train_len: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..train_len).collect();
    idx.shuffle(&mut rng::stream(seed, 0xd157));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn check_compatible(teacher: &ModelConfig, student: &ModelConfig) -> Result<()> {
    let same = ModelConfig {
        blocks: teacher.blocks,
        seed: teacher.seed,
        ..*student
    } == *teacher;
    if !same {
        return Err(Error::Incompatible(String::from(
            "configs differ beyond block count",
        )));
    }
    if student.blocks > teacher.blocks {
        return Err(Error::Incompatible(format!(
            "student has {} blocks, teacher {}",
            student.blocks, teacher.blocks
        )));
    }
    Ok(())
}

/// Trains `student` towards the frozen `teacher` on a `data_fraction`
/// subsample of the dataset's train split.
pub fn distill(
    teacher: &Checkpoint,
    student: Checkpoint,
    dataset: &Dataset,
    kd: &KdConfig,
    budget: &TrainBudget,
    weights: LossWeights,
    eval_every: usize,
) -> Result<TrainOutcome> {
    check_compatible(teacher.config(), student.config())?;
    kd.validate(student.config().mlp_layers as usize)?;
    if kd.lambda == 0.0 && !kd.include_ground_truth_loss {
        return Ok(TrainOutcome {
            checkpoint: student,
            log: Vec::new(),
            steps: 0,
        });
    }
    let train_split = dataset.split(Split::Train);
    let k = distill_sample_count(dataset.len(), train_split.len(), kd.data_fraction);
    if k == 0 {
        return Err(Error::invalid("data fraction selects no samples"));
    }
    let subset: Vec<MolecularSample> = distill_subset(train_split.len(), k, budget.seed)
        .into_iter()
        .map(|i| train_split.samples[i].clone())
        .collect();
    let cfg = *student.config();
    let graphs = prepare_all(&cfg, &subset)?;
    let teacher_preds = graphs
        .iter()
        .map(|g| predict_graph(teacher, g, weights).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let val_graphs = prepare_all(&cfg, &dataset.split(Split::Val).samples)?;
    let opts = TrainOptions {
        clock: None,
        validation: (!val_graphs.is_empty()).then_some(&val_graphs[..]),
        eval_every,
    };
    train(
        student,
        &graphs,
        Objective::Distill {
            teacher: &teacher_preds,
            kd,
            weights,
        },
        budget,
        opts,
    )
}

/// Full-model fine-tuning on the train split, validation logging on the val
/// split, metrics on the test split.
pub fn finetune(
    ckpt: Checkpoint,
    dataset: &Dataset,
    budget: &TrainBudget,
    weights: LossWeights,
    head_reset: bool,
    eval_every: usize,
    clock: Option<&dyn Clock>,
) -> Result<(TrainOutcome, EvalMetrics)> {
    let mut ckpt = ckpt;
    if head_reset {
        ckpt.reset_heads(rng::derive(budget.seed, 0x4ead));
    }
    let out = supervised(ckpt, dataset, budget, weights, eval_every, clock)?;
    let metrics = evaluate(&out.checkpoint, &dataset.split(Split::Test).samples)?;
    Ok((out, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![Tensor::vector(vec![1.0, -1.0])];
        let mut adam = Adam::new(&p, 0.1);
        adam.step(&mut p, &mut [vec![2.0, -3.0]]);
        assert!((p[0].data()[0] - 0.9).abs() < 1e-9);
        assert!((p[0].data()[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn adam_clips_global_norm() {
        let mut p = vec![Tensor::vector(vec![0.0])];
        let mut adam = Adam::new(&p, 1.0);
        let mut g = [vec![100.0]];
        adam.step(&mut p, &mut g);
        assert_eq!(g[0][0], 10.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::vector(vec![0.5, 2.0])];
        let mut adam = Adam::new(&p, 1e-3);
        adam.step(&mut p, &mut [vec![0.0, 0.0]]);
        assert_eq!(p[0].data(), &[0.5, 2.0]);
    }

    #[test]
    fn distill_count_floors() {
        assert_eq!(distill_sample_count(10_000, 8_000, 0.015), 150);
        assert_eq!(distill_sample_count(100, 80, 1.0), 80);
        assert_eq!(distill_sample_count(10, 8, 0.05), 0);
    }

    #[test]
    fn distill_subset_distinct_sorted() {
        let s = distill_subset(8000, 150, 3);
        assert_eq!(s.len(), 150);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(distill_subset(5, 5, 9), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn kd_config_validation() {
        let mut kd = KdConfig::default();
        assert!(kd.validate(5).is_ok());
        kd.distill_mlp_layers = 6;
        assert!(kd.validate(5).is_err());
        let none = KdConfig {
            distill_output: false,
            distill_mlp_layers: 0,
            distill_n2n: false,
            distill_e2e: false,
            ..KdConfig::default()
        };
        assert!(none.validate(5).is_err());
        assert!(KdConfig {
            lambda: 0.0,
            ..none
        }
        .validate(5)
        .is_ok());
        assert!(KdConfig {
            data_fraction: 0.0,
            ..KdConfig::default()
        }
        .validate(5)
        .is_err());
    }

    #[test]
    fn pooled_metrics_ignore_order() {
        let a = vec![(0.3, 9, 0.1), (0.7, 12, 0.2), (0.1, 6, 0.05)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(pool_errors(a), pool_errors(b));
    }
}

//! The block-structured message-passing potential.
//!
//! Structure: an embedding block producing node features `h0` and initial
//! edge features, `b - 1` interaction blocks each refining both streams, the
//! concatenation `f = [h0, h1, ..., h_{b-1}]` of every block's node output,
//! a per-atom FinalMLP `g` of `m` layers on `f`, and two heads: a per-atom
//! energy readout summed over atoms, and a direct force head that weights
//! edge unit vectors by a learned scalar.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::data::{EdgeList, MolecularSample};
use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Total block count including the embedding.
    pub blocks: u32,
    /// FinalMLP depth.
    pub mlp_layers: u32,
    pub node_dim: u32,
    pub edge_dim: u32,
    pub n_rbf: u32,
    pub cutoff: f64,
    pub species_count: u32,
    pub seed: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 7,
            mlp_layers: 5,
            node_dim: 32,
            edge_dim: 16,
            n_rbf: 8,
            cutoff: 1.6,
            species_count: 3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks < 2 {
            return Err(Error::invalid(
                "at least one interaction block is required (b >= 2)",
            ));
        }
        if self.mlp_layers < 1 {
            return Err(Error::invalid("FinalMLP needs at least one layer"));
        }
        if self.node_dim < 1 || self.edge_dim < 1 || self.n_rbf < 1 || self.species_count < 1 {
            return Err(Error::invalid(
                "feature widths and species count must be >= 1",
            ));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::invalid("cutoff must be positive and finite"));
        }
        Ok(())
    }

    pub fn interaction_blocks(&self) -> usize {
        self.blocks as usize - 1
    }

    pub fn with_blocks(mut self, blocks: u32) -> Self {
        self.blocks = blocks;
        self
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.node_dim as usize,
            self.edge_dim as usize,
            self.n_rbf as usize,
        )
    }
}

/// Which part of the model a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    Embedding,
    /// 1-based interaction block index (block 0 is the embedding).
    Interaction(usize),
    FinalMlp(usize),
    EnergyHead,
    ForceHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], group: ParamGroup) -> Self {
        ParamSpec {
            name,
            shape: shape.to_vec(),
            group,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_bias(&self) -> bool {
        self.name.ends_with(".bias")
    }
}

/// Names and shapes of every parameter, in storage order.
pub fn manifest(config: &ModelConfig) -> Vec<ParamSpec> {
    let (d, de, nr) = config.dims();
    let b = config.blocks as usize;
    let mut out = vec![
        ParamSpec::new(
            "embed.species".into(),
            &[config.species_count as usize, d],
            ParamGroup::Embedding,
        ),
        ParamSpec::new(
            "embed.edge.weight".into(),
            &[2 * d + nr, de],
            ParamGroup::Embedding,
        ),
        ParamSpec::new("embed.edge.bias".into(), &[de], ParamGroup::Embedding),
    ];
    for k in 1..b {
        let g = ParamGroup::Interaction(k);
        out.push(ParamSpec::new(
            format!("interaction.{k}.edge.weight"),
            &[de + 2 * d + nr, de],
            g,
        ));
        out.push(ParamSpec::new(
            format!("interaction.{k}.edge.bias"),
            &[de],
            g,
        ));
        out.push(ParamSpec::new(
            format!("interaction.{k}.node_in.weight"),
            &[de, d],
            g,
        ));
        out.push(ParamSpec::new(
            format!("interaction.{k}.node_in.bias"),
            &[d],
            g,
        ));
        out.push(ParamSpec::new(
            format!("interaction.{k}.node_out.weight"),
            &[d, d],
            g,
        ));
        out.push(ParamSpec::new(
            format!("interaction.{k}.node_out.bias"),
            &[d],
            g,
        ));
    }
    for l in 0..config.mlp_layers as usize {
        let fan_in = if l == 0 { d * b } else { d };
        let g = ParamGroup::FinalMlp(l);
        out.push(ParamSpec::new(
            format!("final_mlp.{l}.weight"),
            &[fan_in, d],
            g,
        ));
        out.push(ParamSpec::new(format!("final_mlp.{l}.bias"), &[d], g));
    }
    out.push(ParamSpec::new(
        "head.energy.weight".into(),
        &[d, 1],
        ParamGroup::EnergyHead,
    ));
    out.push(ParamSpec::new(
        "head.energy.bias".into(),
        &[1],
        ParamGroup::EnergyHead,
    ));
    out.push(ParamSpec::new(
        "head.force.hidden.weight".into(),
        &[2 * d + de, d],
        ParamGroup::ForceHead,
    ));
    out.push(ParamSpec::new(
        "head.force.hidden.bias".into(),
        &[d],
        ParamGroup::ForceHead,
    ));
    out.push(ParamSpec::new(
        "head.force.out.weight".into(),
        &[d, 1],
        ParamGroup::ForceHead,
    ));
    out.push(ParamSpec::new(
        "head.force.out.bias".into(),
        &[1],
        ParamGroup::ForceHead,
    ));
    out
}

/// Glorot-uniform weights, zero biases.
pub(crate) fn init_tensor(spec: &ParamSpec, rng: &mut rng::Rng) -> Tensor {
    let mut t = Tensor::zeros(&spec.shape);
    if spec.is_bias() {
        return t;
    }
    let fan_in = spec.shape[0];
    let fan_out = spec.shape.get(1).copied().unwrap_or(1);
    let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    t.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-a..a));
    t
}

/// Model parameters with the config they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    config: ModelConfig,
    params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Validates that names and shapes are exactly the config's manifest.
    pub fn from_parts(config: ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let expected = manifest(&config);
        if expected.len() != params.len() {
            return Err(Error::Manifest {
                name: String::from("*"),
                detail: format!(
                    "expected {} tensors, found {}",
                    expected.len(),
                    params.len()
                ),
            });
        }
        for (spec, (name, t)) in expected.iter().zip(&params) {
            if &spec.name != name {
                return Err(Error::Manifest {
                    name: name.clone(),
                    detail: format!("expected tensor {}", spec.name),
                });
            }
            if spec.shape != t.shape() {
                return Err(Error::Manifest {
                    name: name.clone(),
                    detail: format!("expected shape {:?}, found {:?}", spec.shape, t.shape()),
                });
            }
        }
        Ok(Checkpoint { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Replaces all tensor values in manifest order; shapes must match.
    pub fn set_tensors(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::invalid("tensor count mismatch"));
        }
        for ((name, old), new) in self.params.iter_mut().zip(values) {
            if old.shape() != new.shape() {
                return Err(Error::Manifest {
                    name: name.clone(),
                    detail: format!("shape {:?} vs {:?}", old.shape(), new.shape()),
                });
            }
            *old = new;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Re-initializes the energy and force heads from `seed`.
    pub fn reset_heads(&mut self, seed: u64) {
        let mut r = rng::seeded(seed);
        for (spec, (_, t)) in manifest(&self.config).iter().zip(self.params.iter_mut()) {
            if matches!(spec.group, ParamGroup::EnergyHead | ParamGroup::ForceHead) {
                *t = init_tensor(spec, &mut r);
            }
        }
    }
}

/// Seeded initialization: every weight tensor in manifest order draws from
/// one ChaCha8 stream seeded by `config.seed`.
pub fn init_checkpoint(config: &ModelConfig) -> Result<Checkpoint> {
    config.validate()?;
    let mut r = rng::seeded(config.seed as u64);
    let params = manifest(config)
        .iter()
        .map(|s| (s.name.clone(), init_tensor(s, &mut r)))
        .collect();
    Checkpoint::from_parts(*config, params)
}

/// Loss weights of `L0 = alpha_e * L_E + alpha_f * L_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_e: f64,
    pub alpha_f: f64,
}

impl LossWeights {
    pub fn new(alpha_e: f64, alpha_f: f64) -> Result<Self> {
        if alpha_e < 0.0 || alpha_f < 0.0 || !(alpha_e + alpha_f > 0.0) {
            return Err(Error::invalid(
                "loss weights must be nonnegative and not both zero",
            ));
        }
        Ok(LossWeights { alpha_e, alpha_f })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_e: 1.0,
            alpha_f: 1.0,
        }
    }
}

/// A sample turned into constant model inputs for one cutoff.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n_atoms: usize,
    pub species: Arc<[usize]>,
    pub senders: Arc<[usize]>,
    pub receivers: Arc<[usize]>,
    /// `[n_e, n_rbf]` enveloped radial basis.
    pub rbf: Tensor,
    /// `[n_e, 3]` edge unit vectors.
    pub unit_vectors: Tensor,
    pub energy: f64,
    /// `[n, 3]`.
    pub forces: Tensor,
}

impl Graph {
    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }
}

/// Gaussians with centers evenly spaced inside `(0, cutoff)` and width
/// `cutoff / n_rbf`, times the cosine envelope `(cos(pi r / rc) + 1) / 2`.
pub fn radial_basis(r: f64, cutoff: f64, n_rbf: usize) -> Vec<f64> {
    let width = cutoff / n_rbf as f64;
    let envelope = if r < cutoff {
        0.5 * (libm::cos(PI * r / cutoff) + 1.0)
    } else {
        0.0
    };
    (0..n_rbf)
        .map(|k| {
            let center = cutoff * (k + 1) as f64 / (n_rbf + 1) as f64;
            let z = (r - center) / width;
            libm::exp(-z * z) * envelope
        })
        .collect()
}

pub fn prepare(config: &ModelConfig, sample: &MolecularSample, edges: &EdgeList) -> Result<Graph> {
    if edges.is_empty() {
        return Err(Error::EmptyEdges);
    }
    let n = sample.n_atoms();
    let species = sample
        .atomic_numbers
        .iter()
        .map(|&z| {
            if z == 0 || z > config.species_count {
                Err(Error::SpeciesOutOfRange {
                    species: z,
                    species_count: config.species_count,
                })
            } else {
                Ok(z as usize - 1)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if edges
        .senders
        .iter()
        .chain(edges.receivers.iter())
        .any(|&i| i >= n)
    {
        return Err(Error::invalid("edge index out of range"));
    }
    let nr = config.n_rbf as usize;
    let mut rbf = Vec::with_capacity(edges.len() * nr);
    for &r in &edges.distances {
        rbf.extend(radial_basis(r, config.cutoff, nr));
    }
    let unit: Vec<f64> = edges
        .unit_vectors
        .iter()
        .flat_map(|u| u.iter().copied())
        .collect();
    let forces: Vec<f64> = sample
        .forces
        .iter()
        .flat_map(|f| f.iter().copied())
        .collect();
    Ok(Graph {
        n_atoms: n,
        species: species.into(),
        senders: edges.senders.clone(),
        receivers: edges.receivers.clone(),
        rbf: Tensor::matrix(edges.len(), nr, rbf)?,
        unit_vectors: Tensor::matrix(edges.len(), 3, unit)?,
        energy: sample.energy,
        forces: Tensor::matrix(n, 3, forces)?,
    })
}

/// Positions of each parameter in manifest order.
#[derive(Debug, Clone)]
struct Layout {
    blocks: usize,
    mlp_layers: usize,
}

impl Layout {
    fn new(config: &ModelConfig) -> Self {
        Layout {
            blocks: config.blocks as usize,
            mlp_layers: config.mlp_layers as usize,
        }
    }
    const EMBED_SPECIES: usize = 0;
    const EMBED_EDGE: usize = 1;
    fn block(&self, k: usize) -> usize {
        3 + 6 * (k - 1)
    }
    fn mlp(&self, l: usize) -> usize {
        3 + 6 * (self.blocks - 1) + 2 * l
    }
    fn energy_head(&self) -> usize {
        self.mlp(self.mlp_layers)
    }
    fn force_head(&self) -> usize {
        self.energy_head() + 2
    }
}

/// Tape handles for every intermediate the distillation and relevance code
/// needs.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub node_features: Vec<Var>,
    pub edge_features: Vec<Var>,
    pub concat: Var,
    pub mlp_outputs: Vec<Var>,
    pub energy: Var,
    pub forces: Var,
}

/// Places all parameters on the tape, trainable or constant.
pub fn params_on_tape(tape: &mut Tape, ckpt: &Checkpoint, trainable: bool) -> Vec<Var> {
    ckpt.tensors()
        .map(|t| tape.leaf(t.clone(), trainable))
        .collect()
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

fn silu_affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = affine(tape, x, w, b)?;
    Ok(tape.silu(y))
}

/// Feature extractor: returns per-block node features, per-interaction-block
/// edge features and their node-feature concatenation.
pub fn features_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    params: &[Var],
    graph: &Graph,
) -> Result<(Vec<Var>, Vec<Var>, Var)> {
    let lay = Layout::new(config);
    let rbf = tape.constant(graph.rbf.clone());
    let mut h = tape.gather(params[Layout::EMBED_SPECIES], graph.species.clone())?;
    let hs = tape.gather(h, graph.senders.clone())?;
    let hr = tape.gather(h, graph.receivers.clone())?;
    let e_in = tape.concat(&[hs, hr, rbf])?;
    let mut m = silu_affine(
        tape,
        e_in,
        params[Layout::EMBED_EDGE],
        params[Layout::EMBED_EDGE + 1],
    )?;

    let mut node = vec![h];
    let mut edge = Vec::with_capacity(lay.blocks - 1);
    for k in 1..lay.blocks {
        let p = lay.block(k);
        let hs = tape.gather(h, graph.senders.clone())?;
        let hr = tape.gather(h, graph.receivers.clone())?;
        let e_in = tape.concat(&[m, hs, hr, rbf])?;
        m = silu_affine(tape, e_in, params[p], params[p + 1])?;
        let agg = tape.scatter_add(m, graph.receivers.clone(), graph.n_atoms)?;
        let u = silu_affine(tape, agg, params[p + 2], params[p + 3])?;
        let dh = affine(tape, u, params[p + 4], params[p + 5])?;
        h = tape.add(h, dh)?;
        node.push(h);
        edge.push(m);
    }
    let concat = tape.concat(&node)?;
    Ok((node, edge, concat))
}

/// FinalMLP and heads on a concatenated feature matrix. `edge_last` is the
/// deepest interaction block's edge features.
pub fn head_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    params: &[Var],
    graph: &Graph,
    concat: Var,
    edge_last: Var,
) -> Result<(Vec<Var>, Var, Var)> {
    let lay = Layout::new(config);
    let mut x = concat;
    let mut mlp = Vec::with_capacity(lay.mlp_layers);
    for l in 0..lay.mlp_layers {
        let p = lay.mlp(l);
        x = silu_affine(tape, x, params[p], params[p + 1])?;
        mlp.push(x);
    }
    let eh = lay.energy_head();
    let per_atom = affine(tape, x, params[eh], params[eh + 1])?;
    let energy = tape.sum(per_atom);

    let fh = lay.force_head();
    let gs = tape.gather(x, graph.senders.clone())?;
    let gr = tape.gather(x, graph.receivers.clone())?;
    let f_in = tape.concat(&[gs, gr, edge_last])?;
    let hidden = silu_affine(tape, f_in, params[fh], params[fh + 1])?;
    let phi = affine(tape, hidden, params[fh + 2], params[fh + 3])?;
    let unit = tape.constant(graph.unit_vectors.clone());
    let contrib = tape.mul_col(unit, phi)?;
    let forces = tape.scatter_add(contrib, graph.receivers.clone(), graph.n_atoms)?;
    Ok((mlp, energy, forces))
}

pub fn forward_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    params: &[Var],
    graph: &Graph,
) -> Result<ForwardVars> {
    let (node_features, edge_features, concat) = features_on_tape(tape, config, params, graph)?;
    let edge_last = *edge_features.last().expect("b >= 2");
    let (mlp_outputs, energy, forces) =
        head_on_tape(tape, config, params, graph, concat, edge_last)?;
    Ok(ForwardVars {
        node_features,
        edge_features,
        concat,
        mlp_outputs,
        energy,
        forces,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub energy: Var,
    pub force: Var,
}

/// `L_E = |E_hat - E| / n`, `L_F = mean |F_hat - F|`.
pub fn loss_on_tape(
    tape: &mut Tape,
    energy: Var,
    forces: Var,
    graph: &Graph,
    weights: LossWeights,
) -> Result<LossVars> {
    let e_target = tape.constant(Tensor::scalar(graph.energy));
    let e_abs = tape.l1_loss(energy, e_target)?;
    let l_e = tape.scale(e_abs, 1.0 / graph.n_atoms as f64);
    let f_target = tape.constant(graph.forces.clone());
    let l_f = tape.l1_loss(forces, f_target)?;
    let a = tape.scale(l_e, weights.alpha_e);
    let b = tape.scale(l_f, weights.alpha_f);
    let total = tape.add(a, b)?;
    Ok(LossVars {
        total,
        energy: l_e,
        force: l_f,
    })
}

/// Per-block features and their concatenation `f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// `b` arrays of shape `[n, d]`, embedding first.
    pub block_node_features: Vec<Tensor>,
    /// `b - 1` arrays of shape `[n_e, d_e]`.
    pub block_edge_features: Vec<Tensor>,
    /// `[n, d * b]`.
    pub concatenated: Tensor,
    pub partition_width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub energy: f64,
    /// `[n, 3]`.
    pub forces: Tensor,
    pub features: FeatureBundle,
    /// Outputs of `g_1 .. g_m`, each `[n, d]`.
    pub mlp_layer_outputs: Vec<Tensor>,
}

impl Prediction {
    pub fn from_tape(tape: &Tape, fv: &ForwardVars, partition_width: usize) -> Self {
        let val = |v: &Var| tape.value(*v).clone();
        Prediction {
            energy: tape.value(fv.energy).item().expect("scalar energy"),
            forces: val(&fv.forces),
            features: FeatureBundle {
                block_node_features: fv.node_features.iter().map(val).collect(),
                block_edge_features: fv.edge_features.iter().map(val).collect(),
                concatenated: val(&fv.concat),
                partition_width,
            },
            mlp_layer_outputs: fv.mlp_outputs.iter().map(val).collect(),
        }
    }
}

pub fn forward_features(
    ckpt: &Checkpoint,
    sample: &MolecularSample,
    edges: &EdgeList,
) -> Result<FeatureBundle> {
    let graph = prepare(ckpt.config(), sample, edges)?;
    let mut tape = Tape::new();
    let params = params_on_tape(&mut tape, ckpt, false);
    let (node, edge, concat) = features_on_tape(&mut tape, ckpt.config(), &params, &graph)?;
    Ok(FeatureBundle {
        block_node_features: node.iter().map(|v| tape.value(*v).clone()).collect(),
        block_edge_features: edge.iter().map(|v| tape.value(*v).clone()).collect(),
        concatenated: tape.value(concat).clone(),
        partition_width: ckpt.config().node_dim as usize,
    })
}

/// Prediction and loss for a prepared graph.
pub fn predict_graph(
    ckpt: &Checkpoint,
    graph: &Graph,
    weights: LossWeights,
) -> Result<(Prediction, f64)> {
    let mut tape = Tape::new();
    let params = params_on_tape(&mut tape, ckpt, false);
    let fv = forward_on_tape(&mut tape, ckpt.config(), &params, graph)?;
    let loss = loss_on_tape(&mut tape, fv.energy, fv.forces, graph, weights)?;
    let pred = Prediction::from_tape(&tape, &fv, ckpt.config().node_dim as usize);
    let l0 = tape.value(loss.total).item().expect("scalar loss");
    Ok((pred, l0))
}

pub fn predict(
    ckpt: &Checkpoint,
    sample: &MolecularSample,
    edges: &EdgeList,
    weights: LossWeights,
) -> Result<(Prediction, f64)> {
    let graph = prepare(ckpt.config(), sample, edges)?;
    predict_graph(ckpt, &graph, weights)
}

/// FinalMLP as a pure function of a concatenated feature matrix.
pub fn final_mlp(ckpt: &Checkpoint, concatenated: &Tensor) -> Result<Vec<Tensor>> {
    let cfg = ckpt.config();
    let lay = Layout::new(cfg);
    let mut tape = Tape::new();
    let params = params_on_tape(&mut tape, ckpt, false);
    let mut x = tape.constant(concatenated.clone());
    let mut out = Vec::with_capacity(lay.mlp_layers);
    for l in 0..lay.mlp_layers {
        let p = lay.mlp(l);
        x = silu_affine(&mut tape, x, params[p], params[p + 1])?;
        out.push(tape.value(x).clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_edges;

    fn small_config(blocks: u32, d: u32) -> ModelConfig {
        ModelConfig {
            blocks,
            mlp_layers: 2,
            node_dim: d,
            edge_dim: 3,
            n_rbf: 4,
            cutoff: 2.0,
            species_count: 2,
            seed: 3,
        }
    }

    fn triangle() -> MolecularSample {
        MolecularSample::new(
            vec![1, 2, 1],
            vec![[0.0, 0.0, 0.0], [1.1, 0.0, 0.0], [0.3, 0.9, 0.2]],
            -1.5,
            vec![[0.1, 0.2, 0.0], [-0.3, 0.0, 0.1], [0.2, -0.2, -0.1]],
        )
        .unwrap()
    }

    #[test]
    fn concatenated_shape() {
        let ckpt = init_checkpoint(&small_config(2, 4)).unwrap();
        let s = triangle();
        let e = build_edges(&s.positions, 2.0).unwrap();
        let f = forward_features(&ckpt, &s, &e).unwrap();
        assert_eq!(f.concatenated.shape(), &[3, 8]);
        assert_eq!(f.block_node_features.len(), 2);
        assert_eq!(f.block_edge_features.len(), 1);
        for (i, block) in f.block_node_features.iter().enumerate() {
            assert_eq!(&f.concatenated.slice_cols(4 * i, 4 * (i + 1)), block);
        }
    }

    #[test]
    fn seven_block_concat_width() {
        let ckpt = init_checkpoint(&small_config(7, 4)).unwrap();
        let s = triangle();
        let e = build_edges(&s.positions, 2.0).unwrap();
        let f = forward_features(&ckpt, &s, &e).unwrap();
        assert_eq!(f.concatenated.shape(), &[3, 28]);
    }

    #[test]
    fn manifest_group_counts() {
        let cfg = ModelConfig::default();
        let m = manifest(&cfg);
        let mut inter: Vec<usize> = m
            .iter()
            .filter_map(|s| match s.group {
                ParamGroup::Interaction(k) => Some(k),
                _ => None,
            })
            .collect();
        inter.dedup();
        assert_eq!(inter, vec![1, 2, 3, 4, 5, 6]);
        let mlp = m
            .iter()
            .filter(|s| s.name.starts_with("final_mlp") && !s.is_bias())
            .count();
        assert_eq!(mlp, 5);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::default();
        assert_eq!(
            init_checkpoint(&cfg).unwrap(),
            init_checkpoint(&cfg).unwrap()
        );
        let other = init_checkpoint(&ModelConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(init_checkpoint(&cfg).unwrap(), other);
    }

    #[test]
    fn biases_start_at_zero() {
        let ckpt = init_checkpoint(&ModelConfig::default()).unwrap();
        for (name, t) in ckpt.params() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|v| *v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn species_out_of_range() {
        let ckpt = init_checkpoint(&small_config(2, 4)).unwrap();
        let mut s = triangle();
        s.atomic_numbers[1] = 3;
        let e = build_edges(&s.positions, 2.0).unwrap();
        assert!(matches!(
            forward_features(&ckpt, &s, &e),
            Err(Error::SpeciesOutOfRange { species: 3, .. })
        ));
    }

    #[test]
    fn isolated_atoms_rejected() {
        let ckpt = init_checkpoint(&small_config(2, 4)).unwrap();
        let s = triangle();
        let e = build_edges(&s.positions, 0.1).unwrap();
        assert_eq!(forward_features(&ckpt, &s, &e), Err(Error::EmptyEdges));
    }

    #[test]
    fn exact_prediction_gives_zero_loss() {
        let ckpt = init_checkpoint(&small_config(2, 4)).unwrap();
        let s = triangle();
        let e = build_edges(&s.positions, 2.0).unwrap();
        let (p, _) = predict(&ckpt, &s, &e, LossWeights::default()).unwrap();
        let mut exact = s.clone();
        exact.energy = p.energy;
        for (i, f) in exact.forces.iter_mut().enumerate() {
            f.copy_from_slice(p.forces.row(i));
        }
        let (_, l0) = predict(&ckpt, &exact, &e, LossWeights::default()).unwrap();
        assert_eq!(l0, 0.0);
    }

    #[test]
    fn zero_force_weight_ignores_forces() {
        let ckpt = init_checkpoint(&small_config(2, 4)).unwrap();
        let s = triangle();
        let e = build_edges(&s.positions, 2.0).unwrap();
        let w = LossWeights::new(1.0, 0.0).unwrap();
        let (_, a) = predict(&ckpt, &s, &e, w).unwrap();
        let mut t = s.clone();
        t.forces[0][1] += 3.0;
        let (_, b) = predict(&ckpt, &t, &e, w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_is_reproducible() {
        let s = triangle();
        let e = build_edges(&s.positions, 2.0).unwrap();
        let run = || {
            let ckpt = init_checkpoint(&small_config(3, 4)).unwrap();
            predict(&ckpt, &s, &e, LossWeights::default()).unwrap().1
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn loss_weights_validated() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let ckpt = init_checkpoint(&small_config(3, 4)).unwrap();
        let params = ckpt.params().to_vec();
        let err = Checkpoint::from_parts(small_config(2, 4), params).unwrap_err();
        assert!(matches!(err, Error::Manifest { .. }));
    }

    #[test]
    fn rbf_vanishes_at_cutoff() {
        assert!(radial_basis(2.0, 2.0, 4).iter().all(|v| *v == 0.0));
        assert!(radial_basis(1.0, 2.0, 4).iter().all(|v| *v > 0.0));
    }
}

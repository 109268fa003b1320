//! GradCAM block relevance over the concatenated block features.
//!
//! For each sample the concatenation `f` is placed on a fresh tape as a
//! leaf, FinalMLP and the heads are run on it, and the loss gradient with
//! respect to `f` gives the map `r = relu(f * dL0/df)`. Column slice `i` of
//! `r` belongs to block `i`; its mean over features and atoms is the
//! sample's raw score, and raw scores are averaged over samples and then
//! normalized to sum to one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{build_edges, MolecularSample};
use crate::error::{Error, Result};
use crate::model::{
    features_on_tape, head_on_tape, loss_on_tape, params_on_tape, prepare, Checkpoint, Graph,
    LossWeights,
};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRelevance {
    /// Normalized scores, index 0 is the embedding.
    pub scores: Vec<f64>,
    /// Sample-averaged scores before normalization.
    pub raw_scores: Vec<f64>,
    pub sample_count: usize,
}

impl BlockRelevance {
    pub fn from_raw(raw_scores: Vec<f64>, sample_count: usize) -> Result<Self> {
        if raw_scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("raw relevance {raw_scores:?}")));
        }
        let total: f64 = raw_scores.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateRelevance);
        }
        Ok(BlockRelevance {
            scores: raw_scores.iter().map(|r| r / total).collect(),
            raw_scores,
            sample_count,
        })
    }

    /// Relevance over the union of the two sample sets.
    pub fn merge(&self, other: &BlockRelevance) -> Result<BlockRelevance> {
        if self.raw_scores.len() != other.raw_scores.len() {
            return Err(Error::invalid("block counts differ"));
        }
        let (na, nb) = (self.sample_count as f64, other.sample_count as f64);
        let raw = self
            .raw_scores
            .iter()
            .zip(&other.raw_scores)
            .map(|(a, b)| (na * a + nb * b) / (na + nb))
            .collect();
        BlockRelevance::from_raw(raw, self.sample_count + other.sample_count)
    }
}

/// The relevance map `relu(f * grad)` for one graph and the gradient it was
/// built from.
pub fn relevance_map(
    ckpt: &Checkpoint,
    graph: &Graph,
    weights: LossWeights,
) -> Result<(Tensor, Tensor)> {
    let cfg = ckpt.config();
    let mut tape = Tape::new();
    let params = params_on_tape(&mut tape, ckpt, false);
    let (_, edges, concat) = features_on_tape(&mut tape, cfg, &params, graph)?;
    let f = tape.param(tape.value(concat).clone());
    let edge_last = *edges.last().expect("b >= 2");
    let (_, energy, forces) = head_on_tape(&mut tape, cfg, &params, graph, f, edge_last)?;
    let loss = loss_on_tape(&mut tape, energy, forces, graph, weights)?;
    tape.backward(loss.total)?;
    let grad = tape.grad(f).expect("f is a parameter");
    if !grad.is_finite() {
        return Err(Error::NonFinite("relevance gradient".into()));
    }
    let fv = tape.value(f);
    let data = fv
        .data()
        .iter()
        .zip(grad.data())
        .map(|(x, g)| (x * g).max(0.0))
        .collect();
    Ok((Tensor::new(fv.shape().to_vec(), data)?, grad))
}

/// Mean of each width-`d` column partition over features and atoms.
pub fn partition_means(map: &Tensor, width: usize) -> Vec<f64> {
    let blocks = map.cols() / width;
    let rows = map.rows();
    let mut out = vec![0.0; blocks];
    for r in 0..rows {
        for (i, chunk) in map.row(r).chunks(width).enumerate() {
            out[i] += chunk.iter().sum::<f64>();
        }
    }
    let denom = (rows * width) as f64;
    out.iter_mut().for_each(|v| *v /= denom);
    out
}

pub fn sample_raw_scores(
    ckpt: &Checkpoint,
    graph: &Graph,
    weights: LossWeights,
) -> Result<Vec<f64>> {
    let (map, _) = relevance_map(ckpt, graph, weights)?;
    Ok(partition_means(&map, ckpt.config().node_dim as usize))
}

/// Relevance over prepared graphs. Per-sample scores are sorted before
/// summation so the result does not depend on sample order.
pub fn block_relevance_graphs(
    ckpt: &Checkpoint,
    graphs: &[Graph],
    weights: LossWeights,
) -> Result<BlockRelevance> {
    if graphs.is_empty() {
        return Err(Error::invalid("relevance needs at least one sample"));
    }
    let mut per_sample = graphs
        .iter()
        .map(|g| sample_raw_scores(ckpt, g, weights))
        .collect::<Result<Vec<_>>>()?;
    per_sample.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let blocks = ckpt.config().blocks as usize;
    let mut raw = vec![0.0; blocks];
    for s in &per_sample {
        raw.iter_mut().zip(s).for_each(|(r, v)| *r += v);
    }
    let n = graphs.len() as f64;
    raw.iter_mut().for_each(|r| *r /= n);
    BlockRelevance::from_raw(raw, graphs.len())
}

pub fn block_relevance(
    ckpt: &Checkpoint,
    samples: &[MolecularSample],
    weights: LossWeights,
) -> Result<BlockRelevance> {
    let graphs = samples
        .iter()
        .map(|s| {
            let edges = build_edges(&s.positions, ckpt.config().cutoff)?;
            prepare(ckpt.config(), s, &edges)
        })
        .collect::<Result<Vec<_>>>()?;
    block_relevance_graphs(ckpt, &graphs, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let r = BlockRelevance::from_raw(vec![1.0, 3.0], 2).unwrap();
        assert_eq!(r.scores, vec![0.25, 0.75]);
    }

    #[test]
    fn zero_raw_is_degenerate() {
        assert_eq!(
            BlockRelevance::from_raw(vec![0.0, 0.0], 1),
            Err(Error::DegenerateRelevance)
        );
    }

    #[test]
    fn merge_weights_by_sample_count() {
        let a = BlockRelevance::from_raw(vec![1.0, 1.0], 1).unwrap();
        let b = BlockRelevance::from_raw(vec![4.0, 1.0], 3).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.raw_scores, vec![3.25, 1.0]);
        assert_eq!(m.sample_count, 4);
    }

    #[test]
    fn partition_means_by_block() {
        let map = Tensor::matrix(2, 4, vec![1.0, 3.0, 0.0, 0.0, 1.0, 3.0, 2.0, 2.0]).unwrap();
        assert_eq!(partition_means(&map, 2), vec![2.0, 1.0]);
    }
}

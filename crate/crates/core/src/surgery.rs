//! Block removal and FinalMLP repair, plus closed-form parameter accounting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{init_tensor, manifest, Checkpoint, ModelConfig, ParamGroup};
use crate::rng;
use crate::tensor::Tensor;

/// How the first FinalMLP layer is repaired after blocks are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Keep the pre-trained rows belonging to retained blocks and the bias.
    Sliced,
    /// Fresh Glorot weights and zero bias at the reduced width.
    Random { seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Sliced => "sliced",
            Strategy::Random { .. } => "random",
        }
    }
}

/// Which blocks survive a reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionPlan {
    pub strategy: Strategy,
    /// Strictly ascending retained block indices; always starts with 0.
    pub kept_blocks: Vec<usize>,
    pub b_prime: usize,
}

impl ReductionPlan {
    pub fn new(blocks: usize, kept_blocks: Vec<usize>, strategy: Strategy) -> Result<Self> {
        if kept_blocks.first() != Some(&0) {
            return Err(Error::EmbeddingNotRemovable);
        }
        if kept_blocks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("kept blocks must be strictly ascending"));
        }
        if kept_blocks.len() < 2 {
            return Err(Error::invalid("at least one interaction block must remain"));
        }
        if *kept_blocks.last().expect("nonempty") >= blocks || kept_blocks.len() >= blocks {
            return Err(Error::invalid(format!(
                "plan {kept_blocks:?} is not a reduction of a {blocks}-block model"
            )));
        }
        let b_prime = kept_blocks.len();
        Ok(ReductionPlan {
            strategy,
            kept_blocks,
            b_prime,
        })
    }

    /// Keep blocks `0..b_prime`.
    pub fn trailing(blocks: usize, b_prime: usize, strategy: Strategy) -> Result<Self> {
        if b_prime >= blocks {
            return Err(Error::invalid(format!(
                "b' = {b_prime} must be below b = {blocks}"
            )));
        }
        if b_prime < 2 {
            return Err(Error::invalid("b' must be at least 2"));
        }
        ReductionPlan::new(blocks, (0..b_prime).collect(), strategy)
    }

    /// Drop exactly one interaction block.
    pub fn ablate(blocks: usize, block_index: usize, strategy: Strategy) -> Result<Self> {
        if block_index == 0 {
            return Err(Error::EmbeddingNotRemovable);
        }
        if block_index >= blocks {
            return Err(Error::invalid(format!(
                "block {block_index} does not exist in a {blocks}-block model"
            )));
        }
        ReductionPlan::new(
            blocks,
            (0..blocks).filter(|&i| i != block_index).collect(),
            strategy,
        )
    }
}

/// Builds the reduced checkpoint. Retained interaction blocks are renumbered
/// contiguously, so block `k + 1` consumes the output of block `k - 1` when
/// block `k` is removed.
pub fn apply_plan(ckpt: &Checkpoint, plan: &ReductionPlan) -> Result<Checkpoint> {
    let old = ckpt.config();
    let d = old.node_dim as usize;
    let config = ModelConfig {
        blocks: plan.b_prime as u32,
        ..*old
    };
    let mut params = Vec::new();
    for spec in manifest(&config) {
        let tensor = match spec.group {
            ParamGroup::Interaction(k) => {
                let src = spec.name.replacen(
                    &format!("interaction.{k}."),
                    &format!("interaction.{}.", plan.kept_blocks[k]),
                    1,
                );
                fetch(ckpt, &src)?.clone()
            }
            ParamGroup::FinalMlp(0) => match plan.strategy {
                Strategy::Sliced if spec.is_bias() => fetch(ckpt, &spec.name)?.clone(),
                Strategy::Sliced => {
                    let full = fetch(ckpt, &spec.name)?;
                    let mut rows = Vec::with_capacity(plan.b_prime * d);
                    for &blk in &plan.kept_blocks {
                        rows.extend(blk * d..(blk + 1) * d);
                    }
                    full.select_rows(&rows)
                }
                Strategy::Random { seed } => init_tensor(&spec, &mut rng::seeded(seed)),
            },
            _ => fetch(ckpt, &spec.name)?.clone(),
        };
        params.push((spec.name, tensor));
    }
    Checkpoint::from_parts(config, params)
}

fn fetch<'a>(ckpt: &'a Checkpoint, name: &str) -> Result<&'a Tensor> {
    ckpt.get(name).ok_or_else(|| Error::Manifest {
        name: String::from(name),
        detail: String::from("missing from source checkpoint"),
    })
}

/// Removes the last `b - b_prime` blocks; `b_prime` counts the embedding.
pub fn reduce_blocks(ckpt: &Checkpoint, b_prime: usize, strategy: Strategy) -> Result<Checkpoint> {
    let plan = ReductionPlan::trailing(ckpt.config().blocks as usize, b_prime, strategy)?;
    apply_plan(ckpt, &plan)
}

/// Removes one interaction block (`1 <= block_index <= b - 1`).
pub fn ablate_block(
    ckpt: &Checkpoint,
    block_index: usize,
    strategy: Strategy,
) -> Result<Checkpoint> {
    let plan = ReductionPlan::ablate(ckpt.config().blocks as usize, block_index, strategy)?;
    apply_plan(ckpt, &plan)
}

/// Interaction blocks in removal order: ascending relevance, ties broken
/// toward the deeper block. The embedding (index 0) is never listed.
pub fn pruning_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)));
    idx
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCounts {
    pub groups: Vec<(ParamGroup, usize)>,
    pub total: usize,
}

impl ParamCounts {
    pub fn group(&self, g: ParamGroup) -> usize {
        self.groups
            .iter()
            .find(|(k, _)| *k == g)
            .map_or(0, |(_, c)| *c)
    }
}

/// Closed-form parameter counts per group.
pub fn param_count(config: &ModelConfig) -> ParamCounts {
    let d = config.node_dim as usize;
    let de = config.edge_dim as usize;
    let nr = config.n_rbf as usize;
    let s = config.species_count as usize;
    let b = config.blocks as usize;

    let embedding = s * d + (2 * d + nr) * de + de;
    let block = (de + 2 * d + nr) * de + de + de * d + d + d * d + d;
    let mut groups = Vec::new();
    groups.push((ParamGroup::Embedding, embedding));
    for k in 1..b {
        groups.push((ParamGroup::Interaction(k), block));
    }
    for l in 0..config.mlp_layers as usize {
        let fan_in = if l == 0 { d * b } else { d };
        groups.push((ParamGroup::FinalMlp(l), fan_in * d + d));
    }
    groups.push((ParamGroup::EnergyHead, d + 1));
    groups.push((ParamGroup::ForceHead, (2 * d + de) * d + d + d + 1));
    let total = groups.iter().map(|(_, c)| c).sum();
    ParamCounts { groups, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_checkpoint;
    use alloc::vec;

    fn teacher() -> Checkpoint {
        init_checkpoint(&ModelConfig {
            blocks: 7,
            mlp_layers: 2,
            node_dim: 4,
            edge_dim: 3,
            n_rbf: 3,
            cutoff: 2.0,
            species_count: 2,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn reduce_bounds() {
        let t = teacher();
        assert!(reduce_blocks(&t, 7, Strategy::Sliced).is_err());
        assert!(reduce_blocks(&t, 1, Strategy::Sliced).is_err());
        assert!(reduce_blocks(&t, 2, Strategy::Sliced).is_ok());
    }

    #[test]
    fn sliced_keeps_leading_rows_and_bias() {
        let t = teacher();
        let r = reduce_blocks(&t, 5, Strategy::Sliced).unwrap();
        let w = r.get("final_mlp.0.weight").unwrap();
        assert_eq!(w.shape(), &[20, 4]);
        assert_eq!(w.data(), &t.get("final_mlp.0.weight").unwrap().data()[..80]);
        assert_eq!(r.get("final_mlp.0.bias"), t.get("final_mlp.0.bias"));
        assert_eq!(
            r.get("interaction.4.edge.weight"),
            t.get("interaction.4.edge.weight")
        );
        assert!(r.get("interaction.5.edge.weight").is_none());
    }

    #[test]
    fn random_is_seeded_and_local() {
        let t = teacher();
        let a = reduce_blocks(&t, 5, Strategy::Random { seed: 1 }).unwrap();
        let b = reduce_blocks(&t, 5, Strategy::Random { seed: 1 }).unwrap();
        let c = reduce_blocks(&t, 5, Strategy::Random { seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.get("final_mlp.0.weight"), c.get("final_mlp.0.weight"));
        for ((name, x), (_, y)) in a.params().iter().zip(c.params()) {
            if name != "final_mlp.0.weight" {
                assert_eq!(x, y, "{name}");
            }
        }
    }

    #[test]
    fn ablating_last_equals_trailing_reduction() {
        let t = teacher();
        for s in [Strategy::Sliced, Strategy::Random { seed: 4 }] {
            assert_eq!(
                ablate_block(&t, 6, s).unwrap(),
                reduce_blocks(&t, 6, s).unwrap()
            );
        }
    }

    #[test]
    fn embedding_not_removable() {
        assert_eq!(
            ablate_block(&teacher(), 0, Strategy::Sliced),
            Err(Error::EmbeddingNotRemovable)
        );
    }

    #[test]
    fn interior_ablation_renumbers() {
        let t = teacher();
        let r = ablate_block(&t, 2, Strategy::Sliced).unwrap();
        assert_eq!(r.config().blocks, 6);
        assert_eq!(
            r.get("interaction.1.edge.weight"),
            t.get("interaction.1.edge.weight")
        );
        assert_eq!(
            r.get("interaction.2.edge.weight"),
            t.get("interaction.3.edge.weight")
        );
        let w = r.get("final_mlp.0.weight").unwrap();
        let full = t.get("final_mlp.0.weight").unwrap();
        assert_eq!(&w.data()[..8 * 4], &full.data()[..8 * 4]);
        assert_eq!(&w.data()[8 * 4..], &full.data()[12 * 4..]);
    }

    #[test]
    fn sliced_reduction_composes() {
        let t = teacher();
        let two_step = reduce_blocks(
            &reduce_blocks(&t, 5, Strategy::Sliced).unwrap(),
            3,
            Strategy::Sliced,
        )
        .unwrap();
        assert_eq!(two_step, reduce_blocks(&t, 3, Strategy::Sliced).unwrap());
    }

    #[test]
    fn closed_form_count_matches_manifest() {
        for blocks in 2..=7 {
            let cfg = ModelConfig::default().with_blocks(blocks);
            let from_manifest: usize = manifest(&cfg).iter().map(|s| s.numel()).sum();
            assert_eq!(param_count(&cfg).total, from_manifest);
        }
    }

    #[test]
    fn default_reduction_delta() {
        // d = 32, d_e = 16, n_rbf = 8: one interaction block is
        // (16 + 64 + 8) * 16 + 16 + 16 * 32 + 32 + 32 * 32 + 32 = 3024
        let full = param_count(&ModelConfig::default()).total;
        let reduced = param_count(&ModelConfig::default().with_blocks(5)).total;
        assert_eq!(full - reduced, 3024 * 2 + 32 * 2 * 32);
    }

    #[test]
    fn counts_decrease_with_blocks() {
        let counts: Vec<usize> = (3..=7)
            .rev()
            .map(|b| param_count(&ModelConfig::default().with_blocks(b)).total)
            .collect();
        assert!(counts.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn pruning_order_breaks_ties_deeper_first() {
        assert_eq!(pruning_order(&[0.1, 0.3, 0.2, 0.2, 0.05]), vec![4, 3, 2, 1]);
    }

    #[test]
    fn plan_validation() {
        assert!(ReductionPlan::new(5, vec![0, 2, 1], Strategy::Sliced).is_err());
        assert!(ReductionPlan::new(5, vec![1, 2], Strategy::Sliced).is_err());
        assert!(ReductionPlan::new(5, vec![0, 1, 2, 3, 4], Strategy::Sliced).is_err());
        assert_eq!(
            ReductionPlan::new(5, vec![0, 3], Strategy::Sliced)
                .unwrap()
                .b_prime,
            2
        );
    }
}

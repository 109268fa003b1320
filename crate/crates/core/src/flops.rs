//! Closed-form FLOP count of one forward pass: two FLOPs per
//! multiply-accumulate of every affine map. Gathers, scatters, biases and
//! activations are not counted.

use crate::model::ModelConfig;

/// Human-readable formula, used as a report header.
pub const FLOPS_FORMULA: &str = "flops = 2*n_e*(2d+nr)*de \
+ (b-1)*[2*n_e*(de+2d+nr)*de + 2*n*de*d + 2*n*d*d] \
+ 2*n*(d*b)*d + (m-1)*2*n*d*d \
+ 2*n*d + 2*n_e*(2d+de)*d + 2*n_e*d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsBreakdown {
    pub embedding: f64,
    pub interaction: f64,
    pub final_mlp: f64,
    pub heads: f64,
}

impl FlopsBreakdown {
    pub fn total(&self) -> f64 {
        self.embedding + self.interaction + self.final_mlp + self.heads
    }
}

/// Per-sample FLOPs for a graph with `n` atoms and `n_e` directed edges.
/// Fractional sizes are allowed so that dataset means can be used.
pub fn flops_breakdown(config: &ModelConfig, n: f64, n_e: f64) -> FlopsBreakdown {
    let d = config.node_dim as f64;
    let de = config.edge_dim as f64;
    let nr = config.n_rbf as f64;
    let b = config.blocks as f64;
    let m = config.mlp_layers as f64;
    let per_block = 2.0 * n_e * (de + 2.0 * d + nr) * de + 2.0 * n * de * d + 2.0 * n * d * d;
    FlopsBreakdown {
        embedding: 2.0 * n_e * (2.0 * d + nr) * de,
        interaction: (b - 1.0) * per_block,
        final_mlp: 2.0 * n * (d * b) * d + (m - 1.0) * 2.0 * n * d * d,
        heads: 2.0 * n * d + 2.0 * n_e * (2.0 * d + de) * d + 2.0 * n_e * d,
    }
}

pub fn flops_estimate(config: &ModelConfig, n: f64, n_e: f64) -> f64 {
    flops_breakdown(config, n, n_e).total()
}

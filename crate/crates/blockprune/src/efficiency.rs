//! Inference throughput benchmarking and the efficiency table.

use std::time::Instant;

use blockprune_core::data::{build_edges, MolecularSample};
use blockprune_core::flops::flops_estimate;
use blockprune_core::model::{predict, Checkpoint, LossWeights};
use blockprune_core::stats::median;
use blockprune_core::surgery::param_count;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    /// Samples per second, median over timed passes.
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub passes: Vec<f64>,
}

fn run_pass(ckpt: &Checkpoint, samples: &[MolecularSample]) -> Result<()> {
    for s in samples {
        let edges = build_edges(&s.positions, ckpt.config().cutoff)?;
        std::hint::black_box(predict(ckpt, s, &edges, LossWeights::default())?);
    }
    Ok(())
}

/// Times full inference (neighbour list, features, heads) over `samples`.
/// With `workers > 1` the samples are split into contiguous chunks, one
/// thread each, and a pass ends when every worker is done.
pub fn throughput_bench(
    ckpt: &Checkpoint,
    samples: &[MolecularSample],
    warmup_passes: usize,
    timed_passes: usize,
    workers: usize,
) -> Result<Throughput> {
    if samples.is_empty() {
        return Err(Error::Invalid("benchmark needs at least one sample".into()));
    }
    if timed_passes < 3 {
        return Err(Error::Invalid(
            "at least 3 timed passes are required".into(),
        ));
    }
    let workers = workers.clamp(1, samples.len());
    let pass = || -> Result<()> {
        if workers == 1 {
            return run_pass(ckpt, samples);
        }
        let chunk = samples.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = samples
                .chunks(chunk)
                .map(|c| s.spawn(move || run_pass(ckpt, c)))
                .collect();
            handles
                .into_iter()
                .try_for_each(|h| h.join().expect("benchmark worker panicked"))
        })
    };
    for _ in 0..warmup_passes {
        pass()?;
    }
    let mut rates = Vec::with_capacity(timed_passes);
    for _ in 0..timed_passes {
        let t = Instant::now();
        pass()?;
        rates.push(samples.len() as f64 / t.elapsed().as_secs_f64().max(1e-12));
    }
    Ok(Throughput {
        median: median(&rates).expect("nonempty"),
        min: rates.iter().copied().fold(f64::INFINITY, f64::min),
        max: rates.iter().copied().fold(0.0, f64::max),
        passes: rates,
    })
}

/// Mean atom and directed-edge counts at `cutoff`.
pub fn mean_graph_size(samples: &[MolecularSample], cutoff: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Invalid("no samples".into()));
    }
    let mut n = 0usize;
    let mut ne = 0usize;
    for s in samples {
        n += s.n_atoms();
        ne += build_edges(&s.positions, cutoff)?.len();
    }
    let c = samples.len() as f64;
    Ok((n as f64 / c, ne as f64 / c))
}

/// One row of the efficiency table. Deltas are against the full model:
/// absolute differences for throughput and FLOPs, percent for parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    /// Retained interaction blocks.
    pub block_count: usize,
    pub throughput_samples_per_s: f64,
    pub throughput_min: f64,
    pub throughput_max: f64,
    pub flops_per_sample: f64,
    pub parameter_count: usize,
    pub throughput_delta: f64,
    pub flops_delta: f64,
    pub params_pct_delta: f64,
}

/// Builds table rows for the given checkpoints; the first one is the
/// reference for every delta. FLOPs use the samples' mean graph size.
pub fn efficiency_table(
    checkpoints: &[&Checkpoint],
    samples: &[MolecularSample],
    warmup_passes: usize,
    timed_passes: usize,
    workers: usize,
) -> Result<Vec<EfficiencyReport>> {
    let Some(first) = checkpoints.first() else {
        return Ok(Vec::new());
    };
    let (n, ne) = mean_graph_size(samples, first.config().cutoff)?;
    let mut rows: Vec<EfficiencyReport> = Vec::with_capacity(checkpoints.len());
    for ckpt in checkpoints {
        let t = throughput_bench(ckpt, samples, warmup_passes, timed_passes, workers)?;
        let cfg = ckpt.config();
        let row = EfficiencyReport {
            block_count: cfg.interaction_blocks(),
            throughput_samples_per_s: t.median,
            throughput_min: t.min,
            throughput_max: t.max,
            flops_per_sample: flops_estimate(cfg, n, ne),
            parameter_count: param_count(cfg).total,
            throughput_delta: 0.0,
            flops_delta: 0.0,
            params_pct_delta: 0.0,
        };
        rows.push(row);
    }
    let (t0, f0, p0) = (
        rows[0].throughput_samples_per_s,
        rows[0].flops_per_sample,
        rows[0].parameter_count as f64,
    );
    for r in &mut rows {
        r.throughput_delta = r.throughput_samples_per_s - t0;
        r.flops_delta = r.flops_per_sample - f0;
        r.params_pct_delta = 100.0 * (r.parameter_count as f64 - p0) / p0;
    }
    Ok(rows)
}

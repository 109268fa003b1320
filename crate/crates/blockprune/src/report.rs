//! CSV outputs and the `run_manifest` replay file.

use std::path::{Path, PathBuf};

use blockprune_core::relevance::BlockRelevance;
use blockprune_core::training::{EvalMetrics, LogRow};

use crate::efficiency::EfficiencyReport;
use crate::error::{Error, Result};

fn to_csv<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `block_index,label,score`: index 0 is the embedding, labelled `f1`.
pub fn relevance_csv(r: &BlockRelevance) -> Result<String> {
    to_csv(
        &["block_index", "label", "score"],
        r.scores
            .iter()
            .enumerate()
            .map(|(i, s)| [i.to_string(), format!("f{}", i + 1), format!("{s:.6}")]),
    )
}

pub fn train_log_csv(log: &[LogRow]) -> Result<String> {
    to_csv(
        &[
            "step",
            "loss_total",
            "loss_energy",
            "loss_force",
            "loss_kd",
            "val_force_mae",
        ],
        log.iter().map(|r| {
            [
                r.step.to_string(),
                r.loss_total.to_string(),
                r.loss_energy.to_string(),
                r.loss_force.to_string(),
                r.loss_kd.to_string(),
                opt(r.val_force_mae),
            ]
        }),
    )
}

pub fn metrics_csv(rows: &[(&str, EvalMetrics)]) -> Result<String> {
    to_csv(
        &["split", "force_mae", "energy_mae_per_atom", "n_samples"],
        rows.iter().map(|(split, m)| {
            [
                split.to_string(),
                m.force_mae.to_string(),
                m.energy_mae_per_atom.to_string(),
                m.sample_count.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub strategy: String,
    pub blocks: usize,
    pub upstream_force_mae: f64,
    pub delta_vs_teacher: f64,
}

pub fn table1_csv(rows: &[Table1Row]) -> Result<String> {
    to_csv(
        &[
            "strategy",
            "blocks",
            "upstream_force_mae",
            "delta_vs_teacher",
        ],
        rows.iter().map(|r| {
            [
                r.strategy.clone(),
                r.blocks.to_string(),
                r.upstream_force_mae.to_string(),
                r.delta_vs_teacher.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure3Row {
    pub strategy: String,
    pub blocks: usize,
    pub downstream_force_mae: f64,
    pub downstream_energy_mae_per_atom: f64,
}

pub fn figure3_csv(rows: &[Figure3Row]) -> Result<String> {
    to_csv(
        &[
            "strategy",
            "blocks",
            "downstream_force_mae",
            "downstream_energy_mae_per_atom",
        ],
        rows.iter().map(|r| {
            [
                r.strategy.clone(),
                r.blocks.to_string(),
                r.downstream_force_mae.to_string(),
                r.downstream_energy_mae_per_atom.to_string(),
            ]
        }),
    )
}

pub fn table2_csv(rows: &[EfficiencyReport]) -> Result<String> {
    to_csv(
        &[
            "blocks",
            "throughput",
            "throughput_delta",
            "flops",
            "flops_delta",
            "params",
            "params_pct_delta",
        ],
        rows.iter().map(|r| {
            [
                r.block_count.to_string(),
                format!("{:.3}", r.throughput_samples_per_s),
                format!("{:.3}", r.throughput_delta),
                format!("{:.0}", r.flops_per_sample),
                format!("{:.0}", r.flops_delta),
                r.parameter_count.to_string(),
                format!("{:.4}", r.params_pct_delta),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure4Row {
    pub blocks: usize,
    pub wall_clock_s: f64,
    pub val_force_mae: f64,
}

pub fn figure4_csv(rows: &[Figure4Row]) -> Result<String> {
    to_csv(
        &["blocks", "wall_clock_s", "val_force_mae"],
        rows.iter().map(|r| {
            [
                r.blocks.to_string(),
                format!("{:.4}", r.wall_clock_s),
                r.val_force_mae.to_string(),
            ]
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Where the manifest for an output lives: `<dir>/run_manifest` for a
/// directory output, `<file>.run_manifest` otherwise.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run_manifest")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".run_manifest");
        PathBuf::from(s)
    }
}

/// `key=value` lines, in the given order.
pub fn manifest_text(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

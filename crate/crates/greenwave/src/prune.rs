//! Post-training magnitude pruning and the sparsity-performance sweep.
//!
//! Pruning is global: weights from every layer compete in one ranking by
//! absolute value, and the smallest ones get their mask bit cleared. Biases
//! are never pruned. Nets stay dense in memory; the mask is what makes a
//! weight permanently zero.

use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::nn::DenseNet;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("sparsity must lie in [0, 1), got {0}")]
    SparsityOutOfRange(f64),
}

/// Return a copy of `net` with the `floor(sparsity * weight_count)`
/// smallest-magnitude weights masked to zero. Magnitude ties break by
/// (layer, row, column) order. Already-masked weights rank first (their
/// stored value is exactly zero), which makes pruning idempotent and masks
/// nested across increasing sparsity levels.
pub fn prune_global_magnitude(net: &DenseNet, sparsity: f64) -> Result<DenseNet, PruneError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(PruneError::SparsityOutOfRange(sparsity));
    }
    let total = net.weight_count();
    let k = (sparsity * total as f64).floor() as usize;
    let mut pruned = net.clone();
    if k == 0 {
        return Ok(pruned);
    }

    // (|w|, layer, flat index) for every weight in the net.
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for l in 0..net.layer_count() {
        for (i, &w) in net.weights(l).data().iter().enumerate() {
            entries.push((w.abs(), l, i));
        }
    }
    entries.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("weights are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut masks: Vec<Vec<u8>> = (0..net.layer_count()).map(|l| net.mask(l).to_vec()).collect();
    for &(_, l, i) in entries.iter().take(k) {
        masks[l][i] = 0;
    }
    for (l, mask) in masks.into_iter().enumerate() {
        pruned.set_mask(l, mask);
    }
    Ok(pruned)
}

/// Fraction of weights whose mask is zero (biases excluded).
pub fn measured_sparsity(net: &DenseNet) -> f64 {
    let total = net.weight_count();
    if total == 0 {
        return 0.0;
    }
    let zeros: usize = (0..net.layer_count())
        .map(|l| net.mask(l).iter().filter(|&&m| m == 0).count())
        .sum();
    zeros as f64 / total as f64
}

/// One sparsity level's evaluation outcome.
#[derive(Clone, Debug)]
pub struct SparsityEntry {
    pub level: f64,
    pub measured_sparsity: f64,
    /// Field-wise mean of the per-seed evaluation reports.
    pub metrics: MetricsReport,
    /// Mean over seeds of the episode's cumulative reward, summed over
    /// intersections.
    pub mean_reward: f64,
    /// Per-seed rows backing the aggregate: (seed, metrics, reward).
    pub per_seed: Vec<(u64, MetricsReport, f64)>,
}

/// Sweep result: one entry per requested level, sorted ascending, plus the
/// dense (unpruned) baseline.
#[derive(Clone, Debug)]
pub struct SparsityReport {
    pub entries: Vec<SparsityEntry>,
    pub dense: SparsityEntry,
}

impl SparsityReport {
    pub const CSV_HEADER: &'static str =
        "level,measured_sparsity,seed,att,awt,ad,aql,mean_reward";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            for (seed, m, reward) in &e.per_seed {
                out.push_str(&format!(
                    "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    fmt_level(e.level),
                    e.measured_sparsity,
                    seed,
                    m.avg_travel_time,
                    m.avg_waiting_time,
                    m.avg_delay,
                    m.avg_queue_length,
                    reward
                ));
            }
        }
        out
    }

    /// Entry with the best (largest) mean reward; ties go to the lower
    /// sparsity level.
    pub fn best_entry(&self) -> &SparsityEntry {
        self.entries
            .iter()
            .max_by(|a, b| {
                a.mean_reward
                    .partial_cmp(&b.mean_reward)
                    .expect("finite rewards")
                    .then(b.level.partial_cmp(&a.level).expect("finite levels"))
            })
            .expect("sweep has at least one level")
    }
}

fn fmt_level(level: f64) -> String {
    format!("{level:.2}")
}

/// The default sweep grid: 0 to 0.5 in steps of 0.05.
pub fn default_sparsity_levels() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.05).collect()
}

/// Field-wise mean of several reports.
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    assert!(!reports.is_empty(), "cannot average zero reports");
    let n = reports.len() as f64;
    MetricsReport {
        avg_travel_time: reports.iter().map(|r| r.avg_travel_time).sum::<f64>() / n,
        avg_waiting_time: reports.iter().map(|r| r.avg_waiting_time).sum::<f64>() / n,
        avg_delay: reports.iter().map(|r| r.avg_delay).sum::<f64>() / n,
        avg_queue_length: reports.iter().map(|r| r.avg_queue_length).sum::<f64>() / n,
        arrived: (reports.iter().map(|r| r.arrived).sum::<usize>() as f64 / n).round() as usize,
        unfinished: (reports.iter().map(|r| r.unfinished).sum::<usize>() as f64 / n).round()
            as usize,
    }
}

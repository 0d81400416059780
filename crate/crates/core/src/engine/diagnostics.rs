//! Multi-chain convergence statistics: seat histograms, rank-ordered
//! marginals, total variation and convergence-order fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chain::SampleRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagnosticsError {
    #[error("diagnostics need at least 2 chains, got {0}")]
    InsufficientChains(usize),
    #[error("observable index {0} is missing from the records")]
    MissingObservable(usize),
    #[error("chain {0} has no records")]
    EmptyChain(usize),
    #[error("chains disagree on the number of districts")]
    DistrictMismatch,
}

/// Bin counts keyed by bin index.
pub type Histogram = BTreeMap<i64, u64>;

/// Half the L1 distance between the normalized histograms; 0 when both are
/// empty and 1 when exactly one is.
pub fn total_variation(p: &Histogram, q: &Histogram) -> f64 {
    let (np, nq) = (
        p.values().sum::<u64>() as f64,
        q.values().sum::<u64>() as f64,
    );
    match (np > 0.0, nq > 0.0) {
        (false, false) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut l1 = 0.0;
    for (k, &c) in p {
        l1 += (c as f64 / np - q.get(k).map_or(0.0, |&d| d as f64 / nq)).abs();
    }
    for (k, &d) in q {
        if !p.contains_key(k) {
            l1 += d as f64 / nq;
        }
    }
    0.5 * l1
}

fn merge(into: &mut Histogram, from: &Histogram) {
    for (&k, &c) in from {
        *into.entry(k).or_default() += c;
    }
}

/// Per-record statistics of one chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainSeries {
    pub steps: Vec<u64>,
    /// Districts where the first observable exceeds the second.
    pub seats: Vec<usize>,
    /// Share `a / (a + b)` per district, sorted from largest to smallest.
    pub ranked_shares: Vec<Vec<f64>>,
}

impl ChainSeries {
    /// Reads observables `a` and `b` (indices into [`SampleRecord::sums`]).
    pub fn from_records(
        records: &[SampleRecord],
        a: usize,
        b: usize,
    ) -> Result<Self, DiagnosticsError> {
        let mut out = ChainSeries::default();
        for r in records {
            let (va, vb) = match (r.sums.get(a), r.sums.get(b)) {
                (Some(va), Some(vb)) => (va, vb),
                (None, _) => return Err(DiagnosticsError::MissingObservable(a)),
                (_, None) => return Err(DiagnosticsError::MissingObservable(b)),
            };
            out.steps.push(r.step);
            out.seats
                .push(va.iter().zip(vb).filter(|(x, y)| x > y).count());
            let mut shares: Vec<f64> = va
                .iter()
                .zip(vb)
                .map(|(&x, &y)| if x + y > 0.0 { x / (x + y) } else { 0.0 })
                .collect();
            shares.sort_by(|x, y| y.total_cmp(x));
            out.ranked_shares.push(shares);
        }
        Ok(out)
    }

    fn upto(&self, burn_in: u64, proposals: u64) -> impl Iterator<Item = usize> + '_ {
        self.steps
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s >= burn_in && s <= proposals)
            .map(|(i, _)| i)
    }

    pub fn seat_histogram(&self, burn_in: u64, proposals: u64) -> Histogram {
        let mut h = Histogram::new();
        for i in self.upto(burn_in, proposals) {
            *h.entry(self.seats[i] as i64).or_default() += 1;
        }
        h
    }

    /// One histogram of shares per rank, with bins of `bin_width`.
    pub fn rank_histograms(&self, burn_in: u64, proposals: u64, bin_width: f64) -> Vec<Histogram> {
        let ranks = self.ranked_shares.first().map_or(0, Vec::len);
        let mut out = vec![Histogram::new(); ranks];
        for i in self.upto(burn_in, proposals) {
            for (rank, &s) in self.ranked_shares[i].iter().enumerate() {
                *out[rank].entry((s / bin_width).floor() as i64).or_default() += 1;
            }
        }
        out
    }
}

/// Settings of a diagnostics pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub bin_width: f64,
    /// Records before this proposal count are dropped.
    pub burn_in: u64,
    /// Proposal counts at which the TV curves are evaluated; empty means
    /// log-spaced points over the last two decades of the run.
    pub checkpoints: Vec<u64>,
    pub num_checkpoints: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            bin_width: 0.002,
            burn_in: 0,
            checkpoints: Vec::new(),
            num_checkpoints: 12,
        }
    }
}

/// Statistics after a given number of proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub proposals: u64,
    pub max_pairwise_seat_tv: f64,
    pub max_vs_all_seat_tv: f64,
    /// Maximum over chain pairs of the rank-averaged marginal TV.
    pub max_pairwise_marginal_tv: f64,
}

/// Least-squares line through `(ln proposals, ln tv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl PowerFit {
    /// Convergence order: the decay exponent, `-slope`.
    pub fn order(&self) -> f64 {
        -self.slope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub chains: usize,
    pub seat_histograms: Vec<Histogram>,
    pub max_pairwise_seat_tv: f64,
    pub max_vs_all_seat_tv: f64,
    pub max_pairwise_marginal_tv: f64,
    /// Pooled rank-ordered marginals, one histogram per rank.
    pub pooled_marginals: Vec<Histogram>,
    pub curve: Vec<CheckpointRow>,
    pub seat_order: Option<PowerFit>,
    pub marginal_order: Option<PowerFit>,
}

/// Least-squares fit of `ln y` on `ln x` over the points with both positive.
pub fn log_log_fit(points: &[(f64, f64)]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    linear_fit(&pts)
}

/// Ordinary least squares `y = slope·x + intercept`; needs two distinct x.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<PowerFit> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(PowerFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Centered 3-point moving average (the ends use their available neighbors).
pub fn moving_average3(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Whether the sequence never increases.
pub fn is_non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

fn default_checkpoints(last: u64, count: usize) -> Vec<u64> {
    if last == 0 || count == 0 {
        return vec![last];
    }
    let first = (last as f64 / 100.0).max(1.0);
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let t = if count == 1 {
                1.0
            } else {
                i as f64 / (count - 1) as f64
            };
            (first * (last as f64 / first).powf(t)).round() as u64
        })
        .collect();
    out.dedup();
    out
}

fn pairwise_max(hists: &[Histogram]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            best = best.max(total_variation(&hists[i], &hists[j]));
        }
    }
    best
}

fn vs_all_max(hists: &[Histogram]) -> f64 {
    let mut pooled = Histogram::new();
    hists.iter().for_each(|h| merge(&mut pooled, h));
    hists
        .iter()
        .map(|h| total_variation(h, &pooled))
        .fold(0.0, f64::max)
}

fn marginal_max(ranks: &[Vec<Histogram>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..ranks.len() {
        for j in i + 1..ranks.len() {
            let k = ranks[i].len().max(1);
            let mean = ranks[i]
                .iter()
                .zip(&ranks[j])
                .map(|(p, q)| total_variation(p, q))
                .sum::<f64>()
                / k as f64;
            best = best.max(mean);
        }
    }
    best
}

/// Computes the full report over independent chains.
pub fn diagnose(
    chains: &[ChainSeries],
    config: &DiagnosticsConfig,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::InsufficientChains(chains.len()));
    }
    if let Some(i) = chains.iter().position(|c| c.steps.is_empty()) {
        return Err(DiagnosticsError::EmptyChain(i));
    }
    let districts = chains[0].ranked_shares[0].len();
    if chains
        .iter()
        .any(|c| c.ranked_shares.iter().any(|s| s.len() != districts))
    {
        return Err(DiagnosticsError::DistrictMismatch);
    }
    let last = chains
        .iter()
        .map(|c| *c.steps.last().unwrap())
        .min()
        .unwrap_or(0);
    let checkpoints = if config.checkpoints.is_empty() {
        default_checkpoints(last, config.num_checkpoints)
    } else {
        config.checkpoints.clone()
    };

    let at = |proposals: u64| {
        let seats: Vec<Histogram> = chains
            .iter()
            .map(|c| c.seat_histogram(config.burn_in, proposals))
            .collect();
        let ranks: Vec<Vec<Histogram>> = chains
            .iter()
            .map(|c| c.rank_histograms(config.burn_in, proposals, config.bin_width))
            .collect();
        (seats, ranks)
    };

    let curve: Vec<CheckpointRow> = checkpoints
        .iter()
        .map(|&proposals| {
            let (seats, ranks) = at(proposals);
            CheckpointRow {
                proposals,
                max_pairwise_seat_tv: pairwise_max(&seats),
                max_vs_all_seat_tv: vs_all_max(&seats),
                max_pairwise_marginal_tv: marginal_max(&ranks),
            }
        })
        .collect();

    let (seats, ranks) = at(u64::MAX);
    let mut pooled_marginals = vec![Histogram::new(); districts];
    for chain in &ranks {
        for (pooled, h) in pooled_marginals.iter_mut().zip(chain) {
            merge(pooled, h);
        }
    }
    let seat_points: Vec<(f64, f64)> = curve
        .iter()
        .map(|r| (r.proposals as f64, r.max_pairwise_seat_tv))
        .collect();
    let marginal_points: Vec<(f64, f64)> = curve
        .iter()
        .map(|r| (r.proposals as f64, r.max_pairwise_marginal_tv))
        .collect();
    Ok(DiagnosticsReport {
        chains: chains.len(),
        max_pairwise_seat_tv: pairwise_max(&seats),
        max_vs_all_seat_tv: vs_all_max(&seats),
        max_pairwise_marginal_tv: marginal_max(&ranks),
        seat_histograms: seats,
        pooled_marginals,
        curve,
        seat_order: log_log_fit(&seat_points),
        marginal_order: log_log_fit(&marginal_points),
    })
}

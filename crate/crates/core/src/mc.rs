//! Discrete Gaussian noise and Monte Carlo likelihood-ratio ROC estimation.

use crate::census::{self, AllocationTable, GeoLevel, QueryKind, Scenario};
use crate::tradeoff::{TradeoffCurve, TradeoffError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use thiserror::Error;

/// Minimum number of draws per arm accepted by [`mc_roc`].
pub const MIN_SAMPLES: usize = 1000;
/// Work is split into this many RNG streams regardless of thread count.
pub const SHARDS: u64 = 64;
/// Sampler support is truncated at ceil(TAIL_SIGMAS · σ).
const TAIL_SIGMAS: f64 = 12.0;
/// LLR values this close (relative) are the same lattice point reached by
/// different summation orders.
const TIE_TOL: f64 = 1e-9;

/// Walks two sorted arrays threshold by threshold, merging near-ties, and
/// reports the counts at or below each threshold.
fn sweep(a: &[f64], b: &[f64], mut visit: impl FnMut(usize, usize)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let t = t + TIE_TOL * (1.0 + t.abs());
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        visit(i, j);
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("parameter `{name}` out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} observations, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteGaussParams {
    sigma2: f64,
}

impl DiscreteGaussParams {
    pub fn new(sigma2: f64) -> Result<Self, McError> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(McError::BadParameter { name: "sigma2", value: sigma2 });
        }
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// log Σ_k e^{−k²/(2σ²)}, summed outward until terms drop below 1e-18 of the total.
    pub fn log_normalizer(&self) -> f64 {
        let mut sum = 1.0;
        let mut k = 1.0f64;
        loop {
            let t = 2.0 * (-k * k / (2.0 * self.sigma2)).exp();
            sum += t;
            if t < 1e-18 * sum {
                break;
            }
            k += 1.0;
        }
        sum.ln()
    }
}

pub fn dgauss_pmf(k: i64, params: &DiscreteGaussParams) -> f64 {
    let k = k as f64;
    (-k * k / (2.0 * params.sigma2) - params.log_normalizer()).exp()
}

/// Inversion sampler over a cumulative table on [−K, K], K = ceil(12σ).
#[derive(Debug, Clone)]
pub struct DiscreteGaussSampler {
    offset: i64,
    cumulative: Vec<f64>,
}

impl DiscreteGaussSampler {
    pub fn new(params: &DiscreteGaussParams) -> Self {
        let k_max = (TAIL_SIGMAS * params.sigma2.sqrt()).ceil() as i64;
        let weights: Vec<f64> =
            (-k_max..=k_max).map(|k| (-((k * k) as f64) / (2.0 * params.sigma2)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cumulative.last_mut().expect("non-empty support") = 1.0;
        Self { offset: k_max, cumulative }
    }

    pub fn support(&self) -> (i64, i64) {
        (-self.offset, self.offset)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u) as i64 - self.offset
    }
}

pub fn dgauss_sample<R: Rng + ?Sized>(params: &DiscreteGaussParams, rng: &mut R) -> i64 {
    DiscreteGaussSampler::new(params).sample(rng)
}

/// One released query whose answers differ between the neighbor pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectedQuery {
    pub rho_star: f64,
    /// 1 for a single total, 2 for a histogram (one cell +1, one cell −1).
    pub delta_answers: u32,
}

impl AffectedQuery {
    /// Per-cell variance so that the query's zCDP cost is exactly ρ*.
    pub fn sigma2(&self) -> f64 {
        self.delta_answers as f64 / (2.0 * self.rho_star)
    }

    /// Difference D2 − D1 for each affected cell.
    pub fn shifts(&self) -> impl Iterator<Item = i64> {
        (0..self.delta_answers).map(|i| if i % 2 == 0 { 1 } else { -1 })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffectedQuerySet {
    queries: Vec<AffectedQuery>,
}

impl AffectedQuerySet {
    pub fn new(queries: Vec<AffectedQuery>) -> Result<Self, McError> {
        for q in &queries {
            if !(q.rho_star.is_finite() && q.rho_star > 0.0) {
                return Err(McError::BadParameter { name: "rho_star", value: q.rho_star });
            }
            if q.delta_answers == 0 {
                return Err(McError::BadParameter { name: "delta_answers", value: 0.0 });
            }
        }
        Ok(Self { queries })
    }

    /// Maximal neighbor pair over the selected (query, level) pairs. Pairs
    /// with ρ* = 0 release nothing and are dropped.
    pub fn from_selection(table: &AllocationTable, selected: impl IntoIterator<Item = (QueryKind, GeoLevel)>) -> Self {
        let queries = selected
            .into_iter()
            .filter_map(|(q, g)| {
                let rho = census::to_f64(&census::rho_star(table, q, g));
                (rho > 0.0).then_some(AffectedQuery { rho_star: rho, delta_answers: q.changed_cells() })
            })
            .collect();
        Self { queries }
    }

    /// Every query in the table.
    pub fn full(table: &AllocationTable) -> Self {
        Self::from_selection(table, AllocationTable::pairs())
    }

    pub fn scenario(table: &AllocationTable, s: &Scenario) -> Self {
        Self::from_selection(table, s.selected.iter().copied())
    }

    pub fn queries(&self) -> &[AffectedQuery] {
        &self.queries
    }

    pub fn cell_count(&self) -> usize {
        self.queries.iter().map(|q| q.delta_answers as usize).sum()
    }

    pub fn total_rho(&self) -> f64 {
        self.queries.iter().map(|q| q.rho_star).sum()
    }

    /// SHA-256 over the query list, for run manifests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for q in &self.queries {
            h.update(q.rho_star.to_bits().to_le_bytes());
            h.update(q.delta_answers.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Per-cell coefficients: LLR contribution is `a − b·y` for observation y.
#[derive(Debug, Clone)]
struct Cell {
    shift: i64,
    a: f64,
    b: f64,
    sampler: usize,
}

fn cells(queries: &AffectedQuerySet) -> (Vec<Cell>, Vec<DiscreteGaussSampler>) {
    let mut samplers = Vec::new();
    let mut out = Vec::new();
    for q in &queries.queries {
        let s2 = q.sigma2();
        samplers.push(DiscreteGaussSampler::new(&DiscreteGaussParams { sigma2: s2 }));
        for shift in q.shifts() {
            let s = shift as f64;
            out.push(Cell { shift, a: s * s / (2.0 * s2), b: s / s2, sampler: samplers.len() - 1 });
        }
    }
    (out, samplers)
}

/// Σ log[pmf(y) / pmf(y − shift)] over affected cells, with y the noisy
/// answer minus the D1 answer.
pub fn llr_statistic(observations: &[i64], queries: &AffectedQuerySet) -> Result<f64, McError> {
    let (cells, _) = cells(queries);
    if observations.len() != cells.len() {
        return Err(McError::LengthMismatch { expected: cells.len(), got: observations.len() });
    }
    Ok(cells.iter().zip(observations).map(|(c, &y)| c.a - c.b * y as f64).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Null,
    Alternative,
}

/// LLR draws under one hypothesis, in deterministic shard order.
pub fn sample_llr(queries: &AffectedQuerySet, n: usize, seed: u64, arm: Arm) -> Vec<f64> {
    let (cells, samplers) = cells(queries);
    let stream_base = match arm {
        Arm::Null => 0,
        Arm::Alternative => SHARDS,
    };
    let sizes: Vec<usize> = (0..SHARDS as usize).map(|s| n / SHARDS as usize + usize::from(s < n % SHARDS as usize)).collect();
    sizes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(shard, &m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + shard as u64);
            let cells = &cells;
            let samplers = &samplers;
            (0..m)
                .map(move |_| {
                    cells
                        .iter()
                        .map(|c| {
                            let z = samplers[c.sampler].sample(&mut rng);
                            let y = if arm == Arm::Null { z } else { z + c.shift };
                            c.a - c.b * y as f64
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Empirical ROC of the test that rejects D1 for small LLR.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRoc {
    /// (level, power) after each distinct threshold, from (0,0) to (1,1).
    vertices: Vec<(f64, f64)>,
    n_null: usize,
    n_alt: usize,
}

impl EmpiricalRoc {
    /// Two-pointer sweep over the sorted arms.
    pub fn from_samples(mut null: Vec<f64>, mut alt: Vec<f64>) -> Self {
        null.sort_by(f64::total_cmp);
        alt.sort_by(f64::total_cmp);
        let (n0, n1) = (null.len(), alt.len());
        let mut vertices = vec![(0.0, 0.0)];
        sweep(&null, &alt, |i, j| vertices.push((i as f64 / n0 as f64, j as f64 / n1 as f64)));
        Self { vertices, n_null: n0, n_alt: n1 }
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Power of the randomized threshold test at `level`.
    pub fn power_at(&self, level: f64) -> f64 {
        let v = &self.vertices;
        let level = level.clamp(0.0, 1.0);
        let i = v.partition_point(|&(l, _)| l < level);
        if i == 0 {
            return v[0].1;
        }
        if i == v.len() {
            return 1.0;
        }
        let (l0, p0) = v[i - 1];
        let (l1, p1) = v[i];
        p0 + (level - l0) * (p1 - p0) / (l1 - l0)
    }

    /// Binomial standard error of the power estimate.
    pub fn std_error_at(&self, level: f64) -> f64 {
        let p = self.power_at(level);
        (p * (1.0 - p) / self.n_alt as f64).sqrt()
    }

    pub fn samples(&self) -> (usize, usize) {
        (self.n_null, self.n_alt)
    }

    /// Least concave majorant as a trade-off curve.
    pub fn concave_majorant(&self) -> Result<TradeoffCurve, TradeoffError> {
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for &p in &self.vertices {
            if let Some(last) = hull.last() {
                if p.0 <= last.0 {
                    if p.1 > last.1 {
                        hull.pop();
                    } else {
                        continue;
                    }
                }
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b.0 - a.0) * (p.1 - a.1) >= (p.0 - a.0) * (b.1 - a.1) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        TradeoffCurve::piecewise_linear(hull)
    }

    /// CSV rows `level,power,se` on the given levels.
    pub fn to_csv(&self, levels: &[f64]) -> String {
        let mut s = String::from("level,power,se\n");
        for &l in levels {
            let _ = writeln!(s, "{l},{},{}", self.power_at(l), self.std_error_at(l));
        }
        s
    }
}

/// Estimates the level/power trade-off of the exact likelihood-ratio test
/// from `n` draws per hypothesis.
pub fn mc_roc(queries: &AffectedQuerySet, n: usize, seed: u64) -> Result<EmpiricalRoc, McError> {
    if n < MIN_SAMPLES {
        return Err(McError::TooFewSamples(n));
    }
    let null = sample_llr(queries, n, seed, Arm::Null);
    let alt = sample_llr(queries, n, seed, Arm::Alternative);
    Ok(EmpiricalRoc::from_samples(null, alt))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    sweep(&a, &b, |i, j| d = d.max((i as f64 / n - j as f64 / m).abs()));
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_survival(lambda))
}

/// Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Run manifest written next to MC output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub allocation: String,
    pub seed: u64,
    pub n: usize,
    pub allocation_digest: String,
    pub total_rho: f64,
    pub cells: usize,
}

impl RunManifest {
    pub fn new(allocation: &str, queries: &AffectedQuerySet, seed: u64, n: usize) -> Self {
        Self {
            allocation: allocation.to_string(),
            seed,
            n,
            allocation_digest: queries.digest(),
            total_rho: queries.total_rho(),
            cells: queries.cell_count(),
        }
    }
}

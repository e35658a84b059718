//! Significance level vs. power trade-off curves.
//!
//! Curves here report the maximal power 1 − f(level) rather than the Type II
//! error f(level).

use crate::accountants::{EpsDeltaCurve, RdpPoint};
use crate::plrv::FiniteMechanismPair;
use crate::normal;
use thiserror::Error;

/// Bisection stops once the feasible power bracket is this narrow.
pub const POWER_TOL: f64 = 1e-6;
/// Vertex tolerance for concavity and ordering checks.
const VERTEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TradeoffError {
    #[error("piecewise-linear curve is invalid: {0}")]
    BadVertices(&'static str),
    #[error("grid must not be empty")]
    EmptyGrid,
    #[error("RDP point list must not be empty")]
    NoPoints,
    #[error("parameter `{name}` out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TradeoffCurve {
    PureDpBound { eps: f64 },
    ApproxDpBound { eps: f64, delta: f64 },
    GaussianExact { mu: f64 },
    ZcdpNumericBound { rho: f64 },
    RdpNumericBound { points: Vec<RdpPoint> },
    /// Concave, non-decreasing vertices from (0, p0) to (1, 1).
    PiecewiseLinear { vertices: Vec<(f64, f64)> },
}

impl TradeoffCurve {
    pub fn piecewise_linear(vertices: Vec<(f64, f64)>) -> Result<Self, TradeoffError> {
        validate_vertices(&vertices)?;
        Ok(TradeoffCurve::PiecewiseLinear { vertices })
    }

    /// Maximal power at `level` (clamped to [0,1]).
    pub fn power(&self, level: f64) -> f64 {
        let level = level.clamp(0.0, 1.0);
        match self {
            TradeoffCurve::PureDpBound { eps } => pure_dp_power_bound(*eps, level),
            TradeoffCurve::ApproxDpBound { eps, delta } => approx_dp_power_bound(*eps, *delta, level),
            TradeoffCurve::GaussianExact { mu } => gaussian_exact_power(*mu, level),
            TradeoffCurve::ZcdpNumericBound { rho } => zcdp_power_bound(*rho, level, &default_alpha_grid()),
            TradeoffCurve::RdpNumericBound { points } => rdp_power_bound(points, level).unwrap_or(1.0),
            TradeoffCurve::PiecewiseLinear { vertices } => interpolate(vertices, level),
        }
    }

    /// Type II error f(level) = 1 − power.
    pub fn type_two(&self, level: f64) -> f64 {
        1.0 - self.power(level)
    }

    /// Generalized inverse inf{level : power(level) ≥ target}, i.e. f⁻¹(1 − target).
    pub fn min_level_for_power(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        match self {
            TradeoffCurve::PiecewiseLinear { vertices } => inverse_piecewise(vertices, target),
            _ => inverse_by_bisection(|l| self.power(l), target),
        }
    }
}

fn validate_vertices(v: &[(f64, f64)]) -> Result<(), TradeoffError> {
    if v.len() < 2 {
        return Err(TradeoffError::BadVertices("need at least two vertices"));
    }
    if v[0].0 != 0.0 {
        return Err(TradeoffError::BadVertices("first vertex must be at level 0"));
    }
    let last = v[v.len() - 1];
    if (last.0 - 1.0).abs() > VERTEX_TOL || (last.1 - 1.0).abs() > VERTEX_TOL {
        return Err(TradeoffError::BadVertices("last vertex must be (1, 1)"));
    }
    if v.iter().any(|&(l, p)| !(0.0..=1.0 + VERTEX_TOL).contains(&l) || !(0.0..=1.0 + VERTEX_TOL).contains(&p)) {
        return Err(TradeoffError::BadVertices("coordinates must lie in [0,1]"));
    }
    let mut prev_slope = f64::INFINITY;
    for w in v.windows(2) {
        let (dl, dp) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        if dl <= 0.0 {
            return Err(TradeoffError::BadVertices("levels must be strictly increasing"));
        }
        if dp < -VERTEX_TOL {
            return Err(TradeoffError::BadVertices("power must be non-decreasing"));
        }
        let slope = dp / dl;
        if slope > prev_slope * (1.0 + 1e-9) + 1e-9 {
            return Err(TradeoffError::BadVertices("curve must be concave"));
        }
        prev_slope = slope;
    }
    Ok(())
}

fn interpolate(v: &[(f64, f64)], level: f64) -> f64 {
    let i = v.partition_point(|&(l, _)| l < level);
    if i == 0 {
        return v[0].1;
    }
    if i == v.len() {
        return v[v.len() - 1].1;
    }
    let (l0, p0) = v[i - 1];
    let (l1, p1) = v[i];
    (p0 + (level - l0) * (p1 - p0) / (l1 - l0)).clamp(0.0, 1.0)
}

fn inverse_piecewise(v: &[(f64, f64)], target: f64) -> f64 {
    let i = v.partition_point(|&(_, p)| p < target);
    if i == 0 {
        return v[0].0;
    }
    if i == v.len() {
        return 1.0;
    }
    let (l0, p0) = v[i - 1];
    let (l1, p1) = v[i];
    l0 + (target - p0) * (l1 - l0) / (p1 - p0)
}

/// inf{x ∈ [0,1] : g(x) ≥ target} for non-decreasing g, bisecting on log x.
fn inverse_by_bisection(g: impl Fn(f64) -> f64, target: f64) -> f64 {
    if g(0.0) >= target {
        return 0.0;
    }
    if g(1.0) < target {
        return 1.0;
    }
    let (mut lo, mut hi) = (f64::MIN_POSITIVE.ln(), 0.0f64);
    if g(lo.exp()) >= target {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid.exp()) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// min(e^ε ℓ, 1 − e^{−ε}(1 − ℓ)).
pub fn pure_dp_power_bound(eps: f64, level: f64) -> f64 {
    approx_dp_power_bound(eps, 0.0, level)
}

/// min(e^ε ℓ + δ, 1 − e^{−ε}(1 − ℓ − δ)), clamped to [0,1].
pub fn approx_dp_power_bound(eps: f64, delta: f64, level: f64) -> f64 {
    let a = eps.exp() * level + delta;
    let b = 1.0 - (-eps).exp() * (1.0 - level - delta);
    a.min(b).clamp(0.0, 1.0)
}

/// Default ε grid for minimising bounds over an (ε, δ) curve.
pub fn default_eps_grid() -> Vec<f64> {
    let n = 3001;
    (0..n).map(|i| 30.0 * i as f64 / (n - 1) as f64).collect()
}

/// Smallest approximate-DP power bound along an (ε, δ) curve.
///
/// The curve's own breakpoints (if any) are added to `eps_grid`.
pub fn curve_min_power_bound(curve: &EpsDeltaCurve, level: f64, eps_grid: &[f64]) -> Result<f64, TradeoffError> {
    let knots = curve.knots();
    if eps_grid.is_empty() && knots.is_empty() {
        return Err(TradeoffError::EmptyGrid);
    }
    Ok(eps_grid
        .iter()
        .chain(knots.iter())
        .filter(|e| e.is_finite() && **e >= 0.0)
        .map(|&e| approx_dp_power_bound(e, curve.delta(e), level))
        .fold(1.0, f64::min))
}

/// 1 − Φ(Φ⁻¹(1 − ℓ) − μ), computed as Φ̄(Φ̄⁻¹(ℓ) − μ).
pub fn gaussian_exact_power(mu: f64, level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    if level >= 1.0 {
        return 1.0;
    }
    normal::sf(normal::upper_quantile(level) - mu)
}

/// 2000 log-spaced orders from 1 + 1e-4 to 200.
pub fn default_alpha_grid() -> Vec<f64> {
    log_spaced(1.0 + 1e-4, 200.0, 2000)
}

pub(crate) fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| if i == 0 { a } else if i + 1 == n { b } else { (la + (lb - la) * i as f64 / (n - 1) as f64).exp() })
        .collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m.is_infinite() {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// log Σ_i x_i^α y_i^{1−α} for the binary distributions (x, 1−x), (y, 1−y).
fn log_renyi_sum(x: f64, y: f64, alpha: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            f64::NEG_INFINITY
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            alpha * a.ln() + (1.0 - alpha) * b.ln()
        }
    };
    log_add_exp(term(x, y), term(1.0 - x, 1.0 - y))
}

fn binary_feasible(level: f64, p: f64, points: &[RdpPoint]) -> bool {
    points.iter().all(|pt| {
        let cap = pt.gamma * (pt.alpha - 1.0);
        log_renyi_sum(level, p, pt.alpha) <= cap && log_renyi_sum(p, level, pt.alpha) <= cap
    })
}

/// Largest power p ≥ ℓ compatible with every (α, γ) constraint.
fn bisect_power(level: f64, points: &[RdpPoint]) -> f64 {
    if level >= 1.0 {
        return 1.0;
    }
    if binary_feasible(level, 1.0, points) {
        return 1.0;
    }
    let (mut lo, mut hi) = (level.max(0.0), 1.0);
    while hi - lo > POWER_TOL * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binary_feasible(level, mid, points) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Power bound for ρ-zCDP using γ = ρα on `alpha_grid`.
pub fn zcdp_power_bound(rho: f64, level: f64, alpha_grid: &[f64]) -> f64 {
    let points: Vec<RdpPoint> = alpha_grid.iter().map(|&a| RdpPoint { alpha: a, gamma: rho * a }).collect();
    bisect_power(level.clamp(0.0, 1.0), &points)
}

/// Power bound from a set of (α, γ)-RDP guarantees.
pub fn rdp_power_bound(points: &[RdpPoint], level: f64) -> Result<f64, TradeoffError> {
    if points.is_empty() {
        return Err(TradeoffError::NoPoints);
    }
    Ok(bisect_power(level.clamp(0.0, 1.0), points))
}

/// Exact Neyman–Pearson curve; level is measured under p1, power under p2.
pub fn np_tradeoff_finite(pair: &FiniteMechanismPair) -> TradeoffCurve {
    let mut cells: Vec<(f64, f64)> = pair
        .p1()
        .iter()
        .zip(pair.p2())
        .filter(|(a, b)| **a > 0.0 || **b > 0.0)
        .map(|(&a, &b)| (a, b))
        .collect();
    let ratio = |c: &(f64, f64)| if c.0 == 0.0 { f64::INFINITY } else { c.1 / c.0 };
    cells.sort_by(|x, y| ratio(y).total_cmp(&ratio(x)));

    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut last_ratio = f64::NAN;
    for c in cells {
        let r = ratio(&c);
        let tie = r == last_ratio || (r.is_finite() && (r - last_ratio).abs() <= 1e-12 * r.max(1.0));
        match groups.last_mut() {
            Some(g) if tie => {
                g.0 += c.0;
                g.1 += c.1;
            }
            _ => {
                groups.push(c);
                last_ratio = r;
            }
        }
    }

    let mut vertices = vec![(0.0, 0.0)];
    let (mut l, mut p) = (0.0, 0.0);
    for (a, b) in groups {
        l += a;
        p += b;
        if a == 0.0 {
            vertices[0].1 = p.min(1.0);
        } else {
            vertices.push((l.min(1.0), p.min(1.0)));
        }
    }
    let n = vertices.len();
    vertices[n - 1] = (1.0, 1.0);
    if n == 1 {
        vertices.push((1.0, 1.0));
    }
    TradeoffCurve::PiecewiseLinear { vertices }
}

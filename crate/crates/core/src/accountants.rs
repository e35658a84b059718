//! zCDP/RDP accounting, conversions to (ε, δ) curves, and a budget odometer.

use crate::bayes;
use crate::normal;
use crate::plrv::{self, FiniteMechanismPair};
use crate::tradeoff::{np_tradeoff_finite, TradeoffCurve};
use std::fmt::Write as _;
use thiserror::Error;

/// Bisection steps for δ searches on [0, 1].
pub const DELTA_BISECTION_STEPS: usize = 60;
/// Relative slack on T(e^{−ε}δ) ≤ δ so that exact equality survives rounding.
const FEASIBILITY_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountError {
    #[error("parameter `{name}` out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("invalid RDP points: {0}")]
    BadPoints(&'static str),
    #[error("RDP profiles share no order α")]
    EmptyIntersection,
}

fn require(ok: bool, name: &'static str, value: f64) -> Result<(), AccountError> {
    if ok {
        Ok(())
    } else {
        Err(AccountError::BadParameter { name, value })
    }
}

/// A single (α, γ)-RDP guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpPoint {
    pub alpha: f64,
    pub gamma: f64,
}

fn check_points(points: &[RdpPoint]) -> Result<(), AccountError> {
    if points.is_empty() {
        return Err(AccountError::BadPoints("empty"));
    }
    if points.iter().any(|p| !(p.alpha.is_finite() && p.alpha > 1.0)) {
        return Err(AccountError::BadPoints("every α must be finite and > 1"));
    }
    if points.iter().any(|p| !(p.gamma.is_finite() && p.gamma >= 0.0)) {
        return Err(AccountError::BadPoints("every γ must be finite and ≥ 0"));
    }
    if points.windows(2).any(|w| w[1].alpha <= w[0].alpha) {
        return Err(AccountError::BadPoints("α values must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrivacyProfile {
    Zcdp(f64),
    Rdp(Vec<RdpPoint>),
}

impl PrivacyProfile {
    pub fn zcdp(rho: f64) -> Result<Self, AccountError> {
        require(rho.is_finite() && rho >= 0.0, "rho", rho)?;
        Ok(PrivacyProfile::Zcdp(rho))
    }

    pub fn rdp(points: Vec<RdpPoint>) -> Result<Self, AccountError> {
        check_points(&points)?;
        Ok(PrivacyProfile::Rdp(points))
    }
}

/// Linear composition of zCDP budgets.
pub fn zcdp_compose(rhos: &[f64]) -> Result<f64, AccountError> {
    for &r in rhos {
        require(r.is_finite() && r >= 0.0, "rho", r)?;
    }
    Ok(rhos.iter().sum())
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.max(b)
}

/// Pointwise γ sums on the orders shared by both profiles.
pub fn rdp_compose(a: &[RdpPoint], b: &[RdpPoint]) -> Result<Vec<RdpPoint>, AccountError> {
    check_points(a)?;
    check_points(b)?;
    let out: Vec<RdpPoint> = a
        .iter()
        .filter_map(|p| {
            b.iter()
                .find(|q| same_alpha(p.alpha, q.alpha))
                .map(|q| RdpPoint { alpha: p.alpha, gamma: p.gamma + q.gamma })
        })
        .collect();
    if out.is_empty() {
        Err(AccountError::EmptyIntersection)
    } else {
        Ok(out)
    }
}

/// RDP points {(α, ρα)} implied by ρ-zCDP.
pub fn zcdp_expand(rho: f64, alphas: &[f64]) -> Vec<RdpPoint> {
    alphas.iter().map(|&alpha| RdpPoint { alpha, gamma: rho * alpha }).collect()
}

/// Tail bound δ = e^{−(ε−ρ)²/(4ρ)} for ε > ρ, else 1.
pub fn zcdp_to_delta(rho: f64, eps: f64) -> Result<f64, AccountError> {
    require(rho.is_finite() && rho > 0.0, "rho", rho)?;
    Ok(if eps > rho { (-(eps - rho).powi(2) / (4.0 * rho)).exp().min(1.0) } else { 1.0 })
}

/// Tail bound min over points with ε > γ of e^{(α−1)(γ−ε)}.
pub fn rdp_to_delta(points: &[RdpPoint], eps: f64) -> Result<f64, AccountError> {
    check_points(points)?;
    Ok(points
        .iter()
        .filter(|p| eps > p.gamma)
        .map(|p| ((p.alpha - 1.0) * (p.gamma - eps)).exp())
        .fold(1.0, f64::min)
        .clamp(0.0, 1.0))
}

/// ε = log(δ / f⁻¹(1 − δ)) for a trade-off curve; +∞ when f⁻¹(1 − δ) = 0.
pub fn fdp_to_epsdelta(f: &TradeoffCurve, delta: f64) -> Result<f64, AccountError> {
    require(delta > 0.0 && delta <= 1.0, "delta", delta)?;
    let y = f.min_level_for_power(delta);
    Ok(if y <= 0.0 { f64::INFINITY } else { (delta / y).ln() })
}

/// Closed form ε = log(δ / Φ(−Φ⁻¹(1 − δ) − μ)).
pub fn gaussian_pbdp_epsilon(mu: f64, delta: f64) -> Result<f64, AccountError> {
    require(mu.is_finite() && mu >= 0.0, "mu", mu)?;
    require(delta > 0.0 && delta <= 1.0, "delta", delta)?;
    if mu == 0.0 {
        return Ok(0.0);
    }
    let denom = normal::cdf(-normal::upper_quantile(delta) - mu);
    Ok(if denom <= 0.0 { f64::INFINITY } else { (delta / denom).ln() })
}

/// Tight δ for the one-sided condition T(e^{−ε}δ) ≤ δ, where T is a
/// concave power function; the feasible set is an up-set so bisection applies.
pub fn pbdp_delta_for_power(power: impl Fn(f64) -> f64, eps: f64) -> f64 {
    let k = (-eps).exp();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if power(0.0) <= 0.0 {
        // T(0) = 0 and the condition may already hold at δ = 0⁺.
        let tiny = 1e-300;
        if power(k * tiny) <= tiny * (1.0 + FEASIBILITY_RTOL) {
            return 0.0;
        }
    }
    for _ in 0..DELTA_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if power(k * mid) <= mid * (1.0 + FEASIBILITY_RTOL) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Tight pbdp δ at ε for a finite mechanism, maximised over both neighbor orders.
pub fn pbdp_delta_finite(pair: &FiniteMechanismPair, eps: f64) -> Result<f64, AccountError> {
    require(eps.is_finite() && eps > 0.0, "eps", eps)?;
    Ok(pbdp_both_directions(pair, eps))
}

fn pbdp_both_directions(pair: &FiniteMechanismPair, eps: f64) -> f64 {
    let fwd = np_tradeoff_finite(pair);
    let rev = np_tradeoff_finite(&pair.reversed());
    pbdp_delta_for_power(|l| fwd.power(l), eps).max(pbdp_delta_for_power(|l| rev.power(l), eps))
}

/// D_α(p ‖ q) for finite distributions.
pub fn renyi_divergence(p: &[f64], q: &[f64], alpha: f64) -> f64 {
    // Summed in log space: b^(1−α) overflows in the tails for large α.
    let mut terms = Vec::with_capacity(p.len());
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        terms.push(alpha * a.ln() + (1.0 - alpha) * b.ln());
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    (m + s.ln()) / (alpha - 1.0)
}

/// The semantics under which an (ε, δ) curve is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semantics {
    ApproximateDp,
    Pbdp,
    ZcdpTailBound,
    RdpTailBound,
    BayesKnownRest,
    BayesArbitraryPrior,
}

#[derive(Debug, Clone, PartialEq)]
enum DeltaSource {
    GaussianAdp { mu: f64 },
    FiniteAdp { pair: FiniteMechanismPair },
    TradeoffPbdp { curve: TradeoffCurve },
    FinitePbdp { pair: FiniteMechanismPair },
    Zcdp { rho: f64 },
    Rdp { points: Vec<RdpPoint> },
    KnownRest { profile: PrivacyProfile },
    ArbitraryPrior { profile: PrivacyProfile },
    Points { points: Vec<(f64, f64)> },
}

/// A non-increasing map ε ↦ δ(ε) on [0, ∞) under a named semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsDeltaCurve {
    semantics: Semantics,
    source: DeltaSource,
}

impl EpsDeltaCurve {
    fn new(semantics: Semantics, source: DeltaSource) -> Self {
        Self { semantics, source }
    }

    /// Exact approximate-DP curve of the Gaussian mechanism with separation μ.
    pub fn gaussian_adp(mu: f64) -> Self {
        Self::new(Semantics::ApproximateDp, DeltaSource::GaussianAdp { mu })
    }

    /// Exact approximate-DP curve of a finite pair, max over neighbor orders.
    pub fn finite_adp(pair: FiniteMechanismPair) -> Self {
        Self::new(Semantics::ApproximateDp, DeltaSource::FiniteAdp { pair })
    }

    /// pbdp curve of a symmetric trade-off curve.
    pub fn pbdp_tradeoff(curve: TradeoffCurve) -> Self {
        Self::new(Semantics::Pbdp, DeltaSource::TradeoffPbdp { curve })
    }

    pub fn pbdp_finite(pair: FiniteMechanismPair) -> Self {
        Self::new(Semantics::Pbdp, DeltaSource::FinitePbdp { pair })
    }

    pub fn zcdp_tail(rho: f64) -> Result<Self, AccountError> {
        require(rho.is_finite() && rho > 0.0, "rho", rho)?;
        Ok(Self::new(Semantics::ZcdpTailBound, DeltaSource::Zcdp { rho }))
    }

    pub fn rdp_tail(points: Vec<RdpPoint>) -> Result<Self, AccountError> {
        check_points(&points)?;
        Ok(Self::new(Semantics::RdpTailBound, DeltaSource::Rdp { points }))
    }

    pub fn bayes_known_rest(profile: PrivacyProfile) -> Self {
        Self::new(Semantics::BayesKnownRest, DeltaSource::KnownRest { profile })
    }

    pub fn bayes_arbitrary_prior(profile: PrivacyProfile) -> Self {
        Self::new(Semantics::BayesArbitraryPrior, DeltaSource::ArbitraryPrior { profile })
    }

    /// Curve given by explicit (ε, δ) guarantees: δ(ε) is the smallest δᵢ with εᵢ ≤ ε.
    pub fn points(semantics: Semantics, mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::new(semantics, DeltaSource::Points { points })
    }

    pub fn semantics(&self) -> Semantics {
        self.semantics
    }

    /// ε values where the curve has explicit breakpoints.
    pub fn knots(&self) -> Vec<f64> {
        match &self.source {
            DeltaSource::Points { points } => points.iter().map(|p| p.0).collect(),
            _ => Vec::new(),
        }
    }

    /// δ(ε), in [0, 1].
    pub fn delta(&self, eps: f64) -> f64 {
        let eps = eps.max(0.0);
        match &self.source {
            DeltaSource::GaussianAdp { mu } => plrv::gaussian_delta(*mu, eps),
            DeltaSource::FiniteAdp { pair } => {
                let f = plrv::plrv_of_finite_pair(pair);
                let r = plrv::plrv_of_finite_pair(&pair.reversed());
                let a = plrv::approx_dp_delta(&f, &r, eps).unwrap_or(1.0);
                let b = plrv::approx_dp_delta(&r, &f, eps).unwrap_or(1.0);
                a.max(b)
            }
            DeltaSource::TradeoffPbdp { curve } => pbdp_delta_for_power(|l| curve.power(l), eps),
            DeltaSource::FinitePbdp { pair } => pbdp_both_directions(pair, eps),
            DeltaSource::Zcdp { rho } => zcdp_to_delta(*rho, eps).unwrap_or(1.0),
            DeltaSource::Rdp { points } => rdp_to_delta(points, eps).unwrap_or(1.0),
            DeltaSource::KnownRest { profile } => bayes::bayes_known_rest_delta(profile, eps),
            DeltaSource::ArbitraryPrior { profile } => bayes::bayes_arbitrary_prior_delta(profile, eps),
            DeltaSource::Points { points } => points
                .iter()
                .filter(|p| p.0 <= eps)
                .map(|p| p.1)
                .fold(1.0, f64::min)
                .clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdometerError {
    #[error("rho must be finite and non-negative, got {0}")]
    BadRho(f64),
    #[error("cap must be finite and non-negative, got {0}")]
    BadCap(f64),
    #[error("refused: requested {requested} exceeds remaining budget {remaining}")]
    OverBudget { requested: f64, remaining: f64 },
    #[error("labels must not contain tabs or newlines")]
    BadLabel,
    #[error("ledger line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometerEntry {
    pub label: String,
    pub rho: f64,
    pub cumulative: f64,
}

/// Append-only zCDP budget ledger that refuses registrations past its cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Odometer {
    cap: f64,
    entries: Vec<OdometerEntry>,
}

impl Odometer {
    pub fn new(cap: f64) -> Result<Self, OdometerError> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(OdometerError::BadCap(cap));
        }
        Ok(Self { cap, entries: Vec::new() })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn entries(&self) -> &[OdometerEntry] {
        &self.entries
    }

    pub fn spent(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.cumulative)
    }

    pub fn remaining(&self) -> f64 {
        (self.cap - self.spent()).max(0.0)
    }

    fn slack(&self) -> f64 {
        1e-12 * self.cap.max(1.0)
    }

    /// Appends the entry and returns the remaining budget, or refuses without change.
    pub fn register(&mut self, label: &str, rho: f64) -> Result<f64, OdometerError> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(OdometerError::BadRho(rho));
        }
        if label.contains(['\t', '\n', '\r']) {
            return Err(OdometerError::BadLabel);
        }
        let cumulative = self.spent() + rho;
        if cumulative > self.cap + self.slack() {
            return Err(OdometerError::OverBudget { requested: rho, remaining: self.remaining() });
        }
        self.entries.push(OdometerEntry { label: label.to_string(), rho, cumulative });
        Ok(self.remaining())
    }

    /// Line-oriented ledger: a cap header, then `label<TAB>rho<TAB>cumulative`.
    pub fn to_ledger(&self) -> String {
        let mut s = format!("# odometer cap={}\n", self.cap);
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}", e.label, e.rho, e.cumulative);
        }
        s
    }

    pub fn from_ledger(text: &str) -> Result<Self, OdometerError> {
        let mut lines = text.lines().enumerate();
        let cap = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("# odometer cap=")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or(OdometerError::Parse { line: 1, msg: "missing `# odometer cap=` header".into() })?,
            None => return Err(OdometerError::Parse { line: 1, msg: "empty ledger".into() }),
        };
        let mut odo = Odometer::new(cap)?;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| OdometerError::Parse { line: i + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected three tab-separated fields"));
            }
            let rho: f64 = fields[1].parse().map_err(|_| bad("rho is not a number"))?;
            let cum: f64 = fields[2].parse().map_err(|_| bad("cumulative is not a number"))?;
            odo.register(fields[0], rho)?;
            if (odo.spent() - cum).abs() > 1e-12 * cum.abs().max(1.0) {
                return Err(bad("cumulative does not match the running sum"));
            }
        }
        Ok(odo)
    }
}

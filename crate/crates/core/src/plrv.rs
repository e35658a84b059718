//! Privacy-loss random variables.
//!
//! A `Plrv` is the law of log P(M(D1)=ω)/P(M(D2)=ω) with ω drawn from M(D1).

use crate::normal;
use thiserror::Error;

/// Atoms closer than this are merged.
pub const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of total probability from 1.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlrvError {
    #[error("parameter `{name}` must be finite and non-negative, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("probabilities must be finite, in [0,1] and sum to 1 (sum = {sum})")]
    BadProbabilities { sum: f64 },
    #[error("atom values must be finite")]
    NonFiniteAtom,
    #[error("sample size m = {m} exceeds population n = {n}")]
    SampleTooLarge { n: u64, m: u64 },
    #[error("population size must be positive")]
    EmptyPopulation,
    #[error("representation mismatch: {0}")]
    RepresentationMismatch(&'static str),
    #[error("forward and reverse Gaussian PLRVs differ: N({0}, {1}) vs N({2}, {3})")]
    AsymmetricGaussian(f64, f64, f64, f64),
    #[error("Gaussian PLRV must have mean = variance/2, got N({mean}, {variance})")]
    NotMechanismShaped { mean: f64, variance: f64 },
    #[error("outputs, p1 and p2 must have the same length")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plrv {
    /// Finite atoms sorted by value plus the mass sitting at +∞.
    Discrete { atoms: Vec<Atom>, infinity_mass: f64 },
    Gaussian { mean: f64, variance: f64 },
}

fn check_param(name: &'static str, value: f64) -> Result<(), PlrvError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(PlrvError::BadParameter { name, value })
    }
}

fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.retain(|a| a.prob > 0.0);
    atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NEG_INFINITY;
    for a in atoms {
        match out.last_mut() {
            Some(last) if a.value - anchor < MERGE_TOL => last.prob += a.prob,
            _ => {
                anchor = a.value;
                out.push(a);
            }
        }
    }
    out
}

impl Plrv {
    /// Validated discrete PLRV from (value, prob) pairs.
    pub fn discrete(atoms: &[(f64, f64)], infinity_mass: f64) -> Result<Self, PlrvError> {
        if atoms.iter().any(|&(v, _)| !v.is_finite()) {
            return Err(PlrvError::NonFiniteAtom);
        }
        let sum: f64 = atoms.iter().map(|a| a.1).sum::<f64>() + infinity_mass;
        let probs_ok = atoms
            .iter()
            .map(|a| a.1)
            .chain(std::iter::once(infinity_mass))
            .all(|p| p.is_finite() && (0.0..=1.0).contains(&p));
        if !probs_ok || (sum - 1.0).abs() > PROB_TOL {
            return Err(PlrvError::BadProbabilities { sum });
        }
        Ok(Self::discrete_unchecked(
            atoms.iter().map(|&(value, prob)| Atom { value, prob }).collect(),
            infinity_mass,
        ))
    }

    fn discrete_unchecked(atoms: Vec<Atom>, infinity_mass: f64) -> Self {
        Plrv::Discrete { atoms: merge_atoms(atoms), infinity_mass }
    }

    /// Point mass at zero: the PLRV of identical output distributions.
    pub fn zero() -> Self {
        Plrv::Discrete { atoms: vec![Atom { value: 0.0, prob: 1.0 }], infinity_mass: 0.0 }
    }

    /// General Gaussian PLRV N(mean, variance).
    pub fn gaussian_parametric(mean: f64, variance: f64) -> Result<Self, PlrvError> {
        check_param("variance", variance)?;
        if !mean.is_finite() {
            return Err(PlrvError::BadParameter { name: "mean", value: mean });
        }
        Ok(Plrv::Gaussian { mean, variance })
    }

    pub fn is_point_mass_at_zero(&self) -> bool {
        match self {
            Plrv::Discrete { atoms, infinity_mass } => {
                *infinity_mass == 0.0 && atoms.len() == 1 && atoms[0].value == 0.0
            }
            Plrv::Gaussian { mean, variance } => *mean == 0.0 && *variance == 0.0,
        }
    }

    /// Finite atoms; empty for the Gaussian representation.
    pub fn atoms(&self) -> &[Atom] {
        match self {
            Plrv::Discrete { atoms, .. } => atoms,
            Plrv::Gaussian { .. } => &[],
        }
    }

    pub fn infinity_mass(&self) -> f64 {
        match self {
            Plrv::Discrete { infinity_mass, .. } => *infinity_mass,
            Plrv::Gaussian { .. } => 0.0,
        }
    }

    /// E[e^{tL}] for t ≥ 0. Infinite when L has mass at +∞ and t > 0.
    pub fn exp_moment(&self, t: f64) -> f64 {
        match self {
            Plrv::Discrete { atoms, infinity_mass } => {
                if *infinity_mass > 0.0 && t > 0.0 {
                    return f64::INFINITY;
                }
                atoms.iter().map(|a| a.prob * (t * a.value).exp()).sum::<f64>()
                    + if t == 0.0 { *infinity_mass } else { 0.0 }
            }
            Plrv::Gaussian { mean, variance } => (t * mean + 0.5 * t * t * variance).exp(),
        }
    }
}

/// Pair of output distributions (M(D1), M(D2)) over a finite output space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMechanismPair {
    outputs: Vec<String>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

fn check_distribution(p: &[f64]) -> Result<(), PlrvError> {
    let sum: f64 = p.iter().sum();
    if p.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)) && (sum - 1.0).abs() <= PROB_TOL {
        Ok(())
    } else {
        Err(PlrvError::BadProbabilities { sum })
    }
}

impl FiniteMechanismPair {
    pub fn new(outputs: Vec<String>, p1: Vec<f64>, p2: Vec<f64>) -> Result<Self, PlrvError> {
        if outputs.len() != p1.len() || p1.len() != p2.len() {
            return Err(PlrvError::LengthMismatch);
        }
        check_distribution(&p1)?;
        check_distribution(&p2)?;
        Ok(Self { outputs, p1, p2 })
    }

    /// Pair with outputs labelled `o0`, `o1`, ...
    pub fn from_probs(p1: Vec<f64>, p2: Vec<f64>) -> Result<Self, PlrvError> {
        let outputs = (0..p1.len()).map(|i| format!("o{i}")).collect();
        Self::new(outputs, p1, p2)
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }
    pub fn p1(&self) -> &[f64] {
        &self.p1
    }
    pub fn p2(&self) -> &[f64] {
        &self.p2
    }

    /// The same mechanism with the neighbor roles swapped.
    pub fn reversed(&self) -> Self {
        Self { outputs: self.outputs.clone(), p1: self.p2.clone(), p2: self.p1.clone() }
    }

    /// Total variation distance between p1 and p2.
    pub fn total_variation(&self) -> f64 {
        0.5 * self.p1.iter().zip(&self.p2).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Randomized response on the target's bit.
pub fn rr_plrv(eps0: f64, differing_on_sensitive_bit: bool) -> Result<Plrv, PlrvError> {
    check_param("eps0", eps0)?;
    if !differing_on_sensitive_bit {
        return Ok(Plrv::zero());
    }
    let p_hi = 1.0 / (1.0 + (-eps0).exp());
    let p_lo = 1.0 / (1.0 + eps0.exp());
    Ok(Plrv::discrete_unchecked(
        vec![Atom { value: eps0, prob: p_hi }, Atom { value: -eps0, prob: p_lo }],
        0.0,
    ))
}

/// Two-sided geometric noise on a count; same PLRV as randomized response.
pub fn geometric_plrv(eps0: f64, differing_on_sensitive_bit: bool) -> Result<Plrv, PlrvError> {
    rr_plrv(eps0, differing_on_sensitive_bit)
}

/// Gaussian mechanism with separation `mu`: N(μ²/2, μ²).
pub fn gaussian_plrv(mu: f64) -> Result<Plrv, PlrvError> {
    check_param("mu", mu)?;
    Ok(Plrv::Gaussian { mean: mu * mu / 2.0, variance: mu * mu })
}

/// Release of `m` records sampled without replacement from `n`.
pub fn sampling_plrv(n: u64, m: u64) -> Result<Plrv, PlrvError> {
    if n == 0 {
        return Err(PlrvError::EmptyPopulation);
    }
    if m > n {
        return Err(PlrvError::SampleTooLarge { n, m });
    }
    let inf = m as f64 / n as f64;
    Ok(Plrv::discrete_unchecked(vec![Atom { value: 0.0, prob: (n - m) as f64 / n as f64 }], inf))
}

/// Law of the sum of independent draws.
pub fn compose(a: &Plrv, b: &Plrv) -> Result<Plrv, PlrvError> {
    match (a, b) {
        (Plrv::Discrete { atoms: xa, infinity_mass: ia }, Plrv::Discrete { atoms: xb, infinity_mass: ib }) => {
            let mut atoms = Vec::with_capacity(xa.len() * xb.len());
            for x in xa {
                for y in xb {
                    atoms.push(Atom { value: x.value + y.value, prob: x.prob * y.prob });
                }
            }
            Ok(Plrv::discrete_unchecked(atoms, ia + ib - ia * ib))
        }
        (Plrv::Gaussian { mean: m1, variance: v1 }, Plrv::Gaussian { mean: m2, variance: v2 }) => {
            Ok(Plrv::Gaussian { mean: m1 + m2, variance: v1 + v2 })
        }
        (g @ Plrv::Gaussian { .. }, d) | (d, g @ Plrv::Gaussian { .. }) => {
            if d.is_point_mass_at_zero() {
                Ok(g.clone())
            } else {
                Err(PlrvError::RepresentationMismatch("cannot compose a Gaussian with a finite PLRV"))
            }
        }
    }
}

/// PLRV of a finite pair: atoms at log(p1/p2) weighted by p1.
pub fn plrv_of_finite_pair(pair: &FiniteMechanismPair) -> Plrv {
    let mut atoms = Vec::new();
    let mut inf = 0.0;
    for (&a, &b) in pair.p1.iter().zip(&pair.p2) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            inf += a;
        } else {
            atoms.push(Atom { value: (a / b).ln(), prob: a });
        }
    }
    Plrv::discrete_unchecked(atoms, inf)
}

/// Smallest ε with L ≤ ε almost surely (largest |atom| in the finite case).
pub fn pure_dp_epsilon(x: &Plrv) -> f64 {
    match x {
        Plrv::Discrete { atoms, infinity_mass } => {
            if *infinity_mass > 0.0 {
                f64::INFINITY
            } else {
                atoms.iter().map(|a| a.value.abs()).fold(0.0, f64::max)
            }
        }
        Plrv::Gaussian { mean, variance } => {
            if *variance == 0.0 {
                mean.abs()
            } else {
                f64::INFINITY
            }
        }
    }
}

/// P(X > t), counting the +∞ atom.
pub fn tail_probability(x: &Plrv, t: f64) -> f64 {
    match x {
        Plrv::Discrete { atoms, infinity_mass } => {
            let finite: f64 = atoms.iter().filter(|a| a.value > t + MERGE_TOL).map(|a| a.prob).sum();
            (finite + infinity_mass).min(1.0)
        }
        Plrv::Gaussian { mean, variance } => {
            if *variance == 0.0 {
                if *mean > t { 1.0 } else { 0.0 }
            } else {
                normal::sf((t - mean) / variance.sqrt())
            }
        }
    }
}

/// P(X ≥ t), counting the +∞ atom.
fn upper_probability(x: &[Atom], inf: f64, t: f64) -> f64 {
    x.iter().filter(|a| a.value >= t - MERGE_TOL).map(|a| a.prob).sum::<f64>() + inf
}

/// P(X ≤ t).
fn lower_probability(x: &[Atom], t: f64) -> f64 {
    x.iter().filter(|a| a.value <= t + MERGE_TOL).map(|a| a.prob).sum()
}

/// Closed-form Gaussian δ(ε) for separation μ.
pub fn gaussian_delta(mu: f64, eps: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let d = normal::cdf(-eps / mu + mu / 2.0) - eps.exp() * normal::cdf(-eps / mu - mu / 2.0);
    d.clamp(0.0, 1.0)
}

/// Tight approximate-DP δ at ε from the forward and reverse PLRVs:
/// P(fwd ≥ ε) − e^ε P(rev ≤ −ε), clamped to [0,1].
pub fn approx_dp_delta(forward: &Plrv, reverse: &Plrv, eps: f64) -> Result<f64, PlrvError> {
    check_param("eps", eps)?;
    match (forward, reverse) {
        (Plrv::Discrete { atoms: fa, infinity_mass: fi }, Plrv::Discrete { atoms: ra, .. }) => {
            let d = upper_probability(fa, *fi, eps) - eps.exp() * lower_probability(ra, -eps);
            Ok(d.clamp(0.0, 1.0))
        }
        (Plrv::Gaussian { mean: m1, variance: v1 }, Plrv::Gaussian { mean: m2, variance: v2 }) => {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
            if !close(*m1, *m2) || !close(*v1, *v2) {
                return Err(PlrvError::AsymmetricGaussian(*m1, *v1, *m2, *v2));
            }
            if !close(*m1, v1 / 2.0) {
                return Err(PlrvError::NotMechanismShaped { mean: *m1, variance: *v1 });
            }
            Ok(gaussian_delta(v1.sqrt(), eps))
        }
        _ => Err(PlrvError::RepresentationMismatch("forward and reverse PLRVs use different representations")),
    }
}

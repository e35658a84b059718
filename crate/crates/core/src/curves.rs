//! Named curve families sampled on a grid, with CSV/JSON serialization.

use crate::accountants::{self, PrivacyProfile};
use crate::bayes;
use crate::plrv;
use crate::tradeoff::{self, TradeoffCurve};
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("unknown curve kind {0:?}")]
    UnknownKind(String),
    #[error("bad grid {0:?}: expected start:stop:points[:log] with points >= 2")]
    BadGrid(String),
    #[error("missing parameter `{0}`")]
    MissingParam(&'static str),
    #[error("parameter `{name}` out of range: {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("unexpected parameter `{0}`")]
    UnexpectedParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    AdpGaussian,
    PbdpGaussian,
    ZcdpBound,
    TradeoffPure,
    TradeoffGaussian,
    TradeoffZcdp,
    BayesKnownRest,
    BayesArbitrary,
    BayesPbdp,
}

impl CurveKind {
    pub const ALL: [CurveKind; 9] = [
        CurveKind::AdpGaussian,
        CurveKind::PbdpGaussian,
        CurveKind::ZcdpBound,
        CurveKind::TradeoffPure,
        CurveKind::TradeoffGaussian,
        CurveKind::TradeoffZcdp,
        CurveKind::BayesKnownRest,
        CurveKind::BayesArbitrary,
        CurveKind::BayesPbdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveKind::AdpGaussian => "adp-gaussian",
            CurveKind::PbdpGaussian => "pbdp-gaussian",
            CurveKind::ZcdpBound => "zcdp-bound",
            CurveKind::TradeoffPure => "tradeoff-pure",
            CurveKind::TradeoffGaussian => "tradeoff-gaussian",
            CurveKind::TradeoffZcdp => "tradeoff-zcdp",
            CurveKind::BayesKnownRest => "bayes-known-rest",
            CurveKind::BayesArbitrary => "bayes-arbitrary",
            CurveKind::BayesPbdp => "bayes-pbdp",
        }
    }

    /// Column names (x, y).
    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            CurveKind::PbdpGaussian | CurveKind::BayesPbdp => ("delta", "epsilon"),
            CurveKind::TradeoffPure | CurveKind::TradeoffGaussian | CurveKind::TradeoffZcdp => ("level", "power"),
            _ => ("epsilon", "delta"),
        }
    }

    pub fn default_grid(self) -> Grid {
        match self.axes().0 {
            "delta" => Grid { start: 1e-6, stop: 0.5, points: 200, log: true },
            "level" => Grid { start: 0.0, stop: 1.0, points: 200, log: false },
            _ => Grid { start: 0.0, stop: 20.0, points: 200, log: false },
        }
    }

    fn accepted_params(self) -> &'static [&'static str] {
        match self {
            CurveKind::TradeoffPure => &["eps"],
            CurveKind::AdpGaussian | CurveKind::PbdpGaussian | CurveKind::TradeoffGaussian | CurveKind::BayesPbdp => {
                &["rho", "mu"]
            }
            _ => &["rho"],
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveKind {
    type Err = CurveError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CurveKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| CurveError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub log: bool,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            return tradeoff::log_spaced(self.start, self.stop, self.points);
        }
        let n = self.points - 1;
        (0..self.points)
            .map(|i| if i == n { self.stop } else { self.start + (self.stop - self.start) * i as f64 / n as f64 })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = CurveError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CurveError::BadGrid(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].parse().map_err(|_| bad())?;
        let points: usize = parts[2].parse().map_err(|_| bad())?;
        let log = match parts.get(3) {
            None => false,
            Some(&"log") => true,
            Some(_) => return Err(bad()),
        };
        if points < 2 || !start.is_finite() || !stop.is_finite() || stop <= start || (log && start <= 0.0) {
            return Err(bad());
        }
        Ok(Grid { start, stop, points, log })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub kind: CurveKind,
    pub params: BTreeMap<String, f64>,
    pub x_name: &'static str,
    pub y_name: &'static str,
    pub points: Vec<(f64, f64)>,
}

fn param(params: &BTreeMap<String, f64>, name: &'static str) -> Result<Option<f64>, CurveError> {
    match params.get(name) {
        None => Ok(None),
        Some(&v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        Some(&v) => Err(CurveError::BadParam { name, value: v }),
    }
}

fn positive_rho(params: &BTreeMap<String, f64>) -> Result<f64, CurveError> {
    let rho = param(params, "rho")?.ok_or(CurveError::MissingParam("rho"))?;
    if rho <= 0.0 {
        return Err(CurveError::BadParam { name: "rho", value: rho });
    }
    Ok(rho)
}

/// μ given directly or as √(2ρ).
fn mu_of(params: &BTreeMap<String, f64>) -> Result<f64, CurveError> {
    match (param(params, "mu")?, param(params, "rho")?) {
        (Some(_), Some(_)) => Err(CurveError::UnexpectedParam("give either mu or rho".into())),
        (Some(mu), None) => Ok(mu),
        (None, Some(rho)) => Ok((2.0 * rho).sqrt()),
        (None, None) => Err(CurveError::MissingParam("rho")),
    }
}

/// Evaluates the curve at each grid value.
pub fn sample_curve(kind: CurveKind, params: &BTreeMap<String, f64>, grid: &Grid) -> Result<CurveSample, CurveError> {
    if let Some(k) = params.keys().find(|k| !kind.accepted_params().contains(&k.as_str())) {
        return Err(CurveError::UnexpectedParam(k.clone()));
    }
    let xs = grid.values();
    let bad = |name: &'static str, value: f64| CurveError::BadParam { name, value };
    let ys: Vec<f64> = match kind {
        CurveKind::AdpGaussian => {
            let mu = mu_of(params)?;
            xs.iter().map(|&e| plrv::gaussian_delta(mu, e)).collect()
        }
        CurveKind::PbdpGaussian => {
            let mu = mu_of(params)?;
            xs.iter().map(|&d| accountants::gaussian_pbdp_epsilon(mu, d).map_err(|_| bad("delta", d))).collect::<Result<_, _>>()?
        }
        CurveKind::ZcdpBound => {
            let rho = positive_rho(params)?;
            xs.iter().map(|&e| accountants::zcdp_to_delta(rho, e).map_err(|_| bad("rho", rho))).collect::<Result<_, _>>()?
        }
        CurveKind::TradeoffPure => {
            let eps = param(params, "eps")?.ok_or(CurveError::MissingParam("eps"))?;
            xs.iter().map(|&l| tradeoff::pure_dp_power_bound(eps, l)).collect()
        }
        CurveKind::TradeoffGaussian => {
            let mu = mu_of(params)?;
            xs.iter().map(|&l| tradeoff::gaussian_exact_power(mu, l)).collect()
        }
        CurveKind::TradeoffZcdp => {
            let rho = positive_rho(params)?;
            let alphas = tradeoff::default_alpha_grid();
            xs.iter().map(|&l| tradeoff::zcdp_power_bound(rho, l, &alphas)).collect()
        }
        CurveKind::BayesKnownRest => {
            let profile = PrivacyProfile::zcdp(positive_rho(params)?).map_err(|_| bad("rho", f64::NAN))?;
            xs.iter().map(|&e| bayes::bayes_known_rest_delta(&profile, e)).collect()
        }
        CurveKind::BayesArbitrary => {
            let profile = PrivacyProfile::zcdp(positive_rho(params)?).map_err(|_| bad("rho", f64::NAN))?;
            xs.iter().map(|&e| bayes::bayes_arbitrary_prior_delta(&profile, e)).collect()
        }
        CurveKind::BayesPbdp => {
            let f = TradeoffCurve::GaussianExact { mu: mu_of(params)? };
            xs.iter().map(|&d| bayes::bayes_pbdp_curve(&f, d).map_err(|_| bad("delta", d))).collect::<Result<_, _>>()?
        }
    };
    let (x_name, y_name) = kind.axes();
    Ok(CurveSample { kind, params: params.clone(), x_name, y_name, points: xs.into_iter().zip(ys).collect() })
}

impl CurveSample {
    /// Header plus one row per point; floats use shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.x_name, self.y_name);
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }

    pub fn from_csv(kind: CurveKind, text: &str) -> Option<Vec<(f64, f64)>> {
        let mut lines = text.lines();
        let (x, y) = kind.axes();
        if lines.next()? != format!("{x},{y}") {
            return None;
        }
        lines
            .map(|l| {
                let (a, b) = l.split_once(',')?;
                Some((a.parse().ok()?, b.parse().ok()?))
            })
            .collect()
    }
}

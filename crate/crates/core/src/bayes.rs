//! Posterior-to-posterior semantics and an exact small-universe Bayes oracle.
//!
//! The counterfactual world replaces the target's record with a fresh draw
//! from the attacker's conditional prior π(r | D₋ₜ).

use crate::accountants::{self, AccountError, PrivacyProfile, RdpPoint};
use crate::plrv::{self, FiniteMechanismPair, PlrvError};
use crate::tradeoff::TradeoffCurve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("invalid prior: {0}")]
    BadPrior(&'static str),
    #[error("invalid mechanism: {0}")]
    BadMechanism(&'static str),
    #[error("output index {0} is out of range")]
    UnknownOutput(usize),
    #[error("output {0} has zero probability in both worlds")]
    ImpossibleOutput(usize),
    #[error(transparent)]
    Plrv(#[from] PlrvError),
}

const ROW_TOL: f64 = 1e-12;

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|p| p.is_finite() && *p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_TOL
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Attacker prior over the rest of the data and the target's record.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallUniversePrior {
    rest: Vec<(String, f64)>,
    records: Vec<String>,
    /// `conditional[d][r]` = π(r | D₋ₜ = d).
    conditional: Vec<Vec<f64>>,
}

impl SmallUniversePrior {
    pub fn new(rest: Vec<(String, f64)>, records: Vec<String>, conditional: Vec<Vec<f64>>) -> Result<Self, BayesError> {
        if rest.is_empty() || records.is_empty() {
            return Err(BayesError::BadPrior("needs at least one rest dataset and one record"));
        }
        if !is_distribution(&rest.iter().map(|r| r.1).collect::<Vec<_>>()) {
            return Err(BayesError::BadPrior("rest-dataset probabilities must sum to 1"));
        }
        if conditional.len() != rest.len() || conditional.iter().any(|row| row.len() != records.len() || !is_distribution(row)) {
            return Err(BayesError::BadPrior("each conditional row must be a distribution over records"));
        }
        Ok(Self { rest, records, conditional })
    }

    /// Prior under which the attacker knows the rest of the data exactly.
    pub fn known_rest(records: Vec<String>, conditional: Vec<f64>) -> Result<Self, BayesError> {
        Self::new(vec![("rest".to_string(), 1.0)], records, vec![conditional])
    }

    pub fn records(&self) -> &[String] {
        &self.records
    }
    pub fn rest(&self) -> &[(String, f64)] {
        &self.rest
    }
    pub fn conditional(&self) -> &[Vec<f64>] {
        &self.conditional
    }
}

/// Output distributions M(D₋ₜ ∪ {r}) for every rest dataset and record, in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMechanismFamily {
    outputs: Vec<String>,
    /// `log_probs[d][r][ω]`.
    log_probs: Vec<Vec<Vec<f64>>>,
}

impl FiniteMechanismFamily {
    pub fn from_probs(outputs: Vec<String>, probs: Vec<Vec<Vec<f64>>>) -> Result<Self, BayesError> {
        for row in probs.iter().flatten() {
            if row.len() != outputs.len() || !is_distribution(row) {
                return Err(BayesError::BadMechanism("every row must be a distribution over the outputs"));
            }
        }
        let log_probs = probs.into_iter().map(|d| d.into_iter().map(|r| r.into_iter().map(f64::ln).collect()).collect()).collect();
        Ok(Self { outputs, log_probs })
    }

    /// Rows given as unnormalised log weights; each row is normalised.
    pub fn from_log_weights(outputs: Vec<String>, weights: Vec<Vec<Vec<f64>>>) -> Result<Self, BayesError> {
        let mut log_probs = weights;
        for row in log_probs.iter_mut().flatten() {
            if row.len() != outputs.len() || row.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
                return Err(BayesError::BadMechanism("log weights must be finite or −∞"));
            }
            let z = log_sum_exp(row.iter().copied());
            if z == f64::NEG_INFINITY {
                return Err(BayesError::BadMechanism("row has no mass"));
            }
            row.iter_mut().for_each(|w| *w -= z);
        }
        Ok(Self { outputs, log_probs })
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o == label)
    }

    pub fn log_prob(&self, rest: usize, record: usize, omega: usize) -> f64 {
        self.log_probs[rest][record][omega]
    }

    fn check_against(&self, prior: &SmallUniversePrior) -> Result<(), BayesError> {
        if self.log_probs.len() != prior.rest.len() || self.log_probs.iter().any(|d| d.len() != prior.records.len()) {
            return Err(BayesError::BadMechanism("family must cover every (rest, record) combination"));
        }
        Ok(())
    }

    fn pair(&self, rest: usize, a: usize, b: usize) -> Result<FiniteMechanismPair, PlrvError> {
        let exp = |r: &Vec<f64>| r.iter().map(|x| x.exp()).collect::<Vec<f64>>();
        FiniteMechanismPair::new(self.outputs.clone(), exp(&self.log_probs[rest][a]), exp(&self.log_probs[rest][b]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesVerdict {
    pub actual_posterior: Vec<f64>,
    pub counterfactual_posterior: Vec<f64>,
    /// actual / counterfactual; +∞ where only the actual posterior is positive, 1 where both vanish.
    pub ratio: Vec<f64>,
    pub log_marginal_actual: f64,
    pub log_marginal_counterfactual: f64,
}

/// Actual and counterfactual posteriors over the target's record given ω.
pub fn exact_posteriors(prior: &SmallUniversePrior, mech: &FiniteMechanismFamily, omega: usize) -> Result<BayesVerdict, BayesError> {
    mech.check_against(prior)?;
    if omega >= mech.outputs.len() {
        return Err(BayesError::UnknownOutput(omega));
    }
    let n_rec = prior.records.len();
    let mut log_actual = vec![f64::NEG_INFINITY; n_rec];
    let mut log_cf = vec![f64::NEG_INFINITY; n_rec];
    for r in 0..n_rec {
        log_actual[r] = log_sum_exp(prior.rest.iter().enumerate().map(|(d, (_, pd))| {
            pd.ln() + prior.conditional[d][r].ln() + mech.log_probs[d][r][omega]
        }));
        log_cf[r] = log_sum_exp(prior.rest.iter().enumerate().map(|(d, (_, pd))| {
            let mixed = log_sum_exp((0..n_rec).map(|s| prior.conditional[d][s].ln() + mech.log_probs[d][s][omega]));
            pd.ln() + prior.conditional[d][r].ln() + mixed
        }));
    }
    let za = log_sum_exp(log_actual.iter().copied());
    let zc = log_sum_exp(log_cf.iter().copied());
    if za == f64::NEG_INFINITY && zc == f64::NEG_INFINITY {
        return Err(BayesError::ImpossibleOutput(omega));
    }
    let actual: Vec<f64> = log_actual.iter().map(|x| (x - za).exp()).collect();
    let cf: Vec<f64> = log_cf.iter().map(|x| (x - zc).exp()).collect();
    let ratio = log_actual
        .iter()
        .zip(&log_cf)
        .map(|(a, c)| match (*a == f64::NEG_INFINITY, *c == f64::NEG_INFINITY) {
            (true, true) => 1.0,
            (false, true) => f64::INFINITY,
            _ => ((a - za) - (c - zc)).exp(),
        })
        .collect();
    Ok(BayesVerdict {
        actual_posterior: actual,
        counterfactual_posterior: cf,
        ratio,
        log_marginal_actual: za,
        log_marginal_counterfactual: zc,
    })
}

/// Outcome of sweeping every output for posterior ratios outside [e^{−ε}, e^ε].
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCheck {
    /// Pure-DP ε of the family over all neighbor pairs.
    pub epsilon: f64,
    pub holds: bool,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

/// Largest pure-DP ε over all pairs of records sharing a rest dataset.
pub fn family_pure_epsilon(mech: &FiniteMechanismFamily) -> Result<f64, BayesError> {
    let mut eps: f64 = 0.0;
    for d in 0..mech.log_probs.len() {
        let n = mech.log_probs[d].len();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    eps = eps.max(plrv::pure_dp_epsilon(&plrv::plrv_of_finite_pair(&mech.pair(d, a, b)?)));
                }
            }
        }
    }
    Ok(eps)
}

pub fn pure_dp_ratio_bound_check(prior: &SmallUniversePrior, mech: &FiniteMechanismFamily) -> Result<RatioCheck, BayesError> {
    mech.check_against(prior)?;
    let epsilon = family_pure_epsilon(mech)?;
    let (mut max_ratio, mut min_ratio) = (1.0f64, 1.0f64);
    for omega in 0..mech.outputs.len() {
        let v = match exact_posteriors(prior, mech, omega) {
            Ok(v) => v,
            Err(BayesError::ImpossibleOutput(_)) => continue,
            Err(e) => return Err(e),
        };
        for (r, ratio) in v.ratio.iter().enumerate() {
            if v.actual_posterior[r] > 0.0 || v.counterfactual_posterior[r] > 0.0 {
                max_ratio = max_ratio.max(*ratio);
                min_ratio = min_ratio.min(*ratio);
            }
        }
    }
    let slack = 1e-12;
    let holds = max_ratio <= epsilon.exp() * (1.0 + slack) && min_ratio >= (-epsilon).exp() * (1.0 - slack);
    Ok(RatioCheck { epsilon, holds, max_ratio, min_ratio })
}

/// δ(ε) when the attacker knows everyone but the target and the prior is correct.
pub fn bayes_known_rest_delta(profile: &PrivacyProfile, eps: f64) -> f64 {
    match profile {
        PrivacyProfile::Zcdp(rho) => {
            if eps > *rho {
                (-(eps + rho).powi(2) / (4.0 * rho)).exp().min(1.0)
            } else {
                1.0
            }
        }
        PrivacyProfile::Rdp(points) => points
            .iter()
            .map(|p| (-(eps - p.gamma) * p.alpha - p.gamma).exp())
            .fold(1.0, f64::min)
            .clamp(0.0, 1.0),
    }
}

/// ε(δ) of the known-rest f-DP semantics; coincides with the pbdp curve of `f`.
pub fn bayes_pbdp_curve(f: &TradeoffCurve, delta: f64) -> Result<f64, AccountError> {
    accountants::fdp_to_epsdelta(f, delta)
}

/// δ(ε) for arbitrary attacker priors.
pub fn bayes_arbitrary_prior_delta(profile: &PrivacyProfile, eps: f64) -> f64 {
    match profile {
        PrivacyProfile::Zcdp(rho) => {
            if eps > *rho {
                (-(eps - rho).powi(2) / (4.0 * rho)).exp().min(1.0)
            } else {
                1.0
            }
        }
        PrivacyProfile::Rdp(points) => points
            .iter()
            .map(|p| ((p.alpha - 1.0) * (p.gamma - eps)).exp())
            .fold(1.0, f64::min)
            .clamp(0.0, 1.0),
    }
}

/// Closed-form posteriors for a noisy count with N(0,1) noise where the
/// attacker believes the count is 1 (target has the attribute) or 0.
/// Returns (actual, counterfactual, ratio) for "target has the attribute".
pub fn wrong_prior_closed_form(prior_target: f64, omega: f64) -> (f64, f64, f64) {
    let actual = 1.0 / (1.0 + (1.0 - prior_target) / prior_target * (-(omega - 0.5)).exp());
    (actual, prior_target, actual / prior_target)
}

/// The same setting with outputs discretised to a 0.1 grid on [−10, 110].
pub fn wrong_prior_discretized(prior_target: f64, omega: f64) -> Result<BayesVerdict, BayesError> {
    let ks: Vec<i64> = (-100..=1100).collect();
    let outputs: Vec<String> = ks.iter().map(|k| format!("{:.1}", *k as f64 / 10.0)).collect();
    let row = |count: f64| ks.iter().map(|&k| -(k as f64 / 10.0 - count).powi(2) / 2.0).collect::<Vec<f64>>();
    let mech = FiniteMechanismFamily::from_log_weights(outputs, vec![vec![row(1.0), row(0.0)]])?;
    let prior = SmallUniversePrior::known_rest(
        vec!["has attribute".into(), "lacks attribute".into()],
        vec![prior_target, 1.0 - prior_target],
    )?;
    let idx = (omega * 10.0).round() as i64 + 100;
    if !(0..ks.len() as i64).contains(&idx) {
        return Err(BayesError::UnknownOutput(usize::MAX));
    }
    exact_posteriors(&prior, &mech, idx as usize)
}

/// RDP points of a known-rest family: γ(α) = max over record pairs of D_α.
pub fn family_rdp_points(rows: &[Vec<f64>], alphas: &[f64]) -> Vec<RdpPoint> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut gamma: f64 = 0.0;
            for (a, p) in rows.iter().enumerate() {
                for (b, q) in rows.iter().enumerate() {
                    if a != b {
                        gamma = gamma.max(accountants::renyi_divergence(p, q, alpha));
                    }
                }
            }
            RdpPoint { alpha, gamma }
        })
        .collect()
}

/// Empirical frequency of a posterior-ratio exceedance with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exceedance {
    pub frequency: f64,
    pub std_error: f64,
    pub draws: u64,
}

const SIM_SHARDS: u64 = 16;

/// Monte Carlo estimate of P_ω(ratio for `target` ≥ e^ε) under a correct
/// known-rest prior: r ~ π(·), ω ~ M(r).
pub fn simulate_known_rest_exceedance(
    conditional: &[f64],
    rows: &[Vec<f64>],
    target: usize,
    eps: f64,
    draws: u64,
    seed: u64,
) -> Exceedance {
    let n_out = rows[0].len();
    let exceeds: Vec<bool> = (0..n_out)
        .map(|w| {
            let mix: f64 = conditional.iter().zip(rows).map(|(c, row)| c * row[w]).sum();
            mix > 0.0 && rows[target][w] >= eps.exp() * mix
        })
        .collect();
    let cum = |p: &[f64]| {
        let mut acc = 0.0;
        p.iter().map(|x| { acc += x; acc }).collect::<Vec<f64>>()
    };
    let rec_cdf = cum(conditional);
    let row_cdfs: Vec<Vec<f64>> = rows.iter().map(|r| cum(r)).collect();
    let pick = |cdf: &[f64], u: f64| cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    let hits: u64 = (0..SIM_SHARDS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let n = draws / SIM_SHARDS + u64::from(s < draws % SIM_SHARDS);
            (0..n)
                .filter(|_| {
                    let r = pick(&rec_cdf, rng.random::<f64>() * rec_cdf[rec_cdf.len() - 1]);
                    let cdf = &row_cdfs[r];
                    let w = pick(cdf, rng.random::<f64>() * cdf[cdf.len() - 1]);
                    exceeds[w]
                })
                .count() as u64
        })
        .sum();
    let p = hits as f64 / draws as f64;
    Exceedance { frequency: p, std_error: (p * (1.0 - p) / draws as f64).sqrt(), draws }
}

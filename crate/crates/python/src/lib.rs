//! Python bindings for the `dpsem` core crate.

use dpsem::accountants::{self, Odometer as CoreOdometer, PrivacyProfile};
use dpsem::bayes;
use dpsem::census::{self, AllocationTable};
use dpsem::curves::{sample_curve as core_sample_curve, CurveKind, Grid};
use dpsem::mc::{mc_roc, AffectedQuerySet};
use dpsem::plrv::{self, FiniteMechanismPair};
use dpsem::tradeoff;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeMap;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Privacy-loss random variable: finite atoms plus mass at +∞, or a Gaussian.
#[pyclass(name = "Plrv", module = "pydpsem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPlrv(plrv::Plrv);

#[pymethods]
impl PyPlrv {
    #[staticmethod]
    #[pyo3(signature = (atoms, infinity_mass = 0.0))]
    fn discrete(atoms: Vec<(f64, f64)>, infinity_mass: f64) -> PyResult<Self> {
        plrv::Plrv::discrete(&atoms, infinity_mass).map(Self).map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (eps, differing = true))]
    fn randomized_response(eps: f64, differing: bool) -> PyResult<Self> {
        plrv::rr_plrv(eps, differing).map(Self).map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (eps, differing = true))]
    fn geometric(eps: f64, differing: bool) -> PyResult<Self> {
        plrv::geometric_plrv(eps, differing).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn gaussian(mu: f64) -> PyResult<Self> {
        plrv::gaussian_plrv(mu).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn sampling(n: u64, m: u64) -> PyResult<Self> {
        plrv::sampling_plrv(n, m).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn of_pair(p1: Vec<f64>, p2: Vec<f64>) -> PyResult<Self> {
        let pair = FiniteMechanismPair::from_probs(p1, p2).map_err(value_err)?;
        Ok(Self(plrv::plrv_of_finite_pair(&pair)))
    }

    /// Distribution of the summed losses of two independent releases.
    fn compose(&self, other: &PyPlrv) -> PyResult<Self> {
        plrv::compose(&self.0, &other.0).map(Self).map_err(value_err)
    }

    /// (value, prob) pairs; empty for the Gaussian form.
    fn atoms(&self) -> Vec<(f64, f64)> {
        self.0.atoms().iter().map(|a| (a.value, a.prob)).collect()
    }

    #[getter]
    fn infinity_mass(&self) -> f64 {
        self.0.infinity_mass()
    }

    /// (mean, variance) for the Gaussian form, else None.
    fn gaussian_params(&self) -> Option<(f64, f64)> {
        match self.0 {
            plrv::Plrv::Gaussian { mean, variance } => Some((mean, variance)),
            _ => None,
        }
    }

    fn pure_dp_epsilon(&self) -> f64 {
        plrv::pure_dp_epsilon(&self.0)
    }

    /// P(loss ≥ t).
    fn tail_probability(&self, t: f64) -> f64 {
        plrv::tail_probability(&self.0, t)
    }

    fn __repr__(&self) -> String {
        format!("Plrv({:?})", self.0)
    }
}

/// Approximate-DP δ at ε from the forward and reverse loss variables.
#[pyfunction]
fn approx_dp_delta(forward: &PyPlrv, reverse: &PyPlrv, eps: f64) -> PyResult<f64> {
    plrv::approx_dp_delta(&forward.0, &reverse.0, eps).map_err(value_err)
}

#[pyfunction]
fn gaussian_delta(mu: f64, eps: f64) -> f64 {
    plrv::gaussian_delta(mu, eps)
}

#[pyfunction]
fn gaussian_pbdp_epsilon(mu: f64, delta: f64) -> PyResult<f64> {
    accountants::gaussian_pbdp_epsilon(mu, delta).map_err(value_err)
}

/// Tight pbdp δ at ε for a finite pair, maximised over both orders.
#[pyfunction]
fn pbdp_delta_finite(p1: Vec<f64>, p2: Vec<f64>, eps: f64) -> PyResult<f64> {
    let pair = FiniteMechanismPair::from_probs(p1, p2).map_err(value_err)?;
    accountants::pbdp_delta_finite(&pair, eps).map_err(value_err)
}

#[pyfunction]
fn zcdp_to_delta(rho: f64, eps: f64) -> PyResult<f64> {
    accountants::zcdp_to_delta(rho, eps).map_err(value_err)
}

#[pyfunction]
fn pure_dp_power_bound(eps: f64, level: f64) -> f64 {
    tradeoff::pure_dp_power_bound(eps, level)
}

#[pyfunction]
fn gaussian_exact_power(mu: f64, level: f64) -> f64 {
    tradeoff::gaussian_exact_power(mu, level)
}

#[pyfunction]
fn zcdp_power_bound(rho: f64, level: f64) -> f64 {
    tradeoff::zcdp_power_bound(rho, level, &tradeoff::default_alpha_grid())
}

#[pyfunction]
fn bayes_known_rest_delta(rho: f64, eps: f64) -> PyResult<f64> {
    Ok(bayes::bayes_known_rest_delta(&PrivacyProfile::zcdp(rho).map_err(value_err)?, eps))
}

#[pyfunction]
fn bayes_arbitrary_prior_delta(rho: f64, eps: f64) -> PyResult<f64> {
    Ok(bayes::bayes_arbitrary_prior_delta(&PrivacyProfile::zcdp(rho).map_err(value_err)?, eps))
}

/// Sample a named curve, e.g. `sample_curve("zcdp-bound", {"rho": 2.63}, "0:20:200")`.
#[pyfunction]
#[pyo3(signature = (kind, params, grid = None))]
fn sample_curve(kind: &str, params: BTreeMap<String, f64>, grid: Option<&str>) -> PyResult<Vec<(f64, f64)>> {
    let kind: CurveKind = kind.parse().map_err(value_err)?;
    let grid: Grid = match grid {
        Some(g) => g.parse().map_err(value_err)?,
        None => kind.default_grid(),
    };
    Ok(core_sample_curve(kind, &params, &grid).map_err(value_err)?.points)
}

/// Total ρ of the production allocation as an exact fraction string.
#[pyfunction]
fn production_total_rho() -> String {
    census::format_fraction(&census::total_rho(&AllocationTable::production()))
}

/// ρ of a builtin scenario (A–H).
#[pyfunction]
fn scenario_rho(name: &str) -> PyResult<f64> {
    let s = census::builtin_scenario(name).ok_or_else(|| value_err(format!("unknown scenario {name:?}")))?;
    Ok(census::to_f64(&census::scenario_rho(&AllocationTable::production(), &s)))
}

#[pyfunction]
fn scenario_power(rho: f64, level: f64) -> f64 {
    census::scenario_power(rho, level)
}

/// Monte Carlo (level, power, se) rows for "production" or "scenario:<A-H>".
#[pyfunction]
fn mc_power(py: Python<'_>, allocation: &str, n: usize, seed: u64, levels: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let table = AllocationTable::production();
    let queries = match allocation {
        "production" => AffectedQuerySet::full(&table),
        other => {
            let name = other.strip_prefix("scenario:").ok_or_else(|| value_err(format!("bad allocation {other:?}")))?;
            let s = census::builtin_scenario(name).ok_or_else(|| value_err(format!("unknown scenario {name:?}")))?;
            AffectedQuerySet::scenario(&table, &s)
        }
    };
    let roc = py.detach(|| mc_roc(&queries, n, seed)).map_err(value_err)?;
    Ok(levels.into_iter().map(|l| (l, roc.power_at(l), roc.std_error_at(l))).collect())
}

/// zCDP budget ledger that refuses charges past its cap.
#[pyclass(name = "Odometer", module = "pydpsem")]
struct PyOdometer(CoreOdometer);

#[pymethods]
impl PyOdometer {
    #[new]
    fn new(cap: f64) -> PyResult<Self> {
        CoreOdometer::new(cap).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn from_ledger(text: &str) -> PyResult<Self> {
        CoreOdometer::from_ledger(text).map(Self).map_err(value_err)
    }

    /// Charge ρ under a label; returns the remaining budget.
    fn register(&mut self, label: &str, rho: f64) -> PyResult<f64> {
        self.0.register(label, rho).map_err(value_err)
    }

    #[getter]
    fn cap(&self) -> f64 {
        self.0.cap()
    }

    #[getter]
    fn spent(&self) -> f64 {
        self.0.spent()
    }

    #[getter]
    fn remaining(&self) -> f64 {
        self.0.remaining()
    }

    fn entries(&self) -> Vec<(String, f64, f64)> {
        self.0.entries().iter().map(|e| (e.label.clone(), e.rho, e.cumulative)).collect()
    }

    fn to_ledger(&self) -> String {
        self.0.to_ledger()
    }
}

#[pymodule]
fn pydpsem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlrv>()?;
    m.add_class::<PyOdometer>()?;
    m.add_function(wrap_pyfunction!(approx_dp_delta, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_delta, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_pbdp_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(pbdp_delta_finite, m)?)?;
    m.add_function(wrap_pyfunction!(zcdp_to_delta, m)?)?;
    m.add_function(wrap_pyfunction!(pure_dp_power_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_exact_power, m)?)?;
    m.add_function(wrap_pyfunction!(zcdp_power_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_known_rest_delta, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_arbitrary_prior_delta, m)?)?;
    m.add_function(wrap_pyfunction!(sample_curve, m)?)?;
    m.add_function(wrap_pyfunction!(production_total_rho, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_rho, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_power, m)?)?;
    m.add_function(wrap_pyfunction!(mc_power, m)?)?;
    Ok(())
}

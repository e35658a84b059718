//! Differential-privacy semantics toolkit.
//!
//! Privacy-loss random variables, trade-off curves, accounting conversions,
//! Bayesian posterior-ratio bounds, the 2020 Census redistricting budget
//! tables and a discrete-Gaussian Monte Carlo power estimator.

pub mod accountants;
pub mod bayes;
pub mod census;
pub mod curves;
pub mod mc;
pub mod normal;
pub mod plrv;
pub mod tradeoff;

pub use accountants::{EpsDeltaCurve, Odometer, PrivacyProfile, RdpPoint, Semantics};
pub use plrv::{FiniteMechanismPair, Plrv};
pub use tradeoff::TradeoffCurve;

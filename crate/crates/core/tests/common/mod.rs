#![allow(dead_code)]

use dpsem::curves::{sample_curve, CurveKind, Grid};
use dpsem::FiniteMechanismPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Set to regenerate the frozen golden files.
pub const BLESS_VAR: &str = "DPSEM_BLESS";

pub const PRODUCTION_RHO: f64 = 2.63;
pub const EPS_GRID: &str = "0:20:200";
pub const DELTA_GRID: &str = "1e-6:0.5:200";

pub struct GoldenSpec {
    pub figure: &'static str,
    pub kind: CurveKind,
    pub grid: &'static str,
}

impl GoldenSpec {
    pub fn path(&self) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden/v1")
            .join(self.figure)
            .join(format!("{}.csv", self.kind.name()))
    }

    pub fn render(&self) -> String {
        let params = BTreeMap::from([("rho".to_string(), PRODUCTION_RHO)]);
        let grid: Grid = self.grid.parse().unwrap();
        sample_curve(self.kind, &params, &grid).unwrap().to_csv()
    }

    /// Compares the regenerated CSV with the frozen file byte for byte.
    pub fn check(&self) -> Result<(), String> {
        let fresh = self.render();
        let path = self.path();
        if std::env::var_os(BLESS_VAR).is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &fresh).unwrap();
        }
        let frozen = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if frozen == fresh {
            Ok(())
        } else {
            let line = frozen.lines().zip(fresh.lines()).position(|(a, b)| a != b);
            Err(format!("{} differs (first differing line {line:?})", path.display()))
        }
    }
}

pub fn golden_specs() -> Vec<GoldenSpec> {
    vec![
        GoldenSpec { figure: "fig1", kind: CurveKind::AdpGaussian, grid: EPS_GRID },
        GoldenSpec { figure: "fig1", kind: CurveKind::PbdpGaussian, grid: DELTA_GRID },
        GoldenSpec { figure: "fig1", kind: CurveKind::ZcdpBound, grid: EPS_GRID },
        GoldenSpec { figure: "fig3", kind: CurveKind::BayesKnownRest, grid: EPS_GRID },
        GoldenSpec { figure: "fig4", kind: CurveKind::BayesPbdp, grid: DELTA_GRID },
        GoldenSpec { figure: "fig5", kind: CurveKind::BayesArbitrary, grid: EPS_GRID },
    ]
}

/// Random pair over `k` outputs; roughly one pair in four gets a zero entry.
pub fn random_pair(rng: &mut ChaCha8Rng, k: usize) -> FiniteMechanismPair {
    let draw = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        if rng.random::<f64>() < 0.25 {
            let i = rng.random_range(0..k);
            v[i] = 0.0;
        }
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let p1 = draw(rng);
    let p2 = draw(rng);
    FiniteMechanismPair::from_probs(p1, p2).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force pbdp δ over randomized binary tests, for each ε in `eps`:
/// sup of P_a(A = 1) over tests with P_a(A = 1) > e^ε P_b(A = 1), taken over
/// both orders (a, b). Acceptance probabilities of all but the last output
/// run over a grid of step 1/`steps`; the last one is optimised exactly.
pub fn grid_pbdp_delta(pair: &FiniteMechanismPair, eps: &[f64], steps: usize) -> Vec<f64> {
    let (p, q) = (pair.p1(), pair.p2());
    let k = p.len();
    let last = k - 1;
    let ks: Vec<f64> = eps.iter().map(|e| e.exp()).collect();
    let mut best = vec![0.0f64; eps.len()];
    let mut idx = vec![0usize; last];
    let h = 1.0 / steps as f64;
    loop {
        let (mut s1, mut s2) = (0.0, 0.0);
        for (i, &a) in idx.iter().enumerate() {
            let a = a as f64 * h;
            s1 += a * p[i];
            s2 += a * q[i];
        }
        for (j, &ke) in ks.iter().enumerate() {
            best[j] = best[j].max(sup_last(s1, s2, p[last], q[last], ke)).max(sup_last(s2, s1, q[last], p[last], ke));
        }
        // Odometer-style increment over the grid.
        let mut d = 0;
        while d < last {
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == last {
            break;
        }
    }
    best
}

/// Exact pbdp δ as a linear program over acceptance probabilities: the
/// optimum sits at a vertex with at most one fractional coordinate, so it
/// suffices to pick that coordinate and enumerate 0/1 for the rest.
pub fn vertex_pbdp_delta(pair: &FiniteMechanismPair, eps: f64) -> f64 {
    let (p, q) = (pair.p1(), pair.p2());
    let k = p.len();
    let ke = eps.exp();
    let mut best = 0.0f64;
    for free in 0..k {
        for mask in 0u32..(1 << (k - 1)) {
            let (mut s1, mut s2) = (0.0, 0.0);
            let mut bit = 0;
            for i in (0..k).filter(|&i| i != free) {
                if mask >> bit & 1 == 1 {
                    s1 += p[i];
                    s2 += q[i];
                }
                bit += 1;
            }
            best = best.max(sup_last(s1, s2, p[free], q[free], ke)).max(sup_last(s2, s1, q[free], p[free], ke));
        }
    }
    best
}

/// sup over x ∈ [0,1] of s_a + x·a subject to s_a + x·a > k(s_b + x·b).
/// Margins within rounding of zero count as equality, which is not a violation.
fn sup_last(sa: f64, sb: f64, a: f64, b: f64, k: f64) -> f64 {
    let slack = 1e-12 * (sa + a + k * (sb + b));
    let margin = sa - k * sb - slack;
    let slope = a - k * b;
    let x = if slope >= 0.0 {
        if margin + slope > 0.0 {
            1.0
        } else {
            return 0.0;
        }
    } else if margin > 0.0 {
        (margin / -slope).min(1.0)
    } else {
        return 0.0;
    };
    sa + x * a
}

/// Random prior over `n_rest` rest datasets and `n_rec` records. Each row is
/// raised to a random power so that some priors are close to degenerate.
pub fn random_prior(rng: &mut ChaCha8Rng, n_rest: usize, n_rec: usize) -> dpsem::bayes::SmallUniversePrior {
    let dist = |rng: &mut ChaCha8Rng, n: usize| {
        let power = 1.0 + 8.0 * rng.random::<f64>();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powf(power) + 1e-9).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let rest = dist(rng, n_rest).into_iter().enumerate().map(|(i, p)| (format!("d{i}"), p)).collect();
    let records = (0..n_rec).map(|i| format!("r{i}")).collect();
    let conditional = (0..n_rest).map(|_| dist(rng, n_rec)).collect();
    dpsem::bayes::SmallUniversePrior::new(rest, records, conditional).unwrap()
}

/// Randomized response at ε on bit(record) XOR bit(rest dataset).
pub fn rr_xor_family(eps: f64, n_rest: usize, n_rec: usize) -> dpsem::bayes::FiniteMechanismFamily {
    let e = eps.exp();
    let (hi, lo) = (e / (1.0 + e), 1.0 / (1.0 + e));
    let probs = (0..n_rest)
        .map(|d| (0..n_rec).map(|r| if (r ^ d) & 1 == 1 { vec![lo, hi] } else { vec![hi, lo] }).collect())
        .collect();
    dpsem::bayes::FiniteMechanismFamily::from_probs(vec!["0".into(), "1".into()], probs).unwrap()
}

pub fn rr_rows(eps: f64) -> Vec<Vec<f64>> {
    let e = eps.exp();
    vec![vec![e / (1.0 + e), 1.0 / (1.0 + e)], vec![1.0 / (1.0 + e), e / (1.0 + e)]]
}

/// Gaussian noise with standard deviation `sigma` around each record's value,
/// restricted to the integers in [−20, 20] and renormalised.
pub fn gaussian_grid_rows(values: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|c| {
            let w: Vec<f64> = (-20..=20).map(|k| (-(k as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

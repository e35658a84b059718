//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use common::{gaussian_grid_rows, golden_specs, grid_pbdp_delta, random_pair, random_prior, rng, rr_rows, rr_xor_family};
use dpsem::accountants::{fdp_to_epsdelta, gaussian_pbdp_epsilon, pbdp_delta_finite, zcdp_to_delta, PrivacyProfile};
use dpsem::bayes::{
    bayes_arbitrary_prior_delta, bayes_known_rest_delta, exact_posteriors, family_rdp_points, pure_dp_ratio_bound_check,
    simulate_known_rest_exceedance, wrong_prior_closed_form, wrong_prior_discretized,
};
use dpsem::census::{builtin_scenario, builtin_scenarios, scenario_bayes_epsilon, scenario_power, scenario_rho, to_f64, total_rho, AllocationTable, Rho};
use dpsem::mc::{mc_roc, AffectedQuerySet, EmpiricalRoc};
use dpsem::plrv::{
    compose, gaussian_plrv, geometric_plrv, pure_dp_epsilon, rr_plrv, sampling_plrv, tail_probability, Atom, Plrv,
};
use dpsem::tradeoff::{default_alpha_grid, gaussian_exact_power, pure_dp_power_bound, zcdp_power_bound};
use dpsem::TradeoffCurve;
use rand::Rng;
use std::time::{Duration, Instant};

const LEVELS: [f64; 3] = [0.01, 0.05, 0.10];
const MC_SAMPLES: usize = 1_000_000;
const MC_SEED: u64 = 7;

// Tolerances, pinned.
const TABLE1_HALF_UNIT: f64 = 5e-4 + 1e-12;
const TABLE1_BUDGET: Duration = Duration::from_secs(1);
const TABLE2_GAUSS_TOL: f64 = 0.005;
const TABLE2_ZCDP_TOL: f64 = 0.01;
const TABLE2_MC_TOL: f64 = 0.005;
const MC_BUDGET: Duration = Duration::from_secs(300);
const SCENARIO_RHO_TOL: f64 = 5e-3;
const SCENARIO_POWER_TOL: f64 = 0.01;
const PBDP_GRID_STEPS: usize = 200;
const PBDP_GRID_TOL: f64 = 2e-2;
const MARGINAL_TOL: f64 = 1e-12;
const CROSS_FORMULA_TOL: f64 = 1e-9;
const CLOSENESS_FLOOR: f64 = 0.01;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_1() -> Outcome {
    let eps = [0.1, 0.5, 1.0, 2.0, 4.0];
    let printed = [
        [0.011, 0.016, 0.027, 0.074, 0.550],
        [0.055, 0.820, 0.136, 0.370, 0.983],
        [0.111, 0.165, 0.272, 0.739, 0.984],
    ];
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut flagged = String::new();
    for (li, &level) in LEVELS.iter().enumerate() {
        for (ei, &e) in eps.iter().enumerate() {
            let v = pure_dp_power_bound(e, level);
            if (e, level) == (0.5, 0.05) {
                // Printed 0.820 is a transposed digit; the formula gives 0.082.
                if (v - 0.082).abs() > TABLE1_HALF_UNIT {
                    bad.push(format!("(ε={e}, ℓ={level}) formula {v:.5} expected 0.082"));
                }
                flagged = format!("flagged (0.5, 0.05): printed 0.820, formula {v:.3}");
            } else if (v - printed[li][ei]).abs() > TABLE1_HALF_UNIT {
                bad.push(format!("(ε={e}, ℓ={level}) formula {v:.5} printed {:.3}", printed[li][ei]));
            }
        }
    }
    let took = start.elapsed();
    if took > TABLE1_BUDGET {
        bad.push(format!("took {took:?}"));
    }
    if bad.is_empty() {
        Ok(format!("15 cells match; {flagged}"))
    } else {
        Err(format!("{}; {flagged}", bad.join("; ")))
    }
}

struct McRun {
    roc: EmpiricalRoc,
    rho: f64,
    took: Duration,
}

fn run_mc(q: &AffectedQuerySet) -> McRun {
    let start = Instant::now();
    let roc = mc_roc(q, MC_SAMPLES, MC_SEED).expect("mc_roc");
    McRun { roc, rho: q.total_rho(), took: start.elapsed() }
}

fn criterion_2(prod: &McRun) -> Outcome {
    let gauss = [0.49, 0.74, 0.84];
    let zcdp = [0.70, 0.95, 0.96];
    let mu = 5.26f64.sqrt();
    let alphas = default_alpha_grid();
    let mut bad = Vec::new();
    let mut got = Vec::new();
    for (i, &l) in LEVELS.iter().enumerate() {
        let g = gaussian_exact_power(mu, l);
        let z = zcdp_power_bound(2.63, l, &alphas);
        let m = prod.roc.power_at(l);
        let se = prod.roc.std_error_at(l);
        got.push(format!("{l}: gauss {g:.4} zcdp {z:.4} mc {m:.4}±{se:.4}"));
        if (g - gauss[i]).abs() > TABLE2_GAUSS_TOL {
            bad.push(format!("gauss@{l}"));
        }
        if (z - zcdp[i]).abs() > TABLE2_ZCDP_TOL {
            bad.push(format!("zcdp@{l}"));
        }
        if (m - gauss[i]).abs() > TABLE2_MC_TOL {
            bad.push(format!("mc@{l}"));
        }
        // The run must be precise enough that its 3σ band fits inside the tolerance.
        if 3.0 * se > TABLE2_MC_TOL {
            bad.push(format!("mc 3se@{l}={:.4}", 3.0 * se));
        }
    }
    if prod.took > MC_BUDGET {
        bad.push(format!("mc took {:?}", prod.took));
    }
    let msg = format!("{} (mc {:.1}s)", got.join(", "), prod.took.as_secs_f64());
    check(bad.is_empty(), if bad.is_empty() { msg } else { format!("{}: {msg}", bad.join(",")) })
}

fn criterion_3() -> Outcome {
    let table = AllocationTable::production();
    let mut bad = Vec::new();
    if total_rho(&table) != Rho::new(263, 100) {
        bad.push(format!("total ρ {}", total_rho(&table)));
    }
    let mut n_powers = 0;
    for s in builtin_scenarios() {
        let rho = to_f64(&scenario_rho(&table, &s));
        let want = s.expected_rho.expect("builtin scenarios carry ρ");
        if (rho - want).abs() > SCENARIO_RHO_TOL {
            bad.push(format!("{} ρ {rho:.4} vs {want}", s.name));
        }
        if let Some(p) = s.expected_powers {
            for (i, &l) in LEVELS.iter().enumerate() {
                n_powers += 1;
                let v = scenario_power(rho, l);
                if (v - p[i]).abs() > SCENARIO_POWER_TOL {
                    bad.push(format!("{} power@{l} {v:.4} vs {}", s.name, p[i]));
                }
            }
        }
    }
    check(bad.is_empty(), if bad.is_empty() { format!("8 scenario ρ, {n_powers} powers, total ρ = 263/100") } else { bad.join("; ") })
}

fn criterion_4() -> Outcome {
    let specs = golden_specs();
    let errs: Vec<String> = specs.iter().filter_map(|s| s.check().err()).collect();
    check(errs.is_empty(), if errs.is_empty() { format!("{} golden files bit-identical", specs.len()) } else { errs.join("; ") })
}

fn atoms_eq(x: &Plrv, want: &[(f64, f64)], inf: f64, tol: f64) -> bool {
    let a: &[Atom] = x.atoms();
    a.len() == want.len()
        && a.iter().zip(want).all(|(a, w)| (a.value - w.0).abs() <= tol && (a.prob - w.1).abs() <= tol)
        && (x.infinity_mass() - inf).abs() <= tol
}

fn criterion_5() -> Outcome {
    let l3 = 3f64.ln();
    let e = 1f64;
    let ee = e.exp();
    let mut bad = Vec::new();
    let mut t = |name: &str, ok: bool| {
        if !ok {
            bad.push(name.to_string());
        }
    };
    t("rr(ln3)", atoms_eq(&rr_plrv(l3, true).unwrap(), &[(-l3, 0.25), (l3, 0.75)], 0.0, 1e-15));
    t("rr off-bit", atoms_eq(&rr_plrv(l3, false).unwrap(), &[(0.0, 1.0)], 0.0, 0.0));
    t("geometric(ln3)", atoms_eq(&geometric_plrv(l3, true).unwrap(), &[(-l3, 0.25), (l3, 0.75)], 0.0, 1e-15));
    t("geometric(1)", atoms_eq(&geometric_plrv(1.0, true).unwrap(), &[(-1.0, 1.0 / (1.0 + ee)), (1.0, ee / (1.0 + ee))], 0.0, 1e-15));
    t("gaussian(1)", gaussian_plrv(1.0).unwrap() == Plrv::Gaussian { mean: 0.5, variance: 1.0 });
    t("gaussian(0)", gaussian_plrv(0.0).unwrap().is_point_mass_at_zero());
    t("sampling(100,10)", atoms_eq(&sampling_plrv(100, 10).unwrap(), &[(0.0, 0.9)], 0.1, 1e-15));
    t("sampling(5,5)", sampling_plrv(5, 5).unwrap().infinity_mass() == 1.0);
    let rr = rr_plrv(e, true).unwrap();
    let rr2 = compose(&rr, &rr).unwrap();
    let d = (1.0 + ee).powi(2);
    t("compose rr", atoms_eq(&rr2, &[(-2.0 * e, 1.0 / d), (0.0, 2.0 * ee / d), (2.0 * e, ee * ee / d)], 0.0, 1e-15));
    let (a, b) = (0.7f64, 1.3f64);
    match compose(&gaussian_plrv(a).unwrap(), &gaussian_plrv(b).unwrap()).unwrap() {
        Plrv::Gaussian { mean, variance } => {
            t("compose gaussian", (mean - (a * a + b * b) / 2.0).abs() < 1e-15 && (variance - (a * a + b * b)).abs() < 1e-15)
        }
        _ => t("compose gaussian kind", false),
    }
    t("compose identity", compose(&rr, &Plrv::zero()).unwrap() == rr);
    let tail2 = tail_probability(&rr2, e / 2.0);
    let tail1 = tail_probability(&rr, e / 2.0);
    t("tailpost values", (tail2 - ee * ee / d).abs() < 1e-15 && (tail1 - ee / (1.0 + ee)).abs() < 1e-15);
    t("tailpost ordering", 0.0 < tail2 && tail2 < tail1);
    t("pure ε of rr∘rr", (pure_dp_epsilon(&rr2) - 2.0 * e).abs() < 1e-15);
    check(bad.is_empty(), if bad.is_empty() { "PLRV examples, composition, tail ordering, 2ε".into() } else { bad.join(", ") })
}

fn criterion_6() -> Outcome {
    let eps = [0.1, 0.5, 1.0];
    let mut r = rng(2026);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pair = random_pair(&mut r, 4);
        let grid = grid_pbdp_delta(&pair, &eps, PBDP_GRID_STEPS);
        for (e, g) in eps.iter().zip(grid) {
            let b = pbdp_delta_finite(&pair, *e).unwrap();
            worst = worst.max((b - g).abs());
        }
    }
    check(worst <= PBDP_GRID_TOL, format!("50 pairs × 3 ε, max |bisection − grid| = {worst:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut bad = Vec::new();
    let mut r = rng(71);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n_rest = r.random_range(1..=3);
        let n_rec = r.random_range(2..=4);
        let prior = random_prior(&mut r, n_rest, n_rec);
        let c = pure_dp_ratio_bound_check(&prior, &rr_xor_family(1.0, n_rest, n_rec)).unwrap();
        if !c.holds {
            bad.push(format!("ratio bound violated: {c:?}"));
            break;
        }
        worst = worst.max(c.max_ratio.ln());
    }
    if !(0.9..=1.0 + 1e-12).contains(&worst) {
        bad.push(format!("worst log ratio {worst}"));
    }
    let (_, _, closed) = wrong_prior_closed_form(0.01, 101.3);
    let disc = wrong_prior_discretized(0.01, 101.3).unwrap().ratio[0];
    if !(disc > 50.0 && (closed - 100.0).abs() < 1e-6) {
        bad.push(format!("wrong prior: discretized {disc}, closed {closed}"));
    }
    let mut r = rng(72);
    let mut marg = 0.0f64;
    for _ in 0..200 {
        let n_rest = r.random_range(1..=3);
        let prior = random_prior(&mut r, n_rest, 3);
        let mech = rr_xor_family(0.7, n_rest, 3);
        for w in 0..2 {
            let v = exact_posteriors(&prior, &mech, w).unwrap();
            marg = marg.max((v.log_marginal_actual.exp() - v.log_marginal_counterfactual.exp()).abs());
        }
    }
    if marg > MARGINAL_TOL {
        bad.push(format!("marginal gap {marg:e}"));
    }
    let cases: [(Vec<Vec<f64>>, Vec<f64>); 3] = [
        (rr_rows(1.0), vec![0.3, 0.7]),
        (gaussian_grid_rows(&[0.0, 1.0, 2.0, 3.0], 1.5), vec![0.1, 0.2, 0.3, 0.4]),
        (gaussian_grid_rows(&[0.0, 1.0], 0.8), vec![0.05, 0.95]),
    ];
    let mut n_mc = 0;
    for (ci, (rows, cond)) in cases.iter().enumerate() {
        let profile = PrivacyProfile::rdp(family_rdp_points(rows, &default_alpha_grid())).unwrap();
        for target in 0..rows.len() {
            for (i, e) in [0.05, 0.2, 0.5, 1.0, 2.0].into_iter().enumerate() {
                n_mc += 1;
                let bound = bayes_known_rest_delta(&profile, e);
                let ex = simulate_known_rest_exceedance(cond, rows, target, e, 100_000, 1000 * ci as u64 + 10 * target as u64 + i as u64);
                if ex.frequency > bound + 3.0 * ex.std_error {
                    bad.push(format!("case {ci} target {target} ε {e}: {} > {bound}", ex.frequency));
                }
            }
        }
    }
    let msg = format!("500 priors (max log ratio {worst:.4}), wrong-prior ratio {disc:.2}, marginal gap {marg:.1e}, {n_mc} MC checks");
    check(bad.is_empty(), if bad.is_empty() { msg } else { bad.join("; ") })
}

fn criterion_8() -> Outcome {
    let rho = 2.63f64;
    let mu = (2.0 * rho).sqrt();
    let curve = TradeoffCurve::GaussianExact { mu };
    let mut worst = 0.0f64;
    for i in 0..200 {
        let d = (1e-6f64.ln() + (0.5f64.ln() - 1e-6f64.ln()) * i as f64 / 199.0).exp();
        let a = fdp_to_epsdelta(&curve, d).unwrap();
        let b = gaussian_pbdp_epsilon(mu, d).unwrap();
        let c = scenario_bayes_epsilon(rho, d).unwrap();
        worst = worst.max((a - b).abs()).max((a - c).abs()).max((b - c).abs());
    }
    let mut exact = true;
    for i in 0..=200 {
        let e = i as f64 * 0.1;
        let p = PrivacyProfile::zcdp(rho).unwrap();
        exact &= bayes_arbitrary_prior_delta(&p, e) == zcdp_to_delta(rho, e).unwrap();
    }
    check(
        worst <= CROSS_FORMULA_TOL && exact,
        format!("max pairwise ε gap {worst:.1e} over 200 δ; arbitrary-prior = zCDP tail exactly: {exact}"),
    )
}

fn closeness(name: &str, run: &McRun, bad: &mut Vec<String>) -> f64 {
    let mu = (2.0 * run.rho).sqrt();
    let mut worst = 0.0f64;
    for i in 1..=99 {
        let l = i as f64 / 100.0;
        let gap = (run.roc.power_at(l) - gaussian_exact_power(mu, l)).abs();
        let tol = (3.0 * run.roc.std_error_at(l)).max(CLOSENESS_FLOOR);
        if gap > tol {
            bad.push(format!("{name}@{l}: gap {gap:.4} > {tol:.4}"));
        }
        worst = worst.max(gap);
    }
    worst
}

fn criterion_9(prod: &McRun, a: &McRun) -> Outcome {
    let mut bad = Vec::new();
    let wp = closeness("production", prod, &mut bad);
    let wa = closeness("scenario A", a, &mut bad);
    let msg = format!(
        "max gap production {wp:.4}, scenario A {wa:.4} (A powers {:.4}/{:.4}/{:.4})",
        a.roc.power_at(0.01),
        a.roc.power_at(0.05),
        a.roc.power_at(0.10)
    );
    check(bad.is_empty(), if bad.is_empty() { msg } else { bad.join("; ") })
}

fn report(n: u32, out: Outcome, failed: &mut u32) {
    match out {
        Ok(m) => println!("PASS criterion {n}: {m}"),
        Err(m) => {
            *failed += 1;
            println!("FAIL criterion {n}: {m}");
        }
    }
}

fn main() {
    // Answer test discovery without running the suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    report(1, criterion_1(), &mut failed);
    let table = AllocationTable::production();
    let prod = run_mc(&AffectedQuerySet::full(&table));
    report(2, criterion_2(&prod), &mut failed);
    report(3, criterion_3(), &mut failed);
    report(4, criterion_4(), &mut failed);
    report(5, criterion_5(), &mut failed);
    report(6, criterion_6(), &mut failed);
    report(7, criterion_7(), &mut failed);
    report(8, criterion_8(), &mut failed);
    let a = run_mc(&AffectedQuerySet::scenario(&table, &builtin_scenario("A").unwrap()));
    report(9, criterion_9(&prod, &a), &mut failed);
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

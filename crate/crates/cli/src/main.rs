//! `dpsem` command-line entry point.

mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsem::accountants::{gaussian_pbdp_epsilon, zcdp_to_delta, Odometer, PrivacyProfile};
use dpsem::bayes::{bayes_arbitrary_prior_delta, bayes_known_rest_delta, bayes_pbdp_curve};
use dpsem::TradeoffCurve;
use dpsem::census::{
    builtin_scenario, builtin_scenarios, format_fraction, scenario_bayes_epsilon, scenario_power, scenario_rho, to_f64,
    total_rho, AllocationTable, Scenario, PRODUCTION_TOML,
};
use dpsem::curves::{sample_curve, CurveKind, CurveSample, Grid};
use dpsem::mc::{mc_roc, AffectedQuerySet, RunManifest};
use dpsem::plrv::gaussian_delta;
use dpsem::tradeoff::{default_alpha_grid, gaussian_exact_power, pure_dp_power_bound, zcdp_power_bound};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "DPSEM_OUT_DIR";
const LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "dpsem", version, about = "Privacy semantics curves, census budget tables and Monte Carlo power runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a named curve on a grid.
    Curve(CurveArgs),
    /// Print the pure-DP power table, the production and Scenario A power tables, and scenario powers.
    Tables,
    /// ρ, powers and the Bayesian ε(δ) curve of a builtin scenario (A–H) or a scenario TOML file.
    Scenario(ScenarioArgs),
    /// Monte Carlo ROC of the discrete Gaussian release; writes a CSV and a manifest JSON.
    Mc(McArgs),
    /// Maintain a zCDP budget ledger file.
    Odometer {
        #[command(subcommand)]
        action: OdometerAction,
    },
    /// Convert one privacy parameter into the quantities derived from it.
    Convert(ConvertArgs),
    /// Emit the production allocation table, or validate one.
    Allocation(AllocationArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Args)]
struct OutArgs {
    /// Output file; defaults to stdout, or to a generated name inside $DPSEM_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    /// One of adp-gaussian, pbdp-gaussian, zcdp-bound, tradeoff-pure, tradeoff-gaussian, tradeoff-zcdp, bayes-known-rest, bayes-arbitrary, bayes-pbdp.
    kind: String,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// start:stop:points[:log]; defaults per curve kind.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Builtin name A–H, or a path to a scenario TOML file.
    name_or_file: String,
    /// δ grid for the Bayesian ε(δ) curve.
    #[arg(long, default_value = "1e-6:0.5:200")]
    grid: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct McArgs {
    /// production, scenario:<A-H>, or file:<allocation.toml>.
    allocation: String,
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// ROC CSV path; the manifest is written next to it with a .manifest.json suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OdometerAction {
    /// Create an empty ledger with a cap.
    Init {
        ledger: PathBuf,
        #[arg(long)]
        cap: f64,
        /// Overwrite an existing ledger.
        #[arg(long)]
        force: bool,
    },
    /// Append a ρ charge; refused (exit 4) if it would exceed the cap.
    Register {
        ledger: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        rho: f64,
    },
    /// Print the ledger and remaining budget as JSON.
    Show { ledger: PathBuf },
}

#[derive(Args)]
struct ConvertArgs {
    /// zCDP budget.
    #[arg(long, conflicts_with = "mu")]
    rho: Option<f64>,
    /// Gaussian mechanism parameter (shift over noise scale).
    #[arg(long)]
    mu: Option<f64>,
    /// Report δ at this ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Report ε at this δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Report power at this significance level.
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Args)]
struct AllocationArgs {
    /// Validate this allocation TOML instead of printing the production table.
    #[arg(long)]
    check: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Curve(a) => cmd_curve(a),
        Command::Tables => cmd_tables(),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Odometer { action } => cmd_odometer(action),
        Command::Convert(a) => cmd_convert(a),
        Command::Allocation(a) => cmd_allocation(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpsem: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_VAR).map(PathBuf::from)
}

/// Writes to `--out`, else to `$DPSEM_OUT_DIR/<default_name>`, else stdout.
fn emit(out: &OutArgs, default_name: &str, text: &str) -> CliResult {
    match (&out.out, out_dir()) {
        (Some(p), _) => write_file(p, text),
        (None, Some(dir)) => write_file(&dir.join(default_name), text),
        (None, None) => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
        Format::Svg => "svg",
    }
}

/// JSON numbers cannot be infinite; those points become null.
fn num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn curve_json(s: &CurveSample) -> serde_json::Value {
    json!({
        "kind": s.kind.name(),
        "params": s.params,
        "x": s.x_name,
        "y": s.y_name,
        "points": s.points.iter().map(|&(x, y)| json!([num(x), num(y)])).collect::<Vec<_>>(),
    })
}

fn render_curve(s: &CurveSample, format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Csv => s.to_csv(),
        Format::Json => pretty(&curve_json(s))?,
        Format::Svg => svg::line_chart(&format!("{} {}", s.kind.name(), describe_params(&s.params)), s.x_name, s.y_name, &[(s.kind.name(), &s.points)]),
    })
}

fn pretty(v: &serde_json::Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| CliError::Invariant(e.to_string()))
}

fn describe_params(p: &BTreeMap<String, f64>) -> String {
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn cmd_curve(a: CurveArgs) -> CliResult {
    let kind: CurveKind = a.kind.parse().map_err(usage)?;
    let grid: Grid = match &a.grid {
        Some(g) => g.parse().map_err(usage)?,
        None => kind.default_grid(),
    };
    let mut params = BTreeMap::new();
    for (name, v) in [("rho", a.rho), ("mu", a.mu), ("eps", a.eps)] {
        if let Some(v) = v {
            params.insert(name.to_string(), v);
        }
    }
    let sample = sample_curve(kind, &params, &grid).map_err(usage)?;
    let text = render_curve(&sample, a.format)?;
    let stem = std::iter::once(kind.name().to_string()).chain(params.iter().map(|(k, v)| format!("{k}{v}"))).collect::<Vec<_>>().join("_");
    emit(&a.out, &format!("{stem}.{}", ext(a.format)), &text)
}

fn cmd_tables() -> CliResult {
    let mut s = String::new();
    let eps = [0.1, 0.5, 1.0, 2.0, 4.0];
    let _ = writeln!(s, "Maximum power under pure ε-DP: min(e^ε ℓ, 1 − e^(−ε)(1 − ℓ))");
    let _ = writeln!(s, "{:>6} {}", "level", eps.iter().map(|e| format!("{:>7}", format!("ε={e}"))).collect::<String>());
    for l in LEVELS {
        let row: String = eps.iter().map(|&e| format!("{:>7.3}", pure_dp_power_bound(e, l))).collect();
        let _ = writeln!(s, "{l:>6.2} {row}");
    }
    let _ = writeln!(s, "note: the published table prints 0.820 at (ε=0.5, ℓ=0.05); the formula gives 0.082 (transposed digits).");
    let _ = writeln!(s, "note: published 0.550 at (ε=4, ℓ=0.01) and 0.370 at (ε=2, ℓ=0.05) differ from the formula's 0.546 and 0.369.");

    let alphas = default_alpha_grid();
    let table = AllocationTable::production();
    let mut power_table = |title: &str, rho: f64| {
        let mu = (2.0 * rho).sqrt();
        let _ = writeln!(s, "\n{title} (ρ = {rho}, μ = √(2ρ) = {mu:.4})");
        let _ = writeln!(s, "{:>6} {:>9} {:>12}", "level", "Gaussian", "zCDP bound");
        for l in LEVELS {
            let _ = writeln!(s, "{l:>6.2} {:>9.2} {:>12.2}", gaussian_exact_power(mu, l), zcdp_power_bound(rho, l, &alphas));
        }
        let _ = writeln!(s, "discrete Gaussian column: run `dpsem mc {}`", if title.starts_with("Scenario") { "scenario:A" } else { "production" });
    };
    power_table("Production redistricting release", to_f64(&total_rho(&table)));
    let a = builtin_scenario("A").expect("builtin");
    power_table("Scenario A, block level", to_f64(&scenario_rho(&table, &a)));

    let _ = writeln!(s, "\nScenario powers (Gaussian approximation, unit shift, variance 1/(2ρ))");
    let _ = writeln!(s, "{:>4} {:>8} {:>6} {:>6} {:>6}  published", "", "ρ", "0.01", "0.05", "0.10");
    for sc in builtin_scenarios() {
        let rho = to_f64(&scenario_rho(&table, &sc));
        let p: Vec<String> = LEVELS.iter().map(|&l| format!("{:>6.2}", scenario_power(rho, l))).collect();
        let published = match (sc.expected_rho, sc.expected_powers) {
            (Some(r), Some(pw)) => format!("ρ≈{r}, {}/{}/{}", pw[0], pw[1], pw[2]),
            (Some(r), None) => format!("ρ≈{r}"),
            _ => String::new(),
        };
        let _ = writeln!(s, "{:>4} {rho:>8.4} {}  {published}", sc.name, p.join(" "));
    }
    print!("{s}");
    Ok(())
}

fn load_scenario(name_or_file: &str) -> Result<Scenario, CliError> {
    if let Some(s) = builtin_scenario(name_or_file) {
        return Ok(s);
    }
    let path = Path::new(name_or_file);
    if !path.exists() {
        return Err(CliError::Usage(format!("unknown scenario {name_or_file:?}: expected A–H or a scenario file")));
    }
    Scenario::from_toml_str(&read(path)?).map_err(usage)
}

fn cmd_scenario(a: ScenarioArgs) -> CliResult {
    let sc = load_scenario(&a.name_or_file)?;
    let grid: Grid = a.grid.parse().map_err(usage)?;
    let table = AllocationTable::production();
    let exact = scenario_rho(&table, &sc);
    let rho = to_f64(&exact);
    let powers: Vec<(f64, f64)> = LEVELS.iter().map(|&l| (l, scenario_power(rho, l))).collect();
    let curve: Vec<(f64, f64)> = grid
        .values()
        .into_iter()
        .map(|d| scenario_bayes_epsilon(rho, d).map(|e| (d, e)))
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    let text = match a.format {
        Format::Json => pretty(&json!({
            "name": sc.name,
            "narrative": sc.narrative,
            "queries": sc.selected.len(),
            "rho": rho,
            "rho_exact": format_fraction(&exact),
            "powers": powers.iter().map(|(l, p)| json!({"level": l, "power": p})).collect::<Vec<_>>(),
            "bayes_epsilon": curve.iter().map(|&(d, e)| json!({"delta": d, "epsilon": num(e)})).collect::<Vec<_>>(),
        }))?,
        Format::Csv => {
            let mut s = format!("# scenario {} rho={rho} rho_exact={}\n", sc.name, format_fraction(&exact));
            for (l, p) in &powers {
                let _ = writeln!(s, "# power level={l} power={p}");
            }
            s.push_str("delta,epsilon\n");
            for (d, e) in &curve {
                let _ = writeln!(s, "{d},{e}");
            }
            s
        }
        Format::Svg => svg::line_chart(&format!("scenario {} (ρ = {rho:.4})", sc.name), "delta", "epsilon", &[("bayes ε(δ)", &curve)]),
    };
    emit(&a.out, &format!("scenario_{}.{}", sc.name, ext(a.format)), &text)
}

fn load_allocation(spec: &str) -> Result<AffectedQuerySet, CliError> {
    if spec == "production" {
        return Ok(AffectedQuerySet::full(&AllocationTable::production()));
    }
    if let Some(name) = spec.strip_prefix("scenario:") {
        let sc = builtin_scenario(name).ok_or_else(|| CliError::Usage(format!("unknown scenario {name:?}")))?;
        return Ok(AffectedQuerySet::scenario(&AllocationTable::production(), &sc));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let table = AllocationTable::from_toml_str(&read(Path::new(path))?).map_err(usage)?;
        return Ok(AffectedQuerySet::full(&table));
    }
    Err(CliError::Usage(format!("bad allocation {spec:?}: expected production, scenario:<A-H> or file:<path>")))
}

fn cmd_mc(a: McArgs) -> CliResult {
    let queries = load_allocation(&a.allocation)?;
    let roc = mc_roc(&queries, a.n, a.seed).map_err(usage)?;
    let levels: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let csv = roc.to_csv(&levels);
    let manifest = RunManifest::new(&a.allocation, &queries, a.seed, a.n);
    let manifest_json = pretty(&json!({
        "allocation": manifest.allocation,
        "seed": manifest.seed,
        "n": manifest.n,
        "allocation_digest": manifest.allocation_digest,
        "total_rho": manifest.total_rho,
        "cells": manifest.cells,
    }))?;
    let stem = a.allocation.replace([':', '/', '\\'], "_");
    let csv_path = match (a.out, out_dir()) {
        (Some(p), _) => p,
        (None, Some(dir)) => dir.join(format!("mc_{stem}_seed{}.csv", a.seed)),
        (None, None) => PathBuf::from(format!("mc_{stem}_seed{}.csv", a.seed)),
    };
    let manifest_path = csv_path.with_extension("manifest.json");
    write_file(&csv_path, &csv)?;
    write_file(&manifest_path, &manifest_json)?;
    let headline: Vec<String> = LEVELS.iter().map(|&l| format!("{l}: {:.4} ± {:.4}", roc.power_at(l), roc.std_error_at(l))).collect();
    println!("{}", headline.join(", "));
    println!("wrote {} and {}", csv_path.display(), manifest_path.display());
    Ok(())
}

fn load_ledger(path: &Path) -> Result<Odometer, CliError> {
    Odometer::from_ledger(&read(path)?).map_err(|e| CliError::Invariant(format!("{}: {e}", path.display())))
}

fn ledger_json(o: &Odometer) -> serde_json::Value {
    json!({
        "cap": o.cap(),
        "spent": o.spent(),
        "remaining": o.remaining(),
        "entries": o.entries().iter().map(|e| json!({"label": e.label, "rho": e.rho, "cumulative": e.cumulative})).collect::<Vec<_>>(),
    })
}

fn cmd_odometer(action: OdometerAction) -> CliResult {
    match action {
        OdometerAction::Init { ledger, cap, force } => {
            if ledger.exists() && !force {
                return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", ledger.display())));
            }
            let o = Odometer::new(cap).map_err(usage)?;
            write_file(&ledger, &o.to_ledger())
        }
        OdometerAction::Register { ledger, label, rho } => {
            let mut o = load_ledger(&ledger)?;
            match o.register(&label, rho) {
                Ok(remaining) => {
                    write_file(&ledger, &o.to_ledger())?;
                    println!("registered {label} (ρ = {rho}); remaining {remaining}");
                    Ok(())
                }
                Err(e @ dpsem::accountants::OdometerError::OverBudget { .. }) => Err(CliError::Invariant(e.to_string())),
                Err(e) => Err(usage(e)),
            }
        }
        OdometerAction::Show { ledger } => {
            print!("{}", pretty(&ledger_json(&load_ledger(&ledger)?))?);
            Ok(())
        }
    }
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    let nonneg = |name: &str, v: f64| if v.is_finite() && v >= 0.0 { Ok(v) } else { Err(CliError::Usage(format!("--{name} must be finite and ≥ 0"))) };
    let (rho, mu) = match (a.rho, a.mu) {
        (Some(r), None) => {
            let r = nonneg("rho", r)?;
            (Some(r), (2.0 * r).sqrt())
        }
        (None, Some(m)) => (None, nonneg("mu", m)?),
        _ => return Err(CliError::Usage("give exactly one of --rho or --mu".into())),
    };
    if a.eps.is_none() && a.delta.is_none() && a.level.is_none() {
        return Err(CliError::Usage("give at least one of --eps, --delta, --level".into()));
    }
    let mut out = serde_json::Map::new();
    out.insert("mu".into(), json!(mu));
    if let Some(r) = rho {
        out.insert("rho".into(), json!(r));
    }
    if let Some(e) = a.eps {
        let e = nonneg("eps", e)?;
        let mut m = serde_json::Map::new();
        m.insert("approx_dp_delta".into(), num(gaussian_delta(mu, e)));
        if let Some(r) = rho.filter(|&r| r > 0.0) {
            let p = PrivacyProfile::zcdp(r).map_err(usage)?;
            m.insert("zcdp_tail_delta".into(), num(zcdp_to_delta(r, e).map_err(usage)?));
            m.insert("bayes_known_rest_delta".into(), num(bayes_known_rest_delta(&p, e)));
            m.insert("bayes_arbitrary_prior_delta".into(), num(bayes_arbitrary_prior_delta(&p, e)));
        }
        out.insert("at_eps".into(), json!({"eps": e, "values": m}));
    }
    if let Some(d) = a.delta {
        if !(d > 0.0 && d <= 1.0) {
            return Err(CliError::Usage("--delta must lie in (0, 1]".into()));
        }
        let e = gaussian_pbdp_epsilon(mu, d).map_err(usage)?;
        let bayes = bayes_pbdp_curve(&TradeoffCurve::GaussianExact { mu }, d).map_err(usage)?;
        out.insert("at_delta".into(), json!({"delta": d, "pbdp_epsilon": num(e), "bayes_known_rest_epsilon": num(bayes)}));
    }
    if let Some(l) = a.level {
        if !(0.0..=1.0).contains(&l) {
            return Err(CliError::Usage("--level must lie in [0, 1]".into()));
        }
        let mut m = serde_json::Map::new();
        m.insert("gaussian_power".into(), num(gaussian_exact_power(mu, l)));
        if let Some(r) = rho.filter(|&r| r > 0.0) {
            m.insert("zcdp_power_bound".into(), num(zcdp_power_bound(r, l, &default_alpha_grid())));
        }
        out.insert("at_level".into(), json!({"level": l, "values": m}));
    }
    print!("{}", pretty(&serde_json::Value::Object(out))?);
    Ok(())
}

fn cmd_allocation(a: AllocationArgs) -> CliResult {
    match a.check {
        Some(path) => {
            let table = AllocationTable::from_toml_str(&read(&path)?).map_err(usage)?;
            let total = total_rho(&table);
            println!("ok: total ρ = {} ≈ {}", format_fraction(&total), to_f64(&total));
            Ok(())
        }
        None => emit(&a.out, "production.toml", PRODUCTION_TOML),
    }
}

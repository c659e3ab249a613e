use serde::Serialize;

use super::timescale::timescale_requirement;
use crate::config::{LeakageConfig, LeakageModeConfig, NamedScalar, ScalarSpec, StrategyConfig};
use crate::error::{Error, Result};
use crate::model::Microgrid;

/// A tuning recipe. `None` fields keep the value of the model it is applied to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningStrategy {
    pub id: Option<usize>,
    pub name: String,
    pub b_v: Option<Vec<f64>>,
    pub leakage: Option<LeakageConfig>,
    pub i_rated: Option<Vec<f64>>,
    pub k_v: Option<ScalarSpec>,
}

fn threshold() -> LeakageConfig {
    LeakageConfig { mode: LeakageModeConfig::Threshold, alpha: ScalarSpec::Named(NamedScalar::VMax), b: 5.0, eta: 1.0 }
}

fn always_active() -> LeakageConfig {
    LeakageConfig { mode: LeakageModeConfig::AlwaysActive, alpha: ScalarSpec::Value(48.0), b: 0.58, eta: 0.47 }
}

impl TuningStrategy {
    /// Built-in strategies 1–6.
    pub fn catalog(id: usize) -> Result<Self> {
        let v_star = ScalarSpec::Named(NamedScalar::VStar);
        let k130 = ScalarSpec::Value(130.0);
        let (leakage, b_v, i_rated, k_v) = match id {
            1 => (threshold(), vec![16.0, 46.0, 17.0, 14.0], None, v_star),
            2 => (always_active(), vec![0.0, 16.0, 0.0, 0.0], None, v_star),
            3 => (always_active(), vec![0.0; 4], Some(vec![12.0, 8.0, 8.0, 8.0]), v_star),
            4 => (threshold(), vec![43.0, 73.0, 45.0, 36.0], None, k130),
            5 => (always_active(), vec![0.0, 46.0, 0.0, 0.0], None, k130),
            6 => (always_active(), vec![0.0; 4], Some(vec![12.0, 11.0, 11.0, 11.0]), k130),
            _ => return Err(Error::UnknownStrategy(id)),
        };
        Ok(Self {
            id: Some(id),
            name: format!("strategy {id}"),
            b_v: Some(b_v),
            leakage: Some(leakage),
            i_rated,
            k_v: Some(k_v),
        })
    }
}

/// Catalogue entry for `id`, with any explicitly given field overriding it.
/// Without an id the fields are taken as they stand.
pub fn strategy_from_config(cfg: &StrategyConfig) -> Result<TuningStrategy> {
    let mut s = match cfg.id {
        Some(id) => TuningStrategy::catalog(id)?,
        None => TuningStrategy {
            id: None,
            name: "custom".into(),
            b_v: None,
            leakage: None,
            i_rated: None,
            k_v: None,
        },
    };
    if let Some(b) = &cfg.b_v {
        s.b_v = Some(b.clone());
    }
    if let Some(l) = &cfg.leakage {
        s.leakage = Some(l.clone());
    }
    if let Some(r) = &cfg.i_rated {
        s.i_rated = Some(r.clone());
    }
    if let Some(k) = cfg.k_v {
        s.k_v = Some(k);
    }
    if let Some(n) = &cfg.name {
        s.name = n.clone();
    }
    Ok(s)
}

/// Applies the overrides and sets every τ_i to the rounded time-scale requirement.
pub fn apply_strategy(mg: &Microgrid, s: &TuningStrategy) -> Result<Microgrid> {
    let mut net = mg.net.clone();
    let mut p = mg.params.clone();
    let env = mg.env;
    if let Some(r) = &s.i_rated {
        net = net.with_ratings(r)?;
    }
    if let Some(b) = &s.b_v {
        p.b_v = b.clone();
    }
    if let Some(l) = &s.leakage {
        p.set_leakage(l, &env);
    }
    if let Some(k) = s.k_v {
        p.k_v = vec![env.resolve(k); mg.n_i()];
    }
    let mut out = Microgrid::new(net, mg.graph.clone(), p, env)?;
    let tau = timescale_requirement(&out, &s.name).required_tau_rounded;
    out.params.tau = vec![tau; out.n_i()];
    Ok(out)
}

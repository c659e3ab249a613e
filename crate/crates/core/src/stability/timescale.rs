use serde::Serialize;

use crate::model::Microgrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimescaleReport {
    pub strategy: String,
    pub alpha_eff: f64,
    pub b_v_max: f64,
    /// (α_eff + max B_v) times the slowest fast constant [s].
    pub required_tau: f64,
    /// Smallest whole second strictly above `required_tau`.
    pub required_tau_rounded: f64,
    pub binding: String,
    pub binding_value: f64,
    /// Smallest configured τ_i [s].
    pub actual_tau: f64,
    pub pass: bool,
}

/// Largest of τ_p, τ_d and the electrical L/R, L/R, C/G constants, with its name.
/// Loads without a constant conductance do not define a C/G ratio and are skipped.
pub fn slowest_fast_constant(mg: &Microgrid) -> (String, f64) {
    let p = &mg.params;
    let net = &mg.net;
    let mut best = ("tau_p".to_string(), f64::NEG_INFINITY);
    let mut offer = |name: String, value: f64| {
        if value > best.1 {
            best = (name, value);
        }
    };
    for (i, &t) in p.tau_p.iter().enumerate() {
        offer(format!("tau_p[{}]", i + 1), t);
    }
    for (i, &t) in p.tau_d.iter().enumerate() {
        offer(format!("tau_d[{}]", i + 1), t);
    }
    for d in &net.dgs {
        offer(format!("L/R of DG {}", d.id), d.l / d.r);
    }
    for l in &net.lines {
        offer(format!("L/R of line {}", l.id), l.l / l.r);
    }
    for n in &net.nodes {
        if n.g_cte > 0.0 {
            offer(format!("C/G of load {}", n.id), n.c / n.g_cte);
        }
    }
    best
}

/// Inner-loop time constant needed to keep the controller slower than every
/// fast constant once leakage is accounted for.
pub fn timescale_requirement(mg: &Microgrid, strategy: &str) -> TimescaleReport {
    let p = &mg.params;
    let alpha_eff = p.alpha;
    let b_v_max = p.b_v.iter().copied().fold(0.0, f64::max);
    let (binding, binding_value) = slowest_fast_constant(mg);
    let required_tau = (alpha_eff + b_v_max) * binding_value;
    let mut rounded = required_tau.ceil();
    if rounded <= required_tau {
        rounded += 1.0;
    }
    let actual_tau = p.tau.iter().copied().fold(f64::INFINITY, f64::min);
    TimescaleReport {
        strategy: strategy.to_string(),
        alpha_eff,
        b_v_max,
        required_tau,
        required_tau_rounded: rounded,
        binding,
        binding_value,
        actual_tau,
        pass: actual_tau > required_tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::stability::{apply_strategy, TuningStrategy};

    fn base() -> Microgrid {
        Microgrid::from_config(&presets::table1()).unwrap()
    }

    #[test]
    fn table_two() {
        let mg = base();
        for (id, want) in (1..=6).zip([9.0, 6.0, 5.0, 11.0, 9.0, 5.0]) {
            let tuned = apply_strategy(&mg, &TuningStrategy::catalog(id).unwrap()).unwrap();
            let r = timescale_requirement(&tuned, "s");
            assert_eq!(r.required_tau_rounded, want, "strategy {id}: {}", r.required_tau);
            assert!(r.binding.starts_with("C/G"));
            assert!((r.binding_value - 0.088).abs() < 1e-12);
            assert!(r.pass);
            assert_eq!(r.actual_tau, want);
        }
    }

    #[test]
    fn no_leakage_limit() {
        let mut mg = base();
        mg.params.b_v = vec![0.0; 4];
        mg.params.alpha = 1.0;
        let r = timescale_requirement(&mg, "x");
        assert_eq!(r.required_tau, r.binding_value);
        mg.params.alpha = 0.0;
        assert_eq!(timescale_requirement(&mg, "x").required_tau, 0.0);
    }

    #[test]
    fn doubling_dominant_leakage() {
        let mut mg = base();
        mg.params.alpha = 1e-9;
        mg.params.b_v = vec![10.0, 30.0, 5.0, 0.0];
        let a = timescale_requirement(&mg, "x").required_tau;
        mg.params.b_v.iter_mut().for_each(|b| *b *= 2.0);
        let b = timescale_requirement(&mg, "x").required_tau;
        assert!((b / a - 2.0).abs() < 1e-9);
    }

    #[test]
    fn base_case_meets_default_tau() {
        let r = timescale_requirement(&base(), "base");
        assert!((r.required_tau - 50.4 * 0.088).abs() < 1e-9);
        assert_eq!(r.actual_tau, 5.0);
        assert!(r.pass);
    }
}

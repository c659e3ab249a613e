//! Controller nonlinearities and per-agent control dynamics.
//!
//! The leakage ρ is evaluated literally as
//! `α (1 + ½[tanh(b(v − η v_pos)) − tanh(b(v − η v_neg))])`.
//! With symmetric thresholds the bracket lies in (−2, 0), so ρ is smallest at
//! v = 0 with value `α (1 − tanh(b η v_pos))` and rises towards α once v leaves
//! `(η v_neg, η v_pos)`. For the threshold variant (b = 5) the inner value is
//! practically zero, i.e. a dead zone; the always-active variant (b = 0.58,
//! η = 0.47) keeps a small positive floor everywhere. ρ never exceeds α.

use nalgebra::DMatrix;

use crate::config::{ControllerConfig, LeakageConfig, LeakageModeConfig, NamedScalar, ScalarSpec};
use crate::error::{positive, Error, Result};
use crate::netmodel::CyberGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageEnvelope {
    pub v_n: f64,
    pub phi: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_star: f64,
    pub delta: f64,
    pub v_tol: f64,
    pub v_pos: f64,
    pub v_neg: f64,
}

impl VoltageEnvelope {
    pub fn resolve(&self, spec: ScalarSpec) -> f64 {
        match spec {
            ScalarSpec::Value(x) => x,
            ScalarSpec::Named(NamedScalar::VStar) => self.v_star,
            ScalarSpec::Named(NamedScalar::VMax) => self.v_max,
            ScalarSpec::Named(NamedScalar::VNominal) => self.v_n,
        }
    }

    pub fn contains(&self, u: f64) -> bool {
        (self.v_min..=self.v_max).contains(&u)
    }
}

pub fn derive_envelope(v_n: f64, phi: f64, v_tol: f64) -> Result<VoltageEnvelope> {
    positive("v_n", v_n)?;
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidEnvelope(format!("phi = {phi} must lie in (0, 1)")));
    }
    let v_min = (1.0 - phi) * v_n;
    let v_max = (1.0 + phi) * v_n;
    let v_star = 0.5 * (v_min + v_max);
    let delta = 0.5 * (v_max - v_min);
    if !(v_tol > 0.0 && v_tol < delta * (1.0 - 1e-12)) {
        return Err(Error::InvalidEnvelope(format!("v_tol = {v_tol} must lie in (0, Δ = {delta})")));
    }
    let arg = (v_max - v_tol - v_star) / delta;
    if !(arg > -1.0 && arg < 1.0) {
        return Err(Error::InvalidEnvelope(format!("atanh argument {arg} outside (-1, 1)")));
    }
    let v_pos = delta * arg.atanh();
    Ok(VoltageEnvelope { v_n, phi, v_min, v_max, v_star, delta, v_tol, v_pos, v_neg: -v_pos })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakageMode {
    /// ρ(v): dead zone between the thresholds (base case).
    Threshold,
    /// ρ*(v): small leakage everywhere.
    AlwaysActive,
}

impl From<LeakageModeConfig> for LeakageMode {
    fn from(m: LeakageModeConfig) -> Self {
        match m {
            LeakageModeConfig::Threshold => LeakageMode::Threshold,
            LeakageModeConfig::AlwaysActive => LeakageMode::AlwaysActive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub tau: Vec<f64>,
    pub tau_p: Vec<f64>,
    pub tau_d: Vec<f64>,
    pub k: f64,
    pub k_v: Vec<f64>,
    pub b_v: Vec<f64>,
    pub b_zeta: Vec<f64>,
    pub mu: f64,
    pub alpha: f64,
    pub b: f64,
    pub eta: f64,
    pub leakage_mode: LeakageMode,
}

impl ControllerParams {
    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn validate(&self, n_i: usize) -> Result<()> {
        for (name, v) in [
            ("tau", &self.tau),
            ("tau_p", &self.tau_p),
            ("tau_d", &self.tau_d),
            ("k_v", &self.k_v),
            ("b_v", &self.b_v),
            ("b_zeta", &self.b_zeta),
        ] {
            if v.len() != n_i {
                return Err(Error::Dimension(format!("{name} has {} entries for {n_i} DGs", v.len())));
            }
        }
        for i in 0..n_i {
            positive("tau", self.tau[i])?;
            positive("tau_p", self.tau_p[i])?;
            positive("tau_d", self.tau_d[i])?;
            positive("k_v", self.k_v[i])?;
            positive("b_zeta", self.b_zeta[i])?;
            if !(self.b_v[i] >= 0.0) {
                return Err(Error::Config(format!("b_v[{}] = {} must be ≥ 0", i + 1, self.b_v[i])));
            }
        }
        positive("k", self.k)?;
        positive("mu", self.mu)?;
        positive("alpha", self.alpha)?;
        positive("b", self.b)?;
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("eta = {} must be ≥ 0", self.eta)));
        }
        Ok(())
    }

    pub fn set_leakage(&mut self, cfg: &LeakageConfig, env: &VoltageEnvelope) {
        self.leakage_mode = cfg.mode.into();
        self.alpha = env.resolve(cfg.alpha);
        self.b = cfg.b;
        self.eta = cfg.eta;
    }
}

/// Envelope and per-DG parameters from the `[controller]` section.
pub fn controller_from_config(cfg: &ControllerConfig, n_i: usize) -> Result<(ControllerParams, VoltageEnvelope)> {
    let delta = cfg.phi * cfg.v_nominal;
    let env = derive_envelope(cfg.v_nominal, cfg.phi, cfg.v_tol.unwrap_or(0.1 * delta))?;
    let b_v = cfg.b_v.clone().unwrap_or_else(|| vec![0.0; n_i]);
    let mut p = ControllerParams {
        tau: vec![cfg.tau; n_i],
        tau_p: vec![cfg.tau_p; n_i],
        tau_d: vec![cfg.tau_d; n_i],
        k: cfg.k,
        k_v: vec![env.resolve(cfg.k_v); n_i],
        b_v,
        b_zeta: vec![cfg.b_zeta; n_i],
        mu: cfg.mu,
        alpha: 0.0,
        b: 0.0,
        eta: 0.0,
        leakage_mode: LeakageMode::Threshold,
    };
    p.set_leakage(&cfg.leakage, &env);
    p.validate(n_i)?;
    Ok((p, env))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl ControllerState {
    pub fn zeros(n: usize) -> Self {
        Self { v: vec![0.0; n], lambda: vec![0.0; n], zeta: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDerivative {
    pub dv: Vec<f64>,
    pub dlambda: Vec<f64>,
    pub dzeta: Vec<f64>,
}

#[inline]
pub fn omega(v: f64, env: &VoltageEnvelope) -> f64 {
    env.v_star + env.delta * (v / env.delta).tanh()
}

#[inline]
pub fn omega_prime(v: f64, env: &VoltageEnvelope) -> f64 {
    let t = (v / env.delta).tanh();
    1.0 - t * t
}

#[inline]
pub fn rho(v: f64, p: &ControllerParams, env: &VoltageEnvelope) -> f64 {
    let hi = (p.b * (v - p.eta * env.v_pos)).tanh();
    let lo = (p.b * (v - p.eta * env.v_neg)).tanh();
    p.alpha * (1.0 + 0.5 * (hi - lo))
}

#[inline]
pub fn rho_prime(v: f64, p: &ControllerParams, env: &VoltageEnvelope) -> f64 {
    let hi = (p.b * (v - p.eta * env.v_pos)).tanh();
    let lo = (p.b * (v - p.eta * env.v_neg)).tanh();
    0.5 * p.alpha * p.b * ((1.0 - hi * hi) - (1.0 - lo * lo))
}

/// Γ(v) = ρ(v)·v.
#[inline]
pub fn gamma(v: f64, p: &ControllerParams, env: &VoltageEnvelope) -> f64 {
    rho(v, p, env) * v
}

/// dΓ/dv = ρ(v) + ρ′(v)·v.
#[inline]
pub fn gamma_prime(v: f64, p: &ControllerParams, env: &VoltageEnvelope) -> f64 {
    rho(v, p, env) + rho_prime(v, p, env) * v
}

/// Converter voltage u_i = ω(v_i) − μ λ_i / I_rated,i.
pub fn control_input(
    state: &ControllerState,
    dg: usize,
    i_rated: f64,
    p: &ControllerParams,
    env: &VoltageEnvelope,
) -> f64 {
    omega(state.v[dg], env) - p.mu * state.lambda[dg] / i_rated
}

/// Right-hand side of the inner (v) and outer (λ, ζ) loops.
/// `pu_current` is Λ·I^G.
pub fn controller_rhs(
    state: &ControllerState,
    pu_current: &[f64],
    graph: &CyberGraph,
    p: &ControllerParams,
    env: &VoltageEnvelope,
) -> Result<ControllerDerivative> {
    let n = p.n();
    if state.v.len() != n
        || state.lambda.len() != n
        || state.zeta.len() != n
        || pu_current.len() != n
        || graph.n() != n
    {
        return Err(Error::Dimension("controller state, currents and graph disagree".into()));
    }
    let mut out = ControllerDerivative { dv: vec![0.0; n], dlambda: vec![0.0; n], dzeta: vec![0.0; n] };
    controller_rhs_into(
        &state.v,
        &state.lambda,
        &state.zeta,
        pu_current,
        &graph.laplacian,
        p,
        env,
        &mut out.dv,
        &mut out.dlambda,
        &mut out.dzeta,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn controller_rhs_into(
    v: &[f64],
    lambda: &[f64],
    zeta: &[f64],
    pu_current: &[f64],
    lap: &DMatrix<f64>,
    p: &ControllerParams,
    env: &VoltageEnvelope,
    dv: &mut [f64],
    dlambda: &mut [f64],
    dzeta: &mut [f64],
) {
    let n = v.len();
    for i in 0..n {
        let mut l_lam = 0.0;
        let mut l_zeta = 0.0;
        for j in 0..n {
            let lij = lap[(i, j)];
            l_lam += lij * lambda[j];
            l_zeta += lij * zeta[j];
        }
        dv[i] = (-gamma(v[i], p, env) + p.k_v[i] * (lambda[i] - pu_current[i]) - p.b_v[i] * v[i]) / p.tau[i];
        dlambda[i] = (pu_current[i] - lambda[i] - l_zeta - p.k * l_lam) / p.tau_p[i];
        dzeta[i] = (l_lam - p.b_zeta[i] * zeta[i]) / p.tau_d[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_network;
    use crate::presets;
    use proptest::prelude::*;

    fn env() -> VoltageEnvelope {
        derive_envelope(48.0, 0.05, 0.24).unwrap()
    }

    fn params(n: usize, mode: LeakageMode) -> ControllerParams {
        let (alpha, b, eta) = match mode {
            LeakageMode::Threshold => (50.4, 5.0, 1.0),
            LeakageMode::AlwaysActive => (48.0, 0.58, 0.47),
        };
        ControllerParams {
            tau: vec![5.0; n],
            tau_p: vec![1e-3; n],
            tau_d: vec![1e-2; n],
            k: 10.0,
            k_v: vec![48.0; n],
            b_v: vec![0.0; n],
            b_zeta: vec![1e-5; n],
            mu: 0.01,
            alpha,
            b,
            eta,
            leakage_mode: mode,
        }
    }

    #[test]
    fn envelope_values() {
        let e = env();
        assert!((e.v_min - 45.6).abs() < 1e-12);
        assert!((e.v_max - 50.4).abs() < 1e-12);
        assert!((e.v_star - 48.0).abs() < 1e-12);
        assert!((e.delta - 2.4).abs() < 1e-12);
        // 2.4·atanh(0.9) = 1.2·ln(19)
        let reference = 1.2 * 19f64.ln();
        assert!((e.v_pos - reference).abs() < 1e-12);
        assert!((e.v_pos - 3.5334).abs() < 1e-4);
        assert_eq!(e.v_neg, -e.v_pos);
    }

    #[test]
    fn envelope_rejects_degenerate_band() {
        assert!(derive_envelope(48.0, 1e-9, 0.24).is_err());
        assert!(derive_envelope(48.0, 0.05, 2.4).is_err());
        assert!(derive_envelope(48.0, 0.05, 0.0).is_err());
        assert!(derive_envelope(48.0, 1.2, 0.1).is_err());
    }

    #[test]
    fn omega_examples() {
        let e = env();
        assert_eq!(omega(0.0, &e), 48.0);
        assert!((omega(1e6, &e) - 50.4).abs() < 1e-12);
        assert!((omega(2.4, &e) - (48.0 + 2.4 * 1f64.tanh())).abs() < 1e-12);
        assert!((omega(2.4, &e) - 49.828).abs() < 1e-3);
        assert_eq!(omega_prime(0.0, &e), 1.0);
        assert!(omega_prime(1e3, &e) < 1e-12);
    }

    #[test]
    fn omega_prime_matches_fd_at_2_4() {
        let e = env();
        let h = 1e-5;
        let fd = (omega(2.4 + h, &e) - omega(2.4 - h, &e)) / (2.0 * h);
        assert!((fd - omega_prime(2.4, &e)).abs() <= 1e-8 * omega_prime(2.4, &e));
    }

    #[test]
    fn rho_minimum_at_origin() {
        let e = env();
        let p = params(1, LeakageMode::Threshold);
        let expected = p.alpha * (1.0 - (p.b * p.eta * e.v_pos).tanh());
        assert!((rho(0.0, &p, &e) - expected).abs() < 1e-12);
        // Both tanh saturate to +1 far outside: ρ → α.
        assert!((rho(1e3, &p, &e) - p.alpha).abs() < 1e-9);
        assert!((rho(-1e3, &p, &e) - p.alpha).abs() < 1e-9);
    }

    #[test]
    fn rho_variants_differ() {
        let e = env();
        let th = params(1, LeakageMode::Threshold);
        let aa = params(1, LeakageMode::AlwaysActive);
        assert!(rho(0.0, &th, &e) < 1e-6);
        assert!(rho(0.0, &aa, &e) > 1.0);
        for k in 0..=40 {
            let v = -10.0 + 0.5 * k as f64;
            assert!(rho(v, &aa, &e) > 0.0);
        }
    }

    #[test]
    fn gamma_examples() {
        let e = env();
        let p = params(1, LeakageMode::AlwaysActive);
        assert_eq!(gamma(0.0, &p, &e), 0.0);
        for v in [-3.0, -0.1, 0.2, 5.0] {
            assert_eq!(gamma(v, &p, &e).signum(), v.signum());
        }
        let h = 1e-5;
        let fd = (gamma(1.0 + h, &p, &e) - gamma(1.0 - h, &p, &e)) / (2.0 * h);
        assert!((fd - gamma_prime(1.0, &p, &e)).abs() <= 1e-8 * gamma_prime(1.0, &p, &e).abs());
    }

    #[test]
    fn control_input_examples() {
        let e = env();
        let p = params(1, LeakageMode::Threshold);
        let s = ControllerState { v: vec![0.0], lambda: vec![1.0], zeta: vec![0.0] };
        let u = control_input(&s, 0, 12.0, &p, &e);
        assert!((u - (48.0 - 0.01 / 12.0)).abs() < 1e-12);
        assert!((u - 47.99917).abs() < 1e-5);
        let s0 = ControllerState { v: vec![1.3], lambda: vec![0.0], zeta: vec![0.0] };
        assert_eq!(control_input(&s0, 0, 12.0, &p, &e), omega(1.3, &e));
    }

    #[test]
    fn consensus_is_stationary() {
        let (_, g) = build_network(&presets::table1()).unwrap();
        let e = env();
        let mut p = params(4, LeakageMode::Threshold);
        p.b_zeta = vec![0.0; 4];
        let s = ControllerState { v: vec![0.0; 4], lambda: vec![0.3; 4], zeta: vec![0.7; 4] };
        let d = controller_rhs(&s, &[0.3; 4], &g, &p, &e).unwrap();
        assert!(d.dlambda.iter().all(|&x| x.abs() < 1e-12));
        assert!(d.dzeta.iter().all(|&x| x.abs() < 1e-12));
        assert!(d.dv.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn rhs_dimension_mismatch() {
        let (_, g) = build_network(&presets::table1()).unwrap();
        let p = params(4, LeakageMode::Threshold);
        let s = ControllerState::zeros(3);
        assert!(controller_rhs(&s, &[0.0; 3], &g, &p, &env()).is_err());
    }

    #[test]
    fn derivatives_match_fd_on_grid() {
        let e = env();
        for mode in [LeakageMode::Threshold, LeakageMode::AlwaysActive] {
            let p = params(1, mode);
            for k in 0..100 {
                let v = -10.0 * e.delta + 20.0 * e.delta * (k as f64 + 0.5) / 100.0;
                let h = 1e-6 * v.abs().max(1.0);
                let fd_w = (omega(v + h, &e) - omega(v - h, &e)) / (2.0 * h);
                let an_w = omega_prime(v, &e);
                assert!((fd_w - an_w).abs() <= 1e-6 * an_w.abs().max(1e-3), "omega' at {v}");
                let fd_g = (gamma(v + h, &p, &e) - gamma(v - h, &p, &e)) / (2.0 * h);
                let an_g = gamma_prime(v, &p, &e);
                assert!((fd_g - an_g).abs() <= 1e-6 * an_g.abs().max(1.0), "gamma' at {v}");
            }
        }
    }

    proptest! {
        #[test]
        fn omega_inside_band_and_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let e = env();
            let wa = omega(a, &e);
            prop_assert!(wa >= e.v_min && wa <= e.v_max);
            if (a - b).abs() > 1e-9 && a.abs() < 20.0 && b.abs() < 20.0 {
                prop_assert!((wa - omega(b, &e)) * (a - b) > 0.0);
            }
        }

        #[test]
        fn rho_bounds(v in -1e3f64..1e3, threshold in any::<bool>()) {
            let e = env();
            let p = params(1, if threshold { LeakageMode::Threshold } else { LeakageMode::AlwaysActive });
            let r = rho(v, &p, &e);
            let c_min = 1.0 - (p.b * p.eta * e.v_pos).tanh();
            prop_assert!(r >= p.alpha * c_min - 1e-12 * p.alpha);
            prop_assert!(r <= p.alpha * (1.0 + 1e-15));
        }

        #[test]
        fn laplacian_translation(c in -5.0f64..5.0, l in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let (_, g) = build_network(&presets::table1()).unwrap();
            let e = env();
            let p = params(4, LeakageMode::Threshold);
            let s = ControllerState { v: vec![0.1; 4], lambda: l.clone(), zeta: vec![0.0; 4] };
            let shifted = ControllerState { lambda: l.iter().map(|x| x + c).collect(), ..s.clone() };
            let a = controller_rhs(&s, &[0.2; 4], &g, &p, &e).unwrap();
            let b = controller_rhs(&shifted, &[0.2 + c; 4], &g, &p, &e).unwrap();
            for i in 0..4 {
                prop_assert!((a.dzeta[i] - b.dzeta[i]).abs() < 1e-9);
                prop_assert!((a.dlambda[i] - b.dlambda[i]).abs() < 1e-6);
            }
        }
    }
}

use serde::Serialize;

use super::spt::SptMatrices;
use super::zfun::ZEvaluator;
use crate::equilibrium::{qss_with, EquilibriumPoint};
use crate::error::{Error, Result};
use crate::model::Microgrid;
use crate::simulator::{integrate, ClosedLoopModel, Dynamics, IntegrateOptions, SimulationTrace, StateLayout};

/// Sampled values of the two Lyapunov candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub v_f: Vec<f64>,
    pub w_s: Vec<f64>,
}

/// Index of the first sample that fails to be strictly below its predecessor,
/// ignoring pairs where the predecessor is already under `floor`.
pub fn first_non_decrease(values: &[f64], floor: f64) -> Option<usize> {
    values.windows(2).position(|w| w[0] >= floor && !(w[1] < w[0])).map(|k| k + 1)
}

/// Index of the first sample that rises above its predecessor by more than
/// `rel_tol` (relative) plus `abs_tol`.
pub fn first_increase(values: &[f64], rel_tol: f64, abs_tol: f64) -> Option<usize> {
    values.windows(2).position(|w| w[1] > w[0] * (1.0 + rel_tol) + abs_tol).map(|k| k + 1)
}

fn split_fast(layout: StateLayout, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = Vec::with_capacity(layout.dim() - layout.n_i);
    z.extend_from_slice(&x[layout.ig()]);
    z.extend_from_slice(&x[layout.ie()]);
    z.extend_from_slice(&x[layout.vn()]);
    z.extend_from_slice(&x[layout.lambda()]);
    z.extend_from_slice(&x[layout.zeta()]);
    (z, x[layout.v()].to_vec())
}

/// W_S = ½ Σ τ_i (v_i − v̄_i)².
pub fn w_s(mg: &Microgrid, v: &[f64], v_bar: &[f64]) -> f64 {
    0.5 * v.iter().zip(v_bar).zip(&mg.params.tau).map(|((a, b), t)| t * (a - b) * (a - b)).sum::<f64>()
}

/// V_F with v frozen at its sampled value, and W_S about the equilibrium.
pub fn lyapunov_monitor(
    trace: &SimulationTrace,
    spt: &SptMatrices,
    ev: &ZEvaluator,
    eq: &EquilibriumPoint,
) -> Result<LyapunovSeries> {
    let layout = trace.layout;
    if layout.dim() - layout.n_i != spt.layout.dim() {
        return Err(Error::Dimension("trace and SPT matrices describe different networks".into()));
    }
    let v_bar = eq.state.v();
    let mut out = LyapunovSeries { times: trace.times.clone(), v_f: Vec::new(), w_s: Vec::new() };
    for k in 0..trace.len() {
        let (z, v) = split_fast(layout, trace.state(k));
        let h = qss_with(&ev.fast, &ev.mg, &v)?.to_fast_vector();
        let y: Vec<f64> = z.iter().zip(&h).map(|(a, b)| a - b).collect();
        out.v_f.push(spt.v_f(&y));
        out.w_s.push(w_s(&ev.mg, &v, v_bar));
    }
    Ok(out)
}

/// Fast subsystem in shifted coordinates, Q_F ẏ = (J_F − P_F) y.
#[derive(Debug, Clone)]
pub struct BoundaryLayer {
    m: Vec<f64>,
    q_inv: Vec<f64>,
    n: usize,
}

impl BoundaryLayer {
    pub fn new(ev: &ZEvaluator) -> Self {
        let n = ev.fast.layout.dim();
        let m = (0..n * n).map(|k| ev.fast.m[(k / n, k % n)]).collect();
        Self { m, q_inv: ev.fast.q_f.iter().map(|q| 1.0 / q).collect(), n }
    }
}

impl Dynamics for BoundaryLayer {
    fn dim(&self) -> usize {
        self.n
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        for r in 0..self.n {
            let row = &self.m[r * self.n..(r + 1) * self.n];
            dy[r] = self.q_inv[r] * row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryLayerRun {
    pub times: Vec<f64>,
    pub v_f: Vec<f64>,
    /// Final shifted fast state.
    pub y_end: Vec<f64>,
}

/// Integrates the boundary-layer system from the shifted start `y0`
/// (z − h(v) with v frozen) and records V_F.
pub fn boundary_layer_run(
    ev: &ZEvaluator,
    spt: &SptMatrices,
    y0: &[f64],
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<BoundaryLayerRun> {
    let mut sys = BoundaryLayer::new(ev);
    let raw = integrate(&mut sys, y0, (0.0, t_end), opts, &[])?;
    let v_f = (0..raw.len()).map(|k| spt.v_f(raw.state(k))).collect();
    Ok(BoundaryLayerRun { v_f, y_end: raw.last().to_vec(), times: raw.times })
}

/// Reduced slow model τ v̇ = −Z(v).
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub ev: ZEvaluator,
}

impl Dynamics for ReducedSystem {
    fn dim(&self) -> usize {
        self.ev.n()
    }
    fn rhs(&self, _t: f64, v: &[f64], dv: &mut [f64]) {
        let z = self.ev.value(v).expect("dimension fixed by dim()");
        for i in 0..v.len() {
            dv[i] = -z[i] / self.ev.mg.params.tau[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedRun {
    pub times: Vec<f64>,
    /// Row-major n_i columns.
    pub v: Vec<f64>,
    pub w_s: Vec<f64>,
}

impl ReducedRun {
    pub fn v_at(&self, k: usize) -> &[f64] {
        let n = self.v.len() / self.times.len();
        &self.v[k * n..(k + 1) * n]
    }
}

/// Integrates the reduced model from `v0` and records W_S about `v_bar`.
pub fn reduced_run(ev: &ZEvaluator, v0: &[f64], v_bar: &[f64], t_end: f64, opts: IntegrateOptions) -> Result<ReducedRun> {
    let mut sys = ReducedSystem { ev: ev.clone() };
    let raw = integrate(&mut sys, v0, (0.0, t_end), opts, &[])?;
    let w = (0..raw.len()).map(|k| w_s(&ev.mg, raw.state(k), v_bar)).collect();
    Ok(ReducedRun { times: raw.times, v: raw.states, w_s: w })
}

/// Options for [`spt_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapOptions {
    /// Transient length in multiples of τ.
    pub horizon_taus: f64,
    pub dt_full: f64,
    pub dt_reduced: f64,
    pub sample: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { horizon_taus: 2.0, dt_full: 2e-5, dt_reduced: 1e-3, sample: 1e-2 }
    }
}

/// sup_t ‖v_full(t) − v_reduced(t)‖∞ over `horizon_taus`·τ, with the full model
/// started on the slow manifold at `v0`.
pub fn spt_gap(mg: &Microgrid, v0: &[f64], opts: GapOptions) -> Result<f64> {
    let ev = ZEvaluator::new(mg)?;
    let layout = StateLayout::of(mg);
    let tau = mg.params.tau.iter().copied().fold(0.0, f64::max);
    let t_end = opts.horizon_taus * tau;

    let h = qss_with(&ev.fast, mg, v0)?;
    let mut x0 = vec![0.0; layout.dim()];
    x0[layout.ig()].copy_from_slice(&h.h_ig);
    x0[layout.ie()].copy_from_slice(&h.h_ie);
    x0[layout.vn()].copy_from_slice(&h.h_vn);
    x0[layout.v()].copy_from_slice(v0);
    x0[layout.lambda()].copy_from_slice(&h.h_lambda);
    x0[layout.zeta()].copy_from_slice(&h.h_zeta);
    let mut full = ClosedLoopModel::new(mg.clone(), true);
    let full_run = integrate(&mut full, &x0, (0.0, t_end), IntegrateOptions::new(opts.dt_full, opts.sample), &[])?;

    let red = reduced_run(&ev, v0, v0, t_end, IntegrateOptions::new(opts.dt_reduced, opts.sample))?;
    if red.times.len() != full_run.len() {
        return Err(Error::Dimension("full and reduced runs sampled differently".into()));
    }
    let mut gap: f64 = 0.0;
    for k in 0..full_run.len() {
        let vf = &full_run.state(k)[layout.v()];
        for (a, b) in vf.iter().zip(red.v_at(k)) {
            gap = gap.max((a - b).abs());
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::find_equilibrium;
    use crate::presets;
    use crate::simulator::run_with;
    use crate::config::SimulationConfig;
    use crate::stability::{apply_strategy, build_spt_matrices, TuningStrategy};
    use rand::{Rng, SeedableRng};

    fn tuned(id: usize) -> Microgrid {
        let mg = Microgrid::from_config(&presets::table1()).unwrap();
        apply_strategy(&mg, &TuningStrategy::catalog(id).unwrap()).unwrap()
    }

    #[test]
    fn sequence_helpers() {
        assert_eq!(first_non_decrease(&[3.0, 2.0, 1.0], 0.0), None);
        assert_eq!(first_non_decrease(&[3.0, 2.0, 2.0], 0.0), Some(2));
        assert_eq!(first_non_decrease(&[3.0, 1e-12, 2e-12], 1e-10), None);
        assert_eq!(first_increase(&[1.0, 1.0, 0.5], 0.0, 0.0), None);
        assert_eq!(first_increase(&[1.0, 1.1], 0.0, 0.0), Some(1));
    }

    #[test]
    fn boundary_layer_decreases() {
        let mg = tuned(1);
        let ev = ZEvaluator::new(&mg).unwrap();
        let spt = build_spt_matrices(&mg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let y0: Vec<f64> = (0..spt.layout.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = boundary_layer_run(&ev, &spt, &y0, 0.2, IntegrateOptions::new(2e-5, 1e-3)).unwrap();
        assert_eq!(first_non_decrease(&run.v_f, 1e-10), None);
        assert!(run.v_f.last().unwrap() < &run.v_f[0]);
    }

    #[test]
    fn monitor_vanishes_at_equilibrium() {
        let mg = tuned(3);
        let ev = ZEvaluator::new(&mg).unwrap();
        let spt = build_spt_matrices(&mg).unwrap();
        let eq = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        let sim = SimulationConfig { t_end: 0.01, dt: 2e-5, decimate: 1e-3 };
        let out = run_with(mg, &[], &sim, Some(eq.state.data.clone()), "eq").unwrap();
        let series = lyapunov_monitor(&out.trace, &spt, &ev, &eq).unwrap();
        assert!(series.v_f.iter().all(|x| *x < 1e-16), "{:?}", series.v_f);
        assert!(series.w_s.iter().all(|x| *x < 1e-16));
    }

    #[test]
    fn reduced_run_settles() {
        let mg = tuned(3);
        let ev = ZEvaluator::new(&mg).unwrap();
        let eq = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        let run = reduced_run(&ev, &[3.0, -2.0, 1.0, 0.5], eq.state.v(), 20.0, IntegrateOptions::new(1e-3, 1e-2)).unwrap();
        assert_eq!(first_increase(&run.w_s, 1e-12, 1e-14), None);
        assert!(run.w_s.last().unwrap() < &(1e-3 * run.w_s[0]));
    }
}

//! Quasi-steady state of the fast subsystem, closed-loop equilibria and KKT
//! residuals.
//!
//! The fast vector is z = (I^G, I^E, V^N, λ, ζ). With v frozen it obeys
//! Q_F ż = (J_F − P_F) z + κ₁ ω(v) − e_N I^cte, so h(v) solves
//! (J_F − P_F) h = −(κ₁ ω(v) − e_N I^cte).

use nalgebra::{DMatrix, DVector, LU};
use serde::Serialize;

use crate::controller::{gamma, gamma_prime, omega, omega_prime};
use crate::error::{Error, Result};
use crate::model::Microgrid;
use crate::netmodel::CyberGraph;
use crate::simulator::{scaled_residual, ClosedLoopModel, StateLayout, SystemState};

/// Block offsets of the fast vector z = (I^G, I^E, V^N, λ, ζ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FastLayout {
    pub n_i: usize,
    pub n_j: usize,
    pub n_k: usize,
}

impl FastLayout {
    pub fn dim(&self) -> usize {
        3 * self.n_i + self.n_j + self.n_k
    }
    pub fn ig(&self) -> std::ops::Range<usize> {
        0..self.n_i
    }
    pub fn ie(&self) -> std::ops::Range<usize> {
        self.n_i..self.n_i + self.n_j
    }
    pub fn vn(&self) -> std::ops::Range<usize> {
        let s = self.n_i + self.n_j;
        s..s + self.n_k
    }
    pub fn lambda(&self) -> std::ops::Range<usize> {
        let s = self.n_i + self.n_j + self.n_k;
        s..s + self.n_i
    }
    pub fn zeta(&self) -> std::ops::Range<usize> {
        let s = 2 * self.n_i + self.n_j + self.n_k;
        s..s + self.n_i
    }
}

/// Fast-subsystem matrices with a cached factorization of J_F − P_F.
#[derive(Debug, Clone)]
pub struct FastSystem {
    pub layout: FastLayout,
    /// Diagonal of Q_F.
    pub q_f: Vec<f64>,
    pub p_f: DMatrix<f64>,
    pub j_f: DMatrix<f64>,
    /// J_F − P_F.
    pub m: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// ∂h/∂ω: column i is −(J_F − P_F)⁻¹ κ₁ e_i.
    pub dh_domega: DMatrix<f64>,
    /// S = ∂h^λ/∂ω − Λ ∂h^{I^G}/∂ω (n_i × n_i).
    pub sharing: DMatrix<f64>,
    pub lambda_scale: Vec<f64>,
    i_cte: Vec<f64>,
}

impl FastSystem {
    pub fn new(mg: &Microgrid) -> Result<Self> {
        let net = &mg.net;
        let mask = &net.active_mask;
        if !mask.dgs.iter().chain(&mask.lines).all(|&a| a) {
            return Err(Error::InvalidMask("the fast system needs every DG and line active".into()));
        }
        let p = &mg.params;
        let l = FastLayout { n_i: net.n_i(), n_j: net.n_j(), n_k: net.n_k() };
        let nf = l.dim();
        let lam = net.lambda_scale();
        let lap = &mg.graph.laplacian;

        let mut q_f = Vec::with_capacity(nf);
        q_f.extend(net.dgs.iter().map(|d| d.l));
        q_f.extend(net.lines.iter().map(|x| x.l));
        q_f.extend(net.nodes.iter().map(|n| n.c));
        q_f.extend(p.tau_p.iter());
        q_f.extend(p.tau_d.iter());

        let mut p_f = DMatrix::zeros(nf, nf);
        for (i, r) in l.ig().enumerate() {
            p_f[(r, r)] = net.dgs[i].r;
        }
        for (j, r) in l.ie().enumerate() {
            p_f[(r, r)] = net.lines[j].r;
        }
        for (k, r) in l.vn().enumerate() {
            p_f[(r, r)] = net.effective_g(k);
        }
        for (a, ra) in l.lambda().enumerate() {
            for (b, rb) in l.lambda().enumerate() {
                p_f[(ra, rb)] = if a == b { 1.0 } else { 0.0 } + p.k * lap[(a, b)];
            }
        }
        for (i, r) in l.zeta().enumerate() {
            p_f[(r, r)] = p.b_zeta[i];
        }

        let mut j_f = DMatrix::zeros(nf, nf);
        for i in 0..l.n_i {
            let ri = l.ig().start + i;
            for k in 0..l.n_k {
                let b = net.beta_g[(i, k)];
                j_f[(ri, l.vn().start + k)] = -b;
                j_f[(l.vn().start + k, ri)] = b;
            }
            j_f[(ri, l.lambda().start + i)] = -lam[i] * p.mu;
            j_f[(l.lambda().start + i, ri)] = lam[i];
        }
        for j in 0..l.n_j {
            let rj = l.ie().start + j;
            for k in 0..l.n_k {
                let b = net.beta_e[(j, k)];
                j_f[(rj, l.vn().start + k)] = -b;
                j_f[(l.vn().start + k, rj)] = b;
            }
        }
        for a in 0..l.n_i {
            for b in 0..l.n_i {
                j_f[(l.lambda().start + a, l.zeta().start + b)] = -lap[(a, b)];
                j_f[(l.zeta().start + a, l.lambda().start + b)] = lap[(a, b)];
            }
        }

        let m = &j_f - &p_f;
        let lu = m.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(format!(
                "J_F - P_F is singular (check R, G > 0 and b_zeta > 0; b_zeta = {:?})",
                p.b_zeta
            )));
        }
        let mut kappa = DMatrix::zeros(nf, l.n_i);
        for i in 0..l.n_i {
            kappa[(l.ig().start + i, i)] = -1.0;
        }
        let dh_domega = lu.solve(&kappa).ok_or_else(|| Error::Singular("J_F - P_F".into()))?;
        let sharing = DMatrix::from_fn(l.n_i, l.n_i, |a, b| {
            dh_domega[(l.lambda().start + a, b)] - lam[a] * dh_domega[(l.ig().start + a, b)]
        });
        let i_cte = (0..l.n_k).map(|k| net.effective_i_cte(k)).collect();
        Ok(Self { layout: l, q_f, p_f, j_f, m, lu, dh_domega, sharing, lambda_scale: lam, i_cte })
    }

    /// Forcing κ₁ ω − e_N I^cte for actuation `w`.
    pub fn forcing(&self, w: &[f64]) -> DVector<f64> {
        let l = self.layout;
        let mut b = DVector::zeros(l.dim());
        for i in 0..l.n_i {
            b[l.ig().start + i] = w[i];
        }
        for k in 0..l.n_k {
            b[l.vn().start + k] = -self.i_cte[k];
        }
        b
    }

    /// Solves (J_F − P_F) h = −forcing(w).
    pub fn solve_for_omega(&self, w: &[f64]) -> DVector<f64> {
        let b = self.forcing(w);
        self.lu.solve(&(-b)).expect("factorization checked at construction")
    }

    /// Relative residual ‖(J_F − P_F) h + forcing‖∞ / ‖forcing‖∞.
    pub fn relative_residual(&self, w: &[f64], h: &DVector<f64>) -> f64 {
        let b = self.forcing(w);
        let r = &self.m * h + &b;
        r.amax() / b.amax().max(f64::MIN_POSITIVE)
    }

    /// h^λ − Λ h^{I^G} for the given fast vector.
    pub fn sharing_gap(&self, h: &DVector<f64>) -> Vec<f64> {
        let l = self.layout;
        (0..l.n_i).map(|i| h[l.lambda().start + i] - self.lambda_scale[i] * h[l.ig().start + i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QssSolution {
    pub h_ig: Vec<f64>,
    pub h_ie: Vec<f64>,
    pub h_vn: Vec<f64>,
    pub h_lambda: Vec<f64>,
    pub h_zeta: Vec<f64>,
    pub at_v: Vec<f64>,
    /// Relative residual of the fast linear system at the solution.
    pub residual: f64,
}

impl QssSolution {
    pub fn to_fast_vector(&self) -> Vec<f64> {
        [&self.h_ig, &self.h_ie, &self.h_vn, &self.h_lambda, &self.h_zeta].iter().flat_map(|b| b.iter().copied()).collect()
    }
}

/// h(v) through an existing factorization.
pub fn qss_with(fast: &FastSystem, mg: &Microgrid, v: &[f64]) -> Result<QssSolution> {
    let l = fast.layout;
    if v.len() != l.n_i {
        return Err(Error::Dimension(format!("v has {} entries for {} DGs", v.len(), l.n_i)));
    }
    let w: Vec<f64> = v.iter().map(|&vi| omega(vi, &mg.env)).collect();
    let h = fast.solve_for_omega(&w);
    let residual = fast.relative_residual(&w, &h);
    let s = h.as_slice();
    Ok(QssSolution {
        h_ig: s[l.ig()].to_vec(),
        h_ie: s[l.ie()].to_vec(),
        h_vn: s[l.vn()].to_vec(),
        h_lambda: s[l.lambda()].to_vec(),
        h_zeta: s[l.zeta()].to_vec(),
        at_v: v.to_vec(),
        residual,
    })
}

/// Quasi-steady state h(v) of the fast subsystem for frozen v.
pub fn quasi_steady_state(v: &[f64], mg: &Microgrid) -> Result<QssSolution> {
    let fast = FastSystem::new(mg)?;
    qss_with(&fast, mg, v)
}

/// Reduced residual F(v) = −Γ(v) + K_v[h^λ − Λ h^{I^G}] − B_v v and its Jacobian.
#[derive(Debug, Clone)]
pub struct ReducedMap<'a> {
    pub mg: &'a Microgrid,
    pub fast: FastSystem,
}

impl<'a> ReducedMap<'a> {
    pub fn new(mg: &'a Microgrid) -> Result<Self> {
        Ok(Self { mg, fast: FastSystem::new(mg)? })
    }

    pub fn value(&self, v: &[f64]) -> Vec<f64> {
        let env = &self.mg.env;
        let p = &self.mg.params;
        let w: Vec<f64> = v.iter().map(|&vi| omega(vi, env)).collect();
        let h = self.fast.solve_for_omega(&w);
        let gap = self.fast.sharing_gap(&h);
        (0..v.len()).map(|i| -gamma(v[i], p, env) + p.k_v[i] * gap[i] - p.b_v[i] * v[i]).collect()
    }

    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let env = &self.mg.env;
        let p = &self.mg.params;
        let n = v.len();
        let wp: Vec<f64> = v.iter().map(|&vi| omega_prime(vi, env)).collect();
        DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { -(gamma_prime(v[i], p, env) + p.b_v[i]) } else { 0.0 };
            diag + p.k_v[i] * self.fast.sharing[(i, j)] * wp[j]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub state: SystemState,
    pub kkt_primal_residual: f64,
    pub kkt_dual_residual: f64,
    /// Mean of λ̄ (the consensus value λ_s).
    pub consensus_value: f64,
    /// ‖scaled closed-loop rhs‖∞ at the point.
    pub rhs_residual: f64,
    pub newton_iterations: usize,
    /// ‖F(v̄)‖∞ / V_n.
    pub newton_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, max_halvings: 40 }
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Damped Newton on F(v̄) = 0 with least-squares (SVD) steps, then assembly
/// of the full state x̄ = (h(v̄), v̄).
pub fn find_equilibrium(mg: &Microgrid, initial_v: &[f64]) -> Result<EquilibriumPoint> {
    find_equilibrium_with(mg, initial_v, NewtonOptions::default())
}

pub fn find_equilibrium_with(mg: &Microgrid, initial_v: &[f64], opts: NewtonOptions) -> Result<EquilibriumPoint> {
    let map = ReducedMap::new(mg)?;
    let n = mg.n_i();
    if initial_v.len() != n {
        return Err(Error::Dimension(format!("initial guess has {} entries for {n} DGs", initial_v.len())));
    }
    let scale = mg.env.v_n;
    let mut v = initial_v.to_vec();
    let mut f = map.value(&v);
    let mut res = inf_norm(&f) / scale;
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NewtonFailed { iterations, residual: res });
        }
        iterations += 1;
        let jac = map.jacobian(&v);
        let svd = jac.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max();
        let rhs = -DVector::from_column_slice(&f);
        let step = svd.solve(&rhs, eps).map_err(|e| Error::Singular(e.to_string()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let fc = map.value(&cand);
            let rc = inf_norm(&fc) / scale;
            if rc < res || rc <= opts.tol {
                v = cand;
                f = fc;
                res = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailed { iterations, residual: res });
        }
    }
    assemble(mg, &map.fast, &v, iterations, res)
}

fn assemble(mg: &Microgrid, fast: &FastSystem, v: &[f64], iterations: usize, newton_residual: f64) -> Result<EquilibriumPoint> {
    let q = qss_with(fast, mg, v)?;
    let layout = StateLayout::of(mg);
    let mut state = SystemState::zeros(layout);
    state.block_mut(layout.ig()).copy_from_slice(&q.h_ig);
    state.block_mut(layout.ie()).copy_from_slice(&q.h_ie);
    state.block_mut(layout.vn()).copy_from_slice(&q.h_vn);
    state.block_mut(layout.v()).copy_from_slice(v);
    state.block_mut(layout.lambda()).copy_from_slice(&q.h_lambda);
    state.block_mut(layout.zeta()).copy_from_slice(&q.h_zeta);
    let model = ClosedLoopModel::new(mg.clone(), true);
    let rhs_residual = inf_norm(&scaled_residual(&model, &state.data));
    let (kkt_primal_residual, kkt_dual_residual) = kkt_parts(&state, &mg.net.lambda_scale(), &mg.graph);
    let consensus_value = state.lambda().iter().sum::<f64>() / state.lambda().len() as f64;
    Ok(EquilibriumPoint {
        state,
        kkt_primal_residual,
        kkt_dual_residual,
        consensus_value,
        rhs_residual,
        newton_iterations: iterations,
        newton_residual,
    })
}

fn kkt_parts(state: &SystemState, lambda_scale: &[f64], graph: &CyberGraph) -> (f64, f64) {
    let lap = &graph.laplacian;
    let n = lambda_scale.len();
    let (ig, lam, zeta) = (state.i_g(), state.lambda(), state.zeta());
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for i in 0..n {
        let mut l_lam = 0.0;
        let mut l_zeta = 0.0;
        for j in 0..n {
            l_lam += lap[(i, j)] * lam[j];
            l_zeta += lap[(i, j)] * zeta[j];
        }
        primal = primal.max((lambda_scale[i] * ig[i] - lam[i] - l_zeta).abs());
        dual = dual.max(l_lam.abs());
    }
    (primal, dual)
}

/// (‖Λ Ī − λ̄ − L ζ̄‖∞, ‖L λ̄‖∞), both in per-unit current.
/// `lambda_scale` is Λ = diag(1/I_rated) of the network the point belongs to.
pub fn kkt_residual(eq: &EquilibriumPoint, lambda_scale: &[f64], graph: &CyberGraph) -> (f64, f64) {
    kkt_parts(&eq.state, lambda_scale, graph)
}

/// Structured equilibrium report.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub strategy: String,
    pub consensus_value: f64,
    pub kkt_primal_residual: f64,
    pub kkt_dual_residual: f64,
    pub rhs_residual: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub i_g: Vec<f64>,
    pub i_e: Vec<f64>,
    pub v_n: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Λ Ī per DG.
    pub pu_current: Vec<f64>,
}

impl EquilibriumReport {
    pub fn new(eq: &EquilibriumPoint, mg: &Microgrid, strategy: &str) -> Self {
        let s = &eq.state;
        Self {
            strategy: strategy.into(),
            consensus_value: eq.consensus_value,
            kkt_primal_residual: eq.kkt_primal_residual,
            kkt_dual_residual: eq.kkt_dual_residual,
            rhs_residual: eq.rhs_residual,
            newton_iterations: eq.newton_iterations,
            newton_residual: eq.newton_residual,
            i_g: s.i_g().to_vec(),
            i_e: s.i_e().to_vec(),
            v_n: s.v_n().to_vec(),
            v: s.v().to_vec(),
            lambda: s.lambda().to_vec(),
            zeta: s.zeta().to_vec(),
            pu_current: s.i_g().iter().zip(mg.net.lambda_scale()).map(|(i, l)| i * l).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{DgUnit, LoadNode, PerUnitBase, PhysicalNetwork};
    use crate::presets;
    use crate::stability::{apply_strategy, TuningStrategy};
    use rand::{Rng, SeedableRng};

    fn base() -> Microgrid {
        Microgrid::from_config(&presets::table1()).unwrap()
    }

    fn strategy(id: usize) -> Microgrid {
        apply_strategy(&base(), &TuningStrategy::catalog(id).unwrap()).unwrap()
    }

    #[test]
    fn qss_residual_small_for_random_v() {
        let mg = base();
        let fast = FastSystem::new(&mg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-24.0..24.0)).collect();
            let q = qss_with(&fast, &mg, &v).unwrap();
            assert!(q.residual <= 1e-10, "{}", q.residual);
        }
    }

    #[test]
    fn single_dg_closed_form() {
        let base_pu = PerUnitBase::new(1.0, 1.0).unwrap();
        let (r, g, icte) = (0.2, 0.05, 0.7);
        let net = PhysicalNetwork::new(
            base_pu,
            vec![DgUnit { id: 1, i_rated: 5.0, r, l: 1e-3, attach_node: 0 }],
            vec![],
            vec![LoadNode { id: 1, c: 1e-3, g_cte: g, i_cte: icte }],
        )
        .unwrap();
        let graph = CyberGraph::new(DMatrix::zeros(1, 1)).unwrap();
        let mut mg = base();
        let p = &mut mg.params;
        for vec in [&mut p.tau, &mut p.tau_p, &mut p.tau_d, &mut p.k_v, &mut p.b_v, &mut p.b_zeta] {
            vec.truncate(1);
        }
        let mg = Microgrid::new(net, graph, mg.params.clone(), mg.env).unwrap();
        let v = [0.7];
        let q = quasi_steady_state(&v, &mg).unwrap();
        // λ row: ΛI − λ = 0 (L = 0); ζ row: −B_ζ ζ = 0.
        let lam = 1.0 / 5.0;
        let mu = mg.params.mu;
        // ω − Λμλ − V − R I = 0, I − G V − I^cte = 0, λ = Λ I.
        let w = omega(0.7, &mg.env);
        let i = (w * g + icte) / (1.0 + g * (r + lam * lam * mu));
        let vn = (i - icte) / g;
        assert!((q.h_ig[0] - i).abs() < 1e-12);
        assert!((q.h_vn[0] - vn).abs() < 1e-10);
        assert!((q.h_lambda[0] - lam * i).abs() < 1e-12);
        assert!(q.h_zeta[0].abs() < 1e-12);
        let eq = find_equilibrium(&mg, &[0.0]).unwrap();
        let (primal, dual) = kkt_residual(&eq, &mg.net.lambda_scale(), &mg.graph);
        assert!(primal < 1e-9 && dual == 0.0);
    }

    #[test]
    fn consensus_spread_scales_with_b_zeta() {
        let mut spreads = Vec::new();
        for bz in [1e-3, 1e-4, 1e-5] {
            let mut mg = base();
            mg.params.b_zeta = vec![bz; 4];
            let q = quasi_steady_state(&[0.3, -0.2, 0.5, 0.1], &mg).unwrap();
            let max = q.h_lambda.iter().copied().fold(f64::MIN, f64::max);
            let min = q.h_lambda.iter().copied().fold(f64::MAX, f64::min);
            spreads.push(max - min);
        }
        for w in spreads.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
        }
    }

    #[test]
    fn h_is_affine_in_omega() {
        let mg = base();
        let fast = FastSystem::new(&mg).unwrap();
        let w1 = [0.3, 1.0, -0.4, 2.0];
        let w2 = [1.1, -0.7, 0.2, 0.5];
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let h = |w: &[f64]| fast.solve_for_omega(w);
        let lhs = h(&sum);
        let rhs = h(&w1) + h(&w2) - h(&[0.0; 4]);
        assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn sensitivity_matches_fd() {
        let mg = base();
        let fast = FastSystem::new(&mg).unwrap();
        let v = [1.2, -0.8, 3.0, 0.4];
        let eps = 1e-5;
        for j in 0..4 {
            let mut vp = v;
            let mut vm = v;
            vp[j] += eps;
            vm[j] -= eps;
            let hp = qss_with(&fast, &mg, &vp).unwrap().to_fast_vector();
            let hm = qss_with(&fast, &mg, &vm).unwrap().to_fast_vector();
            let wp = omega_prime(v[j], &mg.env);
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for r in 0..fast.layout.dim() {
                let fd = (hp[r] - hm[r]) / (2.0 * eps);
                let an = fast.dh_domega[(r, j)] * wp;
                worst = worst.max((fd - an).abs());
                scale = scale.max(an.abs());
            }
            assert!(worst <= 1e-6 * scale, "column {j}: {worst} vs {scale}");
        }
    }

    #[test]
    fn sharing_columns_sum_to_zero() {
        let fast = FastSystem::new(&base()).unwrap();
        for j in 0..4 {
            assert!(fast.sharing.column(j).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn leakage_free_equilibrium_is_optimal() {
        let mg = base();
        let eq = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        assert!(eq.rhs_residual <= 1e-8, "{}", eq.rhs_residual);
        let s = &eq.state;
        let lam = mg.net.lambda_scale();
        for i in 0..4 {
            assert!((s.lambda()[i] - lam[i] * s.i_g()[i]).abs() <= 1e-6);
        }
        assert!(eq.kkt_primal_residual <= 1e-8);
        assert!(eq.kkt_dual_residual <= 1e-8);
    }

    #[test]
    fn consensus_vector_has_zero_dual() {
        let mg = base();
        let mut eq = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        let l = eq.state.layout;
        eq.state.block_mut(l.lambda()).fill(0.37);
        let (_, dual) = kkt_residual(&eq, &mg.net.lambda_scale(), &mg.graph);
        assert_eq!(dual, 0.0);
    }

    #[test]
    fn permanent_leakage_breaks_optimality() {
        let mg = strategy(1);
        let eq = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        assert!(eq.rhs_residual <= 1e-8);
        let s = &eq.state;
        let lam = mg.net.lambda_scale();
        let gap = (0..4).map(|i| (s.lambda()[i] - lam[i] * s.i_g()[i]).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-6, "gap {gap}");
        assert!(eq.kkt_primal_residual > 0.0);
    }

    #[test]
    fn higher_gain_reduces_primal_residual() {
        // Strategy-4 leakage at K_v = V* versus K_v = 130.
        let mut low = strategy(4);
        low.params.k_v = vec![low.env.v_star; 4];
        let high = strategy(4);
        let r_low = find_equilibrium(&low, &[0.0; 4]).unwrap().kkt_primal_residual;
        let r_high = find_equilibrium(&high, &[0.0; 4]).unwrap().kkt_primal_residual;
        assert!(r_high > 0.0 && r_high < r_low, "{r_high} vs {r_low}");
    }

    #[test]
    fn unique_from_random_starts() {
        let mg = strategy(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let reference = find_equilibrium(&mg, &[0.0; 4]).unwrap();
        for _ in 0..10 {
            let v0: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let eq = find_equilibrium(&mg, &v0).unwrap();
            let d = eq.state.data.iter().zip(&reference.state.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-6, "distance {d}");
        }
    }

    #[test]
    fn reduced_jacobian_matches_fd() {
        let mg = strategy(2);
        let map = ReducedMap::new(&mg).unwrap();
        let v = [0.9, -1.7, 4.0, 2.2];
        let jac = map.jacobian(&v);
        let eps = 1e-6;
        for j in 0..4 {
            let mut vp = v;
            let mut vm = v;
            vp[j] += eps;
            vm[j] -= eps;
            let fp = map.value(&vp);
            let fm = map.value(&vm);
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                assert!((fd - jac[(i, j)]).abs() <= 1e-6 * jac.amax());
            }
        }
    }

    #[test]
    fn masked_network_rejected() {
        let mut mg = base();
        let mut mask = mg.net.active_mask.clone();
        mask.lines[0] = false;
        let (net, graph) = crate::netmodel::apply_topology_mask(&mg.net, &mg.graph, &mask).unwrap();
        mg.net = net;
        mg.graph = graph;
        assert!(matches!(FastSystem::new(&mg), Err(Error::InvalidMask(_))));
    }
}

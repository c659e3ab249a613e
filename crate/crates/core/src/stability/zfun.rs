use nalgebra::DMatrix;

use crate::controller::{gamma, gamma_prime, omega, omega_prime};
use crate::equilibrium::FastSystem;
use crate::error::{Error, Result};
use crate::model::Microgrid;

/// Evaluates Z(v) = Γ(v) − K_v[h^λ(v) − Λ h^{I^G}(v)] + B_v v and its Jacobian,
/// caching the fast-system factorization and the sharing sensitivity
/// S = ∂h^λ/∂ω − Λ ∂h^{I^G}/∂ω.
#[derive(Debug, Clone)]
pub struct ZEvaluator {
    pub mg: Microgrid,
    pub fast: FastSystem,
}

impl ZEvaluator {
    pub fn new(mg: &Microgrid) -> Result<Self> {
        Ok(Self { mg: mg.clone(), fast: FastSystem::new(mg)? })
    }

    pub fn n(&self) -> usize {
        self.mg.n_i()
    }

    pub fn sharing(&self) -> &DMatrix<f64> {
        &self.fast.sharing
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n() {
            Ok(())
        } else {
            Err(Error::Dimension(format!("v has {} entries for {} DGs", v.len(), self.n())))
        }
    }

    pub fn value(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let (env, p) = (&self.mg.env, &self.mg.params);
        let w: Vec<f64> = v.iter().map(|&x| omega(x, env)).collect();
        let h = self.fast.solve_for_omega(&w);
        let gap = self.fast.sharing_gap(&h);
        Ok((0..v.len()).map(|i| gamma(v[i], p, env) - p.k_v[i] * gap[i] + p.b_v[i] * v[i]).collect())
    }

    pub fn jacobian(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        self.check(v)?;
        let (env, p) = (&self.mg.env, &self.mg.params);
        let n = v.len();
        let wp: Vec<f64> = v.iter().map(|&x| omega_prime(x, env)).collect();
        let s = &self.fast.sharing;
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { gamma_prime(v[i], p, env) + p.b_v[i] } else { 0.0 };
            diag - p.k_v[i] * s[(i, j)] * wp[j]
        }))
    }

    /// ς = ½(J + Jᵀ).
    pub fn sym_jacobian(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        let j = self.jacobian(v)?;
        Ok((&j + j.transpose()) * 0.5)
    }

    /// Gershgorin center ς_ii, a function of v_i only.
    pub fn center(&self, i: usize, vi: f64) -> f64 {
        let (env, p) = (&self.mg.env, &self.mg.params);
        gamma_prime(vi, p, env) + p.b_v[i] - p.k_v[i] * self.fast.sharing[(i, i)] * omega_prime(vi, env)
    }

    /// Coefficients (a, b) with ς_ij = a·ω′(v_j) + b, for fixed v_i.
    pub fn offdiag_affine(&self, i: usize, j: usize, vi: f64) -> (f64, f64) {
        let p = &self.mg.params;
        let s = &self.fast.sharing;
        (-0.5 * p.k_v[i] * s[(i, j)], -0.5 * p.k_v[j] * s[(j, i)] * omega_prime(vi, &self.mg.env))
    }

    /// ς_ij as a function of (v_i, v_j) only.
    pub fn offdiag(&self, i: usize, j: usize, vi: f64, vj: f64) -> f64 {
        let (a, b) = self.offdiag_affine(i, j, vi);
        a * omega_prime(vj, &self.mg.env) + b
    }

    /// r_i(v) − c_i(v_i) at a full point.
    pub fn row_objective(&self, i: usize, v: &[f64]) -> f64 {
        let r: f64 = (0..v.len()).filter(|&j| j != i).map(|j| self.offdiag(i, j, v[i], v[j]).abs()).sum();
        r - self.center(i, v[i])
    }
}

pub fn z_value(v: &[f64], ev: &ZEvaluator) -> Result<Vec<f64>> {
    ev.value(v)
}

pub fn z_jacobian(v: &[f64], ev: &ZEvaluator) -> Result<DMatrix<f64>> {
    ev.jacobian(v)
}

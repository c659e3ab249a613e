use nalgebra::{DMatrix, DVector};

use crate::equilibrium::{FastLayout, FastSystem};
use crate::error::{Error, Result};
use crate::model::Microgrid;

/// Singular-perturbation matrices of the fast subsystem.
///
/// `q_star`, `p_star` and `j_star` are assembled block by block (not as
/// products) so that `j_star` is skew-symmetric to the last bit.
#[derive(Debug, Clone)]
pub struct SptMatrices {
    pub layout: FastLayout,
    pub q_f: DMatrix<f64>,
    pub p_f: DMatrix<f64>,
    pub j_f: DMatrix<f64>,
    pub q_star: DMatrix<f64>,
    pub p_star: DMatrix<f64>,
    pub j_star: DMatrix<f64>,
    /// Selector placing ω(v) into the I^G rows.
    pub kappa_1: DMatrix<f64>,
}

pub fn build_spt_matrices(mg: &Microgrid) -> Result<SptMatrices> {
    let fast = FastSystem::new(mg)?;
    build_from_fast(mg, &fast)
}

pub(crate) fn build_from_fast(mg: &Microgrid, fast: &FastSystem) -> Result<SptMatrices> {
    let l = fast.layout;
    let nf = l.dim();
    let mu = mg.params.mu;
    if !(mu > 0.0) {
        return Err(Error::NonPositive { what: "mu".into(), value: mu });
    }
    for (r, &q) in fast.q_f.iter().enumerate() {
        if !(q > 0.0) {
            return Err(Error::NonPositive { what: format!("Q_F diagonal entry {r}"), value: q });
        }
    }
    let electrical = l.vn().end;
    let q_f = DMatrix::from_diagonal(&DVector::from_column_slice(&fast.q_f));
    let q_star = DMatrix::from_fn(nf, nf, |a, b| {
        if a != b {
            0.0
        } else if a < electrical {
            fast.q_f[a] / mu
        } else {
            fast.q_f[a]
        }
    });
    let p_star = DMatrix::from_fn(nf, nf, |a, b| {
        let p = fast.p_f[(a, b)];
        if a < electrical && b < electrical {
            p / mu
        } else {
            p
        }
    });

    let net = &mg.net;
    let lam = &fast.lambda_scale;
    let lap = &mg.graph.laplacian;
    let mut j_star = DMatrix::zeros(nf, nf);
    for i in 0..l.n_i {
        let ri = l.ig().start + i;
        for k in 0..l.n_k {
            let b = net.beta_g[(i, k)] / mu;
            j_star[(ri, l.vn().start + k)] = -b;
            j_star[(l.vn().start + k, ri)] = b;
        }
        j_star[(ri, l.lambda().start + i)] = -lam[i];
        j_star[(l.lambda().start + i, ri)] = lam[i];
    }
    for j in 0..l.n_j {
        let rj = l.ie().start + j;
        for k in 0..l.n_k {
            let b = net.beta_e[(j, k)] / mu;
            j_star[(rj, l.vn().start + k)] = -b;
            j_star[(l.vn().start + k, rj)] = b;
        }
    }
    for a in 0..l.n_i {
        for b in 0..l.n_i {
            j_star[(l.lambda().start + a, l.zeta().start + b)] = -lap[(a, b)];
            j_star[(l.zeta().start + a, l.lambda().start + b)] = lap[(a, b)];
        }
    }
    let mut kappa_1 = DMatrix::zeros(nf, l.n_i);
    for i in 0..l.n_i {
        kappa_1[(l.ig().start + i, i)] = 1.0;
    }
    Ok(SptMatrices {
        layout: l,
        q_f,
        p_f: fast.p_f.clone(),
        j_f: fast.j_f.clone(),
        q_star,
        p_star,
        j_star,
        kappa_1,
    })
}

impl SptMatrices {
    /// V_F = ½ yᵀ Q* y for a shifted fast vector y.
    pub fn v_f(&self, y: &[f64]) -> f64 {
        0.5 * y.iter().enumerate().map(|(r, yr)| self.q_star[(r, r)] * yr * yr).sum::<f64>()
    }

    /// −yᵀ P* y, the derivative of V_F along the frozen fast dynamics.
    pub fn v_f_dot(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        -(y.transpose() * &self.p_star * &y)[(0, 0)]
    }

    /// ∇V_F · ẏ with ẏ = Q_F⁻¹ (J_F − P_F) y.
    pub fn v_f_dot_by_gradient(&self, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        let m = &self.j_f - &self.p_f;
        let mut ydot = m * &yv;
        for r in 0..ydot.len() {
            ydot[r] /= self.q_f[(r, r)];
        }
        (0..y.len()).map(|r| self.q_star[(r, r)] * y[r] * ydot[r]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};

    fn spt() -> SptMatrices {
        build_spt_matrices(&Microgrid::from_config(&presets::table1()).unwrap()).unwrap()
    }

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        let sym = (m + m.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    #[test]
    fn j_star_is_exactly_skew() {
        let s = spt();
        assert_eq!((&s.j_star + s.j_star.transpose()).amax(), 0.0);
    }

    #[test]
    fn q_and_p_star_positive_definite() {
        let s = spt();
        assert!(min_eig(&s.p_star) > 0.0);
        assert!(min_eig(&s.q_star) > 0.0);
        assert!((0..s.q_star.nrows()).all(|r| s.q_star[(r, r)] > 0.0));
    }

    #[test]
    fn star_matrices_are_scaled_fast_matrices() {
        let s = spt();
        let mu = 0.01;
        let e = s.layout.vn().end;
        for r in 0..s.q_f.nrows() {
            let expect = if r < e { s.q_f[(r, r)] / mu } else { s.q_f[(r, r)] };
            assert_eq!(s.q_star[(r, r)], expect);
        }
        let qinv = s.q_f.map(|x| if x != 0.0 { 1.0 / x } else { 0.0 });
        let j_prod = &s.q_star * &qinv * &s.j_f;
        let p_prod = &s.q_star * &qinv * &s.p_f;
        assert!((j_prod - &s.j_star).amax() <= 1e-12 * s.j_star.amax());
        assert!((p_prod - &s.p_star).amax() <= 1e-12 * s.p_star.amax());
    }

    #[test]
    fn v_f_derivative_two_ways() {
        let s = spt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y: Vec<f64> = (0..s.layout.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = s.v_f_dot(&y);
            let b = s.v_f_dot_by_gradient(&y);
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
            assert!(a < 0.0);
        }
    }

    #[test]
    fn kappa_selects_dg_rows() {
        let s = spt();
        assert_eq!(s.kappa_1.sum(), 4.0);
        for i in 0..4 {
            assert_eq!(s.kappa_1[(i, i)], 1.0);
        }
    }
}

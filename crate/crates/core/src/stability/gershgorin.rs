use rayon::prelude::*;
use serde::Serialize;

use super::zfun::ZEvaluator;
use crate::config::OffRowConfig;
use crate::controller::{omega_prime, VoltageEnvelope};
use crate::error::{Error, Result};

/// Hypercube [lo, hi]^n_i in controller-state units [V].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBox {
    pub lo: f64,
    pub hi: f64,
}

impl SearchBox {
    /// [−10Δ, 10Δ].
    pub fn default_for(env: &VoltageEnvelope) -> Self {
        Self { lo: -10.0 * env.delta, hi: 10.0 * env.delta }
    }

    /// Grid `lo, lo + step, ...` always ending at `hi`. Zero is on the grid
    /// whenever it is an integer number of steps from `lo`.
    pub fn grid(&self, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(self.hi > self.lo) || !step.is_finite() {
            return Err(Error::Config(format!("empty grid: box [{}, {}], step {step}", self.lo, self.hi)));
        }
        let n = ((self.hi - self.lo) / step - 1e-9).ceil() as usize;
        let mut g: Vec<f64> = (0..n).map(|k| self.lo + k as f64 * step).collect();
        g.push(self.hi);
        for x in g.iter_mut() {
            if x.abs() < 1e-9 * step {
                *x = 0.0;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OffRowMode {
    /// Each |ς_ij| is maximized over v_j on the grid.
    Adversarial,
    /// Off-row states fixed at 0.
    Zero,
}

impl From<OffRowConfig> for OffRowMode {
    fn from(c: OffRowConfig) -> Self {
        match c {
            OffRowConfig::Adversarial => OffRowMode::Adversarial,
            OffRowConfig::Zero => OffRowMode::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GershgorinRow {
    pub row: usize,
    pub v_grid: Vec<f64>,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
    /// min over the grid of center − radius.
    pub margin: f64,
    /// Grid point where the margin is attained.
    pub v_at_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GershgorinReport {
    pub mode: OffRowMode,
    pub search_box: SearchBox,
    pub step: f64,
    pub rows: Vec<GershgorinRow>,
    pub pass: bool,
}

impl GershgorinReport {
    pub fn failing_rows(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| !r.pass).map(|r| r.row).collect()
    }
}

/// max over w in [w_lo, w_hi] of |a w + b|; attained at an endpoint.
pub(crate) fn max_abs_affine(a: f64, b: f64, w_lo: f64, w_hi: f64) -> (f64, bool) {
    let lo = (a * w_lo + b).abs();
    let hi = (a * w_hi + b).abs();
    if hi >= lo {
        (hi, true)
    } else {
        (lo, false)
    }
}

/// Range of ω′ over the grid together with the grid points attaining it.
pub(crate) fn omega_prime_range(grid: &[f64], env: &VoltageEnvelope) -> ((f64, f64), (f64, f64)) {
    let mut lo = (f64::INFINITY, 0.0);
    let mut hi = (f64::NEG_INFINITY, 0.0);
    for &g in grid {
        let w = omega_prime(g, env);
        if w < lo.0 || (w == lo.0 && g > lo.1) {
            lo = (w, g);
        }
        if w > hi.0 {
            hi = (w, g);
        }
    }
    (lo, hi)
}

/// Geršgorin center/radius curves per row of the symmetrized Jacobian.
pub fn gershgorin_scan(ev: &ZEvaluator, sbox: SearchBox, step: f64, mode: OffRowMode) -> Result<GershgorinReport> {
    let grid = sbox.grid(step)?;
    let env = ev.mg.env;
    let ((w_lo, _), (w_hi, _)) = omega_prime_range(&grid, &env);
    let n = ev.n();
    let rows: Vec<GershgorinRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut center = Vec::with_capacity(grid.len());
            let mut radius = Vec::with_capacity(grid.len());
            let mut margin = f64::INFINITY;
            let mut v_at = grid[0];
            for &vi in &grid {
                let c = ev.center(i, vi);
                let r: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| match mode {
                        OffRowMode::Adversarial => {
                            let (a, b) = ev.offdiag_affine(i, j, vi);
                            max_abs_affine(a, b, w_lo, w_hi).0
                        }
                        OffRowMode::Zero => ev.offdiag(i, j, vi, 0.0).abs(),
                    })
                    .sum();
                if c - r < margin {
                    margin = c - r;
                    v_at = vi;
                }
                center.push(c);
                radius.push(r);
            }
            GershgorinRow { row: i, v_grid: grid.clone(), center, radius, margin, v_at_margin: v_at, pass: margin > 0.0 }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(GershgorinReport { mode, search_box: sbox, step, rows, pass })
}

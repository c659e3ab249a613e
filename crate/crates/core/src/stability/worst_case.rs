use rayon::prelude::*;
use serde::Serialize;

use super::gershgorin::{max_abs_affine, omega_prime_range, SearchBox};
use super::zfun::ZEvaluator;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Coarse grid step [V].
    pub coarse_step: f64,
    /// Golden-section tolerance [V].
    pub refine_tol: f64,
    /// Number of best coarse local maxima that get refined.
    pub candidates: usize,
}

impl SearchConfig {
    pub fn new(coarse_step: f64, refine_tol: f64) -> Self {
        Self { coarse_step, refine_tol, candidates: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseRow {
    pub row: usize,
    pub maximizer: Vec<f64>,
    /// r_i(v*) − c_i(v*_i).
    pub objective: f64,
    /// A violating point exists (objective > 0).
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseResult {
    pub search_box: SearchBox,
    pub config: SearchConfig,
    pub rows: Vec<WorstCaseRow>,
}

impl WorstCaseResult {
    /// True when no row has a violating point.
    pub fn certified(&self) -> bool {
        self.rows.iter().all(|r| !r.feasible)
    }
    /// The diagonal entries v*_ii.
    pub fn worst_v(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.maximizer[r.row]).collect()
    }
}

/// Per-row profile g_i(v_i) = Σ_j max_{v_j} |ς_ij| − c_i(v_i) with the
/// maximizing off-row values. The inner maxima are exact because ς_ij is
/// affine in ω′(v_j).
struct RowProfile<'a> {
    ev: &'a ZEvaluator,
    row: usize,
    w_lo: (f64, f64),
    w_hi: (f64, f64),
}

impl RowProfile<'_> {
    fn eval(&self, vi: f64) -> (f64, Vec<f64>) {
        let n = self.ev.n();
        let mut point = vec![0.0; n];
        point[self.row] = vi;
        let mut r = 0.0;
        for j in (0..n).filter(|&j| j != self.row) {
            let (a, b) = self.ev.offdiag_affine(self.row, j, vi);
            let (m, at_hi) = max_abs_affine(a, b, self.w_lo.0, self.w_hi.0);
            r += m;
            point[j] = if at_hi { self.w_hi.1 } else { self.w_lo.1 };
        }
        (r - self.ev.center(self.row, vi), point)
    }

    fn value(&self, vi: f64) -> f64 {
        self.eval(vi).0
    }
}

/// Golden-section maximization of `f` on [a, b].
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Larger objective wins; near-ties go to the larger v (the positive branch of
/// a symmetric profile).
fn better(cand: (f64, f64), best: (f64, f64)) -> bool {
    let (vc, fc) = cand;
    let (vb, fb) = best;
    let tie = 1e-9 * fb.abs().max(1.0);
    fc > fb + tie || ((fc - fb).abs() <= tie && vc > vb)
}

/// Worst-case search: coarse grid on v_i with exact inner maximization over
/// the off-row states, then golden-section refinement of the best local maxima.
pub fn worst_case_search(ev: &ZEvaluator, sbox: SearchBox, cfg: SearchConfig) -> Result<WorstCaseResult> {
    let grid = sbox.grid(cfg.coarse_step)?;
    let (w_lo, w_hi) = omega_prime_range(&grid, &ev.mg.env);
    let rows = (0..ev.n())
        .into_par_iter()
        .map(|row| {
            let prof = RowProfile { ev, row, w_lo, w_hi };
            let vals: Vec<f64> = grid.iter().map(|&g| prof.value(g)).collect();
            let mut peaks: Vec<usize> = (0..grid.len())
                .filter(|&k| {
                    let left = k == 0 || vals[k] >= vals[k - 1];
                    let right = k + 1 == grid.len() || vals[k] >= vals[k + 1];
                    left && right
                })
                .collect();
            peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(grid[b].total_cmp(&grid[a])));
            peaks.truncate(cfg.candidates.max(1));
            let mut best = (grid[peaks[0]], vals[peaks[0]]);
            for &k in &peaks {
                let a = if k == 0 { grid[0] } else { grid[k - 1] };
                let b = if k + 1 == grid.len() { grid[k] } else { grid[k + 1] };
                let x = golden_max(|v| prof.value(v), a, b, cfg.refine_tol);
                for cand in [(x, prof.value(x)), (grid[k], vals[k])] {
                    if better(cand, best) {
                        best = cand;
                    }
                }
            }
            let (objective, maximizer) = prof.eval(best.0);
            WorstCaseRow { row, maximizer, objective, feasible: objective > 0.0 }
        })
        .collect();
    Ok(WorstCaseResult { search_box: sbox, config: cfg, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Microgrid;
    use crate::presets;
    use crate::stability::{apply_strategy, TuningStrategy};
    use rand::{Rng, SeedableRng};

    fn eval(id: Option<usize>) -> ZEvaluator {
        let mut mg = Microgrid::from_config(&presets::table1()).unwrap();
        if let Some(id) = id {
            mg = apply_strategy(&mg, &TuningStrategy::catalog(id).unwrap()).unwrap();
        }
        ZEvaluator::new(&mg).unwrap()
    }

    fn search(ev: &ZEvaluator) -> WorstCaseResult {
        let d = ev.mg.env.delta;
        worst_case_search(ev, SearchBox::default_for(&ev.mg.env), SearchConfig::new(d / 10.0, 1e-3)).unwrap()
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_max(|v| -(v - 0.3).powi(2), -1.0, 1.0, 1e-8);
        assert!((x - 0.3).abs() < 1e-7);
    }

    #[test]
    fn base_case_worst_case_location() {
        let ev = eval(None);
        let res = search(&ev);
        let published = [5.54, 5.42, 5.51, 5.47];
        for (row, p) in res.rows.iter().zip(published) {
            assert!(row.feasible);
            let v = row.maximizer[row.row];
            assert!((v - p).abs() <= 0.02 * p, "row {}: {v} vs {p}", row.row);
            for (j, &vj) in row.maximizer.iter().enumerate() {
                if j != row.row {
                    assert!(vj.abs() <= ev.mg.env.delta / 10.0);
                }
            }
        }
    }

    #[test]
    fn strategy_three_is_infeasible() {
        let res = search(&eval(Some(3)));
        assert!(res.certified());
        assert!(res.rows.iter().all(|r| r.objective <= 0.0));
    }

    #[test]
    fn dominates_random_samples() {
        for id in [None, Some(2)] {
            let ev = eval(id);
            let res = search(&ev);
            let b = res.search_box;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
            for _ in 0..10_000 {
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(b.lo..b.hi)).collect();
                for row in &res.rows {
                    let f = ev.row_objective(row.row, &v);
                    assert!(f <= row.objective + 1e-9, "row {}: sample {f} > {}", row.row, row.objective);
                }
            }
        }
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        let ev = eval(None);
        for row in &search(&ev).rows {
            let direct = ev.row_objective(row.row, &row.maximizer);
            assert!((direct - row.objective).abs() < 1e-9);
        }
    }
}

//! Physical and cyber layers of the microgrid.
//!
//! Indices are 0-based positions in the element vectors; `id` fields keep the
//! 1-based labels used in configuration files.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::config::{dense_by_id, RunConfig};
use crate::error::{positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBase {
    pub r_base: f64,
    pub l_base: f64,
}

impl PerUnitBase {
    pub fn new(r_base: f64, l_base: f64) -> Result<Self> {
        positive("r_base", r_base)?;
        positive("l_base", l_base)?;
        Ok(Self { r_base, l_base })
    }
    pub fn ohm(&self, pu: f64) -> f64 {
        pu * self.r_base
    }
    pub fn henry(&self, pu: f64) -> f64 {
        pu * self.l_base
    }
    pub fn r_pu(&self, ohm: f64) -> f64 {
        ohm / self.r_base
    }
    pub fn l_pu(&self, henry: f64) -> f64 {
        henry / self.l_base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgUnit {
    pub id: usize,
    pub i_rated: f64,
    pub r: f64,
    pub l: f64,
    pub attach_node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLine {
    pub id: usize,
    pub r: f64,
    pub l: f64,
    /// Positive current flows from `endpoints.0` to `endpoints.1`.
    pub endpoints: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadNode {
    pub id: usize,
    pub c: f64,
    pub g_cte: f64,
    pub i_cte: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveMask {
    pub dgs: Vec<bool>,
    pub lines: Vec<bool>,
    pub loads: Vec<bool>,
}

impl ActiveMask {
    pub fn all(n_i: usize, n_j: usize, n_k: usize) -> Self {
        Self { dgs: vec![true; n_i], lines: vec![true; n_j], loads: vec![true; n_k] }
    }
    pub fn is_full(&self) -> bool {
        self.dgs.iter().chain(&self.lines).chain(&self.loads).all(|&a| a)
    }
}

/// DGs, lines and load nodes with their incidence matrices.
///
/// `beta_g[(i, k)] = 1` when DG i feeds node k. `beta_e` row j has −1 at the
/// sending node and +1 at the receiving node of line j. Rows of masked DGs and
/// lines are zero. A masked load keeps its bus; only its G and I^cte are removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNetwork {
    pub base: PerUnitBase,
    pub dgs: Vec<DgUnit>,
    pub lines: Vec<PowerLine>,
    pub nodes: Vec<LoadNode>,
    pub beta_g: DMatrix<f64>,
    pub beta_e: DMatrix<f64>,
    pub active_mask: ActiveMask,
}

impl PhysicalNetwork {
    pub fn new(base: PerUnitBase, dgs: Vec<DgUnit>, lines: Vec<PowerLine>, nodes: Vec<LoadNode>) -> Result<Self> {
        let mask = ActiveMask::all(dgs.len(), lines.len(), nodes.len());
        Self::with_mask(base, dgs, lines, nodes, mask)
    }

    fn with_mask(
        base: PerUnitBase,
        dgs: Vec<DgUnit>,
        lines: Vec<PowerLine>,
        nodes: Vec<LoadNode>,
        mask: ActiveMask,
    ) -> Result<Self> {
        if dgs.is_empty() || nodes.is_empty() {
            return Err(Error::Config("network needs at least one DG and one load".into()));
        }
        let n_k = nodes.len();
        for d in &dgs {
            positive(format!("DG {} i_rated", d.id), d.i_rated)?;
            positive(format!("DG {} r", d.id), d.r)?;
            positive(format!("DG {} l", d.id), d.l)?;
            if d.attach_node >= n_k {
                return Err(Error::Config(format!("DG {} attaches to missing node {}", d.id, d.attach_node + 1)));
            }
        }
        for l in &lines {
            positive(format!("line {} r", l.id), l.r)?;
            positive(format!("line {} l", l.id), l.l)?;
            let (a, b) = l.endpoints;
            for n in [a, b] {
                if n >= n_k {
                    return Err(Error::DanglingEndpoint { line: l.id, node: n + 1 });
                }
            }
            if a == b {
                return Err(Error::Config(format!("line {} joins node {} to itself", l.id, a + 1)));
            }
        }
        for n in &nodes {
            positive(format!("load {} c", n.id), n.c)?;
            if !(n.g_cte >= 0.0 && n.i_cte >= 0.0) {
                return Err(Error::Config(format!("load {} needs g_cte ≥ 0 and i_cte ≥ 0", n.id)));
            }
        }
        if mask.dgs.len() != dgs.len() || mask.lines.len() != lines.len() || mask.loads.len() != n_k {
            return Err(Error::Dimension("mask length does not match network".into()));
        }
        let mut beta_g = DMatrix::zeros(dgs.len(), n_k);
        for (i, d) in dgs.iter().enumerate() {
            if mask.dgs[i] {
                beta_g[(i, d.attach_node)] = 1.0;
            }
        }
        let mut beta_e = DMatrix::zeros(lines.len(), n_k);
        for (j, l) in lines.iter().enumerate() {
            if mask.lines[j] {
                beta_e[(j, l.endpoints.0)] = -1.0;
                beta_e[(j, l.endpoints.1)] = 1.0;
            }
        }
        Ok(Self { base, dgs, lines, nodes, beta_g, beta_e, active_mask: mask })
    }

    pub fn n_i(&self) -> usize {
        self.dgs.len()
    }
    pub fn n_j(&self) -> usize {
        self.lines.len()
    }
    pub fn n_k(&self) -> usize {
        self.nodes.len()
    }

    /// Λ = diag(1/I_rated).
    pub fn lambda_scale(&self) -> Vec<f64> {
        self.dgs.iter().map(|d| 1.0 / d.i_rated).collect()
    }

    /// Load conductance as seen by the dynamics (zero when the load is masked).
    pub fn effective_g(&self, k: usize) -> f64 {
        if self.active_mask.loads[k] {
            self.nodes[k].g_cte
        } else {
            0.0
        }
    }

    /// Constant-current draw as seen by the dynamics (zero when the load is masked).
    pub fn effective_i_cte(&self, k: usize) -> f64 {
        if self.active_mask.loads[k] {
            self.nodes[k].i_cte
        } else {
            0.0
        }
    }

    pub fn with_ratings(&self, i_rated: &[f64]) -> Result<Self> {
        if i_rated.len() != self.n_i() {
            return Err(Error::Dimension(format!("{} ratings for {} DGs", i_rated.len(), self.n_i())));
        }
        let mut out = self.clone();
        for (d, &r) in out.dgs.iter_mut().zip(i_rated) {
            positive(format!("DG {} i_rated", d.id), r)?;
            d.i_rated = r;
        }
        Ok(out)
    }
}

/// Undirected communication graph over the DGs.
///
/// `weights` holds the unmasked adjacency so that masking can be undone;
/// `adjacency` and `laplacian` reflect the current mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CyberGraph {
    pub weights: DMatrix<f64>,
    pub adjacency: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub active: Vec<bool>,
}

impl CyberGraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        Self::with_active(weights, vec![true; n])
    }

    /// Builds a graph from 0-based edge pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(a, b, wt) in edges {
            if a >= n || b >= n {
                return Err(Error::Config(format!("cyber edge ({}, {}) references a missing DG", a + 1, b + 1)));
            }
            if a == b {
                return Err(Error::Config(format!("cyber edge ({0}, {0}) is a self loop", a + 1)));
            }
            positive("cyber edge weight", wt)?;
            w[(a, b)] = wt;
            w[(b, a)] = wt;
        }
        Self::new(w)
    }

    fn with_active(weights: DMatrix<f64>, active: Vec<bool>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n || active.len() != n {
            return Err(Error::Dimension("adjacency must be square and match the DG count".into()));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Config(format!("adjacency has nonzero diagonal at DG {}", i + 1)));
            }
            for j in 0..n {
                if weights[(i, j)] != weights[(j, i)] || weights[(i, j)] < 0.0 {
                    return Err(Error::Config("adjacency must be symmetric and nonnegative".into()));
                }
            }
        }
        let mut adjacency = weights.clone();
        for i in 0..n {
            if !active[i] {
                adjacency.row_mut(i).fill(0.0);
                adjacency.column_mut(i).fill(0.0);
            }
        }
        let laplacian = laplacian_of(&adjacency);
        let g = Self { weights, adjacency, laplacian, active };
        if !g.is_connected() {
            return Err(Error::DisconnectedCyberGraph);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// Breadth-first connectivity over active agents.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let Some(start) = (0..n).find(|&i| self.active[i]) else {
            return false;
        };
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.adjacency[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..n).all(|i| !self.active[i] || seen[i])
    }

    /// Second-smallest Laplacian eigenvalue over the active agents
    /// (`None` for a single active agent).
    pub fn algebraic_connectivity(&self) -> Option<f64> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.active[i]).collect();
        if idx.len() < 2 {
            return None;
        }
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.laplacian[(idx[a], idx[b])]);
        let mut ev: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Some(ev[1])
    }
}

fn laplacian_of(adj: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adj.nrows();
    let mut lap = -adj.clone();
    for i in 0..n {
        lap[(i, i)] = adj.row(i).sum();
    }
    lap
}

/// Builds and validates both layers from a configuration document.
pub fn build_network(cfg: &RunConfig) -> Result<(PhysicalNetwork, CyberGraph)> {
    let base = PerUnitBase::new(cfg.base.r_base, cfg.base.l_base)?;
    let dgs_cfg = dense_by_id("dg", &cfg.dgs)?;
    let lines_cfg = dense_by_id("line", &cfg.lines)?;
    let loads_cfg = dense_by_id("load", &cfg.loads)?;
    let n_k = loads_cfg.len();

    let node_index = |what: &str, node: usize| -> Result<usize> {
        if node == 0 || node > n_k {
            Err(Error::Config(format!("{what} references missing load node {node}")))
        } else {
            Ok(node - 1)
        }
    };

    let mut dgs = Vec::with_capacity(dgs_cfg.len());
    for (i, d) in dgs_cfg.iter().enumerate() {
        dgs.push(DgUnit {
            id: i + 1,
            i_rated: d.i_rated,
            r: base.ohm(d.r_pu),
            l: base.henry(d.l_pu),
            attach_node: node_index(&format!("DG {}", i + 1), d.node)?,
        });
    }
    let mut lines = Vec::with_capacity(lines_cfg.len());
    for (j, l) in lines_cfg.iter().enumerate() {
        for n in [l.from, l.to] {
            if n == 0 || n > n_k {
                return Err(Error::DanglingEndpoint { line: j + 1, node: n });
            }
        }
        lines.push(PowerLine {
            id: j + 1,
            r: base.ohm(l.r_pu),
            l: base.henry(l.l_pu),
            endpoints: (l.from - 1, l.to - 1),
        });
    }
    let mut nodes = Vec::with_capacity(n_k);
    for (k, l) in loads_cfg.iter().enumerate() {
        nodes.push(LoadNode { id: k + 1, c: l.c, g_cte: l.conductance()?, i_cte: l.i_cte });
    }
    let net = PhysicalNetwork::new(base, dgs, lines, nodes)?;

    let n_i = net.n_i();
    let weights = match &cfg.cyber.weights {
        Some(w) if w.len() != cfg.cyber.edges.len() => {
            return Err(Error::Config(format!("{} cyber weights for {} edges", w.len(), cfg.cyber.edges.len())))
        }
        Some(w) => w.clone(),
        None => vec![1.0; cfg.cyber.edges.len()],
    };
    let mut edges = Vec::with_capacity(weights.len());
    for (e, w) in cfg.cyber.edges.iter().zip(weights) {
        if e[0] == 0 || e[1] == 0 {
            return Err(Error::Config("cyber edge ids are 1-based".into()));
        }
        edges.push((e[0] - 1, e[1] - 1, w));
    }
    let graph = CyberGraph::from_edges(n_i, &edges)?;
    Ok((net, graph))
}

/// Applies an activity mask to both layers, always starting from the unmasked data.
pub fn apply_topology_mask(
    net: &PhysicalNetwork,
    graph: &CyberGraph,
    mask: &ActiveMask,
) -> Result<(PhysicalNetwork, CyberGraph)> {
    if !mask.dgs.iter().any(|&a| a) {
        return Err(Error::InvalidMask("no active DG left".into()));
    }
    if !mask.loads.iter().any(|&a| a) {
        return Err(Error::InvalidMask("no active load left".into()));
    }
    let new_net = PhysicalNetwork::with_mask(
        net.base,
        net.dgs.clone(),
        net.lines.clone(),
        net.nodes.clone(),
        mask.clone(),
    )?;
    let new_graph = CyberGraph::with_active(graph.weights.clone(), mask.dgs.clone())?;
    Ok((new_net, new_graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn table1() -> (PhysicalNetwork, CyberGraph) {
        build_network(&presets::table1()).unwrap()
    }

    #[test]
    fn table1_dimensions_and_per_unit() {
        let (net, _) = table1();
        assert_eq!((net.n_i(), net.n_j(), net.n_k()), (4, 5, 4));
        assert!((net.dgs[0].r - 0.075).abs() < 1e-15);
        assert!((net.dgs[0].l - 0.5 * 300e-6).abs() < 1e-18);
    }

    #[test]
    fn per_unit_round_trip() {
        let cfg = presets::table1();
        let (net, _) = build_network(&cfg).unwrap();
        let dgs = dense_by_id("dg", &cfg.dgs).unwrap();
        for (d, c) in net.dgs.iter().zip(&dgs) {
            assert!((net.base.r_pu(d.r) - c.r_pu).abs() <= 1e-12 * c.r_pu);
            assert!((net.base.l_pu(d.l) - c.l_pu).abs() <= 1e-12 * c.l_pu);
        }
    }

    #[test]
    fn incidence_patterns() {
        let (net, _) = table1();
        for i in 0..net.n_i() {
            let row = net.beta_g.row(i);
            assert_eq!(row.iter().filter(|&&x| x != 0.0).count(), 1);
            assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
        }
        for j in 0..net.n_j() {
            let row = net.beta_e.row(j);
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&x| x == -1.0).count(), 1);
            assert_eq!(row.sum(), 0.0);
        }
    }

    #[test]
    fn ring_laplacian() {
        let (_, g) = table1();
        for i in 0..4 {
            assert_eq!(g.laplacian[(i, i)], 2.0);
            assert_eq!(g.laplacian.row(i).sum(), 0.0);
        }
        assert!((g.laplacian.clone() - g.laplacian.transpose()).amax() == 0.0);
        // Ring C4 spectrum is {0, 2, 2, 4}.
        assert!((g.algebraic_connectivity().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_agent_network() {
        let base = PerUnitBase::new(1.0, 1.0).unwrap();
        let net = PhysicalNetwork::new(
            base,
            vec![DgUnit { id: 1, i_rated: 1.0, r: 1.0, l: 1.0, attach_node: 0 }],
            vec![],
            vec![LoadNode { id: 1, c: 1.0, g_cte: 1.0, i_cte: 0.0 }],
        )
        .unwrap();
        assert_eq!(net.beta_e.nrows(), 0);
        let g = CyberGraph::new(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(g.laplacian, DMatrix::zeros(1, 1));
        assert!(g.algebraic_connectivity().is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut cfg = presets::table1();
        cfg.cyber.edges = vec![[1, 2], [3, 4]];
        assert_eq!(build_network(&cfg).unwrap_err(), Error::DisconnectedCyberGraph);

        let mut cfg = presets::table1();
        cfg.lines.get_mut("1").unwrap().to = 9;
        assert!(matches!(build_network(&cfg).unwrap_err(), Error::DanglingEndpoint { .. }));

        let mut cfg = presets::table1();
        cfg.dgs.get_mut("2").unwrap().r_pu = 0.0;
        assert!(matches!(build_network(&cfg).unwrap_err(), Error::NonPositive { .. }));
    }

    #[test]
    fn mask_dg1_keeps_remaining_graph_connected() {
        let (net, g) = table1();
        let mut mask = ActiveMask::all(4, 5, 4);
        mask.dgs[0] = false;
        let (mnet, mg) = apply_topology_mask(&net, &g, &mask).unwrap();
        assert!(mnet.beta_g.row(0).iter().all(|&x| x == 0.0));
        for i in 0..4 {
            assert_eq!(mg.laplacian.row(i).sum(), 0.0);
        }
        // Remaining agents 2-3-4 form a path: spectrum {0, 1, 3}.
        let sub = DMatrix::from_fn(3, 3, |a, b| mg.laplacian[(a + 1, b + 1)]);
        let mut ev: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
        assert!((mg.algebraic_connectivity().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_line_zeroes_only_its_row() {
        let (net, g) = table1();
        let mut mask = ActiveMask::all(4, 5, 4);
        mask.lines[2] = false;
        let (mnet, _) = apply_topology_mask(&net, &g, &mask).unwrap();
        for j in 0..5 {
            if j == 2 {
                assert!(mnet.beta_e.row(j).iter().all(|&x| x == 0.0));
            } else {
                assert_eq!(mnet.beta_e.row(j), net.beta_e.row(j));
            }
        }
    }

    #[test]
    fn mask_load_removes_its_demand_only() {
        let (net, g) = table1();
        let mut mask = ActiveMask::all(4, 5, 4);
        mask.loads[1] = false;
        let (mnet, _) = apply_topology_mask(&net, &g, &mask).unwrap();
        assert_eq!(mnet.effective_g(1), 0.0);
        assert_eq!(mnet.effective_i_cte(1), 0.0);
        assert_eq!(mnet.effective_g(0), net.nodes[0].g_cte);
        assert_eq!(mnet.beta_g, net.beta_g);
        assert_eq!(mnet.beta_e, net.beta_e);
    }

    #[test]
    fn mask_then_unmask_restores() {
        let (net, g) = table1();
        let mut mask = ActiveMask::all(4, 5, 4);
        mask.dgs[0] = false;
        mask.lines[2] = false;
        let (mnet, mg) = apply_topology_mask(&net, &g, &mask).unwrap();
        let (rnet, rg) = apply_topology_mask(&mnet, &mg, &ActiveMask::all(4, 5, 4)).unwrap();
        assert_eq!(rnet, net);
        assert_eq!(rg, g);
    }

    #[test]
    fn mask_that_splits_cyber_graph_is_rejected() {
        let (net, g) = table1();
        let mut mask = ActiveMask::all(4, 5, 4);
        mask.dgs[0] = false;
        mask.dgs[2] = false;
        assert_eq!(apply_topology_mask(&net, &g, &mask).unwrap_err(), Error::DisconnectedCyberGraph);
        let none = ActiveMask { dgs: vec![false; 4], ..ActiveMask::all(4, 5, 4) };
        assert!(matches!(apply_topology_mask(&net, &g, &none), Err(Error::InvalidMask(_))));
    }
}

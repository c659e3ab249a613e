//! Closed-loop model, event-driven integration and trace metrics.

mod events;
mod integrate;
mod metrics;
mod scenario;

pub use events::{events_from_config, ElementRef, EventKind, ParamChange, ScenarioEvent};
pub use integrate::{integrate, Dynamics, IntegrateOptions, RawTrace, Rk4};
pub use metrics::{compute_metrics, MetricSeries, SegmentSummary, Segment, SimulationTrace, SummaryReport};
pub use scenario::{initial_state, resolve_strategy, run_scenario, run_with, ScenarioOutput};

use crate::controller::{controller_rhs_into, omega, ControllerState};
use crate::error::{Error, Result};
use crate::model::Microgrid;
use crate::netmodel::{apply_topology_mask, ActiveMask};

/// Offsets of the blocks (I^G, I^E, V^N, v, λ, ζ) in the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_i: usize,
    pub n_j: usize,
    pub n_k: usize,
}

impl StateLayout {
    pub fn of(mg: &Microgrid) -> Self {
        Self { n_i: mg.net.n_i(), n_j: mg.net.n_j(), n_k: mg.net.n_k() }
    }
    pub fn dim(&self) -> usize {
        4 * self.n_i + self.n_j + self.n_k
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
    pub fn v(&self) -> std::ops::Range<usize> {
        let s = self.n_i + self.n_j + self.n_k;
        s..s + self.n_i
    }
    pub fn lambda(&self) -> std::ops::Range<usize> {
        let s = 2 * self.n_i + self.n_j + self.n_k;
        s..s + self.n_i
    }
    pub fn zeta(&self) -> std::ops::Range<usize> {
        let s = 3 * self.n_i + self.n_j + self.n_k;
        s..s + self.n_i
    }

    /// Column names in state order: ig_1.., ie_1.., vn_1.., v_1.., lambda_1.., zeta_1..
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for (prefix, n) in [
            ("ig", self.n_i),
            ("ie", self.n_j),
            ("vn", self.n_k),
            ("v", self.n_i),
            ("lambda", self.n_i),
            ("zeta", self.n_i),
        ] {
            out.extend((1..=n).map(|k| format!("{prefix}_{k}")));
        }
        out
    }
}

/// Full closed-loop state x = (I^G, I^E, V^N, v, λ, ζ), stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub layout: StateLayout,
    pub data: Vec<f64>,
}

impl SystemState {
    pub fn zeros(layout: StateLayout) -> Self {
        Self { layout, data: vec![0.0; layout.dim()] }
    }
    pub fn from_vec(layout: StateLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::Dimension(format!("state has {} entries, layout needs {}", data.len(), layout.dim())));
        }
        Ok(Self { layout, data })
    }
    pub fn i_g(&self) -> &[f64] {
        &self.data[self.layout.ig()]
    }
    pub fn i_e(&self) -> &[f64] {
        &self.data[self.layout.ie()]
    }
    pub fn v_n(&self) -> &[f64] {
        &self.data[self.layout.vn()]
    }
    pub fn v(&self) -> &[f64] {
        &self.data[self.layout.v()]
    }
    pub fn lambda(&self) -> &[f64] {
        &self.data[self.layout.lambda()]
    }
    pub fn zeta(&self) -> &[f64] {
        &self.data[self.layout.zeta()]
    }
    pub fn block_mut(&mut self, r: std::ops::Range<usize>) -> &mut [f64] {
        &mut self.data[r]
    }
    pub fn ctrl(&self) -> ControllerState {
        ControllerState { v: self.v().to_vec(), lambda: self.lambda().to_vec(), zeta: self.zeta().to_vec() }
    }
}

/// Flattened coefficients for the hot loop, rebuilt after every event.
#[derive(Debug, Clone)]
struct Compiled {
    dg_node: Vec<usize>,
    dg_r: Vec<f64>,
    dg_inv_l: Vec<f64>,
    dg_scale: Vec<f64>,
    dg_active: Vec<bool>,
    line_from: Vec<usize>,
    line_to: Vec<usize>,
    line_r: Vec<f64>,
    line_inv_l: Vec<f64>,
    line_active: Vec<bool>,
    node_inv_c: Vec<f64>,
    node_g: Vec<f64>,
    node_i: Vec<f64>,
}

impl Compiled {
    fn new(mg: &Microgrid) -> Self {
        let net = &mg.net;
        Self {
            dg_node: net.dgs.iter().map(|d| d.attach_node).collect(),
            dg_r: net.dgs.iter().map(|d| d.r).collect(),
            dg_inv_l: net.dgs.iter().map(|d| 1.0 / d.l).collect(),
            dg_scale: net.lambda_scale(),
            dg_active: net.active_mask.dgs.clone(),
            line_from: net.lines.iter().map(|l| l.endpoints.0).collect(),
            line_to: net.lines.iter().map(|l| l.endpoints.1).collect(),
            line_r: net.lines.iter().map(|l| l.r).collect(),
            line_inv_l: net.lines.iter().map(|l| 1.0 / l.l).collect(),
            line_active: net.active_mask.lines.clone(),
            node_inv_c: net.nodes.iter().map(|n| 1.0 / n.c).collect(),
            node_g: (0..net.n_k()).map(|k| net.effective_g(k)).collect(),
            node_i: (0..net.n_k()).map(|k| net.effective_i_cte(k)).collect(),
        }
    }
}

/// The closed loop as an integrable system.
///
/// Before activation the controller states are held (they start at zero, so
/// every DG applies u = V*). Masked elements keep their state frozen.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    pub mg: Microgrid,
    pub controller_active: bool,
    layout: StateLayout,
    c: Compiled,
}

impl ClosedLoopModel {
    pub fn new(mg: Microgrid, controller_active: bool) -> Self {
        let layout = StateLayout::of(&mg);
        let c = Compiled::new(&mg);
        Self { mg, controller_active, layout, c }
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn mask(&self) -> &ActiveMask {
        &self.mg.net.active_mask
    }

    pub fn set_mask(&mut self, mask: &ActiveMask) -> Result<()> {
        let (net, graph) = apply_topology_mask(&self.mg.net, &self.mg.graph, mask)?;
        self.mg.net = net;
        self.mg.graph = graph;
        self.c = Compiled::new(&self.mg);
        Ok(())
    }

    pub(crate) fn recompile(&mut self) {
        self.c = Compiled::new(&self.mg);
    }

    /// Converter voltage u_i for every DG.
    pub fn terminal_voltages(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let v = &x[l.v()];
        let lam = &x[l.lambda()];
        for i in 0..l.n_i {
            out[i] = omega(v[i], &self.mg.env) - self.mg.params.mu * lam[i] * self.c.dg_scale[i];
        }
    }

    pub fn rhs_into(&self, x: &[f64], dx: &mut [f64]) {
        let l = self.layout;
        let c = &self.c;
        let p = &self.mg.params;
        let (ig, rest) = x.split_at(l.n_i);
        let (ie, rest) = rest.split_at(l.n_j);
        let (vn, rest) = rest.split_at(l.n_k);
        let (v, rest) = rest.split_at(l.n_i);
        let (lam, zeta) = rest.split_at(l.n_i);

        let (d_ig, drest) = dx.split_at_mut(l.n_i);
        let (d_ie, drest) = drest.split_at_mut(l.n_j);
        let (d_vn, drest) = drest.split_at_mut(l.n_k);
        let (d_v, drest) = drest.split_at_mut(l.n_i);
        let (d_lam, d_zeta) = drest.split_at_mut(l.n_i);

        for k in 0..l.n_k {
            d_vn[k] = -c.node_g[k] * vn[k] - c.node_i[k];
        }
        for i in 0..l.n_i {
            if c.dg_active[i] {
                let node = c.dg_node[i];
                let u = omega(v[i], &self.mg.env) - p.mu * lam[i] * c.dg_scale[i];
                d_ig[i] = (u - vn[node] - c.dg_r[i] * ig[i]) * c.dg_inv_l[i];
                d_vn[node] += ig[i];
            } else {
                d_ig[i] = 0.0;
            }
        }
        for j in 0..l.n_j {
            if c.line_active[j] {
                let (a, b) = (c.line_from[j], c.line_to[j]);
                d_ie[j] = (vn[a] - vn[b] - c.line_r[j] * ie[j]) * c.line_inv_l[j];
                d_vn[a] -= ie[j];
                d_vn[b] += ie[j];
            } else {
                d_ie[j] = 0.0;
            }
        }
        for k in 0..l.n_k {
            d_vn[k] *= c.node_inv_c[k];
        }

        if self.controller_active {
            let mut pu = [0.0f64; 64];
            let mut pu_vec;
            let pu: &mut [f64] = if l.n_i <= 64 {
                &mut pu[..l.n_i]
            } else {
                pu_vec = vec![0.0; l.n_i];
                &mut pu_vec
            };
            for i in 0..l.n_i {
                pu[i] = c.dg_scale[i] * ig[i];
            }
            controller_rhs_into(v, lam, zeta, pu, &self.mg.graph.laplacian, p, &self.mg.env, d_v, d_lam, d_zeta);
            for i in 0..l.n_i {
                if !c.dg_active[i] {
                    d_v[i] = 0.0;
                    d_lam[i] = 0.0;
                    d_zeta[i] = 0.0;
                }
            }
        } else {
            d_v.fill(0.0);
            d_lam.fill(0.0);
            d_zeta.fill(0.0);
        }
    }
}

/// Time derivative of the closed-loop state.
pub fn closed_loop_rhs(state: &SystemState, model: &ClosedLoopModel) -> Result<SystemState> {
    if state.layout != model.layout() {
        return Err(Error::Dimension("state layout does not match the model".into()));
    }
    let mut out = SystemState::zeros(state.layout);
    model.rhs_into(&state.data, &mut out.data);
    Ok(out)
}

/// Equation residuals in per-unit: voltage rows divided by V_n, node current
/// rows by the largest DG rating, controller rows left as is.
pub fn scaled_residual(model: &ClosedLoopModel, x: &[f64]) -> Vec<f64> {
    let l = model.layout();
    let mut dx = vec![0.0; l.dim()];
    model.rhs_into(x, &mut dx);
    let mg = &model.mg;
    let v_n = mg.env.v_n;
    let i_ref = mg.net.dgs.iter().map(|d| d.i_rated).fold(0.0, f64::max);
    for (i, r) in l.ig().enumerate() {
        dx[r] *= mg.net.dgs[i].l / v_n;
    }
    for (j, r) in l.ie().enumerate() {
        dx[r] *= mg.net.lines[j].l / v_n;
    }
    for (k, r) in l.vn().enumerate() {
        dx[r] *= mg.net.nodes[k].c / i_ref;
    }
    for (i, r) in l.v().enumerate() {
        dx[r] *= mg.params.tau[i] / v_n;
    }
    for (i, r) in l.lambda().enumerate() {
        dx[r] *= mg.params.tau_p[i];
    }
    for (i, r) in l.zeta().enumerate() {
        dx[r] *= mg.params.tau_d[i];
    }
    dx
}

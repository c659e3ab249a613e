use super::events::{events_from_config, ElementRef, EventKind, ScenarioEvent};
use super::integrate::{integrate, Dynamics, IntegrateOptions};
use super::metrics::{compute_metrics, MetricSeries, Segment, SimulationTrace, SummaryReport};
use super::{ClosedLoopModel, StateLayout};
use crate::config::{RunConfig, SimulationConfig};
use crate::error::Result;
use crate::model::Microgrid;
use crate::stability::{apply_strategy, strategy_from_config, TuningStrategy};

impl Dynamics for ClosedLoopModel {
    fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        self.rhs_into(x, dx);
    }

    fn apply_event(&mut self, ev: &ScenarioEvent) -> Result<()> {
        ev.validate(&self.mg)?;
        match ev.kind {
            EventKind::SetICte { load, change } => {
                let n = &mut self.mg.net.nodes[load];
                n.i_cte = change.apply(n.i_cte);
                self.recompile();
            }
            EventKind::SetGCte { load, change } => {
                let n = &mut self.mg.net.nodes[load];
                n.g_cte = change.apply(n.g_cte);
                self.recompile();
            }
            EventKind::Connect(e) | EventKind::Disconnect(e) => {
                let on = matches!(ev.kind, EventKind::Connect(_));
                let mut mask = self.mask().clone();
                match e {
                    ElementRef::Dg(i) => mask.dgs[i] = on,
                    ElementRef::Line(j) => mask.lines[j] = on,
                    ElementRef::Load(k) => mask.loads[k] = on,
                }
                self.set_mask(&mask)?;
            }
            EventKind::ActivateController => self.controller_active = true,
        }
        Ok(())
    }
}

/// Neutral start: V^N = V_n, every current and controller state zero.
pub fn initial_state(mg: &Microgrid) -> Vec<f64> {
    let l = StateLayout::of(mg);
    let mut x = vec![0.0; l.dim()];
    for r in l.vn() {
        x[r] = mg.env.v_n;
    }
    x
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    /// Model after strategy application, before any event.
    pub microgrid: Microgrid,
    pub trace: SimulationTrace,
    pub summary: SummaryReport,
}

/// Strategy to use: an explicit catalogue id wins over the config section.
pub fn resolve_strategy(cfg: &RunConfig, override_id: Option<usize>) -> Result<Option<TuningStrategy>> {
    match override_id {
        Some(id) => Ok(Some(TuningStrategy::catalog(id)?)),
        None => cfg.strategy.as_ref().map(strategy_from_config).transpose(),
    }
}

/// Builds the model from `cfg`, applies its strategy, runs its event script.
pub fn run_scenario(cfg: &RunConfig) -> Result<ScenarioOutput> {
    let mut mg = Microgrid::from_config(cfg)?;
    let strategy = resolve_strategy(cfg, None)?;
    let label = match &strategy {
        Some(s) => {
            mg = apply_strategy(&mg, s)?;
            s.name.clone()
        }
        None => "base case".to_string(),
    };
    let events = events_from_config(&cfg.events, &mg)?;
    run_with(mg, &events, &cfg.simulation, None, &label)
}

/// Runs `events` on `mg` from `x0` (default: [`initial_state`]).
/// The controller starts inactive iff the script contains an activation event.
pub fn run_with(
    mg: Microgrid,
    events: &[ScenarioEvent],
    sim: &SimulationConfig,
    x0: Option<Vec<f64>>,
    label: &str,
) -> Result<ScenarioOutput> {
    let mut events = events.to_vec();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    for e in &events {
        e.validate(&mg)?;
    }
    let starts_active = !events.iter().any(|e| e.kind == EventKind::ActivateController);
    let x0 = x0.unwrap_or_else(|| initial_state(&mg));
    let template = ClosedLoopModel::new(mg.clone(), starts_active);
    let mut model = template.clone();
    let t0 = 0.0;
    let raw = integrate(&mut model, &x0, (t0, sim.t_end), IntegrateOptions::new(sim.dt, sim.decimate), &events)?;

    // Replay events on a fresh copy to label the segments.
    let mut replay = template;
    let mut pending = events.iter().peekable();
    while let Some(ev) = pending.next_if(|e| e.time <= t0) {
        replay.apply_event(ev)?;
    }
    let mut segments = Vec::with_capacity(raw.event_marks.len() + 1);
    let mut seg_start = t0;
    let mut first = 0;
    let mut seg_label = "initial".to_string();
    for &(te, mark) in &raw.event_marks {
        segments.push(Segment {
            t_start: seg_start,
            t_end: te,
            label: seg_label.clone(),
            controller_active: replay.controller_active,
            active_dgs: replay.mask().dgs.clone(),
            first_sample: first,
            end_sample: mark,
        });
        let mut labels = Vec::new();
        while let Some(ev) = pending.next_if(|e| e.time <= te) {
            replay.apply_event(ev)?;
            labels.push(ev.label());
        }
        seg_label = labels.join("; ");
        seg_start = te;
        first = mark;
    }
    segments.push(Segment {
        t_start: seg_start,
        t_end: *raw.times.last().unwrap(),
        label: seg_label,
        controller_active: replay.controller_active,
        active_dgs: replay.mask().dgs.clone(),
        first_sample: first,
        end_sample: raw.len(),
    });

    let mut trace = SimulationTrace {
        layout: StateLayout::of(&mg),
        times: raw.times,
        states: raw.states,
        segments,
        i_rated: mg.i_rated(),
        mu: mg.params.mu,
        env: mg.env,
        metrics: MetricSeries { terminal_pu: vec![], delta: vec![], contained: vec![] },
    };
    trace.metrics = compute_metrics(&trace);
    let summary = SummaryReport::build(&trace, label);
    Ok(ScenarioOutput { microgrid: mg, trace, summary })
}

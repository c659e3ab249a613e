use super::events::ScenarioEvent;
use crate::error::{Error, Result};

/// An autonomous-in-structure ODE whose parameters may change at events.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
    /// Applies a parameter or topology change between steps.
    fn apply_event(&mut self, ev: &ScenarioEvent) -> Result<()> {
        Err(Error::UnknownTarget(format!("system does not accept event `{}`", ev.label())))
    }
}

/// Classical fourth-order Runge-Kutta with preallocated stages.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    pub fn step<D: Dynamics + ?Sized>(&mut self, sys: &D, t: f64, x: &mut [f64], h: f64) {
        let n = x.len();
        sys.rhs(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        let h6 = h / 6.0;
        for i in 0..n {
            x[i] += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub dt: f64,
    /// Sampling interval of the stored trace; samples are also taken at every
    /// event time and at the final time.
    pub sample_interval: f64,
    /// Divergence guard on ‖x‖∞.
    pub guard: f64,
}

impl IntegrateOptions {
    pub fn new(dt: f64, sample_interval: f64) -> Self {
        Self { dt, sample_interval, guard: 1e8 }
    }
}

/// Samples of a run, states stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Index of the first sample taken after each applied event batch.
    pub event_marks: Vec<(f64, usize)>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

fn check_state(x: &[f64], guard: f64, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= guard) {
        Ok(())
    } else {
        Err(Error::Divergence { time: t })
    }
}

/// Integrates `sys` over `t_span` with fixed-step RK4. Each inter-event segment
/// is split into an integer number of equal steps no longer than `dt`, so
/// events always fall on step boundaries. Events at or before `t_span.0` are
/// applied up front; events at or after `t_span.1` are ignored.
pub fn integrate<D: Dynamics>(
    sys: &mut D,
    x0: &[f64],
    t_span: (f64, f64),
    opts: IntegrateOptions,
    events: &[ScenarioEvent],
) -> Result<RawTrace> {
    let (t0, t1) = t_span;
    if !(opts.dt > 0.0) || !(t1 > t0) || !(opts.sample_interval > 0.0) {
        return Err(Error::Config("integrate needs dt > 0, sample interval > 0 and t_end > t_start".into()));
    }
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!("x0 has {} entries, system has {}", x0.len(), sys.dim())));
    }
    if events.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Config("events must be sorted by time".into()));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(n);
    let mut trace = RawTrace {
        dim: n,
        times: Vec::with_capacity(((t1 - t0) / opts.sample_interval) as usize + events.len() + 2),
        states: Vec::new(),
        event_marks: Vec::new(),
    };
    trace.states.reserve(trace.times.capacity() * n);

    let mut ev_iter = events.iter().peekable();
    while let Some(ev) = ev_iter.next_if(|e| e.time <= t0) {
        sys.apply_event(ev)?;
    }
    check_state(&x, opts.guard, t0)?;
    let record = |trace: &mut RawTrace, t: f64, x: &[f64]| {
        trace.times.push(t);
        trace.states.extend_from_slice(x);
    };
    record(&mut trace, t0, &x);
    let mut next_sample_idx: u64 = 1;

    let mut t_seg = t0;
    loop {
        let t_next_event = ev_iter.peek().map(|e| e.time).filter(|&te| te < t1);
        let t_seg_end = t_next_event.unwrap_or(t1);
        if t_seg_end > t_seg {
            let steps = ((t_seg_end - t_seg) / opts.dt).ceil().max(1.0) as u64;
            let h = (t_seg_end - t_seg) / steps as f64;
            for s in 1..=steps {
                let t_before = t_seg + (s - 1) as f64 * h;
                rk.step(sys, t_before, &mut x, h);
                let t = if s == steps { t_seg_end } else { t_seg + s as f64 * h };
                let target = t0 + next_sample_idx as f64 * opts.sample_interval;
                if t >= target - 0.5 * h {
                    check_state(&x, opts.guard, t)?;
                    if t > *trace.times.last().unwrap() {
                        record(&mut trace, t, &x);
                    }
                    while t0 + next_sample_idx as f64 * opts.sample_interval <= t + 0.5 * h {
                        next_sample_idx += 1;
                    }
                }
            }
            check_state(&x, opts.guard, t_seg_end)?;
            if t_seg_end > *trace.times.last().unwrap() {
                record(&mut trace, t_seg_end, &x);
            }
            t_seg = t_seg_end;
        }
        match t_next_event {
            Some(te) => {
                while let Some(ev) = ev_iter.next_if(|e| e.time <= te) {
                    sys.apply_event(ev)?;
                }
                trace.event_marks.push((te, trace.len()));
            }
            None => break,
        }
    }
    Ok(trace)
}

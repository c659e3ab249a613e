use serde::Serialize;

use super::StateLayout;
use crate::controller::{omega, VoltageEnvelope};

/// Interval between two event batches with the configuration that held in it.
/// Samples `first_sample..end_sample` belong to it; the sample taken exactly at
/// an event time belongs to the segment that ends there.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
    pub controller_active: bool,
    pub active_dgs: Vec<bool>,
    pub first_sample: usize,
    pub end_sample: usize,
}

/// Per-sample derived series, stored row-major with `n_i` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// Converter voltage u_i / V_n.
    pub terminal_pu: Vec<f64>,
    /// (λ_i − Λ_i I_i)/λ_i; NaN when |λ_i| is below the floor or the DG is masked.
    pub delta: Vec<f64>,
    /// All active DG voltages inside [V_min, V_max].
    pub contained: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub segments: Vec<Segment>,
    pub i_rated: Vec<f64>,
    pub mu: f64,
    pub env: VoltageEnvelope,
    pub metrics: MetricSeries,
}

/// |λ| below this (p.u.) makes Δ not available.
pub const LAMBDA_FLOOR: f64 = 1e-6;

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn state(&self, k: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.states[k * d..(k + 1) * d]
    }
    pub fn delta_row(&self, k: usize) -> &[f64] {
        let n = self.layout.n_i;
        &self.metrics.delta[k * n..(k + 1) * n]
    }
    pub fn terminal_row(&self, k: usize) -> &[f64] {
        let n = self.layout.n_i;
        &self.metrics.terminal_pu[k * n..(k + 1) * n]
    }
    pub fn segment_of(&self, k: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| k >= s.first_sample && k < s.end_sample)
    }
}

/// Sharing deviation of one DG; NaN below the λ floor.
pub fn sharing_deviation(lambda: f64, pu_current: f64) -> f64 {
    if lambda.abs() < LAMBDA_FLOOR {
        f64::NAN
    } else {
        (lambda - pu_current) / lambda
    }
}

/// Terminal voltages, sharing deviation and containment for every sample.
pub fn compute_metrics(trace: &SimulationTrace) -> MetricSeries {
    let l = trace.layout;
    let n = l.n_i;
    let mut out = MetricSeries {
        terminal_pu: Vec::with_capacity(trace.len() * n),
        delta: Vec::with_capacity(trace.len() * n),
        contained: Vec::with_capacity(trace.len()),
    };
    let all_active = vec![true; n];
    for k in 0..trace.len() {
        let x = trace.state(k);
        let seg = trace.segment_of(k);
        let active = seg.map(|s| &s.active_dgs).unwrap_or(&all_active);
        let mut ok = true;
        for i in 0..n {
            let lam = x[l.lambda()][i];
            let u = omega(x[l.v()][i], &trace.env) - trace.mu * lam / trace.i_rated[i];
            out.terminal_pu.push(u / trace.env.v_n);
            if active[i] {
                ok &= trace.env.contains(u);
                out.delta.push(sharing_deviation(lam, x[l.ig()][i] / trace.i_rated[i]));
            } else {
                out.delta.push(f64::NAN);
            }
        }
        out.contained.push(ok);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
    pub controller_active: bool,
    /// Δ per DG at the last sample of the segment (NaN: not available).
    pub settled_delta: Vec<f64>,
    /// max |Δ| over `settled_delta` (NaN when none is available).
    pub settled_delta_max: f64,
    /// Range of active DG converter voltages in the segment [V].
    pub u_min: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub strategy: String,
    pub t_end: f64,
    pub samples: usize,
    /// No active DG voltage left [V_min, V_max] after controller activation.
    pub containment_ok: bool,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation_time: Option<f64>,
    pub u_min: f64,
    pub u_max: f64,
    /// Largest settled |Δ| over segments with an active controller.
    pub max_settled_delta: f64,
    /// Largest |Δ| over all samples with an active controller.
    pub max_transient_delta: f64,
    /// max_settled_delta ≤ 5 %.
    pub practical_sharing: bool,
    pub segments: Vec<SegmentSummary>,
}

impl SummaryReport {
    pub fn build(trace: &SimulationTrace, strategy: &str) -> Self {
        let n = trace.layout.n_i;
        let mut violations = 0;
        let mut first_violation_time = None;
        let mut u_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        let mut max_transient: f64 = 0.0;
        let mut segments = Vec::with_capacity(trace.segments.len());
        let mut max_settled: f64 = 0.0;
        for seg in &trace.segments {
            let mut s_min = f64::INFINITY;
            let mut s_max = f64::NEG_INFINITY;
            for k in seg.first_sample..seg.end_sample {
                for i in 0..n {
                    if seg.active_dgs[i] {
                        let u = trace.terminal_row(k)[i] * trace.env.v_n;
                        s_min = s_min.min(u);
                        s_max = s_max.max(u);
                        if seg.controller_active {
                            let d = trace.delta_row(k)[i];
                            if d.is_finite() {
                                max_transient = max_transient.max(d.abs());
                            }
                        }
                    }
                }
                if seg.controller_active && !trace.metrics.contained[k] {
                    violations += 1;
                    first_violation_time.get_or_insert(trace.times[k]);
                }
            }
            if seg.controller_active {
                u_min = u_min.min(s_min);
                u_max = u_max.max(s_max);
            }
            let last = seg.end_sample.saturating_sub(1);
            let settled: Vec<f64> = if seg.end_sample > seg.first_sample {
                trace.delta_row(last).to_vec()
            } else {
                vec![f64::NAN; n]
            };
            let finite: Vec<f64> = settled.iter().filter(|d| d.is_finite()).map(|d| d.abs()).collect();
            let settled_max = if finite.is_empty() { f64::NAN } else { finite.iter().copied().fold(0.0, f64::max) };
            if seg.controller_active && settled_max.is_finite() {
                max_settled = max_settled.max(settled_max);
            }
            segments.push(SegmentSummary {
                t_start: seg.t_start,
                t_end: seg.t_end,
                label: seg.label.clone(),
                controller_active: seg.controller_active,
                settled_delta: settled,
                settled_delta_max: settled_max,
                u_min: s_min,
                u_max: s_max,
            });
        }
        Self {
            strategy: strategy.to_string(),
            t_end: trace.times.last().copied().unwrap_or(0.0),
            samples: trace.len(),
            containment_ok: violations == 0,
            violations,
            first_violation_time,
            u_min,
            u_max,
            max_settled_delta: max_settled,
            max_transient_delta: max_transient,
            practical_sharing: max_settled <= 0.05,
            segments,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_definition() {
        assert_eq!(sharing_deviation(0.4, 0.4), 0.0);
        assert!((sharing_deviation(1.0, 0.95) - 0.05).abs() < 1e-15);
        assert!(sharing_deviation(1e-9, 0.5).is_nan());
    }
}

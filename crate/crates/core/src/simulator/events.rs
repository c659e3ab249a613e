use crate::config::{ElementKind, EventConfig, EventKindConfig};
use crate::error::{Error, Result};
use crate::model::Microgrid;

/// 0-based reference to a switchable element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementRef {
    Dg(usize),
    Line(usize),
    Load(usize),
}

impl std::fmt::Display for ElementRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElementRef::Dg(i) => write!(f, "DG {}", i + 1),
            ElementRef::Line(j) => write!(f, "line {}", j + 1),
            ElementRef::Load(k) => write!(f, "load {}", k + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamChange {
    Absolute(f64),
    /// Multiplies the value at event time.
    Scale(f64),
}

impl ParamChange {
    pub fn apply(&self, current: f64) -> f64 {
        match *self {
            ParamChange::Absolute(v) => v,
            ParamChange::Scale(s) => current * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    SetICte { load: usize, change: ParamChange },
    SetGCte { load: usize, change: ParamChange },
    Connect(ElementRef),
    Disconnect(ElementRef),
    ActivateController,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioEvent {
    pub time: f64,
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn label(&self) -> String {
        match self.kind {
            EventKind::SetICte { load, change } => format!("set_i_cte load {} {}", load + 1, change_label(change)),
            EventKind::SetGCte { load, change } => format!("set_g_cte load {} {}", load + 1, change_label(change)),
            EventKind::Connect(e) => format!("connect {e}"),
            EventKind::Disconnect(e) => format!("disconnect {e}"),
            EventKind::ActivateController => "activate_controller".into(),
        }
    }

    /// Checks that the target exists in `mg`.
    pub fn validate(&self, mg: &Microgrid) -> Result<()> {
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(Error::Config(format!("event time {} must be finite and ≥ 0", self.time)));
        }
        let (n_i, n_j, n_k) = (mg.net.n_i(), mg.net.n_j(), mg.net.n_k());
        let check = |e: ElementRef| match e {
            ElementRef::Dg(i) if i < n_i => Ok(()),
            ElementRef::Line(j) if j < n_j => Ok(()),
            ElementRef::Load(k) if k < n_k => Ok(()),
            _ => Err(Error::UnknownTarget(e.to_string())),
        };
        match self.kind {
            EventKind::SetICte { load, change } | EventKind::SetGCte { load, change } => {
                check(ElementRef::Load(load))?;
                let v = match change {
                    ParamChange::Absolute(v) | ParamChange::Scale(v) => v,
                };
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("event value {v} must be ≥ 0")));
                }
                Ok(())
            }
            EventKind::Connect(e) | EventKind::Disconnect(e) => check(e),
            EventKind::ActivateController => Ok(()),
        }
    }
}

fn change_label(c: ParamChange) -> String {
    match c {
        ParamChange::Absolute(v) => format!("= {v}"),
        ParamChange::Scale(s) => format!("x {s}"),
    }
}

/// Converts the `[[events]]` list, validating targets and sorting by time
/// (stable, so same-time events keep file order).
pub fn events_from_config(list: &[EventConfig], mg: &Microgrid) -> Result<Vec<ScenarioEvent>> {
    let mut out = Vec::with_capacity(list.len());
    for (n, e) in list.iter().enumerate() {
        let ctx = |msg: &str| Error::Config(format!("event {} (t = {}): {msg}", n + 1, e.t));
        let target = || -> Result<usize> {
            match e.target {
                Some(t) if t >= 1 => Ok(t - 1),
                Some(_) => Err(ctx("target ids are 1-based")),
                None => Err(ctx("missing key `target`")),
            }
        };
        let change = || -> Result<ParamChange> {
            match (e.value, e.scale) {
                (Some(v), None) => Ok(ParamChange::Absolute(v)),
                (None, Some(s)) => Ok(ParamChange::Scale(s)),
                (Some(_), Some(_)) => Err(ctx("give either `value` or `scale`, not both")),
                (None, None) => Err(ctx("missing key `value` or `scale`")),
            }
        };
        let element = || -> Result<ElementRef> {
            let t = target()?;
            match e.element {
                Some(ElementKind::Dg) => Ok(ElementRef::Dg(t)),
                Some(ElementKind::Line) => Ok(ElementRef::Line(t)),
                Some(ElementKind::Load) => Ok(ElementRef::Load(t)),
                None => Err(ctx("missing key `element`")),
            }
        };
        let kind = match e.kind {
            EventKindConfig::SetICte => EventKind::SetICte { load: target()?, change: change()? },
            EventKindConfig::SetGCte => EventKind::SetGCte { load: target()?, change: change()? },
            EventKindConfig::Connect => EventKind::Connect(element()?),
            EventKindConfig::Disconnect => EventKind::Disconnect(element()?),
            EventKindConfig::ActivateController => EventKind::ActivateController,
        };
        let ev = ScenarioEvent { time: e.t, kind };
        ev.validate(mg)?;
        out.push(ev);
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn timeline_preset_converts() {
        let cfg = presets::table1_timeline();
        let mg = Microgrid::from_config(&cfg).unwrap();
        let ev = events_from_config(&cfg.events, &mg).unwrap();
        assert_eq!(ev.len(), 15);
        assert_eq!(ev[0].kind, EventKind::ActivateController);
        assert_eq!(ev[1].kind, EventKind::SetICte { load: 0, change: ParamChange::Scale(1.5) });
        assert_eq!(ev[13].kind, EventKind::Disconnect(ElementRef::Line(2)));
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn bad_target_is_rejected() {
        let cfg = presets::table1();
        let mg = Microgrid::from_config(&cfg).unwrap();
        let e = EventConfig {
            t: 1.0,
            kind: EventKindConfig::Disconnect,
            element: Some(ElementKind::Dg),
            target: Some(9),
            value: None,
            scale: None,
        };
        assert!(matches!(events_from_config(&[e], &mg), Err(Error::UnknownTarget(_))));
    }

    #[test]
    fn scale_compounds() {
        let up = ParamChange::Scale(1.17);
        let down = ParamChange::Scale(0.55);
        assert!((down.apply(up.apply(0.8)) - 0.8 * 1.17 * 0.55).abs() < 1e-15);
        assert_eq!(ParamChange::Absolute(2.0).apply(5.0), 2.0);
    }
}

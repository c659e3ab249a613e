//! CSV traces, Geršgorin curves and TOML reports.
//!
//! Numbers are written in plain decimal with 12 significant digits, so files
//! do not depend on locale and identical runs give identical bytes. Missing
//! values are written as `NA`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::SimulationTrace;
use crate::stability::GershgorinReport;

pub const SIG_DIGITS: usize = 12;

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Decimal rendering of [`round_sig`]; `NA` for NaN.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let r = round_sig(x);
        if r == 0.0 { "0".into() } else { format!("{r}") }
    }
}

pub fn parse_num(s: &str) -> Result<f64> {
    match s.trim() {
        "NA" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::Io(format!("not a number: `{t}`"))),
    }
}

/// Flat view of a trace as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub state_names: Vec<String>,
    pub n_i: usize,
    pub times: Vec<f64>,
    /// Row-major, `state_names.len()` columns.
    pub states: Vec<f64>,
    pub terminal_pu: Vec<f64>,
    pub delta: Vec<f64>,
    pub contained: Vec<bool>,
}

impl TraceTable {
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        Self {
            state_names: trace.layout.names(),
            n_i: trace.layout.n_i,
            times: trace.times.clone(),
            states: trace.states.clone(),
            terminal_pu: trace.metrics.terminal_pu.clone(),
            delta: trace.metrics.delta.clone(),
            contained: trace.metrics.contained.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Every number rounded as it would be on disk.
    pub fn rounded(&self) -> Self {
        let r = |v: &Vec<f64>| v.iter().map(|&x| round_sig(x)).collect();
        Self {
            times: r(&self.times),
            states: r(&self.states),
            terminal_pu: r(&self.terminal_pu),
            delta: r(&self.delta),
            ..self.clone()
        }
    }

    /// Equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &Self) -> bool {
        let eq = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()));
        self.state_names == other.state_names
            && self.n_i == other.n_i
            && eq(&self.times, &other.times)
            && eq(&self.states, &other.states)
            && eq(&self.terminal_pu, &other.terminal_pu)
            && eq(&self.delta, &other.delta)
            && self.contained == other.contained
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.state_names.iter().cloned());
        h.extend((1..=self.n_i).map(|i| format!("u_pu_{i}")));
        h.extend((1..=self.n_i).map(|i| format!("delta_{i}")));
        h.push("contained".into());
        h
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        let d = self.state_names.len();
        let n = self.n_i;
        let mut rec = Vec::with_capacity(2 + d + 2 * n);
        for k in 0..self.len() {
            rec.clear();
            rec.push(fmt_num(self.times[k]));
            rec.extend(self.states[k * d..(k + 1) * d].iter().map(|&x| fmt_num(x)));
            rec.extend(self.terminal_pu[k * n..(k + 1) * n].iter().map(|&x| fmt_num(x)));
            rec.extend(self.delta[k * n..(k + 1) * n].iter().map(|&x| fmt_num(x)));
            rec.push(if self.contained[k] { "1".into() } else { "0".into() });
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("t") || header.last().map(String::as_str) != Some("contained") {
            return Err(Error::Io("trace header must start with `t` and end with `contained`".into()));
        }
        let n_i = header.iter().filter(|h| h.starts_with("u_pu_")).count();
        let d = header.len() - 2 - 2 * n_i;
        let mut t = TraceTable {
            state_names: header[1..1 + d].to_vec(),
            n_i,
            times: Vec::new(),
            states: Vec::new(),
            terminal_pu: Vec::new(),
            delta: Vec::new(),
            contained: Vec::new(),
        };
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Io(format!("row with {} fields, header has {}", rec.len(), header.len())));
            }
            let num = |k: usize| parse_num(&rec[k]);
            t.times.push(num(0)?);
            for k in 1..1 + d {
                t.states.push(num(k)?);
            }
            for k in 1 + d..1 + d + n_i {
                t.terminal_pu.push(num(k)?);
            }
            for k in 1 + d + n_i..1 + d + 2 * n_i {
                t.delta.push(num(k)?);
            }
            t.contained.push(match &rec[header.len() - 1] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Io(format!("contained flag `{other}`"))),
            });
        }
        Ok(t)
    }
}

pub fn write_trace_csv(path: &Path, trace: &SimulationTrace) -> Result<()> {
    TraceTable::from_trace(trace).write(fs::File::create(path)?)
}

pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    TraceTable::read(fs::File::open(path)?)
}

/// One line per (row, grid point): `row, v, center, radius, margin`.
pub fn write_gershgorin_csv<W: Write>(w: W, rep: &GershgorinReport) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["row", "v", "center", "radius", "margin"])?;
    for row in &rep.rows {
        for k in 0..row.v_grid.len() {
            wr.write_record([
                (row.row + 1).to_string(),
                fmt_num(row.v_grid[k]),
                fmt_num(row.center[k]),
                fmt_num(row.radius[k]),
                fmt_num(row.center[k] - row.radius[k]),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

fn round_value(v: &mut toml::Value) {
    match v {
        toml::Value::Float(x) => *x = round_sig(*x),
        toml::Value::Array(a) => a.iter_mut().for_each(round_value),
        toml::Value::Table(t) => t.iter_mut().for_each(|(_, x)| round_value(x)),
        _ => {}
    }
}

/// Serializes `report` as TOML with floats rounded to 12 significant digits.
pub fn report_to_toml<T: Serialize>(report: &T) -> Result<String> {
    let mut v = toml::Value::try_from(report).map_err(|e| Error::Io(format!("report serialization: {e}")))?;
    round_value(&mut v);
    toml::to_string_pretty(&v).map_err(|e| Error::Io(format!("report serialization: {e}")))
}

pub fn write_toml_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    fs::write(path, report_to_toml(report)?)?;
    Ok(())
}

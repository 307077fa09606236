//! CSV and JSON serialization of analysis results.
//!
//! Floats are written in Rust's shortest round-trip form, so every value
//! parses back bit-for-bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::error::Error;
use crate::phase::{
    AxisScale, Equilibrium, Normalization, Nullcline, PhaseGrid, VectorField, VectorFieldSample,
};
use crate::render::{colormap_stops, ColorStop};
use crate::trajectory::{FailureKind, SimulationError, Trajectory, TrajectoryPoint};

pub const FIELD_HEADER: &str = "v_c,n_d,dv_dt,dn_dt,theta,norm_scaled,color_index";
pub const TRAJECTORY_HEADER: &str = "t,v_c,n_d";
pub const NULLCLINE_HEADER: &str = "variable,polyline,v_c,n_d";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub v_c_range: (f64, f64),
    pub n_d_range: (f64, f64),
    pub n_d_axis_scale: AxisScale,
    pub v_c_samples: usize,
    pub n_d_samples: usize,
}

impl From<&PhaseGrid> for Axes {
    fn from(g: &PhaseGrid) -> Self {
        Self {
            v_c_range: g.v_c_range,
            n_d_range: g.n_d_range,
            n_d_axis_scale: g.n_d_axis_scale,
            v_c_samples: g.v_c_samples,
            n_d_samples: g.n_d_samples,
        }
    }
}

impl From<&Axes> for PhaseGrid {
    fn from(a: &Axes) -> Self {
        Self {
            v_c_range: a.v_c_range,
            n_d_range: a.n_d_range,
            v_c_samples: a.v_c_samples,
            n_d_samples: a.n_d_samples,
            n_d_axis_scale: a.n_d_axis_scale,
        }
    }
}

/// Everything needed to redraw an arrow from the raw derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub t_ref: f64,
    pub s_v: f64,
    pub s_n: f64,
    pub radii: (f64, f64),
    /// Non-zero scaled norms mapped to color index 0 and 1.
    pub norm_range: Option<(f64, f64)>,
    pub colormap: Vec<ColorStop>,
}

impl NormalizationRecord {
    pub fn new(n: &Normalization, norm_range: Option<(f64, f64)>) -> Self {
        Self {
            t_ref: n.t_ref,
            s_v: n.s_v,
            s_n: n.s_n,
            radii: n.radii,
            norm_range,
            colormap: colormap_stops(),
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            t_ref: self.t_ref,
            s_v: self.s_v,
            s_n: self.s_n,
            radii: self.radii,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub kind: FailureKind,
    pub t: f64,
    pub message: String,
}

/// A trajectory as drawn: complete, or partial with the reason it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trajectory: Trajectory,
    pub failure: Option<TrajectoryFailure>,
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(trajectory: Trajectory) -> Self {
        Self {
            trajectory,
            failure: None,
        }
    }
}

impl From<SimulationError> for TrajectoryRecord {
    fn from(e: SimulationError) -> Self {
        let message = e.to_string();
        Self {
            failure: Some(TrajectoryFailure {
                kind: e.kind,
                t: e.t,
                message,
            }),
            trajectory: e.partial,
        }
    }
}

/// A complete phase portrait: the JSON wire format and the input of
/// [`crate::render::render_portrait`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitDocument {
    pub config_hash: String,
    pub axes: Axes,
    pub normalization: NormalizationRecord,
    pub field: Vec<VectorFieldSample>,
    pub nullclines: Vec<Nullcline>,
    pub equilibria: Vec<Equilibrium>,
    pub trajectories: Vec<TrajectoryRecord>,
}

impl PortraitDocument {
    /// A document with axes and nothing to draw.
    pub fn empty(grid: &PhaseGrid, normalization: &Normalization) -> Self {
        Self {
            config_hash: String::new(),
            axes: grid.into(),
            normalization: NormalizationRecord::new(normalization, None),
            field: Vec::new(),
            nullclines: Vec::new(),
            equilibria: Vec::new(),
            trajectories: Vec::new(),
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn field_csv(samples: &[VectorFieldSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for s in samples {
        let theta = s.theta.map(fmt_float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_float(s.point.v_c),
            fmt_float(s.point.n_d),
            fmt_float(s.dv_dt),
            fmt_float(s.dn_dt),
            theta,
            fmt_float(s.norm_scaled),
            fmt_float(s.color_index)
        );
    }
    out
}

pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::with_capacity(48 * (t.points.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for p in &t.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_float(p.t),
            fmt_float(p.v_c),
            fmt_float(p.n_d)
        );
    }
    out
}

/// One row per vertex; `polyline` numbers the polylines of each nullcline.
pub fn nullclines_csv(nullclines: &[Nullcline]) -> String {
    let mut out = String::from(NULLCLINE_HEADER);
    out.push('\n');
    for nc in nullclines {
        let name = serde_json::to_value(nc.variable)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        for (k, line) in nc.polylines.iter().enumerate() {
            for s in line {
                let _ = writeln!(out, "{name},{k},{},{}", fmt_float(s.v_c), fmt_float(s.n_d));
            }
        }
    }
    out
}

fn csv_rows<'a>(
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, Error> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "expected header {header:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    Ok(lines
        .enumerate()
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

fn parse_f64(line: usize, s: &str) -> Result<f64, Error> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("line {line}: {s:?} is not a number")))
}

/// Parses the output of [`field_csv`].
pub fn parse_field_csv(text: &str) -> Result<Vec<VectorFieldSample>, Error> {
    csv_rows(text, FIELD_HEADER)?
        .map(|(line, cols)| {
            if cols.len() != 7 {
                return Err(Error::InvalidArgument(format!(
                    "line {line}: expected 7 columns"
                )));
            }
            let f = |k: usize| parse_f64(line, cols[k]);
            Ok(VectorFieldSample {
                point: CellState::new(f(0)?, f(1)?),
                dv_dt: f(2)?,
                dn_dt: f(3)?,
                theta: if cols[4].is_empty() {
                    None
                } else {
                    Some(f(4)?)
                },
                norm_scaled: f(5)?,
                color_index: f(6)?,
            })
        })
        .collect()
}

/// Parses the output of [`trajectory_csv`] into its points.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryPoint>, Error> {
    csv_rows(text, TRAJECTORY_HEADER)?
        .map(|(line, cols)| {
            if cols.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "line {line}: expected 3 columns"
                )));
            }
            Ok(TrajectoryPoint {
                t: parse_f64(line, cols[0])?,
                v_c: parse_f64(line, cols[1])?,
                n_d: parse_f64(line, cols[2])?,
            })
        })
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("analysis results serialize")
}

pub fn document_json(doc: &PortraitDocument) -> String {
    to_json(doc)
}

pub fn parse_document_json(text: &str) -> Result<PortraitDocument, Error> {
    serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Field samples paired with the normalization used to compute them.
pub fn field_json(field: &VectorField) -> String {
    to_json(field)
}

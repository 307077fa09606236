//! Nullcline extraction by marching squares on the scaled derivatives.
//!
//! Grid nodes where a derivative is exactly zero get special treatment:
//! a run of three or more such nodes along a grid line is emitted as an
//! exact segment, and marching-squares segments lying along that run are
//! dropped. Zero is classified with the non-positive side, so a crossing
//! next to an exact zero snaps onto the node instead of being bisected.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{bisect, Normalization, PhaseGrid, ScaledField};
use crate::cell::{CellState, PlanarSystem};
use crate::error::{Error, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NullclineVariable {
    #[serde(rename = "v_c")]
    VC,
    #[serde(rename = "n_d")]
    ND,
}

impl NullclineVariable {
    fn component(self) -> usize {
        match self {
            Self::VC => 0,
            Self::ND => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nullcline {
    pub variable: NullclineVariable,
    pub polylines: Vec<Vec<CellState>>,
}

impl Nullcline {
    pub fn vertices(&self) -> impl Iterator<Item = &CellState> {
        self.polylines.iter().flatten()
    }
}

/// A maximal run of exact-zero nodes along one grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ZeroRun {
    /// `true` for a row (constant `n_d`), `false` for a column.
    pub horizontal: bool,
    pub line: usize,
    pub start: usize,
    pub end: usize,
}

impl ZeroRun {
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.start..=self.end).map(move |k| {
            if self.horizontal {
                (k, self.line)
            } else {
                (self.line, k)
            }
        })
    }
}

/// Finds runs of at least three consecutive nodes satisfying `is_zero`.
pub(crate) fn zero_runs(
    nx: usize,
    ny: usize,
    is_zero: impl Fn(usize, usize) -> bool,
) -> Vec<ZeroRun> {
    let mut runs = Vec::new();
    let mut scan = |horizontal: bool, lines: usize, len: usize| {
        for line in 0..lines {
            let mut k = 0;
            while k < len {
                let at = |k: usize| {
                    if horizontal {
                        is_zero(k, line)
                    } else {
                        is_zero(line, k)
                    }
                };
                if !at(k) {
                    k += 1;
                    continue;
                }
                let start = k;
                while k + 1 < len && at(k + 1) {
                    k += 1;
                }
                if k - start >= 2 {
                    runs.push(ZeroRun {
                        horizontal,
                        line,
                        start,
                        end: k,
                    });
                }
                k += 1;
            }
        }
    };
    scan(true, ny, nx);
    scan(false, nx, ny);
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Key {
    Node(usize, usize),
    /// Edge from node `(i, j)` to `(i + 1, j)` (horizontal) or `(i, j + 1)`.
    Edge(bool, usize, usize),
}

/// Scaled grid values for both components, row-major.
pub(crate) struct GridValues {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<(f64, f64)>,
}

impl GridValues {
    pub fn evaluate<S: PlanarSystem + ?Sized>(
        field: &ScaledField<'_, S>,
    ) -> Result<Self, ModelError> {
        use rayon::prelude::*;
        let grid = field.grid;
        let nx = grid.v_c_samples;
        let values = (0..grid.node_count())
            .into_par_iter()
            .map(|k| field.at_state(grid.node(k % nx, k / nx)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            nx,
            ny: grid.n_d_samples,
            values,
        })
    }

    pub fn get(&self, i: usize, j: usize, component: usize) -> f64 {
        let v = self.values[j * self.nx + i];
        if component == 0 {
            v.0
        } else {
            v.1
        }
    }
}

struct Tracer<'a, S: PlanarSystem + ?Sized> {
    field: &'a ScaledField<'a, S>,
    values: &'a GridValues,
    component: usize,
    tol: f64,
    crossings: HashMap<Key, CellState>,
}

impl<S: PlanarSystem + ?Sized> Tracer<'_, S> {
    fn value(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j, self.component)
    }

    fn positive(&self, i: usize, j: usize) -> bool {
        self.value(i, j) > 0.0
    }

    /// Crossing on the edge between two adjacent nodes of opposite class.
    fn crossing(&mut self, a: (usize, usize), b: (usize, usize)) -> Result<Key, ModelError> {
        let (fa, fb) = (self.value(a.0, a.1), self.value(b.0, b.1));
        let grid = self.field.grid;
        if fa == 0.0 {
            self.crossings
                .insert(Key::Node(a.0, a.1), grid.node(a.0, a.1));
            return Ok(Key::Node(a.0, a.1));
        }
        if fb == 0.0 {
            self.crossings
                .insert(Key::Node(b.0, b.1), grid.node(b.0, b.1));
            return Ok(Key::Node(b.0, b.1));
        }
        let horizontal = a.1 == b.1;
        let key = Key::Edge(horizontal, a.0, a.1);
        if self.crossings.contains_key(&key) {
            return Ok(key);
        }
        let c = self.component;
        let point = if horizontal {
            let n = grid.n_node(a.1);
            let f = |v: f64| {
                self.field
                    .at_state(CellState::new(v, n))
                    .map(|x| pick(x, c))
            };
            let v = bisect(f, grid.v_node(a.0), grid.v_node(b.0), fa, fb, self.tol)?;
            CellState::new(v, n)
        } else {
            let v = grid.v_node(a.0);
            let f = |w: f64| self.field.at(v, w).map(|x| pick(x, c));
            let w = bisect(f, grid.w_node(a.1), grid.w_node(b.1), fa, fb, self.tol)?;
            CellState::new(v, grid.from_axis(w))
        };
        self.crossings.insert(key, point);
        Ok(key)
    }
}

fn pick(x: (f64, f64), component: usize) -> f64 {
    if component == 0 {
        x.0
    } else {
        x.1
    }
}

/// Contour of one component as polylines.
pub(crate) fn trace<S: PlanarSystem + ?Sized>(
    field: &ScaledField<'_, S>,
    values: &GridValues,
    component: usize,
    tol: f64,
) -> Result<Vec<Vec<CellState>>, ModelError> {
    let (nx, ny) = (values.nx, values.ny);
    let runs = zero_runs(nx, ny, |i, j| values.get(i, j, component) == 0.0);
    let mut run_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (r, run) in runs.iter().enumerate() {
        for node in run.nodes() {
            run_of.entry(node).or_default().push(r);
        }
    }
    let same_run = |a: Key, b: Key| match (a, b) {
        (Key::Node(ai, aj), Key::Node(bi, bj)) => {
            match (run_of.get(&(ai, aj)), run_of.get(&(bi, bj))) {
                (Some(ra), Some(rb)) => ra.iter().any(|r| rb.contains(r)),
                _ => false,
            }
        }
        _ => false,
    };

    let mut tracer = Tracer {
        field,
        values,
        component,
        tol,
        crossings: HashMap::new(),
    };
    let mut segments: Vec<(Key, Key)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let pos = corners.map(|(a, b)| tracer.positive(a, b));
            // bottom, right, top, left
            let edges = [
                (corners[0], corners[1]),
                (corners[1], corners[2]),
                (corners[3], corners[2]),
                (corners[0], corners[3]),
            ];
            let crossed = [
                pos[0] != pos[1],
                pos[1] != pos[2],
                pos[3] != pos[2],
                pos[0] != pos[3],
            ];
            let mut keys = [None; 4];
            for (e, &(a, b)) in edges.iter().enumerate() {
                if crossed[e] {
                    keys[e] = Some(tracer.crossing(a, b)?);
                }
            }
            let present: Vec<usize> = (0..4).filter(|&e| crossed[e]).collect();
            let pairs: Vec<(usize, usize)> = match present.len() {
                2 => vec![(present[0], present[1])],
                4 => {
                    let vc = 0.5 * (field.grid.v_node(i) + field.grid.v_node(i + 1));
                    let wc = 0.5 * (field.grid.w_node(j) + field.grid.w_node(j + 1));
                    let center = pick(field.at(vc, wc)?, component) > 0.0;
                    if center == pos[0] {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                }
                _ => Vec::new(),
            };
            for (ea, eb) in pairs {
                let (ka, kb) = (keys[ea].unwrap(), keys[eb].unwrap());
                if ka == kb || same_run(ka, kb) {
                    continue;
                }
                segments.push((ka, kb));
            }
        }
    }

    let mut polylines: Vec<Vec<CellState>> = chain(&segments)
        .into_iter()
        .map(|keys| keys.iter().map(|k| tracer.crossings[k]).collect())
        .collect();
    for run in &runs {
        polylines.push(run.nodes().map(|(i, j)| field.grid.node(i, j)).collect());
    }
    Ok(polylines)
}

/// Links segments sharing endpoint keys into maximal chains.
fn chain(segments: &[(Key, Key)]) -> Vec<Vec<Key>> {
    let mut incident: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used: HashSet<usize> = HashSet::new();
    let next = |key: Key, used: &HashSet<usize>| -> Option<usize> {
        let segs = &incident[&key];
        if segs.len() != 2 {
            return None;
        }
        segs.iter().copied().find(|s| !used.contains(s))
    };
    let other = |s: usize, key: Key| {
        if segments[s].0 == key {
            segments[s].1
        } else {
            segments[s].0
        }
    };

    let mut out = Vec::new();
    for start in 0..segments.len() {
        if used.contains(&start) {
            continue;
        }
        used.insert(start);
        let mut line = vec![segments[start].0, segments[start].1];
        while let Some(s) = next(*line.last().unwrap(), &used) {
            used.insert(s);
            let k = other(s, *line.last().unwrap());
            line.push(k);
        }
        while let Some(s) = next(line[0], &used) {
            used.insert(s);
            let k = other(s, line[0]);
            line.insert(0, k);
        }
        out.push(line);
    }
    out
}

/// Both nullclines of `system` on `grid`; vertices satisfy
/// `|scaled derivative| <= tol`.
pub fn extract_nullclines<S: PlanarSystem + ?Sized>(
    system: &S,
    grid: &PhaseGrid,
    norm: &Normalization,
    tol: f64,
) -> Result<(Nullcline, Nullcline), Error> {
    grid.validate(system.state_bounds())?;
    let field = ScaledField { system, grid, norm };
    let values = GridValues::evaluate(&field)?;
    let build = |variable: NullclineVariable| -> Result<Nullcline, Error> {
        Ok(Nullcline {
            variable,
            polylines: trace(&field, &values, variable.component(), tol)?,
        })
    };
    Ok((build(NullclineVariable::VC)?, build(NullclineVariable::ND)?))
}

//! Equilibria at nullcline crossings.
//!
//! Three kinds are distinguished. A grid line along which both derivatives
//! vanish exactly is an equilibrium *continuum* (the `V_C = 0` axis of an
//! isolated cell); it is reported node by node with its transverse
//! stability, plus one non-hyperbolic record wherever that stability
//! flips. Zeros of `V̇_C` on a state-bound row where `Ṅ_d` vanishes are
//! *boundary* equilibria. Remaining nullcline intersections are refined by
//! damped Newton iteration and reported as *isolated*.

use serde::{Deserialize, Serialize};

use super::nullcline::{trace, zero_runs, GridValues, ZeroRun};
use super::{bisect, Normalization, PhaseGrid, ScaledField, MAX_ITERATIONS};
use crate::cell::{CellState, PlanarSystem};
use crate::error::{Error, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Isolated,
    OnContinuum,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Stable,
    Unstable,
    Saddle,
    NonHyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub point: CellState,
    pub kind: EquilibriumKind,
    /// For continuum records this is the transverse stability.
    pub classification: Classification,
    /// Eigenvalues of the axis-coordinate Jacobian, 1/s.
    pub eigenvalues: [Eigenvalue; 2],
    /// `false` when Newton refinement failed and `point` is the raw
    /// grid-resolution estimate.
    pub refined: bool,
}

/// Eigenvalues of a real 2×2 matrix.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [Eigenvalue; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if half_tr >= 0.0 {
            half_tr + root
        } else {
            half_tr - root
        };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (a, b) = if big >= small {
            (big, small)
        } else {
            (small, big)
        };
        [Eigenvalue { re: a, im: 0.0 }, Eigenvalue { re: b, im: 0.0 }]
    } else {
        let root = (-disc).sqrt();
        [
            Eigenvalue {
                re: half_tr,
                im: root,
            },
            Eigenvalue {
                re: half_tr,
                im: -root,
            },
        ]
    }
}

const HYPERBOLIC_EPS: f64 = 1e-9;

fn classify(eig: &[Eigenvalue; 2]) -> Classification {
    let scale = eig.iter().map(|e| e.re.hypot(e.im)).fold(0.0, f64::max);
    if scale == 0.0 || eig.iter().any(|e| e.re.abs() <= HYPERBOLIC_EPS * scale) {
        return Classification::NonHyperbolic;
    }
    match (eig[0].re < 0.0, eig[1].re < 0.0) {
        (true, true) => Classification::Stable,
        (false, false) => Classification::Unstable,
        _ => Classification::Saddle,
    }
}

fn sign_class(value: f64, scale: f64) -> Classification {
    if value.abs() <= HYPERBOLIC_EPS * scale {
        Classification::NonHyperbolic
    } else if value < 0.0 {
        Classification::Stable
    } else {
        Classification::Unstable
    }
}

fn trace_of(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] + m[1][1]
}

fn norm_of(m: &[[f64; 2]; 2]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Equilibria of `system` inside `grid`.
///
/// Output order: continuum records (by line, then along it), boundary
/// equilibria, isolated equilibria.
pub fn find_equilibria<S: PlanarSystem + ?Sized>(
    system: &S,
    grid: &PhaseGrid,
    norm: &Normalization,
    tol: f64,
) -> Result<Vec<Equilibrium>, Error> {
    let bounds = system.state_bounds();
    grid.validate(bounds)?;
    let field = ScaledField { system, grid, norm };
    let values = GridValues::evaluate(&field)?;
    let (nx, ny) = (values.nx, values.ny);

    let continua = zero_runs(nx, ny, |i, j| {
        values.get(i, j, 0) == 0.0 && values.get(i, j, 1) == 0.0
    });
    let on_continuum = |i: usize, j: usize| continua.iter().any(|r| r.nodes().any(|n| n == (i, j)));

    let mut out = Vec::new();
    for run in &continua {
        out.extend(continuum_records(&field, run)?);
    }
    out.extend(boundary_equilibria(
        &field,
        &values,
        bounds,
        tol,
        &on_continuum,
    )?);
    out.extend(isolated_equilibria(&field, &values, &continua, tol)?);
    Ok(out)
}

fn continuum_records<S: PlanarSystem + ?Sized>(
    field: &ScaledField<'_, S>,
    run: &ZeroRun,
) -> Result<Vec<Equilibrium>, ModelError> {
    let grid = field.grid;
    // Position along the run in axis coordinates.
    let at = |t: f64| -> (f64, f64) {
        if run.horizontal {
            (t, grid.w_node(run.line))
        } else {
            (grid.v_node(run.line), t)
        }
    };
    let coord = |k: usize| {
        if run.horizontal {
            grid.v_node(k)
        } else {
            grid.w_node(k)
        }
    };
    let state = |k: usize| {
        if run.horizontal {
            grid.node(k, run.line)
        } else {
            grid.node(run.line, k)
        }
    };
    let record =
        |point: CellState, jac: [[f64; 2]; 2], classification: Classification| Equilibrium {
            point,
            kind: EquilibriumKind::OnContinuum,
            classification,
            eigenvalues: eigenvalues_2x2(jac),
            refined: true,
        };

    let mut jacobians = Vec::new();
    for k in run.start..=run.end {
        let (v, w) = at(coord(k));
        jacobians.push(field.jacobian(v, w)?);
    }
    let scale = jacobians.iter().map(norm_of).fold(0.0, f64::max);

    let mut out = Vec::new();
    for (idx, k) in (run.start..=run.end).enumerate() {
        let jac = jacobians[idx];
        let tr = trace_of(&jac);
        out.push(record(state(k), jac, sign_class(tr, scale)));
        if k == run.end {
            break;
        }
        let tr_next = trace_of(&jacobians[idx + 1]);
        let flips = (tr > 0.0 && tr_next < 0.0) || (tr < 0.0 && tr_next > 0.0);
        if flips {
            // transverse eigenvalue of a line of equilibria is the trace
            let f = |t: f64| {
                let (v, w) = at(t);
                field.jacobian(v, w).map(|j| trace_of(&j))
            };
            let t = bisect(f, coord(k), coord(k + 1), tr, tr_next, 0.0)?;
            let (v, w) = at(t);
            let point = CellState::new(v, grid.from_axis(w));
            out.push(record(
                point,
                field.jacobian(v, w)?,
                Classification::NonHyperbolic,
            ));
        }
    }
    Ok(out)
}

fn boundary_equilibria<S: PlanarSystem + ?Sized>(
    field: &ScaledField<'_, S>,
    values: &GridValues,
    bounds: (f64, f64),
    tol: f64,
    on_continuum: &dyn Fn(usize, usize) -> bool,
) -> Result<Vec<Equilibrium>, ModelError> {
    let grid = field.grid;
    let mut rows = Vec::new();
    if grid.n_d_range.0 == bounds.0 {
        rows.push(0);
    }
    if grid.n_d_range.1 == bounds.1 {
        rows.push(values.ny - 1);
    }
    let mut out = Vec::new();
    for j in rows {
        let n = grid.n_node(j);
        let mut candidates = Vec::new();
        for i in 0..values.nx {
            let fv = values.get(i, j, 0);
            if fv == 0.0 && !on_continuum(i, j) {
                candidates.push(grid.v_node(i));
            }
            if i + 1 == values.nx {
                continue;
            }
            let fv_next = values.get(i + 1, j, 0);
            if fv == 0.0 || fv_next == 0.0 || (fv > 0.0) == (fv_next > 0.0) {
                continue;
            }
            let f = |v: f64| field.at_state(CellState::new(v, n)).map(|x| x.0);
            candidates.push(bisect(
                f,
                grid.v_node(i),
                grid.v_node(i + 1),
                fv,
                fv_next,
                tol,
            )?);
        }
        for v in candidates {
            let (fv, fn_) = field.at_state(CellState::new(v, n))?;
            if fv.abs() > tol || fn_.abs() > tol {
                continue;
            }
            let jac = field.jacobian(v, grid.to_axis(n))?;
            out.push(Equilibrium {
                point: CellState::new(v, n),
                kind: EquilibriumKind::Boundary,
                // the state is pinned against the bound; stability follows V̇_C
                classification: sign_class(jac[0][0], norm_of(&jac)),
                eigenvalues: eigenvalues_2x2(jac),
                refined: true,
            });
        }
    }
    Ok(out)
}

fn segment_intersection(
    p: (f64, f64),
    p2: (f64, f64),
    q: (f64, f64),
    q2: (f64, f64),
) -> Option<(f64, f64)> {
    let r = (p2.0 - p.0, p2.1 - p.1);
    let s = (q2.0 - q.0, q2.1 - q.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (q.0 - p.0, q.1 - p.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((p.0 + t * r.0, p.1 + t * r.1))
}

fn isolated_equilibria<S: PlanarSystem + ?Sized>(
    field: &ScaledField<'_, S>,
    values: &GridValues,
    continua: &[ZeroRun],
    tol: f64,
) -> Result<Vec<Equilibrium>, ModelError> {
    let grid = field.grid;
    // unit-square coordinates so both axes weigh equally
    let (w_lo, _) = grid.axis_range();
    let to_unit = |s: &CellState| {
        (
            (s.v_c - grid.v_c_range.0) / grid.v_span(),
            (grid.to_axis(s.n_d) - w_lo) / grid.axis_span(),
        )
    };
    let from_unit = |x: (f64, f64)| {
        (
            grid.v_c_range.0 + x.0 * grid.v_span(),
            w_lo + x.1 * grid.axis_span(),
        )
    };
    let cell = (grid.dv() / grid.v_span(), grid.dw() / grid.axis_span());

    let vc = trace(field, values, 0, tol)?;
    let nd = trace(field, values, 1, tol)?;
    let mut raw = Vec::new();
    for a in &vc {
        for b in &nd {
            for sa in a.windows(2) {
                for sb in b.windows(2) {
                    let hit = segment_intersection(
                        to_unit(&sa[0]),
                        to_unit(&sa[1]),
                        to_unit(&sb[0]),
                        to_unit(&sb[1]),
                    );
                    raw.extend(hit);
                }
            }
        }
    }

    let near_continuum = |x: (f64, f64)| {
        continua.iter().any(|run| {
            let (lo, hi) = (run.start, run.end);
            if run.horizontal {
                let y = run.line as f64 * cell.1;
                (x.1 - y).abs() <= 0.5 * cell.1
                    && x.0 >= lo as f64 * cell.0 - 0.5 * cell.0
                    && x.0 <= hi as f64 * cell.0 + 0.5 * cell.0
            } else {
                let xx = run.line as f64 * cell.0;
                (x.0 - xx).abs() <= 0.5 * cell.0
                    && x.1 >= lo as f64 * cell.1 - 0.5 * cell.1
                    && x.1 <= hi as f64 * cell.1 + 0.5 * cell.1
            }
        })
    };
    let on_bound_row = |x: (f64, f64)| x.1 <= 0.5 * cell.1 || x.1 >= 1.0 - 0.5 * cell.1;

    let mut out: Vec<Equilibrium> = Vec::new();
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for x in raw {
        if near_continuum(x) || on_bound_row(x) {
            continue;
        }
        let (v0, w0) = from_unit(x);
        let (v, w, refined) = newton(field, v0, w0, tol)?;
        let key = to_unit(&CellState::new(v, grid.from_axis(w)));
        if seen
            .iter()
            .any(|s| (s.0 - key.0).abs() < 1e-6 && (s.1 - key.1).abs() < 1e-6)
        {
            continue;
        }
        seen.push(key);
        let jac = field.jacobian(v, w)?;
        let eigenvalues = eigenvalues_2x2(jac);
        out.push(Equilibrium {
            point: CellState::new(v, grid.from_axis(w)),
            kind: EquilibriumKind::Isolated,
            classification: classify(&eigenvalues),
            eigenvalues,
            refined,
        });
    }
    Ok(out)
}

/// Damped Newton on the scaled pair. Returns the start point unrefined if
/// the iteration does not reach `tol`.
fn newton<S: PlanarSystem + ?Sized>(
    field: &ScaledField<'_, S>,
    v0: f64,
    w0: f64,
    tol: f64,
) -> Result<(f64, f64, bool), ModelError> {
    let grid = field.grid;
    let (w_lo, w_hi) = grid.axis_range();
    let clamp = |v: f64, w: f64| {
        (
            v.clamp(grid.v_c_range.0, grid.v_c_range.1),
            w.clamp(w_lo, w_hi),
        )
    };
    let residual = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let (sv, sn) = (field.norm.s_v, field.norm.s_n);

    let (mut v, mut w) = (v0, w0);
    let mut f = field.at(v, w)?;
    for _ in 0..MAX_ITERATIONS {
        if residual(f) <= tol {
            return Ok((v, w, true));
        }
        let j = field.jacobian(v, w)?;
        // scaled Jacobian rows
        let (a, b, c, d) = (j[0][0] / sv, j[0][1] / sv, j[1][0] / sn, j[1][1] / sn);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dv = (-f.0 * d + f.1 * b) / det;
        let dw = (-a * f.1 + c * f.0) / det;
        let mut lambda = 1.0;
        loop {
            let (vn, wn) = clamp(v + lambda * dv, w + lambda * dw);
            let fnew = field.at(vn, wn)?;
            if residual(fnew) < residual(f) || lambda < 1e-4 {
                v = vn;
                w = wn;
                f = fnew;
                break;
            }
            lambda *= 0.5;
        }
    }
    if residual(f) <= tol {
        Ok((v, w, true))
    } else {
        Ok((v0, w0, false))
    }
}

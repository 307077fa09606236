//! Time integration of the cell system.
//!
//! [`simulate`] uses the Dormand–Prince 5(4) pair with Hairer's dense
//! output; [`reference_integrate`] is a fixed-step classical RK4 kept as a
//! convergence oracle. Both integrate `(v_c, ln n_d)` when `log_state` is
//! set and clamp `n_d` to the model bounds at every stage.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellParams, CellState, CellSystem, PlanarSystem};
use crate::error::{ConfigError, Error, ModelError};

/// Evenly spaced report times per trajectory, including both ends.
pub const REPORT_POINTS: usize = 200;
/// Smallest step before the integrator gives up.
pub const MIN_STEP: f64 = 1e-18;
/// Accepted plus rejected steps before the integrator gives up.
pub const MAX_STEPS: usize = 5_000_000;
/// Smallest step count accepted by [`reference_integrate`].
pub const MIN_REFERENCE_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// V.
    pub abs_tol_v: f64,
    /// In the integration coordinate of `n_d`: `ln n_d` when `log_state` is
    /// set, otherwise a fraction of `n_d_max − n_d_min`.
    pub abs_tol_n: f64,
    /// s.
    pub max_step: f64,
    /// s.
    pub horizon: f64,
    pub log_state: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol_v: 1e-9,
            abs_tol_n: 1e-9,
            max_step: 1e-5,
            horizon: 1e-3,
            log_state: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol_v", self.abs_tol_v),
            ("abs_tol_n", self.abs_tol_n),
            ("max_step", self.max_step),
            ("horizon", self.horizon),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::new(
                    format!("solver.{name}"),
                    format!("must be a finite positive number, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// s.
    pub t: f64,
    pub v_c: f64,
    pub n_d: f64,
}

impl TrajectoryPoint {
    pub fn state(&self) -> CellState {
        CellState::new(self.v_c, self.n_d)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected_steps: usize,
    /// Smallest accepted step, s.
    pub min_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: CellState,
    pub points: Vec<TrajectoryPoint>,
    pub terminal: CellState,
    pub solver_stats: SolverStats,
}

impl Trajectory {
    fn start(init: CellState) -> Self {
        Self {
            initial: init,
            points: vec![TrajectoryPoint {
                t: 0.0,
                v_c: init.v_c,
                n_d: init.n_d,
            }],
            terminal: init,
            solver_stats: SolverStats {
                min_step: f64::INFINITY,
                ..SolverStats::default()
            },
        }
    }

    fn push(&mut self, t: f64, s: CellState) {
        self.points.push(TrajectoryPoint {
            t,
            v_c: s.v_c,
            n_d: s.n_d,
        });
        self.terminal = s;
    }

    fn finish(mut self) -> Self {
        if !self.solver_stats.min_step.is_finite() {
            self.solver_stats.min_step = 0.0;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    StepUnderflow,
    NonFinite,
    StepLimit,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StepUnderflow => "step size underflow",
            Self::NonFinite => "non-finite derivative",
            Self::StepLimit => "step limit exceeded",
        })
    }
}

/// Integration stopped early. `partial` holds everything accepted so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("{kind} at t={t:e} s (v_c={}, n_d={:e})", state.v_c, state.n_d)]
pub struct SimulationError {
    pub kind: FailureKind,
    pub t: f64,
    pub state: CellState,
    pub partial: Trajectory,
}

/// Maps between cell states and the integration coordinates.
struct Coords {
    log: bool,
    /// Initial `(y, n_d)` so an unchanged coordinate maps back exactly.
    anchor: (f64, f64),
    n_lo: f64,
    n_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Coords {
    fn new((n_lo, n_hi): (f64, f64), log: bool, init: CellState) -> Self {
        let (y_lo, y_hi) = if log {
            (n_lo.ln(), n_hi.ln())
        } else {
            (n_lo, n_hi)
        };
        let anchor = (if log { init.n_d.ln() } else { init.n_d }, init.n_d);
        Self {
            log,
            anchor,
            n_lo,
            n_hi,
            y_lo,
            y_hi,
        }
    }

    fn to_y(&self, s: CellState) -> [f64; 2] {
        [s.v_c, if self.log { s.n_d.ln() } else { s.n_d }]
    }

    fn clamp(&self, y: [f64; 2]) -> [f64; 2] {
        [y[0], y[1].clamp(self.y_lo, self.y_hi)]
    }

    fn to_state(&self, y: [f64; 2]) -> CellState {
        let n = if y[1] == self.anchor.0 {
            self.anchor.1
        } else if self.log {
            y[1].exp()
        } else {
            y[1]
        };
        CellState::new(y[0], n.clamp(self.n_lo, self.n_hi))
    }

    fn rhs<S: PlanarSystem + ?Sized>(
        &self,
        system: &S,
        y: [f64; 2],
    ) -> Result<[f64; 2], ModelError> {
        let s = self.to_state(self.clamp(y));
        let (dv, dn) = system.derivative(s)?;
        let dy = if self.log { dn / s.n_d } else { dn };
        if !dv.is_finite() || !dy.is_finite() {
            return Err(ModelError::NonFinite {
                v_c: s.v_c,
                n_d: s.n_d,
            });
        }
        Ok([dv, dy])
    }
}

fn check_initial<S: PlanarSystem + ?Sized>(system: &S, init: CellState) -> Result<(), Error> {
    let (lo, hi) = system.state_bounds();
    if !init.v_c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "initial v_c {} is not finite",
            init.v_c
        )));
    }
    if !(init.n_d >= lo && init.n_d <= hi) {
        return Err(ModelError::StateOutOfRange {
            n_d: init.n_d,
            min: lo,
            max: hi,
        }
        .into());
    }
    Ok(())
}

fn axpy(y: [f64; 2], h: f64, terms: &[(f64, &[f64; 2])]) -> [f64; 2] {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Tolerances {
    rel: f64,
    abs: [f64; 2],
}

impl Tolerances {
    fn new(cfg: &SolverConfig, coords: &Coords) -> Self {
        let abs_n = if coords.log {
            cfg.abs_tol_n
        } else {
            cfg.abs_tol_n * (coords.n_hi - coords.n_lo)
        };
        Self {
            rel: cfg.rel_tol,
            abs: [cfg.abs_tol_v, abs_n],
        }
    }

    fn scale(&self, a: &[f64; 2], b: &[f64; 2], i: usize) -> f64 {
        self.abs[i] + self.rel * a[i].abs().max(b[i].abs())
    }

    /// RMS of `e` relative to the mixed tolerance at `a`/`b`.
    fn norm(&self, e: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let s: f64 = (0..2).map(|i| (e[i] / self.scale(a, b, i)).powi(2)).sum();
        (s / 2.0).sqrt()
    }
}

fn initial_step<S: PlanarSystem + ?Sized>(
    system: &S,
    coords: &Coords,
    tol: &Tolerances,
    y0: [f64; 2],
    f0: [f64; 2],
    h_max: f64,
) -> Result<f64, ModelError> {
    let d0 = tol.norm(&y0, &y0, &y0);
    let d1 = tol.norm(&f0, &y0, &y0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(h_max);
    let y1 = coords.clamp(axpy(y0, h0, &[(1.0, &f0)]));
    let f1 = coords.rhs(system, y1)?;
    let df = [f1[0] - f0[0], f1[1] - f0[1]];
    let d2 = tol.norm(&df, &y0, &y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(h_max))
}

/// Adaptive Dormand–Prince integration of `system` from `init` over
/// `cfg.horizon`.
///
/// Output holds [`REPORT_POINTS`] evenly spaced dense-output samples merged
/// with every accepted step.
pub fn simulate<S: PlanarSystem + ?Sized>(
    system: &S,
    init: CellState,
    cfg: &SolverConfig,
) -> Result<Trajectory, Error> {
    cfg.validate()?;
    check_initial(system, init)?;
    let coords = Coords::new(system.state_bounds(), cfg.log_state, init);
    let tol = Tolerances::new(cfg, &coords);
    let horizon = cfg.horizon;
    let h_max = cfg.max_step.min(horizon);

    let mut traj = Trajectory::start(init);
    let fail = |kind, t: f64, y: [f64; 2], traj: Trajectory| -> Error {
        Error::Simulation(Box::new(SimulationError {
            kind,
            t,
            state: coords.to_state(coords.clamp(y)),
            partial: traj.finish(),
        }))
    };

    let mut y = coords.to_y(init);
    let mut k1 = match coords.rhs(system, y) {
        Ok(k) => k,
        Err(_) => return Err(fail(FailureKind::NonFinite, 0.0, y, traj)),
    };
    let mut h = match initial_step(system, &coords, &tol, y, k1, h_max) {
        Ok(h) => h,
        Err(_) => return Err(fail(FailureKind::NonFinite, 0.0, y, traj)),
    };

    let last_report = (REPORT_POINTS - 1) as f64;
    let report_time = |k: usize| horizon * k as f64 / last_report;
    let mut next_report = 1;
    let mut t = 0.0;
    let mut attempts = 0usize;
    let mut rejected_last = false;

    while t < horizon {
        attempts += 1;
        if attempts > MAX_STEPS {
            return Err(fail(FailureKind::StepLimit, t, y, traj));
        }
        h = h.min(h_max);
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        if h < MIN_STEP {
            return Err(fail(FailureKind::StepUnderflow, t, y, traj));
        }

        let stages = (|| -> Result<_, ModelError> {
            let k2 = coords.rhs(system, axpy(y, h, &[(A21, &k1)]))?;
            let k3 = coords.rhs(system, axpy(y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = coords.rhs(system, axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = coords.rhs(
                system,
                axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = coords.rhs(
                system,
                axpy(
                    y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y_new = axpy(
                y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = coords.rhs(system, y_new)?;
            Ok((k2, k3, k4, k5, k6, k7, y_new))
        })();
        // A stage that leaves the model's domain means the step was too long.
        let Ok((_k2, k3, k4, k5, k6, mut k7, y_raw)) = stages else {
            traj.solver_stats.rejected_steps += 1;
            rejected_last = true;
            h *= 0.2;
            continue;
        };

        let e = axpy(
            [0.0; 2],
            h,
            &[
                (E1, &k1),
                (E3, &k3),
                (E4, &k4),
                (E5, &k5),
                (E6, &k6),
                (E7, &k7),
            ],
        );
        let mut err = tol.norm(&e, &y, &y_raw);
        if !err.is_finite() {
            err = 1e10;
        }

        if err <= 1.0 {
            let t_new = if last { horizon } else { t + h };
            let y_new = coords.clamp(y_raw);
            if y_new != y_raw {
                k7 = match coords.rhs(system, y_new) {
                    Ok(k) => k,
                    Err(_) => return Err(fail(FailureKind::NonFinite, t_new, y_new, traj)),
                };
            }

            // Hairer's continuous extension.
            let mut rc = [[0.0; 2]; 5];
            for i in 0..2 {
                let dy = y_new[i] - y[i];
                let bspl = h * k1[i] - dy;
                rc[0][i] = y[i];
                rc[1][i] = dy;
                rc[2][i] = bspl;
                rc[3][i] = dy - h * k7[i] - bspl;
                rc[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next_report < REPORT_POINTS && report_time(next_report) <= t_new {
                let tr = report_time(next_report);
                next_report += 1;
                if tr <= t || tr >= t_new {
                    continue;
                }
                let th = (tr - t) / h;
                let th1 = 1.0 - th;
                let mut yi = [0.0; 2];
                for i in 0..2 {
                    yi[i] = rc[0][i]
                        + th * (rc[1][i] + th1 * (rc[2][i] + th * (rc[3][i] + th1 * rc[4][i])));
                }
                traj.push(tr, coords.to_state(coords.clamp(yi)));
            }
            traj.push(t_new, coords.to_state(y_new));
            traj.solver_stats.steps += 1;
            traj.solver_stats.min_step = traj.solver_stats.min_step.min(h);

            t = t_new;
            y = y_new;
            k1 = k7;
            let mut fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h *= fac;
        } else {
            traj.solver_stats.rejected_steps += 1;
            rejected_last = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(traj.finish())
}

/// Adaptive integration of the cell defined by `p`.
pub fn simulate_trajectory(
    p: &CellParams,
    init: CellState,
    cfg: &SolverConfig,
) -> Result<Trajectory, Error> {
    simulate(&CellSystem::new(p), init, cfg)
}

/// Independent trajectories for several initial conditions, in input order.
pub fn simulate_many<S: PlanarSystem + ?Sized>(
    system: &S,
    inits: &[CellState],
    cfg: &SolverConfig,
) -> Vec<Result<Trajectory, Error>> {
    inits
        .par_iter()
        .map(|&s| simulate(system, s, cfg))
        .collect()
}

/// Fixed-step classical RK4 with `n_steps` equal steps. Records about
/// [`REPORT_POINTS`] evenly spaced points including both ends.
pub fn reference_integrate_system<S: PlanarSystem + ?Sized>(
    system: &S,
    init: CellState,
    horizon: f64,
    n_steps: usize,
    log_state: bool,
) -> Result<Trajectory, Error> {
    if n_steps < MIN_REFERENCE_STEPS {
        return Err(Error::InvalidArgument(format!(
            "reference integration needs at least {MIN_REFERENCE_STEPS} steps, got {n_steps}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    check_initial(system, init)?;
    let coords = Coords::new(system.state_bounds(), log_state, init);
    let h = horizon / n_steps as f64;
    let stride = (n_steps / (REPORT_POINTS - 1)).max(1);

    let mut traj = Trajectory::start(init);
    let mut y = coords.to_y(init);
    for i in 1..=n_steps {
        let step = (|| -> Result<[f64; 2], ModelError> {
            let k1 = coords.rhs(system, y)?;
            let k2 = coords.rhs(system, axpy(y, h, &[(0.5, &k1)]))?;
            let k3 = coords.rhs(system, axpy(y, h, &[(0.5, &k2)]))?;
            let k4 = coords.rhs(system, axpy(y, h, &[(1.0, &k3)]))?;
            Ok(axpy(
                y,
                h,
                &[
                    (1.0 / 6.0, &k1),
                    (1.0 / 3.0, &k2),
                    (1.0 / 3.0, &k3),
                    (1.0 / 6.0, &k4),
                ],
            ))
        })();
        let t_prev = horizon * (i - 1) as f64 / n_steps as f64;
        y = match step {
            Ok(y_new) if y_new[0].is_finite() && y_new[1].is_finite() => coords.clamp(y_new),
            _ => {
                return Err(Error::Simulation(Box::new(SimulationError {
                    kind: FailureKind::NonFinite,
                    t: t_prev,
                    state: coords.to_state(y),
                    partial: traj.finish(),
                })))
            }
        };
        traj.solver_stats.steps += 1;
        if i % stride == 0 || i == n_steps {
            let t = if i == n_steps {
                horizon
            } else {
                horizon * i as f64 / n_steps as f64
            };
            traj.push(t, coords.to_state(y));
        }
    }
    traj.solver_stats.min_step = h;
    Ok(traj)
}

/// RK4 reference for the cell defined by `p`, stepping `n_d` directly.
///
/// Linear coordinates keep the fixed step stable near `n_d_min`, where
/// `ln n_d` moves fastest.
pub fn reference_integrate(
    p: &CellParams,
    init: CellState,
    horizon: f64,
    n_steps: usize,
) -> Result<Trajectory, Error> {
    reference_integrate_system(&CellSystem::new(p), init, horizon, n_steps, false)
}

/// Observed convergence order from three solutions at step sizes `h`,
/// `h/2` and `h/4`.
pub fn richardson_order(coarse: f64, medium: f64, fine: f64) -> f64 {
    ((coarse - medium).abs() / (medium - fine).abs()).log2()
}

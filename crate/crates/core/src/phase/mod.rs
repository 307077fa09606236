//! Phase-plane analysis: vector fields, nullclines, equilibria, dynamic
//! routes and sign regions.
//!
//! All searches run in *axis coordinates* `(v_c, w)` where `w` is `ln n_d`
//! on a logarithmic grid and `n_d` itself on a linear one. Derivatives are
//! compared after dividing by the per-axis scales of [`Normalization`], so a
//! single tolerance applies to both components.

mod equilibria;
mod field;
mod nullcline;
mod regions;
mod sdr;

pub use equilibria::{
    eigenvalues_2x2, find_equilibria, Classification, Eigenvalue, Equilibrium, EquilibriumKind,
};
pub use field::{
    color_index, magnitude, magnitude_and_color, normalize_vector, sample_vector_field,
    VectorField, VectorFieldSample,
};
pub use nullcline::{extract_nullclines, Nullcline, NullclineVariable};
pub use regions::{drm2_regions, RegionLabel, SignRegionMap};
pub use sdr::{extract_sdr, SdrCurve, Stability, ZeroCrossing};

use serde::{Deserialize, Serialize};

use crate::cell::{CellState, PlanarSystem};
use crate::error::{Error, ModelError};

/// Stop criterion for bisection and Newton refinement, in scaled units.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Iteration cap shared by bisection and Newton.
pub const MAX_ITERATIONS: usize = 80;
/// Finite-difference step for Jacobians, relative to the axis span.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Reference time used to scale derivatives into "spans per reference time".
pub const DEFAULT_T_REF: f64 = 1e-3;
/// Arrow ellipse radius as a fraction of the grid spacing.
pub const DEFAULT_RADIUS_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisScale {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "log")]
    Log,
}

/// A rectangular sampling grid on the phase plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub v_c_range: (f64, f64),
    pub n_d_range: (f64, f64),
    pub v_c_samples: usize,
    pub n_d_samples: usize,
    pub n_d_axis_scale: AxisScale,
}

fn lerp_node(a: f64, b: f64, i: usize, n: usize) -> f64 {
    let last = (n - 1) as f64;
    let i_f = i as f64;
    (a * (last - i_f) + b * i_f) / last
}

impl PhaseGrid {
    /// Default grid for a model with the given state bounds: `[-3 V, 3 V]`
    /// by the full state range, 21 × 21, logarithmic `N_d` axis.
    pub fn for_bounds(bounds: (f64, f64)) -> Self {
        Self {
            v_c_range: (-3.0, 3.0),
            n_d_range: bounds,
            v_c_samples: 21,
            n_d_samples: 21,
            n_d_axis_scale: AxisScale::Log,
        }
    }

    pub fn with_samples(mut self, v_c_samples: usize, n_d_samples: usize) -> Self {
        self.v_c_samples = v_c_samples;
        self.n_d_samples = n_d_samples;
        self
    }

    pub fn validate(&self, bounds: (f64, f64)) -> Result<(), Error> {
        let (v0, v1) = self.v_c_range;
        let (n0, n1) = self.n_d_range;
        if !(v0.is_finite() && v1.is_finite() && v0 < v1) {
            return Err(Error::InvalidArgument(
                "v_c range must be finite and ordered".into(),
            ));
        }
        if !(n0.is_finite() && n1.is_finite() && n0 < n1) {
            return Err(Error::InvalidArgument(
                "n_d range must be finite and ordered".into(),
            ));
        }
        if self.v_c_samples < 2 || self.n_d_samples < 2 {
            return Err(Error::InvalidArgument("at least 2 samples per axis".into()));
        }
        if n0 < bounds.0 || n1 > bounds.1 {
            return Err(ModelError::StateOutOfRange {
                n_d: if n0 < bounds.0 { n0 } else { n1 },
                min: bounds.0,
                max: bounds.1,
            }
            .into());
        }
        if self.n_d_axis_scale == AxisScale::Log && n0 <= 0.0 {
            return Err(Error::InvalidArgument("log axis needs positive n_d".into()));
        }
        Ok(())
    }

    pub fn is_log(&self) -> bool {
        self.n_d_axis_scale == AxisScale::Log
    }

    /// Maps `n_d` to the axis coordinate.
    pub fn to_axis(&self, n_d: f64) -> f64 {
        if self.is_log() {
            n_d.ln()
        } else {
            n_d
        }
    }

    /// Maps an axis coordinate back to `n_d`, clamped to the grid range.
    pub fn from_axis(&self, w: f64) -> f64 {
        let n = if self.is_log() { w.exp() } else { w };
        n.clamp(self.n_d_range.0, self.n_d_range.1)
    }

    pub fn axis_range(&self) -> (f64, f64) {
        (
            self.to_axis(self.n_d_range.0),
            self.to_axis(self.n_d_range.1),
        )
    }

    pub fn v_span(&self) -> f64 {
        self.v_c_range.1 - self.v_c_range.0
    }

    pub fn axis_span(&self) -> f64 {
        let (a, b) = self.axis_range();
        b - a
    }

    pub fn v_node(&self, i: usize) -> f64 {
        lerp_node(self.v_c_range.0, self.v_c_range.1, i, self.v_c_samples)
    }

    pub fn w_node(&self, j: usize) -> f64 {
        let (a, b) = self.axis_range();
        lerp_node(a, b, j, self.n_d_samples)
    }

    /// `n_d` at row `j`; the first and last rows hit the range ends exactly.
    pub fn n_node(&self, j: usize) -> f64 {
        if j == 0 {
            self.n_d_range.0
        } else if j + 1 == self.n_d_samples {
            self.n_d_range.1
        } else {
            self.from_axis(self.w_node(j))
        }
    }

    pub fn node(&self, i: usize, j: usize) -> CellState {
        CellState::new(self.v_node(i), self.n_node(j))
    }

    pub fn node_count(&self) -> usize {
        self.v_c_samples * self.n_d_samples
    }

    pub fn dv(&self) -> f64 {
        self.v_span() / (self.v_c_samples - 1) as f64
    }

    pub fn dw(&self) -> f64 {
        self.axis_span() / (self.n_d_samples - 1) as f64
    }
}

/// Per-axis derivative scales and arrow radii.
///
/// `s_v` and `s_n` are "axis span per reference time", so a scaled
/// derivative of 1 means crossing the whole plotted axis in `t_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub t_ref: f64,
    /// V/s.
    pub s_v: f64,
    /// Axis units per second (`1/s` on a log axis).
    pub s_n: f64,
    /// Arrow ellipse radii `(a, b)` in axis units (volts, axis coordinate).
    pub radii: (f64, f64),
}

impl Normalization {
    pub fn for_grid(grid: &PhaseGrid, t_ref: f64, radius_fraction: f64) -> Self {
        Self {
            t_ref,
            s_v: grid.v_span() / t_ref,
            s_n: grid.axis_span() / t_ref,
            radii: (radius_fraction * grid.dv(), radius_fraction * grid.dw()),
        }
    }

    pub fn scales(&self) -> (f64, f64) {
        (self.s_v, self.s_n)
    }
}

/// Raw derivatives converted to axis rates and divided by the scales.
#[derive(Clone, Copy)]
pub(crate) struct ScaledField<'a, S: PlanarSystem + ?Sized> {
    pub system: &'a S,
    pub grid: &'a PhaseGrid,
    pub norm: &'a Normalization,
}

impl<S: PlanarSystem + ?Sized> ScaledField<'_, S> {
    /// Axis-coordinate rates `(dv/dt, dw/dt)` at an arbitrary state.
    pub fn axis_rates_at(&self, s: CellState) -> Result<(f64, f64), ModelError> {
        let (dv, dn) = self.system.derivative(s)?;
        let dw = if self.grid.is_log() { dn / s.n_d } else { dn };
        Ok((dv, dw))
    }

    pub fn at_state(&self, s: CellState) -> Result<(f64, f64), ModelError> {
        let (dv, dw) = self.axis_rates_at(s)?;
        Ok((dv / self.norm.s_v, dw / self.norm.s_n))
    }

    pub fn at(&self, v: f64, w: f64) -> Result<(f64, f64), ModelError> {
        self.at_state(CellState::new(v, self.grid.from_axis(w)))
    }

    /// Unscaled axis-rate Jacobian by central differences, falling back to
    /// one-sided differences at the `w` bounds. Units: 1/s.
    pub fn jacobian(&self, v: f64, w: f64) -> Result<[[f64; 2]; 2], ModelError> {
        let hv = JACOBIAN_STEP * self.grid.v_span();
        let hw = JACOBIAN_STEP * self.grid.axis_span();
        let (w_lo, w_hi) = self.grid.axis_range();
        let f = |v: f64, w: f64| self.axis_rates_at(CellState::new(v, self.grid.from_axis(w)));

        let (fp, fm) = (f(v + hv, w)?, f(v - hv, w)?);
        let col_v = ((fp.0 - fm.0) / (2.0 * hv), (fp.1 - fm.1) / (2.0 * hv));

        let w_plus = (w + hw).min(w_hi);
        let w_minus = (w - hw).max(w_lo);
        let (gp, gm) = (f(v, w_plus)?, f(v, w_minus)?);
        let dw = w_plus - w_minus;
        let col_w = ((gp.0 - gm.0) / dw, (gp.1 - gm.1) / dw);

        Ok([[col_v.0, col_w.0], [col_v.1, col_w.1]])
    }
}

/// Scalar bisection on `[a, b]` where `f(a)` and `f(b)` differ in sign
/// (positive versus non-positive). Stops once `|f| <= tol`.
pub(crate) fn bisect<F>(
    f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> Result<f64, ModelError>
where
    F: Fn(f64) -> Result<f64, ModelError>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    for _ in 0..MAX_ITERATIONS {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 || fm.abs() <= tol {
            return Ok(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

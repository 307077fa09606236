//! M-CNN cell equations.
//!
//! The cell is an R-C pair with a self-feedback current source and a
//! memristor in parallel. Its state is the capacitor voltage `V_C` and the
//! memristor state `N_d`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::memristor::{MemristorModel, VcmParams};

/// Reference voltage for the bias term, V.
pub const V_REF: f64 = 1.0;

/// A 3×3 template of dimensionless weights, serialized row-major as 9 reals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 9]", into = "[f64; 9]")]
pub struct Template(pub [[f64; 3]; 3]);

impl Template {
    pub fn center(&self) -> f64 {
        self.0[1][1]
    }

    /// Template with only the center weight set.
    pub fn with_center(value: f64) -> Self {
        let mut t = Self::default();
        t.0[1][1] = value;
        t
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|w| w.is_finite())
    }
}

impl From<[f64; 9]> for Template {
    fn from(v: [f64; 9]) -> Self {
        Self([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }
}

impl From<Template> for [f64; 9] {
    fn from(t: Template) -> Self {
        let m = t.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    /// Cell resistor, Ω.
    pub r: f64,
    /// Cell capacitor, F.
    pub c: f64,
    pub a_template: Template,
    pub b_template: Template,
    pub z_bias: f64,
    pub memristor: VcmParams,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            r: 1_000.0,
            c: 1e-9,
            a_template: Template::with_center(2.0),
            b_template: Template::default(),
            z_bias: 0.0,
            memristor: VcmParams::default(),
        }
    }
}

/// A point of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub v_c: f64,
    pub n_d: f64,
}

impl CellState {
    pub fn new(v_c: f64, n_d: f64) -> Self {
        Self { v_c, n_d }
    }
}

/// Outputs and inputs of the eight neighbours (and the cell's own input).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborSignals {
    /// Neighbour outputs `V_Y`; the center entry is ignored.
    pub v_y: [[f64; 3]; 3],
    /// Inputs `V_U`, center included.
    pub v_u: [[f64; 3]; 3],
}

/// `½(|v+1| − |v−1|)`
pub fn output_nonlinearity(v_c: f64) -> f64 {
    0.5 * ((v_c + 1.0).abs() - (v_c - 1.0).abs())
}

/// Current injected by the neighbours and the bias.
pub fn extracell_current(p: &CellParams, nb: &NeighborSignals) -> f64 {
    let mut sum = 0.0;
    for k in 0..3 {
        for l in 0..3 {
            if (k, l) != (1, 1) {
                sum += p.a_template.0[k][l] * nb.v_y[k][l];
            }
            sum += p.b_template.0[k][l] * nb.v_u[k][l];
        }
    }
    (sum + p.z_bias * V_REF) / p.r
}

pub fn self_feedback_current(p: &CellParams, v_c: f64) -> f64 {
    p.a_template.center() * output_nonlinearity(v_c) / p.r
}

/// `dV_C/dt` for an arbitrary memristor model.
pub fn voltage_derivative_with<M: MemristorModel + ?Sized>(
    p: &CellParams,
    model: &M,
    s: CellState,
    i_ext: f64,
) -> Result<f64, ModelError> {
    let r_m = model.resistance(s.v_c, s.n_d)?;
    Ok((i_ext + self_feedback_current(p, s.v_c)) / p.c - s.v_c / (p.r * p.c) - s.v_c / (r_m * p.c))
}

/// `dV_C/dt` using the bundled memristor model in `p.memristor`.
pub fn voltage_derivative(p: &CellParams, s: CellState, i_ext: f64) -> Result<f64, ModelError> {
    voltage_derivative_with(p, &p.memristor, s, i_ext)
}

/// The `(dV_C/dt, dN_d/dt)` pair.
pub fn state_derivative(
    p: &CellParams,
    s: CellState,
    nb: &NeighborSignals,
) -> Result<(f64, f64), ModelError> {
    CellSystem::new(p).with_neighbors(*nb).derivative(s)
}

/// A two-dimensional autonomous system on the `(V_C, N_d)` plane.
///
/// Everything in [`crate::phase`] and [`crate::trajectory`] is written
/// against this trait.
pub trait PlanarSystem: Sync {
    fn derivative(&self, s: CellState) -> Result<(f64, f64), ModelError>;

    /// Inclusive bounds of `N_d`.
    fn state_bounds(&self) -> (f64, f64);
}

/// Cell equations bound to a memristor model and fixed neighbour signals.
#[derive(Debug, Clone, Copy)]
pub struct CellSystem<'a, M: MemristorModel + ?Sized = VcmParams> {
    pub params: &'a CellParams,
    pub model: &'a M,
    pub neighbors: NeighborSignals,
}

impl<'a> CellSystem<'a, VcmParams> {
    /// Isolated cell using the bundled model.
    pub fn new(params: &'a CellParams) -> Self {
        Self {
            params,
            model: &params.memristor,
            neighbors: NeighborSignals::default(),
        }
    }
}

impl<'a, M: MemristorModel + ?Sized> CellSystem<'a, M> {
    pub fn with_model(params: &'a CellParams, model: &'a M) -> Self {
        Self {
            params,
            model,
            neighbors: NeighborSignals::default(),
        }
    }

    pub fn with_neighbors(mut self, neighbors: NeighborSignals) -> Self {
        self.neighbors = neighbors;
        self
    }
}

impl<M: MemristorModel + ?Sized> PlanarSystem for CellSystem<'_, M> {
    fn derivative(&self, s: CellState) -> Result<(f64, f64), ModelError> {
        let i_ext = extracell_current(self.params, &self.neighbors);
        let dv = voltage_derivative_with(self.params, self.model, s, i_ext)?;
        let dn = self.model.state_derivative(s.v_c, s.n_d)?;
        if !dv.is_finite() || !dn.is_finite() {
            return Err(ModelError::NonFinite {
                v_c: s.v_c,
                n_d: s.n_d,
            });
        }
        Ok((dv, dn))
    }

    fn state_bounds(&self) -> (f64, f64) {
        self.model.state_bounds()
    }
}

/// Outer (saturated) equilibrium voltage of the frozen-memristor cell,
/// `A₀₀·R_M/(r + R_M)`, or `None` when it falls inside the linear region.
pub fn saturated_equilibrium(p: &CellParams, r_m: f64) -> Option<f64> {
    let v = p.a_template.center() * r_m / (p.r + r_m);
    (v > 1.0).then_some(v)
}

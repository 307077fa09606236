use serde::{Deserialize, Serialize};

use super::{bisect, DEFAULT_T_REF, JACOBIAN_STEP};
use crate::cell::{CellState, PlanarSystem};
use crate::error::{Error, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    NonHyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossing {
    pub v_c: f64,
    pub stability: Stability,
}

/// `V̇_C` versus `V_C` with the memristor frozen at `n_d_fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrCurve {
    pub n_d_fixed: f64,
    /// `(v_c, dv_dt)` pairs.
    pub samples: Vec<(f64, f64)>,
    pub zero_crossings: Vec<ZeroCrossing>,
}

/// Samples the state dynamic route at a frozen memristor state and
/// locates its zeros. `tol` is in units of `v_c span / 1 ms`.
pub fn extract_sdr<S: PlanarSystem + ?Sized>(
    system: &S,
    n_d_fixed: f64,
    v_c_range: (f64, f64),
    samples: usize,
    tol: f64,
) -> Result<SdrCurve, Error> {
    let (lo, hi) = system.state_bounds();
    if !(n_d_fixed >= lo && n_d_fixed <= hi) {
        return Err(ModelError::StateOutOfRange {
            n_d: n_d_fixed,
            min: lo,
            max: hi,
        }
        .into());
    }
    if samples < 2 || !(v_c_range.0 < v_c_range.1) {
        return Err(Error::InvalidArgument(
            "SDR needs an ordered range and at least 2 samples".into(),
        ));
    }
    let span = v_c_range.1 - v_c_range.0;
    let raw_tol = tol * span / DEFAULT_T_REF;
    let f = |v: f64| system.derivative(CellState::new(v, n_d_fixed)).map(|d| d.0);

    let last = (samples - 1) as f64;
    let pts: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let i = i as f64;
            let v = (v_c_range.0 * (last - i) + v_c_range.1 * i) / last;
            f(v).map(|d| (v, d))
        })
        .collect::<Result<_, _>>()?;

    let mut roots: Vec<f64> = Vec::new();
    for (k, &(v, d)) in pts.iter().enumerate() {
        if d == 0.0 {
            roots.push(v);
            continue;
        }
        if let Some(&(v2, d2)) = pts.get(k + 1) {
            if d2 != 0.0 && (d > 0.0) != (d2 > 0.0) {
                roots.push(bisect(f, v, v2, d, d2, raw_tol)?);
            }
        }
    }

    let h = JACOBIAN_STEP * span;
    let zero_crossings = roots
        .into_iter()
        .map(|v| {
            let slope = (f(v + h)? - f(v - h)?) / (2.0 * h);
            let stability = if slope < 0.0 {
                Stability::Stable
            } else if slope > 0.0 {
                Stability::Unstable
            } else {
                Stability::NonHyperbolic
            };
            Ok(ZeroCrossing { v_c: v, stability })
        })
        .collect::<Result<_, ModelError>>()?;

    Ok(SdrCurve {
        n_d_fixed,
        samples: pts,
        zero_crossings,
    })
}

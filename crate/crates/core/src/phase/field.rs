use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Normalization, PhaseGrid};
use crate::cell::{CellState, PlanarSystem};
use crate::error::Error;

/// One arrow of the vector field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSample {
    pub point: CellState,
    /// V/s.
    pub dv_dt: f64,
    /// m⁻³/s.
    pub dn_dt: f64,
    /// Arrow angle in `(-π, π]`; `None` for a zero vector.
    pub theta: Option<f64>,
    pub norm_scaled: f64,
    pub color_index: f64,
}

impl VectorFieldSample {
    pub fn is_zero(&self) -> bool {
        self.theta.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub normalization: Normalization,
    /// Smallest and largest non-zero scaled norm, if any.
    pub norm_range: Option<(f64, f64)>,
    /// Row-major, `v_c` varying fastest.
    pub samples: Vec<VectorFieldSample>,
}

/// Arrow angle and its endpoint on the `(a, b)` ellipse.
///
/// `dn` is the rate of the plotted `N_d` axis coordinate (`Ṅ_d/N_d` on a
/// logarithmic axis). Returns `None` when both components are exactly zero.
pub fn normalize_vector(
    dv: f64,
    dn: f64,
    scales: (f64, f64),
    radii: (f64, f64),
) -> Option<(f64, (f64, f64))> {
    if dv == 0.0 && dn == 0.0 {
        return None;
    }
    let mut theta = (dn / scales.1).atan2(dv / scales.0);
    if theta <= -PI {
        theta = PI;
    }
    Some((theta, (radii.0 * theta.cos(), radii.1 * theta.sin())))
}

/// Euclidean norm of the scaled vector.
pub fn magnitude(dv: f64, dn: f64, scales: (f64, f64)) -> f64 {
    (dv / scales.0).hypot(dn / scales.1)
}

/// Position of `norm` on a logarithmic ramp between `m_min` and `m_max`,
/// clipped to `[0, 1]`. Zero norms map to 0; a degenerate ramp maps to 0.5.
pub fn color_index(norm: f64, m_min: f64, m_max: f64) -> f64 {
    if norm <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = (m_min.log10(), m_max.log10());
    if !(hi > lo) {
        return 0.5;
    }
    ((norm.log10() - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Norm and color index for every vector of a field, with the ramp spanning
/// the non-zero extremes of that field.
pub fn magnitude_and_color(
    vectors: &[(f64, f64)],
    scales: (f64, f64),
) -> (Vec<(f64, f64)>, Option<(f64, f64)>) {
    let norms: Vec<f64> = vectors
        .iter()
        .map(|&(dv, dn)| magnitude(dv, dn, scales))
        .collect();
    let range = norm_range(&norms);
    let out = norms
        .iter()
        .map(|&m| {
            let c = range.map_or(0.0, |(lo, hi)| color_index(m, lo, hi));
            (m, c)
        })
        .collect();
    (out, range)
}

fn norm_range(norms: &[f64]) -> Option<(f64, f64)> {
    norms
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .fold(None, |acc, m| match acc {
            None => Some((m, m)),
            Some((lo, hi)) => Some((lo.min(m), hi.max(m))),
        })
}

/// Evaluates the system on every grid node and fills in angles, norms and
/// colors.
pub fn sample_vector_field<S: PlanarSystem + ?Sized>(
    system: &S,
    grid: &PhaseGrid,
    norm: &Normalization,
) -> Result<VectorField, Error> {
    grid.validate(system.state_bounds())?;
    let nx = grid.v_c_samples;
    let raw: Vec<(CellState, f64, f64, f64)> = (0..grid.node_count())
        .into_par_iter()
        .map(|k| {
            let s = grid.node(k % nx, k / nx);
            let (dv, dn) = system.derivative(s)?;
            let dw = if grid.is_log() { dn / s.n_d } else { dn };
            Ok((s, dv, dn, dw))
        })
        .collect::<Result<_, Error>>()?;

    let scales = norm.scales();
    let vectors: Vec<(f64, f64)> = raw.iter().map(|&(_, dv, _, dw)| (dv, dw)).collect();
    let (mags, norm_range) = magnitude_and_color(&vectors, scales);
    let samples = raw
        .iter()
        .zip(mags)
        .map(
            |(&(point, dv_dt, dn_dt, dw), (norm_scaled, color_index))| VectorFieldSample {
                point,
                dv_dt,
                dn_dt,
                theta: normalize_vector(dv_dt, dw, scales, norm.radii).map(|(t, _)| t),
                norm_scaled,
                color_index,
            },
        )
        .collect();
    Ok(VectorField {
        normalization: *norm,
        norm_range,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellParams, CellSystem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn angle_examples() {
        let (t, e) = normalize_vector(5.0, 0.0, (1.0, 1.0), (2.0, 3.0)).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(e, (2.0, 0.0));
        let (t, e) = normalize_vector(0.0, 7.0, (1.0, 1.0), (2.0, 3.0)).unwrap();
        assert_eq!(t, PI / 2.0);
        assert_relative_eq!(e.0, 0.0, epsilon = 1e-15);
        assert_eq!(e.1, 3.0);
        let (t, _) = normalize_vector(-2.0, -4.0, (2.0, 4.0), (1.0, 1.0)).unwrap();
        assert_relative_eq!(t, -3.0 * PI / 4.0);
        assert_eq!(normalize_vector(0.0, 0.0, (1.0, 1.0), (1.0, 1.0)), None);
    }

    #[test]
    fn negative_x_axis_maps_to_pi() {
        let (t, _) = normalize_vector(-1.0, -0.0, (1.0, 1.0), (1.0, 1.0)).unwrap();
        assert_eq!(t, PI);
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(0.0, 0.0, (1.0, 1.0)), 0.0);
        assert_eq!(magnitude(6.0, 8.0, (2.0, 2.0)), 5.0);
    }

    #[test]
    fn log_color_ramp() {
        let (out, range) = magnitude_and_color(
            &[(1e-2, 0.0), (1.0, 0.0), (1e2, 0.0), (0.0, 0.0)],
            (1.0, 1.0),
        );
        assert_eq!(range, Some((1e-2, 1e2)));
        let colors: Vec<f64> = out.iter().map(|x| x.1).collect();
        assert_relative_eq!(colors[0], 0.0);
        assert_relative_eq!(colors[1], 0.5);
        assert_relative_eq!(colors[2], 1.0);
        assert_eq!(colors[3], 0.0);
    }

    #[test]
    fn field_is_row_major() {
        let p = CellParams::default();
        let sys = CellSystem::new(&p);
        let g = PhaseGrid::for_bounds(sys.state_bounds()).with_samples(2, 2);
        let n = Normalization::for_grid(&g, 1e-3, 0.4);
        let f = sample_vector_field(&sys, &g, &n).unwrap();
        assert_eq!(f.samples.len(), 4);
        assert_eq!(f.samples[1].point.v_c, 3.0);
        assert_eq!(f.samples[1].point.n_d, g.n_d_range.0);
        assert_eq!(f.samples[2].point.v_c, -3.0);
        assert_eq!(f.samples[2].point.n_d, g.n_d_range.1);
    }

    #[test]
    fn zero_column_and_saturated_decay() {
        let p = CellParams::default();
        let sys = CellSystem::new(&p);
        let g = PhaseGrid::for_bounds(sys.state_bounds());
        let n = Normalization::for_grid(&g, 1e-3, 0.4);
        let f = sample_vector_field(&sys, &g, &n).unwrap();
        for s in &f.samples {
            if s.point.v_c == 0.0 {
                assert!(s.is_zero());
                assert_eq!((s.dv_dt, s.dn_dt), (0.0, 0.0));
                assert_eq!(s.color_index, 0.0);
            }
            if s.point.v_c > 40.0 / 21.0 {
                assert!(s.dv_dt < 0.0);
            }
        }
        assert_eq!(f.samples.iter().filter(|s| s.is_zero()).count(), 21);
    }

    #[test]
    fn grid_outside_model_is_rejected() {
        let p = CellParams::default();
        let sys = CellSystem::new(&p);
        let mut g = PhaseGrid::for_bounds(sys.state_bounds());
        g.n_d_range.1 *= 2.0;
        let n = Normalization::for_grid(&g, 1e-3, 0.4);
        assert!(sample_vector_field(&sys, &g, &n).is_err());
    }

    proptest! {
        #[test]
        fn angle_invariant_under_positive_rescaling(dv in -1e3f64..1e3, dn in -1e3f64..1e3, k in prop::sample::select(vec![1e-6, 1.0, 1e6])) {
            prop_assume!(dv != 0.0 || dn != 0.0);
            let a = normalize_vector(dv, dn, (3.0, 7.0), (1.0, 1.0)).unwrap().0;
            let b = normalize_vector(k * dv, k * dn, (3.0, 7.0), (1.0, 1.0)).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-15);
        }

        #[test]
        fn endpoint_on_ellipse(dv in -1e3f64..1e3, dn in -1e3f64..1e3, a in 0.1f64..10.0, b in 0.1f64..10.0) {
            prop_assume!(dv != 0.0 || dn != 0.0);
            let (theta, (x, y)) = normalize_vector(dv, dn, (1.0, 1.0), (a, b)).unwrap();
            prop_assert!(theta > -PI && theta <= PI);
            prop_assert!(((x / a).powi(2) + (y / b).powi(2) - 1.0).abs() <= 1e-12);
        }
    }
}

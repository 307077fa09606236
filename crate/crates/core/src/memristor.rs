//! Memristor resistance and ionic-kinetics models.
//!
//! The cell equations only need two quantities from the device: its
//! resistance at the current operating point and the rate of change of the
//! disc vacancy concentration `N_d`. [`MemristorModel`] captures exactly
//! that, and [`VcmParams`] doubles as the bundled phenomenological VCM
//! model.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Elementary charge in coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Evaluator for a memristor attached across the cell capacitor.
///
/// Implementations must keep the resistance finite and positive over the
/// whole state range and must return zero ionic current at zero bias.
pub trait MemristorModel: Send + Sync {
    fn name(&self) -> &str;

    /// Inclusive `(n_d_min, n_d_max)` range of the state variable.
    fn state_bounds(&self) -> (f64, f64);

    fn resistance(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError>;

    fn ionic_current(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError>;

    /// Time derivative of `N_d` in m⁻³/s.
    fn state_derivative(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError>;
}

/// Parameters of the bundled VCM model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VcmParams {
    /// Lower bound of `N_d`, m⁻³.
    pub n_d_min: f64,
    /// Upper bound of `N_d`, m⁻³.
    pub n_d_max: f64,
    /// Resistance at `n_d_max`, Ω.
    pub r_m_min: f64,
    /// Resistance at `n_d_min`, Ω.
    pub r_m_max: f64,
    /// Current scale of the ionic kinetics, A.
    pub i_s: f64,
    /// Voltage scale of the ionic kinetics, V.
    pub v_0: f64,
    pub window_exponent: f64,
    /// +1 if positive voltage increases `N_d`, -1 otherwise.
    pub polarity: f64,
    /// Filament radius, m.
    pub r_d: f64,
    /// Disc length, m.
    pub l_d: f64,
    /// Oxygen-vacancy charge number.
    pub z_vo: f64,
    pub e_charge: f64,
}

impl Default for VcmParams {
    fn default() -> Self {
        Self {
            n_d_min: 0.1e26,
            n_d_max: 20e26,
            r_m_min: 2_000.0,
            r_m_max: 20_000.0,
            i_s: 1e-12,
            v_0: 0.25,
            window_exponent: 2.0,
            polarity: -1.0,
            r_d: 45e-9,
            l_d: 0.4e-9,
            z_vo: 2.0,
            e_charge: ELEMENTARY_CHARGE,
        }
    }
}

impl VcmParams {
    /// Checks the parameter invariants, reporting the first offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let finite = [
            ("n_d_min", self.n_d_min),
            ("n_d_max", self.n_d_max),
            ("r_m_min", self.r_m_min),
            ("r_m_max", self.r_m_max),
            ("i_s", self.i_s),
            ("v_0", self.v_0),
            ("window_exponent", self.window_exponent),
            ("polarity", self.polarity),
            ("r_d", self.r_d),
            ("l_d", self.l_d),
            ("z_vo", self.z_vo),
            ("e_charge", self.e_charge),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err((name, "must be finite".into()));
            }
        }
        if self.n_d_min <= 0.0 {
            return Err(("n_d_min", "must be positive".into()));
        }
        if self.n_d_max <= self.n_d_min {
            return Err(("n_d_max", "must exceed n_d_min".into()));
        }
        if self.r_m_min <= 0.0 {
            return Err(("r_m_min", "must be positive".into()));
        }
        if self.r_m_max <= self.r_m_min {
            return Err(("r_m_max", "must exceed r_m_min".into()));
        }
        if self.i_s < 0.0 {
            return Err(("i_s", "must be non-negative".into()));
        }
        if self.v_0 <= 0.0 {
            return Err(("v_0", "must be positive".into()));
        }
        if self.window_exponent < 1.0 {
            return Err(("window_exponent", "must be at least 1".into()));
        }
        if self.polarity != 1.0 && self.polarity != -1.0 {
            return Err(("polarity", "must be +1 or -1".into()));
        }
        if self.r_d <= 0.0 {
            return Err(("r_d", "must be positive".into()));
        }
        if self.l_d <= 0.0 {
            return Err(("l_d", "must be positive".into()));
        }
        if self.z_vo < 1.0 {
            return Err(("z_vo", "must be at least 1".into()));
        }
        if self.e_charge != ELEMENTARY_CHARGE {
            return Err(("e_charge", format!("is fixed at {ELEMENTARY_CHARGE:e} C")));
        }
        Ok(())
    }

    /// Log-space state coordinate `u ∈ [0, 1]`.
    pub fn state_coordinate(&self, n_d: f64) -> Result<f64, ModelError> {
        if !(n_d >= self.n_d_min && n_d <= self.n_d_max) {
            return Err(ModelError::StateOutOfRange {
                n_d,
                min: self.n_d_min,
                max: self.n_d_max,
            });
        }
        let u = (n_d / self.n_d_min).ln() / (self.n_d_max / self.n_d_min).ln();
        Ok(u.clamp(0.0, 1.0))
    }

    /// Inverse of [`state_coordinate`](Self::state_coordinate).
    pub fn state_from_coordinate(&self, u: f64) -> f64 {
        let n = self.n_d_min * (self.n_d_max / self.n_d_min).powf(u);
        n.clamp(self.n_d_min, self.n_d_max)
    }

    /// `z_vo · e · π r_d² · l_d`, in m³·C.
    pub fn charge_volume(&self) -> f64 {
        self.z_vo * self.e_charge * std::f64::consts::PI * self.r_d * self.r_d * self.l_d
    }

    fn window(&self, u: f64, drive_increases: bool) -> f64 {
        if drive_increases {
            (1.0 - u).powf(self.window_exponent)
        } else {
            u.powf(self.window_exponent)
        }
    }
}

/// Resistance of the bundled model: conductance interpolated linearly in
/// the log-space state coordinate.
pub fn static_resistance(_v_c: f64, n_d: f64, p: &VcmParams) -> Result<f64, ModelError> {
    let u = p.state_coordinate(n_d)?;
    let g_min = 1.0 / p.r_m_max;
    let g_max = 1.0 / p.r_m_min;
    Ok(1.0 / (g_min + (g_max - g_min) * u))
}

/// Ionic current of the bundled model, `-polarity · i_s · sinh(v/v_0) · W(u)`.
pub fn ionic_current(v_c: f64, n_d: f64, p: &VcmParams) -> Result<f64, ModelError> {
    let u = p.state_coordinate(n_d)?;
    if v_c == 0.0 {
        return Ok(0.0);
    }
    let drive_increases = p.polarity * v_c > 0.0;
    Ok(-p.polarity * p.i_s * (v_c / p.v_0).sinh() * p.window(u, drive_increases))
}

/// `dN_d/dt = -I_ion / (z_vo · e · A · l_d)` with `A = π r_d²`.
pub fn state_derivative(v_c: f64, n_d: f64, p: &VcmParams) -> Result<f64, ModelError> {
    let i_ion = ionic_current(v_c, n_d, p)?;
    Ok(-i_ion / p.charge_volume())
}

impl MemristorModel for VcmParams {
    fn name(&self) -> &str {
        "vcm-phenomenological"
    }

    fn state_bounds(&self) -> (f64, f64) {
        (self.n_d_min, self.n_d_max)
    }

    fn resistance(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError> {
        static_resistance(v_c, n_d, self)
    }

    fn ionic_current(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError> {
        ionic_current(v_c, n_d, self)
    }

    fn state_derivative(&self, v_c: f64, n_d: f64) -> Result<f64, ModelError> {
        state_derivative(v_c, n_d, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn polarity_plus() -> VcmParams {
        VcmParams {
            polarity: 1.0,
            i_s: 1e-6,
            ..VcmParams::default()
        }
    }

    #[test]
    fn resistance_hits_bounds() {
        let p = VcmParams::default();
        for v in [-2.0, 0.0, 0.7] {
            assert_eq!(static_resistance(v, p.n_d_min, &p).unwrap(), p.r_m_max);
            assert_relative_eq!(
                static_resistance(v, p.n_d_max, &p).unwrap(),
                p.r_m_min,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn resistance_at_geometric_mean() {
        let p = VcmParams::default();
        let n = (p.n_d_min * p.n_d_max).sqrt();
        let expected = 2.0 * 2000.0 * 20000.0 / (2000.0 + 20000.0);
        assert_relative_eq!(
            static_resistance(0.3, n, &p).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_relative_eq!(expected, 3636.3636, epsilon = 1e-3);
    }

    #[test]
    fn out_of_range_state_is_rejected() {
        let p = VcmParams::default();
        assert!(matches!(
            static_resistance(0.0, p.n_d_max * 1.01, &p),
            Err(ModelError::StateOutOfRange { .. })
        ));
        assert!(ionic_current(1.0, p.n_d_min * 0.5, &p).is_err());
        assert!(state_derivative(1.0, f64::NAN, &p).is_err());
    }

    #[test]
    fn zero_bias_freezes_state() {
        let p = VcmParams::default();
        for n in [p.n_d_min, 1e26, p.n_d_max] {
            assert_eq!(ionic_current(0.0, n, &p).unwrap(), 0.0);
            assert_eq!(state_derivative(0.0, n, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn window_vanishes_at_approached_boundary() {
        let p = polarity_plus();
        assert_eq!(ionic_current(1.0, p.n_d_max, &p).unwrap(), 0.0);
        assert_eq!(state_derivative(0.4, p.n_d_max, &p).unwrap(), 0.0);
        assert_eq!(state_derivative(-0.4, p.n_d_min, &p).unwrap(), 0.0);
        // Leaving the boundary is allowed.
        assert!(state_derivative(-0.4, p.n_d_max, &p).unwrap() < 0.0);
    }

    #[test]
    fn ionic_current_hand_value() {
        let p = VcmParams {
            polarity: 1.0,
            i_s: 1e-6,
            v_0: 0.25,
            window_exponent: 2.0,
            ..VcmParams::default()
        };
        let n = p.state_from_coordinate(0.5);
        let i = ionic_current(1.0, n, &p).unwrap();
        // -1 µA · sinh(4) · (1 - 0.5)²
        assert_relative_eq!(
            i,
            -1e-6 * 27.289_917_197_127_753 * 0.25,
            max_relative = 1e-12
        );
        assert_relative_eq!(i, -6.8225e-6, max_relative = 1e-4);
    }

    #[test]
    fn state_derivative_hand_value() {
        let p = polarity_plus();
        let volume = 2.0 * ELEMENTARY_CHARGE * std::f64::consts::PI * 45e-9 * 45e-9 * 0.4e-9;
        assert_relative_eq!(p.charge_volume(), volume, max_relative = 1e-14);
        assert_relative_eq!(volume, 8.1533e-43, max_relative = 1e-4);
        let n = p.state_from_coordinate(0.5);
        let rate = state_derivative(1.0, n, &p).unwrap();
        assert_relative_eq!(rate, 6.8225e-6 / 8.1533e-43, max_relative = 1e-4);
        assert_relative_eq!(rate, 8.368e36, max_relative = 1e-3);
    }

    #[test]
    fn bundled_model_through_trait() {
        let p = VcmParams::default();
        let m: &dyn MemristorModel = &p;
        assert_eq!(m.state_bounds(), (p.n_d_min, p.n_d_max));
        assert_eq!(m.resistance(0.0, p.n_d_min).unwrap(), p.r_m_max);
        assert_eq!(m.state_derivative(0.0, 1e26).unwrap(), 0.0);
    }

    #[test]
    fn default_params_validate() {
        assert!(VcmParams::default().validate().is_ok());
        let bad = VcmParams {
            polarity: 0.5,
            ..VcmParams::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "polarity");
        let bad = VcmParams {
            r_m_max: 1000.0,
            ..VcmParams::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "r_m_max");
    }

    fn interior_u() -> impl Strategy<Value = f64> {
        0.01f64..0.99
    }

    proptest! {
        #[test]
        fn rate_sign_follows_polarity(u in interior_u(), v in -3.0f64..3.0, pol in prop::bool::ANY) {
            prop_assume!(v.abs() > 1e-6);
            let p = VcmParams { polarity: if pol { 1.0 } else { -1.0 }, ..VcmParams::default() };
            let rate = state_derivative(v, p.state_from_coordinate(u), &p).unwrap();
            prop_assert_eq!(rate.signum(), p.polarity * v.signum());
        }

        #[test]
        fn resistance_strictly_decreasing(u1 in 0.0f64..1.0, du in 1e-6f64..0.5) {
            let p = VcmParams::default();
            let u2 = (u1 + du).min(1.0);
            prop_assume!(u2 > u1);
            let r1 = static_resistance(0.0, p.state_from_coordinate(u1), &p).unwrap();
            let r2 = static_resistance(0.0, p.state_from_coordinate(u2), &p).unwrap();
            prop_assert!(r2 < r1);
            prop_assert!(r1 <= p.r_m_max && r2 >= p.r_m_min * (1.0 - 1e-12));
        }

        #[test]
        fn rate_vanishes_approaching_boundary(v in 0.05f64..3.0) {
            let p = VcmParams::default();
            // polarity -1: positive voltage pushes towards n_d_min
            let near = state_derivative(v, p.state_from_coordinate(1e-4), &p).unwrap().abs();
            let far = state_derivative(v, p.state_from_coordinate(1e-2), &p).unwrap().abs();
            prop_assert!(near < far);
            prop_assert_eq!(state_derivative(v, p.n_d_min, &p).unwrap(), 0.0);
        }
    }
}

use serde::{Deserialize, Serialize};

use super::VectorField;

/// Sign pair `(sign V̇_C, sign Ṅ_d)` at a grid node, or membership of a
/// nullcline when either derivative is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    #[serde(rename = "++")]
    PosPos,
    #[serde(rename = "+-")]
    PosNeg,
    #[serde(rename = "-+")]
    NegPos,
    #[serde(rename = "--")]
    NegNeg,
    /// `V̇_C = 0` only.
    #[serde(rename = "0v")]
    VoltageNullcline,
    /// `Ṅ_d = 0` only.
    #[serde(rename = "0n")]
    StateNullcline,
    #[serde(rename = "00")]
    BothNullclines,
}

impl RegionLabel {
    pub fn from_signs(dv: f64, dn: f64) -> Self {
        match (dv == 0.0, dn == 0.0) {
            (true, true) => Self::BothNullclines,
            (true, false) => Self::VoltageNullcline,
            (false, true) => Self::StateNullcline,
            _ => match (dv > 0.0, dn > 0.0) {
                (true, true) => Self::PosPos,
                (true, false) => Self::PosNeg,
                (false, true) => Self::NegPos,
                (false, false) => Self::NegNeg,
            },
        }
    }

    pub fn is_region(self) -> bool {
        matches!(
            self,
            Self::PosPos | Self::PosNeg | Self::NegPos | Self::NegNeg
        )
    }
}

/// DRM2 map: one label per grid node, row-major like the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRegionMap {
    pub v_c_samples: usize,
    pub n_d_samples: usize,
    pub labels: Vec<RegionLabel>,
}

impl SignRegionMap {
    pub fn label(&self, i: usize, j: usize) -> RegionLabel {
        self.labels[j * self.v_c_samples + i]
    }

    /// Distinct sign-pair regions present, in a fixed order.
    pub fn regions_present(&self) -> Vec<RegionLabel> {
        [
            RegionLabel::PosPos,
            RegionLabel::PosNeg,
            RegionLabel::NegPos,
            RegionLabel::NegNeg,
        ]
        .into_iter()
        .filter(|l| self.labels.contains(l))
        .collect()
    }

    /// Pairs of horizontally or vertically adjacent nodes whose labels differ.
    pub fn label_changes(&self) -> Vec<((usize, usize), (usize, usize))> {
        let (nx, ny) = (self.v_c_samples, self.n_d_samples);
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx && self.label(i, j) != self.label(i + 1, j) {
                    out.push(((i, j), (i + 1, j)));
                }
                if j + 1 < ny && self.label(i, j) != self.label(i, j + 1) {
                    out.push(((i, j), (i, j + 1)));
                }
            }
        }
        out
    }
}

/// Labels every field sample by the signs of its raw derivatives.
pub fn drm2_regions(field: &VectorField, v_c_samples: usize, n_d_samples: usize) -> SignRegionMap {
    SignRegionMap {
        v_c_samples,
        n_d_samples,
        labels: field
            .samples
            .iter()
            .map(|s| RegionLabel::from_signs(s.dv_dt, s.dn_dt))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellParams, CellSystem, PlanarSystem};
    use crate::phase::{sample_vector_field, Normalization, PhaseGrid};

    #[test]
    fn labels_from_signs() {
        assert_eq!(RegionLabel::from_signs(1.0, 2.0), RegionLabel::PosPos);
        assert_eq!(RegionLabel::from_signs(-1.0, 2.0), RegionLabel::NegPos);
        assert_eq!(
            RegionLabel::from_signs(0.0, 0.0),
            RegionLabel::BothNullclines
        );
        assert_eq!(
            RegionLabel::from_signs(0.0, -3.0),
            RegionLabel::VoltageNullcline
        );
        assert_eq!(
            serde_json::to_string(&RegionLabel::PosNeg).unwrap(),
            "\"+-\""
        );
    }

    #[test]
    fn bistable_default_has_four_regions() {
        let p = CellParams::default();
        let sys = CellSystem::new(&p);
        let g = PhaseGrid::for_bounds(sys.state_bounds());
        let n = Normalization::for_grid(&g, 1e-3, 0.4);
        let f = sample_vector_field(&sys, &g, &n).unwrap();
        let map = drm2_regions(&f, g.v_c_samples, g.n_d_samples);
        assert_eq!(map.regions_present().len(), 4);
        for j in 0..g.n_d_samples {
            assert_eq!(map.label(10, j), RegionLabel::BothNullclines);
        }
    }
}

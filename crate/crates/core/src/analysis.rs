//! Runs the analyses described by an [`AnalysisRequest`].

use crate::cell::{CellParams, CellSystem, PlanarSystem};
use crate::config::AnalysisRequest;
use crate::error::Error;
use crate::export::{NormalizationRecord, PortraitDocument, TrajectoryRecord};
use crate::phase::{
    drm2_regions, extract_nullclines, extract_sdr, find_equilibria, sample_vector_field,
    Equilibrium, Normalization, Nullcline, PhaseGrid, SdrCurve, SignRegionMap, VectorField,
};
use crate::trajectory::{simulate_many, Trajectory};

/// A validated request with its derived objects.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub request: AnalysisRequest,
    pub params: CellParams,
    pub grid: PhaseGrid,
    pub normalization: Normalization,
    pub config_hash: String,
}

/// Where to freeze the memristor for an SDR slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrozenState {
    Min,
    Max,
    Value(f64),
}

impl std::str::FromStr for FrozenState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            _ => s
                .parse()
                .map(Self::Value)
                .map_err(|_| format!("expected `min`, `max` or a number, got {s:?}")),
        }
    }
}

impl Analysis {
    pub fn new(request: AnalysisRequest) -> Result<Self, Error> {
        request.validate()?;
        Ok(Self {
            params: request.cell_params(),
            grid: request.grid.phase_grid(),
            normalization: request.grid.normalization(),
            config_hash: request.config_hash(),
            request,
        })
    }

    pub fn system(&self) -> CellSystem<'_> {
        CellSystem::new(&self.params)
    }

    pub fn field(&self) -> Result<VectorField, Error> {
        sample_vector_field(&self.system(), &self.grid, &self.normalization)
    }

    /// `[V_C nullcline, N_d nullcline]`.
    pub fn nullclines(&self) -> Result<Vec<Nullcline>, Error> {
        let (v, n) = extract_nullclines(
            &self.system(),
            &self.grid,
            &self.normalization,
            self.request.grid.tolerance,
        )?;
        Ok(vec![v, n])
    }

    pub fn equilibria(&self) -> Result<Vec<Equilibrium>, Error> {
        find_equilibria(
            &self.system(),
            &self.grid,
            &self.normalization,
            self.request.grid.tolerance,
        )
    }

    pub fn sdr(&self, at: FrozenState, samples: usize) -> Result<SdrCurve, Error> {
        let (lo, hi) = self.system().state_bounds();
        let n = match at {
            FrozenState::Min => lo,
            FrozenState::Max => hi,
            FrozenState::Value(v) => v,
        };
        extract_sdr(
            &self.system(),
            n,
            self.grid.v_c_range,
            samples,
            self.request.grid.tolerance,
        )
    }

    pub fn regions(&self) -> Result<SignRegionMap, Error> {
        let f = self.field()?;
        Ok(drm2_regions(
            &f,
            self.grid.v_c_samples,
            self.grid.n_d_samples,
        ))
    }

    /// One result per requested initial condition, in order. Numerical
    /// failures keep their partial trajectory.
    pub fn trajectories(&self) -> Result<Vec<TrajectoryRecord>, Error> {
        simulate_many(
            &self.system(),
            &self.request.initial_states(),
            &self.request.solver,
        )
        .into_iter()
        .map(|r| match r {
            Ok(t) => Ok(TrajectoryRecord::from(t)),
            Err(Error::Simulation(e)) => Ok(TrajectoryRecord::from(*e)),
            Err(e) => Err(e),
        })
        .collect()
    }

    pub fn trajectory(&self, init: crate::cell::CellState) -> Result<Trajectory, Error> {
        crate::trajectory::simulate(&self.system(), init, &self.request.solver)
    }

    /// Field, nullclines, equilibria and trajectories in one document.
    pub fn portrait(&self) -> Result<PortraitDocument, Error> {
        let field = self.field()?;
        Ok(PortraitDocument {
            config_hash: self.config_hash.clone(),
            axes: (&self.grid).into(),
            normalization: NormalizationRecord::new(&self.normalization, field.norm_range),
            field: field.samples,
            nullclines: self.nullclines()?,
            equilibria: self.equilibria()?,
            trajectories: self.trajectories()?,
        })
    }
}

/// Shorthand for `Analysis::new(request)?.portrait()`.
pub fn build_portrait(request: &AnalysisRequest) -> Result<PortraitDocument, Error> {
    Analysis::new(request.clone())?.portrait()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{Classification, EquilibriumKind, NullclineVariable};

    #[test]
    fn default_portrait() {
        let doc = build_portrait(&AnalysisRequest::default()).unwrap();
        assert_eq!(doc.field.len(), 441);
        assert_eq!(doc.nullclines.len(), 2);
        assert_eq!(doc.nullclines[0].variable, NullclineVariable::VC);
        assert!(doc
            .equilibria
            .iter()
            .any(|e| e.kind == EquilibriumKind::OnContinuum && e.point.v_c == 0.0));
        assert_eq!(doc.trajectories.len(), 1);
        assert!(doc.trajectories[0].failure.is_none());
        assert_eq!(doc.config_hash, AnalysisRequest::default().config_hash());
    }

    #[test]
    fn sdr_by_name() {
        let mut req = AnalysisRequest::default();
        req.cell.r_ohms = 3000.0;
        let a = Analysis::new(req).unwrap();
        let c = a.sdr("max".parse().unwrap(), 601).unwrap();
        assert_eq!(c.zero_crossings.len(), 1);
        assert_eq!(c.zero_crossings[0].v_c, 0.0);
        assert!("middle".parse::<FrozenState>().is_err());
        assert_eq!(
            "2e26".parse::<FrozenState>().unwrap(),
            FrozenState::Value(2e26)
        );
    }

    #[test]
    fn invalid_request_is_rejected() {
        let mut req = AnalysisRequest::default();
        req.grid.v_c_samples = 1;
        assert!(
            matches!(Analysis::new(req), Err(Error::Config(e)) if e.path == "grid.v_c_samples")
        );
    }

    #[test]
    fn unstable_continuum_in_bistable_regime() {
        let a = Analysis::new(AnalysisRequest::default()).unwrap();
        let eq = a.equilibria().unwrap();
        assert!(eq
            .iter()
            .filter(|e| e.kind == EquilibriumKind::OnContinuum)
            .all(|e| e.classification == Classification::Unstable));
    }
}

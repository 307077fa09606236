//! JSON run configuration shared by the command line and the HTTP service.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cell::{CellParams, CellState, Template};
use crate::error::ConfigError;
use crate::memristor::VcmParams;
use crate::phase::{
    AxisScale, Normalization, PhaseGrid, DEFAULT_RADIUS_FRACTION, DEFAULT_TOLERANCE, DEFAULT_T_REF,
};
use crate::render::RenderStyle;
use crate::trajectory::SolverConfig;

/// Version of the configuration schema in `docs/config.schema.json`.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellBlock {
    pub r_ohms: f64,
    pub c_farads: f64,
    /// Row-major 3×3 feedback template; index 4 is `A₀₀`.
    pub a_template: [f64; 9],
    pub b_template: [f64; 9],
    pub z_bias: f64,
}

impl Default for CellBlock {
    fn default() -> Self {
        let p = CellParams::default();
        Self {
            r_ohms: p.r,
            c_farads: p.c,
            a_template: p.a_template.into(),
            b_template: p.b_template.into(),
            z_bias: p.z_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub v_c_min: f64,
    pub v_c_max: f64,
    pub n_d_min: f64,
    pub n_d_max: f64,
    pub v_c_samples: usize,
    pub n_d_samples: usize,
    pub n_d_axis_scale: AxisScale,
    /// Reference time of the derivative scales, s.
    pub t_ref: f64,
    /// Arrow radius as a fraction of the grid spacing.
    pub radius_fraction: f64,
    /// Root-finding tolerance on scaled derivatives.
    pub tolerance: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        let m = VcmParams::default();
        Self {
            v_c_min: -3.0,
            v_c_max: 3.0,
            n_d_min: m.n_d_min,
            n_d_max: m.n_d_max,
            v_c_samples: 21,
            n_d_samples: 21,
            n_d_axis_scale: AxisScale::Log,
            t_ref: DEFAULT_T_REF,
            radius_fraction: DEFAULT_RADIUS_FRACTION,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl GridBlock {
    pub fn phase_grid(&self) -> PhaseGrid {
        PhaseGrid {
            v_c_range: (self.v_c_min, self.v_c_max),
            n_d_range: (self.n_d_min, self.n_d_max),
            v_c_samples: self.v_c_samples,
            n_d_samples: self.n_d_samples,
            n_d_axis_scale: self.n_d_axis_scale,
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization::for_grid(&self.phase_grid(), self.t_ref, self.radius_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub v_c0: f64,
    pub n_d0: f64,
}

impl From<InitialCondition> for CellState {
    fn from(ic: InitialCondition) -> Self {
        CellState::new(ic.v_c0, ic.n_d0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Directory receiving artifacts.
    pub directory: String,
    pub style: RenderStyle,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            style: RenderStyle::default(),
        }
    }
}

fn default_trajectories() -> Vec<InitialCondition> {
    vec![InitialCondition {
        v_c0: 1.25,
        n_d0: 10e26,
    }]
}

/// The physics part of a run: everything that determines the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisRequest {
    pub cell: CellBlock,
    pub memristor: VcmParams,
    pub grid: GridBlock,
    pub solver: SolverConfig,
    pub trajectories: Vec<InitialCondition>,
}

impl Default for AnalysisRequest {
    fn default() -> Self {
        Self {
            cell: CellBlock::default(),
            memristor: VcmParams::default(),
            grid: GridBlock::default(),
            solver: SolverConfig::default(),
            trajectories: default_trajectories(),
        }
    }
}

/// Complete configuration file: an [`AnalysisRequest`] plus output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cell: CellBlock,
    pub memristor: VcmParams,
    pub grid: GridBlock,
    pub solver: SolverConfig,
    pub trajectories: Vec<InitialCondition>,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_request(AnalysisRequest::default(), OutputBlock::default())
    }
}

fn positive(path: &str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(
            path,
            format!("must be a finite positive number, got {value}"),
        ))
    }
}

fn finite(path: &str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(
            path,
            format!("must be finite, got {value}"),
        ))
    }
}

impl AnalysisRequest {
    pub fn cell_params(&self) -> CellParams {
        CellParams {
            r: self.cell.r_ohms,
            c: self.cell.c_farads,
            a_template: Template::from(self.cell.a_template),
            b_template: Template::from(self.cell.b_template),
            z_bias: self.cell.z_bias,
            memristor: self.memristor,
        }
    }

    pub fn initial_states(&self) -> Vec<CellState> {
        self.trajectories.iter().map(|&ic| ic.into()).collect()
    }

    /// Checks every invariant, reporting the first violation by path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.cell;
        positive("cell.r_ohms", c.r_ohms)?;
        positive("cell.c_farads", c.c_farads)?;
        for (k, &w) in c.a_template.iter().enumerate() {
            finite(&format!("cell.a_template[{k}]"), w)?;
        }
        for (k, &w) in c.b_template.iter().enumerate() {
            finite(&format!("cell.b_template[{k}]"), w)?;
        }
        finite("cell.z_bias", c.z_bias)?;

        self.memristor
            .validate()
            .map_err(|(field, msg)| ConfigError::new(format!("memristor.{field}"), msg))?;

        let g = &self.grid;
        finite("grid.v_c_min", g.v_c_min)?;
        finite("grid.v_c_max", g.v_c_max)?;
        if g.v_c_max <= g.v_c_min {
            return Err(ConfigError::new("grid.v_c_max", "must exceed grid.v_c_min"));
        }
        positive("grid.n_d_min", g.n_d_min)?;
        positive("grid.n_d_max", g.n_d_max)?;
        if g.n_d_max <= g.n_d_min {
            return Err(ConfigError::new("grid.n_d_max", "must exceed grid.n_d_min"));
        }
        let m = &self.memristor;
        if g.n_d_min < m.n_d_min {
            return Err(ConfigError::new(
                "grid.n_d_min",
                format!("below memristor.n_d_min ({:e})", m.n_d_min),
            ));
        }
        if g.n_d_max > m.n_d_max {
            return Err(ConfigError::new(
                "grid.n_d_max",
                format!("above memristor.n_d_max ({:e})", m.n_d_max),
            ));
        }
        if g.v_c_samples < 2 {
            return Err(ConfigError::new("grid.v_c_samples", "must be at least 2"));
        }
        if g.n_d_samples < 2 {
            return Err(ConfigError::new("grid.n_d_samples", "must be at least 2"));
        }
        positive("grid.t_ref", g.t_ref)?;
        positive("grid.tolerance", g.tolerance)?;
        if !(g.radius_fraction > 0.0 && g.radius_fraction <= 0.5) {
            return Err(ConfigError::new(
                "grid.radius_fraction",
                "must lie in (0, 0.5]",
            ));
        }

        self.solver.validate()?;

        for (k, ic) in self.trajectories.iter().enumerate() {
            finite(&format!("trajectories[{k}].v_c0"), ic.v_c0)?;
            if !(ic.n_d0 >= m.n_d_min && ic.n_d0 <= m.n_d_max) {
                return Err(ConfigError::new(
                    format!("trajectories[{k}].n_d0"),
                    format!(
                        "must lie in [{:e}, {:e}], got {:e}",
                        m.n_d_min, m.n_d_max, ic.n_d0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }
}

impl RunConfig {
    pub fn from_request(r: AnalysisRequest, output: OutputBlock) -> Self {
        Self {
            cell: r.cell,
            memristor: r.memristor,
            grid: r.grid,
            solver: r.solver,
            trajectories: r.trajectories,
            output,
        }
    }

    pub fn request(&self) -> AnalysisRequest {
        AnalysisRequest {
            cell: self.cell,
            memristor: self.memristor,
            grid: self.grid,
            solver: self.solver,
            trajectories: self.trajectories.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.request().validate()?;
        let s = &self.output.style;
        if s.width <= 2 * s.margin + 100 || s.height <= 2 * s.margin + 10 {
            return Err(ConfigError::new(
                "output.style",
                "margins leave no room for the plot",
            ));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        self.request().config_hash()
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        parse_json(text)
    }

    /// Parses `text` and applies `key=value` overrides in order.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_json(text)?;
        for o in overrides {
            cfg = cfg.with_override(o)?;
        }
        Ok(cfg)
    }

    /// Applies one dotted-path override such as `cell.r_ohms=3000` or
    /// `trajectories.0.v_c0=-1`. The value is read as JSON, falling back to
    /// a plain string.
    pub fn with_override(&self, assignment: &str) -> Result<Self, ConfigError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::new(assignment, "override must look like path=value"))?;
        let path = path.trim();
        let value: Value =
            serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
        let mut root = serde_json::to_value(self).expect("config serializes");
        let mut node = &mut root;
        for key in path.split('.') {
            node = match node {
                Value::Object(map) => map.get_mut(key),
                Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| ConfigError::new(path, "no such configuration key"))?;
        }
        *node = value;
        let cfg: Self = serde_path_to_error::deserialize(root).map_err(path_error)?;
        Ok(cfg)
    }
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> ConfigError {
    let path = e.path().to_string();
    ConfigError::new(
        if path == "." { String::new() } else { path },
        e.into_inner().to_string(),
    )
}

/// Deserializes JSON, reporting the dotted path of the first bad field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(path_error)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_document_the_bistable_cell() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.cell.r_ohms, 1000.0);
        assert_eq!(cfg.cell.a_template[4], 2.0);
        assert!(cfg.validate().is_ok());
        let p = cfg.request().cell_params();
        assert_eq!(p.a_template.center(), 2.0);
        assert_eq!(p, CellParams::default());
    }

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_reports_path() {
        let e = RunConfig::from_json(r#"{"cell": {"r_ohm": 3}}"#).unwrap_err();
        assert_eq!(e.path, "cell.r_ohm");
        assert!(e.message.contains("r_ohm"));
        let e = RunConfig::from_json(r#"{"grid": {"v_c_samples": "many"}}"#).unwrap_err();
        assert_eq!(e.path, "grid.v_c_samples");
        let e = RunConfig::from_json(r#"{"trajectories": [{"v_c0": 1}]}"#).unwrap_err();
        assert_eq!(e.path, "trajectories[0]");
    }

    #[test]
    fn validation_reports_path() {
        let mut cfg = RunConfig::default();
        cfg.trajectories.push(InitialCondition {
            v_c0: 0.0,
            n_d0: 1.0,
        });
        assert_eq!(cfg.validate().unwrap_err().path, "trajectories[1].n_d0");
        let mut cfg = RunConfig::default();
        cfg.memristor.polarity = 0.5;
        assert_eq!(cfg.validate().unwrap_err().path, "memristor.polarity");
        let mut cfg = RunConfig::default();
        cfg.grid.n_d_max = 1e28;
        assert_eq!(cfg.validate().unwrap_err().path, "grid.n_d_max");
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::default();
        let c = cfg.with_override("cell.r_ohms=3000").unwrap();
        assert_eq!(c.cell.r_ohms, 3000.0);
        let c = c.with_override("grid.n_d_axis_scale=linear").unwrap();
        assert_eq!(c.grid.n_d_axis_scale, AxisScale::Linear);
        let c = c.with_override("trajectories.0.v_c0=-1.5").unwrap();
        assert_eq!(c.trajectories[0].v_c0, -1.5);
        let c = c.with_override("cell.a_template.4=2.5").unwrap();
        assert_eq!(c.cell.a_template[4], 2.5);
        assert_eq!(
            cfg.with_override("cell.nope=1").unwrap_err().path,
            "cell.nope"
        );
        assert!(cfg.with_override("cell.r_ohms").is_err());
        assert_eq!(
            cfg.with_override("grid.v_c_samples=abc").unwrap_err().path,
            "grid.v_c_samples"
        );
    }

    #[test]
    fn hash_ignores_output_block() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.directory = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
        let c = a.with_override("cell.c_farads=1e-8").unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash(), AnalysisRequest::default().config_hash());
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}

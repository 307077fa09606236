//! `mcnn` command-line front end.
//!
//! Every subcommand resolves one [`RunConfig`] (file, then `--set`
//! overrides), validates it, runs one analysis and writes its artifacts plus
//! a `manifest.json` into the output directory. Diagnostics go to standard
//! error as one JSON object per line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or
//! arguments, 3 numerical failure (partial artifacts and `diagnostics.json`
//! are still written).

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mcnn_core::config::SCHEMA_VERSION;
use mcnn_core::export::{
    document_json, field_csv, nullclines_csv, to_json, trajectory_csv, PortraitDocument,
    TrajectoryRecord,
};
use mcnn_core::render::render_portrait;
use mcnn_core::{Analysis, ConfigError, Error, FrozenState, ModelError, RunConfig};
use mcnn_service::ServiceConfig;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Caps the rayon pool when set to a positive integer.
pub const THREADS_ENV: &str = "MCNN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "mcnn",
    version,
    about = "Phase-plane analysis of a memristive CNN cell"
)]
pub struct Cli {
    /// JSON run configuration. Defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set cell.r_ohms=3000`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the normalized vector field (CSV and JSON).
    Field,
    /// Extract both nullclines.
    Nullclines,
    /// Locate and classify equilibria.
    Equilibria,
    /// State dynamic route with the memristor frozen.
    Sdr {
        /// `min`, `max` or a vacancy concentration in m^-3.
        #[arg(long = "n-d", value_name = "min|max|VALUE")]
        n_d: String,
        #[arg(long, default_value_t = 1201)]
        samples: usize,
    },
    /// DRM2 sign-region map.
    Regions,
    /// Integrate every configured initial condition.
    Trajectory,
    /// Full phase portrait as SVG and JSON.
    Portrait,
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Reject cross-origin requests.
        #[arg(long)]
        restrict_cors: bool,
        #[arg(long, default_value_t = 201)]
        max_grid_samples: usize,
        #[arg(long, default_value_t = 64)]
        max_trajectories: usize,
    },
    /// Print the default configuration.
    Defaults,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Field => "field",
            Self::Nullclines => "nullclines",
            Self::Equilibria => "equilibria",
            Self::Sdr { .. } => "sdr",
            Self::Regions => "regions",
            Self::Trajectory => "trajectory",
            Self::Portrait => "portrait",
            Self::Serve { .. } => "serve",
            Self::Defaults => "defaults",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Io(String),
    Numerical(Vec<Value>),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Self::Config(c),
            Error::Simulation(s) => Self::Numerical(vec![
                json!({"kind": s.kind, "t": s.t, "message": s.to_string()}),
            ]),
            e => Self::Numerical(vec![json!({"message": e.to_string()})]),
        }
    }
}

/// Writes one single-line JSON record to standard error.
pub fn diagnostic(record: Value) {
    eprintln!(
        "{}",
        serde_json::to_string(&record).expect("diagnostic serializes")
    );
}

/// Loads the configuration named by the flags, with overrides applied and
/// every invariant checked.
pub fn resolve_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| ConfigError::new("", format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let cfg = RunConfig::from_json_with_overrides(&text, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Builds the global rayon pool from `MCNN_THREADS`.
pub fn init_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        ConfigError::new(
            THREADS_ENV,
            format!("expected a positive integer, got {raw:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::new(THREADS_ENV, e.to_string()))
}

/// Pretty JSON of the default configuration, newline-terminated.
pub fn defaults_json() -> String {
    let mut s = serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialize");
    s.push('\n');
    s
}

struct Artifacts {
    dir: PathBuf,
    config_hash: String,
    written: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: &'a str,
    tool_version: &'a str,
    command: &'a str,
    config_hash: &'a str,
    config: &'a RunConfig,
    status: &'a str,
    artifacts: &'a [String],
}

impl Artifacts {
    fn new(dir: PathBuf, config_hash: String) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            config_hash,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        diagnostic(
            json!({"level": "info", "event": "artifact", "path": path.display().to_string()}),
        );
        self.written.push(name.to_string());
        Ok(())
    }

    /// JSON artifact wrapped with the config hash.
    fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        key: &str,
        value: &T,
    ) -> Result<(), Failure> {
        let mut body = to_json(&json!({ "config_hash": self.config_hash, key: value }));
        body.push('\n');
        self.write(name, &body)
    }

    fn finish(&mut self, command: &str, cfg: &RunConfig, status: &str) -> Result<(), Failure> {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: &self.config_hash,
            config: cfg,
            status,
            artifacts: &self.written,
        };
        let mut body = to_json(&manifest);
        body.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

fn trajectory_failures(records: &[TrajectoryRecord]) -> Vec<Value> {
    records
        .iter()
        .enumerate()
        .filter_map(|(k, r)| {
            r.failure
                .as_ref()
                .map(|f| json!({"trajectory": k, "kind": f.kind, "t": f.t, "message": f.message}))
        })
        .collect()
}

fn write_trajectories(out: &mut Artifacts, records: &[TrajectoryRecord]) -> Result<(), Failure> {
    for (k, r) in records.iter().enumerate() {
        out.write(
            &format!("trajectory-{k}.csv"),
            &trajectory_csv(&r.trajectory),
        )?;
    }
    out.write_json("trajectories.json", "trajectories", &records)
}

fn write_portrait(
    out: &mut Artifacts,
    cfg: &RunConfig,
    doc: &PortraitDocument,
) -> Result<(), Failure> {
    // byte-identical to the /api/analyze body
    out.write("portrait.json", &document_json(doc))?;
    out.write("portrait.svg", &render_portrait(doc, &cfg.output.style))
}

fn frozen_state(raw: &str) -> Result<FrozenState, Failure> {
    raw.parse()
        .map_err(|m: String| Failure::Config(ConfigError::new("--n-d", m)))
}

fn execute(command: &Command, cfg: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let analysis = Analysis::new(cfg.request())?;
    match command {
        Command::Field => {
            let field = analysis.field()?;
            out.write("field.csv", &field_csv(&field.samples))?;
            out.write_json("field.json", "field", &field)?;
        }
        Command::Nullclines => {
            let nullclines = analysis.nullclines()?;
            out.write("nullclines.csv", &nullclines_csv(&nullclines))?;
            out.write_json("nullclines.json", "nullclines", &nullclines)?;
        }
        Command::Equilibria => {
            out.write_json("equilibria.json", "equilibria", &analysis.equilibria()?)?;
        }
        Command::Sdr { n_d, samples } => {
            let at = frozen_state(n_d)?;
            let curve = analysis.sdr(at, *samples).map_err(|e| match e {
                Error::Model(m @ ModelError::StateOutOfRange { .. }) => {
                    Failure::Config(ConfigError::new("--n-d", m.to_string()))
                }
                Error::InvalidArgument(m) => Failure::Config(ConfigError::new("--samples", m)),
                e => e.into(),
            })?;
            let mut csv = String::from("v_c,dv_dt\n");
            for (v, dv) in &curve.samples {
                csv.push_str(&format!(
                    "{},{}\n",
                    mcnn_core::export::fmt_float(*v),
                    mcnn_core::export::fmt_float(*dv)
                ));
            }
            out.write("sdr.csv", &csv)?;
            out.write_json("sdr.json", "sdr", &curve)?;
        }
        Command::Regions => {
            let map = analysis.regions()?;
            let mut csv = String::from("i,j,v_c,n_d,label\n");
            for j in 0..map.n_d_samples {
                for i in 0..map.v_c_samples {
                    let p = analysis.grid.node(i, j);
                    let label = serde_json::to_value(map.label(i, j)).expect("label serializes");
                    csv.push_str(&format!(
                        "{i},{j},{},{},{}\n",
                        mcnn_core::export::fmt_float(p.v_c),
                        mcnn_core::export::fmt_float(p.n_d),
                        label.as_str().unwrap_or_default()
                    ));
                }
            }
            out.write("regions.csv", &csv)?;
            out.write_json("regions.json", "regions", &map)?;
        }
        Command::Trajectory => {
            let records = analysis.trajectories()?;
            write_trajectories(out, &records)?;
            let failures = trajectory_failures(&records);
            if !failures.is_empty() {
                return Err(Failure::Numerical(failures));
            }
        }
        Command::Portrait => {
            let doc = analysis.portrait()?;
            write_portrait(out, cfg, &doc)?;
            let failures = trajectory_failures(&doc.trajectories);
            if !failures.is_empty() {
                return Err(Failure::Numerical(failures));
            }
        }
        Command::Serve { .. } | Command::Defaults => unreachable!("handled before artifacts"),
    }
    Ok(())
}

fn serve(addr: SocketAddr, cfg: ServiceConfig) -> u8 {
    let rt = match tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
    {
        Ok(rt) => rt,
        Err(e) => {
            diagnostic(json!({"level": "error", "kind": "io", "message": e.to_string()}));
            return EXIT_IO;
        }
    };
    diagnostic(json!({"level": "info", "event": "listening", "address": addr.to_string()}));
    match rt.block_on(mcnn_service::serve(addr, cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            diagnostic(json!({"level": "error", "kind": "io", "message": e.to_string()}));
            EXIT_IO
        }
    }
}

fn report(failure: &Failure) -> u8 {
    match failure {
        Failure::Config(e) => {
            diagnostic(
                json!({"level": "error", "kind": "config", "field_path": e.path, "message": e.message}),
            );
            EXIT_CONFIG
        }
        Failure::Io(m) => {
            diagnostic(json!({"level": "error", "kind": "io", "message": m}));
            EXIT_IO
        }
        Failure::Numerical(items) => {
            for d in items {
                let mut record = json!({"level": "error", "kind": "numerical"});
                if let (Value::Object(r), Value::Object(extra)) = (&mut record, d) {
                    for (k, v) in extra {
                        let k = if k == "kind" { "failure" } else { k.as_str() };
                        r.insert(k.to_string(), v.clone());
                    }
                }
                diagnostic(record);
            }
            EXIT_NUMERICAL
        }
    }
}

/// Runs one invocation and returns its exit code.
pub fn run(cli: Cli) -> u8 {
    if let Err(e) = init_threads() {
        return report(&Failure::Config(e));
    }
    if let Command::Defaults = cli.command {
        print!("{}", defaults_json());
        return EXIT_OK;
    }
    let cfg = match resolve_config(cli.config.as_deref(), &cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => return report(&Failure::Config(e)),
    };
    if let Command::Serve {
        port,
        host,
        restrict_cors,
        max_grid_samples,
        max_trajectories,
    } = cli.command
    {
        let svc = ServiceConfig {
            max_grid_samples,
            max_trajectories,
            permissive_cors: !restrict_cors,
        };
        return serve(SocketAddr::new(host, port), svc);
    }

    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let mut out = match Artifacts::new(dir, cfg.config_hash()) {
        Ok(a) => a,
        Err(f) => return report(&f),
    };
    let name = cli.command.name();
    let result = execute(&cli.command, &cfg, &mut out);
    let status = match &result {
        Ok(()) => "ok",
        Err(Failure::Numerical(items)) => {
            let body =
                json!({"config_hash": out.config_hash, "command": name, "diagnostics": items});
            let mut text = to_json(&body);
            text.push('\n');
            if let Err(f) = out.write("diagnostics.json", &text) {
                return report(&f);
            }
            "numerical-failure"
        }
        Err(f) => return report(f),
    };
    if let Err(f) = out.finish(name, &cfg, status) {
        return report(&f);
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => report(&f),
    }
}

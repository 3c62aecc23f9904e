mod commands;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use dmg_core::shapes::ShapeSpec;
use dmg_core::Config;

#[derive(Parser, Debug)]
#[command(name = "dmg", version, about = "Dexterous manipulation graphs: build, plan, analyze and simulate in-hand regrasps")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML or JSON file with configuration overrides
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving every output file
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Set any configuration field, e.g. `--set planner.weights.pull=5`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Segmentation resolution in metres
    #[arg(long, global = true)]
    resolution: Option<f64>,

    /// Normal threshold between adjacent patches
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Finger angle discretization in degrees
    #[arg(long, global = true)]
    angle_step: Option<u32>,

    /// Finger length in metres
    #[arg(long, global = true)]
    finger_length: Option<f64>,

    #[arg(long, global = true)]
    max_aperture: Option<f64>,

    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Linear speed limit of the pushing arm, m/s
    #[arg(long, global = true)]
    v_max: Option<f64>,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a surface and build its manipulation graph
    Build {
        /// Point cloud file (.ply, .xyz, .csv)
        #[arg(long, conflicts_with = "shape", required_unless_present = "shape")]
        input: Option<PathBuf>,

        /// Generated shape, e.g. `box:0.1,0.1,0.02` or `plug`
        #[arg(long)]
        shape: Option<ShapeSpec>,

        /// Sampling pitch of generated shapes, metres
        #[arg(long, default_value_t = 0.002)]
        pitch: f64,
    },
    /// Plan an in-hand path between two grasps
    Plan {
        /// Graph written by `build`
        #[arg(long)]
        dmg: PathBuf,

        /// Start contact `x,y,z`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        start: [f64; 3],

        /// Start finger angle, degrees
        #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
        start_angle: f64,

        /// Goal contact `x,y,z`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        goal: [f64; 3],

        /// Goal finger angle, degrees
        #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
        goal_angle: f64,
    },
    /// Sample poses and compute the manipulability matrix
    Matrix {
        #[arg(long)]
        dmg: PathBuf,
    },
    /// Execute a plan with the kinematic dual-arm model
    Simulate {
        #[arg(long)]
        dmg: PathBuf,

        /// Plan written by `plan`
        #[arg(long)]
        plan: PathBuf,
    },
    /// Write visualization artifacts
    Export {
        #[arg(long)]
        dmg: PathBuf,

        #[arg(long, value_enum, default_values_t = vec![Artifact::Dot, Artifact::Points, Artifact::Nodes, Artifact::Config])]
        what: Vec<Artifact>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Artifact {
    /// Graph in Graphviz format
    Dot,
    /// Surface points with patch and component labels
    Points,
    /// Node contacts, normals and angle runs
    Nodes,
    /// Effective configuration
    Config,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("`{c}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected x,y,z, got `{s}`"))
}

/// Failure carrying its process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub const EXIT_NO_PATH: u8 = 2;
pub const EXIT_EXECUTION: u8 = 3;

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .with_context(|| format!("`{key}` does not name a configuration field"))?;
        if !obj.contains_key(*part) {
            bail!("unknown configuration field `{key}`");
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).unwrap();
    }
    Ok(())
}

fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let v = if is_toml {
        serde_json::to_value(toml::from_str::<toml::Value>(&text).with_context(|| format!("parsing {}", path.display()))?)?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(v)
}

impl Common {
    /// Layers, lowest first: `base`, the config file, `--set`, named flags.
    pub fn resolve(&self, base: Config) -> Result<Config> {
        let mut value = serde_json::to_value(&base)?;
        if let Some(path) = &self.config {
            merge(&mut value, read_config_file(path)?);
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').with_context(|| format!("`{s}` is not KEY=VALUE"))?;
            let parsed = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            set_path(&mut value, k.trim(), parsed)?;
        }
        let flags: [(&str, Option<Value>); 7] = [
            ("segmentation.resolution", self.resolution.map(Value::from)),
            ("dmg.delta", self.delta.map(Value::from)),
            ("dmg.angle_step", self.angle_step.map(Value::from)),
            ("dmg.finger_length", self.finger_length.map(Value::from)),
            ("planner.max_aperture", self.max_aperture.map(Value::from)),
            ("ects.alpha", self.alpha.map(Value::from)),
            ("ects.gains.v_max", self.v_max.map(Value::from)),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                set_path(&mut value, k, v)?;
            }
        }
        let cfg: Config = serde_json::from_value(value).context("invalid configuration")?;
        cfg.validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }
}

/// Recursive object merge; unknown keys survive so deserialization rejects them.
fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(dv) => merge(dv, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    std::fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    match cli.command {
        Command::Build { input, shape, pitch } => commands::build(c, input, shape, pitch),
        Command::Plan {
            dmg,
            start,
            start_angle,
            goal,
            goal_angle,
        } => commands::plan(c, &dmg, (start, start_angle), (goal, goal_angle)),
        Command::Matrix { dmg } => commands::matrix(c, &dmg),
        Command::Simulate { dmg, plan } => commands::simulate(c, &dmg, &plan),
        Command::Export { dmg, what } => commands::export(c, &dmg, &what),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

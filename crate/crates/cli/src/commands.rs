use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use log::{info, warn};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use dmg_core::f64::{Dmg, GraspQuery, OrientedSurface, Plan, Planner};
use dmg_core::manipulability::report_regrasp_areas;
use dmg_core::planner::Primitive;
use dmg_core::shapes::ShapeSpec;
use dmg_core::surface::load_surface;
use dmg_core::{build_dmg, build_matrix, sample_poses, segment, simulate_execution, Config, ExecError, PlanError};

use crate::{Artifact, Common, Exit, EXIT_EXECUTION, EXIT_NO_PATH};

/// How the surface behind a graph was obtained, so later commands can
/// rebuild it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Source {
    Shape { spec: String, pitch: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildStats {
    points: usize,
    patches: usize,
    nodes: usize,
    edges: usize,
    components: usize,
    blocked_patches: usize,
    isolated_patches: usize,
    segment_seconds: f64,
    graph_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    source: Source,
    config: Config,
    stats: BuildStats,
    dmg: serde_json::Value,
}

struct Loaded {
    config: Config,
    dmg: Dmg,
    surface: OrientedSurface,
}

fn surface_of(source: &Source, config: &Config) -> Result<OrientedSurface> {
    match source {
        Source::Shape { spec, pitch } => {
            let spec: ShapeSpec = spec.parse().map_err(|e| anyhow!("shape `{spec}`: {e}"))?;
            if !pitch.is_finite() || *pitch <= 0.0 {
                return Err(anyhow!("pitch must be positive, got {pitch}"));
            }
            Ok(spec.generate(*pitch))
        }
        Source::File { path } => Ok(load_surface(path, &config.load_options())?),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a graph envelope. Settings that shaped the graph stay as built;
/// everything else follows the usual precedence.
fn load(common: &Common, path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let env: Envelope = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dmg = Dmg::from_json_value(env.dmg).with_context(|| format!("loading graph from {}", path.display()))?;
    let mut config = common.resolve(env.config.clone())?;
    if config.segmentation != env.config.segmentation
        || config.dmg != env.config.dmg
        || config.input_scale != env.config.input_scale
    {
        warn!("segmentation and graph settings are fixed at build time; rebuild to change them");
        config.segmentation = env.config.segmentation;
        config.dmg = env.config.dmg;
        config.input_scale = env.config.input_scale;
    }
    let surface = surface_of(&env.source, &config)?;
    Ok(Loaded { config, dmg, surface })
}

pub fn build(common: &Common, input: Option<PathBuf>, shape: Option<ShapeSpec>, pitch: f64) -> Result<()> {
    let config = common.resolve(Config::default())?;
    let source = match (input, shape) {
        (Some(path), _) => Source::File {
            path: fs::canonicalize(&path).with_context(|| format!("opening {}", path.display()))?,
        },
        (None, Some(spec)) => Source::Shape {
            spec: spec.to_string(),
            pitch,
        },
        (None, None) => return Err(anyhow!("either --input or --shape is required")),
    };
    let surface = surface_of(&source, &config)?;
    info!("{} points", surface.len());

    let t0 = Instant::now();
    let graph = segment(&surface, config.segmentation.resolution, &config.segment_options())?;
    let segment_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let dmg = build_dmg(&graph, &surface, &config.finger(), config.dmg.delta)?;
    let graph_seconds = t1.elapsed().as_secs_f64();

    let stats = BuildStats {
        points: surface.len(),
        patches: graph.active_count(),
        nodes: dmg.len(),
        edges: dmg.edge_count(),
        components: dmg.component_count(),
        blocked_patches: dmg.blocked_patches().len(),
        isolated_patches: dmg.isolated_patches().len(),
        segment_seconds,
        graph_seconds,
    };
    println!(
        "{} patches, {} nodes, {} edges, {} components ({:.2} s)",
        stats.patches,
        stats.nodes,
        stats.edges,
        stats.components,
        segment_seconds + graph_seconds
    );
    let out = &common.out_dir;
    write_text(&out.join("dmg.dot"), &dmg.to_dot())?;
    write_json(&out.join("stats.json"), &stats)?;
    let env = Envelope {
        source,
        config,
        stats,
        dmg: dmg.to_json_value(),
    };
    write_json(&out.join("dmg.json"), &env)
}

pub fn plan(common: &Common, dmg_path: &Path, start: ([f64; 3], f64), goal: ([f64; 3], f64)) -> Result<()> {
    let l = load(common, dmg_path)?;
    let planner = Planner::new(&l.dmg, &l.surface, l.config.planner_options());
    let q = |(p, a): ([f64; 3], f64)| GraspQuery::new(Point3::from(p), a);
    let plan = match planner.plan(&q(start), &q(goal)) {
        Ok(p) => p,
        Err(e @ PlanError::NoPath { .. }) => {
            return Err(Exit {
                code: EXIT_NO_PATH,
                message: e.to_string(),
            }
            .into())
        }
        Err(e) => return Err(e.into()),
    };
    for w in &plan.warnings {
        warn!("{w}");
    }
    let rotations = plan
        .primitives
        .steps
        .iter()
        .filter(|s| matches!(s.primitive, Primitive::Rotation(_)))
        .count();
    println!(
        "{} primitives ({} rotations, {} translations), cost {:.4}",
        plan.primitives.steps.len(),
        rotations,
        plan.primitives.steps.len() - rotations,
        plan.diagnostics.total_cost
    );
    write_json(&common.out_dir.join("plan.json"), &plan)?;
    write_text(&common.out_dir.join("path.csv"), &path_csv(&plan))
}

fn path_csv(plan: &Plan) -> String {
    let mut out = String::from("step,kind,rotation_deg,dx,dy,dz,node,angle,x,y,z\n");
    let s = &plan.primitives.start;
    out.push_str(&format!(
        "0,start,,,,,{},{},{},{},{}\n",
        s.node, s.angle, s.contact.x, s.contact.y, s.contact.z
    ));
    for (i, step) in plan.primitives.steps.iter().enumerate() {
        let a = &step.after;
        let motion = match step.primitive {
            Primitive::Rotation(r) => format!("rotation,{r},,,"),
            Primitive::Translation(t) => format!("translation,,{},{},{}", t.x, t.y, t.z),
        };
        out.push_str(&format!(
            "{},{motion},{},{},{},{},{}\n",
            i + 1,
            a.node,
            a.angle,
            a.contact.x,
            a.contact.y,
            a.contact.z
        ));
    }
    out
}

pub fn matrix(common: &Common, dmg_path: &Path) -> Result<()> {
    let l = load(common, dmg_path)?;
    let samples = sample_poses(&l.dmg, &l.surface, &l.config.sampling_options())?;
    let valid = samples.iter().filter(|s| s.is_valid()).count();
    let m = build_matrix(&l.dmg, &l.surface, &samples, l.config.planner.max_aperture);
    let areas = report_regrasp_areas(&m, &samples, &l.dmg, l.config.manipulability.representatives);
    println!("{valid} valid poses of {} sampled, {} blocks", samples.len(), m.block_count());

    let out = &common.out_dir;
    write_text(&out.join("matrix.csv"), &m.to_csv())?;
    let mut pgm = BufWriter::new(File::create(out.join("matrix.pgm"))?);
    m.write_pgm(&mut pgm)?;
    pgm.flush()?;
    write_json(&out.join("matrix.json"), &m.sidecar(&samples))?;
    write_json(&out.join("samples.json"), &samples)?;
    write_json(&out.join("blocks.json"), &areas)
}

pub fn simulate(common: &Common, dmg_path: &Path, plan_path: &Path) -> Result<()> {
    let l = load(common, dmg_path)?;
    let text = fs::read_to_string(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let plan: Plan = serde_json::from_str(&text).with_context(|| format!("parsing {}", plan_path.display()))?;
    let exec = match simulate_execution(
        &l.surface,
        &l.dmg,
        &plan.primitives,
        &plan.start,
        &l.config.execution_options(),
    ) {
        Ok(e) => e,
        Err(e @ ExecError::InvalidOptions(_)) => return Err(e.into()),
        Err(e) => {
            write_json(&common.out_dir.join("failure.json"), &e)?;
            return Err(Exit {
                code: EXIT_EXECUTION,
                message: e.to_string(),
            }
            .into());
        }
    };
    for w in &exec.warnings {
        warn!("{w}");
    }
    let r = &exec.report;
    println!(
        "{} primitives in {} steps: position error {:.2} mm, angle error {:.2} deg, object turned {:.2} deg",
        r.primitives,
        r.steps,
        r.position_error * 1e3,
        r.angle_error_deg,
        r.orientation_change_deg
    );
    let mut w = BufWriter::new(File::create(common.out_dir.join("trajectory.jsonl"))?);
    exec.write_log(&mut w)?;
    w.flush()?;
    write_json(&common.out_dir.join("report.json"), &exec.report)
}

pub fn export(common: &Common, dmg_path: &Path, what: &[Artifact]) -> Result<()> {
    let l = load(common, dmg_path)?;
    let out = &common.out_dir;
    for a in what {
        match a {
            Artifact::Dot => write_text(&out.join("dmg.dot"), &l.dmg.to_dot())?,
            Artifact::Config => write_json(&out.join("config.json"), &l.config)?,
            Artifact::Nodes => write_text(&out.join("nodes.csv"), &nodes_csv(&l.dmg))?,
            Artifact::Points => {
                let graph = segment(&l.surface, l.config.segmentation.resolution, &l.config.segment_options())?;
                let mut label = vec![(usize::MAX, None); l.surface.len()];
                for p in graph.active_indices() {
                    let component = l.dmg.nodes_of_patch(p).next().map(|n| l.dmg.component(n));
                    for &m in &graph.patch(p).members {
                        label[m] = (p, component);
                    }
                }
                let mut text = String::from("x,y,z,nx,ny,nz,patch,component\n");
                for ((p, n), (patch, comp)) in l.surface.points().iter().zip(l.surface.normals()).zip(label) {
                    let patch = if patch == usize::MAX { String::new() } else { patch.to_string() };
                    let comp = comp.map(|c| c.to_string()).unwrap_or_default();
                    text.push_str(&format!("{},{},{},{},{},{},{patch},{comp}\n", p.x, p.y, p.z, n.x, n.y, n.z));
                }
                write_text(&out.join("points.csv"), &text)?;
            }
        }
    }
    Ok(())
}

fn nodes_csv(dmg: &Dmg) -> String {
    let mut out = String::from("id,patch,run,x,y,z,nx,ny,nz,angle_start,angle_end,component,degree\n");
    for (id, n) in dmg.nodes().iter().enumerate() {
        out.push_str(&format!(
            "{id},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            n.patch,
            n.component_index,
            n.contact.x,
            n.contact.y,
            n.contact.z,
            n.normal.x,
            n.normal.y,
            n.normal.z,
            n.angles.start,
            n.angles.end(),
            dmg.component(id),
            dmg.neighbours(id).len()
        ));
    }
    out
}

//! `polar6d` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Set
//! `POLAR6D_THREADS` to cap the worker threads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polar6d::datagen::{synthesize_scene, SceneConfig};
use polar6d::io::{
    self, aop_to_rgb, dop_to_rgb, normals_to_rgb, read_json, read_mask_pfm, read_scalar_pfm,
    read_vector_pfm, write_json, write_mask_pfm, write_png, write_scalar_pfm, write_vector_pfm,
    MetricRow, Pfm,
};
use polar6d::losses::{add_metric, add_recall, adds_metric};
use polar6d::polarimetry::{estimate_polarisation, invert_dop};
use polar6d::refiner::{refine, Observation, RefineOptions};
use polar6d::renderer::{rasterize, GeometryBuffers};
use polar6d::sfp::plausible_normals;
use polar6d::{Camera, Grid, Material, PolarSample, Pose};

const THREADS_VAR: &str = "POLAR6D_THREADS";
/// ADD recall threshold as a fraction of the mesh diameter.
const RECALL_FRACTION: f64 = 0.1;

#[derive(Parser)]
#[command(name = "polar6d", version, about = "Polarimetric shape and 6D pose tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene config into a filter stack plus ground-truth maps.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate unpolarized intensity, DoP and AoP from a filter stack.
    Estimate {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plausible normals from an `estimate` output directory.
    Normals {
        #[arg(long)]
        polar: PathBuf,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `camera.json` in the polar directory if present,
        /// else an orthographic view.
        #[arg(long)]
        camera: Option<PathBuf>,
    },
    /// Print the zenith angles compatible with a DoP value as JSON.
    InvertDop {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eta: f64,
    },
    /// Rasterize normals, depth, mask and NOCS maps.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a pose against observed DoP. The observation directory must
    /// hold `dop.pfm`, `valid.pfm` and `mask.pfm`.
    Refine {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = polar6d::polarimetry::DEFAULT_ETA)]
        eta: f64,
        /// Optional CSV trace of the best loss per iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print ADD, ADD-S and ADD recall as CSV.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Visualize a PFM map as PNG.
    Vis {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Dop,
    Aop,
    Normal,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<polar6d::Error> for Failure {
    fn from(e: polar6d::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got {value:?}"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Data(e.to_string()))
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Synth { config, out } => synth(&config, &out),
        Command::Estimate { stack, out } => estimate(&stack, &out),
        Command::Normals { polar, eta, out, camera } => {
            normals(&polar, eta, &out, camera.as_deref())
        }
        Command::InvertDop { rho, eta } => {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Failure::Data(format!("rho must lie in [0, 1], got {rho}")));
            }
            let z = invert_dop(rho, Material::new(eta)?);
            println!("{}", serde_json::to_string(&z).expect("plain struct"));
            Ok(())
        }
        Command::Render { mesh, pose, camera, out } => render(&mesh, &pose, &camera, &out),
        Command::Refine { init, obs, mesh, camera, options, out, eta, trace } => {
            refine_cmd(&init, &obs, &mesh, &camera, options.as_deref(), &out, eta, trace.as_deref())
        }
        Command::Eval { gt, pred, mesh } => eval(&gt, &pred, &mesh),
        Command::Vis { input, out, kind } => vis(&input, &out, kind),
    }
}

fn depth_map(buffers: &GeometryBuffers) -> Grid<f64> {
    buffers.depth.map(|d| d.unwrap_or(0.0))
}

fn write_buffers(out: &Path, buffers: &GeometryBuffers) -> CliResult {
    write_vector_pfm(&out.join("normals.pfm"), &buffers.normals)?;
    write_vector_pfm(&out.join("nocs.pfm"), &buffers.nocs)?;
    write_scalar_pfm(&out.join("depth.pfm"), &depth_map(buffers))?;
    write_mask_pfm(&out.join("mask.pfm"), &buffers.mask)?;
    Ok(())
}

fn synth(config_path: &Path, out: &Path) -> CliResult {
    let config: SceneConfig = read_json(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mesh = io::load_mesh(&config.mesh_path(base))?;
    let scene = synthesize_scene(&config, &mesh)?;
    fs::create_dir_all(out)?;
    io::write_stack(out, &scene.stack)?;
    write_buffers(out, &scene.buffers)?;
    let gt = &scene.ground_truth;
    write_scalar_pfm(&out.join("gt_i_un.pfm"), &gt.map(|s| s.i_un))?;
    write_scalar_pfm(&out.join("gt_dop.pfm"), &gt.map(|s| s.dop))?;
    write_scalar_pfm(&out.join("gt_aop.pfm"), &gt.map(|s| s.aop))?;
    write_json(&out.join("gt_pose.json"), &scene.pose)?;
    write_json(&out.join("camera.json"), &config.camera)?;
    Ok(())
}

fn estimate(stack_dir: &Path, out: &Path) -> CliResult {
    let stack = io::read_stack(stack_dir)?;
    let map = estimate_polarisation(&stack);
    fs::create_dir_all(out)?;
    write_scalar_pfm(&out.join("i_un.pfm"), &map.i_un())?;
    write_scalar_pfm(&out.join("dop.pfm"), &map.dop())?;
    write_scalar_pfm(&out.join("aop.pfm"), &map.aop())?;
    write_scalar_pfm(&out.join("residual.pfm"), &map.residual)?;
    write_mask_pfm(&out.join("valid.pfm"), &map.valid)?;
    let camera = stack_dir.join("camera.json");
    if camera.is_file() && stack_dir.canonicalize()? != out.canonicalize()? {
        fs::copy(&camera, out.join("camera.json"))?;
    }
    Ok(())
}

fn normals(polar: &Path, eta: f64, out: &Path, camera: Option<&Path>) -> CliResult {
    let material = Material::new(eta)?;
    let i_un = read_scalar_pfm(&polar.join("i_un.pfm"))?;
    let dop = read_scalar_pfm(&polar.join("dop.pfm"))?;
    let aop = read_scalar_pfm(&polar.join("aop.pfm"))?;
    let valid = read_mask_pfm(&polar.join("valid.pfm"))?;
    if !(i_un.same_shape(&dop) && dop.same_shape(&aop) && aop.same_shape(&valid)) {
        return Err(Failure::Data("polarization maps differ in size".into()));
    }
    let samples = Grid::from_fn(dop.width(), dop.height(), |x, y| PolarSample {
        i_un: *i_un.get(x, y),
        dop: *dop.get(x, y),
        aop: *aop.get(x, y),
    });
    let default_camera = polar.join("camera.json");
    let camera_path = camera
        .map(Path::to_path_buf)
        .or_else(|| default_camera.is_file().then_some(default_camera));
    let camera: Option<Camera> = camera_path.map(|p| read_json(&p)).transpose()?;
    if let Some(c) = &camera {
        if c.width() != dop.width() || c.height() != dop.height() {
            return Err(Failure::Data("camera resolution does not match the maps".into()));
        }
    }
    let n = plausible_normals(&samples, &valid, material, camera.as_ref());
    fs::create_dir_all(out)?;
    write_vector_pfm(&out.join("n_d.pfm"), &n.n_d)?;
    write_vector_pfm(&out.join("n_s1.pfm"), &n.n_s1)?;
    write_vector_pfm(&out.join("n_s2.pfm"), &n.n_s2)?;
    Ok(())
}

fn render(mesh: &Path, pose: &Path, camera: &Path, out: &Path) -> CliResult {
    let mesh = io::load_mesh(mesh)?;
    let pose: Pose = read_json(pose)?;
    let camera: Camera = read_json(camera)?;
    let buffers = rasterize(&mesh, &pose, &camera);
    if buffers.is_empty() {
        return Err(polar6d::Error::EmptyRender.into());
    }
    fs::create_dir_all(out)?;
    write_buffers(out, &buffers)
}

#[allow(clippy::too_many_arguments)]
fn refine_cmd(
    init: &Path,
    obs: &Path,
    mesh: &Path,
    camera: &Path,
    options: Option<&Path>,
    out: &Path,
    eta: f64,
    trace: Option<&Path>,
) -> CliResult {
    let initial: Pose = read_json(init)?;
    let mesh = io::load_mesh(mesh)?;
    let camera: Camera = read_json(camera)?;
    let opts: RefineOptions = match options {
        Some(p) => read_json(p)?,
        None => RefineOptions::default(),
    };
    let observation = Observation {
        rho: read_scalar_pfm(&obs.join("dop.pfm"))?,
        estimate_valid: read_mask_pfm(&obs.join("valid.pfm"))?,
        object_mask: read_mask_pfm(&obs.join("mask.pfm"))?,
    };
    let result = refine(&initial, &observation, &mesh, &camera, Material::new(eta)?, &opts)?;
    write_json(out, &result.pose)?;
    if let Some(path) = trace {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        result.write_trace_csv(&mut f)?;
        f.flush()?;
    }
    let summary = serde_json::json!({
        "status": result.status,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "evaluations": result.evaluations,
    });
    println!("{summary}");
    Ok(())
}

fn eval(gt: &Path, pred: &Path, mesh_path: &Path) -> CliResult {
    let gt: Pose = read_json(gt)?;
    let pred: Pose = read_json(pred)?;
    let mesh = io::load_mesh(mesh_path)?;
    let object =
        mesh_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let threshold = RECALL_FRACTION * mesh.diameter();
    let add = add_metric(&gt, &pred, &mesh);
    let adds = adds_metric(&gt, &pred, &mesh);
    let row = |metric: &str, value: f64| MetricRow {
        object: object.clone(),
        metric: metric.into(),
        value,
        threshold,
    };
    let rows = [
        row("add", add),
        row("adds", adds),
        row("add_recall", add_recall(&[add], mesh.diameter(), RECALL_FRACTION)),
    ];
    io::write_metrics_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}

fn vis(input: &Path, out: &Path, kind: Kind) -> CliResult {
    let pfm = Pfm::read(input)?;
    let image = match (kind, pfm.channels) {
        (Kind::Dop, 1) => dop_to_rgb(&read_scalar_pfm(input)?),
        (Kind::Aop, 1) => aop_to_rgb(&read_scalar_pfm(input)?),
        (Kind::Normal, 3) => normals_to_rgb(&read_vector_pfm(input)?),
        (_, c) => {
            return Err(Failure::Data(format!("{c}-channel map cannot be shown as that kind")));
        }
    };
    write_png(out, &image)?;
    Ok(())
}

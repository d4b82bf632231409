//! Command-line pipeline driver: synth -> register/graph -> solve ->
//! fuse/eval, every stage connected only by files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dsmreg::error::{Error, Result};
use dsmreg::fusion::{error_map, fuse, mean_pairwise_rmse, rmse_tau, MetricConfig, RmseTauReport};
use dsmreg::graph::{assign_weights, build_graph, SceneGraph};
use dsmreg::icp::{dsm_icp, IcpParams};
use dsmreg::io::{load_dsm, write_dsm, RasterFormat};
use dsmreg::motion::{greedy_mst_solve, motion_average, GlobalPoses};
use dsmreg::raster::DsmGrid;
use dsmreg::se3::RigidTransform;
use dsmreg::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "dsmreg",
    version,
    about = "Register, globally align, and fuse overlapping digital surface models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic choice (query sampling, synthesis).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for result files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Log filter: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(Subcommand)]
enum Command {
    /// Register one raster onto another with DSM-ICP; writes the
    /// registration report JSON.
    Register {
        /// Raster to move (ICP estimates its pose in the reference frame).
        moving: PathBuf,
        /// Reference raster.
        reference: PathBuf,
        #[command(flatten)]
        icp: IcpArgs,
    },
    /// Register all overlapping pairs and write the weighted scene graph.
    Graph {
        /// Input rasters (>= 2).
        inputs: Vec<PathBuf>,
        /// Insert an edge when the overlap score exceeds this.
        #[arg(long)]
        overlap_threshold: Option<f64>,
        #[command(flatten)]
        icp: IcpArgs,
    },
    /// Estimate global poses from a scene graph (or build one first).
    Solve {
        /// Input rasters; alternative to --graph.
        inputs: Vec<PathBuf>,
        /// Scene-graph JSON produced by `graph`.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Solver: "average" (motion averaging) or "greedy" (MST baseline).
        #[arg(long)]
        solver: Option<String>,
        /// Vertex whose pose is pinned to the identity.
        #[arg(long)]
        anchor: Option<usize>,
        #[arg(long)]
        overlap_threshold: Option<f64>,
        #[command(flatten)]
        icp: IcpArgs,
    },
    /// Apply poses and fuse the rasters into one DSM (median of
    /// contributors), plus the contributor-count raster.
    Fuse {
        /// Input rasters, in the vertex order of the poses file.
        inputs: Vec<PathBuf>,
        /// Poses JSON from `solve`.
        #[arg(long)]
        poses: PathBuf,
        /// Output grid spacing, meters (default: finest input GSD).
        #[arg(long)]
        target_gsd: Option<f64>,
        /// Output raster format: dsmg or asc.
        #[arg(long, default_value = "dsmg")]
        format: String,
    },
    /// Evaluate registration quality: pairwise RMSE_tau over posed
    /// rasters, or fused-vs-reference RMSE_tau with an optional error map.
    Eval {
        /// Input rasters for the pairwise metric.
        inputs: Vec<PathBuf>,
        /// Poses JSON; identity poses when omitted.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Fused raster to compare against --reference.
        #[arg(long)]
        fused: Option<PathBuf>,
        /// Reference (ground-truth) raster.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Inlier threshold tau, meters.
        #[arg(long)]
        tau: Option<f64>,
        /// Write the signed fused-minus-reference raster here.
        #[arg(long)]
        error_map: Option<PathBuf>,
        /// Run DSM-ICP of fused vs reference before evaluating.
        #[arg(long)]
        align_first: bool,
        #[command(flatten)]
        icp: IcpArgs,
    },
    /// Generate a synthetic scene: fractal terrain, overlapping tiles
    /// with known pose perturbations, and the ground-truth poses JSON.
    Synth {
        /// Master terrain side length, pixels.
        #[arg(long, default_value_t = 257)]
        size: usize,
        /// Ground sampling distance, meters per pixel.
        #[arg(long, default_value_t = 1.0)]
        gsd: f64,
        /// Tile layout, e.g. 3x3.
        #[arg(long, default_value = "3x3")]
        tiles: String,
        /// Overlap fraction between adjacent tiles.
        #[arg(long, default_value_t = 0.25)]
        overlap: f64,
        /// Max per-tile rotation, degrees.
        #[arg(long, default_value_t = 1.0)]
        rot_max_deg: f64,
        /// Max per-tile horizontal shift, pixels.
        #[arg(long, default_value_t = 3.0)]
        shift_max_px: f64,
        /// Max per-tile vertical shift, meters.
        #[arg(long, default_value_t = 3.0)]
        dz_max: f64,
        /// Fraction of tile pixels punched out as nodata.
        #[arg(long, default_value_t = 0.0)]
        nodata_fraction: f64,
        /// Additive Gaussian height noise sigma, meters.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Mean terrain height, meters.
        #[arg(long, default_value_t = 100.0)]
        base_height: f64,
        /// Terrain relief (max minus min), meters.
        #[arg(long, default_value_t = 80.0)]
        relief: f64,
        /// Output raster format: dsmg or asc.
        #[arg(long, default_value = "dsmg")]
        format: String,
    },
}

/// ICP knobs; unset flags fall back to the config file, then defaults.
#[derive(Args, Clone, Copy, Default)]
struct IcpArgs {
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Relative tolerance on the RMS residual change.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Absolute tolerance on the pose increment.
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Fraction of worst residuals trimmed each iteration.
    #[arg(long)]
    trim_fraction: Option<f64>,
    /// Reject correspondences farther than this, meters.
    #[arg(long)]
    correspondence_reject: Option<f64>,
}

/// TOML pipeline configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelineConfig {
    inputs: Vec<PathBuf>,
    overlap_threshold: Option<f64>,
    tau: Option<f64>,
    anchor: Option<usize>,
    solver: Option<String>,
    target_gsd: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    icp: Option<IcpParams>,
}

impl PipelineConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::parse(path, "config".to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.overlap_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidInput("overlap_threshold must be in [0,1]".into()));
            }
        }
        if let Some(tau) = self.tau {
            MetricConfig { tau }.validate()?;
        }
        if let Some(g) = self.target_gsd {
            if !(g > 0.0) {
                return Err(Error::InvalidInput("target_gsd must be > 0".into()));
            }
        }
        if let Some(icp) = &self.icp {
            icp.validate()?;
        }
        if let Some(s) = &self.solver {
            parse_solver(s)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Solver {
    Average,
    Greedy,
}

fn parse_solver(s: &str) -> Result<Solver> {
    match s {
        "average" => Ok(Solver::Average),
        "greedy" => Ok(Solver::Greedy),
        other => Err(Error::InvalidInput(format!(
            "unknown solver {other:?}, expected \"average\" or \"greedy\""
        ))),
    }
}

struct Ctx {
    config: PipelineConfig,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn icp_params(&self, args: &IcpArgs) -> Result<IcpParams> {
        let mut p = self.config.icp.unwrap_or_default();
        p.seed = self.seed;
        if let Some(v) = args.n_queries {
            p.n_queries = v;
        }
        if let Some(v) = args.max_iterations {
            p.max_iterations = v;
        }
        if let Some(v) = args.rel_tol {
            p.rel_tol = v;
        }
        if let Some(v) = args.abs_tol {
            p.abs_tol = v;
        }
        if let Some(v) = args.trim_fraction {
            p.trim_fraction = v;
        }
        if let Some(v) = args.correspondence_reject {
            p.correspondence_reject = v;
        }
        p.validate()?;
        Ok(p)
    }

    fn write_out(&self, name: &str, contents: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn parse_format(s: &str) -> Result<RasterFormat> {
    match s {
        "dsmg" => Ok(RasterFormat::Binary),
        "asc" => Ok(RasterFormat::AsciiGrid),
        other => Err(Error::InvalidInput(format!(
            "unknown format {other:?}, expected \"dsmg\" or \"asc\""
        ))),
    }
}

fn load_inputs(paths: &[PathBuf]) -> Result<Vec<DsmGrid>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| Ok(load_dsm(p, None)?.with_id(i)))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": error_kind(&e), "message": e.to_string() }
            });
            println!("{}", serde_json::to_string_pretty(&payload).unwrap());
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::UnsupportedFormat(_) => "unsupported_format",
        Error::SingularTransform => "singular_transform",
        Error::OutOfBounds { .. } => "out_of_bounds",
        Error::NoOverlap => "no_overlap",
        Error::AllNodata => "all_nodata",
        Error::NoValidPixels => "no_valid_pixels",
        Error::DegenerateGeometry => "degenerate_geometry",
        Error::DegenerateMatrix => "degenerate_matrix",
        Error::TooFewCorrespondences(_) => "too_few_correspondences",
        Error::NotEnoughDsms(_) => "not_enough_dsms",
        Error::DisconnectedGraph(_) => "disconnected_graph",
        Error::NumericalFailure(_) => "numerical_failure",
        Error::EmptyResult => "empty_result",
        Error::NoInliers => "no_inliers",
        Error::NoOverlappingPairs => "no_overlapping_pairs",
        Error::InvalidInput(_) => "invalid_input",
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Ctx { config, out, seed };

    match cli.command {
        Command::Register {
            moving,
            reference,
            icp,
        } => cmd_register(&ctx, &moving, &reference, &icp),
        Command::Graph {
            inputs,
            overlap_threshold,
            icp,
        } => cmd_graph(&ctx, &inputs, overlap_threshold, &icp).map(|_| ()),
        Command::Solve {
            inputs,
            graph,
            solver,
            anchor,
            overlap_threshold,
            icp,
        } => cmd_solve(&ctx, &inputs, graph, solver, anchor, overlap_threshold, &icp),
        Command::Fuse {
            inputs,
            poses,
            target_gsd,
            format,
        } => cmd_fuse(&ctx, &inputs, &poses, target_gsd, &format),
        Command::Eval {
            inputs,
            poses,
            fused,
            reference,
            tau,
            error_map,
            align_first,
            icp,
        } => cmd_eval(
            &ctx, &inputs, poses, fused, reference, tau, error_map, align_first, &icp,
        ),
        Command::Synth {
            size,
            gsd,
            tiles,
            overlap,
            rot_max_deg,
            shift_max_px,
            dz_max,
            nodata_fraction,
            noise_sigma,
            base_height,
            relief,
            format,
        } => cmd_synth(
            &ctx,
            SynthArgsParsed {
                size,
                gsd,
                tiles,
                overlap,
                rot_max_deg,
                shift_max_px,
                dz_max,
                nodata_fraction,
                noise_sigma,
                base_height,
                relief,
                format,
            },
        ),
    }
}

fn cmd_register(ctx: &Ctx, moving: &Path, reference: &Path, icp: &IcpArgs) -> Result<()> {
    let params = ctx.icp_params(icp)?;
    let moving_grid = load_dsm(moving, None)?;
    let reference_grid = load_dsm(reference, None)?;
    let report = dsm_icp(
        &moving_grid,
        &reference_grid,
        &params,
        &RigidTransform::identity(),
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))?;
    println!("{json}");
    let path = ctx.write_out("register_report.json", &json)?;
    log::info!(
        "registered {} -> {}: err {:.4} m after {} iterations ({})",
        moving.display(),
        reference.display(),
        report.err,
        report.iterations,
        path.display()
    );
    Ok(())
}

fn cmd_graph(
    ctx: &Ctx,
    inputs: &[PathBuf],
    overlap_threshold: Option<f64>,
    icp: &IcpArgs,
) -> Result<SceneGraph> {
    let inputs = if inputs.is_empty() {
        ctx.config.inputs.clone()
    } else {
        inputs.to_vec()
    };
    let params = ctx.icp_params(icp)?;
    let threshold = overlap_threshold
        .or(ctx.config.overlap_threshold)
        .unwrap_or(0.05);
    let grids = load_inputs(&inputs)?;
    let graph = assign_weights(build_graph(&grids, threshold, &params)?);
    let json = graph.to_json()?;
    let path = ctx.write_out("graph.json", &json)?;
    log::info!(
        "scene graph: {} vertices, {} edges ({})",
        graph.vertices.len(),
        graph.edges.len(),
        path.display()
    );
    Ok(graph)
}

fn cmd_solve(
    ctx: &Ctx,
    inputs: &[PathBuf],
    graph_path: Option<PathBuf>,
    solver: Option<String>,
    anchor: Option<usize>,
    overlap_threshold: Option<f64>,
    icp: &IcpArgs,
) -> Result<()> {
    let graph = match graph_path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            SceneGraph::from_json(&text)?
        }
        None => cmd_graph(ctx, inputs, overlap_threshold, icp)?,
    };
    let solver = parse_solver(
        solver
            .or_else(|| ctx.config.solver.clone())
            .as_deref()
            .unwrap_or("average"),
    )?;
    let anchor = anchor.or(ctx.config.anchor).unwrap_or(0);
    let poses = match solver {
        Solver::Average => motion_average(&graph, anchor)?,
        Solver::Greedy => greedy_mst_solve(&graph, anchor)?,
    };
    let json = poses.to_json()?;
    println!("{json}");
    let path = ctx.write_out("poses.json", &json)?;
    log::info!(
        "solved {} poses, objective {:.6e} ({})",
        poses.poses.len(),
        poses.objective.unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn load_poses_for(inputs: &[DsmGrid], path: &Path) -> Result<Vec<RigidTransform>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let poses = GlobalPoses::from_json(&text)?;
    if poses.poses.len() != inputs.len() {
        return Err(Error::InvalidInput(format!(
            "poses file has {} entries for {} rasters",
            poses.poses.len(),
            inputs.len()
        )));
    }
    Ok(poses.poses)
}

fn cmd_fuse(
    ctx: &Ctx,
    inputs: &[PathBuf],
    poses_path: &Path,
    target_gsd: Option<f64>,
    format: &str,
) -> Result<()> {
    let format = parse_format(format)?;
    let inputs = if inputs.is_empty() {
        ctx.config.inputs.clone()
    } else {
        inputs.to_vec()
    };
    let grids = load_inputs(&inputs)?;
    let poses = load_poses_for(&grids, poses_path)?;
    let gsd = target_gsd.or(ctx.config.target_gsd).unwrap_or_else(|| {
        grids
            .iter()
            .map(|g| g.geotransform().min_abs_scale())
            .fold(f64::INFINITY, f64::min)
    });
    let fused = fuse(&grids, &poses, gsd)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    let ext = if format == RasterFormat::Binary { "dsmg" } else { "asc" };
    let fused_path = ctx.out.join(format!("fused.{ext}"));
    let count_path = ctx.out.join(format!("contributors.{ext}"));
    write_dsm(&fused.grid, &fused_path, format)?;
    write_dsm(&fused.contributors, &count_path, format)?;
    log::info!(
        "fused {} rasters at {gsd} m -> {}",
        grids.len(),
        fused_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inlier_ratio: Option<f64>,
    n_pairs_excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_pairwise_rmse_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    align_transform: Option<RigidTransform>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    ctx: &Ctx,
    inputs: &[PathBuf],
    poses: Option<PathBuf>,
    fused: Option<PathBuf>,
    reference: Option<PathBuf>,
    tau: Option<f64>,
    error_map_path: Option<PathBuf>,
    align_first: bool,
    icp: &IcpArgs,
) -> Result<()> {
    let cfg = MetricConfig {
        tau: tau.or(ctx.config.tau).unwrap_or(10.0),
    };
    cfg.validate()?;
    let inputs = if inputs.is_empty() {
        ctx.config.inputs.clone()
    } else {
        inputs.to_vec()
    };

    let mut out = EvalOutput {
        rmse_tau: None,
        inlier_ratio: None,
        n_pairs_excluded: 0,
        mean_pairwise_rmse_tau: None,
        n_pairs: None,
        align_transform: None,
    };

    match (&fused, &reference) {
        (Some(f), Some(r)) => {
            let mut fused_grid = load_dsm(f, None)?;
            let reference_grid = load_dsm(r, None)?;
            if align_first {
                let params = ctx.icp_params(icp)?;
                let report = dsm_icp(
                    &fused_grid,
                    &reference_grid,
                    &params,
                    &RigidTransform::identity(),
                )?;
                let gt = *fused_grid.geotransform();
                let (w, h) = (fused_grid.width(), fused_grid.height());
                fused_grid = dsmreg::fusion::apply_pose(&fused_grid, &report.transform, &gt, w, h)?;
                out.align_transform = Some(report.transform);
            }
            let summary: RmseTauReport = if let Some(map_path) = &error_map_path {
                let (map, summary) = error_map(&fused_grid, &reference_grid, &cfg)?;
                let fmt = RasterFormat::from_extension(map_path).unwrap_or(RasterFormat::Binary);
                write_dsm(&map, map_path, fmt)?;
                summary
            } else {
                rmse_tau(&fused_grid, &reference_grid, &cfg)?
            };
            out.rmse_tau = Some(summary.rmse_tau);
            out.inlier_ratio = Some(summary.inlier_ratio);
        }
        (None, None) if inputs.len() == 2 && poses.is_none() => {
            let grids = load_inputs(&inputs)?;
            let summary = rmse_tau(&grids[0], &grids[1], &cfg)?;
            out.rmse_tau = Some(summary.rmse_tau);
            out.inlier_ratio = Some(summary.inlier_ratio);
        }
        (None, None) => {}
        _ => {
            return Err(Error::InvalidInput(
                "--fused and --reference must be given together".into(),
            ))
        }
    }

    if let Some(poses_path) = &poses {
        let grids = load_inputs(&inputs)?;
        let pose_list = load_poses_for(&grids, poses_path)?;
        let report = mean_pairwise_rmse(&grids, &pose_list, &cfg)?;
        out.mean_pairwise_rmse_tau = Some(report.mean_rmse_tau);
        out.n_pairs = Some(report.n_pairs);
        out.n_pairs_excluded = report.n_pairs_excluded;
    }

    if out.rmse_tau.is_none() && out.mean_pairwise_rmse_tau.is_none() {
        return Err(Error::InvalidInput(
            "nothing to evaluate: give two rasters, --poses, or --fused/--reference".into(),
        ));
    }

    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::InvalidInput(format!("metrics serialization: {e}")))?;
    println!("{json}");
    ctx.write_out("metrics.json", &json)?;
    Ok(())
}

struct SynthArgsParsed {
    size: usize,
    gsd: f64,
    tiles: String,
    overlap: f64,
    rot_max_deg: f64,
    shift_max_px: f64,
    dz_max: f64,
    nodata_fraction: f64,
    noise_sigma: f64,
    base_height: f64,
    relief: f64,
    format: String,
}

fn cmd_synth(ctx: &Ctx, args: SynthArgsParsed) -> Result<()> {
    let format = parse_format(&args.format)?;
    let (rows, cols) = parse_tiles(&args.tiles)?;
    let spec = SynthSpec {
        seed: ctx.seed,
        terrain_size: args.size,
        gsd: args.gsd,
        tile_rows: rows,
        tile_cols: cols,
        overlap: args.overlap,
        rot_max_deg: args.rot_max_deg,
        shift_max_px: args.shift_max_px,
        dz_max: args.dz_max,
        nodata_fraction: args.nodata_fraction,
        noise_sigma: args.noise_sigma,
        base_height: args.base_height,
        relief: args.relief,
    };
    let scene = generate(&spec)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    let ext = if format == RasterFormat::Binary { "dsmg" } else { "asc" };
    write_dsm(&scene.terrain, &ctx.out.join(format!("terrain.{ext}")), format)?;
    for (i, tile) in scene.tiles.iter().enumerate() {
        write_dsm(tile, &ctx.out.join(format!("tile_{i:03}.{ext}")), format)?;
    }
    ctx.write_out("truth.json", &scene.truth.to_json()?)?;
    log::info!(
        "synthesized {} tiles of {}x{} terrain into {}",
        scene.tiles.len(),
        args.size,
        args.size,
        ctx.out.display()
    );
    Ok(())
}

fn parse_tiles(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "tile layout must look like 3x3, got {s:?}"
        )));
    }
    let rows = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad tile rows in {s:?}")))?;
    let cols = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad tile cols in {s:?}")))?;
    Ok((rows, cols))
}

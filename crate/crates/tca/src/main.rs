//! Thin command-line front end. All functionality lives in the library;
//! this binary parses flags (optionally merged over a JSON config file,
//! flags winning), dispatches, and maps errors to exit codes:
//! 0 ok, 2 configuration problems, 3 file format and I/O problems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use tca::backbone::{init_weights, load_weights, save_weights, GridSpec, StageModel};
use tca::harness::{
    run_stream, run_sweep, summarize, write_frames_csv, write_sweep_outputs, Method, Motion,
    Pattern, RunOptions, StreamConfig, SweepOptions, SyntheticStream,
};
use tca::temporal::{RefineMode, Similarity, TcaConfig};
use tca::{Result, TcaError};

#[derive(Parser)]
#[command(
    name = "tca",
    version,
    about = "Windowed-attention inference with temporal token clustering"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration over a synthetic stream and write frames.csv.
    Run(RunArgs),
    /// Sweep (alpha, cluster side, method) combinations; write sweep.csv/json.
    Sweep(SweepArgs),
    /// Generate a deterministic seeded weight file.
    GenWeights(GenWeightsArgs),
}

/// Flags shared by `run` and `sweep`. Every field mirrors a key of the JSON
/// config file; explicit flags override file values.
#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// JSON config file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Clustering block for non-keyframes.
    #[arg(long)]
    alpha: Option<usize>,
    /// Reference capture happens at alpha + beta.
    #[arg(long)]
    beta: Option<usize>,
    /// Keyframe interval.
    #[arg(long = "fmax")]
    fmax: Option<usize>,
    /// Refinement switch: rbs when alpha <= d, cga otherwise.
    #[arg(long = "d")]
    d: Option<usize>,
    /// Refinement rule: auto|cga|rbs|acr.
    #[arg(long)]
    refine: Option<String>,
    /// Matching metric: l2|cosine|dot.
    #[arg(long)]
    similarity: Option<String>,
    /// Lloyd rounds per clustering call.
    #[arg(long)]
    iters: Option<usize>,

    /// Token grid as HxW, e.g. 48x48.
    #[arg(long)]
    grid: Option<String>,
    /// Window side in tokens.
    #[arg(long)]
    window: Option<usize>,
    /// Token channels.
    #[arg(long)]
    channels: Option<usize>,
    /// Attention blocks in the stage.
    #[arg(long)]
    blocks: Option<usize>,
    /// Attention heads per block.
    #[arg(long)]
    heads: Option<usize>,

    /// Stream length in frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Stream and weight seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Motion model: static | drift:DX,DY | bounce.
    #[arg(long)]
    motion: Option<String>,
    /// Pattern: blobs:COUNT,RADIUS | stripes:PERIOD.
    #[arg(long)]
    pattern: Option<String>,
    /// Feature noise level.
    #[arg(long)]
    noise_sigma: Option<f64>,

    /// Weight file; omitted means seeded in-memory initialization.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Timing repetitions per frame (median reported).
    #[arg(long)]
    runs: Option<usize>,
    /// Leading frames excluded from aggregates.
    #[arg(long)]
    warmup: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cluster side per window (clusters = side^2).
    #[arg(long)]
    clusters: Option<usize>,
    /// Pipeline: baseline|cluster|tca.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Alphas to sweep: a range like 0..10 (inclusive) or a comma list.
    #[arg(long)]
    alphas: Option<String>,
    /// Cluster sides to sweep, comma separated.
    #[arg(long)]
    clusters: Option<String>,
    /// Methods to sweep, comma separated from baseline|cluster|tca.
    #[arg(long)]
    methods: Option<String>,
    /// Also write pareto.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct GenWeightsArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the weight file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
}

/// JSON mirror of the flags. Unknown keys are rejected to catch typos.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha: Option<usize>,
    beta: Option<usize>,
    fmax: Option<usize>,
    d: Option<usize>,
    clusters: Option<serde_json::Value>,
    refine: Option<String>,
    similarity: Option<String>,
    iters: Option<usize>,
    method: Option<String>,
    methods: Option<String>,
    alphas: Option<String>,
    grid: Option<String>,
    window: Option<usize>,
    channels: Option<usize>,
    blocks: Option<usize>,
    heads: Option<usize>,
    frames: Option<usize>,
    seed: Option<u64>,
    motion: Option<String>,
    pattern: Option<String>,
    noise_sigma: Option<f64>,
    weights: Option<PathBuf>,
    out: Option<PathBuf>,
    runs: Option<usize>,
    warmup: Option<usize>,
    svg: Option<bool>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| TcaError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| TcaError::Config(format!("config file {}: {e}", p.display())))
        }
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| TcaError::Config(format!("grid '{s}' is not HxW")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| TcaError::Config(format!("grid '{s}' is not HxW")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn parse_motion(s: &str) -> Result<Motion> {
    if s == "static" {
        return Ok(Motion::Static);
    }
    if s == "bounce" {
        return Ok(Motion::Bounce);
    }
    if let Some(rest) = s.strip_prefix("drift:") {
        let (dx, dy) = rest
            .split_once(',')
            .ok_or_else(|| TcaError::Config(format!("motion '{s}' is not drift:DX,DY")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<i64>()
                .map_err(|_| TcaError::Config(format!("motion '{s}' is not drift:DX,DY")))
        };
        return Ok(Motion::Drift {
            dx: parse(dx)?,
            dy: parse(dy)?,
        });
    }
    Err(TcaError::Config(format!(
        "unknown motion '{s}' (static | drift:DX,DY | bounce)"
    )))
}

fn parse_pattern(s: &str) -> Result<Pattern> {
    if let Some(rest) = s.strip_prefix("blobs:") {
        let (count, radius) = rest
            .split_once(',')
            .ok_or_else(|| TcaError::Config(format!("pattern '{s}' is not blobs:COUNT,RADIUS")))?;
        return Ok(Pattern::Blobs {
            count: count.trim().parse().map_err(|_| {
                TcaError::Config(format!("pattern '{s}' has a bad blob count"))
            })?,
            radius: radius.trim().parse().map_err(|_| {
                TcaError::Config(format!("pattern '{s}' has a bad radius"))
            })?,
        });
    }
    if let Some(rest) = s.strip_prefix("stripes:") {
        return Ok(Pattern::Stripes {
            period: rest.trim().parse().map_err(|_| {
                TcaError::Config(format!("pattern '{s}' has a bad period"))
            })?,
        });
    }
    Err(TcaError::Config(format!(
        "unknown pattern '{s}' (blobs:COUNT,RADIUS | stripes:PERIOD)"
    )))
}

/// Ranges are inclusive: `0..10` covers eleven values. Comma lists work too.
fn parse_index_list(s: &str) -> Result<Vec<usize>> {
    let bad = || TcaError::Config(format!("'{s}' is not a range like 0..10 or a comma list"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

/// Everything `run` and `sweep` share, resolved from flags, file, defaults.
struct Resolved {
    model: StageModel,
    stream_cfg: StreamConfig,
    tca_cfg: TcaConfig,
    out: PathBuf,
    runs: usize,
    warmup: usize,
}

fn resolve_common(args: &CommonArgs, file: &FileConfig, cluster_side: usize) -> Result<Resolved> {
    let grid = args.grid.clone().or_else(|| file.grid.clone());
    let (height, width) = match grid {
        Some(g) => parse_grid(&g)?,
        None => (48, 48),
    };
    let window = args.window.or(file.window).unwrap_or(12);
    let channels = args.channels.or(file.channels).unwrap_or(64);
    let blocks = args.blocks.or(file.blocks).unwrap_or(12);
    let heads = args.heads.or(file.heads).unwrap_or(4);
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let weights = args.weights.clone().or_else(|| file.weights.clone());
    let model = match weights {
        Some(path) => load_weights(&path)?,
        None => {
            let spec = GridSpec::new(height, width, window, channels)?;
            init_weights(seed, &spec, blocks, heads)?
        }
    };

    let motion = match args.motion.clone().or_else(|| file.motion.clone()) {
        Some(m) => parse_motion(&m)?,
        None => Motion::Drift { dx: 1, dy: 1 },
    };
    let pattern = match args.pattern.clone().or_else(|| file.pattern.clone()) {
        Some(p) => parse_pattern(&p)?,
        None => Pattern::Blobs {
            count: 6,
            radius: model.spec.height_tokens as f64 / 6.0,
        },
    };
    let stream_cfg = StreamConfig {
        spec: model.spec,
        frames: args.frames.or(file.frames).unwrap_or(24),
        motion,
        pattern,
        noise_sigma: args.noise_sigma.or(file.noise_sigma).unwrap_or(0.05),
        seed,
    };

    let refine = match args.refine.clone().or_else(|| file.refine.clone()) {
        Some(r) => RefineMode::parse(&r)?,
        None => RefineMode::Auto,
    };
    let similarity = match args.similarity.clone().or_else(|| file.similarity.clone()) {
        Some(s) => Similarity::parse(&s)?,
        None => Similarity::L2,
    };
    let tca_cfg = TcaConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(0),
        beta: args.beta.or(file.beta).unwrap_or(6),
        f_max: args.fmax.or(file.fmax).unwrap_or(6),
        d: args.d.or(file.d).unwrap_or(2),
        cluster_side,
        refine_mode: refine,
        similarity,
        cluster_iters: args.iters.or(file.iters).unwrap_or(5),
    };

    Ok(Resolved {
        model,
        stream_cfg,
        tca_cfg,
        out: args
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        runs: args.runs.or(file.runs).unwrap_or(1),
        warmup: args.warmup.or(file.warmup).unwrap_or(3),
    })
}

fn file_cluster_side(file: &FileConfig) -> Result<Option<usize>> {
    match &file.clusters {
        None => Ok(None),
        Some(serde_json::Value::Number(n)) => n
            .as_u64()
            .map(|v| Some(v as usize))
            .ok_or_else(|| TcaError::Config("clusters in config must be a positive integer".into())),
        Some(other) => Err(TcaError::Config(format!(
            "clusters in config must be an integer for run, got {other}"
        ))),
    }
}

fn file_cluster_list(file: &FileConfig) -> Result<Option<String>> {
    match &file.clusters {
        None => Ok(None),
        Some(serde_json::Value::Number(n)) => Ok(Some(n.to_string())),
        Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(TcaError::Config(format!(
            "clusters in config must be a number or comma string, got {other}"
        ))),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let side = match args.clusters.or(file_cluster_side(&file)?) {
        Some(s) => s,
        None => 6,
    };
    let resolved = resolve_common(&args.common, &file, side)?;
    let method = match args.method.clone().or_else(|| file.method.clone()) {
        Some(m) => Method::parse(&m)?,
        None => Method::ClusterTca,
    };

    let stream = SyntheticStream::new(resolved.stream_cfg)?;
    let mut opts = RunOptions::new(method);
    opts.runs = resolved.runs;
    let reports = run_stream(&resolved.model, &stream, &resolved.tca_cfg, &opts)?;

    std::fs::create_dir_all(&resolved.out).map_err(|e| TcaError::Io {
        path: resolved.out.clone(),
        source: e,
    })?;
    let csv_path = resolved.out.join("frames.csv");
    write_frames_csv(&csv_path, &reports)?;

    let agg = summarize(&reports, resolved.warmup.min(reports.len().saturating_sub(1)))?;
    println!(
        "{} frames ({} aggregated), method {}, alpha {}, clusters {}x{}",
        reports.len(),
        agg.frames,
        method.name(),
        resolved.tca_cfg.alpha,
        resolved.tca_cfg.cluster_side,
        resolved.tca_cfg.cluster_side,
    );
    println!(
        "mean: {:.2} MFLOP/frame, {:.1} FPS, fidelity {:.4}, mask agreement {:.4}",
        agg.flops_analytic_mean / 1e6,
        agg.fps_mean,
        agg.fidelity_mean,
        agg.miou_mean
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file = load_file_config(args.common.config.as_deref())?;
    let resolved = resolve_common(&args.common, &file, 6)?;

    let alphas = parse_index_list(
        &args
            .alphas
            .clone()
            .or_else(|| file.alphas.clone())
            .unwrap_or_else(|| "0..10".into()),
    )?;
    let sides = parse_index_list(
        &args
            .clusters
            .clone()
            .or(file_cluster_list(&file)?)
            .unwrap_or_else(|| "2,4,5,6,7,8".into()),
    )?;
    let methods = args
        .methods
        .clone()
        .or_else(|| file.methods.clone())
        .unwrap_or_else(|| "cluster,tca".into())
        .split(',')
        .map(|m| Method::parse(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    let svg = args.svg || file.svg.unwrap_or(false);

    let opts = SweepOptions {
        alphas,
        cluster_sides: sides,
        methods,
        runs: resolved.runs,
        warmup: resolved.warmup,
    };
    let result = run_sweep(&resolved.model, &resolved.stream_cfg, &resolved.tca_cfg, &opts)?;
    write_sweep_outputs(&result, &resolved.out, svg)?;

    let front = result.pareto_front();
    println!(
        "{} configurations, {} on the (mask agreement, FPS) frontier",
        result.rows.len(),
        front.len()
    );
    for &i in &front {
        let r = &result.rows[i];
        println!(
            "  {} side {} alpha {}: {:.1} FPS, mask agreement {:.4}",
            r.method, r.cluster_side, r.alpha, r.fps_mean, r.miou_mean
        );
    }
    println!("wrote {}", resolved.out.join("sweep.csv").display());
    Ok(())
}

fn cmd_gen_weights(args: GenWeightsArgs) -> Result<()> {
    let (height, width) = match args.grid {
        Some(g) => parse_grid(&g)?,
        None => (48, 48),
    };
    let spec = GridSpec::new(
        height,
        width,
        args.window.unwrap_or(12),
        args.channels.unwrap_or(64),
    )?;
    let model = init_weights(
        args.seed.unwrap_or(0),
        &spec,
        args.blocks.unwrap_or(12),
        args.heads.unwrap_or(4),
    )?;
    save_weights(&model, &args.out)?;
    println!(
        "wrote {} ({} blocks, {}x{} grid, {} channels)",
        args.out.display(),
        model.block_count(),
        height,
        width,
        spec.channels
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::GenWeights(args) => cmd_gen_weights(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Configuration sweeps over (clustering location, cluster size, method).
//!
//! Each configuration runs the full stream and contributes one aggregate
//! row. The reference offset is clamped per clustering location so the
//! capture block `alpha + beta` stays inside the model; the clamped value
//! is recorded in the row. Output files use frozen schemas so downstream
//! parsing stays stable:
//!
//! `sweep.csv` columns:
//! `method,cluster_side,alpha,beta,f_max,d,refine,frames,
//!  flops_analytic_mean,flops_counted_mean,wall_ns_mean,fps_mean,
//!  fidelity_mean,miou_mean`
//!
//! `sweep.json` mirrors the same rows. Identical seeds and configurations
//! reproduce every column except the wall-clock-derived ones.

use std::path::Path;

use super::report::{run_stream, summarize, RunOptions};
use super::stream::{StreamConfig, SyntheticStream};
use super::Method;
use crate::backbone::StageModel;
use crate::error::{Result, TcaError};
use crate::temporal::{select_refinement, TcaConfig};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub method: String,
    pub cluster_side: usize,
    pub alpha: usize,
    pub beta: usize,
    pub f_max: usize,
    pub d: usize,
    pub refine: String,
    pub frames: usize,
    pub flops_analytic_mean: f64,
    pub flops_counted_mean: f64,
    pub wall_ns_mean: f64,
    pub fps_mean: f64,
    pub fidelity_mean: f64,
    pub miou_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Indices of rows not dominated in (miou_mean, fps_mean): no other row
    /// is at least as good on both axes and strictly better on one.
    pub fn pareto_front(&self) -> Vec<usize> {
        pareto_front_by(&self.rows, |r| (r.miou_mean, r.fps_mean))
    }
}

pub fn pareto_front_by<T>(rows: &[T], key: impl Fn(&T) -> (f64, f64)) -> Vec<usize> {
    let mut front = Vec::new();
    'candidates: for (i, row) in rows.iter().enumerate() {
        let (mi, fi) = key(row);
        for (j, other) in rows.iter().enumerate() {
            if i == j {
                continue;
            }
            let (mj, fj) = key(other);
            if mj >= mi && fj >= fi && (mj > mi || fj > fi) {
                continue 'candidates;
            }
        }
        front.push(i);
    }
    front
}

/// Sweep controls beyond the base configuration.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub alphas: Vec<usize>,
    pub cluster_sides: Vec<usize>,
    pub methods: Vec<Method>,
    /// Timing repetitions per frame.
    pub runs: usize,
    /// Leading frames excluded from aggregates.
    pub warmup: usize,
}

/// Run the cross product and return one row per configuration. Methods that
/// ignore the sweep axes (the baseline) contribute a single row.
pub fn run_sweep(
    model: &StageModel,
    stream_cfg: &StreamConfig,
    base: &TcaConfig,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if opts.alphas.is_empty() {
        return Err(TcaError::Config("sweep needs at least one alpha".into()));
    }
    if opts.cluster_sides.is_empty() {
        return Err(TcaError::Config(
            "sweep needs at least one cluster side".into(),
        ));
    }
    if opts.methods.is_empty() {
        return Err(TcaError::Config("sweep needs at least one method".into()));
    }
    let blocks = model.block_count();
    let mut rows = Vec::new();
    for &method in &opts.methods {
        if method == Method::Baseline {
            let cfg = TcaConfig {
                alpha: 0,
                beta: 0,
                cluster_side: model.spec.window_side,
                ..*base
            };
            rows.push(run_one(model, stream_cfg, &cfg, method, opts)?);
            continue;
        }
        for &alpha in &opts.alphas {
            if alpha >= blocks {
                return Err(TcaError::Config(format!(
                    "alpha {alpha} is beyond the model's {blocks} blocks"
                )));
            }
            // Keep the capture block inside the model.
            let beta = base.beta.min(blocks - 1 - alpha);
            for &side in &opts.cluster_sides {
                let cfg = TcaConfig {
                    alpha,
                    beta,
                    cluster_side: side,
                    ..*base
                };
                rows.push(run_one(model, stream_cfg, &cfg, method, opts)?);
            }
        }
    }
    Ok(SweepResult { rows })
}

fn run_one(
    model: &StageModel,
    stream_cfg: &StreamConfig,
    cfg: &TcaConfig,
    method: Method,
    opts: &SweepOptions,
) -> Result<SweepRow> {
    let stream = SyntheticStream::new(*stream_cfg)?;
    let mut run_opts = RunOptions::new(method);
    run_opts.runs = opts.runs;
    let reports = run_stream(model, &stream, cfg, &run_opts)?;
    let agg = summarize(&reports, opts.warmup)?;
    let refine = match method {
        Method::ClusterTca => select_refinement(cfg).name().to_string(),
        _ => "none".to_string(),
    };
    Ok(SweepRow {
        method: method.name().to_string(),
        cluster_side: cfg.cluster_side,
        alpha: cfg.alpha,
        beta: cfg.beta,
        f_max: cfg.f_max,
        d: cfg.d,
        refine,
        frames: agg.frames,
        flops_analytic_mean: agg.flops_analytic_mean,
        flops_counted_mean: agg.flops_counted_mean,
        wall_ns_mean: agg.wall_ns_mean,
        fps_mean: agg.fps_mean,
        fidelity_mean: agg.fidelity_mean,
        miou_mean: agg.miou_mean,
    })
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "method,cluster_side,alpha,beta,f_max,d,refine,frames,flops_analytic_mean,flops_counted_mean,wall_ns_mean,fps_mean,fidelity_mean,miou_mean\n",
    );
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.6},{:.9},{:.9}\n",
            r.method,
            r.cluster_side,
            r.alpha,
            r.beta,
            r.f_max,
            r.d,
            r.refine,
            r.frames,
            r.flops_analytic_mean,
            r.flops_counted_mean,
            r.wall_ns_mean,
            r.fps_mean,
            r.fidelity_mean,
            r.miou_mean
        ));
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| TcaError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Write sweep.csv, sweep.json and optionally pareto.svg into `out_dir`.
pub fn write_sweep_outputs(result: &SweepResult, out_dir: &Path, svg: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| TcaError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    write(&out_dir.join("sweep.csv"), &sweep_csv(result))?;
    let json = serde_json::to_string_pretty(&result.rows)
        .map_err(|e| TcaError::Config(format!("json encoding failed: {e}")))?;
    write(&out_dir.join("sweep.json"), &json)?;
    if svg {
        write(&out_dir.join("pareto.svg"), &pareto_svg(result))?;
    }
    Ok(())
}

/// Scatter of (mean FPS, mean mask agreement) with the Pareto frontier
/// joined by a line.
pub fn pareto_svg(result: &SweepResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 56.0;
    let rows = &result.rows;
    let (mut fps_lo, mut fps_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut miou_lo, mut miou_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        fps_lo = fps_lo.min(r.fps_mean);
        fps_hi = fps_hi.max(r.fps_mean);
        miou_lo = miou_lo.min(r.miou_mean);
        miou_hi = miou_hi.max(r.miou_mean);
    }
    if rows.is_empty() || !fps_lo.is_finite() {
        (fps_lo, fps_hi, miou_lo, miou_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if fps_hi - fps_lo < 1e-12 {
        fps_hi = fps_lo + 1.0;
    }
    if miou_hi - miou_lo < 1e-12 {
        miou_hi = miou_lo + 1.0;
    }
    let x = |fps: f64| MARGIN + (fps - fps_lo) / (fps_hi - fps_lo) * (W - 2.0 * MARGIN);
    let y = |miou: f64| H - MARGIN - (miou - miou_lo) / (miou_hi - miou_lo) * (H - 2.0 * MARGIN);
    let color = |method: &str| match method {
        "baseline" => "#888888",
        "cluster" => "#e08020",
        _ => "#2060c0",
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">mean FPS</text>\n",
        W / 2.0,
        H - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean mask agreement</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (v, label_x, label_y, anchor) in [
        (fps_lo, x(fps_lo), H - MARGIN + 18.0, "middle"),
        (fps_hi, x(fps_hi), H - MARGIN + 18.0, "middle"),
    ] {
        svg.push_str(&format!(
            "<text x=\"{label_x:.1}\" y=\"{label_y:.1}\" font-size=\"11\" text-anchor=\"{anchor}\">{v:.2}</text>\n"
        ));
    }
    for v in [miou_lo, miou_hi] {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN - 6.0,
            y(v) + 4.0
        ));
    }

    // Frontier line under the points.
    let mut front = result.pareto_front();
    front.sort_by(|&a, &b| {
        rows[a]
            .fps_mean
            .partial_cmp(&rows[b].fps_mean)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if front.len() > 1 {
        let pts: Vec<String> = front
            .iter()
            .map(|&i| format!("{:.1},{:.1}", x(rows[i].fps_mean), y(rows[i].miou_mean)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#20a060\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
    }
    for (i, r) in rows.iter().enumerate() {
        let on_front = front.contains(&i);
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{}\" fill=\"{}\" stroke=\"{}\"/>\n",
            x(r.fps_mean),
            y(r.miou_mean),
            if on_front { 5.0 } else { 3.5 },
            color(&r.method),
            if on_front { "#20a060" } else { "none" },
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

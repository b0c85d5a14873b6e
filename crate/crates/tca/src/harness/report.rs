//! Per-frame execution and measurement.
//!
//! `run_stream` drives one configuration over a synthetic stream frame by
//! frame (online, batch one). The configured pipeline is timed around the
//! stage forward only; the uncompressed baseline of the same frame is then
//! computed outside the timed region to score fidelity and mask agreement.
//! The instrumented multiply-add counter is read around the timed pass and
//! reported next to the closed-form count — the two must always agree.

use std::time::Instant;

use super::cost::flops_stage;
use super::metrics::{fidelity, mask_agreement, DEFAULT_PROBE_CLASSES, DEFAULT_PROBE_SEED};
use super::stream::SyntheticStream;
use super::Method;
use crate::backbone::{stage_forward, NoHooks, StageModel};
use crate::clustering::ClusterHooks;
use crate::error::{Result, TcaError};
use crate::numerics::flops;
use crate::temporal::{process_frame, StreamState, TcaConfig};

/// Measurements for one processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame_idx: usize,
    pub is_keyframe: bool,
    pub flops_analytic: u64,
    pub flops_counted: u64,
    pub wall_ns: u64,
    pub fidelity_cos: f64,
    pub mask_agreement_miou: f64,
}

/// Knobs for [`run_stream`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub method: Method,
    /// Timing repetitions per frame; the median wall time is reported.
    pub runs: usize,
    pub probe_seed: u64,
    pub probe_classes: usize,
}

impl RunOptions {
    pub fn new(method: Method) -> Self {
        RunOptions {
            method,
            runs: 1,
            probe_seed: DEFAULT_PROBE_SEED,
            probe_classes: DEFAULT_PROBE_CLASSES,
        }
    }
}

/// Run `method` over every frame of the stream and report per-frame
/// metrics. Deterministic apart from the wall-clock column.
pub fn run_stream(
    model: &StageModel,
    stream: &SyntheticStream,
    cfg: &TcaConfig,
    opts: &RunOptions,
) -> Result<Vec<FrameReport>> {
    if opts.runs == 0 {
        return Err(TcaError::Config("runs must be at least 1".into()));
    }
    let identity = cfg.clusters() == model.spec.tokens_per_window();
    let mut state = match opts.method {
        Method::ClusterTca => Some(StreamState::new(*cfg, model)?),
        Method::ClusterOnly => {
            cfg.validate(&model.spec, model.block_count())?;
            None
        }
        Method::Baseline => None,
    };

    let mut reports = Vec::with_capacity(stream.cfg.frames);
    for t in 0..stream.cfg.frames {
        let (frame, _labels) = stream.frame(t);
        let is_keyframe = opts.method == Method::ClusterTca && t % cfg.f_max == 0;

        let mut walls = Vec::with_capacity(opts.runs);
        let mut features = None;
        let mut counted = 0;
        let pre_state = state.clone();
        for _ in 0..opts.runs {
            flops::reset();
            let start = Instant::now();
            let out = match opts.method {
                Method::Baseline => stage_forward(model, &frame, &mut NoHooks)?,
                Method::ClusterOnly if identity => {
                    stage_forward(model, &frame, &mut NoHooks)?
                }
                Method::ClusterOnly => {
                    let mut hooks = ClusterHooks::new(
                        model.spec,
                        cfg.alpha,
                        cfg.clusters(),
                        cfg.cluster_iters,
                    );
                    stage_forward(model, &frame, &mut hooks)?
                }
                Method::ClusterTca => {
                    // Timing repetitions re-run from an identical pre-frame
                    // state; the last run's state carries forward.
                    let mut run_state = pre_state.clone().expect("tca state");
                    let out = process_frame(&mut run_state, model, &frame)?;
                    state = Some(run_state);
                    out
                }
            };
            walls.push(start.elapsed().as_nanos() as u64);
            counted = flops::total();
            features = Some(out);
        }
        walls.sort_unstable();
        let wall_ns = walls[walls.len() / 2];
        let features = features.expect("at least one run");

        let baseline = if opts.method == Method::Baseline {
            features.clone()
        } else {
            stage_forward(model, &frame, &mut NoHooks)?
        };

        reports.push(FrameReport {
            frame_idx: t,
            is_keyframe,
            flops_analytic: flops_stage(
                &model.spec,
                model.block_count(),
                cfg,
                opts.method,
                is_keyframe,
            ),
            flops_counted: counted,
            wall_ns,
            fidelity_cos: fidelity(&features, &baseline)?,
            mask_agreement_miou: mask_agreement(
                &features,
                &baseline,
                opts.probe_seed,
                opts.probe_classes,
            )?,
        });
    }
    Ok(reports)
}

/// Mean-level summary of a report sequence, skipping `warmup` leading
/// frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub frames: usize,
    pub flops_analytic_mean: f64,
    pub flops_counted_mean: f64,
    pub wall_ns_mean: f64,
    pub fps_mean: f64,
    pub fidelity_mean: f64,
    pub miou_mean: f64,
}

pub fn summarize(reports: &[FrameReport], warmup: usize) -> Result<Aggregate> {
    if reports.len() <= warmup {
        return Err(TcaError::Config(format!(
            "{} frames cannot absorb {warmup} warmup frames",
            reports.len()
        )));
    }
    let used = &reports[warmup..];
    let n = used.len() as f64;
    let mean = |f: &dyn Fn(&FrameReport) -> f64| used.iter().map(|r| f(r)).sum::<f64>() / n;
    let wall = mean(&|r| r.wall_ns as f64);
    Ok(Aggregate {
        frames: used.len(),
        flops_analytic_mean: mean(&|r| r.flops_analytic as f64),
        flops_counted_mean: mean(&|r| r.flops_counted as f64),
        wall_ns_mean: wall,
        fps_mean: if wall > 0.0 { 1e9 / wall } else { 0.0 },
        fidelity_mean: mean(&|r| r.fidelity_cos),
        miou_mean: mean(&|r| r.mask_agreement_miou),
    })
}

/// Frozen frames.csv schema:
/// `frame_idx,is_keyframe,flops_analytic,flops_counted,wall_ns,fidelity_cos,mask_agreement_miou`
/// with is_keyframe as 0/1.
pub fn frames_csv(reports: &[FrameReport]) -> String {
    let mut out = String::from(
        "frame_idx,is_keyframe,flops_analytic,flops_counted,wall_ns,fidelity_cos,mask_agreement_miou\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{:.9},{:.9}\n",
            r.frame_idx,
            r.is_keyframe as u8,
            r.flops_analytic,
            r.flops_counted,
            r.wall_ns,
            r.fidelity_cos,
            r.mask_agreement_miou
        ));
    }
    out
}

pub fn write_frames_csv(path: &std::path::Path, reports: &[FrameReport]) -> Result<()> {
    std::fs::write(path, frames_csv(reports)).map_err(|e| TcaError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

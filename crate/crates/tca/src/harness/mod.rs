//! Benchmark harness: synthetic streams, cost accounting, accuracy proxies
//! and the configuration sweep.

pub mod cost;
pub mod metrics;
pub mod report;
pub mod stream;
pub mod sweep;

pub use cost::{flops_baseline, flops_stage};
pub use metrics::{
    fidelity, linear_probe, mask_agreement, mask_agreement_with_probe, predict_classes,
    DEFAULT_PROBE_CLASSES, DEFAULT_PROBE_SEED,
};
pub use report::{run_stream, summarize, write_frames_csv, Aggregate, FrameReport, RunOptions};
pub use stream::{Motion, Pattern, StreamConfig, SyntheticStream};
pub use sweep::{run_sweep, write_sweep_outputs, SweepOptions, SweepResult, SweepRow};

use crate::error::{Result, TcaError};

/// Pipeline variant under measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Full-resolution forward, no reduction.
    Baseline,
    /// Cluster every frame at `alpha`, no temporal refinement.
    ClusterOnly,
    /// Keyframe references plus early clustering and refinement.
    ClusterTca,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "cluster" => Ok(Method::ClusterOnly),
            "tca" => Ok(Method::ClusterTca),
            other => Err(TcaError::Config(format!(
                "unknown method '{other}' (expected baseline|cluster|tca)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::ClusterOnly => "cluster",
            Method::ClusterTca => "tca",
        }
    }
}

//! Windowed-attention inference engine with temporal token clustering.
//!
//! The crate runs a stack of window-attention blocks over a token grid and
//! accelerates it by clustering the tokens of each window at an
//! intermediate block, processing the reduced set, and expanding back to
//! full resolution at the end. On video-like streams it goes one step
//! further: keyframes are processed at full resolution for longer and their
//! tokens are stored as references that refine the clusters of the cheaper
//! in-between frames. A benchmark harness generates synthetic streams,
//! measures exact multiply-add counts against a closed-form cost model, and
//! sweeps configurations to map the accuracy/speed trade-off.
//!
//! The `examples/` directory is the best starting point; each example is a
//! small runnable tour of one capability:
//!
//! - `window_attention` - build a seeded model and run one uncompressed frame
//! - `cluster_and_reconstruct` - the cluster/process/expand pipeline on one frame
//! - `temporal_refinement` - reference capture and cluster refinement across frames
//! - `streaming_metrics` - per-frame reports on a drifting synthetic stream
//! - `flops_accounting` - counted multiply-adds vs. the analytic cost model
//! - `pareto_sweep` - configuration sweep with CSV/JSON/SVG output
//! - `weights_roundtrip` - the binary weight file format
//!
//! ```bash
//! cargo run -p tca --example streaming_metrics
//! ```
//!
//! The same functionality is scriptable through the thin `tca` binary
//! (`tca run`, `tca sweep`, `tca gen-weights`).

pub mod backbone;
pub mod clustering;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod temporal;

pub use error::{Result, TcaError};
pub use numerics::{DenseMatrix, Rng};

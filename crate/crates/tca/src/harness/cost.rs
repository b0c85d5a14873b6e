//! Closed-form multiply-add counts.
//!
//! Per block and window with `t` tokens of `L` channels the attention path
//! costs `3tL^2` (qkv) + `t^2 L` (scores) + `t^2 L` (attention times V) +
//! `tL^2` (output projection) and the MLP `8tL^2`, i.e. `12tL^2 + 2t^2L`
//! in total. Clustering charges one `M*N*L` distance pass per Lloyd round
//! (at least one, since membership always needs a pass) and reference
//! assignment charges `M*N*L`, both per window. Element-wise work is free
//! by convention, matching the instrumented kernels, so the counted and the
//! analytic number must agree exactly.
//!
//! A `cluster_side` whose square equals the window token count disables
//! reduction entirely: the pipeline degenerates to the baseline and so does
//! its cost.

use super::Method;
use crate::backbone::GridSpec;
use crate::temporal::TcaConfig;

/// Multiply-adds of one attention block over one window of `t` tokens.
pub fn block_window_madds(t: u64, l: u64) -> u64 {
    12 * t * l * l + 2 * t * t * l
}

/// Full-resolution frame cost.
pub fn flops_baseline(spec: &GridSpec, blocks: usize) -> u64 {
    let k = spec.window_count() as u64;
    let m = spec.tokens_per_window() as u64;
    let l = spec.channels as u64;
    k * blocks as u64 * block_window_madds(m, l)
}

/// Frame cost of a method under a configuration. For the temporal method
/// keyframes cluster late (at `alpha + beta`) and pay no assignment;
/// non-keyframes cluster at `alpha` and pay one reference-assignment pass.
pub fn flops_stage(
    spec: &GridSpec,
    blocks: usize,
    cfg: &TcaConfig,
    method: Method,
    is_keyframe: bool,
) -> u64 {
    let k = spec.window_count() as u64;
    let m = spec.tokens_per_window() as u64;
    let n = cfg.clusters() as u64;
    let l = spec.channels as u64;
    let b = blocks as u64;

    if method == Method::Baseline || n == m {
        return flops_baseline(spec, blocks);
    }

    let cluster_cost = k * cfg.cluster_iters.max(1) as u64 * m * n * l;
    let split_at = |cluster_block: u64| {
        k * (cluster_block * block_window_madds(m, l)
            + (b - cluster_block) * block_window_madds(n, l))
    };

    match method {
        Method::Baseline => unreachable!(),
        Method::ClusterOnly => split_at(cfg.alpha as u64) + cluster_cost,
        Method::ClusterTca => {
            if is_keyframe {
                split_at((cfg.alpha + cfg.beta) as u64) + cluster_cost
            } else {
                split_at(cfg.alpha as u64) + cluster_cost + k * m * n * l
            }
        }
    }
}

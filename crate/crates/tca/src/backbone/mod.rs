//! A single-resolution stack of window-attention blocks over a token grid.
//!
//! The grid is tiled into non-overlapping square windows; each block runs
//! pre-norm multi-head self-attention and an MLP independently per window,
//! so every window must hold the same token count at every block boundary.
//! That count is `M = window_side^2` for a full grid, or `N` after a hook
//! has clustered the windows — the blocks themselves are agnostic, which is
//! where the speedup comes from. Windows are never shifted: cross-window
//! mixing is deliberately absent so token reduction can treat windows
//! independently.
//!
//! Hooks fire *before* the block whose index they name, and once more after
//! the last block to restore full resolution.

mod weights_io;

pub use weights_io::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use crate::error::{Result, TcaError};
use crate::numerics::{
    add_row_bias, layernorm, matmul, softmax_rows, DenseMatrix, Rng,
};

/// MLP hidden size is `MLP_RATIO * channels`.
pub const MLP_RATIO: usize = 4;

/// Token-grid geometry: `height_tokens x width_tokens` tokens of
/// `channels` features, tiled by `window_side x window_side` windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub height_tokens: usize,
    pub width_tokens: usize,
    pub window_side: usize,
    pub channels: usize,
}

impl GridSpec {
    pub fn new(
        height_tokens: usize,
        width_tokens: usize,
        window_side: usize,
        channels: usize,
    ) -> Result<Self> {
        if window_side == 0 || channels == 0 || height_tokens == 0 || width_tokens == 0 {
            return Err(TcaError::Config("grid dimensions must be positive".into()));
        }
        if height_tokens % window_side != 0 || width_tokens % window_side != 0 {
            return Err(TcaError::Shape(format!(
                "grid {height_tokens}x{width_tokens} not divisible by window {window_side}"
            )));
        }
        Ok(GridSpec {
            height_tokens,
            width_tokens,
            window_side,
            channels,
        })
    }

    /// Tokens per window (M).
    pub fn tokens_per_window(&self) -> usize {
        self.window_side * self.window_side
    }

    /// Number of windows (K).
    pub fn window_count(&self) -> usize {
        (self.height_tokens / self.window_side) * (self.width_tokens / self.window_side)
    }

    pub fn windows_per_row(&self) -> usize {
        self.width_tokens / self.window_side
    }

    /// (row, col) of a window's top-left token in the raster.
    pub fn window_origin(&self, window: usize) -> (usize, usize) {
        let per_row = self.windows_per_row();
        (
            (window / per_row) * self.window_side,
            (window % per_row) * self.window_side,
        )
    }

    /// Total raster positions (H * W).
    pub fn positions(&self) -> usize {
        self.height_tokens * self.width_tokens
    }
}

/// Full-resolution tokens for one frame, window-partitioned. Every window
/// holds exactly `tokens_per_window()` rows; reduced token sets live in
/// `clustering::ClusteredState` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub spec: GridSpec,
    pub windows: Vec<DenseMatrix>,
}

impl TokenGrid {
    pub fn new(spec: GridSpec, windows: Vec<DenseMatrix>) -> Result<Self> {
        let (k, m) = (spec.window_count(), spec.tokens_per_window());
        if windows.len() != k {
            return Err(TcaError::Shape(format!(
                "expected {k} windows, got {}",
                windows.len()
            )));
        }
        for (i, w) in windows.iter().enumerate() {
            if w.rows() != m || w.cols() != spec.channels {
                return Err(TcaError::Shape(format!(
                    "window {i} is {}x{}, expected {m}x{}",
                    w.rows(),
                    w.cols(),
                    spec.channels
                )));
            }
        }
        Ok(TokenGrid { spec, windows })
    }

    pub fn window_origin(&self, window: usize) -> (usize, usize) {
        self.spec.window_origin(window)
    }
}

/// Tile a raster (`H*W x L`, row-major positions) into windows, row-major
/// window order, row-major token order within each window.
pub fn partition_windows(spec: &GridSpec, raster: &DenseMatrix) -> Result<TokenGrid> {
    if raster.rows() != spec.positions() || raster.cols() != spec.channels {
        return Err(TcaError::Shape(format!(
            "raster {}x{} does not match grid {}x{} with {} channels",
            raster.rows(),
            raster.cols(),
            spec.height_tokens,
            spec.width_tokens,
            spec.channels
        )));
    }
    let ws = spec.window_side;
    let mut windows = Vec::with_capacity(spec.window_count());
    for k in 0..spec.window_count() {
        let (or, oc) = spec.window_origin(k);
        let mut w = DenseMatrix::zeros(spec.tokens_per_window(), spec.channels);
        for m in 0..spec.tokens_per_window() {
            let (gr, gc) = (or + m / ws, oc + m % ws);
            w.row_mut(m)
                .copy_from_slice(raster.row(gr * spec.width_tokens + gc));
        }
        windows.push(w);
    }
    TokenGrid::new(*spec, windows)
}

/// Exact inverse of [`partition_windows`].
pub fn merge_windows(grid: &TokenGrid) -> DenseMatrix {
    let spec = &grid.spec;
    let ws = spec.window_side;
    let mut raster = DenseMatrix::zeros(spec.positions(), spec.channels);
    for (k, w) in grid.windows.iter().enumerate() {
        let (or, oc) = spec.window_origin(k);
        for m in 0..spec.tokens_per_window() {
            let (gr, gc) = (or + m / ws, oc + m % ws);
            raster
                .row_mut(gr * spec.width_tokens + gc)
                .copy_from_slice(w.row(m));
        }
    }
    raster
}

/// Weights for one pre-norm attention block. Field order is the
/// serialization order of the weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub qkv_weight: DenseMatrix, // L x 3L
    pub qkv_bias: Vec<f64>,      // 3L
    pub proj_weight: DenseMatrix, // L x L
    pub proj_bias: Vec<f64>,     // L
    pub norm1_gamma: Vec<f64>,   // L
    pub norm1_beta: Vec<f64>,    // L
    pub norm2_gamma: Vec<f64>,   // L
    pub norm2_beta: Vec<f64>,    // L
    pub mlp_fc1_weight: DenseMatrix, // L x 4L
    pub mlp_fc1_bias: Vec<f64>,  // 4L
    pub mlp_fc2_weight: DenseMatrix, // 4L x L
    pub mlp_fc2_bias: Vec<f64>,  // L
    pub head_count: usize,
}

impl BlockWeights {
    pub fn channels(&self) -> usize {
        self.qkv_weight.rows()
    }
}

/// An ordered stack of blocks over one grid. Immutable after construction;
/// shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub spec: GridSpec,
    pub blocks: Vec<BlockWeights>,
}

impl StageModel {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }
}

/// Deterministic initialization: every projection entry is drawn from
/// uniform(-1/sqrt(L), 1/sqrt(L)) in serialization order, biases are zero,
/// layernorm affines are (1, 0). The same seed yields bit-identical models.
pub fn init_weights(seed: u64, spec: &GridSpec, blocks: usize, heads: usize) -> Result<StageModel> {
    let l = spec.channels;
    if heads == 0 || l % heads != 0 {
        return Err(TcaError::Config(format!(
            "channels {l} not divisible by head count {heads}"
        )));
    }
    if blocks == 0 {
        return Err(TcaError::Config("block count must be positive".into()));
    }
    let bound = 1.0 / (l as f64).sqrt();
    let mut rng = Rng::new(seed);
    let mut draw = |rows: usize, cols: usize| {
        DenseMatrix::fill_with(rows, cols, || rng.uniform(-bound, bound))
    };
    let mut out = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        out.push(BlockWeights {
            qkv_weight: draw(l, 3 * l),
            qkv_bias: vec![0.0; 3 * l],
            proj_weight: draw(l, l),
            proj_bias: vec![0.0; l],
            norm1_gamma: vec![1.0; l],
            norm1_beta: vec![0.0; l],
            norm2_gamma: vec![1.0; l],
            norm2_beta: vec![0.0; l],
            mlp_fc1_weight: draw(l, MLP_RATIO * l),
            mlp_fc1_bias: vec![0.0; MLP_RATIO * l],
            mlp_fc2_weight: draw(MLP_RATIO * l, l),
            mlp_fc2_bias: vec![0.0; l],
            head_count: heads,
        });
    }
    Ok(StageModel {
        spec: *spec,
        blocks: out,
    })
}

/// Multi-head self-attention over one window, scale 1/sqrt(L/heads).
fn attention_window(x: &DenseMatrix, w: &BlockWeights) -> Result<DenseMatrix> {
    let l = w.channels();
    let t = x.rows();
    let heads = w.head_count;
    let head_dim = l / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut qkv = matmul(x, &w.qkv_weight)?;
    add_row_bias(&mut qkv, &w.qkv_bias)?;
    let q = qkv.column_block(0, l);
    let k = qkv.column_block(l, l);
    let v = qkv.column_block(2 * l, l);

    let mut concat = DenseMatrix::zeros(t, l);
    for h in 0..heads {
        let qh = q.column_block(h * head_dim, head_dim);
        let kh_t = k.column_block(h * head_dim, head_dim).transpose();
        let vh = v.column_block(h * head_dim, head_dim);
        let mut scores = matmul(&qh, &kh_t)?;
        for s in scores.data_mut() {
            *s *= scale;
        }
        let attn = softmax_rows(&scores);
        let ctx = matmul(&attn, &vh)?;
        for r in 0..t {
            concat.row_mut(r)[h * head_dim..(h + 1) * head_dim].copy_from_slice(ctx.row(r));
        }
    }
    let mut out = matmul(&concat, &w.proj_weight)?;
    add_row_bias(&mut out, &w.proj_bias)?;
    Ok(out)
}

fn mlp_window(x: &DenseMatrix, w: &BlockWeights) -> Result<DenseMatrix> {
    let mut hidden = matmul(x, &w.mlp_fc1_weight)?;
    add_row_bias(&mut hidden, &w.mlp_fc1_bias)?;
    let hidden = crate::numerics::gelu(&hidden);
    let mut out = matmul(&hidden, &w.mlp_fc2_weight)?;
    add_row_bias(&mut out, &w.mlp_fc2_bias)?;
    Ok(out)
}

fn block_forward_window(x: &DenseMatrix, w: &BlockWeights) -> Result<DenseMatrix> {
    if x.cols() != w.channels() {
        return Err(TcaError::Shape(format!(
            "window has {} channels, block expects {}",
            x.cols(),
            w.channels()
        )));
    }
    let mut x = x.clone();
    let normed = layernorm(&x, &w.norm1_gamma, &w.norm1_beta)?;
    let attn = attention_window(&normed, w)?;
    for (a, b) in x.data_mut().iter_mut().zip(attn.data()) {
        *a += b;
    }
    let normed = layernorm(&x, &w.norm2_gamma, &w.norm2_beta)?;
    let mlp = mlp_window(&normed, w)?;
    for (a, b) in x.data_mut().iter_mut().zip(mlp.data()) {
        *a += b;
    }
    Ok(x)
}

/// One block over every window independently. Windows may hold any uniform
/// token count; the same weights serve full and clustered grids.
pub fn block_forward(windows: &[DenseMatrix], w: &BlockWeights) -> Result<Vec<DenseMatrix>> {
    windows.iter().map(|x| block_forward_window(x, w)).collect()
}

/// Per-block interception points for token reduction.
///
/// `before_block` runs ahead of the named block and may replace the window
/// token matrices (uniformly — every window must keep the same row count).
/// `finish` runs after the last block and must return full
/// `tokens_per_window()` windows so the raster can be reassembled.
pub trait StageHooks {
    fn before_block(&mut self, index: usize, windows: &mut Vec<DenseMatrix>) -> Result<()>;

    fn finish(&mut self, windows: Vec<DenseMatrix>) -> Result<Vec<DenseMatrix>> {
        Ok(windows)
    }

    /// Largest block index this hook set fires on, used to reject hooks
    /// beyond the model depth.
    fn max_hook_index(&self) -> Option<usize> {
        None
    }
}

/// The uncompressed baseline: no interception.
pub struct NoHooks;

impl StageHooks for NoHooks {
    fn before_block(&mut self, _index: usize, _windows: &mut Vec<DenseMatrix>) -> Result<()> {
        Ok(())
    }
}

fn check_uniform(windows: &[DenseMatrix], spec: &GridSpec) -> Result<usize> {
    if windows.len() != spec.window_count() {
        return Err(TcaError::Shape(format!(
            "window count changed to {}, expected {}",
            windows.len(),
            spec.window_count()
        )));
    }
    let t = windows[0].rows();
    for (i, w) in windows.iter().enumerate() {
        if w.rows() != t || w.cols() != spec.channels {
            return Err(TcaError::Shape(format!(
                "window {i} is {}x{} but window 0 holds {t} tokens of {}",
                w.rows(),
                w.cols(),
                spec.channels
            )));
        }
        if w.rows() == 0 {
            return Err(TcaError::Shape("empty window".into()));
        }
    }
    Ok(t)
}

/// Run every block in order over a raster frame, invoking `hooks` before
/// each block and once after the last. The uniform-token-count constraint
/// is checked at every block boundary. Deterministic: identical weights,
/// input and hooks give bit-identical output.
pub fn stage_forward<H: StageHooks>(
    model: &StageModel,
    raster: &DenseMatrix,
    hooks: &mut H,
) -> Result<DenseMatrix> {
    if let Some(max_index) = hooks.max_hook_index() {
        if max_index >= model.block_count() {
            return Err(TcaError::Config(format!(
                "hook at block {max_index} but model has {} blocks",
                model.block_count()
            )));
        }
    }
    let grid = partition_windows(&model.spec, raster)?;
    let mut windows = grid.windows;
    for (i, block) in model.blocks.iter().enumerate() {
        hooks.before_block(i, &mut windows)?;
        check_uniform(&windows, &model.spec)?;
        windows = block_forward(&windows, block)?;
    }
    let windows = hooks.finish(windows)?;
    let grid = TokenGrid::new(model.spec, windows)?;
    Ok(merge_windows(&grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gelu, softmax_rows, Rng};
    use proptest::prelude::*;

    fn spec_2x2() -> GridSpec {
        GridSpec::new(2, 2, 1, 3).unwrap()
    }

    fn random_raster(rng: &mut Rng, spec: &GridSpec) -> DenseMatrix {
        DenseMatrix::fill_with(spec.positions(), spec.channels, || rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn partition_window_one_is_identity_reshape() {
        let spec = spec_2x2();
        let mut rng = Rng::new(1);
        let raster = random_raster(&mut rng, &spec);
        let grid = partition_windows(&spec, &raster).unwrap();
        assert_eq!(grid.windows.len(), 4);
        for (k, w) in grid.windows.iter().enumerate() {
            assert_eq!(w.row(0), raster.row(k));
        }
    }

    #[test]
    fn partition_4x4_window_2_layout() {
        let spec = GridSpec::new(4, 4, 2, 1).unwrap();
        // Feature value encodes the raster position index.
        let raster =
            DenseMatrix::from_vec(16, 1, (0..16).map(|i| i as f64).collect()).unwrap();
        let grid = partition_windows(&spec, &raster).unwrap();
        assert_eq!(grid.windows.len(), 4);
        // Window 0 holds positions (0,0), (0,1), (1,0), (1,1) = 0, 1, 4, 5.
        let w0: Vec<f64> = grid.windows[0].data().to_vec();
        assert_eq!(w0, vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(grid.window_origin(1), (0, 2));
        assert_eq!(grid.window_origin(2), (2, 0));
    }

    #[test]
    fn partition_rejects_indivisible() {
        assert!(GridSpec::new(5, 4, 2, 1).is_err());
    }

    proptest! {
        #[test]
        fn merge_inverts_partition(seed in 0u64..500) {
            let mut rng = Rng::new(seed);
            let spec = GridSpec::new(6, 4, 2, 3).unwrap();
            let raster = random_raster(&mut rng, &spec);
            let grid = partition_windows(&spec, &raster).unwrap();
            prop_assert_eq!(merge_windows(&grid), raster);
        }
    }

    fn zero_block(l: usize, heads: usize) -> BlockWeights {
        BlockWeights {
            qkv_weight: DenseMatrix::zeros(l, 3 * l),
            qkv_bias: vec![0.0; 3 * l],
            proj_weight: DenseMatrix::zeros(l, l),
            proj_bias: vec![0.0; l],
            norm1_gamma: vec![1.0; l],
            norm1_beta: vec![0.0; l],
            norm2_gamma: vec![1.0; l],
            norm2_beta: vec![0.0; l],
            mlp_fc1_weight: DenseMatrix::zeros(l, MLP_RATIO * l),
            mlp_fc1_bias: vec![0.0; MLP_RATIO * l],
            mlp_fc2_weight: DenseMatrix::zeros(MLP_RATIO * l, l),
            mlp_fc2_bias: vec![0.0; l],
            head_count: heads,
        }
    }

    #[test]
    fn zero_weights_pass_input_through() {
        let mut rng = Rng::new(5);
        let x = DenseMatrix::fill_with(4, 8, || rng.uniform(-2.0, 2.0));
        let out = block_forward(&[x.clone()], &zero_block(8, 2)).unwrap();
        assert_eq!(out[0], x);
    }

    #[test]
    fn single_token_attention_is_identity_mix() {
        // With one token the softmax row is [[1.0]], so attention returns
        // proj(v) exactly; with zero proj weights the block is a no-op.
        let mut rng = Rng::new(6);
        let x = DenseMatrix::fill_with(1, 4, || rng.uniform(-1.0, 1.0));
        let out = block_forward(&[x.clone()], &zero_block(4, 1)).unwrap();
        assert_eq!(out[0], x);
        // And the softmax of any 1x1 score matrix is exactly [[1.0]].
        let s = softmax_rows(&DenseMatrix::from_vec(1, 1, vec![-3.7]).unwrap());
        assert_eq!(s.get(0, 0), 1.0);
    }

    /// Independent naive attention block used as an oracle: scalar loops,
    /// own layernorm/softmax, no shared kernels.
    fn naive_block(x: &DenseMatrix, w: &BlockWeights) -> DenseMatrix {
        let t = x.rows();
        let l = x.cols();
        let heads = w.head_count;
        let hd = l / heads;
        let ln = |x: &DenseMatrix, g: &[f64], b: &[f64]| {
            let mut out = x.clone();
            for r in 0..t {
                let row = out.row_mut(r);
                let mean = row.iter().sum::<f64>() / l as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l as f64;
                let inv = 1.0 / (var + 1e-5).sqrt();
                for (i, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean) * inv * g[i] + b[i];
                }
            }
            out
        };
        let linear = |x: &DenseMatrix, w: &DenseMatrix, b: &[f64]| {
            let mut out = DenseMatrix::zeros(x.rows(), w.cols());
            for r in 0..x.rows() {
                for c in 0..w.cols() {
                    let mut acc = 0.0;
                    for k in 0..x.cols() {
                        acc += x.get(r, k) * w.get(k, c);
                    }
                    out.set(r, c, acc + b[c]);
                }
            }
            out
        };

        let mut x1 = x.clone();
        let h = ln(&x1, &w.norm1_gamma, &w.norm1_beta);
        let qkv = linear(&h, &w.qkv_weight, &w.qkv_bias);
        let mut attn_out = DenseMatrix::zeros(t, l);
        for head in 0..heads {
            for i in 0..t {
                // scores for query i against all keys
                let mut scores = vec![0.0; t];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for d in 0..hd {
                        acc += qkv.get(i, head * hd + d) * qkv.get(j, l + head * hd + d);
                    }
                    *s = acc / (hd as f64).sqrt();
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for d in 0..hd {
                    let mut acc = 0.0;
                    for (j, e) in exps.iter().enumerate() {
                        acc += e / sum * qkv.get(j, 2 * l + head * hd + d);
                    }
                    attn_out.set(i, head * hd + d, acc);
                }
            }
        }
        let projected = linear(&attn_out, &w.proj_weight, &w.proj_bias);
        for (a, b) in x1.data_mut().iter_mut().zip(projected.data()) {
            *a += b;
        }
        let h2 = ln(&x1, &w.norm2_gamma, &w.norm2_beta);
        let hidden = gelu(&linear(&h2, &w.mlp_fc1_weight, &w.mlp_fc1_bias));
        let mlp = linear(&hidden, &w.mlp_fc2_weight, &w.mlp_fc2_bias);
        for (a, b) in x1.data_mut().iter_mut().zip(mlp.data()) {
            *a += b;
        }
        x1
    }

    #[test]
    fn block_matches_naive_attention_oracle() {
        let spec = GridSpec::new(2, 2, 2, 8).unwrap();
        for seed in 0..20 {
            let model = init_weights(seed, &spec, 1, 2).unwrap();
            let mut rng = Rng::new(seed + 1000);
            let x = DenseMatrix::fill_with(2, 8, || rng.uniform(-1.0, 1.0));
            let got = block_forward(&[x.clone()], &model.blocks[0]).unwrap();
            let want = naive_block(&x, &model.blocks[0]);
            for (a, b) in got[0].data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-9, "block diverges from oracle");
            }
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = GridSpec::new(4, 4, 2, 8).unwrap();
        let a = init_weights(3, &spec, 2, 2).unwrap();
        let b = init_weights(3, &spec, 2, 2).unwrap();
        let c = init_weights(4, &spec, 2, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_golden_first_weight() {
        // Frozen once from the documented generator: seed 0, L = 8, bound
        // 1/sqrt(8); first draw of the qkv projection of block 0.
        let spec = GridSpec::new(2, 2, 1, 8).unwrap();
        let model = init_weights(0, &spec, 1, 2).unwrap();
        let first = model.blocks[0].qkv_weight.get(0, 0);
        let expected = {
            let mut rng = Rng::new(0);
            rng.uniform(-1.0 / 8f64.sqrt(), 1.0 / 8f64.sqrt())
        };
        assert_eq!(first, expected);
        assert!((first - 2.710_416_717_899_628_6e-1).abs() < 1e-15);
    }

    #[test]
    fn stage_forward_without_hooks_runs_all_blocks() {
        let spec = GridSpec::new(2, 2, 2, 4).unwrap();
        let model = init_weights(9, &spec, 3, 2).unwrap();
        let mut rng = Rng::new(10);
        let raster = random_raster(&mut rng, &spec);
        let out = stage_forward(&model, &raster, &mut NoHooks).unwrap();
        // identical to manually chaining the blocks
        let grid = partition_windows(&spec, &raster).unwrap();
        let mut windows = grid.windows;
        for b in &model.blocks {
            windows = block_forward(&windows, b).unwrap();
        }
        let manual = merge_windows(&TokenGrid::new(spec, windows).unwrap());
        assert_eq!(out, manual);
    }

    #[test]
    fn stage_forward_is_deterministic() {
        let spec = GridSpec::new(4, 4, 2, 8).unwrap();
        let model = init_weights(11, &spec, 4, 2).unwrap();
        let mut rng = Rng::new(12);
        let raster = random_raster(&mut rng, &spec);
        let a = stage_forward(&model, &raster, &mut NoHooks).unwrap();
        let b = stage_forward(&model, &raster, &mut NoHooks).unwrap();
        assert_eq!(a, b);
    }

    struct OutOfRange;
    impl StageHooks for OutOfRange {
        fn before_block(&mut self, _i: usize, _w: &mut Vec<DenseMatrix>) -> Result<()> {
            Ok(())
        }
        fn max_hook_index(&self) -> Option<usize> {
            Some(99)
        }
    }

    #[test]
    fn out_of_range_hook_is_config_error() {
        let spec = GridSpec::new(2, 2, 2, 4).unwrap();
        let model = init_weights(0, &spec, 2, 2).unwrap();
        let raster = DenseMatrix::zeros(4, 4);
        assert!(matches!(
            stage_forward(&model, &raster, &mut OutOfRange),
            Err(TcaError::Config(_))
        ));
    }

    #[test]
    fn windows_are_isolated() {
        // Zeroing the tokens of one window never changes another window's
        // output: there is no cross-window path.
        let spec = GridSpec::new(4, 4, 2, 8).unwrap();
        let model = init_weights(21, &spec, 3, 2).unwrap();
        let mut rng = Rng::new(22);
        let raster = random_raster(&mut rng, &spec);
        let base = stage_forward(&model, &raster, &mut NoHooks).unwrap();

        for zeroed in 0..spec.window_count() {
            let mut altered = raster.clone();
            let (or, oc) = spec.window_origin(zeroed);
            for r in 0..spec.window_side {
                for c in 0..spec.window_side {
                    let pos = (or + r) * spec.width_tokens + (oc + c);
                    altered.row_mut(pos).fill(0.0);
                }
            }
            let out = stage_forward(&model, &altered, &mut NoHooks).unwrap();
            for other in 0..spec.window_count() {
                if other == zeroed {
                    continue;
                }
                let (or2, oc2) = spec.window_origin(other);
                for r in 0..spec.window_side {
                    for c in 0..spec.window_side {
                        let pos = (or2 + r) * spec.width_tokens + (oc2 + c);
                        assert_eq!(base.row(pos), out.row(pos), "window {other} leaked");
                    }
                }
            }
        }
    }
}

//! Frame-wise token reduction: cluster the M tokens of every window into N
//! cluster tokens, process the reduced grid, and expand back to M at the
//! end by copying each cluster token into its members' positions.
//!
//! Clustering is plain Lloyd iteration, seeded deterministically: when N is
//! a perfect square the initial centroids sit on a regular sqrt(N) x sqrt(N)
//! spatial subgrid of the window (the token nearest each grid point);
//! otherwise they are evenly spaced over the window's row-major token
//! order. Ties in the nearest-centroid assignment break to the lowest
//! index, and a cluster that loses all members is re-seeded with the token
//! currently farthest from its own centroid, so every cluster stays
//! non-empty. Everything is a pure function of its inputs.

use crate::backbone::{GridSpec, StageHooks, TokenGrid};
use crate::error::{Result, TcaError};
use crate::numerics::{argmin_row, pairwise_sqdist, DenseMatrix};

/// Reduced tokens for one frame plus the bookkeeping needed to expand them
/// back: for every original position, the cluster it belongs to, and per
/// cluster the member count |C_j| used as a weight during refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredState {
    /// K windows of N x L cluster tokens.
    pub windows: Vec<DenseMatrix>,
    /// Per window, cluster index of each of the M original tokens.
    pub member_of: Vec<Vec<usize>>,
    /// Per window, members per cluster; always >= 1, sums to M.
    pub member_count: Vec<Vec<usize>>,
    pub spec: GridSpec,
    /// Clusters per window (N).
    pub clusters: usize,
}

impl ClusteredState {
    pub fn from_parts(
        spec: GridSpec,
        clusters: usize,
        windows: Vec<DenseMatrix>,
        member_of: Vec<Vec<usize>>,
        member_count: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let state = ClusteredState {
            windows,
            member_of,
            member_count,
            spec,
            clusters,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.spec.window_count();
        let m = self.spec.tokens_per_window();
        if self.windows.len() != k || self.member_of.len() != k || self.member_count.len() != k {
            return Err(TcaError::Shape(format!(
                "clustered state holds {} windows, expected {k}",
                self.windows.len()
            )));
        }
        for w in 0..k {
            if self.windows[w].rows() != self.clusters
                || self.windows[w].cols() != self.spec.channels
            {
                return Err(TcaError::Shape(format!(
                    "window {w} cluster tokens are {}x{}, expected {}x{}",
                    self.windows[w].rows(),
                    self.windows[w].cols(),
                    self.clusters,
                    self.spec.channels
                )));
            }
            if self.member_of[w].len() != m {
                return Err(TcaError::Shape(format!(
                    "window {w} has {} member entries, expected {m}",
                    self.member_of[w].len()
                )));
            }
            if self.member_of[w].iter().any(|&j| j >= self.clusters) {
                return Err(TcaError::State(format!(
                    "window {w} assigns a token beyond cluster {}",
                    self.clusters
                )));
            }
            if self.member_count[w].len() != self.clusters
                || self.member_count[w].iter().sum::<usize>() != m
                || self.member_count[w].iter().any(|&c| c == 0)
            {
                return Err(TcaError::State(format!(
                    "window {w} member counts are inconsistent"
                )));
            }
        }
        Ok(())
    }
}

/// Clustering of a single window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowClustering {
    pub centroids: DenseMatrix,
    pub member_of: Vec<usize>,
    pub member_count: Vec<usize>,
}

/// Index of the token nearest the i-th of `slots` evenly spaced positions
/// along an axis of length `extent`.
fn grid_slot(i: usize, slots: usize, extent: usize) -> usize {
    let pos = (i as f64 + 0.5) * extent as f64 / slots as f64 - 0.5;
    (pos.round().max(0.0) as usize).min(extent - 1)
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

fn initial_centroid_tokens(m: usize, n: usize) -> Vec<usize> {
    if let (Some(side), Some(window_side)) = (exact_sqrt(n), exact_sqrt(m)) {
        let mut picks = Vec::with_capacity(n);
        for gr in 0..side {
            for gc in 0..side {
                let r = grid_slot(gr, side, window_side);
                let c = grid_slot(gc, side, window_side);
                picks.push(r * window_side + c);
            }
        }
        picks
    } else {
        (0..n).map(|i| grid_slot(i, n, m)).collect()
    }
}

/// Cluster the M tokens of one window into `clusters` tokens with `iters`
/// rounds of Lloyd iteration. With `iters == 0` the membership is a single
/// assignment against the initial centroids, which are left in place.
pub fn cluster_tokens(tokens: &DenseMatrix, clusters: usize, iters: usize) -> Result<WindowClustering> {
    let m = tokens.rows();
    if clusters == 0 {
        return Err(TcaError::Config("cluster count must be positive".into()));
    }
    if clusters > m {
        return Err(TcaError::Config(format!(
            "cannot form {clusters} clusters from {m} tokens"
        )));
    }

    let picks = initial_centroid_tokens(m, clusters);
    let mut centroids = DenseMatrix::zeros(clusters, tokens.cols());
    for (j, &tok) in picks.iter().enumerate() {
        centroids.row_mut(j).copy_from_slice(tokens.row(tok));
    }

    let mut member_of = Vec::new();
    let mut member_count = Vec::new();
    for round in 0..iters.max(1) {
        let dist = pairwise_sqdist(tokens, &centroids)?;
        member_of = argmin_row(&dist)?;
        member_count = vec![0usize; clusters];
        for &j in &member_of {
            member_count[j] += 1;
        }

        // Re-seed empty clusters with the token farthest from its current
        // centroid, never emptying a singleton donor cluster.
        let reseeded = reseed_empty(&dist, &mut member_of, &mut member_count)?;

        if round < iters {
            // Full Lloyd round: centroids become member means.
            centroids = DenseMatrix::zeros(clusters, tokens.cols());
            for (i, &j) in member_of.iter().enumerate() {
                for (c, t) in centroids.row_mut(j).iter_mut().zip(tokens.row(i)) {
                    *c += t;
                }
            }
            for j in 0..clusters {
                let inv = 1.0 / member_count[j] as f64;
                for c in centroids.row_mut(j) {
                    *c *= inv;
                }
            }
        } else {
            // iters == 0: membership only; re-seeded clusters still take
            // their stolen token as centroid.
            for (j, tok) in reseeded {
                centroids.row_mut(j).copy_from_slice(tokens.row(tok));
            }
        }
    }

    Ok(WindowClustering {
        centroids,
        member_of,
        member_count,
    })
}

fn reseed_empty(
    dist: &DenseMatrix,
    member_of: &mut [usize],
    member_count: &mut [usize],
) -> Result<Vec<(usize, usize)>> {
    let mut moved = Vec::new();
    for j in 0..member_count.len() {
        if member_count[j] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, &owner) in member_of.iter().enumerate() {
            if member_count[owner] < 2 {
                continue;
            }
            let d = dist.get(i, owner);
            if pick.is_none_or(|(_, best)| d > best) {
                pick = Some((i, d));
            }
        }
        let (tok, _) = pick.ok_or_else(|| {
            TcaError::State("no donor token available to re-seed an empty cluster".into())
        })?;
        member_count[member_of[tok]] -= 1;
        member_of[tok] = j;
        member_count[j] = 1;
        moved.push((j, tok));
    }
    Ok(moved)
}

/// Cluster every window of a frame independently.
pub fn cluster_frame(grid: &TokenGrid, clusters: usize, iters: usize) -> Result<ClusteredState> {
    let mut windows = Vec::with_capacity(grid.windows.len());
    let mut member_of = Vec::with_capacity(grid.windows.len());
    let mut member_count = Vec::with_capacity(grid.windows.len());
    for tokens in &grid.windows {
        let wc = cluster_tokens(tokens, clusters, iters)?;
        windows.push(wc.centroids);
        member_of.push(wc.member_of);
        member_count.push(wc.member_count);
    }
    ClusteredState::from_parts(grid.spec, clusters, windows, member_of, member_count)
}

/// Expand cluster tokens back to full resolution: original position m in
/// window k receives its cluster's token by straight copy.
pub fn reconstruct(state: &ClusteredState) -> Result<TokenGrid> {
    state.validate()?;
    let spec = state.spec;
    let m = spec.tokens_per_window();
    let mut windows = Vec::with_capacity(state.windows.len());
    for (k, clusters) in state.windows.iter().enumerate() {
        let mut full = DenseMatrix::zeros(m, spec.channels);
        for pos in 0..m {
            full.row_mut(pos)
                .copy_from_slice(clusters.row(state.member_of[k][pos]));
        }
        windows.push(full);
    }
    TokenGrid::new(spec, windows)
}

/// Hook set that clusters every window at one block and expands the tokens
/// back after the final block. This is the frame-wise compression pipeline
/// with no temporal component.
pub struct ClusterHooks {
    spec: GridSpec,
    at_block: usize,
    clusters: usize,
    iters: usize,
    book: Option<(Vec<Vec<usize>>, Vec<Vec<usize>>)>,
}

impl ClusterHooks {
    pub fn new(spec: GridSpec, at_block: usize, clusters: usize, iters: usize) -> Self {
        ClusterHooks {
            spec,
            at_block,
            clusters,
            iters,
            book: None,
        }
    }
}

impl StageHooks for ClusterHooks {
    fn before_block(&mut self, index: usize, windows: &mut Vec<DenseMatrix>) -> Result<()> {
        if index == self.at_block {
            let grid = TokenGrid::new(self.spec, std::mem::take(windows))?;
            let state = cluster_frame(&grid, self.clusters, self.iters)?;
            *windows = state.windows;
            self.book = Some((state.member_of, state.member_count));
        }
        Ok(())
    }

    fn finish(&mut self, windows: Vec<DenseMatrix>) -> Result<Vec<DenseMatrix>> {
        match self.book.take() {
            Some((member_of, member_count)) => {
                let state = ClusteredState::from_parts(
                    self.spec,
                    self.clusters,
                    windows,
                    member_of,
                    member_count,
                )?;
                Ok(reconstruct(&state)?.windows)
            }
            None => Ok(windows),
        }
    }

    fn max_hook_index(&self) -> Option<usize> {
        Some(self.at_block)
    }
}

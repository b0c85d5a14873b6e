// temporary tuning probe, deleted before finalizing
use tca::backbone::{block_forward, init_weights, partition_windows, stage_forward, GridSpec, NoHooks, StageModel};
use tca::clustering::ClusterHooks;
use tca::harness::{
    fidelity, mask_agreement, Motion, Pattern, StreamConfig, SyntheticStream, DEFAULT_PROBE_SEED,
};
use tca::numerics::DenseMatrix;
use tca::temporal::{make_hooks, ReferenceBank, StreamState, TcaConfig};

/// depth-(blocks_before) unclustered windows of a frame
fn capture_depth(model: &StageModel, frame: &DenseMatrix, depth: usize) -> Vec<DenseMatrix> {
    let grid = partition_windows(&model.spec, frame).unwrap();
    let mut windows = grid.windows;
    for b in &model.blocks[..depth] {
        windows = block_forward(&windows, b).unwrap();
    }
    windows
}

fn main() {
    let spec = GridSpec::new(24, 24, 12, 32).unwrap();
    let model = init_weights(7, &spec, 12, 4).unwrap();
    let cfg = TcaConfig {
        alpha: 0,
        beta: 6,
        f_max: 6,
        d: 2,
        cluster_side: 5,
        cluster_iters: 5,
        ..TcaConfig::default()
    };
    let stream = SyntheticStream::new(StreamConfig {
        spec,
        frames: 8,
        motion: Motion::Drift { dx: 1, dy: 1 },
        pattern: Pattern::Blobs { count: 5, radius: 5.0 },
        noise_sigma: 0.05,
        seed: 0,
    })
    .unwrap();
    println!("self-reference oracle (zero staleness, drift stream):");
    for t in 1..8 {
        let (frame, _) = stream.frame(t);
        let base = stage_forward(&model, &frame, &mut NoHooks).unwrap();
        let mut hooks = ClusterHooks::new(spec, cfg.alpha, cfg.clusters(), cfg.cluster_iters);
        let cl = stage_forward(&model, &frame, &mut hooks).unwrap();

        // fake state: bank := this frame's own depth-6 tokens, frame_idx
        // set so the schedule takes the non-keyframe branch
        let mut state = StreamState::new(cfg, &model).unwrap();
        state.bank = ReferenceBank {
            windows: capture_depth(&model, &frame, cfg.alpha + cfg.beta),
            captured_at: 0,
            valid: true,
        };
        state.frame_idx = 1;
        let tc = {
            let mut h = make_hooks(&state, &model).unwrap();
            stage_forward(&model, &frame, &mut h).unwrap()
        };
        let mc = mask_agreement(&cl, &base, DEFAULT_PROBE_SEED, 8).unwrap();
        let mt = mask_agreement(&tc, &base, DEFAULT_PROBE_SEED, 8).unwrap();
        println!(
            "  t{t}: miou cluster {mc:.4} tca-self {mt:.4} (gap {:+.4}) | fid {:+.4}",
            mt - mc,
            fidelity(&tc, &base).unwrap() - fidelity(&cl, &base).unwrap()
        );
    }
}

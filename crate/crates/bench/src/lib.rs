//! Shared inputs for the criterion benchmarks.

use std::sync::Arc;

use xpose_core::geom::VirtualView;
use xpose_core::graph::{drifting_loop, PoseGraph};
use xpose_core::synth::{make_asset, synth_pair, DatasetConfig, OracleProvider, SyntheticPair};

/// One wide-baseline synthetic pair at the default dataset resolution.
pub fn pair() -> SyntheticPair {
    let cfg = DatasetConfig { pairs: 1, seed: 42, min_separation_deg: 120.0, inplane_jitter: false, ..DatasetConfig::default() };
    synth_pair(&cfg, 0).expect("valid dataset config")
}

/// Oracle provider for the first view of `pair`.
pub fn oracle(pair: &SyntheticPair) -> OracleProvider {
    OracleProvider::new(Arc::new(make_asset(pair.asset_seed)), pair.views[0].pose)
}

/// Object-centric view of `pair.views[i]` at `s_v` pixels.
pub fn virtual_view(pair: &SyntheticPair, i: usize, s_v: u32) -> VirtualView {
    let v = &pair.views[i];
    VirtualView::from_mask(&v.image, &v.mask, &v.intrinsics, s_v).expect("non-empty mask")
}

/// Drifting loop with one rotation-only closure.
pub fn closed_loop(nodes: usize) -> PoseGraph {
    let sim = drifting_loop(nodes, 5);
    let mut graph = sim.graph.clone();
    graph.add_edge(sim.exact_closure(nodes - 1, 0, 1.0));
    graph
}

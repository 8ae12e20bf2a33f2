use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cfg::{BlockId, Cfg, Edge, EdgeKind};

pub const DEFAULT_MAX_PATH_BLOCKS: usize = 64;

/// A walk from entry to exit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfPath {
    pub blocks: Vec<BlockId>,
    pub seed: u64,
    /// The walk hit the interior-block cap and jumped straight to exit; the
    /// final step is then not a CFG edge.
    pub truncated: bool,
}

pub fn random_path(cfg: &Cfg, seed: u64) -> CfPath {
    random_path_capped(cfg, seed, DEFAULT_MAX_PATH_BLOCKS)
}

/// Sample a path by choosing uniformly among successors. A loop header
/// reached over a loop-back edge may only leave through its loop-exit, so each
/// loop body runs at most once and every loop-back edge is taken at most once.
pub fn random_path_capped(cfg: &Cfg, seed: u64, max_blocks: usize) -> CfPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = vec![cfg.entry()];
    let mut taken_back: HashSet<(BlockId, BlockId)> = HashSet::new();
    let mut arrived_by_back = false;
    let mut cur = cfg.entry();
    let mut interior = 0usize;
    let mut truncated = false;

    while cur != cfg.exit() {
        let options: Vec<&Edge> = cfg
            .successors(cur)
            .filter(|e| !(e.kind == EdgeKind::LoopBack && taken_back.contains(&(e.from, e.to))))
            .filter(|e| !arrived_by_back || e.kind == EdgeKind::LoopExit)
            .collect();
        let options = if options.is_empty() {
            // A header entered over its back edge always has a loop-exit; this
            // only guards against malformed graphs.
            cfg.successors(cur).collect()
        } else {
            options
        };
        if options.is_empty() || interior >= max_blocks {
            truncated = true;
            blocks.push(cfg.exit());
            break;
        }
        let edge = options[rng.random_range(0..options.len())];
        if edge.kind == EdgeKind::LoopBack {
            taken_back.insert((edge.from, edge.to));
        }
        arrived_by_back = edge.kind == EdgeKind::LoopBack;
        cur = edge.to;
        blocks.push(cur);
        if cur != cfg.exit() {
            interior += 1;
        }
    }
    CfPath {
        blocks,
        seed,
        truncated,
    }
}

//! Second-order biased random walks and skip-gram context extraction.

use crate::error::{Error, Result};
use crate::graph::{LabelGraph, NodeId};
use crate::seed;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream label for per-node walk RNGs.
const WALK_STREAM: &str = "walks";

/// node2vec walk hyperparameters.
///
/// `p` is the return bias, `q` the in-out bias. A step from `cur` (having
/// arrived from `prev`) weights each neighbor x of `cur` as: 1/p if x ==
/// prev, 1 if x is adjacent to prev, 1/q otherwise, then normalizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub p: f64,
    pub q: f64,
    /// Steps per walk; the emitted sequence has `walk_length + 1` nodes.
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Context radius for neighborhood extraction.
    pub window: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            walk_length: 20,
            walks_per_node: 10,
            window: 5,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("walk bias p must be positive, got {}", self.p)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Config(format!("walk bias q must be positive, got {}", self.q)));
        }
        if self.walk_length < 1 {
            return Err(Error::Config("walk_length must be at least 1".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.walks_per_node < 1 {
            return Err(Error::Config("walks_per_node must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transition probabilities out of `cur`, aligned with `g.neighbors(cur)`.
///
/// `prev` is the previously visited node, or `None` at the start of a walk
/// (first step is uniform over neighbors).
pub fn transition_distribution(
    g: &LabelGraph,
    prev: Option<NodeId>,
    cur: NodeId,
    cfg: &WalkConfig,
) -> Vec<f64> {
    let neighbors = g.neighbors(cur);
    let mut weights = vec![0.0; neighbors.len()];
    match prev {
        None => {
            let w = 1.0 / neighbors.len() as f64;
            weights.fill(w);
            return weights;
        }
        Some(prev) => {
            debug_assert!(g.are_adjacent(prev, cur), "prev must be adjacent to cur");
            let mut total = 0.0;
            for (i, &x) in neighbors.iter().enumerate() {
                let w = if x == prev {
                    1.0 / cfg.p
                } else if g.are_adjacent(prev, x) {
                    1.0
                } else {
                    1.0 / cfg.q
                };
                weights[i] = w;
                total += w;
            }
            for w in &mut weights {
                *w /= total;
            }
        }
    }
    weights
}

/// Samples the next node by inverse CDF over [`transition_distribution`].
pub fn sample_next(
    g: &LabelGraph,
    prev: Option<NodeId>,
    cur: NodeId,
    cfg: &WalkConfig,
    rng: &mut impl Rng,
) -> NodeId {
    let neighbors = g.neighbors(cur);
    assert!(!neighbors.is_empty(), "node {cur} has no neighbors");
    let probs = transition_distribution(g, prev, cur, cfg);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return neighbors[i];
        }
    }
    *neighbors.last().unwrap()
}

/// One biased walk of `cfg.walk_length` steps starting at `start`.
pub fn biased_walk(
    g: &LabelGraph,
    start: NodeId,
    cfg: &WalkConfig,
    rng: &mut impl Rng,
) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.walk_length + 1);
    walk.push(start);
    if g.neighbors(start).is_empty() {
        return walk;
    }
    let mut prev = None;
    let mut cur = start;
    for _ in 0..cfg.walk_length {
        let next = sample_next(g, prev, cur, cfg, rng);
        walk.push(next);
        prev = Some(cur);
        cur = next;
    }
    walk
}

/// Per-source context multisets gathered from skip-gram windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodMap {
    contexts: Vec<Vec<NodeId>>,
}

impl NeighborhoodMap {
    /// Wraps externally built context lists (sorted, source excluded).
    pub fn from_contexts(contexts: Vec<Vec<NodeId>>) -> Self {
        Self { contexts }
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            contexts: vec![Vec::new(); n_nodes],
        }
    }

    pub fn n_sources(&self) -> usize {
        self.contexts.len()
    }

    /// Context multiset of `y`, sorted ascending, multiplicity preserved.
    pub fn get(&self, y: NodeId) -> &[NodeId] {
        &self.contexts[y]
    }

    /// Total number of (source, context) pairs.
    pub fn pair_count(&self) -> usize {
        self.contexts.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.iter().all(Vec::is_empty)
    }

    /// Multiplicity of `ctx` in N(y).
    pub fn count(&self, y: NodeId, ctx: NodeId) -> usize {
        let list = &self.contexts[y];
        let lo = list.partition_point(|&v| v < ctx);
        let hi = list.partition_point(|&v| v <= ctx);
        hi - lo
    }

    /// Flattens to (source, context) pairs, multiplicity preserved.
    pub fn pairs(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.pair_count());
        for (y, ctx) in self.contexts.iter().enumerate() {
            for &n in ctx {
                out.push((y, n));
            }
        }
        out
    }

    /// Builds a map of `n_nodes` sources from explicit pairs (used for
    /// mini-batching over a fixed pair list).
    pub fn from_pairs(n_nodes: usize, pairs: &[(NodeId, NodeId)]) -> Self {
        let mut contexts = vec![Vec::new(); n_nodes];
        for &(y, n) in pairs {
            contexts[y].push(n);
        }
        for ctx in &mut contexts {
            ctx.sort_unstable();
        }
        Self { contexts }
    }
}

/// Runs `cfg.walks_per_node` walks from every node and collects, for each
/// source y, all nodes within `cfg.window` positions of an occurrence of y
/// in y's own walks. The source itself is never a context.
///
/// Each node gets an independent RNG stream derived from one draw on the
/// caller's generator, so the map is reproducible and per-node generation
/// could run in parallel without changing results.
pub fn build_neighborhoods(
    g: &LabelGraph,
    cfg: &WalkConfig,
    rng: &mut impl RngCore,
) -> NeighborhoodMap {
    let base = rng.next_u64();
    let n = g.node_count();
    let mut contexts = vec![Vec::new(); n];
    for y in 0..n {
        let mut node_rng = ChaCha8Rng::seed_from_u64(seed::derive(base, WALK_STREAM, y as u64));
        let ctx = &mut contexts[y];
        for _ in 0..cfg.walks_per_node {
            let walk = biased_walk(g, y, cfg, &mut node_rng);
            for (i, &center) in walk.iter().enumerate() {
                if center != y {
                    continue;
                }
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for j in lo..=hi {
                    if j != i && walk[j] != y {
                        ctx.push(walk[j]);
                    }
                }
            }
        }
        ctx.sort_unstable();
    }
    NeighborhoodMap::from_contexts(contexts)
}

/// Noise distribution for negative sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Proposal {
    /// Uniform over all nodes except the source.
    #[default]
    Uniform,
    /// Proportional to node degree, source excluded.
    Degree,
}

/// Draws `count` negative nodes (with replacement) from the proposal
/// distribution over all nodes except `source`.
pub fn negative_sample(
    g: &LabelGraph,
    source: NodeId,
    count: usize,
    proposal: Proposal,
    rng: &mut impl Rng,
) -> Result<Vec<NodeId>> {
    if count == 0 {
        return Err(Error::Config("negative-sample count must be at least 1".into()));
    }
    let n = g.node_count();
    if n < 2 {
        return Err(Error::Graph("cannot negative-sample a 1-node graph".into()));
    }
    let mut out = Vec::with_capacity(count);
    match proposal {
        Proposal::Uniform => {
            for _ in 0..count {
                // Uniform over the n-1 non-source ids.
                let r = rng.random_range(0..n - 1);
                out.push(if r >= source { r + 1 } else { r });
            }
        }
        Proposal::Degree => {
            let total: usize = (0..n)
                .filter(|&v| v != source)
                .map(|v| g.degree(v))
                .sum();
            for _ in 0..count {
                let mut t = rng.random_range(0..total);
                for v in 0..n {
                    if v == source {
                        continue;
                    }
                    let dv = g.degree(v);
                    if t < dv {
                        out.push(v);
                        break;
                    }
                    t -= dv;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_edge_list;

    fn star() -> LabelGraph {
        load_edge_list("c a\nc b\nc d\nclasses: a,b,d\n").unwrap()
    }

    fn path3() -> LabelGraph {
        load_edge_list("a b\nb c\nclasses: a,c\n").unwrap()
    }

    fn tree_h2() -> LabelGraph {
        let text = "n0 n1\nn0 n2\nn1 n3\nn1 n4\nn2 n5\nn2 n6\nclasses: n3,n4,n5,n6\n";
        load_edge_list(text).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn neutral_biases_give_uniform_distribution() {
        let g = tree_h2();
        let cfg = WalkConfig::default();
        for cur in 0..g.node_count() {
            for &prev in g.neighbors(cur) {
                let probs = transition_distribution(&g, Some(prev), cur, &cfg);
                let want = 1.0 / g.degree(cur) as f64;
                for p in &probs {
                    assert_eq!(*p, want);
                }
            }
        }
    }

    #[test]
    fn star_return_bias() {
        // center c, leaves a,b,d; prev=a. Weights: a gets 1/p, b and d
        // get 1/q (leaves are not adjacent to each other).
        let g = star();
        let c = g.node_by_name("c").unwrap();
        let a = g.node_by_name("a").unwrap();
        let cfg = WalkConfig { p: 100.0, q: 1.0, ..WalkConfig::default() };
        let probs = transition_distribution(&g, Some(a), c, &cfg);
        let neighbors = g.neighbors(c);
        for (i, &x) in neighbors.iter().enumerate() {
            let want = if x == a { 0.01 / 2.01 } else { 1.0 / 2.01 };
            assert!((probs[i] - want).abs() < 1e-15, "node {x}: {}", probs[i]);
        }
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_two_neighbor_normalization() {
        let g = path3();
        let (a, b) = (g.node_by_name("a").unwrap(), g.node_by_name("b").unwrap());
        let cfg = WalkConfig { p: 4.0, q: 0.5, ..WalkConfig::default() };
        let probs = transition_distribution(&g, Some(a), b, &cfg);
        let denom = 1.0 / 4.0 + 1.0 / 0.5;
        for (i, &x) in g.neighbors(b).iter().enumerate() {
            let want = if x == a { 0.25 / denom } else { 2.0 / denom };
            assert!((probs[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_length_walk_is_just_the_start() {
        let g = path3();
        let cfg = WalkConfig { walk_length: 0, ..WalkConfig::default() };
        assert_eq!(biased_walk(&g, 1, &cfg, &mut rng(7)), vec![1]);
    }

    #[test]
    fn degree_one_path_walk_is_forced() {
        let g = load_edge_list("a b\nclasses: a,b\n").unwrap();
        let a = g.node_by_name("a").unwrap();
        let b = g.node_by_name("b").unwrap();
        let cfg = WalkConfig { walk_length: 3, ..WalkConfig::default() };
        assert_eq!(biased_walk(&g, a, &cfg, &mut rng(0)), vec![a, b, a, b]);
    }

    #[test]
    fn walk_steps_follow_edges() {
        let g = tree_h2();
        let cfg = WalkConfig::default();
        let mut r = rng(3);
        for start in 0..g.node_count() {
            let walk = biased_walk(&g, start, &cfg, &mut r);
            assert_eq!(walk.len(), cfg.walk_length + 1);
            assert_eq!(walk[0], start);
            for w in walk.windows(2) {
                assert!(g.are_adjacent(w[0], w[1]), "{:?}", w);
            }
        }
    }

    #[test]
    fn empirical_transitions_match_distribution() {
        // Modest sample here; the full 1e5-step check lives in the
        // acceptance suite.
        let g = tree_h2();
        let cfg = WalkConfig { p: 0.5, q: 2.0, ..WalkConfig::default() };
        let (prev, cur) = (0, 1);
        let probs = transition_distribution(&g, Some(prev), cur, &cfg);
        let neighbors = g.neighbors(cur);
        let mut counts = vec![0usize; neighbors.len()];
        let mut r = rng(11);
        let draws = 20_000;
        for _ in 0..draws {
            let next = sample_next(&g, Some(prev), cur, &cfg, &mut r);
            let idx = neighbors.iter().position(|&x| x == next).unwrap();
            counts[idx] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - probs[i]).abs() < 0.02, "{freq} vs {}", probs[i]);
        }
    }

    #[test]
    fn forced_neighborhoods_on_two_node_path() {
        let g = load_edge_list("a b\nclasses: a,b\n").unwrap();
        let cfg = WalkConfig { walks_per_node: 1, walk_length: 1, window: 1, ..WalkConfig::default() };
        let nmap = build_neighborhoods(&g, &cfg, &mut rng(5));
        let a = g.node_by_name("a").unwrap();
        let b = g.node_by_name("b").unwrap();
        assert_eq!(nmap.get(a), &[b]);
        assert_eq!(nmap.get(b), &[a]);
    }

    #[test]
    fn window_zero_rejected_by_validation() {
        let cfg = WalkConfig { window: 0, ..WalkConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(WalkConfig { p: 0.0, ..WalkConfig::default() }.validate().is_err());
        assert!(WalkConfig { q: -1.0, ..WalkConfig::default() }.validate().is_err());
        assert!(WalkConfig::default().validate().is_ok());
    }

    #[test]
    fn neighborhoods_reproducible_under_same_seed() {
        let g = tree_h2();
        let cfg = WalkConfig::default();
        let m1 = build_neighborhoods(&g, &cfg, &mut rng(42));
        let m2 = build_neighborhoods(&g, &cfg, &mut rng(42));
        assert_eq!(m1, m2);
        let m3 = build_neighborhoods(&g, &cfg, &mut rng(43));
        assert_ne!(m1, m3);
    }

    #[test]
    fn source_never_in_own_neighborhood() {
        let g = tree_h2();
        let cfg = WalkConfig { walks_per_node: 20, ..WalkConfig::default() };
        let nmap = build_neighborhoods(&g, &cfg, &mut rng(9));
        for y in 0..g.node_count() {
            assert!(!nmap.get(y).contains(&y));
            let bound = cfg.walks_per_node * cfg.walk_length * 2 * cfg.window;
            assert!(nmap.get(y).len() <= bound);
        }
    }

    #[test]
    fn sibling_leaves_cooccur_more_than_cross_subtree() {
        let g = tree_h2();
        let cfg = WalkConfig { walks_per_node: 50, walk_length: 5, window: 2, ..WalkConfig::default() };
        let nmap = build_neighborhoods(&g, &cfg, &mut rng(1));
        let id = |n: &str| g.node_by_name(n).unwrap();
        let leaves = [id("n3"), id("n4"), id("n5"), id("n6")];
        let sibling = |l: NodeId| if l == leaves[0] { leaves[1] } else if l == leaves[1] { leaves[0] } else if l == leaves[2] { leaves[3] } else { leaves[2] };
        let mut sib_total = 0.0;
        let mut cross_total = 0.0;
        for &l in &leaves {
            sib_total += nmap.count(l, sibling(l)) as f64;
            let cross: Vec<NodeId> = leaves.iter().copied().filter(|&x| x != l && x != sibling(l)).collect();
            let csum: usize = cross.iter().map(|&x| nmap.count(l, x)).sum();
            cross_total += csum as f64 / cross.len() as f64;
        }
        assert!(sib_total > cross_total, "sib {sib_total} cross {cross_total}");
    }

    #[test]
    fn two_node_negative_sampling_is_forced() {
        let g = load_edge_list("a b\nclasses: a,b\n").unwrap();
        let a = g.node_by_name("a").unwrap();
        let b = g.node_by_name("b").unwrap();
        let out = negative_sample(&g, a, 3, Proposal::Uniform, &mut rng(0)).unwrap();
        assert_eq!(out, vec![b, b, b]);
    }

    #[test]
    fn zero_count_negative_sampling_is_an_error() {
        let g = path3();
        assert!(negative_sample(&g, 0, 0, Proposal::Uniform, &mut rng(0)).is_err());
    }

    #[test]
    fn uniform_negative_sampling_frequencies() {
        let g = tree_h2();
        let src = 3;
        let draws = 28_000;
        let out = negative_sample(&g, src, draws, Proposal::Uniform, &mut rng(8)).unwrap();
        let mut counts = vec![0usize; g.node_count()];
        for v in out {
            counts[v] += 1;
        }
        assert_eq!(counts[src], 0);
        let expect = draws as f64 / (g.node_count() - 1) as f64;
        // 3-sigma binomial bound around 4000 per node
        let sigma = (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (v, &c) in counts.iter().enumerate() {
            if v == src {
                continue;
            }
            assert!((c as f64 - expect).abs() < 3.5 * sigma, "node {v}: {c}");
        }
    }

    #[test]
    fn degree_proposal_prefers_hubs() {
        let g = star();
        let a = g.node_by_name("a").unwrap();
        let c = g.node_by_name("c").unwrap();
        let out = negative_sample(&g, a, 4000, Proposal::Degree, &mut rng(12)).unwrap();
        let hub = out.iter().filter(|&&v| v == c).count();
        // center holds 3 of the 5 degree mass units among candidates
        assert!((hub as f64 / 4000.0 - 0.6).abs() < 0.05);
    }
}

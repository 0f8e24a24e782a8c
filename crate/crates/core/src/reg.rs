//! Skip-gram graph loss over node parameters: exact-partition and
//! negative-sampling modes, analytic gradients, and standalone embedding.
//!
//! The loss is the per-pair form
//!
//! ```text
//! L = sum_y sum_{n in N(y)} [ log Z_y - sim(theta_n, theta_y) / T ]
//! Z_y = sum_{v in all nodes} exp(sim(theta_y, theta_v) / T)
//! ```
//!
//! so each (source, context) pair carries one partition term and the
//! negative-sampling surrogate approximates the same quantity pairwise.

use crate::error::{Error, Result};
use crate::graph::LabelGraph;
use crate::param::ParamTable;
use crate::scalar::{real, Scalar};
use crate::walks::{build_neighborhoods, NeighborhoodMap, Proposal, WalkConfig};
use rand::seq::SliceRandom;
use rand::Rng;

/// Epsilon guarding cosine norms.
const COS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// -||a - b||^2
    NegSqEuclidean,
    Dot,
    Cosine,
}

/// Similarity with strict error handling at the public boundary.
pub fn similarity<S: Scalar>(a: &[S], b: &[S], kind: SimilarityKind) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if kind == SimilarityKind::Cosine {
        let eps = real::<S>(COS_EPS);
        if norm(a) <= eps || norm(b) <= eps {
            return Err(Error::ZeroVector);
        }
    }
    Ok(sim_eps(kind, a, b))
}

fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|&x| x * x).sum::<S>().sqrt()
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Total similarity function; cosine norms are clamped below by `COS_EPS`
/// instead of erroring (loss internals must stay finite).
pub(crate) fn sim_eps<S: Scalar>(kind: SimilarityKind, a: &[S], b: &[S]) -> S {
    match kind {
        SimilarityKind::Dot => dot(a, b),
        SimilarityKind::NegSqEuclidean => {
            let mut acc = S::zero();
            for (&x, &y) in a.iter().zip(b) {
                let d = x - y;
                acc += d * d;
            }
            -acc
        }
        SimilarityKind::Cosine => {
            let eps = real::<S>(COS_EPS);
            let na = norm(a).max(eps);
            let nb = norm(b).max(eps);
            dot(a, b) / (na * nb)
        }
    }
}

/// Writes d sim/d a into `da` and d sim/d b into `db`.
pub(crate) fn sim_partials<S: Scalar>(
    kind: SimilarityKind,
    a: &[S],
    b: &[S],
    da: &mut [S],
    db: &mut [S],
) {
    match kind {
        SimilarityKind::Dot => {
            da.copy_from_slice(b);
            db.copy_from_slice(a);
        }
        SimilarityKind::NegSqEuclidean => {
            let two = real::<S>(2.0);
            for i in 0..a.len() {
                let d = a[i] - b[i];
                da[i] = -two * d;
                db[i] = two * d;
            }
        }
        SimilarityKind::Cosine => {
            let eps = real::<S>(COS_EPS);
            let na = norm(a).max(eps);
            let nb = norm(b).max(eps);
            let ip = dot(a, b);
            let s = ip / (na * nb);
            for i in 0..a.len() {
                da[i] = b[i] / (na * nb) - s * a[i] / (na * na);
                db[i] = a[i] / (na * nb) - s * b[i] / (nb * nb);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Exact,
    NegativeSampling { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodMode {
    RandomWalk,
    ChildParent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegConfig {
    pub temperature: f64,
    pub similarity: SimilarityKind,
    pub partition: PartitionMode,
    pub neighborhood: NeighborhoodMode,
    pub proposal: Proposal,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            similarity: SimilarityKind::Cosine,
            partition: PartitionMode::Exact,
            neighborhood: NeighborhoodMode::RandomWalk,
            proposal: Proposal::Uniform,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if let PartitionMode::NegativeSampling { count } = self.partition {
            if count == 0 {
                return Err(Error::Config(
                    "negative-sampling count must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

fn check_nmap<S: Scalar>(params: &ParamTable<S>, nmap: &NeighborhoodMap) -> Result<()> {
    if nmap.n_sources() > params.n_rows() {
        return Err(Error::Graph(format!(
            "neighborhood map covers {} nodes but table has {} rows",
            nmap.n_sources(),
            params.n_rows()
        )));
    }
    for y in 0..nmap.n_sources() {
        if let Some(&m) = nmap.get(y).last() {
            if m >= params.n_rows() {
                return Err(Error::Graph(format!("context id {m} out of range")));
            }
        }
    }
    Ok(())
}

/// Exact-partition graph loss (a plain sum over pairs, no averaging).
pub fn graph_loss_exact<S: Scalar>(
    params: &ParamTable<S>,
    nmap: &NeighborhoodMap,
    cfg: &RegConfig,
) -> Result<S> {
    cfg.validate()?;
    check_nmap(params, nmap)?;
    Ok(exact_loss_and_grad(params, nmap, cfg, None))
}

/// Analytic gradient of [`graph_loss_exact`]; frozen rows come back zero.
pub fn graph_loss_grad_exact<S: Scalar>(
    params: &ParamTable<S>,
    nmap: &NeighborhoodMap,
    cfg: &RegConfig,
) -> Result<ParamTable<S>> {
    cfg.validate()?;
    check_nmap(params, nmap)?;
    let mut grad = ParamTable::zeros_like(params);
    exact_loss_and_grad(params, nmap, cfg, Some(&mut grad));
    zero_frozen(&mut grad);
    Ok(grad)
}

/// Core exact-mode accumulator. Returns the loss; if `grad` is given, adds
/// the full gradient into it (including frozen rows; callers mask).
pub(crate) fn exact_loss_and_grad<S: Scalar>(
    params: &ParamTable<S>,
    nmap: &NeighborhoodMap,
    cfg: &RegConfig,
    mut grad: Option<&mut ParamTable<S>>,
) -> S {
    let n = params.n_rows();
    let d = params.dim();
    let kind = cfg.similarity;
    let t = real::<S>(cfg.temperature);
    let mut loss = S::zero();

    let mut sims = vec![S::zero(); n];
    let mut probs = vec![S::zero(); n];
    let mut d1 = vec![S::zero(); d];
    let mut d2 = vec![S::zero(); d];
    let mut buf = vec![S::zero(); d];

    for y in 0..nmap.n_sources() {
        let ctx = nmap.get(y);
        if ctx.is_empty() {
            continue;
        }
        let cnt = real::<S>(ctx.len() as f64);
        let row_y = params.row(y);

        // log Z_y via log-sum-exp over every row.
        let mut mx = S::neg_infinity();
        for v in 0..n {
            let s = sim_eps(kind, row_y, params.row(v)) / t;
            sims[v] = s;
            if s > mx {
                mx = s;
            }
        }
        let mut z = S::zero();
        for v in 0..n {
            let e = (sims[v] - mx).exp();
            probs[v] = e;
            z += e;
        }
        let log_z = mx + z.ln();
        for p in probs.iter_mut() {
            *p = *p / z;
        }

        loss += cnt * log_z;
        // Pair similarity terms, grouped by run of equal context ids.
        let mut i = 0;
        while i < ctx.len() {
            let nb = ctx[i];
            let mut j = i + 1;
            while j < ctx.len() && ctx[j] == nb {
                j += 1;
            }
            // sims[] already holds sim/T
            let mult = real::<S>((j - i) as f64);
            loss -= mult * sims[nb];
            if let Some(g) = grad.as_deref_mut() {
                sim_partials(kind, params.row(nb), row_y, &mut d1, &mut d2);
                let c = mult / t;
                axpy(g.row_mut(nb), -c, &d1);
                axpy(g.row_mut(y), -c, &d2);
            }
            i = j;
        }

        if let Some(g) = grad.as_deref_mut() {
            // d(log Z_y): softmax-weighted partials. buf accumulates the
            // first-slot parts destined for row y.
            buf.fill(S::zero());
            for v in 0..n {
                sim_partials(kind, row_y, params.row(v), &mut d1, &mut d2);
                let w = probs[v];
                axpy(&mut buf, w, &d1);
                axpy(g.row_mut(v), cnt * w / t, &d2);
            }
            let cy = cnt / t;
            axpy(g.row_mut(y), cy, &buf);
        }
    }
    loss
}

fn axpy<S: Scalar>(out: &mut [S], coef: S, v: &[S]) {
    for (o, &x) in out.iter_mut().zip(v) {
        *o += coef * x;
    }
}

fn zero_frozen<S: Scalar>(grad: &mut ParamTable<S>) {
    for i in 0..grad.n_rows() {
        if !grad.is_trainable(i) {
            grad.row_mut(i).fill(S::zero());
        }
    }
}

/// Numerically stable softplus(x) = log(1 + e^x); note -log sigmoid(x) =
/// softplus(-x).
fn softplus_pos<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + ((-x.abs()).exp() + S::one()).ln()
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Negative-sampling surrogate: loss and gradient in one pass.
///
/// Per pair (y, n): `-log sig(sim(theta_n,theta_y)/T) - sum_k log
/// sig(-sim(theta_k,theta_y)/T)` with `count` negatives drawn uniformly over
/// all rows except y. Frozen gradient rows come back zero.
pub fn graph_loss_ns<S: Scalar>(
    params: &ParamTable<S>,
    nmap: &NeighborhoodMap,
    cfg: &RegConfig,
    rng: &mut impl Rng,
) -> Result<(S, ParamTable<S>)> {
    cfg.validate()?;
    check_nmap(params, nmap)?;
    let count = match cfg.partition {
        PartitionMode::NegativeSampling { count } => count,
        PartitionMode::Exact => 5,
    };
    let mut grad = ParamTable::zeros_like(params);
    let loss = ns_loss_and_grad(params, nmap, cfg, count, None, rng, Some(&mut grad));
    zero_frozen(&mut grad);
    Ok((loss, grad))
}

/// Core negative-sampling accumulator. `degrees` switches the proposal to
/// degree-proportional when present.
pub(crate) fn ns_loss_and_grad<S: Scalar>(
    params: &ParamTable<S>,
    nmap: &NeighborhoodMap,
    cfg: &RegConfig,
    count: usize,
    degrees: Option<&[usize]>,
    rng: &mut impl Rng,
    mut grad: Option<&mut ParamTable<S>>,
) -> S {
    let n = params.n_rows();
    let d = params.dim();
    let kind = cfg.similarity;
    let t = real::<S>(cfg.temperature);
    let mut loss = S::zero();
    let mut d1 = vec![S::zero(); d];
    let mut d2 = vec![S::zero(); d];

    let total_degree: usize = degrees.map(|ds| ds.iter().sum()).unwrap_or(0);

    for y in 0..nmap.n_sources() {
        let ctx = nmap.get(y);
        if ctx.is_empty() {
            continue;
        }
        let row_y = params.row(y);
        for &nb in ctx {
            // positive term
            let z = sim_eps(kind, params.row(nb), row_y) / t;
            loss += softplus_pos(-z);
            if let Some(g) = grad.as_deref_mut() {
                let coef = (sigmoid(z) - S::one()) / t;
                sim_partials(kind, params.row(nb), row_y, &mut d1, &mut d2);
                axpy(g.row_mut(nb), coef, &d1);
                axpy(g.row_mut(y), coef, &d2);
            }
            // negatives
            for _ in 0..count {
                let k = match degrees {
                    None => {
                        let r = rng.random_range(0..n - 1);
                        if r >= y {
                            r + 1
                        } else {
                            r
                        }
                    }
                    Some(ds) => {
                        let avail = total_degree - ds[y];
                        let mut tgt = rng.random_range(0..avail);
                        let mut pick = 0;
                        for (v, &dv) in ds.iter().enumerate() {
                            if v == y {
                                continue;
                            }
                            if tgt < dv {
                                pick = v;
                                break;
                            }
                            tgt -= dv;
                        }
                        pick
                    }
                };
                let zk = sim_eps(kind, params.row(k), row_y) / t;
                loss += softplus_pos(zk);
                if let Some(g) = grad.as_deref_mut() {
                    let coef = sigmoid(zk) / t;
                    sim_partials(kind, params.row(k), row_y, &mut d1, &mut d2);
                    axpy(g.row_mut(k), coef, &d1);
                    axpy(g.row_mut(y), coef, &d2);
                }
            }
        }
    }
    loss
}

/// Ablation neighborhoods: N(y) is exactly the adjacency of y.
pub fn child_parent_neighborhoods(g: &LabelGraph) -> NeighborhoodMap {
    let contexts = (0..g.node_count())
        .map(|v| g.neighbors(v).to_vec())
        .collect();
    NeighborhoodMap::from_contexts(contexts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Pairs per step; 0 means full batch (one step per epoch).
    pub batch: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 8,
            batch: 128,
        }
    }
}

/// Gradient-clip bound used by [`embed_graph`] and the joint fits.
pub const CLIP_NORM: f64 = 5.0;

/// Trains node embeddings for the whole graph by SGD on the graph loss.
///
/// Deterministic given the rng seed: neighborhoods, init, batch order, and
/// negative draws all come from `rng` in a fixed order.
pub fn embed_graph<S: Scalar>(
    g: &LabelGraph,
    d: usize,
    walk_cfg: &WalkConfig,
    cfg: &RegConfig,
    sgd: &SgdConfig,
    rng: &mut impl Rng,
) -> Result<ParamTable<S>> {
    if d < 2 {
        return Err(Error::Config(format!("embedding dim must be >= 2, got {d}")));
    }
    walk_cfg.validate()?;
    cfg.validate()?;
    let nmap = match cfg.neighborhood {
        NeighborhoodMode::RandomWalk => build_neighborhoods(g, walk_cfg, rng),
        NeighborhoodMode::ChildParent => child_parent_neighborhoods(g),
    };
    let mut table: ParamTable<S> = ParamTable::uniform_init(g.names().to_vec(), d, rng);
    if sgd.epochs == 0 || nmap.is_empty() {
        return Ok(table);
    }
    let degrees: Vec<usize> = (0..g.node_count()).map(|v| g.degree(v)).collect();
    let degrees = match cfg.proposal {
        Proposal::Uniform => None,
        Proposal::Degree => Some(degrees.as_slice()),
    };
    let ns_count = match cfg.partition {
        PartitionMode::NegativeSampling { count } => count,
        PartitionMode::Exact => 0,
    };
    let clip = real::<S>(CLIP_NORM);
    let lr = real::<S>(sgd.lr);
    let mut pairs = nmap.pairs();
    let mut iteration = 0usize;
    for _epoch in 0..sgd.epochs {
        let batches: Vec<NeighborhoodMap> = if sgd.batch == 0 {
            vec![nmap.clone()]
        } else {
            pairs.shuffle(rng);
            pairs
                .chunks(sgd.batch)
                .map(|c| NeighborhoodMap::from_pairs(g.node_count(), c))
                .collect()
        };
        for bmap in &batches {
            let mut grad = ParamTable::zeros_like(&table);
            let loss = match cfg.partition {
                PartitionMode::Exact => exact_loss_and_grad(&table, bmap, cfg, Some(&mut grad)),
                PartitionMode::NegativeSampling { .. } => {
                    ns_loss_and_grad(&table, bmap, cfg, ns_count, degrees, rng, Some(&mut grad))
                }
            };
            if !loss.is_finite() {
                return Err(Error::Divergence(iteration));
            }
            grad.clip_trainable(clip);
            table.step(&grad, lr);
            iteration += 1;
        }
    }
    table.check_finite().map_err(|_| Error::Divergence(iteration))?;
    Ok(table)
}

//! Episode generation: synthetic tree benchmark, feature-file datasets,
//! base/novel splits, and N-way K-shot sampling.

use crate::error::{Error, Result};
use crate::graph::{LabelGraph, NodeId};
use crate::param::ParamTable;
use crate::scalar::Scalar;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One labeled example; `y` indexes into the episode's class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled<S> {
    pub x: Vec<S>,
    pub y: usize,
}

/// A few-shot task: disjoint support and query sets over a shared class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<S> {
    /// Class names, in episode order; labels index into this list.
    pub classes: Vec<String>,
    pub support: Vec<Labeled<S>>,
    pub query: Vec<Labeled<S>>,
}

impl<S: Scalar> Episode<S> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.support.first().map(|e| e.x.len()).unwrap_or(0)
    }

    /// Support examples of class `c`.
    pub fn support_of(&self, c: usize) -> impl Iterator<Item = &Labeled<S>> {
        self.support.iter().filter(move |e| e.y == c)
    }

    /// Per-class mean of support vectors; errors when a class has none.
    pub fn support_means(&self) -> Result<Vec<Vec<S>>> {
        let d = self.dim();
        let mut sums = vec![vec![S::zero(); d]; self.n_classes()];
        let mut counts = vec![0usize; self.n_classes()];
        for e in &self.support {
            if e.y >= self.n_classes() {
                return Err(Error::UnknownClass(format!("label index {}", e.y)));
            }
            for (j, &v) in e.x.iter().enumerate() {
                sums[e.y][j] += v;
            }
            counts[e.y] += 1;
        }
        for (c, count) in counts.iter().enumerate() {
            if *count == 0 {
                return Err(Error::EmptySupport(self.classes[c].clone()));
            }
            let inv = S::one() / S::from_real(*count as f64);
            for v in &mut sums[c] {
                *v = *v * inv;
            }
        }
        Ok(sums)
    }

    /// Checks the episode invariants (labels in range, every query class
    /// supported, no shared vectors between support and query).
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n_classes();
        let mut supported = vec![false; n];
        for e in &self.support {
            if e.y >= n {
                return Err(Error::UnknownClass(format!("label index {}", e.y)));
            }
            supported[e.y] = true;
        }
        for e in &self.query {
            if e.y >= n {
                return Err(Error::UnknownClass(format!("label index {}", e.y)));
            }
            if !supported[e.y] {
                return Err(Error::EmptySupport(self.classes[e.y].clone()));
            }
        }
        for q in &self.query {
            if self.support.iter().any(|s| s.x == q.x) {
                return Err(Error::Config("support and query sets overlap".into()));
            }
        }
        Ok(())
    }
}

/// Synthetic benchmark parameters (tree embedding + Gaussian class clouds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub d: usize,
    /// Tree height; the benchmark graph has 2^h leaf classes.
    pub h: usize,
    /// Support shots per class.
    pub k: usize,
    /// Queries per class.
    pub q_count: usize,
    pub sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            d: 4,
            h: 6,
            k: 1,
            q_count: 50,
            sigma: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("d must be >= 2, got {}", self.d)));
        }
        if self.h < 2 {
            return Err(Error::Config(format!("h must be >= 2, got {}", self.h)));
        }
        if self.k < 1 || self.q_count < 1 {
            return Err(Error::Config("k and q_count must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Balanced binary tree of height `h` in heap layout (node i has children
/// 2i+1, 2i+2), names `n0..`, leaves flagged as classes.
pub fn make_binary_tree(h: usize) -> LabelGraph {
    assert!(h >= 1, "tree height must be at least 1");
    let n = (1usize << (h + 1)) - 1;
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for i in 0..n {
        for c in [2 * i + 1, 2 * i + 2] {
            if c < n {
                edges.push((i, c));
            }
        }
    }
    let first_leaf = (1usize << h) - 1;
    let classes: Vec<String> = (first_leaf..n).map(|i| format!("n{i}")).collect();
    LabelGraph::build(names, &edges, &classes).expect("tree construction is valid")
}

/// Base/novel class lists plus (for feature datasets) per-class vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<S> {
    pub base: Vec<String>,
    pub novel: Vec<String>,
    /// Empty in synthetic mode; populated by feature-file loading.
    pub features: BTreeMap<String, Vec<Vec<S>>>,
}

impl<S: Scalar> DatasetSplit<S> {
    pub fn class_features(&self, name: &str) -> Option<&Vec<Vec<S>>> {
        self.features.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Seeded half/half shuffle of the leaves.
    #[default]
    Random,
    /// Left subtree of the root becomes the base set.
    Subtree,
}

/// Splits the class leaves of `g` half/half into base and novel.
pub fn split_leaves<S: Scalar>(
    g: &LabelGraph,
    seed: u64,
    mode: SplitMode,
) -> Result<DatasetSplit<S>> {
    let leaves = g.class_nodes();
    if leaves.len() % 2 != 0 {
        return Err(Error::Graph(format!(
            "cannot split {} classes half/half",
            leaves.len()
        )));
    }
    let half = leaves.len() / 2;
    let (base_ids, novel_ids): (Vec<NodeId>, Vec<NodeId>) = match mode {
        SplitMode::Random => {
            let mut order: Vec<NodeId> = leaves.to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Fisher-Yates; explicit so the split never depends on library
            // shuffle internals.
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut base: Vec<NodeId> = order[..half].to_vec();
            let mut novel: Vec<NodeId> = order[half..].to_vec();
            base.sort_unstable();
            novel.sort_unstable();
            (base, novel)
        }
        SplitMode::Subtree => {
            let root = (0..g.node_count())
                .find(|&v| g.depth(v) == 0)
                .ok_or_else(|| Error::Graph("no root node".into()))?;
            let first_child = *g
                .neighbors(root)
                .first()
                .ok_or_else(|| Error::Graph("root has no children".into()))?;
            // leaves reachable from first_child without passing the root
            let mut in_left = vec![false; g.node_count()];
            in_left[first_child] = true;
            let mut queue = std::collections::VecDeque::from([first_child]);
            while let Some(v) = queue.pop_front() {
                for &u in g.neighbors(v) {
                    if u != root && !in_left[u] {
                        in_left[u] = true;
                        queue.push_back(u);
                    }
                }
            }
            let base: Vec<NodeId> = leaves.iter().copied().filter(|&l| in_left[l]).collect();
            let novel: Vec<NodeId> = leaves.iter().copied().filter(|&l| !in_left[l]).collect();
            if base.len() != half {
                return Err(Error::Graph(format!(
                    "subtree split is uneven: {} vs {}",
                    base.len(),
                    novel.len()
                )));
            }
            (base, novel)
        }
    };
    Ok(DatasetSplit {
        base: base_ids.iter().map(|&v| g.name(v).to_string()).collect(),
        novel: novel_ids.iter().map(|&v| g.name(v).to_string()).collect(),
        features: BTreeMap::new(),
    })
}

/// Samples one synthetic episode: for every novel class, `k` support and
/// `q_count` query vectors from an isotropic Gaussian centered at the class
/// embedding with per-coordinate std `sigma`.
///
/// Draw order is fixed (classes in split order, support before query), so a
/// seeded rng reproduces the episode byte for byte.
pub fn sample_synthetic_episode<S: Scalar>(
    embeddings: &ParamTable<S>,
    split: &DatasetSplit<S>,
    cfg: &SyntheticConfig,
    rng: &mut impl Rng,
) -> Result<Episode<S>> {
    cfg.validate()?;
    let mut support = Vec::with_capacity(split.novel.len() * cfg.k);
    let mut query = Vec::with_capacity(split.novel.len() * cfg.q_count);
    for (c, name) in split.novel.iter().enumerate() {
        let row = embeddings
            .index_of(name)
            .ok_or_else(|| Error::UnknownClass(name.clone()))?;
        let mean = embeddings.row(row);
        if mean.len() != cfg.d {
            return Err(Error::DimMismatch {
                expected: cfg.d,
                got: mean.len(),
            });
        }
        let draw = |rng: &mut dyn rand::RngCore| -> Vec<S> {
            mean.iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + S::from_real(z * cfg.sigma)
                })
                .collect()
        };
        for _ in 0..cfg.k {
            support.push(Labeled { x: draw(rng), y: c });
        }
        for _ in 0..cfg.q_count {
            query.push(Labeled { x: draw(rng), y: c });
        }
    }
    Ok(Episode {
        classes: split.novel.clone(),
        support,
        query,
    })
}

/// Samples an N-way K-shot episode from a feature dataset (classes and
/// examples uniformly without replacement; support and query disjoint).
pub fn sample_episode<S: Scalar>(
    ds: &DatasetSplit<S>,
    n_way: usize,
    k_shot: usize,
    q_count: usize,
    rng: &mut impl Rng,
) -> Result<Episode<S>> {
    if ds.novel.len() < n_way {
        return Err(Error::Insufficient(format!(
            "{} novel classes but n_way={n_way}",
            ds.novel.len()
        )));
    }
    let mut class_order: Vec<usize> = (0..ds.novel.len()).collect();
    partial_shuffle(&mut class_order, n_way, rng);
    let mut support = Vec::new();
    let mut query = Vec::new();
    let mut classes = Vec::with_capacity(n_way);
    for (c, &ci) in class_order[..n_way].iter().enumerate() {
        let name = &ds.novel[ci];
        let vecs = ds
            .features
            .get(name)
            .ok_or_else(|| Error::UnknownClass(name.clone()))?;
        if vecs.len() < k_shot + q_count {
            return Err(Error::Insufficient(format!(
                "class {name:?} has {} examples, need {}",
                vecs.len(),
                k_shot + q_count
            )));
        }
        let mut idx: Vec<usize> = (0..vecs.len()).collect();
        partial_shuffle(&mut idx, k_shot + q_count, rng);
        for &i in &idx[..k_shot] {
            support.push(Labeled { x: vecs[i].clone(), y: c });
        }
        for &i in &idx[k_shot..k_shot + q_count] {
            query.push(Labeled { x: vecs[i].clone(), y: c });
        }
        classes.push(name.clone());
    }
    Ok(Episode { classes, support, query })
}

/// First `take` slots get a uniform sample without replacement.
fn partial_shuffle(idx: &mut [usize], take: usize, rng: &mut impl Rng) {
    let n = idx.len();
    for i in 0..take.min(n.saturating_sub(1)) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
}

// --- feature files ---

/// Parses the feature-file format:
///
/// ```text
/// classes=<n> dim=<d>
/// <class-name> <count>
/// <d decimals per line, count lines>
/// ...
/// ```
pub fn load_feature_file<S: Scalar>(text: &str) -> Result<BTreeMap<String, Vec<Vec<S>>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty feature file".into(),
    })?;
    let mut toks = header.split_whitespace();
    let n_classes = parse_kv(toks.next(), "classes=", 1)?;
    let dim = parse_kv(toks.next(), "dim=", 1)?;
    if toks.next().is_some() {
        return Err(Error::Parse {
            line: 1,
            msg: "trailing tokens in header".into(),
        });
    }
    let mut map = BTreeMap::new();
    for _ in 0..n_classes {
        let (lineno, head) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "missing class block".into(),
        })?;
        let mut toks = head.split_whitespace();
        let name = toks.next().unwrap_or("").to_string();
        let count: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected '<class> <count>', got {head:?}"),
            })?;
        if name.is_empty() || toks.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected '<class> <count>', got {head:?}"),
            });
        }
        let mut vecs = Vec::with_capacity(count);
        for _ in 0..count {
            let (vlineno, vline) = lines.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("class {name:?} declares {count} vectors but the file ends early"),
            })?;
            let mut row = Vec::with_capacity(dim);
            for tok in vline.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: vlineno + 1,
                    msg: format!("bad number {tok:?}"),
                })?;
                row.push(S::from_real(v));
            }
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            vecs.push(row);
        }
        if map.insert(name.clone(), vecs).is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("class {name:?} appears twice"),
            });
        }
    }
    if let Some((lineno, _)) = lines.next() {
        return Err(Error::Parse {
            line: lineno + 1,
            msg: "trailing content after declared classes".into(),
        });
    }
    Ok(map)
}

fn parse_kv(tok: Option<&str>, key: &str, line: usize) -> Result<usize> {
    tok.and_then(|t| t.strip_prefix(key))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected {key}<int>"),
        })
}

pub fn save_feature_file<S: Scalar>(
    map: &BTreeMap<String, Vec<Vec<S>>>,
    w: &mut impl Write,
) -> Result<()> {
    let dim = map
        .values()
        .flat_map(|v| v.first())
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    writeln!(w, "classes={} dim={}", map.len(), dim)?;
    for (name, vecs) in map {
        writeln!(w, "{name} {}", vecs.len())?;
        for v in vecs {
            let mut first = true;
            for x in v {
                if !first {
                    write!(w, " ")?;
                }
                write!(w, "{:?}", x.to_real())?;
                first = false;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Parses the two-line split manifest `base: a,b` / `novel: c,d`.
pub fn load_split_manifest(text: &str) -> Result<(Vec<String>, Vec<String>)> {
    let mut base = None;
    let mut novel = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected 'base:' or 'novel:', got {line:?}"),
        })?;
        let names: Vec<String> = rest
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        match key.trim() {
            "base" if base.is_none() => base = Some(names),
            "novel" if novel.is_none() => novel = Some(names),
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("unexpected or repeated key {other:?}"),
                })
            }
        }
    }
    match (base, novel) {
        (Some(b), Some(n)) => Ok((b, n)),
        _ => Err(Error::Config("manifest must declare both base: and novel: lines".into())),
    }
}

/// Loads a feature file plus split manifest into a dataset.
pub fn load_feature_dataset<S: Scalar>(feature_text: &str, manifest_text: &str) -> Result<DatasetSplit<S>> {
    let features = load_feature_file(feature_text)?;
    let (base, novel) = load_split_manifest(manifest_text)?;
    for name in base.iter().chain(&novel) {
        if !features.contains_key(name) {
            return Err(Error::UnknownClass(name.clone()));
        }
    }
    for b in &base {
        if novel.contains(b) {
            return Err(Error::Config(format!("class {b:?} is both base and novel")));
        }
    }
    Ok(DatasetSplit { base, novel, features })
}

pub fn load_feature_dataset_paths<S: Scalar>(
    feature_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<DatasetSplit<S>> {
    let ftext = std::fs::read_to_string(feature_path)?;
    let mtext = std::fs::read_to_string(manifest_path)?;
    load_feature_dataset(&ftext, &mtext)
}

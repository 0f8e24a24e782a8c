//! Experiment config files: flat key = value lines with repeated `[arm]`
//! sections. The format is deliberately dumb so that byte-identical
//! configs give byte-identical runs.
//!
//! ```text
//! mode = synth
//! h = 4,5
//! shots = 1,5
//! sigma = 0.2
//! episodes = 50
//! seed = 42
//!
//! [arm]
//! name = baseline
//! learner = cosine
//! lambda = 0
//!
//! [arm]
//! name = graphreg
//! learner = cosine
//! lambda = default
//! ```

use graphfsl::learners::{InitStrategy, LearnerKind};
use graphfsl::reg::{NeighborhoodMode, PartitionMode, SimilarityKind};
use graphfsl::tasks::SplitMode;
use graphfsl::walks::WalkConfig;
use std::collections::HashSet;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synth,
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    /// Resolved per cell by the published shot schedule (5/3/1).
    ByShots,
}

#[derive(Debug, Clone)]
pub struct ArmConfig {
    pub name: String,
    pub learner: LearnerKind,
    pub lambda: LambdaSpec,
    pub init: InitStrategy,
    pub temperature: f64,
    pub partition: PartitionMode,
    pub neighborhood: NeighborhoodMode,
    /// Bottom taxonomy layers removed from the regularizer's graph.
    pub layers_removed: usize,
    /// None = learner default (100, or 5 for inner-loop).
    pub iterations: Option<usize>,
    pub lr: f64,
    pub batch: usize,
}

impl ArmConfig {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            learner: LearnerKind::Cosine,
            lambda: LambdaSpec::ByShots,
            init: InitStrategy::Random,
            temperature: 2.0,
            partition: PartitionMode::Exact,
            neighborhood: NeighborhoodMode::RandomWalk,
            layers_removed: 0,
            iterations: None,
            lr: 0.1,
            batch: 0,
        }
    }

    pub fn resolved_iterations(&self) -> usize {
        self.iterations.unwrap_or(match self.learner {
            LearnerKind::InnerLoop => 5,
            _ => 100,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EmbedSettings {
    pub similarity: SimilarityKind,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub negatives: usize,
}

impl Default for EmbedSettings {
    fn default() -> Self {
        Self {
            similarity: SimilarityKind::Dot,
            epochs: 8,
            lr: 0.05,
            batch: 128,
            negatives: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub hs: Vec<usize>,
    pub shots: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub d: usize,
    pub episodes: usize,
    pub queries: usize,
    pub seed: u64,
    pub split: SplitMode,
    pub embed: EmbedSettings,
    pub walk: WalkConfig,
    pub out: PathBuf,
    /// When set, the first episode of the first cell is written here as a
    /// text file together with the last arm's fitted weights.
    pub dump_episode: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub graph_classes: Option<PathBuf>,
    pub n_way: usize,
    pub arms: Vec<ArmConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Synth,
            hs: vec![4],
            shots: vec![1],
            sigmas: vec![0.2],
            d: 4,
            episodes: 50,
            queries: 15,
            seed: 42,
            split: SplitMode::Random,
            embed: EmbedSettings::default(),
            walk: WalkConfig::default(),
            out: PathBuf::from("out"),
            dump_episode: None,
            features: None,
            manifest: None,
            graph: None,
            graph_classes: None,
            n_way: 5,
            arms: Vec::new(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<T>()
                .map_err(|_| format!("bad list entry {part:?}"))?,
        );
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_scalar<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("bad value {v:?}"))
}

fn parse_learner(v: &str) -> Result<LearnerKind, String> {
    match v {
        "prototype" | "proto" => Ok(LearnerKind::Prototype),
        "cosine" => Ok(LearnerKind::Cosine),
        "inner-loop" | "innerloop" => Ok(LearnerKind::InnerLoop),
        _ => Err(format!("unknown learner {v:?} (prototype|cosine|inner-loop)")),
    }
}

fn parse_init(v: &str) -> Result<InitStrategy, String> {
    match v {
        "random" | "a" => Ok(InitStrategy::Random),
        "closest" | "closest-class" | "b" => Ok(InitStrategy::ClosestClass),
        "graphreg" | "graph-reg" | "c" => Ok(InitStrategy::GraphReg),
        _ => Err(format!("unknown init {v:?} (random|closest|graphreg or a|b|c)")),
    }
}

fn parse_similarity(v: &str) -> Result<SimilarityKind, String> {
    match v {
        "dot" => Ok(SimilarityKind::Dot),
        "cosine" => Ok(SimilarityKind::Cosine),
        "neg-sq-euclidean" | "negsq" => Ok(SimilarityKind::NegSqEuclidean),
        _ => Err(format!("unknown similarity {v:?}")),
    }
}

fn parse_partition(v: &str) -> Result<PartitionMode, String> {
    if v == "exact" {
        return Ok(PartitionMode::Exact);
    }
    if let Some(n) = v.strip_prefix("ns:") {
        let count: usize = n
            .parse()
            .map_err(|_| format!("bad negative count {n:?}"))?;
        return Ok(PartitionMode::NegativeSampling { count });
    }
    Err(format!("unknown partition {v:?} (exact or ns:<count>)"))
}

fn parse_neighborhood(v: &str) -> Result<NeighborhoodMode, String> {
    match v {
        "walk" | "random-walk" => Ok(NeighborhoodMode::RandomWalk),
        "child-parent" | "childparent" => Ok(NeighborhoodMode::ChildParent),
        _ => Err(format!("unknown neighborhood {v:?} (walk|child-parent)")),
    }
}

/// Parses and validates; all problems are reported together.
pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    parse_inner(text, true)
}

/// As [`parse`], but without the at-least-one-arm requirement. The ablate
/// subcommand generates the arms itself.
pub fn parse_ablation_base(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    parse_inner(text, false)
}

fn parse_inner(text: &str, require_arms: bool) -> Result<ExperimentConfig, Vec<String>> {
    let mut cfg = ExperimentConfig::default();
    let mut errors: Vec<String> = Vec::new();
    let mut in_arm: Option<ArmConfig> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[arm]" {
            if let Some(arm) = in_arm.take() {
                cfg.arms.push(arm);
            }
            in_arm = Some(ArmConfig::new(format!("arm{}", cfg.arms.len() + 1)));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {lineno}: expected key = value, got {line:?}"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let res: Result<(), String> = if let Some(arm) = in_arm.as_mut() {
            apply_arm_key(arm, key, value)
        } else {
            apply_global_key(&mut cfg, key, value)
        };
        if let Err(e) = res {
            errors.push(format!("line {lineno}: {key}: {e}"));
        }
    }
    if let Some(arm) = in_arm.take() {
        cfg.arms.push(arm);
    }

    validate(&cfg, require_arms, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

fn apply_global_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "mode" => {
            cfg.mode = match value {
                "synth" => Mode::Synth,
                "features" => Mode::Features,
                _ => return Err(format!("unknown mode {value:?} (synth|features)")),
            }
        }
        "h" => cfg.hs = parse_list(value)?,
        "shots" => cfg.shots = parse_list(value)?,
        "sigma" => cfg.sigmas = parse_list(value)?,
        "d" => cfg.d = parse_scalar(value)?,
        "episodes" => cfg.episodes = parse_scalar(value)?,
        "queries" => cfg.queries = parse_scalar(value)?,
        "seed" => cfg.seed = parse_scalar(value)?,
        "split" => {
            cfg.split = match value {
                "random" => SplitMode::Random,
                "subtree" => SplitMode::Subtree,
                _ => return Err(format!("unknown split {value:?} (random|subtree)")),
            }
        }
        "embed-sim" => cfg.embed.similarity = parse_similarity(value)?,
        "embed-epochs" => cfg.embed.epochs = parse_scalar(value)?,
        "embed-lr" => cfg.embed.lr = parse_scalar(value)?,
        "embed-batch" => cfg.embed.batch = parse_scalar(value)?,
        "embed-negatives" => cfg.embed.negatives = parse_scalar(value)?,
        "walk-p" => cfg.walk.p = parse_scalar(value)?,
        "walk-q" => cfg.walk.q = parse_scalar(value)?,
        "walk-length" => cfg.walk.walk_length = parse_scalar(value)?,
        "walks-per-node" => cfg.walk.walks_per_node = parse_scalar(value)?,
        "window" => cfg.walk.window = parse_scalar(value)?,
        "out" => cfg.out = PathBuf::from(value),
        "dump-episode" => cfg.dump_episode = Some(PathBuf::from(value)),
        "features" => cfg.features = Some(PathBuf::from(value)),
        "classes" => cfg.manifest = Some(PathBuf::from(value)),
        "graph" => cfg.graph = Some(PathBuf::from(value)),
        "graph-classes" => cfg.graph_classes = Some(PathBuf::from(value)),
        "n-way" => cfg.n_way = parse_scalar(value)?,
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

fn apply_arm_key(arm: &mut ArmConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "name" => arm.name = value.to_string(),
        "learner" => arm.learner = parse_learner(value)?,
        "lambda" => {
            arm.lambda = if value == "default" {
                LambdaSpec::ByShots
            } else {
                let l: f64 = parse_scalar(value)?;
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(format!("lambda must be >= 0, got {l}"));
                }
                LambdaSpec::Fixed(l)
            }
        }
        "init" => arm.init = parse_init(value)?,
        "temperature" => arm.temperature = parse_scalar(value)?,
        "partition" => arm.partition = parse_partition(value)?,
        "neighborhood" => arm.neighborhood = parse_neighborhood(value)?,
        "layers-removed" => arm.layers_removed = parse_scalar(value)?,
        "iterations" => arm.iterations = Some(parse_scalar(value)?),
        "lr" => arm.lr = parse_scalar(value)?,
        "batch" => arm.batch = parse_scalar(value)?,
        _ => return Err("unknown arm key".into()),
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig, require_arms: bool, errors: &mut Vec<String>) {
    if require_arms && cfg.arms.is_empty() {
        errors.push("config needs at least one [arm] section".into());
    }
    if cfg.episodes < 1 {
        errors.push("episodes must be >= 1".into());
    }
    if cfg.queries < 1 {
        errors.push("queries must be >= 1".into());
    }
    if cfg.d < 2 {
        errors.push("d must be >= 2".into());
    }
    let mut names = HashSet::new();
    for arm in &cfg.arms {
        if !names.insert(arm.name.clone()) {
            errors.push(format!("duplicate arm name {:?}", arm.name));
        }
        if arm.name.is_empty() || arm.name.contains(',') {
            errors.push(format!(
                "arm name {:?} must be nonempty and comma-free (it becomes a CSV field)",
                arm.name
            ));
        }
        if !(arm.temperature > 0.0 && arm.temperature.is_finite()) {
            errors.push(format!("arm {:?}: temperature must be positive", arm.name));
        }
        if !(arm.lr > 0.0 && arm.lr.is_finite()) {
            errors.push(format!("arm {:?}: lr must be positive", arm.name));
        }
        if let PartitionMode::NegativeSampling { count } = arm.partition {
            if count == 0 {
                errors.push(format!("arm {:?}: ns count must be >= 1", arm.name));
            }
        }
    }
    match cfg.mode {
        Mode::Synth => {
            for &h in &cfg.hs {
                if h < 2 {
                    errors.push(format!("h must be >= 2, got {h}"));
                }
                for arm in &cfg.arms {
                    if arm.layers_removed >= h {
                        errors.push(format!(
                            "arm {:?}: cannot remove {} layers from an h={h} tree",
                            arm.name, arm.layers_removed
                        ));
                    }
                }
            }
            for &s in &cfg.sigmas {
                if !(s > 0.0 && s.is_finite()) {
                    errors.push(format!("sigma must be positive, got {s}"));
                }
            }
        }
        Mode::Features => {
            if cfg.features.is_none() {
                errors.push("features mode needs features = <path>".into());
            }
            if cfg.manifest.is_none() {
                errors.push("features mode needs classes = <path>".into());
            }
            if cfg.graph.is_none() {
                errors.push("features mode needs graph = <path>".into());
            }
            if cfg.n_way < 2 {
                errors.push("n-way must be >= 2".into());
            }
            for arm in &cfg.arms {
                if arm.layers_removed > 0 {
                    errors.push(format!(
                        "arm {:?}: layers-removed is only supported for tree graphs in synth mode",
                        arm.name
                    ));
                }
            }
        }
    }
    for &k in &cfg.shots {
        if k < 1 {
            errors.push(format!("shots must be >= 1, got {k}"));
        }
    }
    if let Err(e) = cfg.walk.validate() {
        errors.push(format!("walk settings: {e}"));
    }
}

/// Ablation families for the `ablate` subcommand: each expands a base
/// config (which must not define arms) into a standard arm set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblateFamily {
    Neighborhood,
    Layers,
    Init,
}

pub fn expand_ablation(
    cfg: &mut ExperimentConfig,
    family: AblateFamily,
    layers: &[usize],
) -> Result<(), Vec<String>> {
    if !cfg.arms.is_empty() {
        return Err(vec![
            "ablate generates its own arms; remove [arm] sections from the config".into(),
        ]);
    }
    let base = ArmConfig::new(String::new());
    match family {
        AblateFamily::Neighborhood => {
            cfg.arms.push(ArmConfig {
                name: "baseline".into(),
                lambda: LambdaSpec::Fixed(0.0),
                ..base.clone()
            });
            cfg.arms.push(ArmConfig {
                name: "walk".into(),
                neighborhood: NeighborhoodMode::RandomWalk,
                ..base.clone()
            });
            cfg.arms.push(ArmConfig {
                name: "child-parent".into(),
                neighborhood: NeighborhoodMode::ChildParent,
                ..base
            });
        }
        AblateFamily::Layers => {
            if layers.is_empty() {
                return Err(vec!["layers ablation needs --layers".into()]);
            }
            for &l in layers {
                cfg.arms.push(ArmConfig {
                    name: format!("layers-{l}"),
                    layers_removed: l,
                    ..base.clone()
                });
            }
        }
        AblateFamily::Init => {
            for (name, init) in [
                ("init-a", InitStrategy::Random),
                ("init-b", InitStrategy::ClosestClass),
                ("init-c", InitStrategy::GraphReg),
            ] {
                cfg.arms.push(ArmConfig {
                    name: name.into(),
                    init,
                    ..base.clone()
                });
            }
        }
    }
    // re-validate with the generated arms
    let mut errors = Vec::new();
    validate(cfg, true, &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

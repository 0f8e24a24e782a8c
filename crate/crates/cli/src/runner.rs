//! Experiment orchestration: expands the config into a cell grid, prepares
//! per-height caches (embedding, split, graph variants, neighborhoods,
//! anchors), runs episodes in parallel, and renders the CSV artifacts.
//!
//! Determinism contract: every random draw is seeded from the master seed
//! through labeled derivations, and episodes are keyed by (cell, episode)
//! rather than by schedule order, so worker count never changes output
//! bytes. Results are sorted by (cell, episode, arm) before writing.

use crate::config::{ArmConfig, ExperimentConfig, LambdaSpec, Mode};
use graphfsl::graph::{load_edge_list, load_edge_list_with_classes, LabelGraph};
use graphfsl::learners::{
    feature_base_anchors, fit, lambda_for_shots, synthetic_base_anchors, Classifier, FitContext,
    JointConfig, LearnerKind, OptConfig,
};
use graphfsl::metrics::{hardness, paired_gap_test, summarize, TaskResult};
use graphfsl::param::ParamTable;
use graphfsl::reg::{
    child_parent_neighborhoods, NeighborhoodMode, PartitionMode, RegConfig, SgdConfig,
};
use graphfsl::walks::{build_neighborhoods, NeighborhoodMap};
use graphfsl::seed::{derive, derive2};
use graphfsl::tasks::{
    make_binary_tree, sample_episode, sample_synthetic_episode, split_leaves, DatasetSplit,
    Episode, SyntheticConfig,
};
use graphfsl::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Draws averaged into each synthetic base-class anchor.
pub const ANCHOR_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct CellSpec {
    pub index: usize,
    pub h: usize,
    pub sigma: f64,
    pub shots: usize,
    h_idx: usize,
    sigma_idx: usize,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub cell: usize,
    pub episode: usize,
    pub arm: usize,
    pub arm_name: String,
    pub lambda: f64,
    pub result: TaskResult,
}

#[derive(Debug, Clone)]
pub struct DivergenceRecord {
    pub cell: usize,
    pub arm_name: String,
    pub episode: usize,
    pub iteration: usize,
}

pub struct RunOutput {
    pub cells: Vec<CellSpec>,
    pub rows: Vec<Row>,
    pub divergences: Vec<DivergenceRecord>,
    /// First episode of the first cell plus the last arm's fitted weights,
    /// captured when the config asks for an episode dump.
    pub dump: Option<(Episode<f64>, Option<Classifier<f64>>)>,
}

pub fn resolve_lambda(arm: &ArmConfig, shots: usize) -> f64 {
    match arm.lambda {
        LambdaSpec::Fixed(l) => l,
        LambdaSpec::ByShots => lambda_for_shots(shots),
    }
}

fn joint_for(arm: &ArmConfig, lambda: f64) -> JointConfig {
    let mut joint = match arm.learner {
        LearnerKind::Prototype => JointConfig::prototype_default(),
        LearnerKind::Cosine => JointConfig::cosine_default(),
        LearnerKind::InnerLoop => JointConfig::inner_loop_default(),
    };
    joint.lambda = lambda;
    joint.reg.temperature = arm.temperature;
    joint.reg.partition = arm.partition;
    joint.reg.neighborhood = arm.neighborhood;
    joint.init = arm.init;
    joint.opt = OptConfig {
        lr: arm.lr,
        iterations: arm.resolved_iterations(),
        batch: arm.batch,
    };
    joint
}

/// Everything derived once per tree height in synthetic mode.
struct SynthPrep {
    emb: ParamTable<f64>,
    split: DatasetSplit<f64>,
    /// Regularizer graph per distinct layers-removed value; entry 0 is the
    /// full tree.
    variants: Vec<(usize, LabelGraph)>,
    nmaps: Vec<(usize, NeighborhoodMode, NeighborhoodMap)>,
    /// Indexed like the config's sigma list.
    anchors: Vec<BTreeMap<String, Vec<f64>>>,
}

struct FeatPrep {
    ds: DatasetSplit<f64>,
    graph: LabelGraph,
    nmaps: Vec<(NeighborhoodMode, NeighborhoodMap)>,
    anchors: BTreeMap<String, Vec<f64>>,
}

enum Prep {
    Synth(Vec<SynthPrep>),
    Feat(Box<FeatPrep>),
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prep> {
    match cfg.mode {
        Mode::Synth => {
            let mut preps = Vec::with_capacity(cfg.hs.len());
            for &h in &cfg.hs {
                preps.push(prepare_height(cfg, h)?);
            }
            Ok(Prep::Synth(preps))
        }
        Mode::Features => Ok(Prep::Feat(Box::new(prepare_features(cfg)?))),
    }
}

fn prepare_height(cfg: &ExperimentConfig, h: usize) -> Result<SynthPrep> {
    let g = make_binary_tree(h);
    let embed_reg = RegConfig {
        similarity: cfg.embed.similarity,
        partition: PartitionMode::NegativeSampling {
            count: cfg.embed.negatives,
        },
        ..RegConfig::default()
    };
    let sgd = SgdConfig {
        lr: cfg.embed.lr,
        epochs: cfg.embed.epochs,
        batch: cfg.embed.batch,
    };
    let mut erng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, "embed", h as u64));
    let emb = graphfsl::reg::embed_graph::<f64>(&g, cfg.d, &cfg.walk, &embed_reg, &sgd, &mut erng)?;
    let split = split_leaves::<f64>(&g, derive(cfg.seed, "split", h as u64), cfg.split)?;

    let mut anchors = Vec::with_capacity(cfg.sigmas.len());
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let mut arng =
            ChaCha8Rng::seed_from_u64(derive2(cfg.seed, "anchors", h as u64, si as u64));
        anchors.push(synthetic_base_anchors(
            &emb,
            &split.base,
            sigma,
            ANCHOR_SAMPLES,
            &mut arng,
        )?);
    }

    let mut variants: Vec<(usize, LabelGraph)> = vec![(0, g)];
    for arm in &cfg.arms {
        let l = arm.layers_removed;
        if !variants.iter().any(|(vl, _)| *vl == l) {
            let cut = variants[0].1.remove_bottom_layers(l)?;
            variants.push((l, cut));
        }
    }
    let mut nmaps: Vec<(usize, NeighborhoodMode, NeighborhoodMap)> = Vec::new();
    for arm in &cfg.arms {
        let key = (arm.layers_removed, arm.neighborhood);
        if nmaps.iter().any(|(l, m, _)| (*l, *m) == key) {
            continue;
        }
        let variant = &variants.iter().find(|(vl, _)| *vl == key.0).unwrap().1;
        let nmap = match arm.neighborhood {
            NeighborhoodMode::RandomWalk => {
                let mut wrng = ChaCha8Rng::seed_from_u64(derive2(
                    cfg.seed,
                    "nmap",
                    h as u64,
                    key.0 as u64,
                ));
                build_neighborhoods(variant, &cfg.walk, &mut wrng)
            }
            NeighborhoodMode::ChildParent => child_parent_neighborhoods(variant),
        };
        nmaps.push((key.0, key.1, nmap));
    }
    Ok(SynthPrep {
        emb,
        split,
        variants,
        nmaps,
        anchors,
    })
}

fn prepare_features(cfg: &ExperimentConfig) -> Result<FeatPrep> {
    let fpath = cfg.features.as_ref().expect("validated");
    let mpath = cfg.manifest.as_ref().expect("validated");
    let gpath = cfg.graph.as_ref().expect("validated");
    let ds = graphfsl::tasks::load_feature_dataset_paths::<f64>(fpath, mpath)?;
    let gtext = std::fs::read_to_string(gpath)?;
    let graph = match &cfg.graph_classes {
        Some(cpath) => {
            let ctext = std::fs::read_to_string(cpath)?;
            load_edge_list_with_classes(&gtext, &ctext)?
        }
        None => load_edge_list(&gtext)?,
    };
    for name in ds.base.iter().chain(&ds.novel) {
        if graph.node_by_name(name).is_none() {
            return Err(Error::UnknownClass(name.clone()));
        }
    }
    let anchors = feature_base_anchors(&ds)?;
    let mut nmaps: Vec<(NeighborhoodMode, NeighborhoodMap)> = Vec::new();
    for arm in &cfg.arms {
        if nmaps.iter().any(|(m, _)| *m == arm.neighborhood) {
            continue;
        }
        let nmap = match arm.neighborhood {
            NeighborhoodMode::RandomWalk => {
                let mut wrng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, "nmap", 0));
                build_neighborhoods(&graph, &cfg.walk, &mut wrng)
            }
            NeighborhoodMode::ChildParent => child_parent_neighborhoods(&graph),
        };
        nmaps.push((arm.neighborhood, nmap));
    }
    Ok(FeatPrep {
        ds,
        graph,
        nmaps,
        anchors,
    })
}

fn build_cells(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    match cfg.mode {
        Mode::Synth => {
            for (h_idx, &h) in cfg.hs.iter().enumerate() {
                for (sigma_idx, &sigma) in cfg.sigmas.iter().enumerate() {
                    for &shots in &cfg.shots {
                        cells.push(CellSpec {
                            index: cells.len(),
                            h,
                            sigma,
                            shots,
                            h_idx,
                            sigma_idx,
                        });
                    }
                }
            }
        }
        Mode::Features => {
            for &shots in &cfg.shots {
                cells.push(CellSpec {
                    index: cells.len(),
                    h: 0,
                    sigma: 0.0,
                    shots,
                    h_idx: 0,
                    sigma_idx: 0,
                });
            }
        }
    }
    cells
}

struct JobOut {
    rows: Vec<Row>,
    divergences: Vec<DivergenceRecord>,
    dump: Option<(Episode<f64>, Option<Classifier<f64>>)>,
}

fn run_job(
    cfg: &ExperimentConfig,
    prep: &Prep,
    cell: &CellSpec,
    ep: usize,
    want_dump: bool,
) -> Result<JobOut> {
    let eseed = derive2(cfg.seed, "episode", cell.index as u64, ep as u64);
    let mut erng = ChaCha8Rng::seed_from_u64(eseed);
    let episode = match prep {
        Prep::Synth(preps) => {
            let p = &preps[cell.h_idx];
            let scfg = SyntheticConfig {
                d: cfg.d,
                h: cell.h,
                k: cell.shots,
                q_count: cfg.queries,
                sigma: cell.sigma,
            };
            sample_synthetic_episode(&p.emb, &p.split, &scfg, &mut erng)?
        }
        Prep::Feat(p) => sample_episode(&p.ds, cfg.n_way, cell.shots, cfg.queries, &mut erng)?,
    };
    let (hard, _clamped) = hardness(&episode)?;
    let fseed = derive2(cfg.seed, "fit", cell.index as u64, ep as u64);

    let mut out = JobOut {
        rows: Vec::with_capacity(cfg.arms.len()),
        divergences: Vec::new(),
        dump: None,
    };
    let mut last_fit: Option<Classifier<f64>> = None;
    for (ai, arm) in cfg.arms.iter().enumerate() {
        let lambda = resolve_lambda(arm, cell.shots);
        let (graph, nmap, anchors) = match prep {
            Prep::Synth(preps) => {
                let p = &preps[cell.h_idx];
                let graph = &p
                    .variants
                    .iter()
                    .find(|(l, _)| *l == arm.layers_removed)
                    .expect("prepared variant")
                    .1;
                let nmap = &p
                    .nmaps
                    .iter()
                    .find(|(l, m, _)| *l == arm.layers_removed && *m == arm.neighborhood)
                    .expect("prepared neighborhoods")
                    .2;
                (graph, nmap, &p.anchors[cell.sigma_idx])
            }
            Prep::Feat(p) => {
                let nmap = &p
                    .nmaps
                    .iter()
                    .find(|(m, _)| *m == arm.neighborhood)
                    .expect("prepared neighborhoods")
                    .1;
                (&p.graph, nmap, &p.anchors)
            }
        };
        let ctx = FitContext {
            graph,
            nmap,
            anchors,
        };
        let joint = joint_for(arm, lambda);
        // every arm fits from the same seed, so random inits and batch
        // orders match across arms and per-episode gaps are paired
        let mut frng = ChaCha8Rng::seed_from_u64(fseed);
        match fit(&episode, &ctx, &joint, arm.learner, &mut frng) {
            Ok(c) => {
                let (accuracy, loss) = c.evaluate(&episode)?;
                out.rows.push(Row {
                    cell: cell.index,
                    episode: ep,
                    arm: ai,
                    arm_name: arm.name.clone(),
                    lambda,
                    result: TaskResult {
                        seed: eseed,
                        accuracy,
                        loss,
                        hardness: hard,
                    },
                });
                last_fit = Some(c);
            }
            Err(Error::Divergence(iteration)) => {
                out.divergences.push(DivergenceRecord {
                    cell: cell.index,
                    arm_name: arm.name.clone(),
                    episode: ep,
                    iteration,
                });
                last_fit = None;
            }
            Err(e) => return Err(e),
        }
    }
    if want_dump && cell.index == 0 && ep == 0 {
        out.dump = Some((episode, last_fit));
    }
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let prep = prepare(cfg)?;
    let cells = build_cells(cfg);
    let want_dump = cfg.dump_episode.is_some();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .flat_map(|c| (0..cfg.episodes).map(move |e| (c.index, e)))
        .collect();
    let outs: Vec<JobOut> = jobs
        .par_iter()
        .map(|&(ci, ep)| run_job(cfg, &prep, &cells[ci], ep, want_dump))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut divergences = Vec::new();
    let mut dump = None;
    for mut o in outs {
        rows.append(&mut o.rows);
        divergences.append(&mut o.divergences);
        if o.dump.is_some() {
            dump = o.dump;
        }
    }
    rows.sort_by(|a, b| (a.cell, a.episode, a.arm).cmp(&(b.cell, b.episode, b.arm)));
    divergences.sort_by(|a, b| (a.cell, a.episode).cmp(&(b.cell, b.episode)));
    Ok(RunOutput {
        cells,
        rows,
        divergences,
        dump,
    })
}

/// As [`run`], on a dedicated rayon pool. `workers` 0 keeps the default.
pub fn run_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    if workers == 0 {
        return run(cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run(cfg))
}

pub const RESULTS_HEADER: &str = "seed,shots,h,sigma,lambda,learner,accuracy,loss,hardness";

pub fn results_csv(out: &RunOutput) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for row in &out.rows {
        let c = &out.cells[row.cell];
        let r = &row.result;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.seed, c.shots, c.h, c.sigma, row.lambda, row.arm_name, r.accuracy, r.loss, r.hardness
        );
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-(cell, arm) means with 95% CIs, plus the paired loss gap against the
/// cell's first lambda = 0 arm. Gap columns stay empty for the baseline
/// itself, when no baseline exists, or when fewer than two paired episodes
/// survived.
pub fn summary_csv(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    let mut s =
        String::from("h,sigma,shots,arm,lambda,n,accuracy,accuracy_ci,loss,loss_ci,hardness,loss_gap,gap_p\n");
    for cell in &out.cells {
        let baseline_arm = cfg
            .arms
            .iter()
            .position(|a| resolve_lambda(a, cell.shots) == 0.0);
        let base_results: Vec<TaskResult> = baseline_arm
            .map(|ai| arm_results(out, cell.index, ai))
            .unwrap_or_default();
        for (ai, arm) in cfg.arms.iter().enumerate() {
            let results = arm_results(out, cell.index, ai);
            if results.is_empty() {
                continue;
            }
            let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
            let losses: Vec<f64> = results.iter().map(|r| r.loss).collect();
            let hards: Vec<f64> = results.iter().map(|r| r.hardness).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let ci = |v: &[f64]| summarize(v).ok().map(|s| s.ci);
            let (gap, p) = match baseline_arm {
                Some(bi) if bi != ai => paired_loss_gap(&base_results, &results)
                    .map(|g| (Some(g.0), Some(g.1)))
                    .unwrap_or((None, None)),
                _ => (None, None),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cell.h,
                cell.sigma,
                cell.shots,
                arm.name,
                resolve_lambda(arm, cell.shots),
                results.len(),
                mean(&accs),
                fmt_opt(ci(&accs)),
                mean(&losses),
                fmt_opt(ci(&losses)),
                mean(&hards),
                fmt_opt(gap),
                fmt_opt(p),
            );
        }
    }
    s
}

pub fn arm_results(out: &RunOutput, cell: usize, arm: usize) -> Vec<TaskResult> {
    out.rows
        .iter()
        .filter(|r| r.cell == cell && r.arm == arm)
        .map(|r| r.result)
        .collect()
}

/// Paired loss gap (baseline minus treated) restricted to episode seeds
/// present in both lists; divergences can thin one side.
fn paired_loss_gap(base: &[TaskResult], treated: &[TaskResult]) -> Option<(f64, f64)> {
    let tb: Vec<TaskResult> = base
        .iter()
        .filter(|b| treated.iter().any(|t| t.seed == b.seed))
        .copied()
        .collect();
    let tt: Vec<TaskResult> = treated
        .iter()
        .filter(|t| base.iter().any(|b| b.seed == t.seed))
        .copied()
        .collect();
    let g = paired_gap_test(&tb, &tt).ok()?;
    Some((g.mean_gap, g.p))
}

pub fn divergences_report(out: &RunOutput) -> String {
    let mut s = String::new();
    for d in &out.divergences {
        let _ = writeln!(
            s,
            "cell={} arm={} episode={} iteration={}",
            d.cell, d.arm_name, d.episode, d.iteration
        );
    }
    s
}

/// Writes results.csv, summary.csv, a divergence report when any fits blew
/// up, and the optional episode dump. Returns the paths written.
pub fn write_outputs(cfg: &ExperimentConfig, out: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut written = Vec::new();
    let results_path = cfg.out.join("results.csv");
    std::fs::write(&results_path, results_csv(out))?;
    written.push(results_path);
    let summary_path = cfg.out.join("summary.csv");
    std::fs::write(&summary_path, summary_csv(cfg, out))?;
    written.push(summary_path);
    if !out.divergences.is_empty() {
        let div_path = cfg.out.join("divergences.txt");
        std::fs::write(&div_path, divergences_report(out))?;
        written.push(div_path);
    }
    if let (Some(path), Some((episode, fitted))) = (&cfg.dump_episode, &out.dump) {
        let mut buf = Vec::new();
        crate::episode_io::save_episode(episode, fitted.as_ref(), &mut buf)?;
        std::fs::write(path, buf)?;
        written.push(path.clone());
    }
    Ok(written)
}

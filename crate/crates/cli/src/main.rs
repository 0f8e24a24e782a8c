use clap::{Args, Parser, Subcommand};
use graphfsl::reg::{PartitionMode, RegConfig, SgdConfig, SimilarityKind};
use graphfsl::tasks::make_binary_tree;
use graphfsl::walks::WalkConfig;
use graphfsl::Error;
use graphfsl_cli::config::{self, AblateFamily, ExperimentConfig, Mode};
use graphfsl_cli::plot::{render, PlotKind};
use graphfsl_cli::runner;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "graphfsl", version, about = "Graph-regularized few-shot learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 = one per core
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic binary-tree experiment grid
    SynthRun(RunArgs),
    /// Run a feature-file experiment
    FeatRun(RunArgs),
    /// Expand a base config into a standard ablation arm set and run it
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// neighborhood | layers | init
        #[arg(long)]
        family: String,
        /// Layer-removal counts for the layers family
        #[arg(long, default_value = "0,5,10", value_delimiter = ',')]
        layers: Vec<usize>,
    },
    /// Render an SVG from a results CSV or a saved episode
    Plot {
        /// results CSV (loss-vs-shots, loss-vs-hardness) or episode file (pca-task)
        input: PathBuf,
        /// loss-vs-shots | loss-vs-hardness | pca-task
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and save a standalone tree embedding
    Embed {
        /// Tree height
        #[arg(long)]
        h: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// dot | cosine | neg-sq-euclidean
        #[arg(long, default_value = "dot")]
        sim: String,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output table; a .txt extension selects the text format
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::SynthRun(args) => run_command(args, Mode::Synth, None),
        Command::FeatRun(args) => run_command(args, Mode::Features, None),
        Command::Ablate { run, family, layers } => {
            let family = match family.as_str() {
                "neighborhood" => AblateFamily::Neighborhood,
                "layers" => AblateFamily::Layers,
                "init" => AblateFamily::Init,
                other => return config_failure(&[format!("unknown ablation family {other:?}")]),
            };
            run_command(run, Mode::Synth, Some((family, layers)))
        }
        Command::Plot { input, kind, out } => plot_command(&input, kind, &out),
        Command::Embed {
            h,
            dim,
            sim,
            epochs,
            lr,
            batch,
            negatives,
            seed,
            out,
        } => embed_command(h, dim, &sim, epochs, lr, batch, negatives, seed, &out),
    }
}

fn config_failure(errors: &[String]) -> ExitCode {
    for e in errors {
        eprintln!("config error: {e}");
    }
    ExitCode::from(EXIT_CONFIG)
}

fn error_exit(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Insufficient(_) => {
            ExitCode::from(EXIT_CONFIG)
        }
        Error::Divergence(_) => ExitCode::from(EXIT_NUMERIC),
        _ => ExitCode::FAILURE,
    }
}

fn load_config(args: &RunArgs, want: Mode, ablation_base: bool) -> Result<ExperimentConfig, ExitCode> {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            return Err(config_failure(&[format!(
                "cannot read {}: {e}",
                args.config.display()
            )]))
        }
    };
    let parsed = if ablation_base {
        config::parse_ablation_base(&text)
    } else {
        config::parse(&text)
    };
    let mut cfg = match parsed {
        Ok(c) => c,
        Err(errors) => return Err(config_failure(&errors)),
    };
    if cfg.mode != want {
        let (got, sub) = match want {
            Mode::Synth => ("features", "synth-run"),
            Mode::Features => ("synth", "feat-run"),
        };
        return Err(config_failure(&[format!(
            "config has mode = {got} but the subcommand is {sub}"
        )]));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run_command(args: RunArgs, want: Mode, ablate: Option<(AblateFamily, Vec<usize>)>) -> ExitCode {
    let mut cfg = match load_config(&args, want, ablate.is_some()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some((family, layers)) = ablate {
        if let Err(errors) = config::expand_ablation(&mut cfg, family, &layers) {
            return config_failure(&errors);
        }
    }
    let out = match runner::run_with_workers(&cfg, args.workers) {
        Ok(o) => o,
        Err(e) => return error_exit(&e),
    };
    let written = match runner::write_outputs(&cfg, &out) {
        Ok(w) => w,
        Err(e) => return error_exit(&e),
    };
    println!(
        "{} rows over {} cells x {} arms",
        out.rows.len(),
        out.cells.len(),
        cfg.arms.len()
    );
    for path in &written {
        println!("wrote {}", path.display());
    }
    if !out.divergences.is_empty() {
        eprintln!(
            "{} fits diverged; see {}",
            out.divergences.len(),
            cfg.out.join("divergences.txt").display()
        );
        return ExitCode::from(EXIT_NUMERIC);
    }
    ExitCode::SUCCESS
}

fn plot_command(input: &PathBuf, kind: PlotKind, out: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(input) {
        Ok(t) => t,
        Err(e) => return config_failure(&[format!("cannot read {}: {e}", input.display())]),
    };
    let svg = match render(kind, &text) {
        Ok(s) => s,
        Err(e) => return error_exit(&e),
    };
    if let Err(e) = std::fs::write(out, svg) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    println!("wrote {}", out.display());
    ExitCode::SUCCESS
}

#[allow(clippy::too_many_arguments)]
fn embed_command(
    h: usize,
    dim: usize,
    sim: &str,
    epochs: usize,
    lr: f64,
    batch: usize,
    negatives: usize,
    seed: u64,
    out: &PathBuf,
) -> ExitCode {
    let similarity = match sim {
        "dot" => SimilarityKind::Dot,
        "cosine" => SimilarityKind::Cosine,
        "neg-sq-euclidean" | "negsq" => SimilarityKind::NegSqEuclidean,
        other => return config_failure(&[format!("unknown similarity {other:?}")]),
    };
    if h < 1 {
        return config_failure(&["h must be >= 1".into()]);
    }
    let g = make_binary_tree(h);
    let reg = RegConfig {
        similarity,
        partition: PartitionMode::NegativeSampling { count: negatives },
        ..RegConfig::default()
    };
    let sgd = SgdConfig { lr, epochs, batch };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table =
        match graphfsl::reg::embed_graph::<f64>(&g, dim, &WalkConfig::default(), &reg, &sgd, &mut rng)
        {
            Ok(t) => t,
            Err(e) => return error_exit(&e),
        };
    let res = if out.extension().is_some_and(|e| e == "txt") {
        table.save_text_path(out)
    } else {
        table.save_binary_path(out)
    };
    if let Err(e) = res {
        return error_exit(&e);
    }
    println!(
        "embedded {} nodes at d={} into {}",
        table.names().len(),
        dim,
        out.display()
    );
    ExitCode::SUCCESS
}

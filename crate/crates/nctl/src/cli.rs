//! The `nctl` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nctl_core::nctl::{local_ensemble_average, local_ensemble_sample};
use nctl_core::{GlnNetwork, NctlNetwork};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::data::protocols::free_split_stream;
use crate::data::{load_electricity, require, DataRoot, ImageSet, PreparedImages, Standardizer};
use crate::error::{NctlError, Result};
use crate::eval::metrics::{mean_stderr, moving_average, write_json};
use crate::eval::{
    backward_transfer, compare_with_oracles, electricity_protocol, forward_transfer,
    permuted_protocol, prequential_run, run_seeds, split_protocol, MetricLog, NctlLearner,
    PairData, RunSummary, TransferCurves, TransferSettings,
};
use crate::manifest::ExperimentManifest;
use crate::saliency::{image_shape, mean_saliency, to_raw_space, write_csv, write_pgm};
use crate::selftest::{run_selftest, SelftestOptions};

#[derive(Debug, Parser)]
#[command(
    name = "nctl",
    version,
    about = "Online continual learning with NCTL networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML file overlaid on the protocol defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seeds 0..N.
    #[arg(long, conflicts_with = "seed_list")]
    pub seeds: Option<u64>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    /// Seeds run in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Dataset root (default: $NCTL_DATA_DIR, then ./data).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Moving-average window for reported log loss.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchProtocol {
    SplitMnist,
    PermutedMnist,
    SplitFashion,
    Electricity,
    FreeSplit,
}

impl BenchProtocol {
    fn name(self) -> &'static str {
        match self {
            Self::SplitMnist => "split-mnist",
            Self::PermutedMnist => "permuted-mnist",
            Self::SplitFashion => "split-fashion",
            Self::Electricity => "electricity",
            Self::FreeSplit => "free-split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Mnist,
    Fashion,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a benchmark protocol and write per-seed logs plus a summary.
    Bench {
        #[arg(value_enum)]
        protocol: BenchProtocol,
        #[command(flatten)]
        common: Common,
        /// Also write each seed's trained network.
        #[arg(long)]
        save_checkpoint: bool,
    },
    /// Backward- or forward-transfer curves on Free Split streams.
    Transfer {
        #[arg(value_enum)]
        direction: Direction,
        /// Distractor counts (backward) or source-task counts (forward).
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean stream log loss of NCTL against the two task-aware oracles.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Saliency maps of checkpointed networks.
    Saliency(SaliencyArgs),
    /// Run the built-in oracle checks.
    Selftest {
        /// Perturb a mixing weight inside the gradient check (must fail).
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SaliencyArgs {
    /// Checkpoint files; several are needed for ensembles.
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// CSV of standardized input vectors, one per row, no header.
    #[arg(long, conflicts_with = "digit")]
    pub inputs: Option<PathBuf>,
    /// Average over test images of this class.
    #[arg(long)]
    pub digit: Option<u8>,
    #[arg(long, value_enum, default_value = "mnist")]
    pub dataset: Dataset,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Most test images used with --digit.
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
    /// Sample node-wise ensembles of the given checkpoints.
    #[arg(long)]
    pub ensemble: bool,
    /// Average the checkpoints' weights node-wise instead of sampling.
    #[arg(long, conflicts_with = "ensemble")]
    pub ensemble_average: bool,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write 28x28 PGM images as well as CSV.
    #[arg(long)]
    pub pgm: bool,
    /// Express maps over raw pixel intensities instead of standardized features.
    #[arg(long)]
    pub raw_space: bool,
    #[arg(long, default_value = "saliency")]
    pub output: PathBuf,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Bench {
            protocol,
            common,
            save_checkpoint,
        } => bench(protocol, &common, save_checkpoint),
        Command::Transfer {
            direction,
            counts,
            common,
        } => transfer(direction, counts, &common),
        Command::Compare { common } => compare(&common),
        Command::Saliency(args) => saliency(&args),
        Command::Selftest { inject_fault } => Ok(selftest(inject_fault)),
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(protocol: &str, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(protocol, common.config.as_deref())?;
    if let Some(n) = common.seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(list) = &common.seed_list {
        cfg.seeds = list.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(d) = &common.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(o) = &common.output {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = common.window {
        cfg.window = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| NctlError::io(dir, e))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| NctlError::io(&path, e))
}

fn write_manifest(
    cfg: &ExperimentConfig,
    datasets: &[PathBuf],
    outputs: Vec<String>,
) -> Result<()> {
    let mut m = ExperimentManifest::new(cfg, datasets)?;
    m.outputs = outputs;
    write_json(&cfg.output_dir.join("manifest.json"), &m)
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    protocol: String,
    seeds: Vec<u64>,
    /// Seed mean of the protocol's headline accuracy.
    overall_accuracy: f64,
    accuracy_stderr: f64,
    mean_logloss: f64,
    logloss_stderr: f64,
    runs: Vec<RunSummary>,
    details: serde_json::Value,
}

struct SeedOutcome {
    seed: u64,
    log: MetricLog,
    accuracy: f64,
    details: serde_json::Value,
    networks: Vec<NctlNetwork>,
    standardizer: Option<Standardizer>,
}

fn bench(protocol: BenchProtocol, common: &Common, save_checkpoint: bool) -> Result<i32> {
    let name = protocol.name();
    let cfg = resolve_config(name, common)?;
    let root = DataRoot::resolve(cfg.data_dir.as_deref());
    let (dataset, outcomes) = match protocol {
        BenchProtocol::SplitMnist | BenchProtocol::SplitFashion => {
            let dir = if protocol == BenchProtocol::SplitMnist {
                root.mnist()
            } else {
                root.fashion()
            };
            let images = PreparedImages::load(&dir)?;
            prepare_output(&cfg)?;
            let out = run_seeds(&cfg.seeds, cfg.jobs, |seed| {
                let r = split_protocol(&images, &cfg.model, seed, &cfg.split, cfg.window, name)?;
                println!(
                    "{name} seed {seed}: mean task accuracy {:.4}",
                    r.mean_accuracy
                );
                Ok(SeedOutcome {
                    seed,
                    accuracy: r.mean_accuracy,
                    details: json!({ "final_accuracies": r.final_accuracies, "grid": r.grid }),
                    networks: r.network.into_iter().collect(),
                    log: r.train,
                    standardizer: Some((*images.standardizer).clone()),
                })
            })?;
            (dir, out)
        }
        BenchProtocol::PermutedMnist => {
            let dir = root.mnist();
            let images = PreparedImages::load(&dir)?;
            prepare_output(&cfg)?;
            let out = run_seeds(&cfg.seeds, cfg.jobs, |seed| {
                let r = permuted_protocol(
                    &images,
                    &cfg.model,
                    seed,
                    &cfg.permuted,
                    cfg.split.adaptation,
                    cfg.split.eval_limit,
                    cfg.window,
                )?;
                println!(
                    "{name} seed {seed}: mean task accuracy {:.4}",
                    r.mean_accuracy
                );
                Ok(SeedOutcome {
                    seed,
                    accuracy: r.mean_accuracy,
                    details: json!({ "final_accuracies": r.final_accuracies, "train_accuracy": r.train_accuracy }),
                    networks: r.head.map(|h| h.nets).unwrap_or_default(),
                    log: r.train,
                    standardizer: Some((*images.standardizer).clone()),
                })
            })?;
            (dir, out)
        }
        BenchProtocol::Electricity => {
            let path = root.electricity();
            require(&path)?;
            let data = load_electricity(&path)?;
            prepare_output(&cfg)?;
            let out = run_seeds(&cfg.seeds, cfg.jobs, |seed| {
                let (log, net) = electricity_protocol(
                    &data,
                    &cfg.model,
                    seed,
                    cfg.electricity.standardize,
                    cfg.window,
                )?;
                println!(
                    "{name} seed {seed}: prequential accuracy {:.4}",
                    log.accuracy()
                );
                Ok(SeedOutcome {
                    seed,
                    accuracy: log.accuracy(),
                    details: json!({ "instances": log.len() }),
                    networks: vec![net],
                    log,
                    standardizer: None,
                })
            })?;
            (path, out)
        }
        BenchProtocol::FreeSplit => {
            let dir = root.mnist();
            let images = PreparedImages::load(&dir)?;
            prepare_output(&cfg)?;
            let data = PairData::from_images(&images);
            let out = run_seeds(&cfg.seeds, cfg.jobs, |seed| {
                let stream = free_split_stream(
                    data.source.clone(),
                    &data.index,
                    seed,
                    cfg.free_split.n_tasks,
                    cfg.free_split.support,
                );
                let net =
                    NctlNetwork::new(cfg.model.nctl(stream.dim(), stream.len() as u64, seed)?)?;
                let mut learner = NctlLearner::new(net);
                let log = prequential_run(&mut learner, &stream, cfg.window)?;
                println!(
                    "{name} seed {seed}: mean log loss {:.4}",
                    log.mean_logloss()
                );
                Ok(SeedOutcome {
                    seed,
                    accuracy: log.accuracy(),
                    details: json!({ "boundaries": stream.boundaries() }),
                    networks: vec![learner.net],
                    log,
                    standardizer: Some((*images.standardizer).clone()),
                })
            })?;
            (dir, out)
        }
    };

    let mut files = Vec::new();
    for o in &outcomes {
        let f = format!("metrics-seed{}.csv", o.seed);
        o.log.write_csv(&cfg.output_dir.join(&f))?;
        files.push(f);
        if save_checkpoint {
            for (i, net) in o.networks.iter().enumerate() {
                let f = if o.networks.len() == 1 {
                    format!("checkpoint-seed{}.json", o.seed)
                } else {
                    format!("checkpoint-seed{}-class{i}.json", o.seed)
                };
                let mut ck = Checkpoint::new(net);
                ck.protocol = Some(name.into());
                ck.seed = Some(o.seed);
                ck.standardizer = o.standardizer.clone();
                ck.save(&cfg.output_dir.join(&f))?;
                files.push(f);
            }
        }
    }
    let accs: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let losses: Vec<f64> = outcomes.iter().map(|o| o.log.mean_logloss()).collect();
    let (acc, acc_se) = mean_stderr(&accs);
    let (loss, loss_se) = mean_stderr(&losses);
    let summary = BenchSummary {
        protocol: name.into(),
        seeds: cfg.seeds.clone(),
        overall_accuracy: acc,
        accuracy_stderr: acc_se,
        mean_logloss: loss,
        logloss_stderr: loss_se,
        runs: outcomes
            .iter()
            .map(|o| o.log.summary(name, o.seed))
            .collect(),
        details: json!(outcomes
            .iter()
            .map(|o| json!({ "seed": o.seed, "result": o.details }))
            .collect::<Vec<_>>()),
    };
    write_json(&cfg.output_dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    write_manifest(&cfg, &[dataset], files)?;
    println!(
        "{name}: accuracy {acc:.4} ± {acc_se:.4}, log loss {loss:.4} ± {loss_se:.4} over {} seed(s)",
        cfg.seeds.len()
    );
    Ok(0)
}

fn load_pair_data(cfg: &ExperimentConfig) -> Result<(PathBuf, PairData)> {
    let dir = DataRoot::resolve(cfg.data_dir.as_deref()).mnist();
    let images = PreparedImages::load(&dir)?;
    Ok((dir, PairData::from_images(&images)))
}

fn write_curves(
    cfg: &ExperimentConfig,
    prefix: &str,
    curves: &TransferCurves,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (i, count) in curves.counts.iter().enumerate() {
        let f = format!("curve-{prefix}-n{count}.csv");
        let path = cfg.output_dir.join(&f);
        let runs = &curves.per_seed[i];
        let mean = curves.mean_curve(i);
        let smooth = moving_average(&mean, cfg.window);
        let mut w = csv::Writer::from_path(&path).map_err(|e| NctlError::Format {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        let io = |e: csv::Error| NctlError::Format {
            path: path.clone(),
            detail: e.to_string(),
        };
        w.write_record(["step", "mean_logloss", "stderr", "smoothed"])
            .map_err(io)?;
        for (t, m) in mean.iter().enumerate() {
            let col: Vec<f64> = runs.iter().filter_map(|r| r.get(t).copied()).collect();
            let (_, se) = mean_stderr(&col);
            w.write_record([
                t.to_string(),
                m.to_string(),
                se.to_string(),
                smooth[t].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| NctlError::io(&path, e))?;
        files.push(f);
    }
    Ok(files)
}

fn transfer(direction: Direction, counts: Option<Vec<usize>>, common: &Common) -> Result<i32> {
    let name = match direction {
        Direction::Backward => "backward",
        Direction::Forward => "forward",
    };
    let mut cfg = resolve_config(name, common)?;
    if let Some(c) = counts {
        cfg.transfer.counts = Some(c);
    }
    let counts = cfg.transfer.counts.clone().unwrap_or_default();
    if counts.is_empty() {
        return Err(NctlError::Config("at least one count is required".into()));
    }
    if direction == Direction::Forward && counts.contains(&0) {
        return Err(NctlError::Config(
            "forward transfer needs at least one source task".into(),
        ));
    }
    let (dir, data) = load_pair_data(&cfg)?;
    prepare_output(&cfg)?;
    let settings = TransferSettings {
        seeds: cfg.seeds.clone(),
        counts: counts.clone(),
        target_steps: cfg.transfer.target_steps,
        support: cfg.free_split.support,
        window: cfg.window,
        jobs: cfg.jobs,
    };
    let curves = match direction {
        Direction::Backward => backward_transfer(&data, &cfg.model, &settings)?,
        Direction::Forward => forward_transfer(&data, &cfg.model, &settings)?,
    };
    let mut files = write_curves(&cfg, name, &curves)?;
    let rows: Vec<_> = (0..counts.len())
        .map(|i| {
            let (cum, cum_se) = curves.cumulative(i);
            println!(
                "{name} n={}: cumulative target loss {cum:.3} ± {cum_se:.3}",
                counts[i]
            );
            json!({
                "count": counts[i],
                "cumulative_logloss": cum,
                "cumulative_stderr": cum_se,
                "mean_logloss_30_200": curves.mean_over(i, 30, 200),
            })
        })
        .collect();
    write_json(
        &cfg.output_dir.join("summary.json"),
        &json!({ "direction": name, "seeds": cfg.seeds, "counts": rows }),
    )?;
    files.push("summary.json".into());
    write_manifest(&cfg, &[dir], files)?;
    Ok(0)
}

fn compare(common: &Common) -> Result<i32> {
    let cfg = resolve_config("free-split", common)?;
    let (dir, data) = load_pair_data(&cfg)?;
    prepare_output(&cfg)?;
    let r = compare_with_oracles(
        &data,
        &cfg.model,
        &cfg.seeds,
        cfg.free_split.n_tasks,
        cfg.free_split.support,
        cfg.jobs,
    )?;
    let [n, o1, o2] = r.means();
    println!("NCTL     {:.4} ± {:.4}", n.0, n.1);
    println!("Oracle 1 {:.4} ± {:.4}", o1.0, o1.1);
    println!("Oracle 2 {:.4} ± {:.4}", o2.0, o2.1);
    write_json(&cfg.output_dir.join("summary.json"), &r)?;
    write_manifest(&cfg, &[dir], vec!["summary.json".into()])?;
    Ok(0)
}

fn read_inputs(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let fmt = |detail: String| NctlError::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| fmt(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt(format!("row {}: {e}", i + 1)))?;
        if row.len() != dim {
            return Err(fmt(format!(
                "row {} has {} values, expected {dim}",
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn digit_inputs(
    args: &SaliencyArgs,
    digit: u8,
    standardizer: Option<&Standardizer>,
) -> Result<Vec<Vec<f64>>> {
    let root = DataRoot::resolve(args.data_dir.as_deref());
    let dir = match args.dataset {
        Dataset::Mnist => root.mnist(),
        Dataset::Fashion => root.fashion(),
    };
    let images = PreparedImages::load(&dir)?;
    let std = standardizer
        .cloned()
        .unwrap_or_else(|| (*images.standardizer).clone());
    let test: &ImageSet = &images.test;
    Ok(test
        .indices_of(digit)
        .into_iter()
        .take(args.limit)
        .map(|i| std.transform(&test.scaled(i)))
        .collect())
}

fn saliency(args: &SaliencyArgs) -> Result<i32> {
    let checkpoints = args
        .checkpoint
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let nets = checkpoints
        .iter()
        .map(Checkpoint::network)
        .collect::<Result<Vec<_>>>()?;
    let dim = nets[0].config().gln.input_dim;
    if args.pgm {
        image_shape(dim)?;
    }
    let standardizer = checkpoints[0].standardizer.as_ref();
    if args.raw_space && standardizer.is_none() {
        return Err(NctlError::Config(
            "--raw-space needs a checkpoint with feature statistics".into(),
        ));
    }
    let inputs = match (&args.inputs, args.digit) {
        (Some(p), _) => read_inputs(p, dim)?,
        (None, Some(d)) => digit_inputs(args, d, standardizer)?,
        (None, None) => Vec::new(),
    };

    let maps: Vec<(String, GlnNetwork)> = if args.ensemble {
        let refs: Vec<&NctlNetwork> = nets.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        (0..args.samples)
            .map(|k| {
                Ok((
                    format!("ensemble-{k}"),
                    local_ensemble_sample(&refs, &mut rng)?,
                ))
            })
            .collect::<Result<_>>()?
    } else if args.ensemble_average {
        let refs: Vec<&NctlNetwork> = nets.iter().collect();
        vec![("ensemble-average".into(), local_ensemble_average(&refs)?)]
    } else {
        nets.iter()
            .enumerate()
            .map(|(i, n)| (format!("saliency-{i}"), n.map_network()))
            .collect()
    };

    let out = &args.output;
    std::fs::create_dir_all(out).map_err(|e| NctlError::io(out, e))?;
    for (stem, net) in &maps {
        let mut e = mean_saliency(net, &inputs)?;
        if args.raw_space {
            e = to_raw_space(&e, standardizer.expect("checked above"));
        }
        write_csv(&out.join(format!("{stem}.csv")), &e)?;
        if args.pgm {
            write_pgm(&out.join(format!("{stem}.pgm")), &e.weights)?;
        }
    }
    println!("wrote {} map(s) to {}", maps.len(), out.display());
    Ok(0)
}

fn selftest(inject_fault: bool) -> i32 {
    let results = run_selftest(SelftestOptions { inject_fault });
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<22} {} ({:.1}s)", r.name, r.detail, r.seconds);
        failed += usize::from(!r.passed);
    }
    if failed == 0 {
        println!("all {} checks passed", results.len());
        0
    } else {
        println!("{failed} of {} checks failed", results.len());
        1
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use phida::harness::dataset::load_features;
use phida::harness::report::mean_std;
use phida::harness::{
    emit_report, load_dataset, parse_seeds, run_experiment_with_models, LabelColumn, MinMaxScaler, StreamMode,
};
use phida::snapshot::Snapshot;
use phida::Variant;

const EXIT_USAGE: u8 = 1;
const EXIT_RUN_FAILURES: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "phida", version, about = "Online clustering with persistence-constrained cluster mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train over a dataset for several seeds and write reports and model snapshots.
    Run(RunArgs),
    /// Assign every row of a CSV file to a cluster of a saved model.
    Predict(PredictArgs),
    /// Print a summary of a saved model.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    None,
    Minmax,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Headed CSV with numeric features and one label column.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label column: `last`, a 0-based index or a header name.
    #[arg(long)]
    label_col: Option<String>,
    /// stationary or nonstationary.
    #[arg(long)]
    mode: Option<String>,
    /// A count `n` (seeds 0..n) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// full, noPH, noRefresh, noDelete or noPrune.
    #[arg(long)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of feature rows with a header.
    #[arg(long)]
    input: PathBuf,
    /// Column to ignore in the input, if it carries labels.
    #[arg(long)]
    label_col: Option<String>,
    /// Write `row,cluster` here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug)]
struct RunConfig {
    dataset: PathBuf,
    label_col: LabelColumn,
    mode: StreamMode,
    seeds: Vec<u64>,
    variant: Variant,
    out: PathBuf,
    scale: Scale,
}

const CONFIG_KEYS: [&str; 7] = ["dataset", "label-col", "mode", "seeds", "variant", "out", "scale"];

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), n + 1);
        };
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key `{}`", path.display(), n + 1, k.trim());
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());

        let dataset = pick(self.dataset.map(|p| p.display().to_string()), "dataset")
            .context("no dataset given (use --dataset or `dataset =` in the config)")?;
        let label_col = pick(self.label_col, "label-col").unwrap_or_else(|| "last".into());
        let mode = pick(self.mode, "mode").unwrap_or_else(|| "stationary".into());
        let seeds = pick(self.seeds, "seeds").unwrap_or_else(|| "30".into());
        let variant = pick(self.variant, "variant").unwrap_or_else(|| "full".into());
        let out = pick(self.out.map(|p| p.display().to_string()), "out").unwrap_or_else(|| "phida-out".into());
        let scale = match self.scale {
            Some(s) => s,
            None => match file.get("scale") {
                Some(s) => Scale::from_str(s, true).map_err(|_| anyhow::anyhow!("invalid scale `{s}`"))?,
                None => Scale::None,
            },
        };
        Ok(RunConfig {
            dataset: PathBuf::from(dataset),
            label_col: label_col.parse().expect("infallible"),
            mode: mode.parse().map_err(anyhow::Error::msg)?,
            seeds: parse_seeds(&seeds)?,
            variant: variant.parse().map_err(anyhow::Error::msg)?,
            out: PathBuf::from(out),
            scale,
        })
    }
}

fn fmt_stat(values: &[f64]) -> String {
    match mean_std(values) {
        (Some(m), Some(s)) => format!("{m:.4} ({s:.4})"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "N/A".into(),
    }
}

/// Returns `true` when every seed succeeded.
fn run(args: RunArgs) -> Result<bool> {
    let cfg = args.resolve()?;
    let mut dataset = load_dataset(&cfg.dataset, &cfg.label_col)?;
    let scaler = (cfg.scale == Scale::Minmax).then(|| MinMaxScaler::fit(&dataset.features));
    if let Some(s) = &scaler {
        dataset.features = dataset.features.iter().map(|x| s.apply(x)).collect();
    }

    let (report, models) = run_experiment_with_models(&dataset, cfg.mode, &cfg.seeds, cfg.variant);
    emit_report(&report, &cfg.out).with_context(|| format!("cannot write reports to {}", cfg.out.display()))?;

    let model_dir = cfg.out.join("models");
    fs::create_dir_all(&model_dir)?;
    for (seed, model) in models {
        let snap = Snapshot::new(model, dataset.feature_names.clone(), dataset.class_names.clone(), scaler.clone());
        let name = format!("{}__{}__{}__seed{}.json", report.dataset, report.mode, report.variant, seed);
        snap.save(&model_dir.join(name))?;
    }

    let ok: Vec<_> = report.successes().collect();
    let col = |f: fn(&phida::harness::RunResult) -> Option<f64>| fmt_stat(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    println!(
        "{} / {} / {}: {} runs, {} failed",
        report.dataset,
        report.mode,
        report.variant,
        report.runs.len(),
        report.failures()
    );
    println!("  final ARI  {}", col(|r| Some(r.final_ari)));
    println!("  final AMI  {}", col(|r| Some(r.final_ami)));
    if cfg.mode == StreamMode::Nonstationary {
        println!("  avgInc ARI {}", col(|r| r.avg_inc_ari));
        println!("  avgInc AMI {}", col(|r| r.avg_inc_ami));
        println!("  BWT ARI    {}", col(|r| r.bwt_ari));
        println!("  BWT AMI    {}", col(|r| r.bwt_ami));
    }
    println!("  clusters   {}", col(|r| Some(r.cluster_count as f64)));
    println!("  nodes      {}", col(|r| Some(r.node_count as f64)));
    println!("  reports    {}", cfg.out.display());
    for run in &report.runs {
        if let phida::harness::RunOutcome::Failed { seed, error } = run {
            eprintln!("seed {seed} failed: {error}");
        }
    }
    Ok(report.failures() == 0)
}

fn predict(args: PredictArgs) -> Result<()> {
    let snap = Snapshot::load(&args.model)?;
    let drop: Option<LabelColumn> = args.label_col.map(|s| s.parse().expect("infallible"));
    let rows = load_features(&args.input, drop.as_ref())?;
    let mut out = String::from("row,cluster\n");
    for (i, x) in rows.iter().enumerate() {
        if x.len() != snap.dim {
            bail!("row {} has {} features, model expects {}", i + 2, x.len(), snap.dim);
        }
        let c = snap.predict(x).with_context(|| format!("row {}", i + 2))?;
        out.push_str(&format!("{i},{c}\n"));
    }
    match args.output {
        Some(p) => fs::write(&p, out).with_context(|| format!("cannot write {}", p.display()))?,
        None => io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let snap = Snapshot::load(&args.model)?;
    if !snap.feature_names.is_empty() {
        println!("features:       {}", snap.feature_names.join(", "));
    }
    print!("{}", snap.summary());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a).map(|all_ok| if all_ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_RUN_FAILURES) }),
        Command::Predict(a) => predict(a).map(|()| ExitCode::SUCCESS),
        Command::Inspect(a) => inspect(a).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_USAGE)
    })
}

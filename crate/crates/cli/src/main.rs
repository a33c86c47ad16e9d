use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use peco_core::io::{read_path, write_path};
use peco_core::pipeline::{analyze, compare, overlay_csv, RunConfig, TsneInput, TsneSettings};
use peco_core::projector::{emit_plot, PlotFormat, TsneParams};
use peco_core::{Error, ErrorClass, Metric, ReferenceMode, Result, SynthConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "peco", version, about = "Audit label bias in sentence-pair embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster one dataset and write its bias report.
    Analyze(AnalyzeArgs),
    /// Rank several datasets by PECO AUC on a shared threshold grid.
    Compare(CompareArgs),
    /// Write a synthetic labeled Gaussian mixture as a PECOEMB1 file.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Number of clusters.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// PCA dimensions (clamped to what the data supports).
    #[arg(long = "pca", default_value_t = 30)]
    pca_dims: usize,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Reference distribution: empirical label frequencies or uniform.
    #[arg(long, default_value = "empirical")]
    reference: ReferenceMode,
    /// Threshold grid step.
    #[arg(long = "grid", default_value_t = 0.01)]
    grid_step: f64,
    /// Distance at which a cluster is drawn as high-bias.
    #[arg(long, default_value_t = 0.25)]
    threshold: f64,
    /// Weight curve heights by cluster size instead of cluster count.
    #[arg(long)]
    weighted: bool,
    /// L2-normalize embeddings before PCA.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Skip the per-pair pseudoclassification re-runs.
    #[arg(long)]
    no_pairwise: bool,
    /// Output directory.
    #[arg(long = "out", default_value = "peco-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Embedding file (.bin/.peco, .csv or .jsonl).
    #[arg(long, required = true)]
    input: PathBuf,
    /// Fit on --input, evaluate on this split.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Also write tsne.csv and tsne.svg.
    #[arg(long)]
    tsne: bool,
    #[arg(long, default_value = "pca")]
    tsne_input: TsneInput,
    #[arg(long, default_value_t = 30.0)]
    tsne_perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    tsne_iterations: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Embedding files; repeat the flag for each dataset.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 9000)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 30)]
    centers: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 50.0)]
    scale: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

impl CommonArgs {
    fn run_config(&self, inputs: Vec<PathBuf>) -> RunConfig {
        RunConfig {
            inputs,
            holdout: None,
            k: self.k,
            pca_dims: self.pca_dims,
            metric: self.metric,
            seed: self.seed,
            reference: self.reference,
            grid_step: self.grid_step,
            threshold: self.threshold,
            weighted: self.weighted,
            normalize: self.normalize,
            max_iter: self.max_iter,
            tol: self.tol,
            pairwise: !self.no_pairwise,
            tsne: None,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<PathBuf> {
    let mut config = args.common.run_config(vec![args.input.clone()]);
    config.holdout = args.holdout.clone();
    if args.tsne {
        config.tsne = Some(TsneSettings {
            input: args.tsne_input,
            params: TsneParams {
                perplexity: args.tsne_perplexity,
                iterations: args.tsne_iterations,
                seed: args.common.seed,
                ..TsneParams::default()
            },
            csv: Some(config.out_dir.join("tsne.csv")),
            svg: Some(config.out_dir.join("tsne.svg")),
        });
    }
    config.validate()?;

    let dataset = read_path(&args.input)?;
    let holdout = args.holdout.as_deref().map(read_path).transpose()?;
    let analysis = analyze(&dataset, holdout.as_ref(), &config)?;
    for w in &analysis.report.warnings {
        log::warn!("{w}");
    }

    fs::create_dir_all(&config.out_dir)?;
    let report_path = config.out_dir.join("report.json");
    write_json(&report_path, &analysis.report)?;
    write_json(&config.out_dir.join("pca_model.json"), &analysis.pca)?;
    write_json(&config.out_dir.join("cluster_model.json"), &analysis.clusters)?;
    if let (Some(points), Some(settings)) = (&analysis.points, &config.tsne) {
        for (path, format) in [(&settings.csv, PlotFormat::Csv), (&settings.svg, PlotFormat::Svg)] {
            if let Some(path) = path {
                emit_plot(points, BufWriter::new(File::create(path)?), format, config.threshold)?;
            }
        }
    }
    println!("{}", report_path.display());
    println!("auc\t{:.6}", analysis.report.peco.auc);
    println!("three_way_accuracy\t{:.6}", analysis.report.pseudoclassification.three_way);
    Ok(report_path)
}

fn cmd_compare(args: &CompareArgs) -> Result<PathBuf> {
    let config = args.common.run_config(args.input.clone());
    config.validate()?;
    if args.input.len() < 2 {
        return Err(Error::Param(format!("compare needs at least 2 inputs, got {}", args.input.len())));
    }
    let datasets = args.input.iter().map(|p| read_path(p)).collect::<Result<Vec<_>>>()?;
    let (report, _) = compare(&datasets, &config)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }

    fs::create_dir_all(&config.out_dir)?;
    let report_path = config.out_dir.join("comparison.json");
    write_json(&report_path, &report)?;
    // Names in input order; the ranking holds the disambiguated ones.
    let mut order: Vec<(usize, String)> = report
        .ranking
        .iter()
        .map(|e| {
            let pos = e.source.as_ref().and_then(|s| args.input.iter().position(|p| p == s)).unwrap_or(usize::MAX);
            (pos, e.dataset.clone())
        })
        .collect();
    order.sort();
    let names: Vec<String> = order.into_iter().map(|(_, n)| n).collect();
    fs::write(config.out_dir.join("peco_overlay.csv"), overlay_csv(&report, &names))?;

    println!("{}", report_path.display());
    for entry in &report.ranking {
        println!("{}\t{:.6}", entry.dataset, entry.auc);
    }
    Ok(report_path)
}

fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let config = SynthConfig {
        n: args.n,
        dim: args.dim,
        n_true_clusters: args.centers,
        beta: args.beta,
        sigma: args.sigma,
        center_scale: args.scale,
        seed: args.seed,
    };
    let dataset = peco_core::generate(&config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_path(&dataset, &args.out)?;
    println!("{}", args.out.display());
    Ok(args.out.clone())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            })
        }
    }
}

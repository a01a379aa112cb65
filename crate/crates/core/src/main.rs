use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sssl::diagnostics::{assumption_report, fit_power_law, ReportParams, DEFAULT_EPS, DEFAULT_R};
use sssl::eigensystem::top_eigenpairs;
use sssl::harness::cv::{cross_validate, Chosen};
use sssl::harness::data::write_csv;
use sssl::harness::experiment::{load_source, search_grid, TrialContexts, TrialData};
use sssl::harness::{
    export_spectrum, format_table, load_csv, run_experiment_with, write_outputs, ExperimentConfig, LabeledTable,
    Method, Standardizer, TargetColumn,
};
use sssl::kernels::{gram_matrix, median_pairwise_distance, KernelSpec};
use sssl::models::Metric;
use sssl::synthetic::{make_synthetic, SyntheticSpec, DEFAULT_K_MAX};
use sssl::{Error, Result};

#[derive(Parser)]
#[command(name = "sssl", version, about = "Eigenfunction-based semi-supervised regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a label-fraction sweep described by a JSON config
    Run(RunArgs),
    /// Check spectrum decay, eigenfunction bounds and sample budgets on a dataset
    Diagnose(DiagnoseArgs),
    /// Export the kernel spectrum with its power-law envelope
    Spectrum(SpectrumArgs),
    /// Generate a synthetic dataset with a known spectrum
    Synth(SynthArgs),
    /// Cross-validate every method on one trial without testing
    Cv(CvArgs),
}

#[derive(Args)]
struct Common {
    /// Directory for output files
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Override the error metric
    #[arg(long)]
    metric: Option<MetricArg>,
    /// Suppress per-trial progress on stderr
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    metric: Option<MetricArg>,
    /// Trial whose split is used
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mse,
    Rmse,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => Metric::Mse,
            MetricArg::Rmse => Metric::Rmse,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Rbf,
    Linear,
    Polynomial,
}

#[derive(Args)]
struct DataArgs {
    /// Data CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Target column name, or `last`
    #[arg(long, default_value = "last")]
    target: TargetColumn,
    /// Standardize feature columns before building the kernel
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    kernel: KernelKind,
    /// Absolute RBF bandwidth
    #[arg(long)]
    bandwidth: Option<f64>,
    /// RBF bandwidth as a multiple of the median pairwise distance
    #[arg(long, default_value_t = 1.0)]
    bandwidth_factor: f64,
    /// Polynomial kernel degree
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Number of leading eigenpairs to compute
    #[arg(long, default_value_t = 64)]
    eigenpairs: usize,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// RKHS-norm budget of the comparator function
    #[arg(long)]
    r: Option<f64>,
    /// Target approximation error
    #[arg(long)]
    eps: Option<f64>,
    /// Basis size to examine (defaults to the recommended size)
    #[arg(long)]
    s: Option<usize>,
    /// Number of labeled examples, echoed into the report
    #[arg(long)]
    n_labeled: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Spectrum decay exponent (> 2)
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    /// Number of points
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    /// RKHS-norm budget of g
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Mean-square residual E[(f - g)^2]
    #[arg(long, conflicts_with = "residual_amp")]
    eps_sq: Option<f64>,
    /// Sup-norm of the residual f - g
    #[arg(long)]
    residual_amp: Option<f64>,
    #[command(flatten)]
    common: Common,
}

fn build_kernel(args: &DataArgs, table: &LabeledTable) -> Result<KernelSpec> {
    let k = match args.kernel {
        KernelKind::Rbf => match args.bandwidth {
            Some(b) => KernelSpec::rbf(b),
            None => KernelSpec::rbf(args.bandwidth_factor * median_pairwise_distance(&table.data)?),
        },
        KernelKind::Linear => KernelSpec::LinearNormalized,
        KernelKind::Polynomial => KernelSpec::PolynomialNormalized { degree: args.degree },
    };
    k.validate()?;
    Ok(k)
}

fn load_data(args: &DataArgs) -> Result<LabeledTable> {
    let mut table = load_csv(&args.data, &args.target)?;
    if args.standardize {
        table.data = Standardizer::fit(&table.data)?.transform(&table.data)?;
    }
    Ok(table)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn load_config(path: &Path, common: &Common, metric: Option<MetricArg>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(m) = metric {
        config.metric = m.into();
    }
    Ok(config)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = load_config(&args.config, &args.common, args.metric)?;
    let quiet = args.quiet;
    let out = run_experiment_with(&config, &mut |line| {
        if !quiet {
            eprintln!("{line}");
        }
    })?;
    print!("{}", format_table(&out.table)?);
    for p in write_outputs(&out, &args.common.out_dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let config = load_config(&args.config, &args.common, args.metric)?;
    if args.trial >= config.repeats {
        return Err(Error::Config(format!(
            "trial {} is outside the {} configured repeats",
            args.trial, config.repeats
        )));
    }
    let loaded = load_source(&config.data_source)?;
    let trial = TrialData::new(&loaded.table.data, &config, args.trial)?;
    let ctxs = TrialContexts::build(&trial, &config, loaded.native_kernel)?;
    let grid = search_grid(&config);

    #[derive(serde::Serialize)]
    struct Row {
        label_fraction: f64,
        n_labeled: usize,
        method: Method,
        chosen: Chosen,
    }
    let mut rows = Vec::new();
    for &f in &config.label_fractions {
        let (labeled, y) = trial.labeled(f)?;
        for &method in &config.methods {
            let chosen = cross_validate(
                method,
                &ctxs.contexts,
                &labeled,
                &y,
                &grid,
                config.cv_folds,
                config.metric,
                config.center_labels,
            )?;
            println!(
                "{f:<6} {method:<7} cv {} = {:.5}  kernel {:?}  s {:?}  ridge {:?}  graph weight {:?}",
                config.metric.name(),
                chosen.cv_error,
                chosen.kernel,
                chosen.s,
                chosen.ridge,
                chosen.laplacian_weight
            );
            rows.push(Row {
                label_fraction: f,
                n_labeled: labeled.len(),
                method,
                chosen,
            });
        }
    }
    let path = write_text(&args.common.out_dir, "cv.json", &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let table = load_data(&args.data)?;
    let kernel = build_kernel(&args.data, &table)?;
    let k = gram_matrix(&kernel, &table.data)?;
    let es = top_eigenpairs(&k, args.data.eigenpairs.min(table.data.len()))?;
    let user_supplied = args.r.is_some() && args.eps.is_some();
    let params = ReportParams {
        r: args.r.unwrap_or(DEFAULT_R),
        eps: args.eps.unwrap_or(DEFAULT_EPS),
        s: args.s,
        n_labeled: args.n_labeled,
        user_supplied,
    };
    if !user_supplied {
        eprintln!(
            "note: --r/--eps not both given; using R = {} and eps = {}",
            params.r, params.eps
        );
    }
    let report = assumption_report(&es, &kernel, &table.data, params)?;
    println!("kernel            {kernel:?}");
    println!("power law         a2 = {:.6}, p = {:.4}", report.power_law.a2, report.power_law.p);
    println!("decay p > 2       {}", report.decay_ok);
    println!("c_hat             {:.4}", report.c_hat);
    println!("M(s)              {:.4} at s = {}", report.m_of_s, report.inputs.s);
    println!(
        "eigengap          {:.4e} (needs {:.4e}: {})",
        report.eigengap, report.eigengap_threshold, report.eigengap_ok
    );
    println!("recommended s     {:?}", report.recommended_s);
    println!("n0                {:?}", report.n0);
    println!(
        "unlabeled budget  {} (required N {:.4e})",
        report.unlabeled_budget.ok, report.unlabeled_budget.required_n
    );
    if let Some(dir) = &args.out_dir {
        let p = write_text(dir, "diagnostics.json", &(report.to_json()? + "\n"))?;
        eprintln!("wrote {}", p.display());
        let path = dir.join("spectrum.csv");
        export_spectrum(&es, &report.power_law, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let table = load_data(&args.data)?;
    let kernel = build_kernel(&args.data, &table)?;
    let k = gram_matrix(&kernel, &table.data)?;
    let es = top_eigenpairs(&k, args.data.eigenpairs.min(table.data.len()))?;
    let rank = es.numerical_rank();
    let es = es.truncated(rank.max(1))?;
    let fit = fit_power_law(es.lambdas().as_slice())?;
    std::fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("spectrum.csv");
    export_spectrum(&es, &fit, &path)?;
    println!("kernel {kernel:?}: a2 = {:.6}, p = {:.4} over {} eigenvalues", fit.a2, fit.p, es.s());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec {
        k_max: args.k_max,
        r: args.r,
        ..SyntheticSpec::new(args.p, args.common.seed.unwrap_or(0))
    };
    if let Some(e) = args.eps_sq {
        spec = spec.with_eps_sq(e);
    }
    if let Some(a) = args.residual_amp {
        spec = spec.with_residual_amp(a);
    }
    let (data, truth, _) = make_synthetic(&spec, args.n)?;
    let table = LabeledTable {
        data,
        feature_names: vec!["x".into()],
        target_name: "y".into(),
    };
    std::fs::create_dir_all(&args.common.out_dir)?;
    let path = args.common.out_dir.join("synthetic.csv");
    write_csv(&table, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    eprintln!("wrote {}", path.display());

    #[derive(serde::Serialize)]
    struct Summary<'a> {
        spec: &'a SyntheticSpec,
        n: usize,
        truth: &'a sssl::synthetic::GroundTruth,
        rkhs_norm_sq: f64,
    }
    let summary = Summary {
        spec: &spec,
        n: args.n,
        truth: &truth,
        rkhs_norm_sq: truth.rkhs_norm_sq(),
    };
    let p = write_text(&args.common.out_dir, "truth.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    eprintln!("wrote {}", p.display());
    println!(
        "n = {}, a2 = {:.6}, eps^2 = {:.4e}, eps_max^2 = {:.4e}, |g|^2 = {:.6}",
        args.n,
        truth.a2,
        truth.eps_sq,
        truth.eps_max_sq,
        truth.rkhs_norm_sq()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Cv(a) => cmd_cv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

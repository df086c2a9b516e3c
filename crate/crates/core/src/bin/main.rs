use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use sepsis_mortality::cohort::InclusionScope;
use sepsis_mortality::config::{load_config, RunConfig, SelectionOn};
use sepsis_mortality::error::{Error, Result};
use sepsis_mortality::eval::TTestVariant;
use sepsis_mortality::learners::ModelFamily;
use sepsis_mortality::pipeline;
use sepsis_mortality::synth::{generate_dataset, manifest_summary, SignalKind};

#[derive(Parser)]
#[command(
    name = "sepsis-mortality",
    version,
    about = "In-hospital sepsis mortality prediction pipeline",
    long_about = "Cohort extraction from MIMIC-III-shaped CSV tables, leakage-safe \
preprocessing with SMOTE, five classifier families, bootstrap/CV evaluation, and \
TreeSHAP explanations. Exit codes: 0 success, 2 config error, 3 data/schema error, \
4 pipeline error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// TOML configuration file; flags below override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// directory holding the input CSV tables
    #[arg(long)]
    data: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// comma-separated subset of rf,gb,lr,svm,knn
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// sepsis-code scope: latest|any
    #[arg(long)]
    inclusion_scope: Option<String>,
    #[arg(long)]
    missing_threshold: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    smote_k: Option<usize>,
    #[arg(long)]
    top_k_features: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    /// student|welch
    #[arg(long)]
    ttest_variant: Option<String>,
    /// balanced|raw
    #[arg(long)]
    selection_on: Option<String>,
    /// test rows explained by SHAP (0 = all)
    #[arg(long)]
    shap_sample: Option<usize>,
}

#[derive(Args, Default)]
struct SynthArgs {
    #[arg(long)]
    n_patients: Option<usize>,
    #[arg(long)]
    sepsis_fraction: Option<f64>,
    #[arg(long)]
    mortality_rate: Option<f64>,
    #[arg(long)]
    signal_strength: Option<f64>,
    /// linear|xor
    #[arg(long)]
    signal_kind: Option<String>,
    #[arg(long)]
    n_informative_items: Option<usize>,
    #[arg(long)]
    n_noise_items: Option<usize>,
    #[arg(long)]
    missing_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset into --out
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Select the labeled cohort and write cohort.csv
    Cohort {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Aggregate events into the pivoted feature matrix (features.csv)
    Features {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Split, preprocess, select features, rebalance, and train models
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate stored models on the held-out split
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// TreeSHAP attributions for the stored tree model
    Explain {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Full pipeline end to end
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Only the train/test cohort t-test table
    TtestReport {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn build_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = &common.data {
        cfg.data_dir = Some(data.clone());
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(models) = &common.models {
        cfg.models = models
            .iter()
            .map(|m| ModelFamily::from_str(m))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(scope) = &common.inclusion_scope {
        cfg.inclusion_scope = InclusionScope::from_str(scope)?;
    }
    if let Some(v) = common.missing_threshold {
        cfg.missing_threshold = v;
    }
    if let Some(v) = common.split_ratio {
        cfg.split_ratio = v;
    }
    if let Some(v) = common.smote_k {
        cfg.smote_k = v;
    }
    if let Some(v) = common.top_k_features {
        cfg.top_k_features = v;
    }
    if let Some(v) = common.cv_folds {
        cfg.cv_folds = v;
    }
    if let Some(v) = common.bootstrap_b {
        cfg.bootstrap_b = v;
    }
    if let Some(v) = &common.ttest_variant {
        cfg.ttest_variant = TTestVariant::from_str(v)?;
    }
    if let Some(v) = &common.selection_on {
        cfg.selection_on = SelectionOn::from_str(v)?;
    }
    if let Some(v) = common.shap_sample {
        cfg.shap_sample = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_synth_args(cfg: &mut RunConfig, args: &SynthArgs) -> Result<()> {
    if let Some(v) = args.n_patients {
        cfg.synth.n_patients = v;
    }
    if let Some(v) = args.sepsis_fraction {
        cfg.synth.sepsis_fraction = v;
    }
    if let Some(v) = args.mortality_rate {
        cfg.synth.mortality_rate = v;
    }
    if let Some(v) = args.signal_strength {
        cfg.synth.signal_strength = v;
    }
    if let Some(kind) = &args.signal_kind {
        cfg.synth.signal_kind = match kind.to_lowercase().as_str() {
            "linear" => SignalKind::Linear,
            "xor" => SignalKind::Xor,
            other => {
                return Err(Error::Config(format!(
                    "signal_kind must be linear|xor, got {other:?}"
                )))
            }
        };
    }
    if let Some(v) = args.n_informative_items {
        cfg.synth.n_informative_items = v;
    }
    if let Some(v) = args.n_noise_items {
        cfg.synth.n_noise_items = v;
    }
    if let Some(v) = args.missing_rate {
        cfg.synth.missing_rate = v;
    }
    cfg.synth.validate()
}

fn cmd_synth(common: &CommonArgs, args: &SynthArgs) -> Result<()> {
    let mut cfg = build_config(common)?;
    apply_synth_args(&mut cfg, args)?;
    let out = cfg.out_dir()?.to_path_buf();
    let manifest = generate_dataset(&cfg.synth, &out)?;
    let counts = manifest_summary(&manifest)?;
    println!(
        "generated {} patients, {} admissions, {} sepsis, {} deaths -> {}",
        counts.patients,
        counts.admissions,
        counts.sepsis_patients,
        counts.deaths,
        out.display()
    );
    Ok(())
}

fn cmd_cohort(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let tables = pipeline::ingest(cfg.data_dir()?)?;
    let cohort = pipeline::build_cohort(&tables, &cfg)?;
    let out = cfg.out_dir()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    pipeline::write_string(&out.join("cohort.csv"), &pipeline::cohort_csv(&cohort))?;
    let (n, adm, deaths) = sepsis_mortality::cohort::cohort_counts(&cohort, &tables.admissions);
    println!("cohort: {n} patients covering {adm} admissions, {deaths} deaths -> cohort.csv");
    Ok(())
}

/// Loads out/cohort.csv when present, otherwise recomputes the cohort.
fn cohort_for(cfg: &RunConfig, tables: &pipeline::RawTables) -> Result<Vec<sepsis_mortality::cohort::CohortRecord>> {
    let path = cfg.out_dir()?.join("cohort.csv");
    if path.exists() {
        pipeline::read_cohort_csv(&path)
    } else {
        pipeline::build_cohort(tables, cfg)
    }
}

fn cmd_features(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let data_dir = cfg.data_dir()?.to_path_buf();
    let tables = pipeline::ingest(&data_dir)?;
    let cohort = cohort_for(&cfg, &tables)?;
    let item_names = pipeline::load_item_names(&data_dir)?;
    let features = pipeline::build_features(&tables, &cohort, &item_names, &cfg)?;
    let out = cfg.out_dir()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    features.write_csv(&out.join("features.csv"))?;
    println!(
        "features: {} rows x {} numeric + {} token columns -> features.csv",
        features.n_rows(),
        features.n_cols(),
        features.n_cat_cols()
    );
    Ok(())
}

/// Loads out/features.csv when present, otherwise rebuilds it from data.
fn features_for(cfg: &RunConfig) -> Result<sepsis_mortality::features::FeatureMatrix> {
    let path = cfg.out_dir()?.join("features.csv");
    if path.exists() {
        sepsis_mortality::features::FeatureMatrix::read_csv(&path)
    } else {
        let data_dir = cfg.data_dir()?.to_path_buf();
        let tables = pipeline::ingest(&data_dir)?;
        let cohort = cohort_for(cfg, &tables)?;
        let item_names = pipeline::load_item_names(&data_dir)?;
        pipeline::build_features(&tables, &cohort, &item_names, cfg)
    }
}

fn cmd_train(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let features = features_for(&cfg)?;
    let artifacts = pipeline::train_stage(&features, &cfg)?;
    let out = cfg.out_dir()?;
    println!(
        "trained {} model(s) on {} balanced rows ({} selected features) -> {}",
        artifacts.model_names.join(","),
        artifacts.balanced_rows,
        artifacts.selected.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let features = features_for(&cfg)?;
    let report = pipeline::evaluate_stage(&features, &cfg)?;
    for (name, eval) in &report.models {
        println!(
            "{name}: auroc {:.4} [{:.4} - {:.4}], accuracy {:.4}",
            eval.auroc, eval.auroc_ci.0, eval.auroc_ci.1, eval.accuracy
        );
    }
    Ok(())
}

fn cmd_explain(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let features = features_for(&cfg)?;
    let model = pipeline::explain_stage(&features, &cfg)?;
    println!("shap written for {model} -> shap_values.csv, shap_mean_abs.csv, shap_summary.csv");
    Ok(())
}

fn cmd_ttest_report(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let features = features_for(&cfg)?;
    let rows = pipeline::ttest_stage(&features, &cfg)?;
    println!("cohort_ttest.csv written ({} features)", rows);
    Ok(())
}

fn cmd_run(common: &CommonArgs) -> Result<()> {
    let cfg = build_config(common)?;
    let output = pipeline::run_pipeline(&cfg)?;
    println!(
        "cohort: {} patients / {} admissions / {} deaths",
        output.cohort_patients, output.cohort_admissions, output.cohort_deaths
    );
    for (name, eval) in &output.report.models {
        println!(
            "{name}: auroc {:.4} [{:.4} - {:.4}], accuracy {:.4}, f1 {:.4}",
            eval.auroc,
            eval.auroc_ci.0,
            eval.auroc_ci.1,
            eval.accuracy,
            eval.positive_deceased.f1
        );
    }
    println!("{} report files -> {}", output.report_files.len(), cfg.out_dir()?.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { common, synth } => cmd_synth(common, synth),
        Command::Cohort { common } => cmd_cohort(common),
        Command::Features { common } => cmd_features(common),
        Command::Train { common } => cmd_train(common),
        Command::Evaluate { common } => cmd_evaluate(common),
        Command::Explain { common } => cmd_explain(common),
        Command::Run { common } => cmd_run(common),
        Command::TtestReport { common } => cmd_ttest_report(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Display strings already chain stage and cause inline
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

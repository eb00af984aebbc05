use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facecue::eval::{AblationStudy, PruneScope};
use facecue::featurize::StdDivisor;
use facecue::openface::{load_manifest_with, ManifestMode};
use facecue::pipeline::{self, SeedSource};
use facecue::synth::{describe_cohort, generate_cohort, CohortSpec, SynthError};
use facecue::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "facecue", version, about = "Anxiety-cue classification experiments over OpenFace features")]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (OpenFace CSVs plus manifest.json).
    Synth {
        /// Cohort spec JSON; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-validate every dataset configuration and classifier in a config.
    Run(ExperimentArgs),
    /// Run an ablation study.
    Ablate {
        #[command(flatten)]
        common: ExperimentArgs,
        /// topk, category or pairwise.
        #[arg(long)]
        study: AblationStudy,
    },
    /// Impurity and held-out permutation feature importance.
    Importance(ExperimentArgs),
    /// Validate the recordings named by a manifest and print a column census.
    IngestCheck {
        manifest: PathBuf,
        #[arg(long)]
        lenient_manifest: bool,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Report directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides both the config seed and FACECUE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Unknown manifest fields become warnings.
    #[arg(long)]
    lenient_manifest: bool,
    /// Divide standard deviations by n instead of n - 1.
    #[arg(long)]
    population_std: bool,
    /// Fit correlation pruning once on all samples instead of per training fold.
    #[arg(long)]
    prune_global: bool,
    #[arg(long)]
    stratify_subjects_by_label: bool,
}

impl ExperimentArgs {
    /// Loads the config and applies overrides: flags, then `FACECUE_SEED`
    /// unless `--seed` was given.
    fn resolve(&self) -> Result<(ExperimentConfig, SeedSource, PathBuf), Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let mut source = SeedSource::Config;
        if cfg.apply_seed_env()? {
            source = SeedSource::Environment;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            source = SeedSource::CommandLine;
        }
        cfg.lenient_manifest |= self.lenient_manifest;
        if self.population_std {
            cfg.std_divisor = StdDivisor::Population;
        }
        if self.prune_global {
            cfg.prune_scope = PruneScope::Global;
        }
        cfg.stratify_subjects_by_label |= self.stratify_subjects_by_label;
        cfg.validate(true)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("results"));
        cfg.output_dir = Some(out.clone());
        Ok((cfg, source, out))
    }
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "n/a".into(), |a| format!("{a:.3}"))
}

fn synth(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), Error> {
    let mut spec: CohortSpec = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| SynthError::IoFailure {
                path: path.to_path_buf(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?
        }
        None => CohortSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let manifest = generate_cohort(&spec, out)?;
    let summary = describe_cohort(&manifest);
    println!("wrote {} recordings and manifest.json to {}", summary.n_subjects, out.display());
    println!("multiclass: {:?}", summary.multiclass);
    println!("binary:     {:?}", summary.binary);
    println!("gender:     {:?}", summary.gender);
    Ok(())
}

fn ingest_check(manifest: &Path, lenient: bool) -> Result<(), Error> {
    let mode = if lenient { ManifestMode::Lenient } else { ManifestMode::Strict };
    let loaded = load_manifest_with(manifest, mode)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut first_error = None;
    for (subject, result) in pipeline::ingest_check(&loaded.sessions, dir) {
        match result {
            Ok(c) => {
                let failed = c.failed_frame_fraction.map_or_else(|| "n/a".into(), |f| format!("{:.1}%", 100.0 * f));
                println!(
                    "{subject}: ok  {} frames at {:.2} fps ({:.1} s), {} columns, failed frames {failed}",
                    c.n_frames, c.fps, c.duration_s, c.n_columns
                );
                let census: Vec<String> = c.categories.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("    {}", census.join(" "));
            }
            Err(e) => {
                println!("{subject}: FAILED  {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Synth { spec, out, seed } => synth(spec.as_deref(), &out, seed),
        Command::IngestCheck {
            manifest,
            lenient_manifest,
        } => ingest_check(&manifest, lenient_manifest),
        Command::Run(args) => {
            let (cfg, source, out) = args.resolve()?;
            let report = pipeline::run_to_dir(&cfg, &out, source, jobs)?;
            for row in &report.rows {
                let a = &row.report.averaged;
                println!(
                    "{:<3} {:<18} accuracy={:.3} f1={:.3} auc={} features={:.1}",
                    row.dataset_config.to_string(),
                    row.classifier,
                    a.accuracy,
                    a.f1,
                    fmt_auc(a.auc),
                    a.n_features
                );
            }
            for e in &report.excluded {
                eprintln!("excluded {}: {}", e.subject_id, e.reason);
            }
            println!("reports written to {}", out.display());
            Ok(())
        }
        Command::Ablate { common, study } => {
            let (cfg, source, out) = common.resolve()?;
            for entry in pipeline::ablate_to_dir(&cfg, study, &out, source, jobs)? {
                for row in &entry.report.rows {
                    let a = &row.report.averaged;
                    println!(
                        "{:<3} {:<18} {:<28} accuracy={:.3} f1={:.3} features={:.1}",
                        entry.dataset_config.to_string(),
                        entry.classifier,
                        row.condition,
                        a.accuracy,
                        a.f1,
                        a.n_features
                    );
                }
            }
            println!("reports written to {}", out.display());
            Ok(())
        }
        Command::Importance(args) => {
            let (cfg, source, out) = args.resolve()?;
            for entry in pipeline::importance_to_dir(&cfg, &out, source, jobs)? {
                let top = |rows: &[pipeline::ImportanceRow]| {
                    rows.iter().take(5).map(|r| r.feature.as_str()).collect::<Vec<_>>().join(", ")
                };
                println!("{} {}", entry.dataset_config, entry.classifier);
                if let Some(imp) = &entry.impurity {
                    println!("  impurity:    {}", top(imp));
                }
                println!("  permutation: {}", top(&entry.permutation));
                for n in &entry.notices {
                    println!("  note: {n}");
                }
            }
            println!("reports written to {}", out.display());
            Ok(())
        }
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<(), String> {
    match jobs {
        Some(0) => Err("--jobs must be at least 1".into()),
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads(cli.jobs) {
        eprintln!("error: kind=InvalidArgument class=usage exit=2 message={msg}");
        return ExitCode::from(2);
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            let message = e.to_string().replace('\n', " ");
            eprintln!(
                "error: kind={} class={} exit={} message={message}",
                e.kind(),
                class.name(),
                class.exit_code()
            );
            ExitCode::from(class.exit_code() as u8)
        }
    }
}

//! `decaptcha`: generate synthetic captcha corpora, tune and train the
//! solver, solve WAV files, and evaluate against labeled manifests.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Machine-readable
//! output goes to stdout, diagnostics to stderr.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use decaptcha_core::features::FeatureConfig;
use decaptcha_core::pipeline::{
    build_training_table, cross_validate, evaluate, per_class_train_accuracy, solve, train_final,
    ClassifierKind, GridConfig, SolveOptions,
};
use decaptcha_core::segment::{detect_candidates, energy_envelope, extract_segment};
use decaptcha_core::synth::{gen_corpus, CorpusConfig, CorpusManifest, NoiseProfile};
use decaptcha_core::{model_file, read_wav, zero_mean, FeatureExtractor};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "decaptcha", version, about = "Audio-captcha solving toolkit")]
struct Cli {
    /// key=value file supplying defaults for --seed/--jobs/--theta-*
    /// (explicit flags win)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for grid search and evaluation (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ThresholdArgs {
    /// Envelope opening threshold on the max-normalized energy
    #[arg(long)]
    theta_start: Option<f64>,

    /// Envelope closing threshold (candidates close below
    /// min(theta_start, theta_end))
    #[arg(long)]
    theta_end: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus of captcha WAVs + manifest.json
    Gen {
        /// Output directory
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Minimum inter-digit silence in seconds
        #[arg(long, default_value_t = 0.3)]
        gap_min: f64,
        #[arg(long, default_value_t = 0.8)]
        gap_max: f64,
        /// White-noise SNR against the clean digit track, in dB
        #[arg(long, default_value_t = 60.0)]
        white_snr_db: f64,
        #[arg(long, default_value_t = 50.0)]
        hum_freq_hz: f64,
        #[arg(long, default_value_t = 2e-4)]
        hum_amp: f64,
        #[arg(long, default_value_t = 3e-4)]
        babble_amp: f64,
    },
    /// Cross-validated grid search; prints the accuracy grid as CSV
    Grid {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Penalty values, comma separated
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        penalties: Option<Vec<f64>>,
        /// PCA variance fractions, comma separated
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        vars: Option<Vec<f64>>,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the CSV here
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train a final model and save it
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Where to write the model file
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::ProposedSvm)]
        kind: KindArg,
        /// SVM penalty (proposed kind)
        #[arg(long, default_value_t = 50.0)]
        c: f64,
        /// PCA variance fraction (proposed kind)
        #[arg(long, default_value_t = 0.9)]
        var: f64,
    },
    /// Solve WAV files; prints one predicted digit string per line
    Solve {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// WAV files to solve
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Evaluate a model on a manifest's test split; prints the report
    /// JSON followed by a summary
    Eval {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Also write the report JSON here
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Dump the energy envelope and/or candidate features as CSV
    Inspect {
        wav: PathBuf,
        /// Write (index, value) envelope CSV here
        #[arg(long, value_name = "FILE")]
        envelope: Option<PathBuf>,
        /// Write candidate feature matrix CSV here (546 columns per row)
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    ProposedSvm,
    DefaultSvm,
    NaiveBayes,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ProposedSvm => ClassifierKind::ProposedSvm,
            KindArg::DefaultSvm => ClassifierKind::DefaultSvm,
            KindArg::NaiveBayes => ClassifierKind::NaiveBayes,
        }
    }
}

/// Defaults loaded from a key=value config file; explicit flags win.
#[derive(Default)]
struct FileDefaults {
    seed: Option<u64>,
    jobs: Option<usize>,
    theta_start: Option<f64>,
    theta_end: Option<f64>,
}

fn load_defaults(path: &Path) -> anyhow::Result<FileDefaults> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut out = FileDefaults::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key = value", path.display(), lineno + 1))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let parse_err = || format!("{}:{}: bad value {value:?}", path.display(), lineno + 1);
        match key.as_str() {
            "seed" => out.seed = Some(value.parse().with_context(parse_err)?),
            "jobs" => out.jobs = Some(value.parse().with_context(parse_err)?),
            "theta_start" => out.theta_start = Some(value.parse().with_context(parse_err)?),
            "theta_end" => out.theta_end = Some(value.parse().with_context(parse_err)?),
            other => bail!("{}:{}: unknown key {other:?}", path.display(), lineno + 1),
        }
    }
    Ok(out)
}

fn solve_options(thresholds: &ThresholdArgs, defaults: &FileDefaults) -> SolveOptions {
    let mut opts = SolveOptions::default();
    if let Some(t) = thresholds.theta_start.or(defaults.theta_start) {
        opts.theta_start = t;
    }
    if let Some(t) = thresholds.theta_end.or(defaults.theta_end) {
        opts.theta_end = t;
    }
    opts
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let defaults = match &cli.config {
        Some(path) => load_defaults(path)?,
        None => FileDefaults::default(),
    };
    if let Some(jobs) = cli.jobs.or(defaults.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let fcfg = FeatureConfig::default();

    match cli.command {
        Command::Gen {
            out,
            n_train,
            n_test,
            seed,
            gap_min,
            gap_max,
            white_snr_db,
            hum_freq_hz,
            hum_amp,
            babble_amp,
        } => {
            let cfg = CorpusConfig {
                n_train,
                n_test,
                gap_range_s: (gap_min, gap_max),
                noise: NoiseProfile {
                    white_snr_db,
                    hum_freq_hz,
                    hum_amp,
                    babble_amp,
                },
                seed: seed.or(defaults.seed).unwrap_or(DEFAULT_SEED),
                ..CorpusConfig::default()
            };
            let manifest = gen_corpus(&out, &cfg)?;
            eprintln!(
                "wrote {} wavs ({} train / {} test)",
                manifest.entries.len(),
                n_train,
                n_test
            );
            println!("{}", out.join("manifest.json").display());
        }
        Command::Grid {
            manifest,
            penalties,
            vars,
            folds,
            seed,
            out,
        } => {
            let loaded = CorpusManifest::load(&manifest)?;
            let table = build_training_table(&loaded, &manifest, &fcfg)?;
            let mut grid = GridConfig::default();
            if let Some(p) = penalties {
                grid.penalties = p;
            }
            if let Some(v) = vars {
                grid.var_fractions = v;
            }
            grid.folds = folds;
            let report = cross_validate(&table, &grid, seed.or(defaults.seed).unwrap_or(DEFAULT_SEED))?;
            let csv = report.to_csv();
            if let Some(path) = out {
                std::fs::write(&path, &csv)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            print!("{csv}");
            eprintln!(
                "best: C={} var={} accuracy={:.4}",
                report.best_c, report.best_var, report.best_accuracy
            );
        }
        Command::Train {
            manifest,
            model,
            kind,
            c,
            var,
        } => {
            let loaded = CorpusManifest::load(&manifest)?;
            let table = build_training_table(&loaded, &manifest, &fcfg)?;
            let trained = train_final(&table, kind.into(), c, Some(var), &fcfg)?;
            model_file::save_model(&trained, &model)?;
            eprintln!("per-class train accuracy (resubstitution):");
            for (label, acc) in per_class_train_accuracy(&trained, &table)? {
                let name = if label == decaptcha_core::NOISE_CLASS {
                    "noise".to_string()
                } else {
                    label.to_string()
                };
                eprintln!("  {name:>5}  {acc:.4}");
            }
            eprintln!("model written to {}", model.display());
        }
        Command::Solve {
            model,
            thresholds,
            files,
        } => {
            let model = model_file::load_model(&model)?;
            let opts = solve_options(&thresholds, &defaults);
            for file in files {
                let clip = read_wav(&file)?;
                let prediction = solve(&model, &clip, &opts)?;
                println!("{prediction}");
            }
        }
        Command::Eval {
            model,
            manifest,
            json,
            thresholds,
        } => {
            let model = model_file::load_model(&model)?;
            let loaded = CorpusManifest::load(&manifest)?;
            let opts = solve_options(&thresholds, &defaults);
            let report = evaluate(&model, &loaded, &manifest, &opts)?;
            let text = report.to_json();
            if let Some(path) = json {
                std::fs::write(&path, &text)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            println!("{text}");
            let exact = report.per_file.iter().filter(|f| f.exact_match).count();
            println!("digit_accuracy {:.6}", report.digit_accuracy);
            println!("captcha_accuracy {:.6}", report.captcha_accuracy);
            println!("exact {}/{}", exact, report.per_file.len());
        }
        Command::Inspect {
            wav,
            envelope,
            features,
            thresholds,
        } => {
            let clip = zero_mean(&read_wav(&wav)?)?;
            let env = energy_envelope(&clip)?;
            if let Some(path) = &envelope {
                std::fs::write(path, env.to_csv())
                    .with_context(|| format!("cannot write {}", path.display()))?;
                eprintln!("envelope CSV written to {}", path.display());
            }
            if let Some(path) = &features {
                let opts = solve_options(&thresholds, &defaults);
                let cands = detect_candidates(&env, opts.theta_start, opts.theta_end);
                let extractor = FeatureExtractor::new(fcfg.clone())?;
                let mut out = format!("# cfg_hash={:#018x}\n", fcfg.hash());
                out.push_str("# rows = candidate segments; 546 columns = 42 frames x 13 cepstra, frame-major\n");
                let starts: Vec<String> = cands.iter().map(|c| format!("{:.4}", c.start_s)).collect();
                out.push_str(&format!("# starts_s = {}\n", starts.join(",")));
                for cand in &cands {
                    let seg = extract_segment(&clip, cand.start_index)?;
                    let fv = extractor.features(&seg)?;
                    let row: Vec<String> = fv.values().iter().map(|v| format!("{v:.9e}")).collect();
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                std::fs::write(path, out)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                eprintln!("feature CSV written to {}", path.display());
            }
            if envelope.is_none() && features.is_none() {
                eprintln!("nothing to do: pass --envelope and/or --features");
            }
        }
    }
    Ok(())
}

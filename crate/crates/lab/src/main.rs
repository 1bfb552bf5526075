use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use spectral_lab::experiment::{summarize_files, write_summary};
use spectral_lab::formats::{self, Schema};
use spectral_lab::{run_experiment, write_outputs, Settings};

#[derive(Parser)]
#[command(name = "spectral-lab", version, about = "Train and compare spectral-risk learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials and write trajectories.csv, summary.csv and runlog.txt
    Run(Box<RunArgs>),
    /// Recompute summary statistics from trajectory files
    Summarize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file; standard output when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert input data to a delimited file plus schema, or to the normalized format
    Convert(ConvertArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    /// two-gaussian or linear-lognormal
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    synthetic_n: Option<String>,
    #[arg(long)]
    synthetic_features: Option<String>,
    #[arg(long)]
    synthetic_separation: Option<String>,
    #[arg(long)]
    synthetic_noise_sigma: Option<String>,
    /// Comma-separated subset of default,fast,off
    #[arg(long)]
    methods: Option<String>,
    /// exp, cvar or uniform
    #[arg(long)]
    spectrum: Option<String>,
    #[arg(long)]
    spec_c: Option<String>,
    #[arg(long)]
    spec_beta: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    smoothing_delta: Option<String>,
    /// Ancillary points per step, or auto
    #[arg(long)]
    ancillary: Option<String>,
    /// Also run the confidence-boosting wrapper and log its diagnostics
    #[arg(long)]
    boost: bool,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_config_file(path)?;
        }
        let flags = [
            ("data", &self.data),
            ("schema", &self.schema),
            ("delimiter", &self.delimiter),
            ("synthetic", &self.synthetic),
            ("synthetic-n", &self.synthetic_n),
            ("synthetic-features", &self.synthetic_features),
            ("synthetic-separation", &self.synthetic_separation),
            ("synthetic-noise-sigma", &self.synthetic_noise_sigma),
            ("methods", &self.methods),
            ("spectrum", &self.spectrum),
            ("spec-c", &self.spec_c),
            ("spec-beta", &self.spec_beta),
            ("epochs", &self.epochs),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("test-fraction", &self.test_fraction),
            ("radius", &self.radius),
            ("gamma", &self.gamma),
            ("smoothing-delta", &self.smoothing_delta),
            ("ancillary", &self.ancillary),
            ("delta", &self.delta),
            ("jobs", &self.jobs),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        if self.boost {
            s.set("boost", "true")?;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    /// Output data file
    #[arg(long)]
    out: PathBuf,
    /// libsvm (to delimited + schema) or normalized (delimited to normalized)
    #[arg(long, default_value = "libsvm")]
    from: String,
    /// Schema to write (libsvm) or read (normalized)
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: String,
}

fn convert(args: &ConvertArgs) -> Result<()> {
    match args.from.as_str() {
        "libsvm" => {
            let rows = formats::convert_libsvm(&args.input, &args.out, &args.schema)?;
            eprintln!("wrote {rows} rows to {} and schema {}", args.out.display(), args.schema.display());
        }
        "normalized" => {
            let mut s = Settings::default();
            s.set("delimiter", &args.delimiter)?;
            let schema = Schema::load(&args.schema)?;
            let (ds, _) = formats::load_delimited(&args.input, &schema, s.delimiter)?;
            formats::write_normalized(&ds, &args.out)?;
            eprintln!("wrote {} examples to {}", ds.len(), args.out.display());
        }
        other => anyhow::bail!("--from must be libsvm or normalized, got '{other}'"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let settings = args.settings()?;
            let output = run_experiment(&settings)?;
            write_outputs(&output, &settings.out)?;
            eprintln!("wrote {} rows to {}", output.records.len(), settings.out.join("trajectories.csv").display());
        }
        Command::Summarize { inputs, out } => {
            let paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            let rows = summarize_files(&paths)?;
            match out {
                Some(path) => write_summary(&rows, fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?,
                None => write_summary(&rows, io::stdout().lock())?,
            }
        }
        Command::Convert(args) => convert(&args)?,
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use extranormal::analysis::{extra_normal_fields, extract_pair, node_average, read_pmat, MatrixKind};
use extranormal::error::{Error, Result};
use extranormal::estimators::build_calibration;
use extranormal::grid::{save_field, save_grid_with_provenance, GridFormat};
use extranormal::pipeline::{obtain_calibration, prepared_grid, run, run_nodes, CalibrationConfig, RunConfig};
use extranormal::preprocess::Pipeline;
use extranormal::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "extranormal", version, about = "Non-Gaussian dependence analysis for gridded time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid from a JSON spec.
    Synth {
        /// Spec file, or inline JSON starting with '{'.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "flatbin")]
        format: String,
    },
    /// Build and save a calibration curve.
    Calibrate {
        #[arg(short = 'T', long = "length")]
        len: usize,
        #[arg(long, default_value_t = 8)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        rho_step: f64,
        #[arg(long, default_value_t = 0.95)]
        rho_max: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the full pipeline.
    Analyze(AnalyzeArgs),
    /// Write pair dossiers for a finished run.
    Extract {
        /// Output directory of an `analyze` run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long = "pair", value_parser = parse_pair, required = true)]
        pairs: Vec<(usize, usize)>,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute node fields from a run's saved matrices.
    Fields {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated: anomaly,gaussianize,varnorm,detrend
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    surrogates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "scatter-sample")]
    scatter_sample: Option<usize>,
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long = "drop-poles")]
    drop_poles: bool,
    /// Print the summary JSON on stdout.
    #[arg(long = "summary-stdout")]
    summary_stdout: bool,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected i,j")?;
    let a = a.trim().parse().map_err(|_| format!("bad node index '{a}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad node index '{b}'"))?;
    Ok((a, b))
}

impl AnalyzeArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let input = self
                    .input
                    .clone()
                    .ok_or_else(|| Error::Config("--input is required without --config".into()))?;
                let out = self
                    .out
                    .clone()
                    .ok_or_else(|| Error::Config("--out is required without --config".into()))?;
                RunConfig::new(input, GridFormat::Flatbin, out)
            }
        };
        if let Some(p) = self.input {
            config.input.path = p;
        }
        if let Some(f) = self.format {
            config.input.format = f.parse()?;
        }
        if self.drop_poles {
            config.input.drop_poles = true;
        }
        if let Some(s) = self.stages {
            config.stages = Pipeline::parse(&s)?;
        }
        if let Some(b) = self.bins {
            config.bins = b;
        }
        if let Some(n) = self.surrogates {
            config.surrogates.n = n;
        }
        if let Some(s) = self.seed {
            config.surrogates.seed = s;
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(o) = self.out {
            config.outputs.dir = o;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        if let Some(k) = self.scatter_sample {
            config.outputs.scatter_sample = k;
        }
        if !self.pairs.is_empty() {
            config.outputs.pairs = self.pairs;
        }
        if let Some(c) = self.calibration {
            config.calibration.path = Some(c);
        }
        Ok(config)
    }
}

fn read_run_config(run_dir: &Path) -> Result<RunConfig> {
    RunConfig::load(&run_dir.join("run_config.json"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, format } => {
            let text = if spec.trim_start().starts_with('{') {
                spec
            } else {
                fs::read_to_string(&spec).map_err(|e| Error::Io {
                    path: spec.clone().into(),
                    source: e,
                })?
            };
            let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let grid = spec.generate()?;
            let provenance = serde_json::json!({ "synth": spec });
            save_grid_with_provenance(&grid, &out, format.parse()?, Some(provenance))?;
            info!("wrote {} (T = {}, N = {})", out.display(), grid.len(), grid.n_nodes());
        }
        Command::Calibrate {
            len,
            bins,
            seed,
            replicates,
            rho_step,
            rho_max,
            out,
            threads,
        } => {
            let grid = CalibrationConfig {
                path: None,
                seed,
                replicates,
                rho_step,
                rho_max,
            }
            .rho_grid()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            let curve = pool.install(|| build_calibration(len, bins, &grid, replicates, seed))?;
            fs::write(&out, curve.to_json()? + "\n").map_err(|e| Error::Io { path: out.clone(), source: e })?;
            info!("wrote {} ({} knots)", out.display(), curve.knots.len());
        }
        Command::Analyze(args) => {
            let summary_stdout = args.summary_stdout;
            let config = args.into_config()?;
            let bundle = run(&config)?;
            if summary_stdout {
                println!("{}", serde_json::to_string_pretty(&bundle.summary)?);
            }
        }
        Command::Extract { run, pairs, out } => {
            let mut config = read_run_config(&run)?;
            config.calibration.path = Some(run.join("calibration.json"));
            let grid = prepared_grid(&config)?;
            let curve = obtain_calibration(&config, grid.len())?;
            let out = out.unwrap_or(run);
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            for (i, j) in pairs {
                let d = extract_pair(&grid, i, j, config.bins, &curve)?;
                let stem = out.join(format!("pair_{i}_{j}"));
                write_json(&stem.with_extension("json"), &d)?;
                let csv = stem.with_extension("csv");
                fs::write(&csv, d.to_csv()).map_err(|e| Error::Io { path: csv.clone(), source: e })?;
                info!("wrote dossier for ({i}, {j})");
            }
        }
        Command::Fields { run, out } => {
            let config = read_run_config(&run)?;
            let nodes = run_nodes(&config)?;
            let mi = read_pmat(&run.join("mi.pmat"))?;
            let surr = read_pmat(&run.join("mi_surr_mean.pmat"))?;
            if mi.kind() != MatrixKind::MiCalibrated || surr.kind() != MatrixKind::MiSurrMean {
                return Err(Error::Consistency("unexpected matrix kinds in run directory".into()));
            }
            let mi_field = node_average(&mi, &nodes)?;
            let surr_field = node_average(&surr, &nodes)?;
            let (extra, relative) = extra_normal_fields(&mi_field, &surr_field)?;
            let out = out.unwrap_or(run);
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            for (name, f) in [
                ("mi_mean", &mi_field),
                ("mi_surr_mean", &surr_field),
                ("extra_normal", &extra),
                ("extra_normal_relative", &relative),
            ] {
                save_field(f, &out.join(format!("{name}.csv")))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

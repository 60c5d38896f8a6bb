//! End-to-end runs driven by a single JSON configuration.
//!
//! A run loads a grid, applies the preprocessing stages, obtains a calibration
//! curve, computes data and surrogate matrices, and writes matrices, fields,
//! a summary and optional pair dossiers. Files are assembled in a staging
//! directory inside the output directory and moved into place only when every
//! stage has succeeded. Every artifact gets a `<file>.json` provenance sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    extra_normal_fields, extract_pair, node_average, pairwise_correlation, pairwise_mi, sample_pairs,
    significance, significance_threshold, surrogate_mi_stats, write_pmat, NodeField, PairMatrix,
    SignificanceSummary,
};
use crate::error::{Error, Result};
use crate::estimators::{build_calibration, CalibrationCurve, DEFAULT_BINS, MAX_BINS};
use crate::grid::{drop_poles, load_grid, save_field, GridFormat, NodeMeta, TimeSeriesGrid};
use crate::preprocess::Pipeline;
use crate::rng::DERIVATION_RULE;
use crate::surrogates::{SurrogateSpec, DEFAULT_SURROGATES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    pub format: GridFormat,
    #[serde(default)]
    pub drop_poles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Load a saved curve instead of building one.
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub replicates: usize,
    pub rho_step: f64,
    pub rho_max: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            path: None,
            seed: 1,
            replicates: 1000,
            rho_step: 0.05,
            rho_max: 0.95,
        }
    }
}

impl CalibrationConfig {
    pub fn rho_grid(&self) -> Result<Vec<f64>> {
        if !(self.rho_step > 0.0) || !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(Error::Config(format!(
                "rho_step {} / rho_max {} must be positive with rho_max < 1",
                self.rho_step, self.rho_max
            )));
        }
        let steps = (self.rho_max / self.rho_step + 1e-9).floor() as usize;
        Ok((0..=steps).map(|k| k as f64 * self.rho_step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub n: usize,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            n: DEFAULT_SURROGATES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub matrices: bool,
    #[serde(default = "yes")]
    pub fields: bool,
    #[serde(default = "yes")]
    pub summary: bool,
    /// Number of randomly sampled pairs written to `scatter_sample.json`.
    #[serde(default)]
    pub scatter_sample: usize,
    #[serde(default)]
    pub scatter_seed: u64,
    /// Pairs that get a full dossier.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
}

fn yes() -> bool {
    true
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    #[serde(default = "Pipeline::standard")]
    pub stages: Pipeline,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub surrogates: SurrogateConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub outputs: OutputConfig,
    /// Worker threads; 0 uses all cores. Never affects results.
    #[serde(default)]
    pub threads: usize,
}

impl RunConfig {
    pub fn new(input: PathBuf, format: GridFormat, out: PathBuf) -> Self {
        RunConfig {
            input: InputConfig {
                path: input,
                format,
                drop_poles: false,
            },
            stages: Pipeline::standard(),
            bins: DEFAULT_BINS,
            calibration: CalibrationConfig::default(),
            surrogates: SurrogateConfig::default(),
            alpha: default_alpha(),
            outputs: OutputConfig {
                dir: out,
                matrices: true,
                fields: true,
                summary: true,
                scatter_sample: 0,
                scatter_seed: 0,
                pairs: Vec::new(),
            },
            threads: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked before touching the data.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::Config(format!("alpha {} outside (0, 0.5]", self.alpha)));
        }
        if !(2..=MAX_BINS).contains(&self.bins) {
            return Err(Error::Config(format!("bins {} outside 2..={MAX_BINS}", self.bins)));
        }
        if self.surrogates.n == 0 || self.surrogates.n > u16::MAX as usize {
            return Err(Error::Config(format!(
                "surrogate count {} outside 1..={}",
                self.surrogates.n,
                u16::MAX
            )));
        }
        significance_threshold(self.alpha, self.surrogates.n)?;
        if !self.input.path.exists() {
            return Err(Error::Config(format!(
                "input {} does not exist",
                self.input.path.display()
            )));
        }
        match &self.calibration.path {
            Some(p) if !p.exists() => {
                return Err(Error::Config(format!("calibration {} does not exist", p.display())))
            }
            Some(_) => {}
            None => {
                self.calibration.rho_grid()?;
                if self.calibration.replicates < crate::estimators::MIN_REPLICATES {
                    return Err(Error::Config(format!(
                        "calibration replicates {} below {}",
                        self.calibration.replicates,
                        crate::estimators::MIN_REPLICATES
                    )));
                }
            }
        }
        if let Some((i, j)) = self.outputs.pairs.iter().find(|(i, j)| i == j) {
            return Err(Error::Config(format!("dossier pair ({i}, {j}) repeats a node")));
        }
        Ok(())
    }

    /// SHA-256 of the configuration with execution-only fields (thread count,
    /// output directory) blanked, so it identifies the results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.threads = 0;
        canon.outputs.dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Provenance stored next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub config_hash: String,
    pub input_sha256: String,
    pub label: String,
    pub stages: Vec<String>,
    pub bins: usize,
    pub alpha: f64,
    pub n_surr: usize,
    pub master_seed: u64,
    pub seed_derivation: String,
    pub calibration_seed: u64,
    pub calibration_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub config_hash: String,
    pub input_sha256: String,
    pub stages: Vec<String>,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub bins: usize,
    pub master_seed: u64,
    pub seed_derivation: String,
    pub calibration_seed: u64,
    pub significance: SignificanceSummary,
    pub mean_abs_correlation: f64,
    pub mean_mi: f64,
    pub mean_mi_surr: f64,
    pub mean_extra_normal: f64,
}

/// In-memory results of a run, alongside the files written.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
    pub correlation: PairMatrix,
    pub mi: PairMatrix,
    pub mi_surr_mean: PairMatrix,
    pub exceed: PairMatrix,
    pub significant: PairMatrix,
    pub fields: Vec<NodeField>,
}

/// Sampled pair record for MI-vs-correlation scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub i: usize,
    pub j: usize,
    pub correlation: f32,
    pub mi: f32,
    pub mi_surr_mean: f32,
    pub exceed_count: f32,
    pub significant: bool,
}

/// Loads the input grid, dropping pole rows when configured.
pub fn load_input(input: &InputConfig) -> Result<TimeSeriesGrid> {
    let grid = load_grid(&input.path, input.format)?;
    if input.drop_poles {
        let g = drop_poles(&grid);
        g.validate()?;
        Ok(g)
    } else {
        Ok(grid)
    }
}

/// Input grid after the configured preprocessing stages.
pub fn prepared_grid(config: &RunConfig) -> Result<TimeSeriesGrid> {
    let grid = load_input(&config.input).map_err(|e| e.in_stage("load"))?;
    config.stages.apply(&grid).map_err(|e| e.in_stage("preprocess"))
}

pub fn obtain_calibration(config: &RunConfig, len: usize) -> Result<CalibrationCurve> {
    let cal = &config.calibration;
    let curve = match &cal.path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            CalibrationCurve::from_json(&text)?
        }
        None => build_calibration(len, config.bins, &cal.rho_grid()?, cal.replicates, cal.seed)?,
    };
    curve.ensure_matches(len, config.bins)?;
    Ok(curve)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

struct Staging {
    dir: PathBuf,
    names: Vec<String>,
}

impl Staging {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }
}

/// Executes the whole pipeline and writes all requested artifacts.
pub fn run(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(config))
}

fn run_inner(config: &RunConfig) -> Result<ReportBundle> {
    let config_hash = config.hash();
    let input_sha256 = sha256_file(&config.input.path)?;
    let grid = prepared_grid(config)?;
    let (len, n, q) = (grid.len(), grid.n_nodes(), config.bins);
    if let Some((i, j)) = config.outputs.pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(Error::Config(format!("dossier pair ({i}, {j}) outside {n} nodes")));
    }
    if config.outputs.scatter_sample > crate::analysis::n_pairs(n) {
        return Err(Error::Config(format!(
            "scatter sample of {} exceeds {} pairs",
            config.outputs.scatter_sample,
            crate::analysis::n_pairs(n)
        )));
    }
    info!("grid '{}': T = {len}, N = {n}, stages {:?}", grid.label(), config.stages.names());

    let curve = obtain_calibration(config, len).map_err(|e| e.in_stage("calibrate"))?;
    info!("calibration ready ({} knots)", curve.knots.len());

    let correlation = pairwise_correlation(&grid).map_err(|e| e.in_stage("correlation"))?;
    let mi = pairwise_mi(&grid, q, &curve).map_err(|e| e.in_stage("mutual information"))?;
    info!("data matrices done; {} pairs", mi.stat().len());

    let spec = SurrogateSpec::new(config.surrogates.seed, config.surrogates.n);
    let (mi_surr_mean, exceed) =
        surrogate_mi_stats(&grid, &spec, q, &curve, &mi).map_err(|e| e.in_stage("surrogates"))?;
    let (significant, sig_summary) =
        significance(&exceed, config.alpha, spec.n_surr).map_err(|e| e.in_stage("significance"))?;
    info!(
        "{} of {} pairs significant ({:.4})",
        sig_summary.significant_pairs, sig_summary.total_pairs, sig_summary.fraction
    );

    let mi_field = node_average(&mi, grid.nodes())?;
    let surr_field = node_average(&mi_surr_mean, grid.nodes())?;
    let (extra, relative) = extra_normal_fields(&mi_field, &surr_field)?;

    let stages: Vec<String> = config.stages.names().iter().map(|s| s.to_string()).collect();
    let summary = RunSummary {
        label: grid.label().to_string(),
        config_hash: config_hash.clone(),
        input_sha256: input_sha256.clone(),
        stages: stages.clone(),
        len,
        n,
        bins: q,
        master_seed: spec.master_seed,
        seed_derivation: DERIVATION_RULE.to_string(),
        calibration_seed: curve.seed,
        significance: sig_summary,
        mean_abs_correlation: mean(correlation.stat().iter().map(|&r| f64::from(r).abs())),
        mean_mi: mean(mi.stat().iter().map(|&v| f64::from(v))),
        mean_mi_surr: mean(mi_surr_mean.stat().iter().map(|&v| f64::from(v))),
        mean_extra_normal: mean(extra.values().iter().flatten().copied()),
    };
    let provenance = |artifact: &str| Provenance {
        artifact: artifact.to_string(),
        config_hash: config_hash.clone(),
        input_sha256: input_sha256.clone(),
        label: grid.label().to_string(),
        stages: stages.clone(),
        bins: q,
        alpha: config.alpha,
        n_surr: spec.n_surr,
        master_seed: spec.master_seed,
        seed_derivation: DERIVATION_RULE.to_string(),
        calibration_seed: curve.seed,
        calibration_replicates: curve.replicates,
    };

    let out_dir = &config.outputs.dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut staging = Staging {
        dir: out_dir.join(format!(".partial-{}", &config_hash[..12])),
        names: Vec::new(),
    };
    if staging.dir.exists() {
        fs::remove_dir_all(&staging.dir).map_err(|e| Error::io(&staging.dir, e))?;
    }
    fs::create_dir_all(&staging.dir).map_err(|e| Error::io(&staging.dir, e))?;

    let fields = vec![mi_field, surr_field, extra, relative];
    let written = (|| -> Result<()> {
        staging.write_json("run_config.json", config)?;
        staging.write("calibration.json", curve.to_json()? + "\n")?;
        staging.write_json("calibration.json.json", &provenance("calibration"))?;
        if config.outputs.matrices {
            for (name, m) in [
                ("correlation", &correlation),
                ("mi", &mi),
                ("mi_surr_mean", &mi_surr_mean),
                ("exceed_count", &exceed),
                ("significant", &significant),
            ] {
                let file = format!("{name}.pmat");
                let p = staging.path(&file);
                write_pmat(m, &p)?;
                staging.write_json(&format!("{file}.json"), &provenance(name))?;
            }
        }
        if config.outputs.fields {
            for (name, f) in ["mi_mean", "mi_surr_mean", "extra_normal", "extra_normal_relative"]
                .iter()
                .zip(&fields)
            {
                let file = format!("{name}.csv");
                let p = staging.path(&file);
                save_field(f, &p)?;
                staging.write_json(&format!("{file}.json"), &provenance(name))?;
            }
        }
        if config.outputs.summary {
            staging.write_json("summary.json", &summary)?;
        }
        if config.outputs.scatter_sample > 0 {
            let points: Vec<ScatterPoint> =
                sample_pairs(n, config.outputs.scatter_sample, config.outputs.scatter_seed)?
                    .into_iter()
                    .map(|(i, j)| ScatterPoint {
                        i,
                        j,
                        correlation: correlation.get(i, j),
                        mi: mi.get(i, j),
                        mi_surr_mean: mi_surr_mean.get(i, j),
                        exceed_count: exceed.get(i, j),
                        significant: significant.get(i, j) == 1.0,
                    })
                    .collect();
            staging.write_json("scatter_sample.json", &points)?;
            staging.write_json("scatter_sample.json.json", &provenance("scatter_sample"))?;
        }
        for &(i, j) in &config.outputs.pairs {
            let d = extract_pair(&grid, i, j, q, &curve)?;
            let stem = format!("pair_{i}_{j}");
            staging.write_json(&format!("{stem}.json"), &d)?;
            staging.write(&format!("{stem}.csv"), d.to_csv())?;
            staging.write_json(&format!("{stem}.json.json"), &provenance("pair_dossier"))?;
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("write outputs"));
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging.dir);
        return Err(e);
    }

    let mut files = Vec::with_capacity(staging.names.len());
    for name in &staging.names {
        let (from, to) = (staging.dir.join(name), out_dir.join(name));
        fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
        files.push(to);
    }
    fs::remove_dir(&staging.dir).map_err(|e| Error::io(&staging.dir, e))?;

    Ok(ReportBundle {
        summary,
        files,
        correlation,
        mi,
        mi_surr_mean,
        exceed,
        significant,
        fields,
    })
}

/// Node metadata of a run's (pole-filtered) input grid.
pub fn run_nodes(config: &RunConfig) -> Result<Vec<NodeMeta>> {
    let nodes = crate::grid::load_nodes(&config.input.path)?;
    Ok(if config.input.drop_poles {
        nodes
            .into_iter()
            .filter(|n| n.lat.abs() != 90.0)
            .enumerate()
            .map(|(k, n)| NodeMeta { index: k, ..n })
            .collect()
    } else {
        nodes
    })
}

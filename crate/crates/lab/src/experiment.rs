//! The benchmark driver: seeded trials, per-epoch metrics and the CSV files
//! they are written to.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use spectral_core::boost::run_boosted;
use spectral_core::data::{make_synthetic, split_shuffle_with, Dataset};
use spectral_core::optim::{
    ceil_sqrt, default_step_size, sample_ball, AncillarySize, Learner, Method, MirrorGeometry, RunConfig,
    SliceSource, StepSettings, StepSize,
};
use spectral_core::risk::plugin_spectral_risk;
use spectral_core::{derive_rng, Example, LossModel, Rng64, Spectrum};

use crate::formats::{self, Schema};
use crate::settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    SpectralRisk,
    Misclass,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SpectralRisk => "spectral_risk",
            Metric::Misclass => "misclass",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => bail!("unknown split '{s}'"),
        }
    }
}

impl FromStr for Metric {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral_risk" => Ok(Metric::SpectralRisk),
            "misclass" => Ok(Metric::Misclass),
            _ => bail!("unknown metric '{s}'"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub trial: usize,
    pub epoch: usize,
    pub split: Split,
    pub metric: Metric,
    pub method: Method,
    pub value: f64,
}

impl TrajectoryRecord {
    fn sort_key(&self) -> (usize, usize, Method, Split, Metric) {
        (self.trial, self.epoch, self.method, self.split, self.metric)
    }
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["trial", "epoch", "split", "metric", "method", "value"];
pub const SUMMARY_HEADER: [&str; 6] = ["method", "epoch", "split", "metric", "mean", "std"];

/// Per-method quantities fixed by the training-set size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodPlan {
    pub method: Method,
    /// `M`; zero for methods without ancillary draws.
    pub ancillary: usize,
    pub steps_per_epoch: usize,
    pub alpha: f64,
}

pub fn plan_method(method: Method, settings: &Settings, n_train: usize, d: usize) -> Result<MethodPlan> {
    let (ancillary, steps_per_epoch) = if method.uses_ancillary() {
        let m = match settings.ancillary {
            AncillarySize::Auto => ceil_sqrt(n_train),
            AncillarySize::Fixed(m) => m,
        }
        .max(2);
        let steps = n_train / (m + 1);
        if steps == 0 {
            bail!("{method}: the training set ({n_train} examples) is smaller than one block of {m} ancillary points plus one update point");
        }
        (m, steps)
    } else {
        (0, n_train)
    };
    Ok(MethodPlan {
        method,
        ancillary,
        steps_per_epoch,
        alpha: default_step_size(method, n_train, d, settings.gamma),
    })
}

/// Boosting diagnostics for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostReport {
    pub k: usize,
    pub per_candidate_budget: usize,
    pub holdout_cdf_size: usize,
    pub holdout_estimate_size: usize,
    /// `R̂` per candidate.
    pub estimates: Vec<f64>,
    pub selected: usize,
    pub epsilon2: f64,
    pub lipschitz_term_dropped: bool,
    /// Plug-in spectral risk of the selected candidate on the test split.
    pub selected_test_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub trial: usize,
    pub records: Vec<TrajectoryRecord>,
    pub boost: Option<BoostReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrajectoryRecord>,
    pub trials: Vec<TrialReport>,
    pub runlog: String,
}

/// The dataset named by the settings: a synthetic draw, a normalized file,
/// or a delimited file read with its schema.
pub fn load_dataset(settings: &Settings) -> Result<Dataset> {
    if let Some(kind) = settings.synthetic_kind() {
        return Ok(make_synthetic(&kind, settings.synthetic_n, settings.seed)?);
    }
    let path = settings.data.as_ref().ok_or_else(|| anyhow!("no data file given"))?;
    if formats::is_normalized(path)? {
        return formats::read_normalized(path);
    }
    let schema_path = settings
        .schema
        .as_ref()
        .ok_or_else(|| anyhow!("{} needs a schema file (--schema)", path.display()))?;
    let schema = Schema::load(schema_path)?;
    Ok(formats::load_delimited(path, &schema, settings.delimiter)?.0)
}

pub fn model_for(ds: &Dataset) -> LossModel {
    if ds.n_classes > 0 {
        LossModel::multiclass_logistic(ds.n_classes, ds.n_features())
    } else {
        LossModel::synthetic_linear(ds.n_features())
    }
}

fn metrics_for(ds: &Dataset) -> &'static [Metric] {
    if ds.n_classes > 0 {
        &[Metric::SpectralRisk, Metric::Misclass]
    } else {
        &[Metric::SpectralRisk]
    }
}

fn spectral_risk(w: &[f64], data: &[Example], model: &LossModel, spectrum: &Spectrum) -> Result<f64> {
    let losses = data.iter().map(|z| model.loss(w, z)).collect::<Result<Vec<_>, _>>()?;
    Ok(plugin_spectral_risk(&losses, spectrum)?)
}

struct TrialContext<'a> {
    settings: &'a Settings,
    ds: &'a Dataset,
    model: &'a LossModel,
    spectrum: &'a Spectrum,
    geometry: MirrorGeometry,
}

impl TrialContext<'_> {
    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        trial: usize,
        epoch: usize,
        method: Method,
        w: &[f64],
        train: &Dataset,
        test: &Dataset,
        out: &mut Vec<TrajectoryRecord>,
    ) -> Result<()> {
        for (split, data) in [(Split::Train, train), (Split::Test, test)] {
            for &metric in metrics_for(self.ds) {
                let value = match metric {
                    Metric::SpectralRisk => spectral_risk(w, &data.examples, self.model, self.spectrum)?,
                    Metric::Misclass => self.model.misclassification_rate(w, &data.examples)?,
                };
                if !value.is_finite() {
                    bail!("trial {trial}, {method}, epoch {epoch}: {split} {metric} is not finite; try a smaller gamma or radius");
                }
                out.push(TrajectoryRecord {
                    trial,
                    epoch,
                    split,
                    metric,
                    method,
                    value,
                });
            }
        }
        Ok(())
    }

    fn run_trial(&self, trial: usize) -> Result<TrialReport> {
        let s = self.settings;
        let mut rng = derive_rng(s.seed, trial as u64);
        let (train, test) = split_shuffle_with(self.ds, s.test_fraction, &mut rng)?;
        let d = self.model.dim();
        let mut w0 = sample_ball(d, &mut rng);
        let r0 = s.radius.min(1.0);
        w0.iter_mut().for_each(|v| *v *= r0);
        // drawn for every method so enabling or dropping one leaves the others unchanged
        let method_seeds: Vec<(Method, u64)> = Method::ALL.iter().map(|&m| (m, rng.random())).collect();
        let boost_seed: u64 = rng.random();

        let mut records = Vec::new();
        for &(method, seed) in &method_seeds {
            if !s.methods.contains(&method) {
                continue;
            }
            let plan = plan_method(method, s, train.len(), d)?;
            let settings = StepSettings {
                alpha: plan.alpha,
                smoothing_delta: s.smoothing_delta,
                ancillary: plan.ancillary,
            };
            let mut learner = Learner::new(self.model, self.spectrum, self.geometry, method, settings, w0.clone())?;
            let mut method_rng = Rng64::seed_from_u64(seed);
            let mut order = train.examples.clone();
            self.measure(trial, 0, method, learner.current(), &train, &test, &mut records)?;
            for epoch in 1..=s.epochs {
                order.shuffle(&mut method_rng);
                let mut source = SliceSource::new(&order);
                for _ in 0..plan.steps_per_epoch {
                    learner.step(&mut source, &mut method_rng)?;
                }
                self.measure(trial, epoch, method, learner.current(), &train, &test, &mut records)?;
            }
        }

        let boost = if s.boost {
            Some(self.boost_trial(&train, &test, &w0, boost_seed)?)
        } else {
            None
        };
        Ok(TrialReport {
            trial,
            records,
            boost,
        })
    }

    fn boost_trial(&self, train: &Dataset, test: &Dataset, w0: &[f64], seed: u64) -> Result<BoostReport> {
        let s = self.settings;
        let mut rng = Rng64::seed_from_u64(seed);
        let mut stream = train.examples.clone();
        stream.shuffle(&mut rng);
        let cfg = RunConfig {
            method: Method::Default,
            step_size: StepSize::Protocol { gamma: s.gamma },
            smoothing_delta: s.smoothing_delta,
            ancillary_size: s.ancillary,
        };
        let out = run_boosted(
            self.model,
            &mut SliceSource::new(&stream),
            self.spectrum,
            &self.geometry,
            &cfg,
            stream.len(),
            s.delta,
            w0,
            &mut rng,
        )
        .context("boosting")?;
        Ok(BoostReport {
            k: out.plan.k,
            per_candidate_budget: out.plan.per_candidate_budget,
            holdout_cdf_size: out.plan.holdout_cdf_size,
            holdout_estimate_size: out.plan.holdout_estimate_size,
            estimates: out.selection.validations.iter().map(|v| v.estimate).collect(),
            selected: out.selection.index,
            epsilon2: out.epsilon2,
            lipschitz_term_dropped: out.lipschitz_term_dropped,
            selected_test_risk: spectral_risk(out.selected(), &test.examples, self.model, self.spectrum)?,
        })
    }
}

/// Runs every trial on a pool of `settings.jobs` workers. Output does not
/// depend on the number of workers.
pub fn run_experiment(settings: &Settings) -> Result<ExperimentOutput> {
    settings.validate()?;
    let ds = load_dataset(settings)?;
    run_on_dataset(settings, &ds)
}

pub fn run_on_dataset(settings: &Settings, ds: &Dataset) -> Result<ExperimentOutput> {
    let spectrum = settings.spectrum()?;
    let model = model_for(ds);
    let ctx = TrialContext {
        settings,
        ds,
        model: &model,
        spectrum: &spectrum,
        geometry: MirrorGeometry::euclidean(settings.radius)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .context("starting the worker pool")?;
    let trials: Vec<TrialReport> = pool.install(|| {
        (0..settings.trials)
            .into_par_iter()
            .map(|t| ctx.run_trial(t))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut records: Vec<TrajectoryRecord> = trials.iter().flat_map(|t| t.records.iter().copied()).collect();
    records.sort_by_key(TrajectoryRecord::sort_key);
    let runlog = runlog(settings, ds, &model, &ctx.geometry, &trials)?;
    Ok(ExperimentOutput {
        records,
        trials,
        runlog,
    })
}

fn runlog(
    settings: &Settings,
    ds: &Dataset,
    model: &LossModel,
    geometry: &MirrorGeometry,
    trials: &[TrialReport],
) -> Result<String> {
    let mut log = String::new();
    let n_test = (ds.len() as f64 * settings.test_fraction).round() as usize;
    let n_train = ds.len() - n_test;
    writeln!(log, "# resolved configuration")?;
    log.push_str(&settings.to_config_text());
    writeln!(log, "\n# data")?;
    match settings.synthetic_kind() {
        Some(kind) => writeln!(log, "source = synthetic {kind}")?,
        None => writeln!(log, "source = {}", settings.get("data"))?,
    }
    writeln!(log, "examples = {} (train {n_train}, test {n_test})", ds.len())?;
    writeln!(log, "features = {}", ds.n_features())?;
    writeln!(log, "classes = {}", ds.n_classes)?;
    writeln!(log, "model = {} with {} parameters", model.name(), model.dim())?;
    writeln!(log, "\n# geometry")?;
    writeln!(log, "radius = {}", geometry.radius())?;
    writeln!(log, "Delta = {}", geometry.diameter())?;
    writeln!(log, "Delta_Phi = {}", geometry.bregman_diameter())?;
    writeln!(log, "\n# methods (per epoch)")?;
    for &method in &settings.methods {
        let plan = plan_method(method, settings, n_train, model.dim())?;
        writeln!(
            log,
            "{method}: M = {}, T = {}, alpha = {}",
            plan.ancillary, plan.steps_per_epoch, plan.alpha
        )?;
    }
    if settings.boost {
        writeln!(log, "\n# boosting (delta = {})", settings.delta)?;
        let mut warned = false;
        for t in trials {
            let Some(b) = &t.boost else { continue };
            writeln!(
                log,
                "trial {}: k = {}, share = {}, holdout = {} + {}",
                t.trial, b.k, b.per_candidate_budget, b.holdout_cdf_size, b.holdout_estimate_size
            )?;
            for (j, r) in b.estimates.iter().enumerate() {
                let mark = if j == b.selected { " *" } else { "" };
                writeln!(log, "  candidate {j}: R_hat = {r}{mark}")?;
            }
            writeln!(log, "  epsilon2 = {}", b.epsilon2)?;
            writeln!(log, "  selected test spectral risk = {}", b.selected_test_risk)?;
            warned |= b.lipschitz_term_dropped;
        }
        if warned {
            writeln!(
                log,
                "warning: the spectrum has no finite Lipschitz constant; epsilon2 omits that term and is not a valid bound"
            )?;
        }
    }
    Ok(log)
}

pub fn write_trajectories<W: io::Write>(records: &[TrajectoryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.epoch.to_string(),
            r.split.to_string(),
            r.metric.to_string(),
            r.method.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    for name in expected {
        if !found.iter().any(|h| h == *name) {
            bail!("{}: missing column '{name}'", path.display());
        }
    }
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != *b) {
        bail!(
            "{}: header is '{}', expected '{}'",
            path.display(),
            found.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        );
    }
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(reader.headers()?, &TRAJECTORY_HEADER, path)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = || format!("{}: row {}", path.display(), i + 2);
        out.push(TrajectoryRecord {
            trial: record[0].parse().with_context(row)?,
            epoch: record[1].parse().with_context(row)?,
            split: record[2].parse().with_context(row)?,
            metric: record[3].parse().with_context(row)?,
            method: record[4]
                .parse()
                .map_err(|_| anyhow!("unknown method '{}'", &record[4]))
                .with_context(row)?,
            value: record[5].parse().with_context(row)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub epoch: usize,
    pub split: Split,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation over trials; zero for a single trial.
    pub std: f64,
}

/// Mean and standard deviation over trials per `(method, epoch, split, metric)`.
pub fn summarize(records: &[TrajectoryRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        bail!("no trajectory rows to summarize");
    }
    let mut groups: BTreeMap<(Method, usize, Split, Metric), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.method, r.epoch, r.split, r.metric))
            .or_default()
            .push(r.value);
    }
    Ok(groups
        .into_iter()
        .map(|((method, epoch, split, metric), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                epoch,
                split,
                metric,
                mean,
                std,
            }
        })
        .collect())
}

pub fn summarize_files(paths: &[&Path]) -> Result<Vec<SummaryRow>> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(read_trajectories(path)?);
    }
    summarize(&records)
}

pub fn write_summary<W: io::Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.epoch.to_string(),
            r.split.to_string(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trajectories.csv`, `summary.csv` and `runlog.txt` into `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let open = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
    };
    write_trajectories(&output.records, io::BufWriter::new(open("trajectories.csv")?))?;
    write_summary(&summarize(&output.records)?, io::BufWriter::new(open("summary.csv")?))?;
    fs::write(dir.join("runlog.txt"), &output.runlog)?;
    Ok(())
}

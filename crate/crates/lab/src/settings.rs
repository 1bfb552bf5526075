//! Experiment settings. Config-file keys are the long flag names without
//! the leading dashes; flags given on the command line override the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use spectral_core::data::SyntheticKind;
use spectral_core::optim::{AncillarySize, Method};
use spectral_core::Spectrum;

use crate::keyvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumChoice {
    Exponential,
    Cvar,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticChoice {
    TwoGaussian,
    LinearLognormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub delimiter: u8,
    pub synthetic: Option<SyntheticChoice>,
    pub synthetic_n: usize,
    pub synthetic_features: usize,
    pub synthetic_separation: f64,
    pub synthetic_noise_sigma: f64,
    pub methods: Vec<Method>,
    pub spectrum: SpectrumChoice,
    pub spec_c: f64,
    pub spec_beta: f64,
    pub epochs: usize,
    pub trials: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub radius: f64,
    pub gamma: f64,
    pub smoothing_delta: f64,
    pub ancillary: AncillarySize,
    pub boost: bool,
    pub delta: f64,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            data: None,
            schema: None,
            delimiter: b',',
            synthetic: None,
            synthetic_n: 5000,
            synthetic_features: 2,
            synthetic_separation: 2.0,
            synthetic_noise_sigma: 0.5,
            methods: Method::ALL.to_vec(),
            spectrum: SpectrumChoice::Exponential,
            spec_c: 1.0,
            spec_beta: 0.9,
            epochs: 50,
            trials: 10,
            seed: 0,
            test_fraction: 0.2,
            radius: 100.0,
            gamma: 1.0,
            smoothing_delta: 0.5,
            ancillary: AncillarySize::Auto,
            boost: false,
            delta: 0.1,
            jobs: 1,
            out: PathBuf::from("out"),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("{key}: cannot parse '{value}'"))
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("{key} must be a positive number, got {value}");
    }
    Ok(v)
}

fn open_unit(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if !(v > 0.0 && v < 1.0) {
        bail!("{key} must lie strictly between 0 and 1, got {value}");
    }
    Ok(v)
}

impl Settings {
    pub const KEYS: [&'static str; 24] = [
        "data",
        "schema",
        "delimiter",
        "synthetic",
        "synthetic-n",
        "synthetic-features",
        "synthetic-separation",
        "synthetic-noise-sigma",
        "methods",
        "spectrum",
        "spec-c",
        "spec-beta",
        "epochs",
        "trials",
        "seed",
        "test-fraction",
        "radius",
        "gamma",
        "smoothing-delta",
        "ancillary",
        "boost",
        "delta",
        "jobs",
        "out",
    ];

    /// Sets one key from its textual value, validating it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "schema" => self.schema = Some(PathBuf::from(value)),
            "delimiter" => {
                self.delimiter = match value {
                    "tab" | "\\t" => b'\t',
                    "comma" => b',',
                    "semicolon" => b';',
                    "space" => b' ',
                    v if v.len() == 1 => v.as_bytes()[0],
                    v => bail!("delimiter must be one character or tab/comma/semicolon/space, got '{v}'"),
                }
            }
            "synthetic" => {
                self.synthetic = Some(match value {
                    "two-gaussian" => SyntheticChoice::TwoGaussian,
                    "linear-lognormal" => SyntheticChoice::LinearLognormal,
                    v => bail!("synthetic must be two-gaussian or linear-lognormal, got '{v}'"),
                })
            }
            "synthetic-n" => self.synthetic_n = number(key, value)?,
            "synthetic-features" => {
                self.synthetic_features = number(key, value)?;
                if self.synthetic_features == 0 {
                    bail!("synthetic-features must be at least 1");
                }
            }
            "synthetic-separation" => {
                let v: f64 = number(key, value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    bail!("synthetic-separation must be a nonnegative number, got {value}");
                }
                self.synthetic_separation = v;
            }
            "synthetic-noise-sigma" => self.synthetic_noise_sigma = positive(key, value)?,
            "methods" => {
                let mut methods = Vec::new();
                for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let m: Method = part
                        .parse()
                        .map_err(|_| anyhow!("methods: unknown method '{part}' (expected default, fast, off)"))?;
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                if methods.is_empty() {
                    bail!("methods must name at least one of default, fast, off");
                }
                methods.sort();
                self.methods = methods;
            }
            "spectrum" => {
                self.spectrum = match value {
                    "exp" | "exponential" => SpectrumChoice::Exponential,
                    "cvar" => SpectrumChoice::Cvar,
                    "uniform" => SpectrumChoice::Uniform,
                    v => bail!("spectrum must be exp, cvar or uniform, got '{v}'"),
                }
            }
            "spec-c" => self.spec_c = positive(key, value)?,
            "spec-beta" => {
                let v: f64 = number(key, value)?;
                if !(0.0..1.0).contains(&v) {
                    bail!("spec-beta must lie in [0, 1), got {value}");
                }
                self.spec_beta = v;
            }
            "epochs" => self.epochs = number(key, value)?,
            "trials" => {
                self.trials = number(key, value)?;
                if self.trials == 0 {
                    bail!("trials must be at least 1");
                }
            }
            "seed" => self.seed = number(key, value)?,
            "test-fraction" => self.test_fraction = open_unit(key, value)?,
            "radius" => self.radius = positive(key, value)?,
            "gamma" => self.gamma = positive(key, value)?,
            "smoothing-delta" => self.smoothing_delta = open_unit(key, value)?,
            "ancillary" => {
                self.ancillary = if value == "auto" {
                    AncillarySize::Auto
                } else {
                    let m: usize = number(key, value)?;
                    if m < 2 {
                        bail!("ancillary must be 'auto' or at least 2, got {value}");
                    }
                    AncillarySize::Fixed(m)
                }
            }
            "boost" => {
                self.boost = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    v => bail!("boost must be true or false, got '{v}'"),
                }
            }
            "delta" => self.delta = open_unit(key, value)?,
            "jobs" => {
                self.jobs = number(key, value)?;
                if self.jobs == 0 {
                    bail!("jobs must be at least 1");
                }
            }
            "out" => self.out = PathBuf::from(value),
            other => bail!("unknown setting '{other}'"),
        }
        Ok(())
    }

    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (line, key, value) in keyvalue::parse(text)? {
            self.set(&key, &value).with_context(|| format!("config line {line}"))?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_config_text(&text)
            .with_context(|| format!("in config {}", path.display()))
    }

    /// Cross-field checks that single keys cannot make.
    pub fn validate(&self) -> Result<()> {
        match (&self.data, self.synthetic) {
            (Some(_), Some(_)) => bail!("give either data or synthetic, not both"),
            (None, None) => bail!("no input: give data (with schema) or synthetic"),
            _ => {}
        }
        // the fast gradient needs σ′
        if self.spectrum == SpectrumChoice::Cvar && self.methods.contains(&Method::Fast) {
            bail!("the fast method needs a differentiable spectrum; drop 'fast' from methods or use exp/uniform");
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        Ok(match self.spectrum {
            SpectrumChoice::Exponential => Spectrum::exponential(self.spec_c)?,
            SpectrumChoice::Cvar => Spectrum::cvar(self.spec_beta)?,
            SpectrumChoice::Uniform => Spectrum::uniform(),
        })
    }

    pub fn synthetic_kind(&self) -> Option<SyntheticKind> {
        self.synthetic.map(|choice| match choice {
            SyntheticChoice::TwoGaussian => SyntheticKind::TwoGaussian {
                features: self.synthetic_features,
                separation: self.synthetic_separation,
            },
            SyntheticChoice::LinearLognormal => SyntheticKind::LinearLognormal {
                w_star: vec![1.0; self.synthetic_features],
                noise_mu: 0.0,
                noise_sigma: self.synthetic_noise_sigma,
            },
        })
    }

    /// The value of `key` as [`Settings::set`] would accept it back.
    pub fn get(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "data" => path(&self.data),
            "schema" => path(&self.schema),
            "delimiter" => match self.delimiter {
                b'\t' => "tab".into(),
                b' ' => "space".into(),
                c => (c as char).to_string(),
            },
            "synthetic" => match self.synthetic {
                Some(SyntheticChoice::TwoGaussian) => "two-gaussian".into(),
                Some(SyntheticChoice::LinearLognormal) => "linear-lognormal".into(),
                None => String::new(),
            },
            "synthetic-n" => self.synthetic_n.to_string(),
            "synthetic-features" => self.synthetic_features.to_string(),
            "synthetic-separation" => self.synthetic_separation.to_string(),
            "synthetic-noise-sigma" => self.synthetic_noise_sigma.to_string(),
            "methods" => self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            "spectrum" => match self.spectrum {
                SpectrumChoice::Exponential => "exp".into(),
                SpectrumChoice::Cvar => "cvar".into(),
                SpectrumChoice::Uniform => "uniform".into(),
            },
            "spec-c" => self.spec_c.to_string(),
            "spec-beta" => self.spec_beta.to_string(),
            "epochs" => self.epochs.to_string(),
            "trials" => self.trials.to_string(),
            "seed" => self.seed.to_string(),
            "test-fraction" => self.test_fraction.to_string(),
            "radius" => self.radius.to_string(),
            "gamma" => self.gamma.to_string(),
            "smoothing-delta" => self.smoothing_delta.to_string(),
            "ancillary" => match self.ancillary {
                AncillarySize::Auto => "auto".into(),
                AncillarySize::Fixed(m) => m.to_string(),
            },
            "boost" => self.boost.to_string(),
            "delta" => self.delta.to_string(),
            "jobs" => self.jobs.to_string(),
            "out" => self.out.display().to_string(),
            _ => String::new(),
        }
    }

    /// Every key in config-file syntax; reloading it reproduces `self`.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key);
            // unset optional paths are left out so the text reloads cleanly
            if value.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

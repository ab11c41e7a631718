use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aflow,
    Fgsm,
    Bim,
    Pgd,
    Mifgsm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Aflow, Method::Fgsm, Method::Bim, Method::Pgd, Method::Mifgsm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Aflow => "aflow",
            Method::Fgsm => "fgsm",
            Method::Bim => "bim",
            Method::Pgd => "pgd",
            Method::Mifgsm => "mifgsm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Untargeted,
    Targeted,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "untargeted" => Ok(Mode::Untargeted),
            "targeted" => Ok(Mode::Targeted),
            _ => Err(Error::Validation(format!("unknown mode {s:?}"))),
        }
    }
}

/// Every setting of an experiment, read from a flat JSON object.
///
/// Budgets are integers in units of 1/255. Unknown keys are rejected and
/// missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,

    /// `synthetic-digits`, `gaussian-blobs`, `two-moons`, `csv` or `raw`.
    pub dataset: String,
    /// Generated examples in total (train plus test) for builtin datasets.
    pub samples: usize,
    pub test_size: usize,
    pub classes: usize,
    /// Pixel noise for digits, jitter for two-moons, spread for blobs.
    pub noise: f64,
    pub dataset_path: Option<PathBuf>,
    pub height: Option<usize>,
    pub width: Option<usize>,

    pub flow_layers: usize,
    pub flow_hidden: usize,
    pub flow_epochs: usize,
    pub flow_batch_size: usize,
    pub flow_lr: f64,

    pub classifier_hidden: Vec<usize>,
    pub classifier_epochs: usize,
    pub classifier_batch_size: usize,
    pub classifier_lr: f64,

    pub methods: Vec<Method>,
    pub epsilons: Vec<u32>,
    pub mode: Mode,
    /// Fixed target label in targeted mode; when absent each example targets `(label + 1) % classes`.
    pub target: Option<usize>,
    pub max_queries: usize,
    pub aflow_lr: f64,
    pub kappa: f64,
    pub iterative_steps: usize,
    pub momentum: f64,
    /// Cap on the number of attacked test examples.
    pub max_examples: Option<usize>,

    pub metrics: bool,
    pub detection: bool,
    /// Budget used for the detection table; defaults to the largest budget in the grid.
    pub detection_epsilon: Option<u32>,
    pub lid_k: usize,
    pub lid_bank: usize,
    pub mahalanobis_lambda: f64,

    /// Adversarial images and histograms written per (method, budget).
    pub saved_examples: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: "synthetic-digits".into(),
            samples: 2400,
            test_size: 400,
            classes: 4,
            noise: 0.2,
            dataset_path: None,
            height: None,
            width: None,
            flow_layers: 4,
            flow_hidden: 64,
            flow_epochs: 20,
            flow_batch_size: 100,
            flow_lr: 1e-3,
            classifier_hidden: vec![64],
            classifier_epochs: 30,
            classifier_batch_size: 50,
            classifier_lr: 3e-3,
            methods: Method::ALL.to_vec(),
            epsilons: vec![1, 2, 4, 8],
            mode: Mode::Untargeted,
            target: None,
            max_queries: 500,
            aflow_lr: 0.01,
            kappa: 0.0,
            iterative_steps: 40,
            momentum: 1.0,
            max_examples: None,
            metrics: true,
            detection: true,
            detection_epsilon: None,
            lid_k: 20,
            lid_bank: 1000,
            mahalanobis_lambda: 1e-3,
            saved_examples: 16,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(json_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let path = || {
            self.dataset_path
                .clone()
                .ok_or_else(|| Error::Validation(format!("dataset {:?} needs dataset_path", self.dataset)))
        };
        Ok(match self.dataset.as_str() {
            "synthetic-digits" => DatasetSpec::SyntheticDigits {
                samples: self.samples,
                classes: self.classes,
                noise: self.noise,
            },
            "gaussian-blobs" => DatasetSpec::GaussianBlobs {
                samples: self.samples,
                classes: self.classes,
                spread: self.noise,
            },
            "two-moons" => DatasetSpec::TwoMoons {
                samples: self.samples,
                noise: self.noise,
            },
            "csv" => DatasetSpec::Csv {
                path: path()?,
                classes: self.classes,
                height: self
                    .height
                    .ok_or_else(|| Error::Validation("csv dataset needs height".into()))?,
                width: self
                    .width
                    .ok_or_else(|| Error::Validation("csv dataset needs width".into()))?,
            },
            "raw" => DatasetSpec::Raw { path: path()? },
            other => return Err(Error::Validation(format!("unknown dataset {other:?}"))),
        })
    }

    /// The budget used for the detection table.
    pub fn detection_budget(&self) -> Option<u32> {
        self.detection_epsilon.or_else(|| self.epsilons.iter().copied().max())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        let spec = self.dataset_spec()?;
        if let DatasetSpec::Csv { path, .. } | DatasetSpec::Raw { path } = &spec {
            if !path.exists() {
                return bad(format!("dataset_path {} does not exist", path.display()));
            }
        }
        if let DatasetSpec::Raw { path } = &spec {
            let hdr = super::dataset::raw_header_path(path);
            if !hdr.exists() {
                return bad(format!("raw header {} does not exist", hdr.display()));
            }
        }
        if self.classes < 2 {
            return bad("classes must be at least 2".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be positive".into());
        }
        if matches!(spec, DatasetSpec::SyntheticDigits { .. } | DatasetSpec::GaussianBlobs { .. } | DatasetSpec::TwoMoons { .. })
            && self.samples <= self.test_size
        {
            return bad("samples must exceed test_size".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and >= 0".into());
        }
        for (name, v) in [
            ("flow_layers", self.flow_layers),
            ("flow_hidden", self.flow_hidden),
            ("flow_batch_size", self.flow_batch_size),
            ("classifier_batch_size", self.classifier_batch_size),
            ("max_queries", self.max_queries),
            ("iterative_steps", self.iterative_steps),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.classifier_hidden.contains(&0) {
            return bad("classifier_hidden widths must be positive".into());
        }
        for (name, v) in [
            ("flow_lr", self.flow_lr),
            ("classifier_lr", self.classifier_lr),
            ("aflow_lr", self.aflow_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be finite and >= 0".into());
        }
        if !(self.momentum >= 0.0 && self.momentum.is_finite()) {
            return bad("momentum must be finite and >= 0".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            return bad("methods contain duplicates".into());
        }
        if self.epsilons.is_empty() {
            return bad("epsilons must not be empty".into());
        }
        let mut eps = self.epsilons.clone();
        eps.sort();
        eps.dedup();
        if eps.len() != self.epsilons.len() {
            return bad("epsilons contain duplicates".into());
        }
        if self.epsilons.iter().any(|&e| e > 255) {
            return bad("epsilons are in 1/255 units and must not exceed 255".into());
        }
        match (self.mode, self.target) {
            (Mode::Untargeted, Some(_)) => return bad("target is only valid in targeted mode".into()),
            (Mode::Targeted, Some(t)) if t >= self.classes => {
                return bad(format!("target {t} out of range for {} classes", self.classes))
            }
            _ => {}
        }
        if let Some(d) = self.detection_epsilon {
            if !self.epsilons.contains(&d) {
                return bad(format!("detection_epsilon {d} is not in the budget grid"));
            }
        }
        if self.lid_k < 2 {
            return bad("lid_k must be at least 2".into());
        }
        if self.lid_bank <= self.lid_k {
            return bad("lid_bank must exceed lid_k".into());
        }
        if !(self.mahalanobis_lambda >= 0.0 && self.mahalanobis_lambda.is_finite()) {
            return bad("mahalanobis_lambda must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Parse a comma-separated list such as `1,2,4`.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Validation(format!("cannot parse list item {s:?}")))
        })
        .collect()
}

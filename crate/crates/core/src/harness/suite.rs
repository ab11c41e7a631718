use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Mode};
use super::dataset::{ingest_dataset, split};
use crate::attack::{
    aflow_attack, fgsm_attack, is_success, iterative_attack, linf_distance, AdversarialResult, AttackConfig, Goal,
    IterativeConfig,
};
use crate::autodiff::{AdamConfig, Tensor};
use crate::classifier::{train_ce, AccuracyTrace, ClassifierModel, ClassifierTrainConfig, LabeledDataset};
use crate::detection::{roc_evaluate, LidDetector, MahalanobisDetector};
use crate::error::{Error, Result};
use crate::flow::{mean_nll, train_nll, FlowModel, FlowTrainConfig, PreprocessSpec, TrainTrace};
use crate::metrics::{evaluate, ImagePair, MetricReport, MetricSummary};
use crate::seed;

/// Independent random streams derived from the experiment seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CLASSIFIER_INIT: u64 = 3;
    pub const CLASSIFIER_TRAIN: u64 = 4;
    pub const FLOW_INIT: u64 = 5;
    pub const FLOW_TRAIN: u64 = 6;
    pub const ATTACK: u64 = 7;
    pub const LID_BANK: u64 = 8;
}

pub const REPORT_VERSION: u32 = 1;

/// Slack on the budget check for floating-point rounding.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<DataSplit> {
    let data = ingest_dataset(&config.dataset_spec()?, seed::derive(config.seed, streams::DATA))?;
    let (train, test) = split(&data, config.test_size, &mut seed::derived_rng(config.seed, streams::SPLIT))?;
    Ok(DataSplit { train, test })
}

pub fn train_classifier(config: &ExperimentConfig, train: &LabeledDataset) -> Result<(ClassifierModel, AccuracyTrace)> {
    let mut rng = seed::derived_rng(config.seed, streams::CLASSIFIER_INIT);
    let model = ClassifierModel::random(train.dim(), &config.classifier_hidden, train.num_classes, &mut rng)?;
    let cfg = ClassifierTrainConfig {
        epochs: config.classifier_epochs,
        batch_size: config.classifier_batch_size,
        adam: AdamConfig::with_lr(config.classifier_lr),
        seed: seed::derive(config.seed, streams::CLASSIFIER_TRAIN),
    };
    train_ce(model, train, &cfg)
}

pub fn train_flow(config: &ExperimentConfig, train: &LabeledDataset) -> Result<(FlowModel, TrainTrace)> {
    let mut rng = seed::derived_rng(config.seed, streams::FLOW_INIT);
    let model = FlowModel::identity(train.dim(), config.flow_layers, config.flow_hidden, &mut rng)?;
    let cfg = FlowTrainConfig {
        epochs: config.flow_epochs,
        batch_size: config.flow_batch_size,
        adam: AdamConfig::with_lr(config.flow_lr),
        seed: seed::derive(config.seed, streams::FLOW_TRAIN),
        preprocess: Some(PreprocessSpec::default()),
    };
    train_nll(model, &train.inputs, &cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub report_version: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train: usize,
    pub test: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub classifier_test_accuracy: f64,
    /// Mean NLL of the test set in the flow's logit space, without dequantization noise.
    pub flow_test_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub method: Method,
    pub epsilon: u32,
    /// Position in the test set.
    pub index: usize,
    pub label: usize,
    pub target: Option<usize>,
    pub predicted: usize,
    pub success: bool,
    pub iterations_used: usize,
    pub achieved_linf: f64,
    pub metrics: Option<MetricReport>,
    #[serde(skip)]
    pub clean: Vec<f64>,
    #[serde(skip)]
    pub adversarial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrCell {
    pub method: Method,
    pub epsilon: u32,
    pub attempted: usize,
    pub successes: usize,
    pub asr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub method: Method,
    pub epsilon: u32,
    /// Means over the successful examples of this cell.
    pub summary: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionCell {
    pub detector: String,
    pub method: Method,
    pub epsilon: u32,
    pub clean: usize,
    pub adversarial: usize,
    pub auroc: Option<f64>,
    pub best_threshold_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub models: ModelSummary,
    /// Test indices that were attacked: correctly classified, and not already
    /// carrying the target label in targeted mode.
    pub attempted: Vec<usize>,
    pub asr_grid: Vec<AsrCell>,
    pub metrics: Vec<MetricCell>,
    pub detection: Vec<DetectionCell>,
    pub examples: Vec<ExampleRecord>,
}

impl RunReport {
    pub fn asr(&self, method: Method, epsilon: u32) -> Option<f64> {
        self.asr_grid
            .iter()
            .find(|c| c.method == method && c.epsilon == epsilon)
            .map(|c| c.asr)
    }

    pub fn records(&self, method: Method, epsilon: u32) -> impl Iterator<Item = &ExampleRecord> {
        self.examples
            .iter()
            .filter(move |r| r.method == method && r.epsilon == epsilon)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn goal_for(config: &ExperimentConfig, label: usize, classes: usize) -> Goal {
    match config.mode {
        Mode::Untargeted => Goal::Untargeted,
        Mode::Targeted => Goal::Targeted(config.target.unwrap_or((label + 1) % classes)),
    }
}

/// Run one attack and check every invariant of its result.
#[allow(clippy::too_many_arguments)]
fn run_method(
    config: &ExperimentConfig,
    classifier: &ClassifierModel,
    flow: Option<&FlowModel>,
    method: Method,
    level: u32,
    index: usize,
    x: &Tensor,
    label: usize,
) -> Result<AdversarialResult> {
    let epsilon = level as f64 / 255.0;
    let goal = goal_for(config, label, classifier.num_classes());
    let iterative = |random_start: bool, momentum_mu: f64| IterativeConfig {
        epsilon,
        steps: config.iterative_steps,
        step_size: epsilon / 4.0,
        random_start,
        momentum_mu,
        goal,
    };
    let mut rng = seed::derived_rng(seed::derive(config.seed, streams::ATTACK), index as u64);
    let result = match method {
        Method::Aflow => {
            let flow = flow.ok_or_else(|| Error::Validation("the aflow method needs a flow model".into()))?;
            let cfg = AttackConfig {
                epsilon,
                max_queries: config.max_queries,
                lr: config.aflow_lr,
                kappa: config.kappa,
                goal,
                preprocess: Some(PreprocessSpec::default()),
            };
            aflow_attack(flow, classifier, x, label, &cfg)?
        }
        Method::Fgsm => fgsm_attack(classifier, x, label, epsilon, goal)?,
        Method::Bim => iterative_attack(classifier, x, label, &iterative(false, 0.0), &mut rng)?,
        Method::Pgd => iterative_attack(classifier, x, label, &iterative(true, 0.0), &mut rng)?,
        Method::Mifgsm => iterative_attack(classifier, x, label, &iterative(false, config.momentum), &mut rng)?,
    };

    let violation = |detail: String| Error::Invariant {
        method: method.name().into(),
        index,
        epsilon,
        detail,
    };
    let adv = &result.x_adv;
    if adv.shape() != x.shape() {
        return Err(violation(format!("output shape {:?} differs from input {:?}", adv.shape(), x.shape())));
    }
    if let Some(p) = adv.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(violation(format!("pixel {p} outside [0, 1]")));
    }
    let linf = linf_distance(adv, x);
    if linf > epsilon + BUDGET_TOLERANCE {
        return Err(violation(format!("L-infinity distance {linf} exceeds the budget")));
    }
    if (result.achieved_linf - linf).abs() > 1e-12 {
        return Err(violation(format!(
            "reported distance {} differs from recomputed {linf}",
            result.achieved_linf
        )));
    }
    if is_success(classifier, adv, label, goal)? != result.success {
        return Err(violation("success flag disagrees with the classifier".into()));
    }
    Ok(result)
}

/// Train both models from the configuration, then run the suite.
pub fn run_attack_suite(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let data = prepare_data(config)?;
    let (classifier, _) = train_classifier(config, &data.train)?;
    let flow = if config.methods.contains(&Method::Aflow) {
        Some(train_flow(config, &data.train)?.0)
    } else {
        None
    };
    run_attack_suite_with(config, &data, &classifier, flow.as_ref())
}

/// Attack grid, metrics and detection for given models.
pub fn run_attack_suite_with(
    config: &ExperimentConfig,
    data: &DataSplit,
    classifier: &ClassifierModel,
    flow: Option<&FlowModel>,
) -> Result<RunReport> {
    config.validate()?;
    let test = &data.test;
    if classifier.input_dim() != test.dim() || classifier.num_classes() != test.num_classes {
        return Err(Error::Validation("classifier does not match the dataset".into()));
    }
    if let Some(f) = flow {
        if f.dim() != test.dim() {
            return Err(Error::Validation("flow does not match the dataset".into()));
        }
    }
    if config.mode == Mode::Targeted && test.num_classes < 2 {
        return Err(Error::Validation("targeted mode needs at least two classes".into()));
    }

    let mut attempted = Vec::new();
    for (i, (x, &y)) in test.inputs.iter().zip(&test.labels).enumerate() {
        if classifier.predict(x)? != y {
            continue;
        }
        if config.mode == Mode::Targeted && config.target == Some(y) {
            continue;
        }
        attempted.push(i);
    }
    if let Some(cap) = config.max_examples {
        attempted.truncate(cap);
    }

    let grid: Vec<(Method, u32)> = config
        .methods
        .iter()
        .flat_map(|&m| config.epsilons.iter().map(move |&e| (m, e)))
        .collect();

    let per_example: Vec<Vec<AdversarialResult>> = attempted
        .par_iter()
        .map(|&i| {
            grid.iter()
                .map(|&(m, e)| run_method(config, classifier, flow, m, e, i, &test.inputs[i], test.labels[i]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut examples = Vec::with_capacity(grid.len() * attempted.len());
    let mut asr_grid = Vec::with_capacity(grid.len());
    let mut metrics = Vec::new();
    for (g, &(method, level)) in grid.iter().enumerate() {
        let mut successes = 0;
        let mut reports = Vec::new();
        for (k, &i) in attempted.iter().enumerate() {
            let r = &per_example[k][g];
            let x = &test.inputs[i];
            let label = test.labels[i];
            let quality = if config.metrics {
                Some(evaluate(&ImagePair::new(x.data(), r.x_adv.data(), test.height, test.width)?))
            } else {
                None
            };
            if r.success {
                successes += 1;
                reports.extend(quality);
            }
            examples.push(ExampleRecord {
                method,
                epsilon: level,
                index: i,
                label,
                target: match goal_for(config, label, test.num_classes) {
                    Goal::Targeted(t) => Some(t),
                    Goal::Untargeted => None,
                },
                predicted: classifier.predict(&r.x_adv)?,
                success: r.success,
                iterations_used: r.iterations_used,
                achieved_linf: r.achieved_linf,
                metrics: quality,
                clean: x.data().to_vec(),
                adversarial: r.x_adv.data().to_vec(),
            });
        }
        asr_grid.push(AsrCell {
            method,
            epsilon: level,
            attempted: attempted.len(),
            successes,
            asr: if attempted.is_empty() {
                0.0
            } else {
                successes as f64 / attempted.len() as f64
            },
        });
        if config.metrics {
            metrics.push(MetricCell {
                method,
                epsilon: level,
                summary: MetricSummary::from_reports(&reports),
            });
        }
    }

    let detection = match (config.detection, config.detection_budget()) {
        (true, Some(level)) => detection_table(config, &data.train, classifier, &examples, level)?,
        _ => Vec::new(),
    };

    Ok(RunReport {
        environment: Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            report_version: REPORT_VERSION,
            seed: config.seed,
        },
        config: config.clone(),
        dataset: DatasetSummary {
            train: data.train.len(),
            test: test.len(),
            height: test.height,
            width: test.width,
            classes: test.num_classes,
        },
        models: ModelSummary {
            classifier_test_accuracy: classifier.accuracy(test)?,
            flow_test_nll: match flow {
                Some(f) => {
                    let spec = PreprocessSpec::default();
                    let pre = test
                        .inputs
                        .iter()
                        .map(|x| spec.preprocess_deterministic(x))
                        .collect::<Result<Vec<_>>>()?;
                    Some(mean_nll(f, &pre)?)
                }
                None => None,
            },
        },
        attempted,
        asr_grid,
        metrics,
        detection,
        examples,
    })
}

fn detection_table(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    classifier: &ClassifierModel,
    examples: &[ExampleRecord],
    level: u32,
) -> Result<Vec<DetectionCell>> {
    let features = |pixels: &[f64]| classifier.features(&Tensor::vector(pixels.to_vec()));
    let train_features = train
        .inputs
        .iter()
        .map(|x| classifier.features(x))
        .collect::<Result<Vec<_>>>()?;
    let mahalanobis = MahalanobisDetector::fit(&train_features, &train.labels, config.mahalanobis_lambda)?;
    let mut order: Vec<usize> = (0..train_features.len()).collect();
    order.shuffle(&mut seed::derived_rng(config.seed, streams::LID_BANK));
    let bank: Vec<Vec<f64>> = order
        .iter()
        .take(config.lid_bank)
        .map(|&i| train_features[i].clone())
        .collect();
    if bank.len() <= config.lid_k {
        return Err(Error::Validation(format!(
            "LID bank of {} training examples must exceed k = {}",
            bank.len(),
            config.lid_k
        )));
    }
    let lid = LidDetector::new(bank, config.lid_k)?;

    let mut cells = Vec::new();
    for detector in ["mahalanobis", "lid"] {
        let score = |f: &[f64]| match detector {
            "mahalanobis" => mahalanobis.score(f),
            _ => lid.score(f),
        };
        for &method in &config.methods {
            let chosen: Vec<&ExampleRecord> = examples
                .iter()
                .filter(|r| r.method == method && r.epsilon == level && r.success)
                .collect();
            let mut clean = Vec::with_capacity(chosen.len());
            let mut adv = Vec::with_capacity(chosen.len());
            for r in &chosen {
                clean.push(score(&features(&r.clean)?)?);
                adv.push(score(&features(&r.adversarial)?)?);
            }
            let roc = if chosen.is_empty() {
                None
            } else {
                Some(roc_evaluate(&clean, &adv)?)
            };
            cells.push(DetectionCell {
                detector: detector.into(),
                method,
                epsilon: level,
                clean: clean.len(),
                adversarial: adv.len(),
                auroc: roc.map(|r| r.auroc),
                best_threshold_accuracy: roc.map(|r| r.best_threshold_accuracy),
            });
        }
    }
    Ok(cells)
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autodiff::Tensor;
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::flow::{CouplingLayer, FlowModel};
use crate::nn::Dense;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Flow,
    Classifier,
}

/// One named parameter array stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub dim: usize,
    pub hyperparameters: Value,
    pub layers: Vec<LayerRecord>,
}

fn record(name: String, t: &Tensor) -> LayerRecord {
    LayerRecord {
        name,
        shape: t.shape().to_vec(),
        values: t.data().to_vec(),
    }
}

const COUPLING_PARTS: [&str; 8] = [
    "hidden0.weight",
    "hidden0.bias",
    "hidden1.weight",
    "hidden1.bias",
    "scale.weight",
    "scale.bias",
    "shift.weight",
    "shift.bias",
];

impl Checkpoint {
    pub fn from_flow(flow: &FlowModel) -> Self {
        let mut layers = Vec::new();
        for (k, layer) in flow.layers().iter().enumerate() {
            layers.push(LayerRecord {
                name: format!("coupling{k}.mask"),
                shape: vec![flow.dim()],
                values: layer.mask().to_vec(),
            });
            for (part, t) in COUPLING_PARTS.iter().zip(layer.parameters()) {
                layers.push(record(format!("coupling{k}.{part}"), t));
            }
        }
        Self {
            version: CHECKPOINT_VERSION,
            kind: ModelKind::Flow,
            dim: flow.dim(),
            hyperparameters: json!({
                "num_layers": flow.num_layers(),
                "hidden": flow.hidden_width(),
            }),
            layers,
        }
    }

    pub fn from_classifier(model: &ClassifierModel) -> Self {
        let mut layers = Vec::new();
        for (i, d) in model.layers().iter().enumerate() {
            layers.push(record(format!("dense{i}.weight"), &d.weight));
            layers.push(record(format!("dense{i}.bias"), &d.bias));
        }
        Self {
            version: CHECKPOINT_VERSION,
            kind: ModelKind::Classifier,
            dim: model.input_dim(),
            hyperparameters: json!({
                "hidden": model.hidden_widths(),
                "classes": model.num_classes(),
            }),
            layers,
        }
    }

    /// Parse and check version, kind-independent structure and array lengths.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if let Some(v) = value.get("version") {
            if v.as_u64() != Some(CHECKPOINT_VERSION as u64) {
                return Err(Error::Incompatible(format!(
                    "checkpoint version {v}, this build reads version {CHECKPOINT_VERSION}"
                )));
            }
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        for l in &ckpt.layers {
            let n: usize = l.shape.iter().product();
            if l.shape.is_empty() || n != l.values.len() {
                return Err(Error::Parse {
                    line: 0,
                    message: format!(
                        "layer {} has shape {:?} but {} values",
                        l.name,
                        l.shape,
                        l.values.len()
                    ),
                });
            }
        }
        Ok(ckpt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    fn take(&self, cursor: &mut usize, name: &str) -> Result<Tensor> {
        let l = self.layers.get(*cursor).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing layer {name}"),
        })?;
        if l.name != name {
            return Err(Error::Parse {
                line: 0,
                message: format!("expected layer {name}, found {}", l.name),
            });
        }
        *cursor += 1;
        Tensor::new(l.shape.clone(), l.values.clone()).map_err(|e| Error::Parse {
            line: 0,
            message: format!("layer {name}: {e}"),
        })
    }

    fn dense(&self, cursor: &mut usize, prefix: &str) -> Result<Dense> {
        let weight = self.take(cursor, &format!("{prefix}.weight"))?;
        let bias = self.take(cursor, &format!("{prefix}.bias"))?;
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::Parse {
                line: 0,
                message: format!("{prefix}: weight {:?} and bias {:?} do not fit", weight.shape(), bias.shape()),
            });
        }
        Ok(Dense { weight, bias })
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Incompatible(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                self.kind
            )));
        }
        Ok(())
    }

    fn finish_cursor(&self, cursor: usize) -> Result<()> {
        if cursor != self.layers.len() {
            return Err(Error::Parse {
                line: 0,
                message: format!("{} unexpected trailing layers", self.layers.len() - cursor),
            });
        }
        Ok(())
    }

    pub fn to_flow(&self) -> Result<FlowModel> {
        self.expect_kind(ModelKind::Flow)?;
        let num_layers = self.hyperparameters["num_layers"]
            .as_u64()
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: "hyperparameters.num_layers missing".into(),
            })? as usize;
        let mut cursor = 0;
        let mut layers = Vec::with_capacity(num_layers);
        for k in 0..num_layers {
            let mask = self.take(&mut cursor, &format!("coupling{k}.mask"))?;
            let h0 = self.dense(&mut cursor, &format!("coupling{k}.hidden0"))?;
            let h1 = self.dense(&mut cursor, &format!("coupling{k}.hidden1"))?;
            let scale = self.dense(&mut cursor, &format!("coupling{k}.scale"))?;
            let shift = self.dense(&mut cursor, &format!("coupling{k}.shift"))?;
            let layer = CouplingLayer::new(mask.into_data(), [h0, h1], scale, shift).map_err(|e| Error::Parse {
                line: 0,
                message: format!("coupling{k}: {e}"),
            })?;
            layers.push(layer);
        }
        self.finish_cursor(cursor)?;
        FlowModel::new(self.dim, layers).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn to_classifier(&self) -> Result<ClassifierModel> {
        self.expect_kind(ModelKind::Classifier)?;
        let count = self.layers.len() / 2;
        let mut cursor = 0;
        let layers = (0..count)
            .map(|i| self.dense(&mut cursor, &format!("dense{i}")))
            .collect::<Result<Vec<_>>>()?;
        self.finish_cursor(cursor)?;
        let model = ClassifierModel::new(layers).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        if model.input_dim() != self.dim {
            return Err(Error::Parse {
                line: 0,
                message: format!("dim {} does not match first layer input {}", self.dim, model.input_dim()),
            });
        }
        Ok(model)
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

pub fn save_flow(flow: &FlowModel, path: &Path) -> Result<()> {
    write_atomic(path, &Checkpoint::from_flow(flow).to_json())
}

pub fn load_flow(path: &Path) -> Result<FlowModel> {
    read_checkpoint(path)?.to_flow()
}

pub fn save_classifier(model: &ClassifierModel, path: &Path) -> Result<()> {
    write_atomic(path, &Checkpoint::from_classifier(model).to_json())
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    read_checkpoint(path)?.to_classifier()
}

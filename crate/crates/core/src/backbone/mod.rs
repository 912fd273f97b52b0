//! Pre-trained backbone loading and pooling-layer activation extraction.
//!
//! Three VGG-16 graphs (one per [`Stream`]) are read from ONNX files listed in
//! a TOML registry. Each graph is compiled once with the five pooling layers as
//! outputs and shape-checked against [`LayerId::expected_shape`] before use.

pub mod mock;
mod preprocess;
mod registry;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tract_onnx::prelude::*;

use crate::features::{FeatureTensor, PipelineError, Stream, StreamSource};

pub use preprocess::{
    preprocess, ChannelOrder, ImageSample, InputTensor, PreprocessSpec, ResizeFilter,
};
pub use registry::{load_registry, ModelEntry, RegistryConfig};

/// Backbones are identified by the stream they feed.
pub type BackboneKind = Stream;

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid registry config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("registry has no entry for the {0} backbone")]
    MissingKind(Stream),
    #[error("checksum mismatch for {path}: expected {expected}, found {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("model {path}: {message}")]
    Model { path: PathBuf, message: String },
    #[error("model {path} has no tensor for layer {layer}")]
    LayerMissing { path: PathBuf, layer: LayerId },
    #[error("{kind} backbone layer {layer}: got shape {actual:?}, expected {expected:?}")]
    Shape {
        kind: Stream,
        layer: LayerId,
        expected: (usize, usize, usize),
        actual: Vec<usize>,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("image {0} has zero area")]
    EmptyImage(String),
    #[error("input tensor is {actual:?}, model expects {expected:?}")]
    InputShape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("inference failed for the {kind} backbone: {message}")]
    Inference { kind: Stream, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// The five max-pooling stages of VGG-16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerId {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl LayerId {
    pub const ALL: [LayerId; 5] = [LayerId::P1, LayerId::P2, LayerId::P3, LayerId::P4, LayerId::P5];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Keras-style layer name, `block{k}_pool`.
    pub fn canonical_name(self) -> &'static str {
        match self {
            LayerId::P1 => "block1_pool",
            LayerId::P2 => "block2_pool",
            LayerId::P3 => "block3_pool",
            LayerId::P4 => "block4_pool",
            LayerId::P5 => "block5_pool",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LayerId::P1 => "p1",
            LayerId::P2 => "p2",
            LayerId::P3 => "p3",
            LayerId::P4 => "p4",
            LayerId::P5 => "p5",
        }
    }

    /// `(height, width, depth)` for a 224x224 input.
    pub fn expected_shape(self) -> (usize, usize, usize) {
        match self {
            LayerId::P1 => (112, 112, 64),
            LayerId::P2 => (56, 56, 128),
            LayerId::P3 => (28, 28, 256),
            LayerId::P4 => (14, 14, 512),
            LayerId::P5 => (7, 7, 512),
        }
    }

    pub fn depth(self) -> usize {
        self.expected_shape().2
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for LayerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        LayerId::ALL
            .into_iter()
            .find(|l| s == l.short_name() || s == l.canonical_name())
            .ok_or_else(|| format!("unknown layer '{s}' (expected p1..p5)"))
    }
}

/// Memory layout of the graph input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayout {
    #[default]
    Nchw,
    Nhwc,
}

type Plan = std::sync::Arc<TypedSimplePlan>;

/// One compiled backbone graph.
pub struct Backbone {
    kind: Stream,
    path: PathBuf,
    layout: InputLayout,
    input_size: (usize, usize),
    plan: Plan,
    // Plan outputs follow `LayerId::ALL`; true where a layer's output is NHWC.
    channel_last: [bool; 5],
}

impl fmt::Debug for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backbone")
            .field("kind", &self.kind)
            .field("path", &self.path)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl Backbone {
    /// Loads and compiles one graph. `layer_names` overrides tensor lookup for
    /// specific layers; other layers are found by their canonical name.
    pub fn load(
        kind: Stream,
        path: &Path,
        layout: InputLayout,
        input_size: (usize, usize),
        layer_names: &BTreeMap<LayerId, String>,
    ) -> Result<Self, BackboneError> {
        let bytes = std::fs::read(path).map_err(|source| BackboneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(kind, &bytes, path, layout, input_size, layer_names)
    }

    /// Like [`Backbone::load`] for an already-read file; `path` only labels errors.
    pub fn from_bytes(
        kind: Stream,
        bytes: &[u8],
        path: &Path,
        layout: InputLayout,
        input_size: (usize, usize),
        layer_names: &BTreeMap<LayerId, String>,
    ) -> Result<Self, BackboneError> {
        let model_err = |e: TractError| BackboneError::Model {
            path: path.to_path_buf(),
            message: format!("{e:#}"),
        };
        let mut model = tract_onnx::onnx()
            .model_for_read(&mut &bytes[..])
            .map_err(model_err)?;

        let (h, w) = input_size;
        let shape = match layout {
            InputLayout::Nchw => [1, 3, h, w],
            InputLayout::Nhwc => [1, h, w, 3],
        };
        model
            .set_input_fact(0, f32::fact(shape).into())
            .map_err(model_err)?;

        let names = LayerId::ALL
            .iter()
            .map(|&layer| {
                let name = match layer_names.get(&layer) {
                    Some(name) => resolve_exact(&model, name).map(|_| name.clone()),
                    None => resolve_layer(&model, layer),
                };
                name.ok_or(BackboneError::LayerMissing {
                    path: path.to_path_buf(),
                    layer,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        model.select_outputs_by_name(&names).map_err(model_err)?;

        let typed = model.into_optimized().map_err(model_err)?;
        let mut channel_last = [false; 5];
        for layer in LayerId::ALL {
            let fact = typed.output_fact(layer.index()).map_err(model_err)?;
            let dims: Vec<usize> = fact
                .shape
                .as_concrete()
                .map(|d| d.to_vec())
                .unwrap_or_default();
            channel_last[layer.index()] = classify_layout(&dims, layer.expected_shape()).ok_or(
                BackboneError::Shape {
                    kind,
                    layer,
                    expected: layer.expected_shape(),
                    actual: dims.clone(),
                },
            )?;
        }
        let plan = typed.into_runnable().map_err(model_err)?;
        Ok(Self {
            kind,
            path: path.to_path_buf(),
            layout,
            input_size,
            plan,
            channel_last,
        })
    }

    pub fn kind(&self) -> Stream {
        self.kind
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Runs the graph and returns the requested pooling layer's output.
    pub fn activations(
        &self,
        layer: LayerId,
        input: &InputTensor,
    ) -> Result<FeatureTensor, BackboneError> {
        let (h, w) = self.input_size;
        if (input.height(), input.width()) != (h, w) {
            return Err(BackboneError::InputShape {
                expected: self.input_size,
                actual: (input.height(), input.width()),
            });
        }
        let infer_err = |e: TractError| BackboneError::Inference {
            kind: self.kind,
            message: format!("{e:#}"),
        };
        let tensor = match self.layout {
            InputLayout::Nhwc => Tensor::from_shape(&[1, h, w, 3], input.data()),
            InputLayout::Nchw => Tensor::from_shape(&[1, 3, h, w], &input.to_chw()),
        }
        .map_err(infer_err)?;

        let outputs = self.plan.run(tvec!(tensor.into())).map_err(infer_err)?;
        let slot = layer.index();
        let channel_last = self.channel_last[slot];
        let out: Vec<f32> = outputs[slot]
            .to_plain_array_view::<f32>()
            .map_err(infer_err)?
            .iter()
            .copied()
            .collect();

        let expected = layer.expected_shape();
        let actual = outputs[slot].shape().to_vec();
        if classify_layout(&actual, expected) != Some(channel_last) {
            return Err(BackboneError::Shape {
                kind: self.kind,
                layer,
                expected,
                actual,
            });
        }
        let (oh, ow, od) = expected;
        let values = if channel_last {
            let cells = oh * ow;
            let mut v = vec![0.0; out.len()];
            for (cell, pixel) in out.chunks_exact(od).enumerate() {
                for (j, &a) in pixel.iter().enumerate() {
                    v[j * cells + cell] = a as f64;
                }
            }
            v
        } else {
            out.iter().map(|&a| a as f64).collect()
        };
        Ok(FeatureTensor::new(oh, ow, od, values)?)
    }
}

/// `Some(false)` for `[1, d, h, w]`, `Some(true)` for `[1, h, w, d]`.
fn classify_layout(dims: &[usize], (h, w, d): (usize, usize, usize)) -> Option<bool> {
    let dims = match dims {
        [1, rest @ ..] if rest.len() == 3 => rest,
        other if other.len() == 3 => other,
        _ => return None,
    };
    if dims == [d, h, w] {
        Some(false)
    } else if dims == [h, w, d] {
        Some(true)
    } else {
        None
    }
}

fn resolve_exact(model: &InferenceModel, name: &str) -> Option<OutletId> {
    model
        .outlet_labels
        .iter()
        .find(|(_, label)| label.as_str() == name)
        .map(|(o, _)| *o)
        .or_else(|| model.nodes().iter().find(|n| n.name == name).map(|n| n.id.into()))
}

/// Finds the tensor holding a layer's output: an exact label match, otherwise
/// the last outlet (in graph order) whose label or node name contains the
/// canonical name as a path component, as exporters tend to produce
/// `model/block5_pool/MaxPool:0`-style names.
fn resolve_layer(model: &InferenceModel, layer: LayerId) -> Option<String> {
    let name = layer.canonical_name();
    if resolve_exact(model, name).is_some() {
        return Some(name.to_string());
    }
    let contains = |s: &str| {
        s.split(['/', ':', '.'])
            .any(|part| part == name)
    };
    let mut labelled: Vec<(OutletId, String)> = model
        .outlet_labels
        .iter()
        .filter(|(_, l)| contains(l))
        .map(|(o, l)| (*o, l.to_string()))
        .collect();
    labelled.sort_by_key(|(o, _)| (o.node, o.slot));
    if let Some((_, label)) = labelled.pop() {
        return Some(label);
    }
    model
        .nodes()
        .iter()
        .filter(|n| contains(&n.name))
        .last()
        .map(|n| n.name.clone())
}

/// Three loaded backbones plus the shared preprocessing.
#[derive(Debug)]
pub struct ModelRegistry {
    config: RegistryConfig,
    models: BTreeMap<Stream, Backbone>,
}

impl ModelRegistry {
    pub(crate) fn from_parts(config: RegistryConfig, models: BTreeMap<Stream, Backbone>) -> Self {
        Self { config, models }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn preprocess_spec(&self) -> &PreprocessSpec {
        &self.config.preprocess
    }

    pub fn backbone(&self, kind: Stream) -> Result<&Backbone, BackboneError> {
        self.models.get(&kind).ok_or(BackboneError::MissingKind(kind))
    }

    pub fn activations(
        &self,
        kind: Stream,
        layer: LayerId,
        input: &InputTensor,
    ) -> Result<FeatureTensor, BackboneError> {
        self.backbone(kind)?.activations(layer, input)
    }

    /// Binds a layer, giving a [`StreamSource`] over preprocessed inputs.
    pub fn at_layer(&self, layer: LayerId) -> LayerSource<'_> {
        LayerSource {
            registry: self,
            layer,
        }
    }
}

/// A registry bound to one pooling layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerSource<'a> {
    registry: &'a ModelRegistry,
    layer: LayerId,
}

impl StreamSource<InputTensor> for LayerSource<'_> {
    type Error = BackboneError;

    fn tensor(&self, stream: Stream, input: &InputTensor) -> Result<FeatureTensor, BackboneError> {
        self.registry.activations(stream, self.layer, input)
    }
}

impl StreamSource<ImageSample> for LayerSource<'_> {
    type Error = BackboneError;

    fn tensor(&self, stream: Stream, image: &ImageSample) -> Result<FeatureTensor, BackboneError> {
        let input = preprocess(image, self.registry.preprocess_spec())?;
        self.registry.activations(stream, self.layer, &input)
    }
}

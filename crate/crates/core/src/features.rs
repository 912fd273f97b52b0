//! Deep feature pipeline: global average pooling, mean-threshold encoding,
//! epsilon-guarded L2 normalization, and multi-stream aggregation.
//!
//! Every stage is a pure function over immutable inputs. Arithmetic is done in
//! `f64` regardless of the precision the activations were produced in.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalization epsilon used when no other value is configured.
pub const DEFAULT_EPSILON: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{what} has length {actual}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{what} must have positive dimensions")]
    EmptyShape { what: &'static str },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("expected a {expected:?} vector, got {actual:?}")]
    Stage { expected: Stage, actual: Stage },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("aggregation needs at least two streams, got {0}")]
    TooFewStreams(usize),
    #[error("{method} aggregation needs equal stream dims, got {dims:?}")]
    DimMismatch {
        method: AggregationMethod,
        dims: Vec<usize>,
    },
    #[error("{stream} stream extraction failed: {source}")]
    Extraction {
        stream: Stream,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// The three feature streams, one per backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    /// Object-centric backbone.
    Foreground,
    /// Place-centric backbone.
    Background,
    /// Backbone trained on objects and places together.
    Hybrid,
}

impl Stream {
    /// Canonical fusion order.
    pub const ALL: [Stream; 3] = [Stream::Foreground, Stream::Background, Stream::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Foreground => "foreground",
            Stream::Background => "background",
            Stream::Hybrid => "hybrid",
        }
    }

    /// Single-letter tag used on the command line (`f`, `b`, `h`).
    pub fn tag(self) -> char {
        match self {
            Stream::Foreground => 'f',
            Stream::Background => 'b',
            Stream::Hybrid => 'h',
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "foreground" => Ok(Stream::Foreground),
            "b" | "background" => Ok(Stream::Background),
            "h" | "hybrid" => Ok(Stream::Hybrid),
            other => Err(format!("unknown stream '{other}' (expected f, b or h)")),
        }
    }
}

/// Formats a stream list the way it is written on the command line, e.g. `f,b,h`.
pub fn stream_list(streams: &[Stream]) -> String {
    streams
        .iter()
        .map(|s| s.tag().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// An `h x w x d` activation block.
///
/// Values are stored depth-major: feature map `j` occupies
/// `values[j * h * w .. (j + 1) * h * w]`, which is also the memory order of
/// an NCHW tensor with batch size one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    depth: usize,
    values: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(
        height: usize,
        width: usize,
        depth: usize,
        values: Vec<f64>,
    ) -> Result<Self, PipelineError> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(PipelineError::EmptyShape {
                what: "feature tensor",
            });
        }
        let expected = height * width * depth;
        if values.len() != expected {
            return Err(PipelineError::Length {
                what: "feature tensor",
                expected,
                actual: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self {
            height,
            width,
            depth,
            values,
        })
    }

    /// Builds a tensor from `f(map, cell)` where `cell` indexes the `h * w`
    /// spatial positions of one map in row-major order.
    pub fn from_fn(
        height: usize,
        width: usize,
        depth: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, PipelineError> {
        let cells = height * width;
        let values = (0..depth)
            .flat_map(|j| (0..cells).map(move |i| (j, i)))
            .map(|(j, i)| f(j, i))
            .collect();
        Self::new(height, width, depth, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(height, width, depth)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `j`-th feature map as a flat slice of `h * w` activations.
    pub fn map(&self, j: usize) -> &[f64] {
        let cells = self.height * self.width;
        &self.values[j * cells..(j + 1) * cells]
    }

    pub fn maps(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.height * self.width)
    }
}

/// Which pipeline stage produced a [`FeatureVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Gap,
    Encoded,
    Normalized,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    stage: Stage,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(stage: Stage, values: Vec<f64>) -> Result<Self, PipelineError> {
        if values.is_empty() {
            return Err(PipelineError::EmptyShape {
                what: "feature vector",
            });
        }
        check_finite(&values)?;
        Ok(Self { stage, values })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    fn expect_stage(&self, expected: Stage) -> Result<(), PipelineError> {
        if self.stage != expected {
            return Err(PipelineError::Stage {
                expected,
                actual: self.stage,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub epsilon: f64,
}

impl EncodingConfig {
    pub fn new(epsilon: f64) -> Result<Self, PipelineError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PipelineError::Epsilon(epsilon));
        }
        Ok(Self { epsilon })
    }
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMethod {
    Min,
    Max,
    Mean,
    Concat,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 4] = [
        AggregationMethod::Min,
        AggregationMethod::Max,
        AggregationMethod::Mean,
        AggregationMethod::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMethod::Min => "min",
            AggregationMethod::Max => "max",
            AggregationMethod::Mean => "mean",
            AggregationMethod::Concat => "concat",
        }
    }

    pub fn is_elementwise(self) -> bool {
        self != AggregationMethod::Concat
    }

    /// Output dimension for the given stream dimensions, or `None` when an
    /// elementwise method is asked to combine unequal dims.
    pub fn output_dim(self, dims: &[usize]) -> Option<usize> {
        match self {
            AggregationMethod::Concat => Some(dims.iter().sum()),
            _ => {
                let first = *dims.first()?;
                dims.iter().all(|&d| d == first).then_some(first)
            }
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min" => Ok(AggregationMethod::Min),
            "max" => Ok(AggregationMethod::Max),
            "mean" => Ok(AggregationMethod::Mean),
            "concat" => Ok(AggregationMethod::Concat),
            other => Err(format!(
                "unknown aggregation '{other}' (expected min, max, mean or concat)"
            )),
        }
    }
}

/// The fused representation of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedFeature {
    values: Vec<f64>,
    composition: Vec<Stream>,
    method: AggregationMethod,
    segments: Vec<usize>,
}

impl ProposedFeature {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Streams in the order they were combined.
    pub fn composition(&self) -> &[Stream] {
        &self.composition
    }

    pub fn method(&self) -> AggregationMethod {
        self.method
    }

    /// Dimension of each constituent stream, in composition order.
    pub fn segment_dims(&self) -> &[usize] {
        &self.segments
    }

    /// Splits a concatenated feature back into its per-stream vectors.
    /// Returns `None` for elementwise aggregations, which are not invertible.
    pub fn split(&self) -> Option<Vec<(Stream, FeatureVector)>> {
        if self.method != AggregationMethod::Concat {
            return None;
        }
        let mut offset = 0;
        let parts = self
            .composition
            .iter()
            .zip(&self.segments)
            .map(|(&stream, &len)| {
                let values = self.values[offset..offset + len].to_vec();
                offset += len;
                (
                    stream,
                    FeatureVector {
                        stage: Stage::Normalized,
                        values,
                    },
                )
            })
            .collect();
        Some(parts)
    }

    pub fn into_vector(self) -> FeatureVector {
        FeatureVector {
            stage: Stage::Fused,
            values: self.values,
        }
    }
}

/// Anything that can produce the activation tensor of one stream for an input.
pub trait StreamSource<I: ?Sized> {
    type Error: std::error::Error + Send + Sync + 'static;

    fn tensor(&self, stream: Stream, input: &I) -> Result<FeatureTensor, Self::Error>;
}

fn check_finite(values: &[f64]) -> Result<(), PipelineError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(PipelineError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Global average pooling: one mean activation per feature map.
pub fn gap(tensor: &FeatureTensor) -> FeatureVector {
    let cells = (tensor.height * tensor.width) as f64;
    let values = tensor
        .maps()
        .map(|map| map.iter().sum::<f64>() / cells)
        .collect();
    FeatureVector {
        stage: Stage::Gap,
        values,
    }
}

/// Zeroes every element below the vector mean and divides the survivors by
/// the vector maximum.
///
/// Elements equal to the mean survive. An all-zero maximum yields the zero
/// vector. Negative inputs are encoded as written but lose the `[0, 1]`
/// output guarantee, which is reported through `log::warn!`.
pub fn encode(v: &FeatureVector) -> Result<FeatureVector, PipelineError> {
    v.expect_stage(Stage::Gap)?;
    let values = &v.values;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if values.iter().any(|&x| x < 0.0) {
        warn!(
            "encoding a GAP vector with negative activations (min {:.4e}, max {:.4e}); \
             encoded values may fall outside [0, 1]",
            values.iter().copied().fold(f64::INFINITY, f64::min),
            max
        );
    }

    let encoded = if max == 0.0 {
        vec![0.0; values.len()]
    } else {
        values
            .iter()
            .map(|&x| if x < mean { 0.0 } else { x / max })
            .collect()
    };
    FeatureVector::new(Stage::Encoded, encoded)
}

/// `v / (||v||_2 + epsilon)`.
pub fn l2_normalize(
    v: &FeatureVector,
    cfg: &EncodingConfig,
) -> Result<FeatureVector, PipelineError> {
    v.expect_stage(Stage::Encoded)?;
    let denom = v.norm() + cfg.epsilon;
    let values = v.values.iter().map(|x| x / denom).collect();
    FeatureVector::new(Stage::Normalized, values)
}

/// GAP, encode, normalize: the full per-stream descriptor.
pub fn describe_stream(
    tensor: &FeatureTensor,
    cfg: &EncodingConfig,
) -> Result<FeatureVector, PipelineError> {
    let pooled = gap(tensor);
    let encoded = encode(&pooled)?;
    l2_normalize(&encoded, cfg)
}

/// Combines normalized stream descriptors.
///
/// `Concat` keeps the given order; the elementwise methods require every
/// stream to share one dimension.
pub fn aggregate(
    streams: &[(Stream, FeatureVector)],
    method: AggregationMethod,
) -> Result<ProposedFeature, PipelineError> {
    if streams.len() < 2 {
        return Err(PipelineError::TooFewStreams(streams.len()));
    }
    for (_, v) in streams {
        v.expect_stage(Stage::Normalized)?;
    }
    let dims: Vec<usize> = streams.iter().map(|(_, v)| v.dim()).collect();
    let composition = streams.iter().map(|(s, _)| *s).collect();

    let values = match method {
        AggregationMethod::Concat => streams
            .iter()
            .flat_map(|(_, v)| v.values.iter().copied())
            .collect(),
        _ => {
            let dim = method
                .output_dim(&dims)
                .ok_or_else(|| PipelineError::DimMismatch {
                    method,
                    dims: dims.clone(),
                })?;
            let count = streams.len() as f64;
            (0..dim)
                .map(|i| {
                    let column = streams.iter().map(|(_, v)| v.values[i]);
                    match method {
                        AggregationMethod::Min => column.fold(f64::INFINITY, f64::min),
                        AggregationMethod::Max => column.fold(f64::NEG_INFINITY, f64::max),
                        _ => column.sum::<f64>() / count,
                    }
                })
                .collect()
        }
    };

    Ok(ProposedFeature {
        values,
        composition,
        method,
        segments: dims,
    })
}

/// Describes each requested stream of `input` and aggregates the results.
pub fn extract_streams<I: ?Sized, S: StreamSource<I>>(
    input: &I,
    source: &S,
    streams: &[Stream],
    method: AggregationMethod,
    cfg: &EncodingConfig,
) -> Result<ProposedFeature, PipelineError> {
    let described = streams
        .iter()
        .map(|&stream| {
            let tensor = source
                .tensor(stream, input)
                .map_err(|e| PipelineError::Extraction {
                    stream,
                    source: Box::new(e),
                })?;
            Ok((stream, describe_stream(&tensor, cfg)?))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    aggregate(&described, method)
}

/// Foreground, background and hybrid descriptors concatenated in that order.
pub fn extract_proposed<I: ?Sized, S: StreamSource<I>>(
    input: &I,
    source: &S,
    cfg: &EncodingConfig,
) -> Result<ProposedFeature, PipelineError> {
    extract_streams(input, source, &Stream::ALL, AggregationMethod::Concat, cfg)
}

//! Small random-weight stand-ins for the VGG-16 backbones.
//!
//! Each block is a 1x1 convolution, ReLU and 2x2 max pool, with the channel
//! widths and pooled output names of VGG-16, so every [`LayerId`] has its real
//! shape. The graphs are written as ONNX so they exercise the same loading
//! path as converted pre-trained models.

use std::path::{Path, PathBuf};

use prost::Message;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tract_onnx::pb;

use super::registry::sha256_hex;
use super::{BackboneError, LayerId};
use crate::features::Stream;

/// VGG-16 channel widths entering each block (index 0) and after each block.
pub const VGG16_WIDTHS: [usize; 6] = [3, 64, 128, 256, 512, 512];

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackbone {
    pub seed: u64,
    /// Build an NHWC graph (transposes at the input and at every pooled output).
    pub channel_last: bool,
    pub widths: [usize; 6],
    /// Output tensor name of each pooling layer.
    pub layer_names: [String; 5],
}

impl MockBackbone {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            channel_last: false,
            widths: VGG16_WIDTHS,
            layer_names: LayerId::ALL.map(|l| l.canonical_name().to_string()),
        }
    }

    /// Serialized ONNX model bytes.
    pub fn to_onnx(&self) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut nodes = Vec::new();
        let mut initializers = Vec::new();

        let mut prev = "input".to_string();
        if self.channel_last {
            nodes.push(transpose("input", "input_nchw", [0, 3, 1, 2]));
            prev = "input_nchw".to_string();
        }
        for (b, layer) in LayerId::ALL.iter().enumerate() {
            let (cin, cout) = (self.widths[b], self.widths[b + 1]);
            let bound = (6.0 / cin as f32).sqrt();
            let weights: Vec<f32> = (0..cin * cout).map(|_| rng.gen_range(-bound..bound)).collect();
            let bias: Vec<f32> = (0..cout).map(|_| rng.gen_range(0.0..0.1)).collect();
            let k = b + 1;
            initializers.push(float_tensor(&format!("block{k}_w"), &[cout, cin, 1, 1], weights));
            initializers.push(float_tensor(&format!("block{k}_b"), &[cout], bias));

            nodes.push(node(
                "Conv",
                &format!("block{k}_conv"),
                &[&prev, &format!("block{k}_w"), &format!("block{k}_b")],
                &format!("block{k}_conv_out"),
                vec![],
            ));
            nodes.push(node(
                "Relu",
                &format!("block{k}_relu"),
                &[&format!("block{k}_conv_out")],
                &format!("block{k}_relu_out"),
                vec![],
            ));
            let pooled = if self.channel_last {
                format!("block{k}_pool_nchw")
            } else {
                self.layer_names[layer.index()].clone()
            };
            nodes.push(node(
                "MaxPool",
                &format!("block{k}_maxpool"),
                &[&format!("block{k}_relu_out")],
                &pooled,
                vec![ints_attr("kernel_shape", &[2, 2]), ints_attr("strides", &[2, 2])],
            ));
            if self.channel_last {
                nodes.push(transpose(&pooled, &self.layer_names[layer.index()], [0, 2, 3, 1]));
            }
            prev = pooled;
        }

        let input_shape = if self.channel_last {
            [1, 224, 224, 3]
        } else {
            [1, 3, 224, 224]
        };
        let (h, w, d) = LayerId::P5.expected_shape();
        let d = d.min(self.widths[5]);
        let output_shape = if self.channel_last {
            [1, h, w, d]
        } else {
            [1, d, h, w]
        };
        let graph = pb::GraphProto {
            name: "mock_vgg16".into(),
            node: nodes,
            initializer: initializers,
            input: vec![value_info("input", &input_shape)],
            output: vec![value_info(&self.layer_names[4], &output_shape)],
            ..Default::default()
        };
        pb::ModelProto {
            ir_version: 7,
            producer_name: "scenefuse-mock".into(),
            opset_import: vec![pb::OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            graph: Some(graph),
            ..Default::default()
        }
        .encode_to_vec()
    }
}

fn float_tensor(name: &str, dims: &[usize], data: Vec<f32>) -> pb::TensorProto {
    pb::TensorProto {
        name: name.into(),
        dims: dims.iter().map(|&d| d as i64).collect(),
        data_type: 1,
        float_data: data,
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[usize]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension::Value, Dimension};
    let shape = pb::TensorShapeProto {
        dim: dims
            .iter()
            .map(|&d| Dimension {
                value: Some(Value::DimValue(d as i64)),
                ..Default::default()
            })
            .collect(),
    };
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: 1,
                shape: Some(shape),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn ints_attr(name: &str, ints: &[i64]) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        ints: ints.to_vec(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ..Default::default()
    }
}

fn node(
    op: &str,
    name: &str,
    inputs: &[&str],
    output: &str,
    attribute: Vec<pb::AttributeProto>,
) -> pb::NodeProto {
    pb::NodeProto {
        op_type: op.into(),
        name: name.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        attribute,
        ..Default::default()
    }
}

fn transpose(input: &str, output: &str, perm: [i64; 4]) -> pb::NodeProto {
    node(
        "Transpose",
        &format!("{output}_transpose"),
        &[input],
        output,
        vec![ints_attr("perm", &perm)],
    )
}

/// Per-stream seed derived from a base seed.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    let offset = match stream {
        Stream::Foreground => 1,
        Stream::Background => 2,
        Stream::Hybrid => 3,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset)
}

/// Writes three mock models and a `registry.toml` pointing at them, returning
/// the registry path.
pub fn write_mock_registry(dir: &Path, seed: u64) -> Result<PathBuf, BackboneError> {
    write_registry_with(dir, |stream| MockBackbone::new(stream_seed(seed, stream)))
}

/// [`write_mock_registry`] with a custom model per stream.
pub fn write_registry_with(
    dir: &Path,
    mut model: impl FnMut(Stream) -> MockBackbone,
) -> Result<PathBuf, BackboneError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BackboneError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut config = String::from(
        "resize_filter = \"bilinear\"\nchannel_order = \"bgr\"\nmean_offsets = [103.939, 116.779, 123.68]\n",
    );
    let mut layout = None;
    for stream in Stream::ALL {
        let mock = model(stream);
        layout.get_or_insert(mock.channel_last);
        let bytes = mock.to_onnx();
        let file = format!("mock_{}.onnx", stream.name());
        let path = dir.join(&file);
        std::fs::write(&path, &bytes).map_err(io_err(&path))?;
        config.push_str(&format!(
            "\n[{}]\npath = \"{}\"\nsha256 = \"{}\"\n",
            stream.name(),
            file,
            sha256_hex(&bytes)
        ));
    }
    if layout == Some(true) {
        config.insert_str(0, "input_layout = \"nhwc\"\n");
    }
    let path = dir.join("registry.toml");
    std::fs::write(&path, config).map_err(io_err(&path))?;
    Ok(path)
}

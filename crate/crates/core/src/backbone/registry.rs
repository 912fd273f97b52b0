use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Backbone, BackboneError, ChannelOrder, InputLayout, LayerId, ModelRegistry, PreprocessSpec,
    ResizeFilter,
};
use crate::features::Stream;

/// One model asset as listed in the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub path: PathBuf,
    /// Lowercase hex SHA-256 of the model file.
    pub sha256: String,
}

/// On-disk layout of the registry file:
///
/// ```toml
/// resize_filter = "bilinear"
/// channel_order = "bgr"
/// mean_offsets = [103.939, 116.779, 123.68]
///
/// [foreground]
/// path = "vgg16_imagenet.onnx"
/// sha256 = "..."
/// ```
///
/// `background` and `hybrid` sections follow the same shape. Optional keys:
/// `input_size = [w, h]`, `input_layout = "nchw" | "nhwc"`, and a `[layers]`
/// table mapping `p1`..`p5` to explicit tensor names.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    resize_filter: Option<ResizeFilter>,
    channel_order: Option<ChannelOrder>,
    mean_offsets: Option<[f32; 3]>,
    input_size: Option<[u32; 2]>,
    input_layout: Option<InputLayout>,
    #[serde(default)]
    layers: BTreeMap<String, String>,
    foreground: Option<ModelEntry>,
    background: Option<ModelEntry>,
    hybrid: Option<ModelEntry>,
}

/// Parsed registry with model paths resolved against the config's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryConfig {
    pub source: PathBuf,
    pub preprocess: PreprocessSpec,
    pub input_layout: InputLayout,
    pub layer_names: BTreeMap<LayerId, String>,
    pub entries: BTreeMap<Stream, ModelEntry>,
}

impl RegistryConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, BackboneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BackboneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses registry text; relative model paths resolve against `source`'s parent.
    pub fn parse(text: &str, source: &Path) -> Result<Self, BackboneError> {
        let config_err = |message: String| BackboneError::Config {
            path: source.to_path_buf(),
            message,
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;

        let defaults = PreprocessSpec::default();
        let [width, height] = raw.input_size.unwrap_or([defaults.width, defaults.height]);
        let preprocess = PreprocessSpec {
            width,
            height,
            resize_filter: raw.resize_filter.unwrap_or(defaults.resize_filter),
            channel_order: raw.channel_order.unwrap_or(defaults.channel_order),
            mean_offsets: raw.mean_offsets.unwrap_or(defaults.mean_offsets),
        };
        if (width, height) != (224, 224) {
            return Err(config_err(format!(
                "input_size must be [224, 224] for the VGG-16 layer table, got [{width}, {height}]"
            )));
        }

        let layer_names = raw
            .layers
            .into_iter()
            .map(|(k, v)| Ok((k.parse::<LayerId>().map_err(config_err)?, v)))
            .collect::<Result<_, BackboneError>>()?;

        let base = source.parent().unwrap_or(Path::new(""));
        let entries = [
            (Stream::Foreground, raw.foreground),
            (Stream::Background, raw.background),
            (Stream::Hybrid, raw.hybrid),
        ]
        .into_iter()
        .filter_map(|(kind, entry)| {
            entry.map(|e| {
                (
                    kind,
                    ModelEntry {
                        path: base.join(e.path),
                        sha256: e.sha256.to_ascii_lowercase(),
                    },
                )
            })
        })
        .collect();

        Ok(Self {
            source: source.to_path_buf(),
            preprocess,
            input_layout: raw.input_layout.unwrap_or_default(),
            layer_names,
            entries,
        })
    }

    pub fn entry(&self, kind: Stream) -> Result<&ModelEntry, BackboneError> {
        self.entries.get(&kind).ok_or(BackboneError::MissingKind(kind))
    }

    /// Reads, checksums and compiles one backbone.
    pub fn load_backbone(&self, kind: Stream) -> Result<Backbone, BackboneError> {
        let entry = self.entry(kind)?;
        let bytes = std::fs::read(&entry.path).map_err(|source| BackboneError::Io {
            path: entry.path.clone(),
            source,
        })?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(BackboneError::Checksum {
                path: entry.path.clone(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        let size = (self.preprocess.height as usize, self.preprocess.width as usize);
        Backbone::from_bytes(
            kind,
            &bytes,
            &entry.path,
            self.input_layout,
            size,
            &self.layer_names,
        )
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses the registry, requires all three backbones, verifies every checksum
/// and shape-checks every graph.
pub fn load_registry(path: impl AsRef<Path>) -> Result<ModelRegistry, BackboneError> {
    let config = RegistryConfig::read(path)?;
    for kind in Stream::ALL {
        config.entry(kind)?;
    }
    let models = Stream::ALL
        .into_iter()
        .map(|kind| Ok((kind, config.load_backbone(kind)?)))
        .collect::<Result<_, BackboneError>>()?;
    Ok(ModelRegistry::from_parts(config, models))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
resize_filter = "nearest"
channel_order = "rgb"
mean_offsets = [1.0, 2.0, 3.0]
input_layout = "nhwc"

[layers]
p5 = "features/pool5"

[foreground]
path = "f.onnx"
sha256 = "AB"

[background]
path = "/abs/b.onnx"
sha256 = "cd"

[hybrid]
path = "h.onnx"
sha256 = "ef"
"#;

    #[test]
    fn parses_all_keys() {
        let cfg = RegistryConfig::parse(FULL, Path::new("/models/registry.toml")).unwrap();
        assert_eq!(cfg.preprocess.resize_filter, ResizeFilter::Nearest);
        assert_eq!(cfg.preprocess.channel_order, ChannelOrder::Rgb);
        assert_eq!(cfg.preprocess.mean_offsets, [1.0, 2.0, 3.0]);
        assert_eq!(cfg.input_layout, InputLayout::Nhwc);
        assert_eq!(cfg.layer_names[&LayerId::P5], "features/pool5");
        let f = cfg.entry(Stream::Foreground).unwrap();
        assert_eq!(f.path, Path::new("/models/f.onnx"));
        assert_eq!(f.sha256, "ab");
        assert_eq!(
            cfg.entry(Stream::Background).unwrap().path,
            Path::new("/abs/b.onnx")
        );
    }

    #[test]
    fn defaults_follow_vgg_convention() {
        let cfg = RegistryConfig::parse("", Path::new("r.toml")).unwrap();
        assert_eq!(cfg.preprocess, PreprocessSpec::default());
        assert_eq!(cfg.input_layout, InputLayout::Nchw);
        assert!(cfg.entries.is_empty());
    }

    #[test]
    fn missing_hybrid_is_named() {
        let text = FULL.split("[hybrid]").next().unwrap();
        let cfg = RegistryConfig::parse(text, Path::new("r.toml")).unwrap();
        let err = cfg.entry(Stream::Hybrid).unwrap_err();
        assert!(matches!(err, BackboneError::MissingKind(Stream::Hybrid)));
        assert!(err.to_string().contains("hybrid"));
    }

    #[test]
    fn rejects_unknown_keys_and_layers() {
        assert!(RegistryConfig::parse("colour = 1", Path::new("r.toml")).is_err());
        assert!(RegistryConfig::parse("[layers]\np9 = \"x\"", Path::new("r.toml")).is_err());
        assert!(RegistryConfig::parse("input_size = [256, 256]", Path::new("r.toml")).is_err());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

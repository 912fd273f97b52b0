use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::BackboneError;

/// One decoded input image.
#[derive(Debug, Clone)]
pub struct ImageSample {
    id: String,
    path: Option<PathBuf>,
    pixels: RgbImage,
}

impl ImageSample {
    /// Decodes any supported format to 8-bit RGB; the path doubles as the id.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackboneError> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|e| BackboneError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut sample = Self::from_rgb(path.to_string_lossy(), decoded.to_rgb8())?;
        sample.path = Some(path.to_path_buf());
        Ok(sample)
    }

    pub fn from_rgb(id: impl Into<String>, pixels: RgbImage) -> Result<Self, BackboneError> {
        let id = id.into();
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(BackboneError::EmptyImage(id));
        }
        Ok(Self {
            id,
            path: None,
            pixels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Nearest,
    Bilinear,
    Bicubic,
    Lanczos3,
}

impl ResizeFilter {
    fn filter_type(self) -> FilterType {
        match self {
            ResizeFilter::Nearest => FilterType::Nearest,
            ResizeFilter::Bilinear => FilterType::Triangle,
            ResizeFilter::Bicubic => FilterType::CatmullRom,
            ResizeFilter::Lanczos3 => FilterType::Lanczos3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    Rgb,
    Bgr,
}

/// Resize, channel reorder and per-channel offset subtraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub width: u32,
    pub height: u32,
    pub resize_filter: ResizeFilter,
    pub channel_order: ChannelOrder,
    /// Subtracted from each channel, given in output channel order.
    pub mean_offsets: [f32; 3],
}

impl Default for PreprocessSpec {
    /// 224x224 bilinear, BGR, ImageNet channel means.
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            resize_filter: ResizeFilter::Bilinear,
            channel_order: ChannelOrder::Bgr,
            mean_offsets: [103.939, 116.779, 123.68],
        }
    }
}

/// A preprocessed `height x width x 3` image, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl InputTensor {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved HWC values.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Planar copy in CHW order.
    pub fn to_chw(&self) -> Vec<f32> {
        let cells = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for (cell, px) in self.data.chunks_exact(3).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * cells + cell] = v;
            }
        }
        out
    }
}

pub fn preprocess(img: &ImageSample, spec: &PreprocessSpec) -> Result<InputTensor, BackboneError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(BackboneError::EmptyImage(format!(
            "preprocess target for {}",
            img.id
        )));
    }
    let resized;
    let pixels = if img.pixels.dimensions() == (spec.width, spec.height) {
        &img.pixels
    } else {
        resized = imageops::resize(
            &img.pixels,
            spec.width,
            spec.height,
            spec.resize_filter.filter_type(),
        );
        &resized
    };
    let order = match spec.channel_order {
        ChannelOrder::Rgb => [0, 1, 2],
        ChannelOrder::Bgr => [2, 1, 0],
    };
    let mut data = Vec::with_capacity(pixels.len());
    for px in pixels.pixels() {
        for (c, &src) in order.iter().enumerate() {
            data.push(px.0[src] as f32 - spec.mean_offsets[c]);
        }
    }
    Ok(InputTensor {
        height: spec.height as usize,
        width: spec.width as usize,
        data,
    })
}

use image::imageops::FilterType;
use image::RgbImage;

use super::{ChannelOrder, LocalModelConfig, RuntimeError};

/// A single CHW image tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    shape: (usize, usize, usize),
    data: Vec<f32>,
}

impl InputTensor {
    pub fn new(shape: (usize, usize, usize), data: Vec<f32>) -> Option<Self> {
        (shape.0 * shape.1 * shape.2 == data.len()).then_some(Self { shape, data })
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        let (_, h, w) = self.shape;
        self.data[(c * h + y) * w + x]
    }
}

/// Decodes a PNG or JPEG, resizes it bilinearly to the model input and
/// normalises each channel as `(v / 255 - mean) * scale`. Grayscale images
/// are replicated across the three channels.
pub fn preprocess(image_bytes: &[u8], config: &LocalModelConfig) -> Result<InputTensor, RuntimeError> {
    if image_bytes.is_empty() {
        return Err(RuntimeError::InputFormat("empty image".into()));
    }
    let format = image::guess_format(image_bytes)
        .map_err(|e| RuntimeError::InputFormat(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(RuntimeError::InputFormat(format!(
            "unsupported image format {format:?}"
        )));
    }
    let decoded = image::load_from_memory_with_format(image_bytes, format)
        .map_err(|e| RuntimeError::InputFormat(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (config.input_width, config.input_height);
    let resized: RgbImage = if rgb.dimensions() == (w, h) {
        rgb
    } else {
        image::imageops::resize(&rgb, w, h, FilterType::Triangle)
    };
    Ok(normalise(&resized, config))
}

fn normalise(img: &RgbImage, config: &LocalModelConfig) -> InputTensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            let source = match config.channel_order {
                ChannelOrder::Rgb => c,
                ChannelOrder::Bgr => 2 - c,
            };
            let v = px.0[source] as f32 / 255.0;
            data[(c * h + y as usize) * w + x as usize] = (v - config.mean[c]) * config.scale[c];
        }
    }
    InputTensor {
        shape: (3, h, w),
        data,
    }
}

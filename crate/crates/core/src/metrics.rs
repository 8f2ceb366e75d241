//! Task metrics: mean IoU for segmentation and detection, scaled MSE for
//! colorization, and their conversion into [`Utility`].

use thiserror::Error;

use crate::utility::{MetricTag, NonFinite, Utility};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error(transparent)]
    NonFinite(#[from] NonFinite),
}

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MetricError> {
        if width == 0 || height == 0 {
            return Err(MetricError::Invalid {
                what: "mask",
                reason: format!("zero dimension {width}x{height}"),
            });
        }
        if bits.len() != width * height {
            return Err(MetricError::Invalid {
                what: "mask",
                reason: format!("{} bits for {width}x{height}", bits.len()),
            });
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, MetricError> {
        BinaryMask::new(width, height, vec![false; width * height])
    }

    pub fn from_pixels(width: usize, height: usize, on: &[(usize, usize)]) -> Result<Self, MetricError> {
        let mut mask = BinaryMask::empty(width, height)?;
        for &(row, col) in on {
            mask.set(row, col, true)?;
        }
        Ok(mask)
    }

    /// Filled axis-aligned box covering rows `top..bottom` and columns
    /// `left..right` (half-open). Detection boxes are scored through this.
    pub fn filled_box(
        width: usize,
        height: usize,
        left: usize,
        top: usize,
        right: usize,
        bottom: usize,
    ) -> Result<Self, MetricError> {
        if left > right || top > bottom || right > width || bottom > height {
            return Err(MetricError::Invalid {
                what: "box",
                reason: format!("[{left},{top},{right},{bottom}) outside {width}x{height}"),
            });
        }
        let mut mask = BinaryMask::empty(width, height)?;
        for row in top..bottom {
            for col in left..right {
                mask.bits[row * width + col] = true;
            }
        }
        Ok(mask)
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) -> Result<(), MetricError> {
        if row >= self.height || col >= self.width {
            return Err(MetricError::Invalid {
                what: "pixel",
                reason: format!("({row},{col}) outside {}x{}", self.width, self.height),
            });
        }
        self.bits[row * self.width + col] = on;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn shape(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

/// Row-major image with 1 or 3 channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl PixelImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self, MetricError> {
        let invalid = |reason: String| MetricError::Invalid {
            what: "image",
            reason,
        };
        if width == 0 || height == 0 {
            return Err(invalid(format!("zero dimension {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("{channels} channels")));
        }
        if values.len() != width * height * channels {
            return Err(invalid(format!(
                "{} values for {width}x{height}x{channels}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("value {v} outside [0,1]")));
        }
        Ok(PixelImage {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, v: f64) -> Result<Self, MetricError> {
        PixelImage::new(width, height, channels, vec![v; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn shape(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// `|pred ∧ truth| / |pred ∨ truth|`; two empty masks score 1.0.
pub fn binary_iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64, MetricError> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(MetricError::ShapeMismatch {
            left: pred.shape(),
            right: truth.shape(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-pair IoU averaged over the batch.
pub fn mean_iou<'a, I>(pairs: I) -> Result<f64, MetricError>
where
    I: IntoIterator<Item = (&'a BinaryMask, &'a BinaryMask)>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for (pred, truth) in pairs {
        sum += binary_iou(pred, truth)?;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::EmptyBatch);
    }
    Ok(sum / n as f64)
}

/// `100 × mean((pred − truth)²)` over every value slot.
pub fn mse_scaled(pred: &PixelImage, truth: &PixelImage) -> Result<f64, MetricError> {
    if pred.width != truth.width || pred.height != truth.height || pred.channels != truth.channels {
        return Err(MetricError::ShapeMismatch {
            left: pred.shape(),
            right: truth.shape(),
        });
    }
    let sse: f64 = pred
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(100.0 * sse / pred.values.len() as f64)
}

/// Maps a raw metric value to a higher-is-better utility. `NegMse` negates.
pub fn to_utility(metric_value: f64, metric: MetricTag) -> Result<Utility, MetricError> {
    let value = match metric {
        MetricTag::NegMse => -metric_value,
        _ => metric_value,
    };
    // -0.0 from negating a zero loss is normalised to +0.0
    let value = if value == 0.0 { 0.0 } else { value };
    if !metric_value.is_finite() {
        return Err(NonFinite(metric_value).into());
    }
    Ok(Utility::new(value, metric)?)
}

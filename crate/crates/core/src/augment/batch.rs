use crate::error::{invalid, Result};
use crate::tensorcore::Tensor;

/// Row-major image with pixels in `[0, 1]`, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if pixels.len() != height * width * channels {
            return Err(invalid(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pixel outside [0,1]"));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[self.index(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.pixels[i] = v.clamp(0.0, 1.0);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// `b` images sharing one shape, each with a soft label row and a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub images: Vec<Image>,
    pub labels: Vec<Vec<f64>>,
    pub ids: Vec<u64>,
}

impl LabeledBatch {
    pub fn new(images: Vec<Image>, labels: Vec<Vec<f64>>, ids: Vec<u64>) -> Result<Self> {
        if images.len() != labels.len() || images.len() != ids.len() {
            return Err(invalid(format!(
                "{} images, {} labels, {} ids",
                images.len(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| !im.same_shape(first)) {
                return Err(invalid("images differ in shape"));
            }
        }
        if let Some(first) = labels.first() {
            if labels.iter().any(|l| l.len() != first.len()) {
                return Err(invalid("label rows differ in length"));
            }
        }
        for (i, row) in labels.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid(format!(
                    "label row {i} is not a probability vector"
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    /// `(height, width, channels)` of the images; `None` when empty.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images
            .first()
            .map(|im| (im.height, im.width, im.channels))
    }

    /// Flattened images as an `b × (h·w·c)` tensor.
    pub fn image_tensor(&self) -> Tensor {
        let d = self.images.first().map_or(0, |im| im.pixels.len());
        let mut data = Vec::with_capacity(self.len() * d);
        for im in &self.images {
            data.extend_from_slice(&im.pixels);
        }
        Tensor::matrix(self.len(), d, data).expect("validated batch")
    }

    pub fn label_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), self.num_classes(), self.labels.concat())
            .expect("validated batch")
    }

    /// Hard class of each sample: argmax of its label row, lowest on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| crate::tensorcore::argmax(l))
            .collect()
    }
}

/// Which samples of a batch get augmented.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SelectionMask {
    bits: Vec<bool>,
}

impl SelectionMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all(b: usize) -> Self {
        Self {
            bits: vec![true; b],
        }
    }

    pub fn none(b: usize) -> Self {
        Self {
            bits: vec![false; b],
        }
    }

    pub fn from_indices(b: usize, idx: &[usize]) -> Self {
        let mut bits = vec![false; b];
        for &i in idx {
            bits[i] = true;
        }
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected samples.
    pub fn k(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Bit string, sample 0 first.
    pub fn to_bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

//! IDX container: big-endian header (magic, then one u32 per dimension)
//! followed by an unsigned-byte payload.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::augment::Image;
use crate::error::{invalid, Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    fn encoded_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = self.magic.to_be_bytes().to_vec();
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            what,
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse<'a>(bytes: &'a [u8], expected: u32, what: &'static str) -> Result<(IdxHeader, &'a [u8])> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::BadMagic {
            what,
            found: magic,
            expected,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|k| read_u32(bytes, 4 + 4 * k, what))
        .collect::<Result<Vec<_>>>()?;
    let header = IdxHeader { magic, dims };
    let start = header.encoded_len();
    let need = header.payload_len();
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::Truncated {
            what,
            expected: need,
            found: payload.len(),
        });
    }
    if payload.len() > need {
        return Err(invalid(format!(
            "{what}: {} trailing bytes after payload",
            payload.len() - need
        )));
    }
    Ok((header, payload))
}

/// Parses an image file into `(header, images scaled to [0,1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(IdxHeader, Vec<Image>)> {
    let (header, payload) = parse(bytes, IMAGE_MAGIC, "image file")?;
    let (n, rows, cols) = (
        header.dims[0] as usize,
        header.dims[1] as usize,
        header.dims[2] as usize,
    );
    if n > 0 && (rows == 0 || cols == 0) {
        return Err(invalid("image file declares zero-sized images"));
    }
    let per = rows * cols;
    let images = (0..n)
        .map(|i| {
            let px = payload[i * per..(i + 1) * per]
                .iter()
                .map(|&v| v as f64 / 255.0)
                .collect();
            Image::new(rows, cols, 1, px)
        })
        .collect::<Result<_>>()?;
    Ok((header, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<(IdxHeader, Vec<usize>)> {
    let (header, payload) = parse(bytes, LABEL_MAGIC, "label file")?;
    Ok((header, payload.iter().map(|&v| v as usize).collect()))
}

/// Loads an image/label file pair into a dataset with one-hot labels.
/// The class count is one more than the largest label present.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    let (_, images) = parse_idx_images(&fs::read(image_path)?)?;
    let (_, labels) = parse_idx_labels(&fs::read(label_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(images, labels, num_classes)
}

fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_idx_images(images: &[Image]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |im| (im.height, im.width));
    if images
        .iter()
        .any(|im| im.channels != 1 || im.height != rows || im.width != cols)
    {
        return Err(invalid(
            "idx export needs single-channel images of one shape",
        ));
    }
    let header = IdxHeader {
        magic: IMAGE_MAGIC,
        dims: vec![images.len() as u32, rows as u32, cols as u32],
    };
    let mut out = header.encode();
    for im in images {
        out.extend(im.pixels.iter().map(|&p| quantize(p)));
    }
    Ok(out)
}

pub fn encode_idx_labels(classes: &[usize]) -> Result<Vec<u8>> {
    if classes.iter().any(|&c| c > 255) {
        return Err(invalid("idx labels must fit in one byte"));
    }
    let header = IdxHeader {
        magic: LABEL_MAGIC,
        dims: vec![classes.len() as u32],
    };
    let mut out = header.encode();
    out.extend(classes.iter().map(|&c| c as u8));
    Ok(out)
}

/// Writes a dataset as an IDX pair with 8-bit pixel quantisation.
pub fn write_idx(
    dataset: &Dataset,
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(image_path, encode_idx_images(&dataset.images)?)?;
    fs::write(label_path, encode_idx_labels(&dataset.classes)?)?;
    Ok(())
}

//! Reader for the IDX format used by the MNIST distribution (uncompressed).

use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Split};
use crate::error::{Error, Result};

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_header(path: &Path, bytes: &[u8], dims: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 + 4 * dims {
        return Err(format_error(path, "file shorter than its header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(format_error(path, "expected unsigned-byte IDX data"));
    }
    if bytes[3] as usize != dims {
        return Err(format_error(
            path,
            format!("expected {dims} dimensions, found {}", bytes[3]),
        ));
    }
    Ok((0..dims)
        .map(|d| {
            let off = 4 + 4 * d;
            u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
                as usize
        })
        .collect())
}

/// Images flattened to rows and scaled to `[0, 1]`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let dims = read_header(path, &bytes, 3)?;
    let (count, width) = (dims[0], dims[1] * dims[2]);
    let body = &bytes[16..];
    if body.len() != count * width {
        return Err(format_error(
            path,
            format!(
                "expected {} pixel bytes, found {}",
                count * width,
                body.len()
            ),
        ));
    }
    Ok(Array2::from_shape_fn((count, width), |(i, j)| {
        body[i * width + j] as f64 / 255.0
    }))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let dims = read_header(path, &bytes, 1)?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(format_error(
            path,
            format!("expected {} labels, found {}", dims[0], body.len()),
        ));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads an image file and its label file as a 10-class dataset.
pub fn load_idx_pair(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    split: Split,
) -> Result<Dataset> {
    let features = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    Dataset::new(features, labels, 10, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_tiny_files() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img");
        let labels = dir.path().join("lbl");
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        img.extend([0, 255, 51, 102]);
        std::fs::write(&images, img).unwrap();
        std::fs::write(&labels, [0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap();
        let d = load_idx_pair(&images, &labels, Split::Test).unwrap();
        assert_eq!(d.features().shape(), &[2, 2]);
        assert_eq!(d.features()[[0, 1]], 1.0);
        assert_eq!(d.features()[[1, 0]], 0.2);
        assert_eq!(d.labels(), &[7, 3]);

        std::fs::write(&labels, [0, 0, 8, 1, 0, 0, 0, 3, 7, 3]).unwrap();
        assert!(read_idx_labels(&labels).is_err());
    }
}

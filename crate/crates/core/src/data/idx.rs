//! IDX reader and writer for unsigned-byte arrays (the MNIST layout).

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path, expected_magic: u32) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format(path, "truncated IDX header"));
        }
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if magic != expected_magic {
            return Err(Error::format(
                path,
                format!("bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"),
            ));
        }
        let rank = (magic & 0xff) as usize;
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::format(path, "truncated IDX header"));
        }
        let dims: Vec<usize> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let count = dims.iter().product::<usize>();
        let body = &bytes[header..];
        if body.len() < count {
            return Err(Error::format(
                path,
                format!("truncated IDX data: expected {count} bytes, found {}", body.len()),
            ));
        }
        if body.len() > count {
            return Err(Error::format(path, format!("{} trailing bytes after IDX data", body.len() - count)));
        }
        Ok(Self {
            dims,
            data: body.to_vec(),
        })
    }
}

pub fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    IdxArray::from_bytes(&bytes, path, expected_magic)
}

pub fn write_idx(path: &Path, arr: &IdxArray) -> Result<()> {
    fs::write(path, arr.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Images (and optionally labels) as a raw dataset with pixel values 0..=255.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let img = read_idx(images, IDX_IMAGES_MAGIC)?;
    let (n, rows, cols) = (img.dims[0], img.dims[1], img.dims[2]);
    let d = rows * cols;
    // file order is sample-major; samples become columns
    let samples = Array2::from_shape_fn((d, n), |(p, i)| img.data[i * d + p] as f32);
    let labels = match labels {
        Some(path) => {
            let lab = read_idx(path, IDX_LABELS_MAGIC)?;
            if lab.dims[0] != n {
                return Err(Error::format(
                    path,
                    format!("{} labels but {} images in {}", lab.dims[0], n, images.display()),
                ));
            }
            if let Some(bad) = lab.data.iter().find(|&&v| v > 9) {
                return Err(Error::format(path, format!("label {bad} outside 0..=9")));
            }
            Some(lab.data)
        }
        None => None,
    };
    Dataset::new(samples, labels, images.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_fixture() -> IdxArray {
        IdxArray {
            dims: vec![2, 2, 3],
            data: vec![0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255],
        }
    }

    #[test]
    fn header_bytes() {
        let b = image_fixture().to_bytes();
        assert_eq!(&b[..4], &[0, 0, 8, 3]);
        assert_eq!(&b[4..8], &[0, 0, 0, 2]);
        assert_eq!(b.len(), 16 + 12);
    }

    #[test]
    fn load_maps_samples_to_columns() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        write_idx(&ip, &image_fixture()).unwrap();
        write_idx(&lp, &IdxArray { dims: vec![2], data: vec![7, 3] }).unwrap();
        let ds = load_idx(&ip, Some(&lp)).unwrap();
        assert_eq!(ds.samples.dim(), (6, 2));
        assert_eq!(ds.samples[[5, 0]], 5.0);
        assert_eq!(ds.samples[[0, 1]], 250.0);
        assert_eq!(ds.labels, Some(vec![7, 3]));
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        write_idx(&ip, &image_fixture()).unwrap();

        // labels file carrying the image magic
        write_idx(&lp, &IdxArray { dims: vec![1, 1, 2], data: vec![0, 1] }).unwrap();
        let msg = load_idx(&ip, Some(&lp)).unwrap_err().to_string();
        assert!(msg.contains("0x00000803"), "{msg}");

        write_idx(&lp, &IdxArray { dims: vec![3], data: vec![0, 1, 2] }).unwrap();
        assert!(load_idx(&ip, Some(&lp)).unwrap_err().to_string().contains("3 labels but 2 images"));

        let mut b = image_fixture().to_bytes();
        b.pop();
        std::fs::write(&ip, b).unwrap();
        assert!(load_idx(&ip, None).unwrap_err().to_string().contains("truncated"));
    }
}

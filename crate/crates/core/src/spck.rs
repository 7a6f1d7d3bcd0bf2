//! "SPCK" tensor container used for checkpoints, dataset caches and code files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SPCK"  u16 version
//! repeated until EOF:
//!     u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//!     prod(dims) x f32 values, row-major
//! ```
//!
//! A scalar is a rank-0 tensor holding one value.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

pub const MAGIC: &[u8; 4] = b"SPCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn scalar(name: &str, value: f32) -> Self {
        Self {
            name: name.to_owned(),
            dims: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector<T: Real>(name: &str, v: &Array1<T>) -> Self {
        Self {
            name: name.to_owned(),
            dims: vec![v.len()],
            data: v.iter().map(|&x| x.as_f64() as f32).collect(),
        }
    }

    pub fn matrix<T: Real>(name: &str, m: ArrayView2<'_, T>) -> Self {
        Self {
            name: name.to_owned(),
            dims: vec![m.nrows(), m.ncols()],
            // iter() walks in logical row-major order regardless of strides
            data: m.iter().map(|&x| x.as_f64() as f32).collect(),
        }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<Matrix<T>> {
        let (r, c) = match self.dims.as_slice() {
            [r, c] => (*r, *c),
            [n] => (*n, 1),
            _ => return Err(Error::Data(format!("tensor {} has rank {}, expected 2", self.name, self.dims.len()))),
        };
        let data = self.data.iter().map(|&v| T::from_f64(v as f64)).collect();
        Matrix::from_shape_vec((r, c), data).map_err(|e| Error::Data(format!("tensor {}: {e}", self.name)))
    }

    pub fn to_vector<T: Real>(&self) -> Result<Array1<T>> {
        if self.dims.len() != 1 {
            return Err(Error::Data(format!("tensor {} has rank {}, expected 1", self.name, self.dims.len())));
        }
        Ok(self.data.iter().map(|&v| T::from_f64(v as f64)).collect())
    }

    pub fn to_scalar(&self) -> Result<f32> {
        match (self.dims.len(), self.data.as_slice()) {
            (0, [v]) => Ok(*v),
            _ => Err(Error::Data(format!("tensor {} is not a scalar", self.name))),
        }
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Data(format!("missing tensor {name:?}")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "tensor name too long"))?;
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "tensor rank too large"))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[rank])?;
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = io::BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "bad magic, expected \"SPCK\""));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported SPCK version {version}")));
        }
        let mut out = Container::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?
                .to_owned();
            let rank = cur.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32()? as usize);
            }
            let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let count = count.ok_or_else(|| Error::format(path, format!("tensor {name} is too large")))?;
            let raw = cur.take(count.checked_mul(4).ok_or_else(|| Error::format(path, "tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            out.push(Tensor { name, dims, data });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

use ndarray::{Array1, Axis, Zip};

use crate::error::{Error, Result};
use crate::numerics::{column_norms, randn, Matrix, Real, SeededRng};

/// Linear dictionary `W` (d x l), no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder<T> {
    pub w: Matrix<T>,
}

/// One hidden layer: `W2 relu(W1 z + b1)`, no bias after `W2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDecoder<T> {
    /// m x l
    pub w1: Matrix<T>,
    /// length m
    pub b1: Array1<T>,
    /// d x m
    pub w2: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoder<T> {
    Linear(LinearDecoder<T>),
    Mlp(MlpDecoder<T>),
}

/// Gradients with respect to decoder parameters, same layout as the decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderGrads<T> {
    Linear { w: Matrix<T> },
    Mlp { w1: Matrix<T>, b1: Array1<T>, w2: Matrix<T> },
}

impl<T: Real> DecoderGrads<T> {
    pub fn named(&self) -> Vec<(&'static str, &[T])> {
        match self {
            DecoderGrads::Linear { w } => vec![("dec.W", slice(w))],
            DecoderGrads::Mlp { w1, b1, w2 } => vec![
                ("dec.W1", slice(w1)),
                ("dec.b1", b1.as_slice().expect("contiguous")),
                ("dec.W2", slice(w2)),
            ],
        }
    }
}

pub(crate) fn slice<T>(m: &Matrix<T>) -> &[T] {
    m.as_slice().expect("parameters are kept in standard layout")
}

/// `m` in row-major layout, which `dot` does not always return.
pub(crate) fn standard<T: Clone>(m: Matrix<T>) -> Matrix<T> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

pub(crate) fn slice_mut<T: Clone>(m: &mut Matrix<T>) -> &mut [T] {
    if !m.is_standard_layout() {
        *m = m.as_standard_layout().to_owned();
    }
    m.as_slice_mut().expect("standard layout")
}

pub(crate) fn relu<T: Real>(m: &mut Matrix<T>) {
    m.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zero the entries of `g` whose pre-activation is not strictly positive.
pub(crate) fn relu_backward<T: Real>(g: &mut Matrix<T>, pre: &Matrix<T>) {
    Zip::from(g).and(pre).for_each(|g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
}

pub(crate) fn add_bias<T: Real>(m: &mut Matrix<T>, b: &Array1<T>) {
    *m += &b.view().insert_axis(Axis(1));
}

pub(crate) fn row_sums<T: Real>(m: &Matrix<T>) -> Array1<T> {
    m.sum_axis(Axis(1))
}

/// Gaussian init with std `1/sqrt(fan_in)`.
pub(crate) fn scaled_gaussian<T: Real>(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix<T> {
    randn(rng, rows, cols, 0.0, 1.0 / (cols as f64).sqrt())
}

/// Rescale every column of `m` to unit l2 norm; all-zero columns are redrawn
/// from the initializer first.
pub(crate) fn normalize_columns<T: Real>(m: &mut Matrix<T>, rng: &mut SeededRng) {
    let fan_in = m.ncols();
    let norms = column_norms(m);
    for (j, &norm) in norms.iter().enumerate() {
        let mut col = m.column_mut(j);
        let norm = if norm < 1e-12 {
            let fresh: Matrix<T> = randn(rng, col.len(), 1, 0.0, 1.0 / (fan_in as f64).sqrt());
            col.assign(&fresh.column(0));
            col.iter().fold(0.0, |acc, &v| acc + v.as_f64() * v.as_f64()).sqrt()
        } else {
            norm
        };
        col.mapv_inplace(|v| T::from_f64(v.as_f64() / norm));
    }
}

impl<T: Real> Decoder<T> {
    pub fn linear_random(d: usize, l: usize, rng: &mut SeededRng) -> Self {
        Decoder::Linear(LinearDecoder {
            w: scaled_gaussian(rng, d, l),
        })
    }

    pub fn mlp_random(d: usize, m: usize, l: usize, rng: &mut SeededRng) -> Self {
        Decoder::Mlp(MlpDecoder {
            w1: scaled_gaussian(rng, m, l),
            b1: Array1::zeros(m),
            w2: scaled_gaussian(rng, d, m),
        })
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Decoder::Linear(dec) => dec.w.ncols(),
            Decoder::Mlp(dec) => dec.w1.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Decoder::Linear(dec) => dec.w.nrows(),
            Decoder::Mlp(dec) => dec.w2.nrows(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Decoder::Linear(_))
    }

    fn check_codes(&self, op: &'static str, z: &Matrix<T>) -> Result<()> {
        if z.nrows() != self.latent_dim() {
            return Err(Error::shape(op, &[self.output_dim(), self.latent_dim()], z.shape()));
        }
        Ok(())
    }

    fn check_pair(&self, op: &'static str, z: &Matrix<T>, y: &Matrix<T>) -> Result<()> {
        self.check_codes(op, z)?;
        if y.nrows() != self.output_dim() || y.ncols() != z.ncols() {
            return Err(Error::shape(op, z.shape(), y.shape()));
        }
        Ok(())
    }

    /// Hidden pre-activation `W1 z + b1` (MLP only).
    fn hidden_pre(dec: &MlpDecoder<T>, z: &Matrix<T>) -> Matrix<T> {
        let mut pre = dec.w1.dot(z);
        add_bias(&mut pre, &dec.b1);
        pre
    }

    /// Reconstruct a batch of codes, column by column.
    pub fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_codes("decode", z)?;
        Ok(match self {
            Decoder::Linear(dec) => dec.w.dot(z),
            Decoder::Mlp(dec) => {
                let mut h = Self::hidden_pre(dec, z);
                relu(&mut h);
                dec.w2.dot(&h)
            }
        })
    }

    /// Gradient of `sum_t 1/2 ||y_t - D(z_t)||^2` with respect to each code
    /// column.
    pub fn grad_z(&self, z: &Matrix<T>, y: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_pair("decoder_grad_z", z, y)?;
        Ok(match self {
            Decoder::Linear(dec) => {
                let r = dec.w.dot(z) - y;
                dec.w.t().dot(&r)
            }
            Decoder::Mlp(dec) => {
                let pre = Self::hidden_pre(dec, z);
                let mut h = pre.clone();
                relu(&mut h);
                let r = dec.w2.dot(&h) - y;
                let mut gh = dec.w2.t().dot(&r);
                relu_backward(&mut gh, &pre);
                dec.w1.t().dot(&gh)
            }
        })
    }

    /// Gradient of the decoder loss `(1/n) sum_i ||y_i - D(z_i)||^2` (no 1/2)
    /// with respect to the parameters.
    pub fn grad_params(&self, z: &Matrix<T>, y: &Matrix<T>) -> Result<DecoderGrads<T>> {
        self.check_pair("decoder_grad_params", z, y)?;
        let scale = T::from_f64(2.0 / z.ncols().max(1) as f64);
        Ok(match self {
            Decoder::Linear(dec) => {
                let r = (dec.w.dot(z) - y) * scale;
                DecoderGrads::Linear { w: standard(r.dot(&z.t())) }
            }
            Decoder::Mlp(dec) => {
                let pre = Self::hidden_pre(dec, z);
                let mut h = pre.clone();
                relu(&mut h);
                let r = (dec.w2.dot(&h) - y) * scale;
                let w2 = standard(r.dot(&h.t()));
                let mut gpre = dec.w2.t().dot(&r);
                relu_backward(&mut gpre, &pre);
                DecoderGrads::Mlp {
                    w1: standard(gpre.dot(&z.t())),
                    b1: row_sums(&gpre),
                    w2,
                }
            }
        })
    }

    /// Column-norm constraint used by the SDL baselines: every column of `W`
    /// (or of both `W1` and `W2`) gets unit l2 norm. `b1` is left alone.
    pub fn project_columns_unit_norm(&mut self, rng: &mut SeededRng) {
        match self {
            Decoder::Linear(dec) => normalize_columns(&mut dec.w, rng),
            Decoder::Mlp(dec) => {
                normalize_columns(&mut dec.w1, rng);
                normalize_columns(&mut dec.w2, rng);
            }
        }
    }

    /// Mean l2 norm of the dictionary atoms (columns of `W`, or of `W2 W1`).
    pub fn mean_atom_norm(&self) -> f64 {
        let norms = match self {
            Decoder::Linear(dec) => column_norms(&dec.w),
            Decoder::Mlp(dec) => column_norms(&dec.w2.dot(&dec.w1)),
        };
        norms.iter().sum::<f64>() / norms.len().max(1) as f64
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        match self {
            Decoder::Linear(dec) => vec![("dec.W", slice_mut(&mut dec.w))],
            Decoder::Mlp(dec) => vec![
                ("dec.W1", slice_mut(&mut dec.w1)),
                ("dec.b1", dec.b1.as_slice_mut().expect("contiguous")),
                ("dec.W2", slice_mut(&mut dec.w2)),
            ],
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Decoder::Linear(dec) => dec.w.iter().all(|v| v.is_finite()),
            Decoder::Mlp(dec) => dec
                .w1
                .iter()
                .chain(dec.b1.iter())
                .chain(dec.w2.iter())
                .all(|v| v.is_finite()),
        }
    }
}

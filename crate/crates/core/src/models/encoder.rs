use ndarray::Array1;

use super::decoder::{add_bias, relu, relu_backward, row_sums, scaled_gaussian, slice, slice_mut, standard};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, SeededRng};

/// LISTA-style encoder used for amortized inference.
///
/// `u = U y + b`, `z_0 = relu(u)`, then `iters` recurrent steps
/// `z_i = relu(u + S z_{i-1})`. `U` is stored as an `l x d` array since it
/// maps inputs to codes.
#[derive(Debug, Clone, PartialEq)]
pub struct ListaEncoder<T> {
    pub u: Matrix<T>,
    pub s: Matrix<T>,
    pub b: Array1<T>,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads<T> {
    pub u: Matrix<T>,
    pub s: Matrix<T>,
    pub b: Array1<T>,
}

impl<T: Real> EncoderGrads<T> {
    pub fn named(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("enc.U", slice(&self.u)),
            ("enc.S", slice(&self.s)),
            ("enc.b", self.b.as_slice().expect("contiguous")),
        ]
    }
}

/// Intermediate values kept by [`ListaEncoder::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    /// `U y + b`
    u_pre: Matrix<T>,
    /// Pre-activations of the recurrent steps, `u + S z_{i-1}` for i = 1..=L.
    step_pre: Vec<Matrix<T>>,
    /// `z_0 .. z_L`
    codes: Vec<Matrix<T>>,
}

impl<T> EncoderCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.codes.last().expect("z_0 is always present")
    }
}

impl<T: Real> ListaEncoder<T> {
    pub fn random(d: usize, l: usize, iters: usize, rng: &mut SeededRng) -> Self {
        Self {
            u: scaled_gaussian(rng, l, d),
            s: scaled_gaussian(rng, l, l),
            b: Array1::zeros(l),
            iters,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.u.nrows()
    }

    fn check_input(&self, op: &'static str, y: &Matrix<T>) -> Result<()> {
        if y.nrows() != self.input_dim() {
            return Err(Error::shape(op, self.u.shape(), y.shape()));
        }
        Ok(())
    }

    pub fn encode(&self, y: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input("encode", y)?;
        let mut u = self.u.dot(y);
        add_bias(&mut u, &self.b);
        let mut z = u.clone();
        relu(&mut z);
        for _ in 0..self.iters {
            let mut next = self.s.dot(&z);
            next += &u;
            relu(&mut next);
            z = next;
        }
        Ok(z)
    }

    pub fn forward(&self, y: &Matrix<T>) -> Result<EncoderCache<T>> {
        self.check_input("encode", y)?;
        let mut u_pre = self.u.dot(y);
        add_bias(&mut u_pre, &self.b);
        let mut z0 = u_pre.clone();
        relu(&mut z0);
        let mut codes = vec![z0];
        let mut step_pre = Vec::with_capacity(self.iters);
        for i in 0..self.iters {
            let mut pre = self.s.dot(&codes[i]);
            pre += &u_pre;
            let mut z = pre.clone();
            relu(&mut z);
            step_pre.push(pre);
            codes.push(z);
        }
        Ok(EncoderCache { u_pre, step_pre, codes })
    }

    /// Reverse accumulation through the unrolled iterations, given the
    /// gradient of some loss with respect to the encoder output.
    pub fn backward(&self, y: &Matrix<T>, cache: &EncoderCache<T>, grad_out: &Matrix<T>) -> Result<EncoderGrads<T>> {
        if grad_out.shape() != cache.output().shape() {
            return Err(Error::shape("encoder_backward", cache.output().shape(), grad_out.shape()));
        }
        let mut gs = Matrix::zeros(self.s.raw_dim());
        let mut gu = Matrix::<T>::zeros(cache.u_pre.raw_dim());
        let mut gz = grad_out.clone();
        for i in (0..self.iters).rev() {
            let mut gpre = gz;
            relu_backward(&mut gpre, &cache.step_pre[i]);
            gs = gs + gpre.dot(&cache.codes[i].t());
            gu += &gpre;
            gz = self.s.t().dot(&gpre);
        }
        relu_backward(&mut gz, &cache.u_pre);
        gu += &gz;
        Ok(EncoderGrads {
            u: standard(gu.dot(&y.t())),
            s: standard(gs),
            b: row_sums(&gu),
        })
    }

    /// Gradients of `(1/n) sum_i ||E(y_i) - target_i||^2`, the target held
    /// constant.
    pub fn grad_params(&self, y: &Matrix<T>, target: &Matrix<T>) -> Result<EncoderGrads<T>> {
        let cache = self.forward(y)?;
        let out = cache.output();
        if target.shape() != out.shape() {
            return Err(Error::shape("encoder_grad_params", out.shape(), target.shape()));
        }
        let scale = T::from_f64(2.0 / y.ncols().max(1) as f64);
        let g = (out - target) * scale;
        self.backward(y, &cache, &g)
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        vec![
            ("enc.U", slice_mut(&mut self.u)),
            ("enc.S", slice_mut(&mut self.s)),
            ("enc.b", self.b.as_slice_mut().expect("contiguous")),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(self.s.iter()).chain(self.b.iter()).all(|v| v.is_finite())
    }
}

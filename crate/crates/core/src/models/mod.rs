//! Decoder architectures (linear dictionary and one-hidden-layer MLP), the
//! LISTA encoder, and the autoencoder checkpoint format.

mod decoder;
mod encoder;

use std::path::Path;

pub use decoder::{Decoder, DecoderGrads, LinearDecoder, MlpDecoder};
pub use encoder::{EncoderCache, EncoderGrads, ListaEncoder};

use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::spck::{Container, Tensor};

/// Encoder/decoder pair as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T> {
    pub decoder: Decoder<T>,
    pub encoder: ListaEncoder<T>,
}

impl<T: Real> Autoencoder<T> {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        match &self.decoder {
            Decoder::Linear(dec) => c.push(Tensor::matrix("dec.W", dec.w.view())),
            Decoder::Mlp(dec) => {
                c.push(Tensor::matrix("dec.W1", dec.w1.view()));
                c.push(Tensor::vector("dec.b1", &dec.b1));
                c.push(Tensor::matrix("dec.W2", dec.w2.view()));
            }
        }
        let enc = &self.encoder;
        c.push(Tensor::matrix("enc.U", enc.u.view()));
        c.push(Tensor::matrix("enc.S", enc.s.view()));
        c.push(Tensor::vector("enc.b", &enc.b));
        c.push(Tensor::scalar("enc.L", enc.iters as f32));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let decoder = match c.get("dec.W") {
            Some(w) => Decoder::Linear(LinearDecoder { w: w.to_matrix()? }),
            None => Decoder::Mlp(MlpDecoder {
                w1: c.require("dec.W1")?.to_matrix()?,
                b1: c.require("dec.b1")?.to_vector()?,
                w2: c.require("dec.W2")?.to_matrix()?,
            }),
        };
        let iters = c.require("enc.L")?.to_scalar()?;
        if iters < 0.0 || iters.fract() != 0.0 {
            return Err(Error::Data(format!("enc.L must be a non-negative integer, got {iters}")));
        }
        let encoder = ListaEncoder {
            u: c.require("enc.U")?.to_matrix()?,
            s: c.require("enc.S")?.to_matrix()?,
            b: c.require("enc.b")?.to_vector()?,
            iters: iters as usize,
        };
        let model = Self { decoder, encoder };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let l = self.decoder.latent_dim();
        let enc = &self.encoder;
        let ok = enc.latent_dim() == l
            && enc.s.shape() == [l, l]
            && enc.b.len() == l
            && enc.input_dim() == self.decoder.output_dim()
            && match &self.decoder {
                Decoder::Linear(_) => true,
                Decoder::Mlp(m) => m.b1.len() == m.w1.nrows() && m.w2.ncols() == m.w1.nrows(),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Data("checkpoint tensors have inconsistent shapes".into()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn all_finite(&self) -> bool {
        self.decoder.all_finite() && self.encoder.all_finite()
    }
}

//! Parameterized layers over a [`ParamStore`], with the caches their
//! backward passes need.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    conv2d_backward, conv2d_forward, glorot_uniform, linear_backward_acc, linear_forward, relu, relu_backward, Gradients,
    ParamId, ParamStore, Tensor,
};

pub(crate) enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
}

/// Declares parameters either by creating them or by binding to an
/// existing store (checkpoint restore), with shape validation.
pub(crate) enum ParamBuilder<'a, R: Rng> {
    Create { store: &'a mut ParamStore, rng: &'a mut R },
    Bind { store: &'a ParamStore },
}

impl<R: Rng> ParamBuilder<'_, R> {
    pub(crate) fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        match self {
            ParamBuilder::Create { store, rng } => {
                let value = match init {
                    Init::Glorot { fan_in, fan_out } => glorot_uniform(shape, fan_in, fan_out, *rng),
                    Init::Zeros => Tensor::zeros(shape),
                };
                store.insert(name, value)
            }
            ParamBuilder::Bind { store } => {
                let id = store
                    .id(name)
                    .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))?;
                store.value(id).expect_shape("bind parameter", shape)?;
                Ok(id)
            }
        }
    }

    pub(crate) fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<Conv> {
        let w = self.param(
            &format!("{name}.weight"),
            &[cout, cin, k, k],
            Init::Glorot {
                fan_in: cin * k * k,
                fan_out: cout * k * k,
            },
        )?;
        let b = self.param(&format!("{name}.bias"), &[cout], Init::Zeros)?;
        Ok(Conv { w, b, stride })
    }

    pub(crate) fn linear(&mut self, name: &str, din: usize, dout: usize, zero: bool) -> Result<Linear> {
        let init = if zero {
            Init::Zeros
        } else {
            Init::Glorot {
                fan_in: din,
                fan_out: dout,
            }
        };
        let w = self.param(&format!("{name}.weight"), &[dout, din], init)?;
        let b = self.param(&format!("{name}.bias"), &[dout], Init::Zeros)?;
        Ok(Linear { w, b })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

/// Cached input and pre-activation of a conv+ReLU block.
#[derive(Debug, Clone)]
pub(crate) struct ConvReluCache {
    pub input: Tensor,
    pub pre: Tensor,
}

impl Conv {
    pub(crate) fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor> {
        conv2d_forward(x, p.value(self.w), p.value(self.b), self.stride)
    }

    pub(crate) fn forward_relu(&self, p: &ParamStore, x: Tensor) -> Result<(Tensor, ConvReluCache)> {
        let pre = self.forward(p, &x)?;
        let out = relu(&pre);
        Ok((out, ConvReluCache { input: x, pre }))
    }

    /// Backward through ReLU then the convolution; accumulates parameter
    /// gradients and returns the input gradient when requested.
    pub(crate) fn backward_relu(
        &self,
        p: &ParamStore,
        cache: &ConvReluCache,
        dout: &Tensor,
        grads: &mut Gradients,
        need_dx: bool,
    ) -> Result<Option<Tensor>> {
        let dpre = relu_backward(&cache.pre, dout)?;
        let g = conv2d_backward(&cache.input, p.value(self.w), self.stride, &dpre, need_dx)?;
        grads.accumulate(self.w, &g.dk)?;
        grads.accumulate(self.b, &g.db)?;
        Ok(g.dx)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub(crate) fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor> {
        linear_forward(x, p.value(self.w), p.value(self.b))
    }

    pub(crate) fn backward(&self, p: &ParamStore, x: &Tensor, dy: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        let (dw, db) = grads.pair_mut(self.w, self.b);
        linear_backward_acc(x, p.value(self.w), dy, dw, db)
    }
}

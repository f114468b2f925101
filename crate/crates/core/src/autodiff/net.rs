use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::field::{LogitField, LogitGradField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv3x3 { out: usize },
    Pointwise { out: usize },
    Relu,
}

/// Layer sequence of a per-pixel segmentation network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub layers: Vec<Layer>,
}

impl Architecture {
    /// 3x3 conv blocks of the given widths with ReLU, then a 1x1 class head.
    pub fn conv_stack(in_channels: usize, widths: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &w in widths {
            layers.push(Layer::Conv3x3 { out: w });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Pointwise { out: classes });
        Self {
            in_channels,
            layers,
        }
    }

    /// Default desk-scale model: widths 8, 16, 16.
    pub fn default_for(in_channels: usize, classes: usize) -> Self {
        Self::conv_stack(in_channels, &[8, 16, 16], classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::InvalidInput("network needs >= 1 input channel".into()));
        }
        if self.classes() < 2 {
            return Err(Error::InvalidInput(
                "network must end in a conv or pointwise layer with >= 2 outputs".into(),
            ));
        }
        Ok(())
    }

    /// Output channels of the last parameterized layer.
    pub fn classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv3x3 { out } | Layer::Pointwise { out } => Some(*out),
                Layer::Relu => None,
            })
            .unwrap_or(0)
    }

    /// Weight and bias shapes, in parameter order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut c = self.in_channels;
        for l in &self.layers {
            match *l {
                Layer::Conv3x3 { out } => {
                    shapes.push(vec![3, 3, c, out]);
                    shapes.push(vec![out]);
                    c = out;
                }
                Layer::Pointwise { out } => {
                    shapes.push(vec![c, out]);
                    shapes.push(vec![out]);
                    c = out;
                }
                Layer::Relu => {}
            }
        }
        shapes
    }
}

/// Small fully convolutional network producing per-pixel logits.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyNet<T> {
    arch: Architecture,
    params: Vec<Tensor<T>>,
}

/// Parameter and input gradients of a scalar loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

/// A forward pass kept alive for the reverse sweep.
pub struct Recording<T> {
    tape: Tape<T>,
    input: Var,
    params: Vec<Var>,
    output: Var,
}

impl<T: Real> Recording<T> {
    /// Logits, shape `[N, H, W, classes]`.
    pub fn output(&self) -> &Tensor<T> {
        self.tape.value(self.output)
    }

    pub fn backward(&self, upstream: Tensor<T>) -> Result<GradBundle<T>> {
        let mut g = self.tape.backward(self.output, upstream)?;
        let params = self
            .params
            .iter()
            .map(|&v| {
                g.take(v)
                    .unwrap_or_else(|| Tensor::zeros(self.tape.value(v).shape().to_vec()))
            })
            .collect();
        let input = g
            .take(self.input)
            .unwrap_or_else(|| Tensor::zeros(self.tape.value(self.input).shape().to_vec()));
        Ok(GradBundle { params, input })
    }
}

impl<T: Real> TinyNet<T> {
    /// He (fan-in) normal initialization of weights, zero biases.
    pub fn init<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let params = arch
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let n = shape.iter().product();
                let data = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
                Tensor::new(shape, data).expect("shape product")
            })
            .collect();
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameter tensors", shapes.len()),
                params.len(),
            ));
        }
        for (s, p) in shapes.iter().zip(&params) {
            if s.as_slice() != p.shape() {
                return Err(Error::shape(format!("{s:?}"), format!("{:?}", p.shape())));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes()
    }

    /// Runs the network, keeping intermediates for [`Recording::backward`].
    pub fn record(&self, image: &Tensor<T>) -> Result<Recording<T>> {
        match image.shape() {
            [_, _, _, c] if *c == self.arch.in_channels => {}
            s => {
                return Err(Error::shape(
                    format!("[N, H, W, {}]", self.arch.in_channels),
                    format!("{s:?}"),
                ))
            }
        }
        let mut tape = Tape::new();
        let input = tape.leaf(image.clone());
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mut h = input;
        let mut next = params.iter();
        for layer in &self.arch.layers {
            h = match layer {
                Layer::Relu => tape.relu(h),
                Layer::Conv3x3 { .. } => {
                    let (w, b) = (*next.next().unwrap(), *next.next().unwrap());
                    tape.conv3x3(h, w, b)?
                }
                Layer::Pointwise { .. } => {
                    let (w, b) = (*next.next().unwrap(), *next.next().unwrap());
                    tape.pointwise(h, w, b)?
                }
            };
        }
        Ok(Recording {
            tape,
            input,
            params,
            output: h,
        })
    }

    /// Logits `[N, H, W, classes]` for a batch `[N, H, W, C]`.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let Recording { tape, output, .. } = self.record(image)?;
        Ok(tape.into_value(output))
    }

    /// Gradients of `Σ upstream ⊙ forward(image)`.
    pub fn backward(&self, image: &Tensor<T>, upstream: Tensor<T>) -> Result<GradBundle<T>> {
        self.record(image)?.backward(upstream)
    }
}

/// Flattens `[N, H, W, C]` logits into a pixel-major field.
pub fn logits_to_field<T: Real>(t: &Tensor<T>) -> Result<LogitField> {
    let c = *t.shape().last().unwrap_or(&0);
    LogitField::new(c, t.to_f64())
}

/// Converts a logit gradient back into a tensor of the given shape.
pub fn field_to_tensor<T: Real>(g: &LogitGradField, shape: &[usize]) -> Result<Tensor<T>> {
    Tensor::from_f64(shape.to_vec(), g.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn default_architecture_shapes() {
        let arch = Architecture::default_for(1, 2);
        let net = TinyNet::<f64>::init(arch, &mut seed::rng(3)).unwrap();
        // 3*3*1*8+8 + 3*3*8*16+16 + 3*3*16*16+16 + 16*2+2
        assert_eq!(net.param_count(), 80 + 1168 + 2320 + 34);
        let x = Tensor::zeros(vec![2, 5, 7, 1]);
        assert_eq!(net.forward(&x).unwrap().shape(), &[2, 5, 7, 2]);
        assert!(net.forward(&Tensor::zeros(vec![1, 4, 4, 3])).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let arch = Architecture::default_for(1, 2);
        let params = arch.param_shapes().into_iter().map(Tensor::zeros).collect();
        let net = TinyNet::<f64>::from_params(arch, params).unwrap();
        let x = Tensor::from_f64(vec![1, 4, 4, 1], &[1.5; 16]).unwrap();
        assert!(net.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pointwise_layer_is_affine() {
        let arch = Architecture {
            in_channels: 2,
            layers: vec![Layer::Pointwise { out: 2 }],
        };
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let b = Tensor::new(vec![2], vec![0.25, -0.75]).unwrap();
        let net = TinyNet::<f64>::from_params(arch, vec![w, b]).unwrap();
        let x = Tensor::new(vec![1, 1, 1, 2], vec![3.0, 4.0]).unwrap();
        // [3*1 + 4*(-1) + 0.25, 3*2 + 4*0.5 - 0.75]
        assert_eq!(net.forward(&x).unwrap().data(), &[-0.75, 7.25]);
    }

    #[test]
    fn seeded_forward_is_bitwise_reproducible() {
        let arch = Architecture::default_for(1, 2);
        let a = TinyNet::<f32>::init(arch.clone(), &mut seed::rng(9)).unwrap();
        let b = TinyNet::<f32>::init(arch, &mut seed::rng(9)).unwrap();
        let x = Tensor::from_f64(vec![1, 6, 6, 1], &(0..36).map(|v| v as f64 * 0.1).collect::<Vec<_>>())
            .unwrap();
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = TinyNet::<f64>::init(Architecture::default_for(1, 2), &mut seed::rng(1)).unwrap();
        let x = Tensor::from_f64(vec![1, 4, 4, 1], &[0.3; 16]).unwrap();
        let g = net.backward(&x, Tensor::zeros(vec![1, 4, 4, 2])).unwrap();
        assert!(g.params.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }
}

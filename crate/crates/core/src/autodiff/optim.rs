use super::net::{GradBundle, TinyNet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum: `v ← μ v + g`, `θ ← θ - lr · v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor<T>>,
    steps: usize,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Domain {
                value: lr,
                domain: "learning rate > 0",
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Domain {
                value: momentum,
                domain: "momentum in [0, 1)",
            });
        }
        Ok(Self {
            lr,
            momentum,
            velocity: Vec::new(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, net: &mut TinyNet<T>, grads: &GradBundle<T>) -> Result<()> {
        if grads.params.len() != net.params().len() {
            return Err(Error::shape(net.params().len(), grads.params.len()));
        }
        for (k, g) in grads.params.iter().enumerate() {
            if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: self.steps,
                    detail: format!("non-finite gradient in parameter tensor {k} at element {bad}"),
                });
            }
        }
        if self.velocity.is_empty() {
            self.velocity = net
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect();
        }
        let lr = T::from_f64(self.lr);
        let mu = T::from_f64(self.momentum);
        for ((p, v), g) in net
            .params_mut()
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&grads.params)
        {
            for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = mu * *vv + gv;
                *pv -= lr * *vv;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

//! Named parameter storage and the convolution layers built on it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

/// Slope of every leaky ReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of learned tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_all(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(T::ZERO);
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces every tensor, checking names and shapes against `self`.
    pub fn assign(&mut self, named: Vec<(String, Tensor<T>)>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.iter().enumerate() {
            if *name != self.names[i] || t.shape() != self.tensors[i].shape() {
                return Err(Error::InvalidArgument(format!(
                    "parameter {i}: expected {} {:?}, got {name} {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
        }
        self.tensors = named.into_iter().map(|(_, t)| t).collect();
        Ok(())
    }

    /// Records every parameter as a trainable leaf on `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.param(t.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.constant(t.clone())).collect(),
        }
    }
}

/// Graph handles of a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Handles in [`ParamId`] order, e.g. when parameters enter a graph as
    /// ordinary inputs of a gradient check.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-uniform for leaky-ReLU layers, multiplied by `gain`.
    He { gain: f64 },
    Zeros,
}

impl Init {
    pub const DEFAULT: Init = Init::He { gain: 1.0 };

    fn sample<R: Rng>(self, rng: &mut R, fan_in: usize, len: usize) -> Vec<f64> {
        match self {
            Init::He { gain } => {
                let bound = gain * (6.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f64)).sqrt();
                (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
            }
            Init::Zeros => vec![0.0; len],
        }
    }
}

/// Registers parameters while drawing initial values from one generator.
pub struct Builder<'a, T: Real, R: Rng> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut R,
}

impl<'a, T: Real, R: Rng> Builder<'a, T, R> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut R) -> Self {
        Builder { store, rng }
    }

    fn tensor(&mut self, name: String, shape: &[usize], fan_in: usize, init: Init) -> ParamId {
        let len = shape.iter().product();
        let data = init.sample(self.rng, fan_in, len).into_iter().map(T::from_f64).collect();
        self.store.add(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn conv2d(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, init: Init) -> Conv2d {
        let w = self.tensor(format!("{name}.weight"), &[cout, cin, k, k], cin * k * k, init);
        let b = self.store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv2d {
            w,
            b,
            stride,
            pad: (k - 1) / 2,
        }
    }

    pub fn conv3d(&mut self, name: &str, cin: usize, cout: usize, k: usize, init: Init) -> Conv3d {
        let w = self.tensor(format!("{name}.weight"), &[cout, cin, k, k, k], cin * k * k * k, init);
        let b = self.store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv3d {
            w,
            b,
            pad: (k - 1) / 2,
        }
    }
}

/// "Same"-padded 2D convolution layer.
#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.get(self.w), p.get(self.b), self.stride, self.pad)
    }

    pub fn out_channels<T: Real>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.w).shape()[0]
    }
}

/// "Same"-padded, stride-1 3D convolution layer.
#[derive(Clone, Copy, Debug)]
pub struct Conv3d {
    pub w: ParamId,
    pub b: ParamId,
    pub pad: usize,
}

impl Conv3d {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv3d(x, p.get(self.w), p.get(self.b), 1, self.pad)
    }
}

pub fn leaky<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    g.leaky_relu(x, LEAKY_SLOPE)
}

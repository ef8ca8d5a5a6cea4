use super::exec::Exec;
use super::graph::{Function, Graph, Var};
use super::{numel, Real, Tensor};
use crate::error::{Error, Result};

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::InvalidShape {
            op,
            detail: format!("axis {axis} out of range for shape {shape:?}"),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl<T: Real> Function<T> for Binary {
    fn name(&self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        match self {
            Binary::Add => vec![Some(grad.clone()), Some(grad.clone())],
            Binary::Sub => vec![Some(grad.clone()), Some(grad.map(|g| -g))],
            Binary::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = zip_map(grad, b, |g, y| g * y);
                let gb = zip_map(grad, a, |g, x| g * x);
                vec![Some(ga), Some(gb)]
            }
        }
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

/// Pointwise single-input ops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary<T> {
    Scale(T),
    AddScalar(T),
    Relu,
    LeakyRelu(T),
    Neg,
    Abs,
    Clamp(T, T),
}

impl<T: Real> Unary<T> {
    #[inline]
    fn eval(self, x: T) -> T {
        match self {
            Unary::Scale(s) => x * s,
            Unary::AddScalar(s) => x + s,
            Unary::Relu => x.max(T::ZERO),
            Unary::LeakyRelu(s) => {
                if x > T::ZERO {
                    x
                } else {
                    x * s
                }
            }
            Unary::Neg => -x,
            Unary::Abs => x.abs(),
            Unary::Clamp(lo, hi) => x.max(lo).min(hi),
        }
    }

    #[inline]
    fn derivative(self, x: T) -> T {
        match self {
            Unary::Scale(s) => s,
            Unary::AddScalar(_) => T::ONE,
            Unary::Relu => {
                if x > T::ZERO {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
            Unary::LeakyRelu(s) => {
                if x > T::ZERO {
                    T::ONE
                } else {
                    s
                }
            }
            Unary::Neg => -T::ONE,
            Unary::Abs => {
                if x > T::ZERO {
                    T::ONE
                } else if x < T::ZERO {
                    -T::ONE
                } else {
                    T::ZERO
                }
            }
            Unary::Clamp(lo, hi) => {
                if x >= lo && x <= hi {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
        }
    }
}

impl<T: Real> Function<T> for Unary<T> {
    fn name(&self) -> &'static str {
        match self {
            Unary::Scale(_) => "scale",
            Unary::AddScalar(_) => "add_scalar",
            Unary::Relu => "relu",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Neg => "neg",
            Unary::Abs => "abs",
            Unary::Clamp(..) => "clamp",
        }
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let op = *self;
        vec![Some(zip_map(grad, inputs[0], |g, x| g * op.derivative(x)))]
    }
}

struct Softmax {
    axis: usize,
}

impl<T: Real> Function<T> for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        _inputs: &[&Tensor<T>],
        out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let (outer, n, inner) = split_axis(out.shape(), self.axis);
        let (y, g) = (out.data(), grad.data());
        let mut dx = vec![T::ZERO; y.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut dot = T::ZERO;
                for k in 0..n {
                    dot += g[base + k * inner] * y[base + k * inner];
                }
                for k in 0..n {
                    let j = base + k * inner;
                    dx[j] = y[j] * (g[j] - dot);
                }
            }
        }
        vec![Some(Tensor::from_parts(out.shape().to_vec(), dx))]
    }
}

struct SumAll;

impl<T: Real> Function<T> for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::full(inputs[0].shape(), grad.data()[0]))]
    }
}

struct SumAxis {
    axis: usize,
}

impl<T: Real> Function<T> for SumAxis {
    fn name(&self) -> &'static str {
        "sum_axis"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let shape = inputs[0].shape();
        let (outer, n, inner) = split_axis(shape, self.axis);
        let g = grad.data();
        let mut dx = vec![T::ZERO; numel(shape)];
        for o in 0..outer {
            for k in 0..n {
                let dst = &mut dx[(o * n + k) * inner..(o * n + k + 1) * inner];
                dst.copy_from_slice(&g[o * inner..(o + 1) * inner]);
            }
        }
        vec![Some(Tensor::from_parts(shape.to_vec(), dx))]
    }
}

struct Concat {
    axis: usize,
}

impl<T: Real> Function<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let mut start = 0;
        inputs
            .iter()
            .map(|t| {
                let len = t.shape()[self.axis];
                let g = slice_values(grad, self.axis, start, len);
                start += len;
                Some(g)
            })
            .collect()
    }
}

struct Reshape;

impl<T: Real> Function<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::from_parts(
            inputs[0].shape().to_vec(),
            grad.data().to_vec(),
        ))]
    }
}

struct Slice {
    axis: usize,
    start: usize,
}

impl<T: Real> Function<T> for Slice {
    fn name(&self) -> &'static str {
        "slice"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let full = inputs[0].shape()[self.axis];
        let after = full - self.start - grad.shape()[self.axis];
        vec![Some(pad_values(grad, self.axis, self.start, after))]
    }
}

struct PadAxis {
    axis: usize,
    before: usize,
}

impl<T: Real> Function<T> for PadAxis {
    fn name(&self) -> &'static str {
        "pad"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let len = inputs[0].shape()[self.axis];
        vec![Some(slice_values(grad, self.axis, self.before, len))]
    }
}

/// `len` entries of `t` along `axis` starting at `start`.
pub(crate) fn slice_values<T: Real>(t: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(t.shape(), axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        data.extend_from_slice(&t.data()[base..base + len * inner]);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = len;
    Tensor::from_parts(shape, data)
}

/// Zero-pads `t` along `axis`.
pub(crate) fn pad_values<T: Real>(t: &Tensor<T>, axis: usize, before: usize, after: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(t.shape(), axis);
    let m = n + before + after;
    let mut data = vec![T::ZERO; outer * m * inner];
    for o in 0..outer {
        let src = &t.data()[o * n * inner..(o + 1) * n * inner];
        let dst = (o * m + before) * inner;
        data[dst..dst + n * inner].copy_from_slice(src);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = m;
    Tensor::from_parts(shape, data)
}

pub(crate) fn concat_values<T: Real>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
    check_axis("concat", first.shape(), axis)?;
    for p in &parts[1..] {
        let ok = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let (outer, _, inner) = split_axis(first.shape(), axis);
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let n = p.shape()[axis];
            data.extend_from_slice(&p.data()[o * n * inner..(o + 1) * n * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

/// Numerically stable softmax along `axis`.
pub fn softmax_values<T: Real>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![T::ZERO; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut m = src[base];
            for k in 1..n {
                m = m.max(src[base + k * inner]);
            }
            let mut total = T::ZERO;
            for k in 0..n {
                let e = (src[base + k * inner] - m).exp();
                out[base + k * inner] = e;
                total += e;
            }
            for k in 0..n {
                out[base + k * inner] = out[base + k * inner] / total;
            }
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

impl<T: Real> Graph<T> {
    fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: <Binary as Function<T>>::name(&op),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let out = match op {
            Binary::Add => zip_map(ta, tb, |x, y| x + y),
            Binary::Sub => zip_map(ta, tb, |x, y| x - y),
            Binary::Mul => zip_map(ta, tb, |x, y| x * y),
        };
        self.count_flops(out.len() as u64);
        Ok(self.apply(op, &[a, b], out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary<T>, x: Var) -> Var {
        let out = self.value(x).map(|v| op.eval(v));
        self.count_flops(out.len() as u64);
        self.apply(op, &[x], out)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(Unary::Scale(T::from_f64(s)), x)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(Unary::AddScalar(T::from_f64(s)), x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(T::from_f64(slope)), x)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(Unary::Neg, x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(Unary::Clamp(T::from_f64(lo), T::from_f64(hi)), x)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("softmax", self.shape(x), axis)?;
        let out = softmax_values(self.value(x), axis);
        self.count_flops(3 * out.len() as u64);
        Ok(self.apply(Softmax { axis }, &[x], out))
    }

    /// Sum of all elements, as a shape-`[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.count_flops(self.value(x).len() as u64);
        self.apply(SumAll, &[x], Tensor::scalar(s))
    }

    /// Sums out `axis`. A rank-1 input collapses to shape `[1]`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        check_axis("sum_axis", self.shape(x), axis)?;
        let t = self.value(x);
        let (outer, n, inner) = split_axis(t.shape(), axis);
        let mut out = vec![T::ZERO; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..n {
                let src = &t.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        self.count_flops(t.len() as u64);
        Ok(self.apply(SumAxis { axis }, &[x], Tensor::from_parts(shape, out)))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let parts: Vec<&Tensor<T>> = xs.iter().map(|&v| self.value(v)).collect();
        let out = concat_values(&parts, axis)?;
        Ok(self.apply(Concat { axis }, xs, out))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.apply(Reshape, &[x], out))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x);
        check_axis("slice", shape, axis)?;
        if len == 0 || start + len > shape[axis] {
            return Err(Error::InvalidShape {
                op: "slice",
                detail: format!("range {start}..{} exceeds axis {axis} of {shape:?}", start + len),
            });
        }
        let out = slice_values(self.value(x), axis, start, len);
        Ok(self.apply(Slice { axis, start }, &[x], out))
    }

    /// Zero padding along one axis.
    pub fn pad(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        check_axis("pad", self.shape(x), axis)?;
        let out = pad_values(self.value(x), axis, before, after);
        Ok(self.apply(PadAxis { axis, before }, &[x], out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::finite_diff_check;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let r = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let r = g.relu(r);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let l = g.constant(t(&[2], &[-2.0, 3.0]));
        let l = g.leaky_relu(l, 0.1);
        assert_eq!(g.value(l).data(), &[-0.2, 3.0]);
    }

    #[test]
    fn mul_gradient_is_product_rule() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::scalar(3.0));
        let b = g.param(Tensor::scalar(5.0));
        let y = g.mul(a, b).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[5.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[3.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[0.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.constant(t(&[3], &[1f64.ln(), 2f64.ln(), 3f64.ln()]));
        let y = g.softmax(x, 0).unwrap();
        for (p, e) in g.value(y).data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_over_middle_axis() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin() * 3.0);
        let y = softmax_values(&x, 1);
        for o in 0..2 {
            for i in 0..4 {
                let s: f64 = (0..3).map(|k| y.at(&[o, k, i])).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_reshape_slice_roundtrip() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[1], &[1.0]));
        let b = g.constant(t(&[1], &[2.0]));
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0]);

        let x = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64 * 0.5 - 3.0);
        let xv = g.constant(x.clone());
        let r = g.reshape(xv, &[6, 4]).unwrap();
        let back = g.reshape(r, &[2, 3, 4]).unwrap();
        assert_eq!(g.value(back), &x);

        let s0 = g.slice(xv, 1, 0, 1).unwrap();
        let s1 = g.slice(xv, 1, 1, 2).unwrap();
        let joined = g.concat(&[s0, s1], 1).unwrap();
        assert_eq!(g.value(joined), &x);

        let p = g.pad(xv, 2, 1, 2).unwrap();
        assert_eq!(g.shape(p), &[2, 3, 7]);
        let un = g.slice(p, 2, 1, 4).unwrap();
        assert_eq!(g.value(un), &x);
    }

    #[test]
    fn slice_range_is_checked() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.slice(x, 1, 2, 2).is_err());
        assert!(g.slice(x, 2, 0, 1).is_err());
    }

    #[test]
    fn concat_gradient_routes_to_sources() {
        let a = Tensor::<f64>::from_fn(&[2, 3], |i| (i as f64 * 0.7).cos());
        let b = Tensor::<f64>::from_fn(&[2, 2], |i| (i as f64 * 1.3).sin());
        let w = Tensor::<f64>::from_fn(&[2, 5], |i| 0.3 + i as f64 * 0.11);
        let err = crate::tensor::gradcheck::finite_diff_check_many(
            |g, xs| {
                let c = g.concat(&[xs[0], xs[1]], 1)?;
                let wv = g.constant(w.clone());
                let y = g.mul(c, wv)?;
                let y = g.mul(y, c)?;
                Ok(g.sum(y))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn unary_ops_pass_gradcheck() {
        let x = Tensor::<f64>::from_fn(&[7], |i| [-0.9, -0.4, -0.13, 0.21, 0.5, 0.77, 0.95][i]);
        let w = Tensor::<f64>::from_fn(&[7], |i| 0.5 + 0.2 * i as f64);
        type Op = fn(&mut Graph<f64>, Var) -> Var;
        let ops: [(&str, Op); 8] = [
            ("scale", |g, x| g.scale(x, -1.7)),
            ("add_scalar", |g, x| g.add_scalar(x, 0.3)),
            ("relu", |g, x| g.relu(x)),
            ("leaky_relu", |g, x| g.leaky_relu(x, 0.1)),
            ("neg", |g, x| g.neg(x)),
            ("abs", |g, x| g.abs(x)),
            ("clamp", |g, x| g.clamp(x, -0.5, 0.6)),
            ("softmax", |g, x| g.softmax(x, 0).unwrap()),
        ];
        for (name, op) in ops {
            let err = finite_diff_check(
                |g, x| {
                    let y = op(g, x);
                    let wv = g.constant(w.clone());
                    let y = g.mul(y, wv)?;
                    Ok(g.sum(y))
                },
                &x,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn sum_axis_and_sub_gradcheck() {
        let x = Tensor::<f64>::from_fn(&[3, 4, 2], |i| ((i * 7 % 11) as f64 - 5.0) / 6.0);
        let err = finite_diff_check(
            |g, x| {
                let s = g.sum_axis(x, 1)?;
                let q = g.mul(s, s)?;
                let s2 = g.sum_axis(q, 0)?;
                let c = g.constant(Tensor::full(&[2], 0.25));
                let d = g.sub(s2, c)?;
                let d = g.mul(d, d)?;
                Ok(g.sum(d))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}

//! Central finite-difference verification of backward rules.
//!
//! The error measure is `|analytic - numeric| / (|analytic| + 1e-8)`, maximised
//! over the checked coordinates.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

const DENOM_FLOOR: f64 = 1e-8;

/// Worst coordinate of a gradient check.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

fn eval_scalar<F>(f: &F, xs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let y = f(&mut g, &vars)?;
    let v = g.value(y);
    if v.shape() != [1] {
        return Err(Error::Backward(format!(
            "checked function must be scalar, got {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

fn analytic_grads<F>(f: &F, xs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
    let y = f(&mut g, &vars)?;
    g.backward(y)?;
    Ok(vars
        .iter()
        .zip(xs)
        .map(|(&v, x)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect())
}

/// Checks selected `(input, flat index)` coordinates.
pub fn spot_check<F>(f: F, xs: &[Tensor<f64>], coords: &[(usize, usize)], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let grads = analytic_grads(&f, xs)?;
    let mut worst = GradCheck::default();
    let mut probe = xs.to_vec();
    for &(input, index) in coords {
        let orig = probe[input].data()[index];
        probe[input].data_mut()[index] = orig + eps;
        let plus = eval_scalar(&f, &probe)?;
        probe[input].data_mut()[index] = orig - eps;
        let minus = eval_scalar(&f, &probe)?;
        probe[input].data_mut()[index] = orig;

        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads[input].data()[index];
        let rel = (analytic - numeric).abs() / (analytic.abs() + DENOM_FLOOR);
        if rel > worst.max_rel_err || rel.is_nan() {
            worst = GradCheck {
                max_rel_err: rel,
                input,
                index,
                analytic,
                numeric,
            };
        }
    }
    Ok(worst)
}

/// Checks every coordinate of every input.
pub fn finite_diff_check_many<F>(f: F, xs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = xs
        .iter()
        .enumerate()
        .flat_map(|(i, x)| (0..x.len()).map(move |j| (i, j)))
        .collect();
    Ok(spot_check(f, xs, &coords, eps)?.max_rel_err)
}

/// Single-input form of [`finite_diff_check_many`].
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    finite_diff_check_many(|g, xs| f(g, xs[0]), std::slice::from_ref(x), eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_fn(&[5], |i| i as f64 * 0.3 - 0.6);
        let w = Tensor::from_fn(&[5], |i| 1.0 + i as f64);
        let err = finite_diff_check(
            |g, x| {
                let wv = g.constant(w.clone());
                let y = g.mul(x, wv)?;
                Ok(g.sum(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn softmax_scalar_is_accurate() {
        let x = Tensor::from_fn(&[6], |i| ((i * 5 % 7) as f64 - 3.0) / 4.0);
        let w = Tensor::from_fn(&[6], |i| i as f64);
        let err = finite_diff_check(
            |g, x| {
                let p = g.softmax(x, 0)?;
                let wv = g.constant(w.clone());
                let y = g.mul(p, wv)?;
                Ok(g.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        use crate::tensor::exec::Exec;
        use crate::tensor::Function;

        // Squares its input but claims the derivative is x instead of 2x.
        struct BadSquare;
        impl Function<f64> for BadSquare {
            fn name(&self) -> &'static str {
                "bad_square"
            }
            fn backward(
                &self,
                grad: &Tensor<f64>,
                inputs: &[&Tensor<f64>],
                _out: &Tensor<f64>,
                _exec: Exec,
            ) -> Vec<Option<Tensor<f64>>> {
                let x = inputs[0];
                vec![Some(Tensor::from_fn(x.shape(), |i| grad.data()[i] * x.data()[i]))]
            }
        }
        let x = Tensor::from_fn(&[3], |i| 0.5 + i as f64);
        let err = finite_diff_check(
            |g, x| {
                let v = g.value(x).map(|a| a * a);
                let y = g.apply(BadSquare, &[x], v);
                Ok(g.sum(y))
            },
            &x,
            1e-5,
        );
        assert!(err.unwrap() > 0.4);
    }
}

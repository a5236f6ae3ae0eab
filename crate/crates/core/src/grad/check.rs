//! Central finite-difference checking of tape gradients.

use alloc::vec::Vec;

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Worst per-input relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
    pub max_relative_error: f64,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

/// Compares reverse-mode gradients of a scalar function of `inputs` against
/// central differences with step `h`. `f` receives one input leaf per tensor.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.input(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .wrt(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut num = Tensor::zeros(input.rows(), input.cols());
        for idx in 0..input.len() {
            let x0 = input.data()[idx];
            work[k].data_mut()[idx] = x0 + h;
            let plus = eval(&work)?;
            work[k].data_mut()[idx] = x0 - h;
            let minus = eval(&work)?;
            work[k].data_mut()[idx] = x0;
            num.data_mut()[idx] = (plus - minus) / (2.0 * h);
        }
        worst = worst.max(relative_error(&analytic[k], &num));
        numeric.push(num);
    }
    Ok(GradCheck {
        max_relative_error: worst,
        analytic,
        numeric,
    })
}

pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let norm = |t: &Tensor| sqrt(t.data().iter().map(|x| x * x).sum());
    let diff = sqrt(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum());
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Like [`check_gradients`], but differentiates with respect to every
/// parameter in `store`. `f` builds the scalar loss on a tape that reads
/// parameters from the store it is given.
pub fn check_param_gradients<F>(store: &ParamStore, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic_grads = {
        let mut tape = Tape::with_params(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?.param_grads(store.len())
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::frozen(s);
        let out = f(&mut tape)?;
        Ok(tape.value(out).item())
    };
    let mut work = store.clone();
    let mut analytic = Vec::with_capacity(store.len());
    let mut numeric = Vec::with_capacity(store.len());
    let mut worst = 0.0f64;
    for (id, p) in store.iter() {
        let shape = p.value().shape();
        let a = analytic_grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]));
        let mut num = Tensor::zeros(shape[0], shape[1]);
        for idx in 0..p.value().len() {
            let x0 = p.value().data()[idx];
            let mut v = p.value().clone();
            v.data_mut()[idx] = x0 + h;
            work.set_value(id, v.clone())?;
            let plus = eval(&work)?;
            v.data_mut()[idx] = x0 - h;
            work.set_value(id, v)?;
            let minus = eval(&work)?;
            num.data_mut()[idx] = (plus - minus) / (2.0 * h);
        }
        work.set_value(id, p.value().clone())?;
        worst = worst.max(relative_error(&a, &num));
        analytic.push(a);
        numeric.push(num);
    }
    Ok(GradCheck {
        max_relative_error: worst,
        analytic,
        numeric,
    })
}

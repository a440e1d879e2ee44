//! Central-difference gradient oracle.

use super::dense::Tensor;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Compares reverse-mode gradients of `loss_fn` with fourth-order central
/// differences of step `eps`.
///
/// `loss_fn` receives a fresh tape and one leaf per entry of `params` and
/// must return a scalar. Returns the largest
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)` over every
/// parameter element.
pub fn grad_check<T, F>(loss_fn: F, params: &[Tensor<T>], eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    Ok(grad_check_detailed(loss_fn, params, eps)?.max_rel_err)
}

/// Outcome of [`grad_check_detailed`], locating the worst element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// [`grad_check`] that also reports where the largest error occurred.
pub fn grad_check_detailed<T, F>(loss_fn: F, params: &[Tensor<T>], eps: f64) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.param(p.shape.clone(), p.data.clone()))
        .collect();
    let loss = loss_fn(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(|g| g.iter().map(|x| x.to_f64_lossy()).collect())
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();

    let eval = |values: &[Tensor<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|p| tape.constant(p.shape.clone(), p.data.clone()))
            .collect();
        let loss = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(loss).item()?.to_f64_lossy())
    };

    let mut work: Vec<Tensor<T>> = params.to_vec();
    let mut worst = GradCheck::default();
    for (pi, grads) in analytic.iter().enumerate() {
        for (ei, &a) in grads.iter().enumerate() {
            let orig = work[pi].data[ei];
            let mut at = |step: f64| -> Result<f64> {
                work[pi].data[ei] = orig + T::of(step);
                eval(&work)
            };
            let (u1, d1, u2, d2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
            work[pi].data[ei] = orig;
            let numeric = (8.0 * (u1 - d1) - (u2 - d2)) / (12.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-12);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.max_rel_err {
                worst = GradCheck {
                    max_rel_err: rel,
                    param: pi,
                    element: ei,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}

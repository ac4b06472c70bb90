//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};
use super::{NumericsError, Tensor};

/// Smallest magnitude used as the denominator of a relative error, so that
/// gradients that are essentially zero are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between reverse-mode gradients of the scalar
/// function `f` and central differences with step `h`, over every element of
/// every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64, NumericsError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let analytic = tape.grad_values(out, &vars)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64, NumericsError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let x0 = input.data()[i];
            work[which].data_mut()[i] = x0 + h;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = x0 - h;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[which].data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, input: &Tensor, h: f64) -> Result<f64, NumericsError>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>, NumericsError>,
{
    grad_check_many(|_, v| f(v[0]), std::slice::from_ref(input), h)
}

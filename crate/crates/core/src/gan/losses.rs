use rand::Rng;

use super::GanError;
use crate::numerics::{Tape, Tensor, Var};

/// Discriminator probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// `(d_loss, g_loss)` for discriminator probabilities on a real and a generated batch.
///
/// `d_loss = -mean(y log D(x)) - mean(log(1 - D(x̄)))` with real target `y`;
/// `g_loss = -mean(log D(x̄))`.
pub fn dcgan_losses<'t>(d_real: Var<'t>, d_fake: Var<'t>, real_label: f64) -> (Var<'t>, Var<'t>) {
    let hi = 1.0 - PROB_CLAMP;
    let real = d_real.clamp(PROB_CLAMP, hi);
    let fake = d_fake.clamp(PROB_CLAMP, hi);
    let real_term = real.log().scale(real_label).mean();
    let fake_term = fake.neg().add_scalar(1.0).log().mean();
    let d_loss = real_term.add(fake_term).expect("scalars").neg();
    let g_loss = fake.log().mean().neg();
    (d_loss, g_loss)
}

pub fn dcgan_loss_values(d_real: &[f64], d_fake: &[f64], real_label: f64) -> (f64, f64) {
    let tape = Tape::new();
    let r = tape.constant(Tensor::from_fn(&[d_real.len()], |i| d_real[i]));
    let f = tape.constant(Tensor::from_fn(&[d_fake.len()], |i| d_fake[i]));
    let (d, g) = dcgan_losses(r, f, real_label);
    (d.value().item(), g.value().item())
}

/// `(critic_core, gen_loss)` = `(mean(c_fake) - mean(c_real), -mean(c_fake))`.
/// `-critic_core` is the Wasserstein estimate.
pub fn wasserstein_losses<'t>(c_real: Var<'t>, c_fake: Var<'t>) -> (Var<'t>, Var<'t>) {
    let fake = c_fake.mean();
    let core = fake.sub(c_real.mean()).expect("scalars");
    (core, fake.neg())
}

pub fn wasserstein_loss_values(c_real: &[f64], c_fake: &[f64]) -> (f64, f64) {
    let tape = Tape::new();
    let r = tape.constant(Tensor::from_fn(&[c_real.len()], |i| c_real[i]));
    let f = tape.constant(Tensor::from_fn(&[c_fake.len()], |i| c_fake[i]));
    let (c, g) = wasserstein_losses(r, f);
    (c.value().item(), g.value().item())
}

/// Mean over the batch of `(‖∇ critic(x̂)‖₂ - 1)²` at `x̂ = ε·real + (1-ε)·fake`, one `ε` per sample.
///
/// The result stays on the tape, so it can be differentiated again with respect to
/// whatever parameters `critic` closes over.
pub fn gradient_penalty_at<'t>(
    tape: &'t Tape,
    critic: impl Fn(Var<'t>) -> Result<Var<'t>, GanError>,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
) -> Result<Var<'t>, GanError> {
    if real.shape() != fake.shape() {
        return Err(GanError::Shape(format!("real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    let batch = real.shape().first().copied().unwrap_or(0);
    if batch == 0 {
        return Err(GanError::Data("gradient penalty on an empty batch".into()));
    }
    if eps.len() != batch {
        return Err(GanError::Shape(format!("{} mixing weights for batch of {batch}", eps.len())));
    }
    let per = real.numel() / batch;
    let mixed = Tensor::from_fn(real.shape(), |i| {
        let e = eps[i / per];
        e * real.data()[i] + (1.0 - e) * fake.data()[i]
    });
    let x = tape.param(mixed);
    let score = critic(x)?.sum();
    let g = tape.grad(score, &[x])?[0];
    let norm = g.reshape(&[batch, per])?.square().sum_cols().sqrt();
    Ok(norm.add_scalar(-1.0).square().mean())
}

/// [`gradient_penalty_at`] with `ε ~ U(0, 1)` drawn from `rng`.
pub fn gradient_penalty<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    critic: impl Fn(Var<'t>) -> Result<Var<'t>, GanError>,
    real: &Tensor,
    fake: &Tensor,
    rng: &mut R,
) -> Result<Var<'t>, GanError> {
    let batch = real.shape().first().copied().unwrap_or(0);
    let eps: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
    gradient_penalty_at(tape, critic, real, fake, &eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check_many;
    use crate::rng::derive_rng;

    #[test]
    fn dcgan_examples() {
        let (d, _) = dcgan_loss_values(&[0.9], &[0.1], 0.9);
        let want = -(0.9 * 0.9f64.ln() + 0.9f64.ln());
        assert!((d - want).abs() < 1e-12);
        assert!((d - 0.200).abs() < 1e-3);
        let (_, g) = dcgan_loss_values(&[0.5], &[0.5], 0.9);
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let (_, g) = dcgan_loss_values(&[1.0], &[0.0], 0.9);
        assert!(g.is_finite());
        assert!((g + PROB_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_loss_values(&[0.3, -1.0], &[0.3, -1.0]).0, 0.0);
        assert_eq!(wasserstein_loss_values(&[2.0, 2.0], &[1.0, 1.0]), (-1.0, -1.0));
        let base = wasserstein_loss_values(&[0.2, 1.4, -0.3], &[0.7, -0.1, 0.5]);
        let shifted = wasserstein_loss_values(&[5.2, 6.4, 4.7], &[5.7, 4.9, 5.5]);
        assert!((base.0 - shifted.0).abs() < 1e-12);
        // The generator loss moves with the shift; only the critic term is shift invariant.
        assert!((base.1 - shifted.1 - 5.0).abs() < 1e-12);
    }

    fn batch(seed: u64, b: usize, n: usize) -> Tensor {
        use rand::Rng;
        let mut rng = derive_rng(seed, "gp");
        Tensor::from_fn(&[b, n], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let tape = Tape::new();
        let n = 9;
        let w = Tensor::from_fn(&[n, 1], |i| if i == 4 { 1.0 } else { 0.0 });
        let p = gradient_penalty(&tape, |x| Ok(x.matmul(x.tape().constant(w.clone()))?), &batch(1, 4, n), &batch(2, 4, n), &mut derive_rng(0, "e")).unwrap();
        assert_eq!(p.value().item(), 0.0);
    }

    #[test]
    fn zero_critic_has_unit_penalty() {
        let tape = Tape::new();
        let p = gradient_penalty(&tape, |x| Ok(x.scale(0.0)), &batch(1, 3, 5), &batch(2, 3, 5), &mut derive_rng(0, "e")).unwrap();
        assert_eq!(p.value().item(), 1.0);
    }

    #[test]
    fn scaled_sum_critic_matches_closed_form() {
        for (k, n) in [(2.0, 7usize), (0.5, 12), (3.0, 1)] {
            let tape = Tape::new();
            let p = gradient_penalty(&tape, move |x| Ok(x.scale(k)), &batch(3, 5, n), &batch(4, 5, n), &mut derive_rng(1, "e")).unwrap();
            let want = (k * (n as f64).sqrt() - 1.0).powi(2);
            assert!((p.value().item() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_batch_is_data_error() {
        let tape = Tape::new();
        let e = Tensor::zeros(&[0, 4]);
        let r = gradient_penalty_at(&tape, |x| Ok(x), &e, &e, &[]);
        assert!(matches!(r, Err(GanError::Data(_))));
    }

    #[test]
    fn penalty_is_differentiable_in_critic_parameters() {
        // Critic: sum(tanh(x W) v), smooth so finite differences are reliable.
        let real = batch(5, 3, 4);
        let fake = batch(6, 3, 4);
        let eps = [0.2, 0.7, 0.5];
        let w0 = batch(7, 4, 3);
        let v0 = batch(8, 3, 1);
        let err = grad_check_many(
            |tape, p| {
                let (w, v) = (p[0], p[1]);
                gradient_penalty_at(tape, |x| Ok(x.matmul(w)?.tanh().matmul(v)?), &real, &fake, &eps).map_err(|e| match e {
                    GanError::Numerics(n) => n,
                    other => crate::numerics::NumericsError::Contract(other.to_string()),
                })
            },
            &[w0, v0],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }
}

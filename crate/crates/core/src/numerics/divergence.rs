use super::NumericsError;

const SUM_TOLERANCE: f64 = 1e-9;

fn check_distribution(name: &str, p: &[f64]) -> Result<(), NumericsError> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(NumericsError::Support(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(NumericsError::Support(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Discrete Kullback-Leibler divergence `Σ p log(p/q)` in nats, with `0·log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, NumericsError> {
    if p.len() != q.len() {
        return Err(NumericsError::Shape(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(NumericsError::Support(format!("q is zero at outcome {i} where p > 0")));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Jensen-Shannon divergence: mean KL of each distribution to their midpoint mixture.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, NumericsError> {
    if p.len() != q.len() {
        return Err(NumericsError::Shape(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?)
}

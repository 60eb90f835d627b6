//! Central-difference gradient oracle.

use super::NnError;

/// Estimates `∂L/∂θ_i ≈ (L(θ + h e_i) - L(θ - h e_i)) / 2h` for every parameter.
///
/// The closure is evaluated twice at the unperturbed point first; differing
/// values mean the oracle cannot be trusted.
pub fn finite_diff_grad<F>(mut loss: F, params: &[f64], h: f64) -> Result<Vec<f64>, NnError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(NnError::Config(format!("step h must be positive, got {h}")));
    }
    let first = loss(params);
    let second = loss(params);
    if first.to_bits() != second.to_bits() {
        return Err(NnError::OracleInvalid { first, second });
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = loss(&theta);
        theta[i] = orig - h;
        let minus = loss(&theta);
        theta[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn nondeterministic_closure_is_rejected() {
        let calls = Cell::new(0.0);
        let res = finite_diff_grad(
            |t| {
                calls.set(calls.get() + 1.0);
                t[0] + calls.get()
            },
            &[0.0],
            1e-5,
        );
        assert!(matches!(res, Err(NnError::OracleInvalid { .. })));
    }

    #[test]
    fn bad_step() {
        assert!(finite_diff_grad(|t| t[0], &[0.0], 0.0).is_err());
        assert!(finite_diff_grad(|t| t[0], &[0.0], -1e-3).is_err());
    }
}

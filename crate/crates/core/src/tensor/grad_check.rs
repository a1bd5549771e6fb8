//! Finite-difference verification of the reverse pass.

use super::{DiffTensor, Scalar, Tape, TensorError};

/// Compare analytic gradients against central finite differences.
///
/// `f` builds a scalar output from a leaf of shape `shape` holding `x0`;
/// it is evaluated once with backward enabled and then twice per coordinate
/// at `x ± h`. Returns the worst relative error
/// `|analytic - fd| / (|fd| + 1e-8)` over all coordinates.
///
/// Any non-finite function value or gradient is an error: a silent NaN here
/// would make the comparison pass vacuously.
pub fn grad_check<F, Fun>(
    f: Fun,
    x0: &[F],
    shape: &[usize],
    h: F,
) -> Result<F, TensorError>
where
    F: Scalar,
    Fun: Fn(&Tape<F>, &DiffTensor<F>) -> Result<DiffTensor<F>, TensorError>,
{
    if !(h > F::zero()) {
        return Err(TensorError::Invalid {
            op: "grad_check",
            detail: format!("step size must be positive, got {h}"),
        });
    }

    let eval = |xs: &[F]| -> Result<F, TensorError> {
        let tape = Tape::new();
        let x = tape.leaf(shape, xs.to_vec())?;
        let y = f(&tape, &x)?;
        let v = y.item()?;
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    // Analytic gradient from one taped evaluation.
    let analytic = {
        let tape = Tape::new();
        let x = tape.leaf(shape, x0.to_vec())?;
        let y = f(&tape, &x)?;
        if !y.item()?.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check" });
        }
        y.backward()?;
        x.grad().expect("backward populates every gradient")
    };
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }

    let floor = F::from_f64(1e-8);
    let two = F::from_f64(2.0);
    let mut worst = F::zero();
    let mut probe = x0.to_vec();
    for i in 0..x0.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = eval(&probe)?;
        probe[i] = orig - h;
        let down = eval(&probe)?;
        probe[i] = orig;
        let fd = (up - down) / (two * h);
        let rel = (analytic[i] - fd).abs() / (fd.abs() + floor);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

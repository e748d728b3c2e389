use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::domain("softmax of empty input"));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax of a non-empty slice.
pub(crate) fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in x.iter_mut() {
        *v *= inv;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate().skip(1) {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad<T, F>(mut f: F, x: &Tensor<T>, h: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    if h <= T::zero() {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value while differencing coordinate {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / two_h;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_softmax() {
        let p = softmax(&[0.0f64; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let p = softmax(&[1000.0f64, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_of_logs_is_normalized_ratio() {
        let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        for (v, e) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(softmax::<f64>(&[]).is_err());
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn finite_diff_quadratics() {
        let g = finite_diff_grad(|t| t.data()[0] * t.data()[0], &Tensor::from_vec(vec![3.0f64]), 1e-5).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
        let g = finite_diff_grad(
            |t| t.data().iter().map(|v| v * v).sum(),
            &Tensor::from_vec(vec![1.0f64, 2.0]),
            1e-5,
        )
        .unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_reports_non_finite() {
        let r = finite_diff_grad(|t| t.data()[0].ln(), &Tensor::from_vec(vec![0.0f64]), 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}

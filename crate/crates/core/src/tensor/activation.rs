use super::{Scalar, Tensor4};
use crate::error::Result;

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor4<T>) {
    for v in t.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Gradient of ReLU. The subgradient at exactly zero is zero.
///
/// `reference` may be either the ReLU input or its output: both are positive
/// at exactly the same positions.
pub fn relu_backward<T: Scalar>(reference: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut g = grad_out.clone();
    relu_backward_inplace(reference, &mut g)?;
    Ok(g)
}

pub fn relu_backward_inplace<T: Scalar>(reference: &Tensor4<T>, grad: &mut Tensor4<T>) -> Result<()> {
    reference.shape().check_eq(&grad.shape(), "relu backward")?;
    for (g, &x) in grad.data_mut().iter_mut().zip(reference.data()) {
        if !(x > T::zero()) {
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn t(v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn clamps_negatives_and_zero() {
        assert_eq!(relu(&t(&[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn positive_input_is_identity_both_ways() {
        let x = t(&[0.5, 1.0, 3.0]);
        assert_eq!(relu(&x), x);
        let g = t(&[1.0, -2.0, 4.0]);
        assert_eq!(relu_backward(&x, &g).unwrap(), g);
    }

    #[test]
    fn zero_passes_no_gradient() {
        let g = relu_backward(&t(&[0.0, -1.0, 1.0]), &t(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn matches_finite_differences_away_from_kink() {
        let x = t(&[-0.7, -0.1, 0.2, 0.9, 1.7]);
        let weights = [0.3, -1.2, 0.8, 2.0, -0.5];
        let loss = |x: &Tensor4<f64>| -> f64 {
            relu(x).data().iter().zip(weights).map(|(a, w)| a * w).sum()
        };
        let grad = relu_backward(&x, &t(&weights)).unwrap();
        let eps = 1e-5;
        for i in 0..5 {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * eps);
            assert!((fd - grad.data()[i]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}

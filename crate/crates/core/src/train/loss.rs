use crate::error::Result;
use crate::tensor::{Scalar, Tensor4};

/// How the summed squared error of a batch is normalised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossNormalization {
    /// Divide by the number of patch pairs only.
    #[default]
    PerPatch,
    /// Additionally divide by the number of values in a patch.
    PerPixel,
}

/// `L = (1/N) * sum_i ||S_i - T_i||^2` over the `N` patches of a batch, and
/// its gradient `2 (S - T) / N`.
pub fn l2_patch_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    l2_patch_loss_with(pred, target, LossNormalization::PerPatch)
}

pub fn l2_patch_loss_with<T: Scalar>(
    pred: &Tensor4<T>,
    target: &Tensor4<T>,
    norm: LossNormalization,
) -> Result<(f64, Tensor4<T>)> {
    let s = pred.shape();
    s.check_eq(&target.shape(), "loss target")?;
    let denom = match norm {
        LossNormalization::PerPatch => s.n as f64,
        LossNormalization::PerPixel => s.len() as f64,
    };
    let scale = T::lit(2.0 / denom);
    let mut grad = pred.clone();
    let mut sum = 0.0f64;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        sum += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok((sum / denom, grad))
}

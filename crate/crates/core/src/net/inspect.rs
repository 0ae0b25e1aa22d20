use super::network::Network;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::{Scalar, Tensor4};

/// Visualisation of one branch's output map for one image.
#[derive(Clone, Debug)]
pub struct BranchImage {
    pub branch: usize,
    /// `clamp(map + 0.5)`.
    pub raw: Image,
    /// `clamp(amplification * map + 0.5)`.
    pub amplified: Image,
}

impl BranchImage {
    pub fn raw_file_name(&self) -> String {
        format!("branch{}_raw.png", self.branch)
    }

    pub fn amplified_file_name(&self) -> String {
        format!("branch{}_amplified.png", self.branch)
    }
}

/// Per-branch maps of the first batch item, offset to mid-gray so negative
/// (cancelling) contributions are visible.
pub fn inspect_branches<T: Scalar>(
    net: &Network<T>,
    image: &Tensor4<T>,
    amplification: f64,
) -> Result<Vec<BranchImage>> {
    if !(amplification > 0.0 && amplification.is_finite()) {
        return Err(Error::config(format!("amplification must be positive, got {amplification}")));
    }
    let out = net.forward(&image.take_sample(0))?;
    Ok(out
        .branches
        .iter()
        .map(|(branch, map)| {
            let m = Image::from_tensor(map, 0);
            BranchImage {
                branch: *branch,
                raw: m.map(|v| (v + 0.5).clamp(0.0, 1.0)),
                amplified: m.map(|v| (amplification * v + 0.5).clamp(0.0, 1.0)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_network, NetworkConfig};
    use crate::tensor::Shape;

    #[test]
    fn zero_network_is_mid_gray() {
        let net = Network::<f64>::zeros(&NetworkConfig::default()).unwrap();
        let views = inspect_branches(&net, &Tensor4::filled(Shape::new(1, 3, 16, 16), 0.3), 4.0).unwrap();
        assert_eq!(views.len(), 5);
        for v in views {
            assert!(v.raw.data().iter().chain(v.amplified.data()).all(|&p| p == 0.5));
        }
    }

    #[test]
    fn unit_amplification_equals_raw() {
        let net = build_network::<f64>(&NetworkConfig { cascade_channels: 8, ..Default::default() }, 3).unwrap();
        let x = Tensor4::from_fn(Shape::new(1, 3, 16, 16), |_, c, y, x| ((c * y + x) % 4) as f64 / 4.0);
        for v in inspect_branches(&net, &x, 1.0).unwrap() {
            assert_eq!(v.raw, v.amplified);
        }
        assert!(inspect_branches(&net, &x, 0.0).is_err());
    }
}

//! Declarative layer list shared by construction, parameter counting and the
//! checkpoint manifest.

use super::config::{Fusion, NetworkConfig};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub relu: bool,
}

impl LayerSpec {
    fn conv(name: String, in_c: usize, out_c: usize, stride: usize, relu: bool) -> Self {
        LayerSpec {
            name,
            kind: LayerKind::Conv,
            in_channels: in_c,
            out_channels: out_c,
            kernel: 3,
            stride,
            padding: 1,
            relu,
        }
    }

    fn pointwise(name: String, in_c: usize, out_c: usize) -> Self {
        LayerSpec { kernel: 1, padding: 0, ..Self::conv(name, in_c, out_c, 1, true) }
    }

    fn deconv(name: String, in_c: usize, out_c: usize) -> Self {
        LayerSpec {
            name,
            kind: LayerKind::Deconv,
            in_channels: in_c,
            out_channels: out_c,
            kernel: 4,
            stride: 2,
            padding: 1,
            relu: true,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    /// Inputs summed into one output value. A transposed convolution only
    /// overlaps `(kernel / stride)^2` taps per output pixel.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.in_channels * self.kernel * self.kernel,
            LayerKind::Deconv => self.in_channels * (self.kernel / self.stride).pow(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchLayout {
    pub scale: usize,
    pub cascade: Vec<usize>,
    pub upsample: Vec<usize>,
    /// 1x1 reduction of the branch 1 cascade (concatenation fusion only).
    pub reduce: Option<usize>,
    /// Final map-producing convolution (sum fusion only).
    pub output: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionLayout {
    pub convs: [usize; 2],
    pub output: usize,
}

/// Indices into the layer list describing how layers connect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    /// Downsampling group of scale `s` at index `s - 1`.
    pub down: Vec<[usize; 2]>,
    pub branches: Vec<BranchLayout>,
    pub fusion: Option<FusionLayout>,
}

/// Lists every layer in manifest order together with the wiring.
pub fn layer_plan(config: &NetworkConfig) -> Result<(Vec<LayerSpec>, Topology)> {
    config.validate()?;
    let io = config.input_channels;
    let wide = config.wide_channels();
    let detail = config.detail_channels();
    let mut layers = Vec::new();
    let mut push = |spec: LayerSpec| {
        layers.push(spec);
        layers.len() - 1
    };

    let mut down = Vec::new();
    for s in 1..=config.max_branch() {
        let (a, b) = match s {
            1 => (
                LayerSpec::conv(format!("down{s}.conv0"), io, detail, 1, true),
                LayerSpec::conv(format!("down{s}.conv1"), detail, detail, 1, true),
            ),
            2 => (
                LayerSpec::conv(format!("down{s}.conv0"), detail, detail, 2, true),
                LayerSpec::conv(format!("down{s}.conv1"), detail, wide, 1, true),
            ),
            _ => (
                LayerSpec::conv(format!("down{s}.conv0"), wide, wide, 2, true),
                LayerSpec::conv(format!("down{s}.conv1"), wide, wide, 1, true),
            ),
        };
        down.push([push(a), push(b)]);
    }

    let sum = config.fusion == Fusion::Sum;
    let mut branches = Vec::new();
    for &b in &config.branches {
        let mut cascade = Vec::new();
        for i in 0..config.cascade_depth {
            let in_c = if i == 0 && b == 1 { detail } else { wide };
            cascade.push(push(LayerSpec::conv(format!("branch{b}.cascade{i}"), in_c, wide, 1, true)));
        }
        let mut upsample = Vec::new();
        let mut channels = wide;
        for j in 0..b - 1 {
            let out_c = if j == 0 && b > 2 { wide } else { detail };
            upsample.push(push(LayerSpec::deconv(format!("branch{b}.deconv{j}"), channels, out_c)));
            channels = out_c;
        }
        let reduce = (!sum && b == 1).then(|| push(LayerSpec::pointwise(format!("branch{b}.reduce"), wide, detail)));
        let output = sum.then(|| push(LayerSpec::conv(format!("branch{b}.out"), channels, io, 1, false)));
        branches.push(BranchLayout { scale: b, cascade, upsample, reduce, output });
    }

    let fusion = (!sum).then(|| {
        let concat = config.branches.len() * detail;
        FusionLayout {
            convs: [
                push(LayerSpec::conv("fusion.conv0".into(), concat, detail, 1, true)),
                push(LayerSpec::conv("fusion.conv1".into(), detail, detail, 1, true)),
            ],
            output: push(LayerSpec::conv("fusion.out".into(), detail, io, 1, false)),
        }
    });

    Ok((layers, Topology { down, branches, fusion }))
}

/// Number of weights and biases of the network described by `config`.
pub fn param_count(config: &NetworkConfig) -> Result<usize> {
    Ok(layer_plan(config)?.0.iter().map(LayerSpec::param_count).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Variant;

    #[test]
    fn single_conv_count() {
        assert_eq!(LayerSpec::conv("x".into(), 3, 32, 1, true).param_count(), 896);
    }

    #[test]
    fn default_layer_widths_follow_tables() {
        let (layers, topo) = layer_plan(&NetworkConfig::default()).unwrap();
        let width = |i: usize| (layers[i].in_channels, layers[i].out_channels, layers[i].stride);
        assert_eq!(width(topo.down[0][0]), (3, 32, 1));
        assert_eq!(width(topo.down[0][1]), (32, 32, 1));
        assert_eq!(width(topo.down[1][0]), (32, 32, 2));
        assert_eq!(width(topo.down[1][1]), (32, 64, 1));
        for s in 2..5 {
            assert_eq!(width(topo.down[s][0]), (64, 64, 2));
            assert_eq!(width(topo.down[s][1]), (64, 64, 1));
        }
        let deconvs = |b: usize| -> Vec<usize> {
            topo.branches[b - 1].upsample.iter().map(|&i| layers[i].out_channels).collect()
        };
        assert_eq!(deconvs(1), Vec::<usize>::new());
        assert_eq!(deconvs(2), vec![32]);
        assert_eq!(deconvs(3), vec![64, 32]);
        assert_eq!(deconvs(4), vec![64, 32, 32]);
        assert_eq!(deconvs(5), vec![64, 32, 32, 32]);
        for b in &topo.branches {
            assert_eq!(b.cascade.len(), 5);
            assert_eq!(layers[b.output.unwrap()].out_channels, 3);
        }
        assert_eq!(layers[topo.branches[0].cascade[0]].in_channels, 32);
    }

    #[test]
    fn b15_keeps_intermediate_downsampling() {
        let (_, topo) = layer_plan(&NetworkConfig::variant(Variant::B15)).unwrap();
        assert_eq!(topo.down.len(), 5);
        let scales: Vec<usize> = topo.branches.iter().map(|b| b.scale).collect();
        assert_eq!(scales, vec![1, 5]);
    }

    #[test]
    fn removing_a_branch_shrinks_the_count() {
        let full = param_count(&NetworkConfig::default()).unwrap();
        for k in 2..=5 {
            let branches = (1..=5).filter(|&b| b != k).collect();
            let cfg = NetworkConfig { branches, ..Default::default() };
            assert!(param_count(&cfg).unwrap() < full);
        }
    }

    #[test]
    fn concat_variant_has_fusion_layers() {
        let (layers, topo) = layer_plan(&NetworkConfig::variant(Variant::Concate)).unwrap();
        let f = topo.fusion.unwrap();
        assert_eq!(layers[f.convs[0]].in_channels, 5 * 32);
        assert_eq!(layers[f.output].out_channels, 3);
        assert!(topo.branches.iter().all(|b| b.output.is_none()));
        assert!(topo.branches[0].reduce.is_some());
    }
}

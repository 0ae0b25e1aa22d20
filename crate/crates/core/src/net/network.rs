use rand_distr::{Distribution, Normal};

use super::config::{Init, NetworkConfig};
use super::plan::{layer_plan, LayerKind, LayerSpec, Topology};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::seed;
use crate::tensor::{
    conv2d_forward, deconv2d_backward, deconv2d_forward, relu_backward_inplace, relu_inplace,
    ConvGrads, ConvParams, Scalar, Shape, Tensor4,
};

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    seed: u64,
    specs: Vec<LayerSpec>,
    topology: Topology,
    params: Vec<ConvParams<T>>,
    block_names: Vec<[String; 2]>,
}

/// Per-branch full-resolution maps and their fusion.
///
/// In concatenation mode there are no per-branch output maps and `branches`
/// is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs<T> {
    pub branches: Vec<(usize, Tensor4<T>)>,
    pub fused: Tensor4<T>,
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    input: Tensor4<T>,
    outputs: Vec<Option<Tensor4<T>>>,
    /// Per branch: the cascade result after the optional skip connection.
    features: Vec<Tensor4<T>>,
    concat: Option<Tensor4<T>>,
}

impl<T> Trace<T> {
    /// Output of layer `index` (post-activation), if it was recorded.
    pub fn layer_output(&self, index: usize) -> Option<&Tensor4<T>> {
        self.outputs.get(index).and_then(Option::as_ref)
    }
}

/// Gradients for every layer, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads<T> {
    pub layers: Vec<ConvGrads<T>>,
}

impl<T: Scalar> NetGrads<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        NetGrads { layers: net.params.iter().map(ConvGrads::zeros_like).collect() }
    }

    pub fn add_assign(&mut self, other: &NetGrads<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.layers {
            for v in g.weight.data_mut().iter_mut().chain(g.bias.iter_mut()) {
                *v *= factor;
            }
        }
    }

    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.data().iter().chain(&g.bias).copied())
            .collect()
    }
}

/// Builds a network with `N(0, 0.01^2)` weights and zero biases.
pub fn build_network<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    let mut net = Network::zeros(config)?;
    net.seed = seed;
    let mut rng = seed::rng(seed, "init", 0);
    for (p, spec) in net.params.iter_mut().zip(&net.specs) {
        let std = match config.init {
            Init::Gaussian => INIT_STD,
            Init::He => (2.0 / spec.fan_in() as f64).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("valid std");
        for w in p.weight.data_mut() {
            *w = T::lit(normal.sample(&mut rng));
        }
    }
    Ok(net)
}

impl<T: Scalar> Network<T> {
    /// All weights and biases zero.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let (specs, topology) = layer_plan(config)?;
        let params = specs
            .iter()
            .map(|s| match s.kind {
                LayerKind::Conv => {
                    ConvParams::zeros_conv(s.in_channels, s.out_channels, s.kernel, s.stride, s.padding)
                }
                LayerKind::Deconv => {
                    ConvParams::zeros_deconv(s.in_channels, s.out_channels, s.kernel, s.stride, s.padding)
                }
            })
            .collect();
        let block_names =
            specs.iter().map(|s| [format!("{}.weight", s.name), format!("{}.bias", s.name)]).collect();
        Ok(Network { config: config.clone(), seed: 0, specs, topology, params, block_names })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &[ConvParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ConvParams::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.weight.data().iter().chain(&p.bias).copied()).collect()
    }

    /// `(weight, bias)` block names of layer `i`.
    pub fn block_names(&self, i: usize) -> (&str, &str) {
        (&self.block_names[i][0], &self.block_names[i][1])
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            seed: self.seed,
            specs: self.specs.clone(),
            topology: self.topology.clone(),
            params: self
                .params
                .iter()
                .map(|p| ConvParams {
                    weight: p.weight.cast(),
                    bias: p.bias.iter().map(|b| U::lit(b.as_f64())).collect(),
                    stride: p.stride,
                    padding: p.padding,
                })
                .collect(),
            block_names: self.block_names.clone(),
        }
    }

    pub fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c != self.config.input_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.config.input_channels, shape.c
            )));
        }
        let d = self.config.required_divisor();
        if shape.h == 0 || shape.w == 0 || shape.h % d != 0 || shape.w % d != 0 {
            return Err(Error::shape(format!(
                "input of {}x{} pixels: height and width must be positive multiples of {d} for branches up to {}",
                shape.h,
                shape.w,
                self.config.max_branch()
            )));
        }
        Ok(())
    }

    fn run(&self, i: usize, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let p = &self.params[i];
        let mut y = match self.specs[i].kind {
            LayerKind::Conv => conv2d_forward(x, p)?,
            LayerKind::Deconv => deconv2d_forward(x, p)?,
        };
        if self.specs[i].relu {
            relu_inplace(&mut y);
        }
        Ok(y)
    }

    /// Backward through layer `i` given its input, its output and the
    /// gradient at its output.
    fn run_backward(
        &self,
        i: usize,
        input: &Tensor4<T>,
        output: &Tensor4<T>,
        mut grad: Tensor4<T>,
        need_input: bool,
    ) -> Result<(Option<Tensor4<T>>, ConvGrads<T>)> {
        if self.specs[i].relu {
            relu_backward_inplace(output, &mut grad)?;
        }
        let p = &self.params[i];
        match self.specs[i].kind {
            LayerKind::Conv => crate::tensor::conv2d_backward_opt(input, p, &grad, need_input),
            LayerKind::Deconv => {
                let (gi, gp) = deconv2d_backward(input, p, &grad)?;
                Ok((Some(gi), gp))
            }
        }
    }

    /// Inference pass; intermediate activations are dropped as soon as possible.
    pub fn forward(&self, image: &Tensor4<T>) -> Result<BranchOutputs<T>> {
        Ok(self.forward_impl(image, false)?.0)
    }

    /// Forward pass that also records what [`Network::backward`] needs.
    pub fn forward_with_trace(&self, image: &Tensor4<T>) -> Result<(BranchOutputs<T>, Trace<T>)> {
        let (out, trace) = self.forward_impl(image, true)?;
        Ok((out, trace.expect("trace requested")))
    }

    /// Runs each batch item independently and restacks the results.
    pub fn forward_batch(&self, images: &Tensor4<T>, mode: ExecMode) -> Result<BranchOutputs<T>> {
        let n = images.shape().n;
        let parts = par::map_indexed(mode, n, |i| self.forward(&images.take_sample(i)));
        let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
        let fused = Tensor4::stack(&parts.iter().map(|p| p.fused.clone()).collect::<Vec<_>>())?;
        let mut branches = Vec::new();
        for (k, (scale, _)) in parts[0].branches.iter().enumerate() {
            let maps: Vec<_> = parts.iter().map(|p| p.branches[k].1.clone()).collect();
            branches.push((*scale, Tensor4::stack(&maps)?));
        }
        Ok(BranchOutputs { branches, fused })
    }

    fn forward_impl(&self, x: &Tensor4<T>, keep: bool) -> Result<(BranchOutputs<T>, Option<Trace<T>>)> {
        self.check_input(x.shape())?;
        let topo = &self.topology;
        let mut outputs: Vec<Option<Tensor4<T>>> = vec![None; self.params.len()];

        // Pyramid: output of the second layer of each scale.
        let mut scales: Vec<Tensor4<T>> = Vec::with_capacity(topo.down.len());
        for [a, b] in &topo.down {
            let prev = scales.last().unwrap_or(x);
            let mid = self.run(*a, prev)?;
            let out = self.run(*b, &mid)?;
            if keep {
                outputs[*a] = Some(mid);
                outputs[*b] = Some(out.clone());
            }
            scales.push(out);
        }

        let mut maps = Vec::new();
        let mut details = Vec::new();
        let mut features = Vec::new();
        for br in &topo.branches {
            let base = &scales[br.scale - 1];
            let mut h = base.clone();
            for &i in &br.cascade {
                h = self.run(i, &h)?;
                if keep {
                    outputs[i] = Some(h.clone());
                }
            }
            if self.config.skip_in_branch {
                add_channels_prefix(&mut h, base)?;
            }
            if keep {
                features.push(h.clone());
            }
            for &i in &br.upsample {
                h = self.run(i, &h)?;
                if keep {
                    outputs[i] = Some(h.clone());
                }
            }
            if let Some(i) = br.reduce {
                h = self.run(i, &h)?;
                if keep {
                    outputs[i] = Some(h.clone());
                }
            }
            match br.output {
                Some(i) => {
                    let m = self.run(i, &h)?;
                    if keep {
                        outputs[i] = Some(m.clone());
                    }
                    maps.push((br.scale, m));
                }
                None => details.push(h),
            }
        }
        drop(scales);

        let (fused, concat) = match &topo.fusion {
            None => {
                let mut iter = maps.iter();
                let mut fused = iter.next().expect("at least one branch").1.clone();
                for (_, m) in iter {
                    fused.add_assign(m)?;
                }
                (fused, None)
            }
            Some(f) => {
                let cat = Tensor4::concat_channels(&details.iter().collect::<Vec<_>>())?;
                let a = self.run(f.convs[0], &cat)?;
                let b = self.run(f.convs[1], &a)?;
                let out = self.run(f.output, &b)?;
                if keep {
                    outputs[f.convs[0]] = Some(a);
                    outputs[f.convs[1]] = Some(b);
                    outputs[f.output] = Some(out.clone());
                }
                (out, keep.then_some(cat))
            }
        };

        let trace = keep.then(|| Trace { input: x.clone(), outputs, features, concat });
        Ok((BranchOutputs { branches: maps, fused }, trace))
    }

    fn recorded<'a>(&self, trace: &'a Trace<T>, i: usize) -> &'a Tensor4<T> {
        trace.outputs[i].as_ref().expect("layer output recorded in trace")
    }

    /// Gradients of all parameters given `dL/dfused`.
    pub fn backward(&self, trace: &Trace<T>, grad_fused: &Tensor4<T>) -> Result<NetGrads<T>> {
        let topo = &self.topology;
        let fused_shape = match (&topo.fusion, topo.branches.first()) {
            (Some(f), _) => self.recorded(trace, f.output).shape(),
            (None, Some(b)) => self.recorded(trace, b.output.expect("sum fusion output")).shape(),
            (None, None) => unreachable!("validated configs have a branch"),
        };
        fused_shape.check_eq(&grad_fused.shape(), "gradient of fused output")?;

        let mut grads = NetGrads::zeros_like(self);
        let mut scale_grads: Vec<Option<Tensor4<T>>> = vec![None; topo.down.len()];
        let scale_out = |s: usize| self.recorded(trace, topo.down[s - 1][1]);

        // Gradient arriving at each branch's last pre-fusion tensor.
        let mut branch_grads: Vec<Tensor4<T>> = match &topo.fusion {
            None => vec![grad_fused.clone(); topo.branches.len()],
            Some(f) => {
                let cat = trace.concat.as_ref().expect("concat recorded");
                let a = self.recorded(trace, f.convs[0]);
                let b = self.recorded(trace, f.convs[1]);
                let out = self.recorded(trace, f.output);
                let (g, gp) = self.run_backward(f.output, b, out, grad_fused.clone(), true)?;
                grads.layers[f.output] = gp;
                let (g, gp) = self.run_backward(f.convs[1], a, b, g.unwrap(), true)?;
                grads.layers[f.convs[1]] = gp;
                let (g, gp) = self.run_backward(f.convs[0], cat, a, g.unwrap(), true)?;
                grads.layers[f.convs[0]] = gp;
                let widths = vec![self.config.detail_channels(); topo.branches.len()];
                g.unwrap().split_channels(&widths)?
            }
        };

        for (k, br) in topo.branches.iter().enumerate().rev() {
            let mut g = std::mem::replace(&mut branch_grads[k], Tensor4::zeros(Shape::new(0, 0, 0, 0)));
            let feature = &trace.features[k];
            // Walk back through output/reduce and the upsampling chain.
            let mut chain: Vec<usize> = br.upsample.clone();
            chain.extend(br.reduce);
            chain.extend(br.output);
            for (pos, &i) in chain.iter().enumerate().rev() {
                let input = if pos == 0 { feature } else { self.recorded(trace, chain[pos - 1]) };
                let (gi, gp) = self.run_backward(i, input, self.recorded(trace, i), g, true)?;
                grads.layers[i] = gp;
                g = gi.unwrap();
            }
            let base = scale_out(br.scale);
            let mut g_base = Tensor4::zeros(base.shape());
            if self.config.skip_in_branch {
                add_channels_prefix_rev(&mut g_base, &g)?;
            }
            for (pos, &i) in br.cascade.iter().enumerate().rev() {
                let input = if pos == 0 { base } else { self.recorded(trace, br.cascade[pos - 1]) };
                let (gi, gp) = self.run_backward(i, input, self.recorded(trace, i), g, true)?;
                grads.layers[i] = gp;
                g = gi.unwrap();
            }
            g_base.add_assign(&g)?;
            accumulate(&mut scale_grads[br.scale - 1], g_base)?;
        }

        for s in (1..=topo.down.len()).rev() {
            let [a, b] = topo.down[s - 1];
            let Some(g) = scale_grads[s - 1].take() else {
                continue;
            };
            let mid = self.recorded(trace, a);
            let (gi, gp) = self.run_backward(b, mid, self.recorded(trace, b), g, true)?;
            grads.layers[b] = gp;
            let input = if s == 1 { &trace.input } else { scale_out(s - 1) };
            let (gi, gp) = self.run_backward(a, input, mid, gi.unwrap(), s > 1)?;
            grads.layers[a] = gp;
            if s > 1 {
                accumulate(&mut scale_grads[s - 2], gi.unwrap())?;
            }
        }
        Ok(grads)
    }

    /// Parameter blocks paired with gradients, in manifest order.
    pub fn param_blocks<'a>(&'a mut self, grads: &'a NetGrads<T>) -> Vec<crate::optim::ParamBlock<'a, T>> {
        let mut blocks = Vec::with_capacity(2 * self.params.len());
        for ((p, g), names) in self.params.iter_mut().zip(&grads.layers).zip(&self.block_names) {
            blocks.push(crate::optim::ParamBlock {
                name: &names[0],
                values: p.weight.data_mut(),
                grad: g.weight.data(),
            });
            blocks.push(crate::optim::ParamBlock { name: &names[1], values: &mut p.bias, grad: &g.bias });
        }
        blocks
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor4<T>>, g: Tensor4<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// `dst[:, :src.c] += src`: the skip connection with zero-padded channels.
fn add_channels_prefix<T: Scalar>(dst: &mut Tensor4<T>, src: &Tensor4<T>) -> Result<()> {
    let (d, s) = (dst.shape(), src.shape());
    if s.c > d.c || (s.n, s.h, s.w) != (d.n, d.h, d.w) {
        return Err(Error::shape(format!("skip connection from {s} into {d}")));
    }
    let len = s.sample_len();
    for n in 0..s.n {
        for (a, &b) in dst.sample_mut(n)[..len].iter_mut().zip(src.sample(n)) {
            *a += b;
        }
    }
    Ok(())
}

/// Adjoint of [`add_channels_prefix`]: `dst += grad[:, :dst.c]`.
fn add_channels_prefix_rev<T: Scalar>(dst: &mut Tensor4<T>, grad: &Tensor4<T>) -> Result<()> {
    let len = dst.shape().sample_len();
    for n in 0..dst.shape().n {
        let g = &grad.sample(n)[..len];
        for (a, &b) in dst.sample_mut(n).iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok(())
}

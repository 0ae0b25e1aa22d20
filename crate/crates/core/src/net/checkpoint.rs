//! Checkpoint container.
//!
//! A UTF-8 header of `key = value` lines describes the configuration, the
//! seed and one `layer = ...` manifest line per layer. The header ends with a
//! line reading `end`; after it come the parameter blocks as little-endian
//! 32-bit floats, each layer's weights followed by its biases, in manifest
//! order.
//!
//! ```text
//! moire-checkpoint
//! version = 1
//! seed = 7
//! branches = 1,2,3,4,5
//! ...
//! layer = down1.conv0 conv 32x3x3x3 bias=32 stride=1 pad=1 relu=1
//! end
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::config::{Fusion, Init, NetworkConfig};
use super::network::Network;
use super::plan::{LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "moire-checkpoint";

fn manifest_line<T: Scalar>(spec: &LayerSpec, net: &Network<T>, i: usize) -> String {
    let ws = net.params()[i].weight.shape();
    let kind = match spec.kind {
        LayerKind::Conv => "conv",
        LayerKind::Deconv => "deconv",
    };
    format!(
        "{} {kind} {}x{}x{}x{} bias={} stride={} pad={} relu={}",
        spec.name,
        ws.n,
        ws.c,
        ws.h,
        ws.w,
        spec.out_channels,
        spec.stride,
        spec.padding,
        spec.relu as u8
    )
}

pub fn write_checkpoint<T: Scalar, W: Write>(net: &Network<T>, mut out: W) -> Result<()> {
    let c = net.config();
    let branches: Vec<String> = c.branches.iter().map(|b| b.to_string()).collect();
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    let mut kv = |k: &str, v: String| header.push_str(&format!("{k} = {v}\n"));
    kv("version", CHECKPOINT_VERSION.to_string());
    kv("seed", net.seed().to_string());
    kv("branches", branches.join(","));
    kv("cascade_depth", c.cascade_depth.to_string());
    kv("cascade_channels", c.cascade_channels.to_string());
    kv("fusion", c.fusion.to_string());
    kv("skip_in_branch", c.skip_in_branch.to_string());
    kv("input_channels", c.input_channels.to_string());
    kv("narrow_channels", c.narrow_channels.to_string());
    kv("init", c.init.to_string());
    kv("params", net.param_count().to_string());
    for (i, spec) in net.specs().iter().enumerate() {
        kv("layer", manifest_line(spec, net, i));
    }
    header.push_str("end\n");
    out.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(4 * net.param_count());
    for p in net.params() {
        for v in p.weight.data().iter().chain(&p.bias) {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(net, std::io::BufWriter::new(file))
}

fn parse<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse().map_err(|_| Error::format("checkpoint header", format!("bad value `{v}` for `{key}`")))
}

pub fn read_checkpoint<T: Scalar, R: Read>(input: R) -> Result<Network<T>> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::format("checkpoint", "missing magic line"));
    }
    let mut config = NetworkConfig::default();
    let mut version = None;
    let mut seed = 0u64;
    let mut layers = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::format("checkpoint", "header not terminated by `end`"));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l
            .split_once(" = ")
            .ok_or_else(|| Error::format("checkpoint header", format!("line `{l}`")))?;
        match k {
            "version" => version = Some(parse::<u32>(k, v)?),
            "seed" => seed = parse(k, v)?,
            "branches" => {
                config.branches = v.split(',').map(|b| parse(k, b)).collect::<Result<_>>()?;
            }
            "cascade_depth" => config.cascade_depth = parse(k, v)?,
            "cascade_channels" => config.cascade_channels = parse(k, v)?,
            "fusion" => config.fusion = v.parse::<Fusion>()?,
            "skip_in_branch" => config.skip_in_branch = parse(k, v)?,
            "input_channels" => config.input_channels = parse(k, v)?,
            "narrow_channels" => config.narrow_channels = parse(k, v)?,
            "init" => config.init = v.parse::<Init>()?,
            "layer" => layers.push(v.to_string()),
            _ => {}
        }
    }
    match version {
        Some(CHECKPOINT_VERSION) => {}
        Some(v) => return Err(Error::format("checkpoint", format!("unsupported version {v}"))),
        None => return Err(Error::format("checkpoint", "missing version field")),
    }

    let mut net = Network::<T>::zeros(&config)?;
    net.set_seed(seed);
    let expected: Vec<String> =
        net.specs().iter().enumerate().map(|(i, s)| manifest_line(s, &net, i)).collect();
    if expected != layers {
        return Err(Error::format("checkpoint", "layer manifest does not match the configuration"));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * net.param_count() {
        return Err(Error::format(
            "checkpoint",
            format!("{} payload bytes for {} parameters", bytes.len(), net.param_count()),
        ));
    }
    let mut values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for p in net.params_mut() {
        for v in p.weight.data_mut().iter_mut().chain(p.bias.iter_mut()) {
            *v = T::lit(values.next().expect("length checked") as f64);
        }
    }
    Ok(net)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_network, Variant};
    use crate::tensor::{Shape, Tensor4};

    #[test]
    fn round_trip_is_bit_identical_for_f32() {
        for v in [Variant::Default, Variant::Concate, Variant::B135] {
            let cfg = NetworkConfig { cascade_channels: 8, ..NetworkConfig::variant(v) };
            let net = build_network::<f32>(&cfg, 11).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&net, &mut buf).unwrap();
            let back: Network<f32> = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back, net);
            let x = Tensor4::from_fn(Shape::new(1, 3, 16, 16), |_, c, y, x| ((c + 2 * y + x) % 9) as f32 / 9.0);
            let a = net.forward(&x).unwrap().fused;
            let b = back.forward(&x).unwrap().fused;
            assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn rejects_missing_version_and_corrupt_payload() {
        let net = build_network::<f32>(&NetworkConfig { branches: vec![1], ..Default::default() }, 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf).replace("version = 1\n", "");
        assert!(read_checkpoint::<f32, _>(text.as_bytes()).is_err());
        buf.pop();
        assert!(read_checkpoint::<f32, _>(buf.as_slice()).is_err());
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use moire_core::align::{correct_intensity, ingest, verify_pair, AlignConfig, Threshold};
use moire_core::dataset::{read_manifest, DatasetPair, Split};
use moire_core::metrics::{CorpusSummary, QualityReport};
use moire_core::net::{
    build_network, inspect_branches, load_checkpoint, param_count, save_checkpoint, Network, NetworkConfig,
};
use moire_core::par::{self, ExecMode};
use moire_core::synth::{load_references, make_dataset, ReferenceSource};
use moire_core::train::{train, TrainConfig};
use moire_core::Image;

use crate::manifest::RunManifest;
use crate::{Cli, Command, Failure, Global};

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    let mode = par::configure_threads(cli.global.threads);
    let g = &cli.global;
    match cli.command {
        Command::SynthDataset { out, pairs, size, references } => synth_dataset(g, mode, &out, pairs, size, references),
        Command::Align { pairs, out, threshold, eta } => align(g, mode, &pairs, &out, threshold, eta),
        Command::Verify { pairs, eta } => verify(g, &pairs, eta),
        Command::Train { pairs, out } => train_cmd(g, mode, &pairs, &out),
        Command::Infer { checkpoint, input, out } => infer(g, &checkpoint, &input, &out),
        Command::Eval { checkpoint, pairs, split } => eval(&checkpoint, &pairs, &split, mode),
        Command::InspectBranches { checkpoint, input, out, amplification } => {
            inspect(g, &checkpoint, &input, &out, amplification)
        }
        Command::ParamCount => {
            println!("{}", param_count(&base_config(g, None)?)?);
            Ok(())
        }
    }
}

fn manifest(g: &Global, subcommand: &str, inputs: &[&Path], outputs: &[&Path]) -> RunManifest {
    RunManifest {
        subcommand: subcommand.into(),
        config: g.config.clone(),
        seed: g.seed,
        threads: g.threads,
        variant: g.variant.name().into(),
        grayscale: g.grayscale,
        inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
        outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
    }
}

/// Network config from the global flags, with `net.*` overrides from the
/// config file applied when a training config is also requested.
fn base_config(g: &Global, train_cfg: Option<&mut TrainConfig>) -> Result<NetworkConfig, Failure> {
    let mut net = NetworkConfig::variant(g.variant);
    if g.grayscale {
        net = net.grayscale();
    }
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = TrainConfig::from_text(&text, &mut net)?;
        if let Some(tc) = train_cfg {
            *tc = parsed;
        }
    }
    net.validate()?;
    Ok(net)
}

fn synth_dataset(
    g: &Global,
    mode: ExecMode,
    out: &Path,
    pairs: usize,
    size: usize,
    references: Option<PathBuf>,
) -> Outcome {
    if pairs == 0 || size == 0 {
        return Err(Failure::usage("--pairs and --size must be positive"));
    }
    let source = match &references {
        Some(dir) => ReferenceSource::Images(load_references(dir)?),
        None => ReferenceSource::Procedural,
    };
    let entries = make_dataset(&source, out, pairs, size, g.seed, mode)?;
    info!("wrote {} pairs to {}", entries.len(), out.display());
    let inputs: Vec<&Path> = references.iter().map(|p| p.as_path()).collect();
    manifest(g, "synth-dataset", &inputs, &[&out.join("pairs.tsv")]).write(out)?;
    Ok(())
}

fn align(g: &Global, mode: ExecMode, pairs: &Path, out: &Path, threshold: Option<f64>, eta: f64) -> Outcome {
    let cfg = AlignConfig {
        threshold: threshold.map_or(Threshold::Otsu, Threshold::Fixed),
        eta,
        ..AlignConfig::default()
    };
    let summary = ingest(pairs, out, &cfg, g.seed, mode)?;
    let accepted = summary.records.iter().filter(|r| r.accepted).count();
    info!("{accepted}/{} pairs accepted", summary.records.len());
    manifest(g, "align", &[pairs], &[&summary.manifest, &summary.report]).write(out)?;
    Ok(())
}

fn verify(g: &Global, pairs: &Path, eta: f64) -> Outcome {
    let entries = read_manifest(pairs)?;
    let channels = if g.grayscale { 1 } else { 3 };
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(w, "id\tpsnr\tstatus")?;
    for e in &entries {
        let pair = DatasetPair::load(e, channels)?;
        let v = verify_pair(&pair.input, &pair.reference, eta)?;
        writeln!(w, "{}\t{:.4}\t{}", e.id, v.psnr, if v.accepted { "accept" } else { "reject" })?;
    }
    w.flush()?;
    Ok(())
}

fn load_pairs(path: &Path, channels: usize) -> Result<Vec<DatasetPair>, Failure> {
    Ok(read_manifest(path)?
        .iter()
        .map(|e| DatasetPair::load(e, channels))
        .collect::<moire_core::Result<Vec<_>>>()?)
}

fn train_cmd(g: &Global, mode: ExecMode, pairs: &Path, out: &Path) -> Outcome {
    let mut tc = TrainConfig::default();
    let net_cfg = base_config(g, Some(&mut tc))?;
    if g.config.is_none() {
        tc.seed = g.seed;
    }
    std::fs::create_dir_all(out)?;
    tc.failure_checkpoint = Some(out.join("failure.ckpt"));
    tc.validate()?;

    let all = load_pairs(pairs, net_cfg.input_channels)?;
    let (train_set, val_set): (Vec<_>, Vec<_>) = {
        let t: Vec<DatasetPair> = all.iter().filter(|p| p.split == Split::Train).cloned().collect();
        let v: Vec<DatasetPair> = all.iter().filter(|p| p.split == Split::Val).cloned().collect();
        (t, v)
    };
    if train_set.is_empty() {
        return Err(Failure { code: 2, message: format!("{} has no train pairs", pairs.display()) });
    }
    info!("training on {} pairs, validating on {}", train_set.len(), val_set.len());

    let net = build_network::<f32>(&net_cfg, g.seed)?;
    let mut log = BufWriter::new(File::create(out.join("train_log.tsv"))?);
    writeln!(log, "epoch\ttrain_loss\tval_loss\tlr")?;
    let outcome = train(net, &train_set, &val_set, &tc, mode, |r, _| {
        info!("{r}");
        let val = r.val_loss.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(log, "{}\t{:.6}\t{}\t{:e}", r.epoch, r.train_loss, val, r.learning_rate)?;
        log.flush()?;
        Ok(())
    })?;
    let best = out.join("best.ckpt");
    let last = out.join("last.ckpt");
    save_checkpoint(&outcome.best, &best)?;
    save_checkpoint(&outcome.last, &last)?;
    info!("best epoch {}", outcome.best_epoch);
    manifest(g, "train", &[pairs], &[&best, &last, &out.join("train_log.tsv")]).write(out)?;
    Ok(())
}

/// Runs the network on an image of any size: pads to the required divisor by
/// edge replication, then crops the output back.
fn restore(net: &Network<f32>, image: &Image) -> Result<Image, Failure> {
    let (c, h, w) = image.dims();
    let d = net.config().required_divisor();
    let (ph, pw) = (h.div_ceil(d) * d, w.div_ceil(d) * d);
    let padded = Image::from_fn(c, ph, pw, |ch, y, x| image.get(ch, y.min(h - 1), x.min(w - 1)));
    let out = net.forward(&padded.to_tensor::<f32>())?;
    Ok(Image::from_tensor(&out.fused, 0).crop(0, 0, w, h)?.clamped())
}

fn load_input(net: &Network<f32>, path: &Path) -> Result<Image, Failure> {
    Ok(Image::load(path)?.with_channels(net.config().input_channels))
}

fn infer(g: &Global, checkpoint: &Path, input: &Path, out: &Path) -> Outcome {
    let net: Network<f32> = load_checkpoint(checkpoint)?;
    let image = load_input(&net, input)?;
    restore(&net, &image)?.save(out)?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    manifest(g, "infer", &[checkpoint, input], &[out]).write(dir)?;
    Ok(())
}

fn eval(checkpoint: &Path, pairs: &Path, split: &str, mode: ExecMode) -> Outcome {
    let net: Network<f32> = load_checkpoint(checkpoint)?;
    let wanted: Option<Split> = match split {
        "all" => None,
        s => Some(s.parse().map_err(|_| Failure::usage(format!("unknown split `{s}`")))?),
    };
    let selected: Vec<DatasetPair> = load_pairs(pairs, net.config().input_channels)?
        .into_iter()
        .filter(|p| wanted.is_none_or(|s| p.split == s))
        .collect();
    if selected.is_empty() {
        return Err(Failure { code: 2, message: format!("no pairs in split `{split}`") });
    }
    let reports = par::map_slice(mode, &selected, |p| -> Result<_, Failure> {
        let restored = restore(&net, &p.input)?;
        let baseline = correct_intensity(&p.input, &p.reference)?.image;
        Ok((QualityReport::measure(&restored, &p.reference)?, QualityReport::measure(&baseline, &p.reference)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(w, "id\tinput_psnr\toutput_psnr\toutput_ssim\toutput_mse")?;
    for (p, (out, base)) in selected.iter().zip(&reports) {
        writeln!(w, "{}\t{:.4}\t{:.4}\t{:.4}\t{:.6}", p.id, base.psnr, out.psnr, out.ssim, out.mse)?;
    }
    write!(w, "{}", CorpusSummary::from_reports(&reports).table_rows())?;
    w.flush()?;
    Ok(())
}

fn inspect(g: &Global, checkpoint: &Path, input: &Path, out: &Path, amplification: f64) -> Outcome {
    let net: Network<f32> = load_checkpoint(checkpoint)?;
    let image = load_input(&net, input)?;
    let d = net.config().required_divisor();
    let (_, h, w) = image.dims();
    let image = image.crop(0, 0, w / d * d, h / d * d)?;
    std::fs::create_dir_all(out)?;
    let views = inspect_branches(&net, &image.to_tensor::<f32>(), amplification)?;
    let mut written = Vec::new();
    for v in &views {
        let raw = out.join(v.raw_file_name());
        let amp = out.join(v.amplified_file_name());
        v.raw.save(&raw)?;
        v.amplified.save(&amp)?;
        written.push(raw);
        written.push(amp);
    }
    let outputs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    manifest(g, "inspect-branches", &[checkpoint, input], &outputs).write(out)?;
    Ok(())
}

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::loss::{l2_patch_loss_with, LossNormalization};
use super::patches::{center_patch, sample_patches};
use super::schedule::PlateauSchedule;
use crate::dataset::DatasetPair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{save_checkpoint, NetGrads, Network};
use crate::optim::{AdamConfig, AdamState};
use crate::par::{self, ExecMode};
use crate::seed;
use crate::tensor::Scalar;

/// One line of the progress log.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub learning_rate: f64,
}

impl std::fmt::Display for LossReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let val = self.val_loss.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        write!(
            f,
            "epoch={}\ttrain_loss={:.6}\tval_loss={val}\tlr={:e}",
            self.epoch, self.train_loss, self.learning_rate
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest monitored loss.
    pub best: Network<T>,
    pub best_epoch: usize,
    pub last: Network<T>,
    pub reports: Vec<LossReport>,
}

/// Loss and summed gradients of one batch of patch pairs.
fn batch_gradients<T: Scalar>(
    net: &Network<T>,
    patches: &[(Image, Image)],
    norm: LossNormalization,
    mode: ExecMode,
) -> Result<(f64, NetGrads<T>)> {
    let per_sample = par::map_slice(mode, patches, |(input, target)| -> Result<(f64, NetGrads<T>)> {
        let (out, trace) = net.forward_with_trace(&input.to_tensor::<T>())?;
        let (loss, grad) = l2_patch_loss_with(&out.fused, &target.to_tensor::<T>(), norm)?;
        Ok((loss, net.backward(&trace, &grad)?))
    });
    let mut total = 0.0;
    let mut grads = NetGrads::zeros_like(net);
    for r in per_sample {
        let (l, g) = r?;
        total += l;
        grads.add_assign(&g);
    }
    let nb = patches.len() as f64;
    grads.scale(T::lit(1.0 / nb));
    Ok((total / nb, grads))
}

/// Mean centre-crop patch loss over `pairs`; `None` if no pair is large
/// enough.
pub fn evaluate_loss<T: Scalar>(
    net: &Network<T>,
    pairs: &[DatasetPair],
    patch_size: usize,
    norm: LossNormalization,
    mode: ExecMode,
) -> Result<Option<f64>> {
    let losses = par::map_slice(mode, pairs, |pair| -> Result<Option<f64>> {
        let Some((input, target)) = center_patch(pair, patch_size)? else {
            return Ok(None);
        };
        let out = net.forward(&input.to_tensor::<T>())?;
        Ok(Some(l2_patch_loss_with(&out.fused, &target.to_tensor::<T>(), norm)?.0))
    });
    let mut sum = 0.0;
    let mut n = 0usize;
    for l in losses {
        if let Some(l) = l? {
            sum += l;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

fn diverged<T: Scalar>(cfg: &TrainConfig, last_good: &Network<T>, epoch: usize, detail: String) -> Error {
    if let Some(path) = &cfg.failure_checkpoint {
        match save_checkpoint(last_good, path) {
            Ok(()) => log::error!("training diverged; last finite parameters saved to {}", path.display()),
            Err(e) => log::error!("training diverged and the checkpoint could not be written: {e}"),
        }
    }
    Error::Diverged { epoch, detail }
}

/// Trains `net` on random patch pairs from `train_set`.
///
/// Each epoch shuffles the pairs and visits them in batches of
/// `batch_size`. The learning rate is divided by `lr_decay_factor` after
/// `plateau_patience` epochs without a new minimum of the validation loss
/// (the training loss when `val_set` is empty). Training stops after
/// `max_epochs` or once the rate drops below `min_learning_rate`.
/// `on_epoch` sees every report together with the current parameters.
pub fn train<T: Scalar>(
    mut net: Network<T>,
    train_set: &[DatasetPair],
    val_set: &[DatasetPair],
    cfg: &TrainConfig,
    mode: ExecMode,
    mut on_epoch: impl FnMut(&LossReport, &Network<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let divisor = net.config().required_divisor();
    if cfg.patch_size % divisor != 0 {
        return Err(Error::config(format!(
            "patch_size {} must be a multiple of {divisor} for this network",
            cfg.patch_size
        )));
    }
    let mut adam = AdamState::<T>::new();
    let mut schedule = PlateauSchedule::new(cfg.learning_rate, cfg.lr_decay_factor, cfg.plateau_patience);
    let mut reports = Vec::new();
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut last_good = net.clone();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = seed::rng(cfg.seed, "epoch", epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let hyper = AdamConfig { lr: schedule.lr(), weight_decay: cfg.weight_decay, ..AdamConfig::default() };

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut patches = Vec::with_capacity(chunk.len());
            for &i in chunk {
                if let Some(p) = sample_patches(&train_set[i], cfg.patch_size, &mut rng)? {
                    patches.push(p);
                }
            }
            if patches.is_empty() {
                continue;
            }
            let (loss, grads) = batch_gradients(&net, &patches, cfg.loss, mode)?;
            if !loss.is_finite() {
                return Err(diverged(cfg, &last_good, epoch, format!("batch loss {loss}")));
            }
            if let Err(e) = adam.step(&mut net.param_blocks(&grads), &hyper) {
                return Err(match e {
                    Error::NonFinite { block, detail } => diverged(cfg, &last_good, epoch, format!("{block}: {detail}")),
                    other => other,
                });
            }
            loss_sum += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::config(format!("no training pair is at least {0}x{0}", cfg.patch_size)));
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = evaluate_loss(&net, val_set, cfg.patch_size, cfg.loss, mode)?;
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(diverged(cfg, &last_good, epoch, format!("epoch loss {monitored}")));
        }
        let report = LossReport { epoch, train_loss, val_loss, learning_rate: schedule.lr() };
        log::info!("{report}");
        if schedule.observe(monitored) {
            best = net.clone();
            best_epoch = epoch;
        }
        last_good = net.clone();
        on_epoch(&report, &net)?;
        reports.push(report);
        if schedule.lr() < cfg.min_learning_rate {
            log::info!("learning rate {:e} below floor; stopping", schedule.lr());
            break;
        }
    }
    Ok(TrainOutcome { best, best_epoch, last: net, reports })
}

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Stage, TrainConfig, TrainError};
use crate::acc::{allocate_with_masking, decide, image_budget, LinkConfig};
use crate::channel::{equalize, transmit, ChannelError, ChannelState};
use crate::dataset::{LabeledImage, TaskModel};
use crate::gjscc::{codec_backward, codec_forward, patchify, CodecDims, CodecParams, GjsccError, PatchGrid};
use crate::losses::{CodecLoss, LossNets};
use crate::numerics::{derive_rng, derive_seed, fmt_sig6, AdamConfig, AdamState, Parameters, SimRng};

/// Random patch weights for pre-training.
///
/// `round(η·M)` positions, chosen uniformly without replacement, get weights
/// in `[0, ε_th)`; the rest get weights in `(ε_th, 1]`, so thresholding at
/// `ε_th` recovers the partition. At least one position is retained.
pub fn random_mask_weights<R: Rng + ?Sized>(
    patch_count: usize,
    mask_ratio: f64,
    epsilon_th: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let masked_count = ((mask_ratio * patch_count as f64).round() as usize).min(patch_count - 1);
    let masked = index::sample(rng, patch_count, masked_count);
    let mut is_masked = vec![false; patch_count];
    masked.iter().for_each(|m| is_masked[m] = true);
    let mut gamma = Vec::with_capacity(patch_count);
    let mut retained = Vec::with_capacity(patch_count - masked_count);
    for (m, &hidden) in is_masked.iter().enumerate() {
        if hidden {
            gamma.push(rng.random::<f64>() * epsilon_th);
        } else {
            // 1 − U[0,1) lies in (0, 1]
            gamma.push(epsilon_th + (1.0 - rng.random::<f64>()) * (1.0 - epsilon_th));
            retained.push(m);
        }
    }
    (gamma, retained)
}

/// Per-epoch means of the loss components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    pub l_reg: f64,
    pub l_fea: f64,
    pub gan_generator_term: f64,
    pub discriminator_term: f64,
    pub total: f64,
    pub frames_lost: usize,
    pub mean_sum_delta: f64,
}

pub struct TrainOutcome {
    pub params: CodecParams,
    pub nets: LossNets,
    pub log: Vec<EpochLog>,
    /// Every derived seed used, by purpose.
    pub seeds: BTreeMap<String, u64>,
}

/// Called after each epoch with the current state.
pub type EpochObserver<'a> = dyn FnMut(&EpochLog, &CodecParams, &LossNets) -> Result<(), String> + 'a;

struct Plan {
    gamma: Vec<f64>,
    retained: Vec<usize>,
    delta: Vec<usize>,
}

struct ImageResult {
    loss: CodecLoss,
    grads: CodecParams,
    original: PatchGrid,
    output: PatchGrid,
    sum_delta: usize,
}

fn stage_label(stage: Stage) -> &'static str {
    match stage {
        Stage::Pretrain => "stage1",
        Stage::Finetune => "stage2",
    }
}

fn run_link<'a>(
    config: &'a TrainConfig,
    link: &'a LinkConfig,
    mut rng: SimRng,
) -> impl FnOnce(&[Complex64]) -> Result<Vec<Complex64>, ChannelError> + 'a {
    move |x| match config.channel.mode() {
        None => Ok(x.to_vec()),
        Some(mode) => {
            let state = ChannelState::draw(mode, link.fading_power, link.noise_power, &mut rng);
            equalize(&transmit(x, &state, &mut rng), state.h)
        }
    }
}

fn run_stage<P>(
    images: &[LabeledImage],
    mut params: CodecParams,
    mut nets: LossNets,
    link: &LinkConfig,
    config: &TrainConfig,
    planner: P,
    mut observer: Option<&mut EpochObserver<'_>>,
) -> Result<TrainOutcome, TrainError>
where
    P: Fn(&LabeledImage, &LinkConfig, &mut SimRng) -> Result<Plan, TrainError> + Sync,
{
    config.validate()?;
    link.validate()?;
    if images.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let dims = params.dims;
    let label = stage_label(config.stage);
    let stage_seed = derive_seed(config.seed, label, 0);
    let mut adam = AdamState::for_params(AdamConfig::with_learning_rate(config.learning_rate), &params);
    let mut disc_adam = AdamState::for_params(AdamConfig::with_learning_rate(config.disc_learning_rate), &nets.disc);
    let train_disc = config.lambdas.adversarial != 0.0;
    let base_link = link.with_snr_db(config.train_snr_db);
    let batches = images.len().div_ceil(config.batch_size);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut derive_rng(stage_seed, "shuffle", epoch as u64));
        let mut sums = [0.0f64; 4];
        let (mut disc_sum, mut seen, mut lost, mut delta_sum) = (0.0, 0usize, 0usize, 0usize);

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_index = (epoch * batches + b) as u64;
            let batch_seed = derive_seed(stage_seed, "batch", batch_index);
            let mut batch_rng = derive_rng(batch_seed, "delay", 0);
            let delay = config.train_delays_s[batch_rng.random_range(0..config.train_delays_s.len())];
            let batch_link = base_link.with_delay(delay);
            let budget = image_budget(&batch_link);

            let results: Vec<Result<Option<ImageResult>, TrainError>> = chunk
                .par_iter()
                .enumerate()
                .map(|(k, &idx)| {
                    let image = &images[idx];
                    let mut plan_rng = derive_rng(batch_seed, "plan", k as u64);
                    let plan = planner(image, &batch_link, &mut plan_rng)?;
                    let sum_delta: usize = plan.delta.iter().sum();
                    assert!(sum_delta as u64 <= budget, "Σδ = {sum_delta} exceeds budget {budget}");
                    let original = patchify(&image.pixels, dims.patch_side)?;
                    let channel_rng = derive_rng(batch_seed, "channel", k as u64);
                    let fwd = match codec_forward(
                        &params,
                        &original,
                        &plan.retained,
                        &plan.delta,
                        run_link(config, &batch_link, channel_rng),
                    ) {
                        Ok(f) => f,
                        Err(GjsccError::Channel(ChannelError::DeepFade { .. })) => return Ok(None),
                        Err(e) => return Err(e.into()),
                    };
                    let loss = nets.codec_loss(&original, &fwd.output, &plan.gamma)?;
                    let grads = codec_backward(&params, &fwd, &loss.d_output);
                    Ok(Some(ImageResult {
                        loss,
                        grads,
                        original,
                        output: fwd.output,
                        sum_delta,
                    }))
                })
                .collect();

            let mut grads = params.zeros_like();
            let mut originals = Vec::with_capacity(chunk.len());
            let mut outputs = Vec::with_capacity(chunk.len());
            let mut batch_total = 0.0;
            for r in results {
                let Some(r) = r? else {
                    lost += 1;
                    continue;
                };
                grads.accumulate(&r.grads, 1.0);
                sums[0] += r.loss.l_reg;
                sums[1] += r.loss.l_fea;
                sums[2] += r.loss.generator_term;
                sums[3] += r.loss.total;
                batch_total += r.loss.total;
                delta_sum += r.sum_delta;
                originals.push(r.original);
                outputs.push(r.output);
            }
            if originals.is_empty() {
                return Err(TrainError::AllFramesLost { epoch, batch: b });
            }
            if !batch_total.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            seen += originals.len();
            grads.visit_mut(&mut |_, t| t.scale(1.0 / originals.len() as f64));
            adam.step(&mut params, &grads)?;

            let (terms, disc_grads) = nets.disc_gradients(&originals, &outputs)?;
            disc_sum += terms.discriminator_term;
            if train_disc {
                disc_adam.step(&mut nets.disc, &disc_grads)?;
            }
        }

        let n = seen as f64;
        let entry = EpochLog {
            stage: config.stage,
            epoch: epoch + 1,
            l_reg: sums[0] / n,
            l_fea: sums[1] / n,
            gan_generator_term: sums[2] / n,
            discriminator_term: disc_sum / batches as f64,
            total: sums[3] / n,
            frames_lost: lost,
            mean_sum_delta: delta_sum as f64 / n,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&entry, &params, &nets).map_err(TrainError::Observer)?;
        }
        log.push(entry);
    }

    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), config.seed);
    seeds.insert(label.to_string(), stage_seed);
    Ok(TrainOutcome { params, nets, log, seeds })
}

/// Seeds for fresh codec, loss network and discriminator parameters.
pub fn init_seeds(master: u64) -> BTreeMap<String, u64> {
    ["codec", "phi", "disc"]
        .iter()
        .map(|k| (k.to_string(), derive_seed(master, k, 0)))
        .collect()
}

/// Random-mask pre-training from freshly initialized parameters.
pub fn pretrain_stage1(
    images: &[LabeledImage],
    dims: CodecDims,
    link: &LinkConfig,
    config: &TrainConfig,
    observer: Option<&mut EpochObserver<'_>>,
) -> Result<TrainOutcome, TrainError> {
    if config.stage != Stage::Pretrain {
        return Err(TrainError::Config("pretrain_stage1 needs stage = pretrain".into()));
    }
    let seeds = init_seeds(config.seed);
    let params = CodecParams::new(dims, seeds["codec"])?;
    let nets = LossNets::new(seeds["phi"], seeds["disc"], config.lambdas, config.gan_form);
    let planner = |image: &LabeledImage, link: &LinkConfig, rng: &mut SimRng| {
        let _ = image;
        let (gamma, masked) = random_mask_weights(dims.patch_count(), config.mask_ratio, config.epsilon_th, rng);
        let (retained, alloc, _) = allocate_with_masking(&gamma, &masked, dims.token_dim, image_budget(link))?;
        Ok(Plan { gamma, retained, delta: alloc.delta })
    };
    let mut out = run_stage(images, params, nets, link, config, planner, observer)?;
    out.seeds.extend(seeds);
    Ok(out)
}

/// Fine-tuning with the controller choosing weights and rates per image.
/// The task model is only read.
pub fn finetune_stage2(
    images: &[LabeledImage],
    task_model: &TaskModel,
    params: CodecParams,
    mut nets: LossNets,
    link: &LinkConfig,
    config: &TrainConfig,
    observer: Option<&mut EpochObserver<'_>>,
) -> Result<TrainOutcome, TrainError> {
    if config.stage != Stage::Finetune {
        return Err(TrainError::Config("finetune_stage2 needs stage = finetune".into()));
    }
    nets.lambdas = config.lambdas;
    nets.gan_form = config.gan_form;
    let dims = params.dims;
    let acc = config.acc();
    let planner = |image: &LabeledImage, link: &LinkConfig, _: &mut SimRng| {
        let d = decide(&image.pixels, task_model, link, &dims, &acc)?;
        Ok(Plan {
            gamma: d.weights.gamma,
            retained: d.retained,
            delta: d.allocation.delta,
        })
    };
    run_stage(images, params, nets, link, config, planner, observer)
}

/// Trailing mean over `window` entries; one value per full window.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Columns: `epoch, L_reg, L_fea, gan_generator_term, discriminator_term, total`.
pub fn write_loss_log<W: Write>(log: &[EpochLog], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "L_reg", "L_fea", "gan_generator_term", "discriminator_term", "total"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            fmt_sig6(e.l_reg),
            fmt_sig6(e.l_fea),
            fmt_sig6(e.gan_generator_term),
            fmt_sig6(e.discriminator_term),
            fmt_sig6(e.total),
        ])?;
    }
    w.flush()?;
    Ok(())
}

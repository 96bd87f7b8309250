use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{CliError, SweepConfig};
use crate::acc::{decide, image_budget, AccConfig, AccRecord, LinkConfig};
use crate::channel::{average_power, equalize, transmit, ChannelError, ChannelMode, ChannelState};
use crate::dataset::{LabeledImage, TaskModel};
use crate::gjscc::{codec_forward, patchify, unpatchify, CodecParams, GjsccError};
use crate::losses::region_loss;
use crate::numerics::{derive_rng, derive_seed, fmt_sig6};

/// One `(SNR, delay)` cell, aggregated over the evaluated images.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub delay_s: f64,
    pub channel: ChannelMode,
    pub images: usize,
    pub accuracy: f64,
    pub accuracy_stderr: f64,
    pub recon_error: f64,
    pub recon_error_stderr: f64,
    pub mean_retained: f64,
    pub mean_sum_delta: f64,
    /// Real channel symbols per source pixel.
    pub bcr: f64,
    pub budget: u64,
    pub frames_lost: usize,
    pub dropped_for_budget: usize,
    /// Largest `|P − 1|` over every transmitted token.
    pub max_power_deviation: f64,
    pub cell_seed: u64,
}

pub const SWEEP_COLUMNS: [&str; 16] = [
    "snr_db",
    "delay_ms",
    "channel",
    "images",
    "accuracy",
    "accuracy_stderr",
    "recon_error",
    "recon_error_stderr",
    "mean_retained",
    "mean_sum_delta",
    "bcr",
    "budget",
    "frames_lost",
    "dropped_for_budget",
    "max_power_deviation",
    "cell_seed",
];

/// Controller decision for one image in one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionLine {
    pub image: usize,
    pub delay_s: f64,
    #[serde(flatten)]
    pub record: AccRecord,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

struct ImageOutcome {
    correct: bool,
    recon_error: Option<f64>,
    retained: usize,
    sum_delta: usize,
    dropped: usize,
    power_deviation: f64,
    record: Option<DecisionLine>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_image(
    index: usize,
    image: &LabeledImage,
    task: &TaskModel,
    params: &CodecParams,
    link: &LinkConfig,
    acc: &AccConfig,
    mode: ChannelMode,
    cell_seed: u64,
    keep_decision: bool,
) -> Result<ImageOutcome, CliError> {
    let dims = params.dims;
    let decision = decide(&image.pixels, task, link, &dims, acc)?;
    let grid = patchify(&image.pixels, dims.patch_side)?;
    let mut rng = derive_rng(cell_seed, "image", index as u64);
    let channel = |x: &[Complex64]| -> Result<Vec<Complex64>, ChannelError> {
        let state = ChannelState::draw(mode, link.fading_power, link.noise_power, &mut rng);
        equalize(&transmit(x, &state, &mut rng), state.h)
    };
    let record = keep_decision.then(|| DecisionLine {
        image: index,
        delay_s: link.delay_s,
        record: decision.record(),
    });
    let fwd = match codec_forward(params, &grid, &decision.retained, &decision.allocation.delta, channel) {
        Ok(f) => Some(f),
        Err(GjsccError::Channel(ChannelError::DeepFade { .. })) => None,
        Err(e) => return Err(e.into()),
    };
    let base = ImageOutcome {
        correct: false,
        recon_error: None,
        retained: decision.retained.len(),
        sum_delta: decision.allocation.sum_delta,
        dropped: decision.dropped_for_budget,
        power_deviation: 0.0,
        record,
    };
    let Some(fwd) = fwd else {
        return Ok(base);
    };
    let power_deviation = fwd
        .frame
        .tokens
        .iter()
        .zip(&fwd.frame.zero_tokens)
        .filter(|(_, zero)| !**zero)
        .map(|(t, _)| (average_power(t) - 1.0).abs())
        .fold(0.0, f64::max);
    let restored = unpatchify(&fwd.output)?;
    Ok(ImageOutcome {
        correct: task.predict(&restored) == image.label,
        recon_error: Some(region_loss(&grid, &fwd.output, &decision.weights.gamma)?),
        power_deviation,
        ..base
    })
}

/// Evaluates every `(SNR, delay)` cell, in ascending grid order.
pub fn run_sweep(
    images: &[LabeledImage],
    task: &TaskModel,
    params: &CodecParams,
    base_link: &LinkConfig,
    acc: &AccConfig,
    sweep: &SweepConfig,
    seed: u64,
    keep_decisions: bool,
) -> Result<(Vec<SweepRow>, Vec<DecisionLine>), CliError> {
    let mut snrs = sweep.snr_db.clone();
    let mut delays = sweep.delays_s.clone();
    snrs.sort_by(f64::total_cmp);
    delays.sort_by(f64::total_cmp);
    let images = &images[..sweep.max_images.unwrap_or(images.len()).min(images.len())];
    if images.is_empty() {
        return Err(CliError::Validation("no test images to sweep".into()));
    }
    let cells: Vec<(usize, f64, f64)> = snrs
        .iter()
        .flat_map(|&s| delays.iter().map(move |&d| (s, d)))
        .enumerate()
        .map(|(i, (s, d))| (i, s, d))
        .collect();

    let results: Vec<Result<(SweepRow, Vec<DecisionLine>), CliError>> = cells
        .par_iter()
        .map(|&(cell, snr_db, delay_s)| {
            let link = base_link.with_snr_db(snr_db).with_delay(delay_s);
            let cell_seed = derive_seed(seed, "sweep-cell", cell as u64);
            let outcomes = images
                .iter()
                .enumerate()
                .map(|(i, img)| {
                    evaluate_image(i, img, task, params, &link, acc, sweep.channel, cell_seed, keep_decisions)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let n = outcomes.len() as f64;
            let correct: Vec<f64> = outcomes.iter().map(|o| if o.correct { 1.0 } else { 0.0 }).collect();
            let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.recon_error).collect();
            let (accuracy, accuracy_stderr) = mean_stderr(&correct);
            let (recon_error, recon_error_stderr) = mean_stderr(&errors);
            let mean_sum_delta = outcomes.iter().map(|o| o.sum_delta as f64).sum::<f64>() / n;
            let pixels = (params.dims.image_side * params.dims.image_side) as f64;
            let row = SweepRow {
                snr_db,
                delay_s,
                channel: sweep.channel,
                images: outcomes.len(),
                accuracy,
                accuracy_stderr,
                recon_error,
                recon_error_stderr,
                mean_retained: outcomes.iter().map(|o| o.retained as f64).sum::<f64>() / n,
                mean_sum_delta,
                bcr: mean_sum_delta / pixels,
                budget: image_budget(&link),
                frames_lost: outcomes.len() - errors.len(),
                dropped_for_budget: outcomes.iter().map(|o| o.dropped).sum(),
                max_power_deviation: outcomes.iter().map(|o| o.power_deviation).fold(0.0, f64::max),
                cell_seed,
            };
            let decisions = outcomes.into_iter().filter_map(|o| o.record).collect();
            Ok((row, decisions))
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut decisions = Vec::new();
    for r in results {
        let (row, d) = r?;
        rows.push(row);
        decisions.extend(d);
    }
    Ok((rows, decisions))
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        let channel = match r.channel {
            ChannelMode::Awgn => "awgn",
            ChannelMode::Rayleigh => "rayleigh",
        };
        w.write_record([
            fmt_sig6(r.snr_db),
            fmt_sig6(r.delay_s * 1e3),
            channel.to_string(),
            r.images.to_string(),
            fmt_sig6(r.accuracy),
            fmt_sig6(r.accuracy_stderr),
            fmt_sig6(r.recon_error),
            fmt_sig6(r.recon_error_stderr),
            fmt_sig6(r.mean_retained),
            fmt_sig6(r.mean_sum_delta),
            fmt_sig6(r.bcr),
            r.budget.to_string(),
            r.frames_lost.to_string(),
            r.dropped_for_budget.to_string(),
            fmt_sig6(r.max_power_deviation),
            r.cell_seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::CliError;
use crate::channel::{complex_normal, ChannelError};
use crate::dataset::{TaskModel, IMAGE_SIDE, PATCH_SIDE};
use crate::gjscc::{codec_backward, codec_forward, patchify, CodecDims, CodecParams, PatchGrid};
use crate::losses::{GanForm, Lambdas, LossNets};
use crate::numerics::{
    check_parameters, compensated_sum, derive_rng, derive_seed, relative_error, CheckOptions, Parameters,
    SimRng, TensorCheck,
};

/// Relative error at or above this fails the check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Factor applied to the analytic gradient of a block under fault injection.
pub const FAULT_SCALE: f64 = 1.01;

pub const BLOCKS: [&str; 9] = [
    "theta1",
    "theta2",
    "chi1",
    "chi2",
    "disc",
    "region_loss",
    "feature_loss",
    "gan_generator",
    "task_model",
];

const CODEC_BLOCKS: [&str; 4] = ["theta1", "theta2", "chi1", "chi2"];

/// Worst coordinate of one block over every seed.
#[derive(Clone, Debug, Serialize)]
pub struct BlockReport {
    pub block: String,
    pub passed: bool,
    pub max_rel_error: f64,
    pub worst_seed: u64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates_checked: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub seeds: Vec<u64>,
    pub injected_fault: Option<String>,
    pub passed: bool,
    pub blocks: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks.iter().filter(|b| !b.passed).map(|b| b.block.as_str()).collect()
    }
}

fn random_image(rng: &mut SimRng) -> Vec<f64> {
    (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.random::<f64>()).collect()
}

fn signs(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

fn inject<P: Parameters>(grads: &mut P, prefix: &str) {
    grads.visit_mut(&mut |name, t| {
        if name.starts_with(prefix) {
            t.scale(FAULT_SCALE);
        }
    });
}

fn options(seed: u64) -> CheckOptions {
    CheckOptions {
        seed: derive_seed(seed, "gradcheck-coords", 0),
        ..CheckOptions::default()
    }
}

struct CodecSample {
    grid: PatchGrid,
    weights: Vec<f64>,
    retained: Vec<usize>,
    delta: Vec<usize>,
    noise: Vec<Complex64>,
}

fn codec_forward_noisy(p: &CodecParams, s: &CodecSample) -> crate::gjscc::CodecForward {
    let link = |x: &[Complex64]| -> Result<Vec<Complex64>, ChannelError> {
        Ok(x.iter().zip(&s.noise).map(|(a, n)| a + n).collect())
    };
    codec_forward(p, &s.grid, &s.retained, &s.delta, link).expect("gradcheck sample layout is valid")
}

/// End-to-end codec check, reported per parameter group prefix.
fn check_codec(seed: u64, fault: Option<&str>) -> Result<Vec<TensorCheck>, CliError> {
    let dims = CodecDims::default();
    let params = CodecParams::new(dims, derive_seed(seed, "gradcheck-codec", 0))?;
    let mut rng = derive_rng(seed, "gradcheck-codec-data", 0);
    let levels = dims.levels();
    let samples: Vec<CodecSample> = (0..2)
        .map(|_| {
            let grid = patchify(&random_image(&mut rng), PATCH_SIDE).expect("square image");
            let m = dims.patch_count();
            let keep = rng.random_range(1..=m / 4);
            let mut retained = index::sample(&mut rng, m, keep).into_vec();
            retained.sort_unstable();
            let delta: Vec<usize> = retained.iter().map(|_| levels[rng.random_range(0..3)]).collect();
            let k = delta.iter().sum::<usize>() / 2;
            let noise = (0..k).map(|_| complex_normal(&mut rng, 0.05)).collect();
            let weights = signs(&mut rng, grid.patches.len());
            CodecSample { grid, weights, retained, delta, noise }
        })
        .collect();
    let mut grads = params.zeros_like();
    for s in &samples {
        grads.accumulate(&codec_backward(&params, &codec_forward_noisy(&params, s), &s.weights), 1.0);
    }
    if let Some(block) = fault.filter(|b| CODEC_BLOCKS.contains(b)) {
        inject(&mut grads, &format!("{block}."));
    }
    let objective = |p: &CodecParams| -> f64 {
        samples
            .iter()
            .map(|s| compensated_sum(codec_forward_noisy(p, s).output.patches.iter().zip(&s.weights).map(|(a, w)| a * w)))
            .sum()
    };
    Ok(check_parameters(&params, &grads, objective, options(seed))?)
}

fn check_disc(seed: u64, fault: Option<&str>) -> Result<Vec<TensorCheck>, CliError> {
    let nets = LossNets::new(0, derive_seed(seed, "gradcheck-disc", 0), Lambdas::default(), GanForm::Hinge);
    let mut rng = derive_rng(seed, "gradcheck-disc-data", 0);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|_| (random_image(&mut rng), random_image(&mut rng))).collect();
    let w = signs(&mut rng, pairs.len());
    let mut grads = nets.disc.zeros_like();
    for ((cand, refr), wi) in pairs.iter().zip(&w) {
        let trace = nets.disc.forward(cand, refr, IMAGE_SIDE);
        nets.disc.backward(&trace, *wi, Some(&mut grads));
    }
    if fault == Some("disc") {
        inject(&mut grads, "");
    }
    let objective = |d: &crate::losses::Discriminator| {
        compensated_sum(pairs.iter().zip(&w).map(|((c, r), wi)| wi * d.score(c, r, IMAGE_SIDE)))
    };
    Ok(check_parameters(&nets.disc, &grads, objective, options(seed))?)
}

fn check_task_model(seed: u64, fault: Option<&str>) -> Result<Vec<TensorCheck>, CliError> {
    let model = TaskModel::new(6, derive_seed(seed, "gradcheck-task", 0));
    let mut rng = derive_rng(seed, "gradcheck-task-data", 0);
    let images: Vec<Vec<f64>> = (0..2).map(|_| random_image(&mut rng)).collect();
    let w: Vec<Vec<f64>> = images.iter().map(|_| signs(&mut rng, model.class_count())).collect();
    let mut grads = model.zeros_like();
    for (img, wi) in images.iter().zip(&w) {
        model.backward(&model.forward(img), wi, Some(&mut grads));
    }
    if fault == Some("task_model") {
        inject(&mut grads, "");
    }
    let objective = |m: &TaskModel| {
        compensated_sum(
            images
                .iter()
                .zip(&w)
                .flat_map(|(img, wi)| m.logits(img).into_iter().zip(wi).map(|(l, s)| l * s).collect::<Vec<_>>()),
        )
    };
    Ok(check_parameters(&model, &grads, objective, options(seed))?)
}

/// Gradient of one loss term w.r.t. the reconstruction, on sampled coordinates.
fn check_loss(seed: u64, block: &str, fault: Option<&str>) -> Result<TensorCheck, CliError> {
    let lambdas = match block {
        "region_loss" => Lambdas { region: 1.0, feature: 0.0, adversarial: 0.0 },
        "feature_loss" => Lambdas { region: 0.0, feature: 1.0, adversarial: 0.0 },
        _ => Lambdas { region: 0.0, feature: 0.0, adversarial: 1.0 },
    };
    let nets = LossNets::new(
        derive_seed(seed, "gradcheck-phi", 0),
        derive_seed(seed, "gradcheck-disc", 0),
        lambdas,
        GanForm::Hinge,
    );
    let mut rng = derive_rng(seed, "gradcheck-loss-data", 0);
    let original = patchify(&random_image(&mut rng), PATCH_SIDE).expect("square image");
    let output = patchify(&random_image(&mut rng), PATCH_SIDE).expect("square image");
    let gamma: Vec<f64> = (0..original.patch_count).map(|_| rng.random::<f64>()).collect();
    let mut analytic = nets.codec_loss(&original, &output, &gamma)?.d_output;
    if fault == Some(block) {
        analytic.iter_mut().for_each(|a| *a *= FAULT_SCALE);
    }
    let opts = options(seed);
    let mut coords = index::sample(&mut derive_rng(opts.seed, block, 0), analytic.len(), opts.max_coords_per_tensor)
        .into_vec();
    coords.sort_unstable();
    let floor = 1e-3 * analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut report = TensorCheck {
        name: format!("{block}.d_output"),
        checked: coords.len(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        max_rel_error: 0.0,
    };
    let mut probe = output.clone();
    for &c in &coords {
        let orig = probe.patches[c];
        probe.patches[c] = orig + opts.step;
        let plus = nets.codec_loss(&original, &probe, &gamma)?.total;
        probe.patches[c] = orig - opts.step;
        let minus = nets.codec_loss(&original, &probe, &gamma)?.total;
        probe.patches[c] = orig;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let err = relative_error(analytic[c], numeric, floor);
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = c;
            report.worst_analytic = analytic[c];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

/// Every block's tensor checks for one seed, keyed by block name.
fn check_seed(seed: u64, fault: Option<&str>) -> Result<Vec<(String, TensorCheck)>, CliError> {
    let mut out = Vec::new();
    for t in check_codec(seed, fault)? {
        let block = t.name.split('.').next().unwrap_or_default().to_string();
        out.push((block, t));
    }
    out.extend(check_disc(seed, fault)?.into_iter().map(|t| ("disc".to_string(), t)));
    for block in ["region_loss", "feature_loss", "gan_generator"] {
        out.push((block.to_string(), check_loss(seed, block, fault)?));
    }
    out.extend(check_task_model(seed, fault)?.into_iter().map(|t| ("task_model".to_string(), t)));
    Ok(out)
}

/// Runs every block on seeds `first_seed .. first_seed + seed_count`.
pub fn run_gradcheck(first_seed: u64, seed_count: usize, fault: Option<&str>) -> Result<GradcheckReport, CliError> {
    if let Some(f) = fault {
        if !BLOCKS.contains(&f) {
            return Err(CliError::Usage(format!("unknown block {f:?}; expected one of {BLOCKS:?}")));
        }
    }
    if seed_count == 0 {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let seeds: Vec<u64> = (0..seed_count as u64).map(|i| first_seed.wrapping_add(i)).collect();
    let per_seed = seeds
        .par_iter()
        .map(|&s| check_seed(s, fault).map(|checks| (s, checks)))
        .collect::<Result<Vec<_>, _>>()?;

    let blocks: Vec<BlockReport> = BLOCKS
        .iter()
        .map(|&block| {
            let mut report = BlockReport {
                block: block.to_string(),
                passed: true,
                max_rel_error: 0.0,
                worst_seed: seeds[0],
                worst_tensor: String::new(),
                worst_index: 0,
                worst_analytic: 0.0,
                worst_numeric: 0.0,
                coordinates_checked: 0,
            };
            let checks = per_seed
                .iter()
                .flat_map(|(s, c)| c.iter().map(move |c| (*s, c)))
                .filter(|(_, (b, _))| b == block);
            for (seed, (_, t)) in checks {
                report.coordinates_checked += t.checked;
                if t.max_rel_error >= report.max_rel_error || report.worst_tensor.is_empty() {
                    report.max_rel_error = t.max_rel_error;
                    report.worst_seed = seed;
                    report.worst_tensor = t.name.clone();
                    report.worst_index = t.worst_index;
                    report.worst_analytic = t.worst_analytic;
                    report.worst_numeric = t.worst_numeric;
                }
            }
            report.passed = report.coordinates_checked > 0 && report.max_rel_error < GRADCHECK_TOLERANCE;
            report
        })
        .collect();
    Ok(GradcheckReport {
        tolerance: GRADCHECK_TOLERANCE,
        step: CheckOptions::default().step,
        seeds,
        injected_fault: fault.map(str::to_string),
        passed: blocks.iter().all(|b| b.passed),
        blocks,
    })
}

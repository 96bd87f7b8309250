//! Acceptance suite: one PASS/FAIL line per criterion, at full tolerance.
//!
//! Criteria 6 to 8 share one full training run (corpus, task model, stage I,
//! stage II, sweep), which dominates the runtime.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use tascom_core::acc::{
    allocate_rates, allocation_is_valid, feature_weights, mask_select, mask_select_bisection, AccConfig, AccError,
    LinkConfig,
};
use tascom_core::channel::{equalize, transmit, ChannelMode, ChannelState};
use tascom_core::cli::{
    cmd_finetune, cmd_gen_data, cmd_pretrain, cmd_sweep, cmd_train_task, run_gradcheck, table1, RunConfig, SweepRow,
};
use tascom_core::dataset::LabeledImage;
use tascom_core::numerics::derive_rng;
use tascom_core::training::moving_average;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(id: u32, name: &'static str, passed: bool, detail: String, elapsed: Duration) -> Outcome {
    let detail = format!("{detail}; {:.1} s", elapsed.as_secs_f64());
    println!("criterion {id} {name}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    Outcome { id, name, passed, detail }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rows = table1(&LinkConfig::reference(0.0));
    let matched = rows.iter().filter(|r| r.lmax_paper_match).count();
    let rounded = rows
        .iter()
        .filter(|r| ((r.l_max as f64 / 1e3).round() as u64) == r.reference_l_max / 1000)
        .count();
    let elapsed = start.elapsed();
    report(
        1,
        "table1",
        matched == 11 && rows.len() == 11 && elapsed < Duration::from_secs(1),
        format!(
            "{matched}/11 rows match the printed two decimals (the table truncates; \
             round-to-nearest would match {rounded}/11)"
        ),
        elapsed,
    )
}

fn exhaustive_optimum(gamma: &[f64], q: usize, l_max: u64) -> Option<usize> {
    let levels = [q / 2, 3 * q / 4, q];
    let mut best = None;
    for code in 0..3usize.pow(gamma.len() as u32) {
        let mut c = code;
        let delta: Vec<usize> = gamma
            .iter()
            .map(|_| {
                let d = levels[c % 3];
                c /= 3;
                d
            })
            .collect();
        if allocation_is_valid(gamma, &delta, q, l_max) {
            let s: usize = delta.iter().sum();
            best = Some(best.map_or(s, |b: usize| b.max(s)));
        }
    }
    best
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (mut agree, mut infeasible) = (0, 0);
    let mut first_mismatch = None;
    for i in 0..1000 {
        let n = rng.random_range(1..=8);
        let gamma: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let l_max = rng.random_range(0..=(n * 16 + 8)) as u64;
        let ok = match (allocate_rates(&gamma, 16, l_max), exhaustive_optimum(&gamma, 16, l_max)) {
            (Ok(a), Some(best)) => a.sum_delta == best && allocation_is_valid(&gamma, &a.delta, 16, l_max),
            (Err(AccError::InsufficientBudget { .. }), None) => {
                infeasible += 1;
                true
            }
            _ => false,
        };
        if ok {
            agree += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(i);
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "rate allocation optimality",
        agree == 1000 && elapsed < Duration::from_secs(10),
        format!("{agree}/1000 instances agree with exhaustive search ({infeasible} infeasible), first mismatch {first_mismatch:?}"),
        elapsed,
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = derive_rng(3, "masking", 0);
    let mut agree = 0;
    let mut total = 0;
    for eps in [0.05, 0.1, 0.3] {
        for _ in 0..1000 {
            let gamma: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            total += 1;
            if mask_select_bisection(&gamma, eps) == mask_select(&gamma, eps) {
                agree += 1;
            }
        }
    }
    report(
        3,
        "masking equivalence",
        agree == total,
        format!("{agree}/{total} retained sets identical"),
        start.elapsed(),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let result = run_gradcheck(0, 10, None);
    let elapsed = start.elapsed();
    match result {
        Ok(r) => {
            let worst = r
                .blocks
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .map(|b| format!("{} {:.2e}", b.block, b.max_rel_error))
                .unwrap_or_default();
            report(
                4,
                "gradient exactness",
                r.passed && elapsed < Duration::from_secs(60),
                format!("{} blocks on 10 seeds, worst {worst}, failing {:?}", r.blocks.len(), r.failing_blocks()),
                elapsed,
            )
        }
        Err(e) => report(4, "gradient exactness", false, e.to_string(), elapsed),
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let sigma2 = 0.37;
    let mut rng = derive_rng(5, "channel-stats", 0);
    let zeros = vec![Complex64::new(0.0, 0.0); 1_000_000];
    let y = transmit(&zeros, &ChannelState::awgn(sigma2), &mut rng);
    let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    let awgn_ok = (var / sigma2 - 1.0).abs() <= 0.01;

    let fading = 1.6;
    let frames = 100_000;
    let h2 = (0..frames)
        .map(|_| ChannelState::draw(ChannelMode::Rayleigh, fading, 0.0, &mut rng).h.norm_sqr())
        .sum::<f64>()
        / frames as f64;
    let rayleigh_ok = (h2 / fading - 1.0).abs() <= 0.02;

    let x: Vec<Complex64> = (0..4096).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let mut loop_err = 0.0f64;
    for _ in 0..100 {
        let state = ChannelState::draw(ChannelMode::Rayleigh, 1.0, 0.0, &mut rng);
        if let Ok(back) = equalize(&transmit(&x, &state, &mut rng), state.h) {
            loop_err = back.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(loop_err, f64::max);
        }
    }
    let loop_ok = loop_err <= 1e-9;
    report(
        5,
        "channel statistics",
        awgn_ok && rayleigh_ok && loop_ok,
        format!(
            "AWGN variance ratio {:.5}, Rayleigh E|h|^2 ratio {:.5}, loopback max error {loop_err:.2e}",
            var / sigma2,
            h2 / fading
        ),
        start.elapsed(),
    )
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

struct Pipeline {
    cfg: RunConfig,
    stage1_totals: Vec<f64>,
    rows: Vec<SweepRow>,
    test_images: Vec<LabeledImage>,
    elapsed: Duration,
}

fn run_pipeline(dir: &std::path::Path) -> Result<Pipeline, String> {
    let start = Instant::now();
    let cfg = RunConfig {
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let corpus = cmd_gen_data(&cfg).map_err(|e| e.to_string())?;
    cmd_train_task(&cfg).map_err(|e| e.to_string())?;
    let stage1 = cmd_pretrain(&cfg).map_err(|e| e.to_string())?;
    cmd_finetune(&cfg).map_err(|e| e.to_string())?;
    let rows = cmd_sweep(&cfg, None, false).map_err(|e| e.to_string())?;
    Ok(Pipeline {
        stage1_totals: stage1.log.iter().map(|e| e.total).collect(),
        test_images: corpus.split().1.to_vec(),
        cfg,
        rows,
        elapsed: start.elapsed(),
    })
}

fn criterion_6(p: &Pipeline) -> Outcome {
    let worst = p.rows.iter().map(|r| r.max_power_deviation).fold(0.0, f64::max);
    let tokens: usize = p.rows.iter().map(|r| r.images - r.frames_lost).sum();
    report(
        6,
        "power constraint",
        worst <= 1e-9 && tokens > 0,
        format!("max |P - 1| = {worst:.2e} over {} cells, {tokens} delivered frames", p.rows.len()),
        Duration::ZERO,
    )
}

fn criterion_7(p: &Pipeline) -> Outcome {
    let ma = moving_average(&p.stage1_totals, 10);
    // Each value is compared against the best one before it.
    let mut best = f64::INFINITY;
    let mut worst_rise = 0.0f64;
    for &v in &ma {
        worst_rise = worst_rise.max(v / best - 1.0);
        best = best.min(v);
    }
    let a_ok = !ma.is_empty() && worst_rise <= 0.05 && ma.last() < ma.first();

    let snrs = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0];
    let cell = |snr: f64, delay: f64| {
        p.rows
            .iter()
            .find(|r| r.snr_db == snr && (r.delay_s - delay).abs() < 1e-12)
            .map_or(f64::NAN, |r| r.accuracy)
    };
    let (acc0, acc20) = (cell(0.0, 1e-2), cell(20.0, 1e-2));
    let b_ok = acc20 >= 0.85 && acc20 - acc0 >= 0.05;

    let mean_acc: Vec<f64> = snrs
        .iter()
        .map(|&s| {
            let v: Vec<f64> = p.rows.iter().filter(|r| r.snr_db == s).map(|r| r.accuracy).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let rho = spearman(&snrs, &mean_acc);
    let at_10ms: Vec<f64> = snrs.iter().map(|&s| cell(s, 1e-2)).collect();
    let rho_10ms = spearman(&snrs, &at_10ms);
    let c_ok = mean_acc.iter().all(|a| a.is_finite()) && rho >= 0.9;
    let curve = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    report(
        7,
        "training efficacy",
        a_ok && b_ok && c_ok && p.elapsed < Duration::from_secs(30 * 60),
        format!(
            "(a) stage I 10-epoch MA {:.4} -> {:.4}, worst rise over the running best {:+.1}%: {}; \
             (b) accuracy at D = 10 ms {acc20:.3} at 20 dB vs {acc0:.3} at 0 dB: {}; \
             (c) Spearman {rho:.3} for mean accuracy over delays [{}]: {} \
             (10 ms only: {rho_10ms:.3} over [{}]); pipeline {:.0} s",
            ma.first().copied().unwrap_or(f64::NAN),
            ma.last().copied().unwrap_or(f64::NAN),
            100.0 * worst_rise,
            if a_ok { "ok" } else { "no" },
            if b_ok { "ok" } else { "no" },
            curve(&mean_acc),
            if c_ok { "ok" } else { "no" },
            curve(&at_10ms),
            p.elapsed.as_secs_f64()
        ),
        Duration::ZERO,
    )
}

fn criterion_8(p: &Pipeline) -> Outcome {
    let start = Instant::now();
    let task = tascom_core::cli::load_task_model(&p.cfg);
    let Ok(task) = task else {
        return report(8, "task-oriented masking", false, "task model unavailable".into(), start.elapsed());
    };
    let (_, fine) = p.cfg.stage_configs();
    let acc = AccConfig { mu: 1.0, ..fine.acc() };
    let images = &p.test_images[..p.test_images.len().min(200)];
    let (mut object_wins, mut background_share_sum, mut masked_images) = (0usize, 0.0, 0usize);
    for img in images {
        let Ok(w) = feature_weights(&img.pixels, &task, &p.cfg.codec, &acc) else {
            continue;
        };
        let in_box: Vec<bool> = (0..w.gamma.len()).map(|m| img.object_box.binary_search(&m).is_ok()).collect();
        let mean = |pick: bool| {
            let v: Vec<f64> = w.gamma.iter().zip(&in_box).filter(|(_, b)| **b == pick).map(|(g, _)| *g).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        if mean(true) > mean(false) {
            object_wins += 1;
        }
        let masked: Vec<usize> = (0..w.gamma.len()).filter(|&m| w.gamma[m] < acc.epsilon_th).collect();
        if !masked.is_empty() {
            masked_images += 1;
            background_share_sum += masked.iter().filter(|&&m| !in_box[m]).count() as f64 / masked.len() as f64;
        }
    }
    let win_rate = object_wins as f64 / images.len() as f64;
    let background_share = background_share_sum / masked_images.max(1) as f64;
    report(
        8,
        "task-oriented masking",
        images.len() == 200 && win_rate >= 0.8 && background_share >= 0.7,
        format!(
            "object γ above background on {:.1}% of {} images; {:.1}% of masked patches are background \
             (averaged over {masked_images} images)",
            100.0 * win_rate,
            images.len(),
            100.0 * background_share
        ),
        start.elapsed(),
    )
}

fn criterion_9() -> Outcome {
    report(
        9,
        "non-reproducibility statement",
        true,
        "detection mAP curves and the visual reconstruction figures need ImageNet/COCO-scale training and \
         YOLO/DETR detectors and are not reproduced at desk scale; criteria 7 and 8 are the declared substitutes"
            .into(),
        Duration::ZERO,
    )
}

#[test]
fn acceptance() {
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5()];
    let dir = tempfile::tempdir().expect("temporary directory");
    match run_pipeline(dir.path()) {
        Ok(p) => {
            outcomes.push(criterion_6(&p));
            outcomes.push(criterion_7(&p));
            outcomes.push(criterion_8(&p));
        }
        Err(e) => {
            for (id, name) in [(6, "power constraint"), (7, "training efficacy"), (8, "task-oriented masking")] {
                outcomes.push(report(id, name, false, format!("pipeline failed: {e}"), Duration::ZERO));
            }
        }
    }
    outcomes.push(criterion_9());
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{} {}: {}", o.id, o.name, o.detail))
        .collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}

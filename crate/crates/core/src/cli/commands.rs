use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::gradcheck::{run_gradcheck, GradcheckReport};
use super::sweep::{run_sweep, write_sweep, SweepRow};
use super::table1::{table1, write_table1, Table1Row};
use super::{CliError, RunConfig};
use crate::acc::LinkConfig;
use crate::dataset::{export_corpus, generate_corpus, import_corpus, train_task_model, Corpus, TaskModel, TrainedTaskModel};
use crate::gjscc::CodecParams;
use crate::losses::{Discriminator, LossNets};
use crate::numerics::{load_checkpoint_into, save_checkpoint};
use crate::training::{finetune_stage2, init_seeds, pretrain_stage1, write_loss_log, EpochLog, TrainOutcome};

pub const TASK_STEM: &str = "task_model";
pub const CODEC_STEM: &str = "codec";
pub const DISC_STEM: &str = "disc";

fn corpus_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("corpus")
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// The manifest records the full effective configuration, so it alone
/// reproduces the command's outputs.
fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, seeds: &BTreeMap<String, u64>, outputs: &[&str]) -> Result<(), CliError> {
    write_json(
        &dir.join("run_manifest.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seeds": seeds,
            "outputs": outputs,
            "config": cfg,
        }),
    )
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let dir = corpus_dir(cfg);
    if !dir.is_dir() {
        return Err(CliError::Runtime(format!("no corpus at {}; run gen-data first", dir.display())));
    }
    Ok(import_corpus(&dir)?)
}

fn require_checkpoint(stem: &Path, hint: &str) -> Result<(), CliError> {
    if stem.with_extension("json").is_file() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("missing checkpoint {}; {hint}", stem.display())))
    }
}

pub fn load_task_model(cfg: &RunConfig) -> Result<TaskModel, CliError> {
    let stem = cfg.out_dir.join(TASK_STEM);
    require_checkpoint(&stem, "run train-task first")?;
    let mut model = TaskModel::new(cfg.dataset.classes, 0);
    load_checkpoint_into(&stem, "", &mut model)?;
    Ok(model)
}

/// Codec parameters from `<stem>.json`/`<stem>.bin`, shaped by the configured dims.
pub fn load_codec(cfg: &RunConfig, stem: &Path) -> Result<CodecParams, CliError> {
    require_checkpoint(stem, "train the codec first")?;
    let mut params = CodecParams::new(cfg.codec, 0)?;
    load_checkpoint_into(stem, "", &mut params)?;
    Ok(params)
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<Corpus, CliError> {
    ensure_dir(&cfg.out_dir)?;
    let d = &cfg.dataset;
    let corpus = generate_corpus(cfg.dataset_seed(), d.count, d.classes, d.noise_level)?;
    export_corpus(&corpus, &corpus_dir(cfg))?;
    let seeds = BTreeMap::from([("master".to_string(), cfg.seed), ("dataset".to_string(), cfg.dataset_seed())]);
    write_manifest(&corpus_dir(cfg), "gen-data", cfg, &seeds, &["."])?;
    eprintln!("gen-data: {} images, {} classes → {}", corpus.len(), corpus.class_count, corpus_dir(cfg).display());
    Ok(corpus)
}

pub fn cmd_train_task(cfg: &RunConfig) -> Result<TrainedTaskModel, CliError> {
    let corpus = load_corpus(cfg)?;
    let trained = train_task_model(&corpus, cfg.task_seed(), cfg.task)?;
    let provenance = json!({
        "seed": cfg.task_seed(),
        "classes": corpus.class_count,
        "epochs_run": trained.epochs_run,
        "train_accuracy": trained.train_accuracy,
        "test_accuracy": trained.test_accuracy,
    });
    save_checkpoint(&cfg.out_dir.join(TASK_STEM), &trained.model, provenance.clone())?;
    write_json(&cfg.out_dir.join("task_metrics.json"), &provenance)?;
    eprintln!(
        "train-task: held-out accuracy {:.4} after {} epochs",
        trained.test_accuracy, trained.epochs_run
    );
    Ok(trained)
}

fn save_stage(
    dir: &Path,
    params: &CodecParams,
    disc: &Discriminator,
    provenance: &serde_json::Value,
) -> Result<(), CliError> {
    save_checkpoint(&dir.join(CODEC_STEM), params, provenance.clone())?;
    save_checkpoint(&dir.join(DISC_STEM), disc, provenance.clone())?;
    Ok(())
}

fn finish_stage(dir: &Path, command: &str, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<(), CliError> {
    let provenance = json!({ "seeds": outcome.seeds, "epochs": outcome.log.len() });
    save_stage(dir, &outcome.params, &outcome.nets.disc, &provenance)?;
    write_loss_log(&outcome.log, BufWriter::new(File::create(dir.join("loss_log.csv"))?))?;
    write_json(&dir.join("epoch_log.json"), &outcome.log)?;
    write_manifest(
        dir,
        command,
        cfg,
        &outcome.seeds,
        &["codec.json", "codec.bin", "disc.json", "disc.bin", "loss_log.csv", "epoch_log.json"],
    )
}

/// Prints progress and writes `epoch_NNNN/` checkpoints every `every` epochs.
fn epoch_observer(dir: PathBuf, label: &'static str, total: usize, every: usize) -> impl FnMut(&EpochLog, &CodecParams, &LossNets) -> Result<(), String> {
    move |log, params, nets| {
        eprintln!(
            "{label} epoch {}/{total}: total {:.5} L_reg {:.5} L_fea {:.5} disc {:.4} lost {}",
            log.epoch, log.total, log.l_reg, log.l_fea, log.discriminator_term, log.frames_lost
        );
        if every > 0 && log.epoch % every == 0 && log.epoch < total {
            let provenance = json!({ "epoch": log.epoch });
            save_stage(&dir.join(format!("epoch_{:04}", log.epoch)), params, &nets.disc, &provenance)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let corpus = load_corpus(cfg)?;
    let (pre, _) = cfg.stage_configs();
    let dir = cfg.out_dir.join("stage1");
    ensure_dir(&dir)?;
    let mut observer = epoch_observer(dir.clone(), "stage1", pre.epochs, cfg.checkpoint_every);
    let outcome = pretrain_stage1(corpus.split().0, cfg.codec, &cfg.link, &pre, Some(&mut observer))?;
    finish_stage(&dir, "pretrain", cfg, &outcome)?;
    Ok(outcome)
}

pub fn cmd_finetune(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let corpus = load_corpus(cfg)?;
    let task = load_task_model(cfg)?;
    let (pre, fine) = cfg.stage_configs();
    let stage1 = cfg.out_dir.join("stage1");
    let params = load_codec(cfg, &stage1.join(CODEC_STEM))?;
    let phi_seed = init_seeds(pre.seed)["phi"];
    let mut nets = LossNets::new(phi_seed, 0, fine.lambdas, fine.gan_form);
    load_checkpoint_into(&stage1.join(DISC_STEM), "", &mut nets.disc)?;
    let dir = cfg.out_dir.join("stage2");
    ensure_dir(&dir)?;
    let mut observer = epoch_observer(dir.clone(), "stage2", fine.epochs, cfg.checkpoint_every);
    let mut outcome = finetune_stage2(corpus.split().0, &task, params, nets, &cfg.link, &fine, Some(&mut observer))?;
    outcome.seeds.insert("phi".to_string(), phi_seed);
    finish_stage(&dir, "finetune", cfg, &outcome)?;
    Ok(outcome)
}

pub fn cmd_sweep(cfg: &RunConfig, checkpoint: Option<&Path>, decisions: bool) -> Result<Vec<SweepRow>, CliError> {
    let corpus = load_corpus(cfg)?;
    let task = load_task_model(cfg)?;
    let stem = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join("stage2").join(CODEC_STEM));
    let params = load_codec(cfg, &stem)?;
    let (_, fine) = cfg.stage_configs();
    let (rows, lines) = run_sweep(
        corpus.split().1,
        &task,
        &params,
        &cfg.link,
        &fine.acc(),
        &cfg.sweep,
        cfg.sweep_seed(),
        decisions,
    )?;
    write_sweep(&rows, BufWriter::new(File::create(cfg.out_dir.join("sweep.csv"))?))?;
    let mut outputs = vec!["sweep.csv"];
    if decisions {
        let mut w = BufWriter::new(File::create(cfg.out_dir.join("decisions.jsonl"))?);
        for line in &lines {
            serde_json::to_writer(&mut w, line)?;
            writeln!(w)?;
        }
        w.flush()?;
        outputs.push("decisions.jsonl");
    }
    let seeds = BTreeMap::from([("master".to_string(), cfg.seed), ("sweep".to_string(), cfg.sweep_seed())]);
    write_json(
        &cfg.out_dir.join("sweep_manifest.json"),
        &json!({
            "command": "sweep",
            "version": env!("CARGO_PKG_VERSION"),
            "checkpoint": stem,
            "seeds": seeds,
            "outputs": outputs,
            "config": cfg,
        }),
    )?;
    for r in &rows {
        eprintln!(
            "sweep {:>5.1} dB {:>5.1} ms: accuracy {:.4} ± {:.4}, recon {:.5}, Σδ {:.1}, lost {}",
            r.snr_db,
            r.delay_s * 1e3,
            r.accuracy,
            r.accuracy_stderr,
            r.recon_error,
            r.mean_sum_delta,
            r.frames_lost
        );
    }
    Ok(rows)
}

/// Link overrides for the budget table; unset fields keep the reference link.
#[derive(Clone, Copy, Debug, Default)]
pub struct Table1Overrides {
    pub delay_s: Option<f64>,
    pub constellation_bits: Option<f64>,
    pub bandwidth_hz: Option<f64>,
}

pub fn cmd_table1(cfg: &RunConfig, overrides: Table1Overrides) -> Result<Vec<Table1Row>, CliError> {
    let mut link = LinkConfig::reference(0.0);
    if let Some(d) = overrides.delay_s {
        link.delay_s = d;
    }
    if let Some(q) = overrides.constellation_bits {
        link.constellation_bits = q;
    }
    if let Some(b) = overrides.bandwidth_hz {
        link.bandwidth_hz = b;
    }
    link.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = table1(&link);
    ensure_dir(&cfg.out_dir)?;
    write_table1(&rows, BufWriter::new(File::create(cfg.out_dir.join("table1.csv"))?))?;
    write_table1(&rows, std::io::stdout().lock())?;
    Ok(rows)
}

pub fn cmd_gradcheck(cfg: &RunConfig, seeds: usize, fault: Option<&str>) -> Result<GradcheckReport, CliError> {
    let report = run_gradcheck(cfg.seed, seeds, fault)?;
    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("gradcheck.json"), &report)?;
    for b in &report.blocks {
        println!(
            "{:<14} {} max rel. err {:.3e} at {}[{}] (seed {}, analytic {:.6e}, numeric {:.6e}, {} coords)",
            b.block,
            if b.passed { "PASS" } else { "FAIL" },
            b.max_rel_error,
            b.worst_tensor,
            b.worst_index,
            b.worst_seed,
            b.worst_analytic,
            b.worst_numeric,
            b.coordinates_checked
        );
    }
    Ok(report)
}

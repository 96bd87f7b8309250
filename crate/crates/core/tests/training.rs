use num_complex::Complex64;
use tascom_core::acc::LinkConfig;
use tascom_core::channel::{complex_normal, ChannelError};
use tascom_core::dataset::{generate_corpus, TaskModel};
use tascom_core::gjscc::{codec_backward, codec_forward, patchify, CodecDims, CodecParams};
use tascom_core::losses::{GanForm, Lambdas, LossNets};
use rand::Rng;
use tascom_core::numerics::{compensated_sum, derive_rng, relative_error, Parameters};
use tascom_core::training::{
    finetune_stage2, pretrain_stage1, random_mask_weights, write_loss_log, TrainChannel, TrainConfig,
};

fn desk_link() -> LinkConfig {
    let mut link = LinkConfig::reference(12.0);
    link.budget_share = 1024.0 / 50176.0;
    link
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, seed, ..TrainConfig::pretrain() }
}

#[test]
fn one_epoch_smoke() {
    let corpus = generate_corpus(1, 2, 2, 0.03).unwrap();
    let out = pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &quick(1, 0), None).unwrap();
    assert_eq!(out.log.len(), 1);
    assert!(out.log[0].total.is_finite());
    let mut csv = Vec::new();
    write_loss_log(&out.log, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("epoch,L_reg,L_fea,gan_generator_term,discriminator_term,total"));
}

#[test]
fn training_is_deterministic() {
    let corpus = generate_corpus(2, 12, 3, 0.03).unwrap();
    let run = || pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &quick(2, 7), None).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params.bit_fingerprint(), b.params.bit_fingerprint());
    assert_eq!(a.nets.disc.bit_fingerprint(), b.nets.disc.bit_fingerprint());
    assert_eq!(a.log, b.log);
    let c = pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &quick(2, 8), None).unwrap();
    assert_ne!(a.params.bit_fingerprint(), c.params.bit_fingerprint());
}

#[test]
fn finetuning_leaves_task_model_untouched_and_reproduces() {
    let corpus = generate_corpus(3, 8, 3, 0.03).unwrap();
    let task = TaskModel::new(3, 4);
    let before = task.bit_fingerprint();
    let stage1 = pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &quick(1, 1), None).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 4, seed: 1, ..TrainConfig::finetune() };
    let run = || {
        finetune_stage2(
            &corpus.images,
            &task,
            stage1.params.clone(),
            stage1.nets.clone(),
            &desk_link(),
            &cfg,
            None,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(task.bit_fingerprint(), before);
    assert_eq!(a.params.bit_fingerprint(), b.params.bit_fingerprint());
    assert!(a.log.iter().all(|e| e.total.is_finite()));
}

#[test]
fn stage_mismatch_and_bad_config_rejected() {
    let corpus = generate_corpus(1, 2, 2, 0.03).unwrap();
    let wrong = TrainConfig::finetune();
    assert!(pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &wrong, None).is_err());
    let bad = TrainConfig { mask_ratio: 1.0, ..quick(1, 0) };
    assert!(pretrain_stage1(&corpus.images, CodecDims::default(), &desk_link(), &bad, None).is_err());
    assert!(pretrain_stage1(&[], CodecDims::default(), &desk_link(), &quick(1, 0), None).is_err());
}

#[test]
fn unmasked_noiseless_training_is_an_autoencoder() {
    let corpus = generate_corpus(4, 10, 2, 0.03).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 10,
        mask_ratio: 0.0,
        channel: TrainChannel::Noiseless,
        train_delays_s: vec![1e-2],
        lambdas: Lambdas { adversarial: 0.0, ..Lambdas::default() },
        learning_rate: 3e-3,
        seed: 2,
        ..TrainConfig::pretrain()
    };
    let out = pretrain_stage1(&corpus.images, CodecDims::default(), &LinkConfig::reference(12.0), &cfg, None).unwrap();
    assert!(out.log.iter().all(|e| e.mean_sum_delta == 1024.0));
    let (first, last) = (out.log[0].total, out.log.last().unwrap().total);
    assert!(last < 0.1 * first, "loss went from {first} to {last}");
}

#[test]
fn training_step_gradient_matches_finite_differences() {
    let corpus = generate_corpus(5, 1, 2, 0.03).unwrap();
    let image = &corpus.images[0];
    let grid = patchify(&image.pixels, 4).unwrap();
    let params = CodecParams::new(CodecDims::default(), 6).unwrap();
    let nets = LossNets::new(1, 2, Lambdas::default(), GanForm::Hinge);
    let mut rng = derive_rng(3, "step", 0);
    let (gamma, retained) = random_mask_weights(64, 0.7, 0.1, &mut rng);
    let delta: Vec<usize> = (0..retained.len()).map(|i| [8, 12, 16][i % 3]).collect();
    let k: usize = delta.iter().sum::<usize>() / 2;
    let noise: Vec<Complex64> = (0..k).map(|_| complex_normal(&mut rng, 0.06)).collect();
    let link = |x: &[Complex64]| -> Result<Vec<Complex64>, ChannelError> {
        Ok(x.iter().zip(&noise).map(|(a, n)| a + n).collect())
    };
    let total = |p: &CodecParams| {
        let fwd = codec_forward(p, &grid, &retained, &delta, link).unwrap();
        nets.codec_loss(&grid, &fwd.output, &gamma).unwrap().total
    };
    let fwd = codec_forward(&params, &grid, &retained, &delta, link).unwrap();
    let loss = nets.codec_loss(&grid, &fwd.output, &gamma).unwrap();
    let grads = codec_backward(&params, &fwd, &loss.d_output);
    // Directional derivatives along random ±1 directions over every
    // parameter: the full objective is too large relative to single small
    // partials for per-coordinate differences to resolve them.
    let h = 1e-5;
    for d in 0..4 {
        let mut dir_rng = derive_rng(9, "direction", d);
        let mut dir = params.zeros_like();
        dir.visit_mut(&mut |_, t| {
            t.data_mut().iter_mut().for_each(|v| *v = if dir_rng.random_bool(0.5) { 1.0 } else { -1.0 })
        });
        let mut products = Vec::new();
        let g = grads.tensors();
        let mut i = 0;
        dir.visit(&mut |_, t| {
            products.extend(t.data().iter().zip(g[i].1.data()).map(|(a, b)| a * b));
            i += 1;
        });
        let analytic = compensated_sum(products);
        let (mut plus, mut minus) = (params.clone(), params.clone());
        plus.accumulate(&dir, h);
        minus.accumulate(&dir, -h);
        let numeric = (total(&plus) - total(&minus)) / (2.0 * h);
        let rel = relative_error(analytic, numeric, 0.0);
        assert!(rel < 1e-4, "direction {d}: analytic {analytic}, numeric {numeric}");
    }
}

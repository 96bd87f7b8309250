use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use tascom_core::channel::{average_power, complex_normal, ChannelError};
use tascom_core::dataset::generate_corpus;
use tascom_core::gjscc::{
    channel_decode, channel_encode, codec_backward, codec_forward, noiseless, patchify,
    semantic_decode, semantic_encode, CodecDims, CodecParams, EncodedChannelFrame, GjsccError,
    PatchGrid,
};
use tascom_core::numerics::{
    check_parameters, compensated_sum, derive_rng, CheckOptions, Parameters,
};

fn sample_grids(count: usize) -> Vec<PatchGrid> {
    let corpus = generate_corpus(11, count, 4, 0.03).unwrap();
    corpus.images.iter().map(|img| patchify(&img.pixels, 4).unwrap()).collect()
}

fn params() -> CodecParams {
    let mut p = CodecParams::new(CodecDims::default(), 5).unwrap();
    let mut rng = derive_rng(9, "latent", 0);
    p.latent.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    p
}

#[test]
fn output_shape_for_any_retained_count() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let all: Vec<usize> = (0..64).collect();
    for retained in [all.clone(), vec![0], vec![3, 17, 40]] {
        let delta = vec![16; retained.len()];
        let (seq, _) = semantic_encode(&p, grid, &retained).unwrap();
        assert_eq!(seq.len(), retained.len());
        let fwd = codec_forward(&p, grid, &retained, &delta, noiseless).unwrap();
        assert_eq!(fwd.output.patch_count, 64);
        assert_eq!(fwd.output.patch_dim, 16);
        assert_eq!(fwd.output.patches.len(), 64 * 16);
    }
}

#[test]
fn masked_rows_are_latent_plus_position() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let fwd = codec_forward(&p, grid, &[5], &[8], noiseless).unwrap();
    let block = &fwd.decoder_cache().block_input;
    for m in (0..64).filter(|&m| m != 5) {
        for j in 0..16 {
            let expected = p.latent.row(m)[j] + p.dec_pos.row(m)[j];
            assert_eq!(block[m * 16 + j], expected);
        }
    }
}

#[test]
fn empty_and_invalid_retained_sets_rejected() {
    let p = params();
    let grid = &sample_grids(1)[0];
    assert_eq!(semantic_encode(&p, grid, &[]).unwrap_err(), GjsccError::EmptyRetained);
    assert!(matches!(
        semantic_encode(&p, grid, &[4, 2]),
        Err(GjsccError::InvalidPositions(_))
    ));
    assert!(matches!(
        semantic_encode(&p, grid, &[64]),
        Err(GjsccError::InvalidPositions(_))
    ));
}

#[test]
fn channel_frame_power_and_accounting() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let retained: Vec<usize> = (0..64).step_by(3).collect();
    let delta: Vec<usize> = (0..retained.len()).map(|i| [8, 12, 16][i % 3]).collect();
    let (seq, _) = semantic_encode(&p, grid, &retained).unwrap();
    let (frame, _) = channel_encode(&p, &seq, &delta).unwrap();
    assert_eq!(frame.real_dims(), delta.iter().sum::<usize>());
    assert_eq!(frame.complex_counts(), delta.iter().map(|d| d / 2).collect::<Vec<_>>());
    assert_eq!(frame.symbols().len() * 2, frame.real_dims());
    for t in &frame.tokens {
        assert!((average_power(t) - 1.0).abs() < 1e-9);
    }
    assert!(matches!(
        channel_encode(&p, &seq, &vec![10; retained.len()]),
        Err(GjsccError::IllegalLevel { delta: 10, .. })
    ));
}

#[test]
fn loopback_shape_and_layout_errors() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let (seq, _) = semantic_encode(&p, grid, &[1, 2]).unwrap();
    let (frame, _) = channel_encode(&p, &seq, &[16, 8]).unwrap();
    let back = channel_decode(&p, &frame, &[16, 8]).unwrap();
    assert_eq!(back.tokens.len(), seq.tokens.len());
    assert_eq!(back.positions, seq.positions);
    assert!(matches!(channel_decode(&p, &frame, &[8, 16]), Err(GjsccError::Layout(_))));
    assert!(frame.with_symbols(&[Complex64::new(0.0, 0.0)]).is_err());
}

#[test]
fn pseudo_inverse_pair_recovers_tokens() {
    let mut p = params();
    let q = 16;
    let w = DMatrix::from_row_slice(q, q, p.down[2].data());
    let pinv = w.clone().pseudo_inverse(1e-12).unwrap();
    let mut row_major = Vec::with_capacity(q * q);
    for r in 0..q {
        for c in 0..q {
            row_major.push(pinv[(r, c)]);
        }
    }
    p.up[2].data_mut().copy_from_slice(&row_major);
    let grid = &sample_grids(1)[0];
    let (seq, _) = semantic_encode(&p, grid, &[7]).unwrap();
    let (frame, _) = channel_encode(&p, &seq, &[16]).unwrap();
    let unscaled = EncodedChannelFrame {
        tokens: vec![frame.tokens[0].iter().map(|v| v / frame.scales[0]).collect()],
        ..frame.clone()
    };
    let back = channel_decode(&p, &unscaled, &[16]).unwrap();
    for (a, b) in back.tokens.iter().zip(&seq.tokens) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn masked_patches_do_not_reach_the_output() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let retained = [0, 9, 18, 27, 36];
    let delta = [16, 12, 8, 16, 12];
    let base = codec_forward(&p, grid, &retained, &delta, noiseless).unwrap();
    let mut altered = grid.clone();
    for m in (0..64).filter(|m| !retained.contains(m)) {
        altered.patches[m * 16..(m + 1) * 16].fill(0.0);
    }
    let again = codec_forward(&p, &altered, &retained, &delta, noiseless).unwrap();
    assert_eq!(base.output, again.output);
}

#[test]
fn decoder_rejects_mismatched_tokens() {
    let p = params();
    let grid = &sample_grids(1)[0];
    let (mut seq, _) = semantic_encode(&p, grid, &[1, 2]).unwrap();
    seq.positions = vec![1];
    assert!(semantic_decode(&p, &seq).is_err());
}

struct Sample {
    grid: PatchGrid,
    weights: Vec<f64>,
    retained: Vec<usize>,
    delta: Vec<usize>,
    noise: Vec<Complex64>,
}

fn microbatch() -> Vec<Sample> {
    let grids = sample_grids(2);
    let mut rng = derive_rng(4, "noise", 0);
    let layouts = [
        (vec![0, 5, 9, 22, 40, 63], vec![16, 12, 8, 16, 12, 8]),
        (vec![2, 3, 30, 31, 50], vec![8, 8, 16, 12, 16]),
    ];
    grids
        .into_iter()
        .zip(layouts)
        .map(|(grid, (retained, delta))| {
            let k: usize = delta.iter().sum::<usize>() / 2;
            let noise = (0..k).map(|_| complex_normal(&mut rng, 0.05)).collect();
            let weights = (0..grid.patches.len())
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            Sample { grid, weights, retained, delta, noise }
        })
        .collect()
}

fn objective(p: &CodecParams, batch: &[Sample]) -> f64 {
    batch
        .iter()
        .map(|s| {
            let link = |x: &[Complex64]| -> Result<Vec<Complex64>, ChannelError> {
                Ok(x.iter().zip(&s.noise).map(|(a, n)| a + n).collect())
            };
            let fwd = codec_forward(p, &s.grid, &s.retained, &s.delta, link).unwrap();
            compensated_sum(fwd.output.patches.iter().zip(&s.weights).map(|(a, w)| a * w))
        })
        .sum()
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let p = params();
    let batch = microbatch();
    let mut grads = p.zeros_like();
    for s in &batch {
        let link = |x: &[Complex64]| -> Result<Vec<Complex64>, ChannelError> {
            Ok(x.iter().zip(&s.noise).map(|(a, n)| a + n).collect())
        };
        let fwd = codec_forward(&p, &s.grid, &s.retained, &s.delta, link).unwrap();
        grads.accumulate(&codec_backward(&p, &fwd, &s.weights), 1.0);
    }
    let report = check_parameters(&p, &grads, |q| objective(q, &batch), CheckOptions::default()).unwrap();
    let names: Vec<&str> = report.iter().map(|r| r.name.as_str()).collect();
    for group in ["theta1.", "theta2.", "chi2.", "chi1.R", "chi1.attn", "chi1.out"] {
        assert!(names.iter().any(|n| n.starts_with(group)), "{group} not checked");
    }
    for r in &report {
        assert!(r.max_rel_error < 1e-4, "{}: {:?}", r.name, r);
    }
}

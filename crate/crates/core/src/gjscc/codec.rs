//! Encoder `f_θ1`, channel encoder `f_θ2`, channel decoder `g_χ2` and semantic
//! decoder `g_χ1`, each with an explicit backward pass.

use num_complex::Complex64;

use super::attention::{attention_backward, attention_block, AttentionCache, AttentionParams};
use super::{CodecDims, GjsccError, PatchGrid};
use crate::channel::{normalize_power, to_complex, to_real, ChannelError};
use crate::numerics::{
    derive_rng, matmul, matmul_tn, visit_prefixed, visit_prefixed_mut, Parameters, Tensor,
};

/// All trainable codec parameters.
///
/// Checkpoint names: `theta1.embed`, `theta1.pos`, `theta1.attn.*`,
/// `theta2.w{8,12,16}`, `chi2.w{8,12,16}`, `chi1.R`, `chi1.pos`,
/// `chi1.attn.*`, `chi1.out.w`, `chi1.out.b` (level suffixes follow `q`).
#[derive(Clone, Debug, PartialEq)]
pub struct CodecParams {
    pub dims: CodecDims,
    /// Patch embedding, `l × q`.
    pub embed: Tensor,
    pub enc_pos: Tensor,
    pub enc_attn: AttentionParams,
    /// Down-projections `q × δ`, one per level, ascending.
    pub down: [Tensor; 3],
    /// Up-projections `δ × q`, one per level, ascending.
    pub up: [Tensor; 3],
    /// Latent representation set `R`, one row per patch position.
    pub latent: Tensor,
    pub dec_pos: Tensor,
    pub dec_attn: AttentionParams,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl CodecParams {
    pub fn new(dims: CodecDims, seed: u64) -> Result<Self, GjsccError> {
        dims.validate()?;
        let mut rng = derive_rng(seed, "codec-init", 0);
        let (m, l, q) = (dims.patch_count(), dims.patch_dim(), dims.token_dim);
        let inv = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let levels = dims.levels();
        let embed = Tensor::uniform(&[l, q], inv(l), &mut rng);
        let enc_pos = Tensor::uniform(&[m, q], inv(m), &mut rng);
        let enc_attn = AttentionParams::new(q, &mut rng);
        let down = levels.map(|d| Tensor::uniform(&[q, d], inv(q), &mut rng));
        let up = levels.map(|d| Tensor::uniform(&[d, q], inv(d), &mut rng));
        let dec_pos = Tensor::uniform(&[m, q], inv(m), &mut rng);
        let dec_attn = AttentionParams::new(q, &mut rng);
        let out_w = Tensor::uniform(&[q, l], inv(q), &mut rng);
        Ok(Self {
            dims,
            embed,
            enc_pos,
            enc_attn,
            down,
            up,
            latent: Tensor::zeros(&[m, q]),
            dec_pos,
            dec_attn,
            out_w,
            out_b: Tensor::zeros(&[l]),
        })
    }
}

impl Parameters for CodecParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("theta1.embed", &self.embed);
        f("theta1.pos", &self.enc_pos);
        visit_prefixed(&self.enc_attn, "theta1.attn", f);
        for (d, t) in self.dims.levels().iter().zip(&self.down) {
            f(&format!("theta2.w{d}"), t);
        }
        for (d, t) in self.dims.levels().iter().zip(&self.up) {
            f(&format!("chi2.w{d}"), t);
        }
        f("chi1.R", &self.latent);
        f("chi1.pos", &self.dec_pos);
        visit_prefixed(&self.dec_attn, "chi1.attn", f);
        f("chi1.out.w", &self.out_w);
        f("chi1.out.b", &self.out_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        let levels = self.dims.levels();
        f("theta1.embed", &mut self.embed);
        f("theta1.pos", &mut self.enc_pos);
        visit_prefixed_mut(&mut self.enc_attn, "theta1.attn", f);
        for (d, t) in levels.iter().zip(&mut self.down) {
            f(&format!("theta2.w{d}"), t);
        }
        for (d, t) in levels.iter().zip(&mut self.up) {
            f(&format!("chi2.w{d}"), t);
        }
        f("chi1.R", &mut self.latent);
        f("chi1.pos", &mut self.dec_pos);
        visit_prefixed_mut(&mut self.dec_attn, "chi1.attn", f);
        f("chi1.out.w", &mut self.out_w);
        f("chi1.out.b", &mut self.out_b);
    }
}

/// Token rows with the patch positions they stand for.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticSequence {
    pub tokens: Vec<f64>,
    pub positions: Vec<usize>,
    pub token_dim: usize,
}

impl SemanticSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn token(&self, n: usize) -> &[f64] {
        &self.tokens[n * self.token_dim..(n + 1) * self.token_dim]
    }
}

/// Per-token real channel inputs of width `δ_n` (`δ_n / 2` complex symbols).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedChannelFrame {
    pub delta: Vec<usize>,
    pub positions: Vec<usize>,
    pub tokens: Vec<Vec<f64>>,
    /// Normalization factor applied to each token (1 for zero tokens).
    pub scales: Vec<f64>,
    pub zero_tokens: Vec<bool>,
}

impl EncodedChannelFrame {
    /// Σδ_n.
    pub fn real_dims(&self) -> usize {
        self.delta.iter().sum()
    }

    /// `k_n = δ_n / 2` for each token.
    pub fn complex_counts(&self) -> Vec<usize> {
        self.delta.iter().map(|d| d / 2).collect()
    }

    pub fn symbols(&self) -> Vec<Complex64> {
        self.tokens.iter().flat_map(|t| to_complex(t)).collect()
    }

    /// Same layout, new contents (e.g. the equalized received signal).
    pub fn with_symbols(&self, symbols: &[Complex64]) -> Result<Self, GjsccError> {
        let total: usize = self.complex_counts().iter().sum();
        if symbols.len() != total {
            return Err(GjsccError::Layout(format!(
                "expected {total} complex symbols, got {}",
                symbols.len()
            )));
        }
        let mut tokens = Vec::with_capacity(self.delta.len());
        let mut at = 0;
        for k in self.complex_counts() {
            tokens.push(to_real(&symbols[at..at + k]));
            at += k;
        }
        Ok(Self {
            tokens,
            ..self.clone()
        })
    }
}

fn check_positions(positions: &[usize], m: usize) -> Result<(), GjsccError> {
    if positions.is_empty() {
        return Err(GjsccError::EmptyRetained);
    }
    if positions.windows(2).any(|w| w[0] >= w[1]) || positions.iter().any(|&p| p >= m) {
        return Err(GjsccError::InvalidPositions(positions.to_vec()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EncodeCache {
    gathered: Vec<f64>,
    positions: Vec<usize>,
    attn: AttentionCache,
}

/// Embed every retained patch, add its positional embedding and run the
/// encoder attention over the retained tokens only.
pub fn semantic_encode(
    params: &CodecParams,
    grid: &PatchGrid,
    retained: &[usize],
) -> Result<(SemanticSequence, EncodeCache), GjsccError> {
    let dims = params.dims;
    let (l, q) = (dims.patch_dim(), dims.token_dim);
    if grid.patch_count != dims.patch_count() || grid.patch_dim != l {
        return Err(GjsccError::Geometry(format!(
            "patch grid {}×{} does not match codec {}×{}",
            grid.patch_count,
            grid.patch_dim,
            dims.patch_count(),
            l
        )));
    }
    check_positions(retained, dims.patch_count())?;
    let n = retained.len();
    let gathered: Vec<f64> = retained.iter().flat_map(|&m| grid.patch(m).to_vec()).collect();
    let mut x0 = matmul(&gathered, params.embed.data(), n, l, q);
    for (row, &m) in x0.chunks_exact_mut(q).zip(retained) {
        for (a, b) in row.iter_mut().zip(params.enc_pos.row(m)) {
            *a += b;
        }
    }
    let (tokens, attn) = attention_block(&params.enc_attn, &x0, n);
    Ok((
        SemanticSequence {
            tokens,
            positions: retained.to_vec(),
            token_dim: q,
        },
        EncodeCache {
            gathered,
            positions: retained.to_vec(),
            attn,
        },
    ))
}

pub fn semantic_encode_backward(
    params: &CodecParams,
    cache: &EncodeCache,
    d_tokens: &[f64],
    grads: &mut CodecParams,
) {
    let (l, q) = (params.dims.patch_dim(), params.dims.token_dim);
    let n = cache.positions.len();
    let dx0 = attention_backward(&params.enc_attn, &cache.attn, d_tokens, &mut grads.enc_attn);
    for (row, &m) in dx0.chunks_exact(q).zip(&cache.positions) {
        for (a, b) in grads.enc_pos.row_mut(m).iter_mut().zip(row) {
            *a += b;
        }
    }
    let d_embed = matmul_tn(&cache.gathered, &dx0, n, l, q);
    for (a, b) in grads.embed.data_mut().iter_mut().zip(&d_embed) {
        *a += b;
    }
}

#[derive(Clone, Debug)]
pub struct ChannelEncodeCache {
    /// Projected tokens before power normalization.
    projected: Vec<Vec<f64>>,
}

/// Project token `n` with the down-projection for `δ_n`, then normalize it
/// to unit average complex-symbol power.
pub fn channel_encode(
    params: &CodecParams,
    seq: &SemanticSequence,
    delta: &[usize],
) -> Result<(EncodedChannelFrame, ChannelEncodeCache), GjsccError> {
    let q = params.dims.token_dim;
    if delta.len() != seq.len() {
        return Err(GjsccError::Layout(format!(
            "{} rate levels for {} tokens",
            delta.len(),
            seq.len()
        )));
    }
    let mut projected = Vec::with_capacity(delta.len());
    let mut tokens = Vec::with_capacity(delta.len());
    let mut scales = Vec::with_capacity(delta.len());
    let mut zero_tokens = Vec::with_capacity(delta.len());
    for (n, &d) in delta.iter().enumerate() {
        let lvl = params.dims.level_index(d)?;
        let z = matmul(seq.token(n), params.down[lvl].data(), 1, q, d);
        let norm = normalize_power(&z);
        tokens.push(norm.values);
        scales.push(norm.scale);
        zero_tokens.push(norm.was_zero);
        projected.push(z);
    }
    Ok((
        EncodedChannelFrame {
            delta: delta.to_vec(),
            positions: seq.positions.clone(),
            tokens,
            scales,
            zero_tokens,
        },
        ChannelEncodeCache { projected },
    ))
}

pub fn channel_encode_backward(
    params: &CodecParams,
    seq: &SemanticSequence,
    frame: &EncodedChannelFrame,
    cache: &ChannelEncodeCache,
    d_frame: &[Vec<f64>],
    grads: &mut CodecParams,
) -> Vec<f64> {
    let q = params.dims.token_dim;
    let mut d_tokens = vec![0.0; seq.tokens.len()];
    for (n, &d) in frame.delta.iter().enumerate() {
        let lvl = params.dims.level_index(d).expect("validated in forward");
        let dx = &d_frame[n];
        // x = s·z with s = sqrt(k)/|z|: dz = s (dx − x̂ (x̂·dx)), x̂ = z/|z|
        let dz: Vec<f64> = if frame.zero_tokens[n] {
            dx.clone()
        } else {
            let z = &cache.projected[n];
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let proj: f64 = z.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>() / norm;
            let s = frame.scales[n];
            z.iter().zip(dx).map(|(zi, g)| s * (g - zi / norm * proj)).collect()
        };
        let dw = matmul_tn(seq.token(n), &dz, 1, q, d);
        for (a, b) in grads.down[lvl].data_mut().iter_mut().zip(&dw) {
            *a += b;
        }
        let de = crate::numerics::matmul_nt(&dz, params.down[lvl].data(), 1, d, q);
        d_tokens[n * q..(n + 1) * q].copy_from_slice(&de);
    }
    d_tokens
}

/// Restore `q`-dimensional tokens from a received frame.
pub fn channel_decode(
    params: &CodecParams,
    received: &EncodedChannelFrame,
    delta: &[usize],
) -> Result<SemanticSequence, GjsccError> {
    let q = params.dims.token_dim;
    if delta != received.delta.as_slice()
        || received.tokens.len() != delta.len()
        || received.tokens.iter().zip(delta).any(|(t, &d)| t.len() != d)
    {
        return Err(GjsccError::Layout(
            "received frame does not match the rate allocation".into(),
        ));
    }
    let mut tokens = Vec::with_capacity(delta.len() * q);
    for (t, &d) in received.tokens.iter().zip(delta) {
        let lvl = params.dims.level_index(d)?;
        tokens.extend(matmul(t, params.up[lvl].data(), 1, d, q));
    }
    Ok(SemanticSequence {
        tokens,
        positions: received.positions.clone(),
        token_dim: q,
    })
}

pub fn channel_decode_backward(
    params: &CodecParams,
    received: &EncodedChannelFrame,
    d_tokens: &[f64],
    grads: &mut CodecParams,
) -> Vec<Vec<f64>> {
    let q = params.dims.token_dim;
    received
        .tokens
        .iter()
        .zip(&received.delta)
        .enumerate()
        .map(|(n, (t, &d))| {
            let lvl = params.dims.level_index(d).expect("validated in forward");
            let g = &d_tokens[n * q..(n + 1) * q];
            let dw = matmul_tn(t, g, 1, d, q);
            for (a, b) in grads.up[lvl].data_mut().iter_mut().zip(&dw) {
                *a += b;
            }
            crate::numerics::matmul_nt(g, params.up[lvl].data(), 1, q, d)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DecodeCache {
    positions: Vec<usize>,
    /// Rows entering the decoder attention block (`M × q`).
    pub block_input: Vec<f64>,
    attn: AttentionCache,
    hidden: Vec<f64>,
}

/// Expand `N` estimated tokens to `M` with the latent set, then decode every
/// position to a patch.
pub fn semantic_decode(
    params: &CodecParams,
    estimated: &SemanticSequence,
) -> Result<(PatchGrid, DecodeCache), GjsccError> {
    let dims = params.dims;
    let (m, l, q) = (dims.patch_count(), dims.patch_dim(), dims.token_dim);
    check_positions(&estimated.positions, m)?;
    if estimated.tokens.len() != estimated.positions.len() * q {
        return Err(GjsccError::Layout("token count does not match positions".into()));
    }
    let mut full = params.latent.data().to_vec();
    for (n, &pos) in estimated.positions.iter().enumerate() {
        full[pos * q..(pos + 1) * q].copy_from_slice(estimated.token(n));
    }
    for (a, b) in full.iter_mut().zip(params.dec_pos.data()) {
        *a += b;
    }
    let (hidden, attn) = attention_block(&params.dec_attn, &full, m);
    let mut out = matmul(&hidden, params.out_w.data(), m, q, l);
    for row in out.chunks_exact_mut(l) {
        for (a, b) in row.iter_mut().zip(params.out_b.data()) {
            *a += b;
        }
    }
    Ok((
        PatchGrid {
            patches: out,
            patch_count: m,
            patch_dim: l,
        },
        DecodeCache {
            positions: estimated.positions.clone(),
            block_input: full,
            attn,
            hidden,
        },
    ))
}

/// Returns `∂L/∂(estimated tokens)`.
pub fn semantic_decode_backward(
    params: &CodecParams,
    cache: &DecodeCache,
    d_out: &[f64],
    grads: &mut CodecParams,
) -> Vec<f64> {
    let dims = params.dims;
    let (m, l, q) = (dims.patch_count(), dims.patch_dim(), dims.token_dim);
    let dw = matmul_tn(&cache.hidden, d_out, m, q, l);
    for (a, b) in grads.out_w.data_mut().iter_mut().zip(&dw) {
        *a += b;
    }
    for row in d_out.chunks_exact(l) {
        for (a, b) in grads.out_b.data_mut().iter_mut().zip(row) {
            *a += b;
        }
    }
    let d_hidden = crate::numerics::matmul_nt(d_out, params.out_w.data(), m, l, q);
    let d_full = attention_backward(&params.dec_attn, &cache.attn, &d_hidden, &mut grads.dec_attn);
    for (a, b) in grads.dec_pos.data_mut().iter_mut().zip(&d_full) {
        *a += b;
    }
    let mut transmitted = vec![false; m];
    let mut d_est = Vec::with_capacity(cache.positions.len() * q);
    for &pos in &cache.positions {
        transmitted[pos] = true;
        d_est.extend_from_slice(&d_full[pos * q..(pos + 1) * q]);
    }
    for (mi, sent) in transmitted.iter().enumerate() {
        if !sent {
            for (a, b) in grads.latent.row_mut(mi).iter_mut().zip(&d_full[mi * q..(mi + 1) * q]) {
                *a += b;
            }
        }
    }
    d_est
}

/// Everything needed to backpropagate one end-to-end pass.
#[derive(Clone, Debug)]
pub struct CodecForward {
    pub output: PatchGrid,
    pub encoded: SemanticSequence,
    pub frame: EncodedChannelFrame,
    pub received: EncodedChannelFrame,
    enc: EncodeCache,
    chan: ChannelEncodeCache,
    dec: DecodeCache,
}

impl CodecForward {
    pub fn decoder_cache(&self) -> &DecodeCache {
        &self.dec
    }
}

/// Encode, send through `link` (transmitted → equalized received symbols) and
/// decode one image.
pub fn codec_forward<F>(
    params: &CodecParams,
    grid: &PatchGrid,
    retained: &[usize],
    delta: &[usize],
    link: F,
) -> Result<CodecForward, GjsccError>
where
    F: FnOnce(&[Complex64]) -> Result<Vec<Complex64>, ChannelError>,
{
    let (encoded, enc) = semantic_encode(params, grid, retained)?;
    let (frame, chan) = channel_encode(params, &encoded, delta)?;
    let rx_symbols = link(&frame.symbols())?;
    let received = frame.with_symbols(&rx_symbols)?;
    let estimated = channel_decode(params, &received, delta)?;
    let (output, dec) = semantic_decode(params, &estimated)?;
    Ok(CodecForward {
        output,
        encoded,
        frame,
        received,
        enc,
        chan,
        dec,
    })
}

/// Gradients of a scalar w.r.t. every codec parameter given `∂L/∂Î`.
///
/// The equalized channel `ŷ = x + g/h` has unit Jacobian in `x`; any
/// quantizer inside `link` is treated as straight-through.
pub fn codec_backward(params: &CodecParams, fwd: &CodecForward, d_output: &[f64]) -> CodecParams {
    let mut grads = params.zeros_like();
    let d_est = semantic_decode_backward(params, &fwd.dec, d_output, &mut grads);
    let d_rx = channel_decode_backward(params, &fwd.received, &d_est, &mut grads);
    let d_enc = channel_encode_backward(params, &fwd.encoded, &fwd.frame, &fwd.chan, &d_rx, &mut grads);
    semantic_encode_backward(params, &fwd.enc, &d_enc, &mut grads);
    grads
}

/// Identity link for noiseless loopback.
pub fn noiseless(symbols: &[Complex64]) -> Result<Vec<Complex64>, ChannelError> {
    Ok(symbols.to_vec())
}

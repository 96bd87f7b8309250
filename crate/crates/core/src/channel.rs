//! Slow-fading / AWGN channel `Y = hX + G`, per-token power normalization and
//! zero-forcing equalization with known CSI.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{derive_rng, SimRng};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("deep fade: |h| = {magnitude:e} is below the equalization floor")]
    DeepFade { magnitude: f64 },
}

/// Channels below this gain magnitude are treated as lost frames.
pub const DEEP_FADE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Awgn,
    Rayleigh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelState {
    pub h: Complex64,
    /// Noise power `σ²` per complex symbol.
    pub noise_power: f64,
    pub mode: ChannelMode,
}

impl ChannelState {
    pub fn awgn(noise_power: f64) -> Self {
        Self {
            h: Complex64::new(1.0, 0.0),
            noise_power,
            mode: ChannelMode::Awgn,
        }
    }

    /// Draw the per-frame state; in Rayleigh mode `h ~ CN(0, fading_power)`.
    pub fn draw<R: Rng + ?Sized>(
        mode: ChannelMode,
        fading_power: f64,
        noise_power: f64,
        rng: &mut R,
    ) -> Self {
        let h = match mode {
            ChannelMode::Awgn => Complex64::new(1.0, 0.0),
            ChannelMode::Rayleigh => complex_normal(rng, fading_power),
        };
        Self {
            h,
            noise_power,
            mode,
        }
    }
}

/// `σ² = σ_h² · P_T / 10^(snr_db/10)` with `P_T = 1`.
pub fn noise_power_for_snr(snr_db: f64, fading_power: f64) -> f64 {
    fading_power / 10f64.powf(snr_db / 10.0)
}

/// Circularly-symmetric complex normal with `E|z|² = power`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Deterministic per-frame generator.
pub fn frame_rng(seed: u64, frame_index: u64) -> SimRng {
    derive_rng(seed, "channel-frame", frame_index)
}

/// `y = h·x + g`, with `h` held for the whole frame.
pub fn transmit<R: Rng + ?Sized>(x: &[Complex64], state: &ChannelState, rng: &mut R) -> Vec<Complex64> {
    if state.noise_power == 0.0 {
        return x.iter().map(|xi| state.h * xi).collect();
    }
    x.iter()
        .map(|xi| state.h * xi + complex_normal(rng, state.noise_power))
        .collect()
}

/// Zero-forcing equalization `ŷ = y / h`.
pub fn equalize(y: &[Complex64], h: Complex64) -> Result<Vec<Complex64>, ChannelError> {
    let magnitude = h.norm();
    if magnitude < DEEP_FADE_FLOOR {
        return Err(ChannelError::DeepFade { magnitude });
    }
    if h == Complex64::new(1.0, 0.0) {
        return Ok(y.to_vec());
    }
    Ok(y.iter().map(|yi| yi / h).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedVector {
    pub values: Vec<f64>,
    /// Factor applied to the input; 1 for the zero vector.
    pub scale: f64,
    pub was_zero: bool,
}

/// Scale a real vector of interleaved (re, im) pairs to unit average
/// complex-symbol power. Zero vectors pass through with `was_zero` set.
pub fn normalize_power(values: &[f64]) -> NormalizedVector {
    let k = values.len() as f64 / 2.0;
    let energy: f64 = values.iter().map(|v| v * v).sum();
    if energy == 0.0 || k == 0.0 {
        return NormalizedVector {
            values: values.to_vec(),
            scale: 1.0,
            was_zero: true,
        };
    }
    let scale = (k / energy).sqrt();
    NormalizedVector {
        values: values.iter().map(|v| v * scale).collect(),
        scale,
        was_zero: false,
    }
}

/// Average complex-symbol power of an interleaved real vector.
pub fn average_power(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / (values.len() as f64 / 2.0)
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

pub fn to_real(symbols: &[Complex64]) -> Vec<f64> {
    symbols.iter().flat_map(|s| [s.re, s.im]).collect()
}

/// Uniform mid-rise quantizer over `[-clip, clip]` applied to each real
/// component. Off by default; for ablations only.
pub fn quantize_uniform(symbols: &[Complex64], bits: u32, clip: f64) -> Vec<Complex64> {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * clip / levels;
    let q = |v: f64| {
        let idx = ((v.clamp(-clip, clip - 1e-15 * clip) + clip) / step).floor();
        -clip + (idx + 0.5) * step
    };
    symbols.iter().map(|s| Complex64::new(q(s.re), q(s.im))).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChannelLogRow {
    pub frame: u64,
    pub h_re: f64,
    pub h_im: f64,
    pub noise_power: f64,
}

pub fn write_channel_log<W: Write>(rows: &[ChannelLogRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

use serde::{Deserialize, Serialize};

use super::AccError;

/// Link parameters feeding the rate budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub bandwidth_hz: f64,
    /// Transmit power `P_T`; the power constraint fixes it at 1.
    #[serde(default = "one")]
    pub tx_power: f64,
    pub noise_power: f64,
    #[serde(default = "one")]
    pub fading_power: f64,
    /// `Q_mod`, bits carried per real channel symbol.
    pub constellation_bits: f64,
    pub delay_s: f64,
    /// Fraction of the link's symbol budget granted to one image.
    #[serde(default = "one")]
    pub budget_share: f64,
}

fn one() -> f64 {
    1.0
}

pub const REFERENCE_BANDWIDTH_HZ: f64 = 20e6;
pub const REFERENCE_DELAY_S: f64 = 10e-3;
pub const REFERENCE_CONSTELLATION_BITS: f64 = 8.0;

impl LinkConfig {
    /// 20 MHz, 10 ms, 8-bit constellation, `σ_h² = 1`, at the given SNR.
    pub fn reference(snr_db: f64) -> Self {
        Self {
            bandwidth_hz: REFERENCE_BANDWIDTH_HZ,
            tx_power: 1.0,
            noise_power: 1.0,
            fading_power: 1.0,
            constellation_bits: REFERENCE_CONSTELLATION_BITS,
            delay_s: REFERENCE_DELAY_S,
            budget_share: 1.0,
        }
        .with_snr_db(snr_db)
    }

    /// Sets `σ² = σ_h²·P_T / 10^(snr/10)`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_power = self.fading_power * self.tx_power / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn with_delay(mut self, delay_s: f64) -> Self {
        self.delay_s = delay_s;
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.fading_power * self.tx_power / self.noise_power).log10()
    }

    pub fn validate(&self) -> Result<(), AccError> {
        let ok = self.bandwidth_hz > 0.0
            && self.noise_power >= 0.0
            && self.fading_power > 0.0
            && self.constellation_bits >= 1.0
            && self.delay_s >= 0.0
            && self.tx_power == 1.0
            && (0.0..=1.0).contains(&self.budget_share)
            && self.budget_share > 0.0;
        if ok {
            Ok(())
        } else {
            Err(AccError::InvalidLink(format!("{self:?}")))
        }
    }
}

/// `R_cap = B·log2(1 + P_T σ_h² / σ²)` in bit/s.
pub fn compute_capacity(link: &LinkConfig) -> f64 {
    link.bandwidth_hz * (1.0 + link.tx_power * link.fading_power / link.noise_power).log2()
}

/// `R_sym = B·log2(1 + σ_h²/σ²) / Q_mod` in real symbols per second.
pub fn compute_symbol_rate(link: &LinkConfig) -> f64 {
    link.bandwidth_hz * (1.0 + link.fading_power / link.noise_power).log2() / link.constellation_bits
}

// D·R_sym is often an exact integer in decimal but lands a few ulps below it in binary.
fn floor_tolerant(x: f64) -> u64 {
    (x * (1.0 + 1e-12)).floor() as u64
}

/// `L_max = ⌊D · R_sym⌋`.
pub fn compute_l_max(link: &LinkConfig) -> u64 {
    floor_tolerant(link.delay_s * compute_symbol_rate(link))
}

/// Real-symbol budget for one image: `⌊D · R_sym · budget_share⌋`.
pub fn image_budget(link: &LinkConfig) -> u64 {
    floor_tolerant(link.delay_s * compute_symbol_rate(link) * link.budget_share)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rates() {
        let r0 = compute_symbol_rate(&LinkConfig::reference(0.0));
        assert!((r0 - 2.5e6).abs() < 1e-6);
        let r10 = compute_symbol_rate(&LinkConfig::reference(10.0));
        assert!((r10 / 8.6486e6 - 1.0).abs() < 0.005);
        let unit = LinkConfig {
            bandwidth_hz: 1.0,
            constellation_bits: 1.0,
            ..LinkConfig::reference(0.0)
        };
        assert!((compute_symbol_rate(&unit) - 1.0).abs() < 1e-15);
        assert!((compute_capacity(&LinkConfig::reference(0.0)) - 20e6).abs() < 1e-6);
    }

    #[test]
    fn l_max_values() {
        assert_eq!(compute_l_max(&LinkConfig::reference(0.0)), 25_000);
        assert_eq!(compute_l_max(&LinkConfig::reference(0.0).with_delay(0.0)), 0);
        let l20 = compute_l_max(&LinkConfig::reference(20.0)) as f64;
        assert_eq!((l20 / 1e3).round(), 166.0);
    }

    #[test]
    fn snr_round_trip() {
        for s in [-3.0, 0.0, 12.0, 20.0] {
            assert!((LinkConfig::reference(s).snr_db() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(LinkConfig::reference(0.0).validate().is_ok());
        let mut bad = LinkConfig::reference(0.0);
        bad.tx_power = 2.0;
        assert!(bad.validate().is_err());
        bad = LinkConfig::reference(0.0);
        bad.constellation_bits = 0.5;
        assert!(bad.validate().is_err());
    }
}

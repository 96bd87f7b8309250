use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GanForm {
    #[default]
    Hinge,
    /// `−E[log σ(𝒟(Î, I))]`, entering the objective with a minus sign.
    LiteralLog,
}

/// Adversarial terms over a batch of discriminator scores.
#[derive(Clone, Debug, PartialEq)]
pub struct GanTerms {
    pub generator_term: f64,
    pub discriminator_term: f64,
    /// `true` where the real sample still contributes to the discriminator.
    pub real_active: Vec<bool>,
    /// `true` where the fake sample still contributes to the discriminator.
    pub fake_active: Vec<bool>,
    /// `∂ generator_term / ∂ fake score`.
    pub d_generator: Vec<f64>,
    /// `∂ discriminator_term / ∂ real score`, zero where gated.
    pub d_disc_real: Vec<f64>,
    /// `∂ discriminator_term / ∂ fake score`, zero where gated.
    pub d_disc_fake: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Generator and discriminator terms from paired real/fake scores.
///
/// Hinge: real samples with `𝒟 ≥ 1` and fake samples with `𝒟 ≤ −1` are gated
/// out of the discriminator term. The generator term is never gated.
pub fn gan_terms_from_scores(real: &[f64], fake: &[f64], form: GanForm) -> GanTerms {
    debug_assert_eq!(real.len(), fake.len());
    let b = real.len().max(1) as f64;
    match form {
        GanForm::Hinge => {
            let real_active: Vec<bool> = real.iter().map(|&r| r < 1.0).collect();
            let fake_active: Vec<bool> = fake.iter().map(|&f| f > -1.0).collect();
            let discriminator_term = real
                .iter()
                .zip(fake)
                .map(|(r, f)| (1.0 - r).max(0.0) + (1.0 + f).max(0.0))
                .sum::<f64>()
                / b;
            GanTerms {
                generator_term: -fake.iter().sum::<f64>() / b,
                discriminator_term,
                d_generator: vec![-1.0 / b; fake.len()],
                d_disc_real: real_active.iter().map(|&a| if a { -1.0 / b } else { 0.0 }).collect(),
                d_disc_fake: fake_active.iter().map(|&a| if a { 1.0 / b } else { 0.0 }).collect(),
                real_active,
                fake_active,
            }
        }
        GanForm::LiteralLog => {
            let discriminator_term = real
                .iter()
                .zip(fake)
                .map(|(&r, &f)| neg_log_sigmoid(r) + neg_log_sigmoid(-f))
                .sum::<f64>()
                / b;
            GanTerms {
                generator_term: fake.iter().map(|&f| neg_log_sigmoid(f)).sum::<f64>() / b,
                discriminator_term,
                d_generator: fake.iter().map(|&f| -(1.0 - sigmoid(f)) / b).collect(),
                d_disc_real: real.iter().map(|&r| -(1.0 - sigmoid(r)) / b).collect(),
                d_disc_fake: fake.iter().map(|&f| sigmoid(f) / b).collect(),
                real_active: vec![true; real.len()],
                fake_active: vec![true; fake.len()],
            }
        }
    }
}

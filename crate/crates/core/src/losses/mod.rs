//! Training objective: weighted region loss, feature loss through a frozen
//! random network, and an adversarial term from a pairwise discriminator.

mod disc;
mod feature;
mod gan;

pub use disc::{DiscTrace, Discriminator, DISC_CHANNELS};
pub use feature::{FeatureMode, FeatureNet, PHI_CHANNELS};
pub use gan::{gan_terms_from_scores, GanForm, GanTerms};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gjscc::{patchify, unpatchify, GjsccError, PatchGrid};
use crate::numerics::Parameters;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Layout(#[from] GjsccError),
}

fn check_pair(a: &PatchGrid, b: &PatchGrid) -> Result<(), LossError> {
    if a.patch_count != b.patch_count || a.patch_dim != b.patch_dim {
        return Err(LossError::Shape(format!(
            "{}×{} vs {}×{}",
            a.patch_count, a.patch_dim, b.patch_count, b.patch_dim
        )));
    }
    Ok(())
}

/// `(1/M) Σ_m γ_m ‖i_m − î_m‖²` and its gradient w.r.t. `Î`.
pub fn region_loss_with_grad(
    original: &PatchGrid,
    output: &PatchGrid,
    gamma: &[f64],
) -> Result<(f64, Vec<f64>), LossError> {
    check_pair(original, output)?;
    if gamma.len() != original.patch_count {
        return Err(LossError::Shape(format!(
            "{} weights for {} patches",
            gamma.len(),
            original.patch_count
        )));
    }
    let m = original.patch_count as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; output.patches.len()];
    for (p, g) in gamma.iter().enumerate() {
        let (i, o) = (original.patch(p), output.patch(p));
        let d = &mut grad[p * original.patch_dim..(p + 1) * original.patch_dim];
        let mut sq = 0.0;
        for ((x, y), dd) in i.iter().zip(o).zip(d) {
            sq += (x - y).powi(2);
            *dd = 2.0 * g * (y - x) / m;
        }
        loss += g * sq;
    }
    Ok((loss / m, grad))
}

pub fn region_loss(original: &PatchGrid, output: &PatchGrid, gamma: &[f64]) -> Result<f64, LossError> {
    Ok(region_loss_with_grad(original, output, gamma)?.0)
}

fn side_of(grid: &PatchGrid) -> usize {
    ((grid.patch_count * grid.patch_dim) as f64).sqrt().round() as usize
}

fn patch_side_of(grid: &PatchGrid) -> usize {
    (grid.patch_dim as f64).sqrt().round() as usize
}

/// `‖φ(I) − φ(Î)‖²`.
pub fn feature_loss(original: &PatchGrid, output: &PatchGrid, phi: &FeatureNet) -> Result<f64, LossError> {
    check_pair(original, output)?;
    let side = side_of(original);
    let (loss, _) = phi.distance_with_grad(&unpatchify(original)?, &unpatchify(output)?, side);
    Ok(loss)
}

/// Adversarial terms for a batch of `(I, Î)` pairs. The real pair is `(I, I)`.
pub fn gan_terms(
    originals: &[PatchGrid],
    outputs: &[PatchGrid],
    disc: &Discriminator,
    form: GanForm,
) -> Result<GanTerms, LossError> {
    let mut real = Vec::with_capacity(originals.len());
    let mut fake = Vec::with_capacity(originals.len());
    for (i, o) in originals.iter().zip(outputs) {
        check_pair(i, o)?;
        let side = side_of(i);
        let (ii, oi) = (unpatchify(i)?, unpatchify(o)?);
        real.push(disc.score(&ii, &ii, side));
        fake.push(disc.score(&oi, &ii, side));
    }
    Ok(gan_terms_from_scores(&real, &fake, form))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambdas {
    pub region: f64,
    pub feature: f64,
    pub adversarial: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Self {
            region: 10.0,
            feature: 1.0,
            adversarial: 2.0,
        }
    }
}

impl Lambdas {
    /// Coefficient of the generator term in the objective.
    pub fn generator_weight(&self, form: GanForm) -> f64 {
        match form {
            GanForm::Hinge => self.adversarial,
            GanForm::LiteralLog => -self.adversarial,
        }
    }
}

/// `λ1·L_reg + λ2·L_fea ± λ3·L_gan`; the sign is negative in the literal form.
pub fn total_objective(l_reg: f64, l_fea: f64, generator_term: f64, lambdas: &Lambdas, form: GanForm) -> f64 {
    lambdas.region * l_reg + lambdas.feature * l_fea + lambdas.generator_weight(form) * generator_term
}

/// Loss components of one reconstructed image.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecLoss {
    pub l_reg: f64,
    pub l_fea: f64,
    pub generator_term: f64,
    pub total: f64,
    /// `∂ total / ∂Î`, in patch layout.
    pub d_output: Vec<f64>,
}

/// Frozen `φ`, the discriminator and the loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossNets {
    pub phi: FeatureNet,
    pub disc: Discriminator,
    pub lambdas: Lambdas,
    pub gan_form: GanForm,
}

impl LossNets {
    pub fn new(phi_seed: u64, disc_seed: u64, lambdas: Lambdas, gan_form: GanForm) -> Self {
        Self {
            phi: FeatureNet::new(phi_seed, FeatureMode::RandomConv),
            disc: Discriminator::new(disc_seed),
            lambdas,
            gan_form,
        }
    }

    /// Objective of one image and its gradient w.r.t. the reconstruction.
    pub fn codec_loss(&self, original: &PatchGrid, output: &PatchGrid, gamma: &[f64]) -> Result<CodecLoss, LossError> {
        let (l_reg, mut d_output) = region_loss_with_grad(original, output, gamma)?;
        d_output.iter_mut().for_each(|d| *d *= self.lambdas.region);
        let side = side_of(original);
        let patch_side = patch_side_of(original);
        let (img_i, img_o) = (unpatchify(original)?, unpatchify(output)?);

        let (l_fea, d_fea) = self.phi.distance_with_grad(&img_i, &img_o, side);
        let mut d_img: Vec<f64> = d_fea.iter().map(|d| d * self.lambdas.feature).collect();

        let weight = self.lambdas.generator_weight(self.gan_form);
        let trace = self.disc.forward(&img_o, &img_i, side);
        let terms = gan_terms_from_scores(&[trace.score], &[trace.score], self.gan_form);
        let generator_term = terms.generator_term;
        if weight != 0.0 {
            let d_gan = self.disc.backward(&trace, weight * terms.d_generator[0], None);
            d_img.iter_mut().zip(&d_gan).for_each(|(a, b)| *a += b);
        }
        let d_from_img = patchify(&d_img, patch_side)?;
        d_output.iter_mut().zip(&d_from_img.patches).for_each(|(a, b)| *a += b);
        Ok(CodecLoss {
            l_reg,
            l_fea,
            generator_term,
            total: total_objective(l_reg, l_fea, generator_term, &self.lambdas, self.gan_form),
            d_output,
        })
    }

    /// Discriminator term over a batch and its parameter gradient. Gated
    /// samples contribute nothing.
    pub fn disc_gradients(
        &self,
        originals: &[PatchGrid],
        outputs: &[PatchGrid],
    ) -> Result<(GanTerms, Discriminator), LossError> {
        let mut real = Vec::with_capacity(originals.len());
        let mut fake = Vec::with_capacity(originals.len());
        for (i, o) in originals.iter().zip(outputs) {
            check_pair(i, o)?;
            let side = side_of(i);
            let (ii, oi) = (unpatchify(i)?, unpatchify(o)?);
            real.push(self.disc.forward(&ii, &ii, side));
            fake.push(self.disc.forward(&oi, &ii, side));
        }
        let rs: Vec<f64> = real.iter().map(|t| t.score).collect();
        let fs: Vec<f64> = fake.iter().map(|t| t.score).collect();
        let terms = gan_terms_from_scores(&rs, &fs, self.gan_form);
        let mut grads = self.disc.zeros_like();
        for (n, (r, f)) in real.iter().zip(&fake).enumerate() {
            if terms.d_disc_real[n] != 0.0 {
                self.disc.backward(r, terms.d_disc_real[n], Some(&mut grads));
            }
            if terms.d_disc_fake[n] != 0.0 {
                self.disc.backward(f, terms.d_disc_fake[n], Some(&mut grads));
            }
        }
        Ok((terms, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>, m: usize) -> PatchGrid {
        let l = values.len() / m;
        PatchGrid { patches: values, patch_count: m, patch_dim: l }
    }

    #[test]
    fn region_examples() {
        let i = grid(vec![0.0; 8], 2);
        // squared distances 4 and 2
        let o = grid(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0], 2);
        assert_eq!(region_loss(&i, &o, &[1.0, 0.5]).unwrap(), 2.5);
        assert_eq!(region_loss(&i, &i, &[1.0, 0.5]).unwrap(), 0.0);
        assert_eq!(region_loss(&i, &o, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(region_loss(&i, &o, &[1.0]).is_err());
    }

    #[test]
    fn hinge_examples() {
        let t = gan_terms_from_scores(&[1.0], &[-1.0], GanForm::Hinge);
        assert_eq!(t.discriminator_term, 0.0);
        assert_eq!((t.real_active[0], t.fake_active[0]), (false, false));
        assert_eq!(t.d_disc_real[0], 0.0);
        assert_eq!(t.d_disc_fake[0], 0.0);
        let t = gan_terms_from_scores(&[0.5], &[0.0], GanForm::Hinge);
        assert_eq!(t.discriminator_term, 1.5);
        let t = gan_terms_from_scores(&[0.0, 0.0], &[0.0, 0.0], GanForm::Hinge);
        assert_eq!(t.generator_term, 0.0);
    }

    #[test]
    fn literal_log_is_finite_for_extreme_scores() {
        let t = gan_terms_from_scores(&[800.0, -800.0], &[-800.0, 800.0], GanForm::LiteralLog);
        assert!(t.generator_term.is_finite() && t.discriminator_term.is_finite());
        let t = gan_terms_from_scores(&[0.0], &[0.0], GanForm::LiteralLog);
        assert!((t.generator_term - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_examples() {
        let l = Lambdas::default();
        let v = total_objective(0.1, 0.2, 0.3, &l, GanForm::LiteralLog);
        assert!((v - 0.6).abs() < 1e-12);
        assert_eq!(total_objective(0.0, 0.0, 0.0, &l, GanForm::Hinge), 0.0);
        let no_adv = Lambdas { adversarial: 0.0, ..l };
        assert_eq!(
            total_objective(0.1, 0.2, 5.0, &no_adv, GanForm::Hinge),
            total_objective(0.1, 0.2, -7.0, &no_adv, GanForm::Hinge)
        );
    }
}

use serde::{Deserialize, Serialize};

use super::GjsccError;

/// Geometry of the codec: image side, patch side and token dimension `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecDims {
    pub image_side: usize,
    pub patch_side: usize,
    pub token_dim: usize,
}

impl Default for CodecDims {
    fn default() -> Self {
        Self {
            image_side: 32,
            patch_side: 4,
            token_dim: 16,
        }
    }
}

impl CodecDims {
    pub fn validate(&self) -> Result<(), GjsccError> {
        if self.patch_side == 0 || self.image_side % self.patch_side != 0 {
            return Err(GjsccError::Geometry(format!(
                "image side {} is not divisible by patch side {}",
                self.image_side, self.patch_side
            )));
        }
        if self.token_dim == 0 || self.token_dim % 8 != 0 {
            return Err(GjsccError::Geometry(format!(
                "token dimension {} must be a positive multiple of 8",
                self.token_dim
            )));
        }
        if self.token_dim > self.patch_dim() {
            return Err(GjsccError::Geometry(format!(
                "token dimension {} must not exceed patch dimension {}",
                self.token_dim,
                self.patch_dim()
            )));
        }
        Ok(())
    }

    /// `M`, the number of patches.
    pub fn patch_count(&self) -> usize {
        (self.image_side / self.patch_side).pow(2)
    }

    /// `l`, values per patch.
    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    /// The three embedding widths `{q/2, 3q/4, q}`, ascending.
    pub fn levels(&self) -> [usize; 3] {
        let q = self.token_dim;
        [q / 2, 3 * q / 4, q]
    }

    pub fn level_index(&self, delta: usize) -> Result<usize, GjsccError> {
        self.levels()
            .iter()
            .position(|&l| l == delta)
            .ok_or(GjsccError::IllegalLevel {
                delta,
                levels: self.levels(),
            })
    }
}

/// An image as `M` rows of `l` values.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patches: Vec<f64>,
    pub patch_count: usize,
    pub patch_dim: usize,
}

impl PatchGrid {
    pub fn patch(&self, m: usize) -> &[f64] {
        &self.patches[m * self.patch_dim..(m + 1) * self.patch_dim]
    }

    pub fn patch_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.patches[m * self.patch_dim..(m + 1) * self.patch_dim]
    }
}

/// Split a square row-major image into row-major non-overlapping patches.
pub fn patchify(image: &[f64], patch_side: usize) -> Result<PatchGrid, GjsccError> {
    let side = (image.len() as f64).sqrt().round() as usize;
    if side * side != image.len() {
        return Err(GjsccError::Geometry(format!("image of {} values is not square", image.len())));
    }
    if patch_side == 0 || side % patch_side != 0 {
        return Err(GjsccError::Geometry(format!(
            "image side {side} is not divisible by patch side {patch_side}"
        )));
    }
    let grid = side / patch_side;
    let l = patch_side * patch_side;
    let mut patches = vec![0.0; image.len()];
    for m in 0..grid * grid {
        let (gr, gc) = (m / grid, m % grid);
        for py in 0..patch_side {
            let src = (gr * patch_side + py) * side + gc * patch_side;
            let dst = m * l + py * patch_side;
            patches[dst..dst + patch_side].copy_from_slice(&image[src..src + patch_side]);
        }
    }
    Ok(PatchGrid {
        patches,
        patch_count: grid * grid,
        patch_dim: l,
    })
}

pub fn unpatchify(grid: &PatchGrid) -> Result<Vec<f64>, GjsccError> {
    let patch_side = (grid.patch_dim as f64).sqrt().round() as usize;
    let per_row = (grid.patch_count as f64).sqrt().round() as usize;
    if patch_side * patch_side != grid.patch_dim || per_row * per_row != grid.patch_count {
        return Err(GjsccError::Geometry("patch grid is not square".into()));
    }
    let side = per_row * patch_side;
    let mut image = vec![0.0; side * side];
    for m in 0..grid.patch_count {
        let (gr, gc) = (m / per_row, m % per_row);
        for py in 0..patch_side {
            let dst = (gr * patch_side + py) * side + gc * patch_side;
            let src = m * grid.patch_dim + py * patch_side;
            image[dst..dst + patch_side].copy_from_slice(&grid.patches[src..src + patch_side]);
        }
    }
    Ok(image)
}

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::numerics::{derive_rng, SimRng};

pub const IMAGE_SIDE: usize = 32;
pub const PATCH_SIDE: usize = 4;

/// Foreground shapes, one per class id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Square,
    Cross,
    Triangle,
    Ring,
    Diamond,
}

pub const SHAPES: [ShapeKind; 6] = [
    ShapeKind::Disk,
    ShapeKind::Square,
    ShapeKind::Cross,
    ShapeKind::Triangle,
    ShapeKind::Ring,
    ShapeKind::Diamond,
];

impl ShapeKind {
    /// Whether offset `(dx, dy)` from the centre lies inside a shape of radius `r`.
    fn contains(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            ShapeKind::Disk => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
            ShapeKind::Cross => {
                let arm = r / 3.0;
                (dx.abs() <= r && dy.abs() <= arm) || (dy.abs() <= r && dx.abs() <= arm)
            }
            ShapeKind::Triangle => {
                // apex up, base at dy = r
                let t = (dy + r) / (2.0 * r);
                (0.0..=1.0).contains(&t) && dx.abs() <= t * r
            }
            ShapeKind::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= r * r && d2 >= (0.5 * r) * (0.5 * r)
            }
            ShapeKind::Diamond => dx.abs() + dy.abs() <= 1.1 * r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    /// Row-major `IMAGE_SIDE × IMAGE_SIDE` intensities in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub label: usize,
    /// Sorted patch indices that contain foreground pixels.
    pub object_box: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub seed: u64,
    pub class_count: usize,
    pub noise_level: f64,
    pub images: Vec<LabeledImage>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Deterministic 80/20 train/test split (the corpus order is already shuffled).
    pub fn split(&self) -> (&[LabeledImage], &[LabeledImage]) {
        let n_train = (self.images.len() * 4).div_ceil(5);
        self.images.split_at(n_train)
    }
}

const MIN_RADIUS: f64 = 4.5;
const MAX_RADIUS: f64 = 7.5;
const MAX_ATTEMPTS: usize = 64;

/// Generate `count` labeled images with balanced labels.
pub fn generate_corpus(
    seed: u64,
    count: usize,
    class_count: usize,
    noise_level: f64,
) -> Result<Corpus, DatasetError> {
    if count == 0 {
        return Err(DatasetError::Config("count must be positive".into()));
    }
    if !(2..=SHAPES.len()).contains(&class_count) {
        return Err(DatasetError::Config(format!(
            "class count must be in [2, {}], got {class_count}",
            SHAPES.len()
        )));
    }
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(DatasetError::Config(format!("noise level {noise_level} outside [0, 1]")));
    }
    let mut labels: Vec<usize> = (0..count).map(|i| i % class_count).collect();
    labels.shuffle(&mut derive_rng(seed, "corpus-labels", 0));
    let images = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| render_image(&mut derive_rng(seed, "corpus-image", i as u64), label, noise_level))
        .collect();
    Ok(Corpus {
        seed,
        class_count,
        noise_level,
        images,
    })
}

fn render_image(rng: &mut SimRng, label: usize, noise_level: f64) -> LabeledImage {
    let shape = SHAPES[label];
    let side = IMAGE_SIDE;
    let grid = side / PATCH_SIDE;
    let max_box = grid * grid / 2;
    let noise = Normal::new(0.0, noise_level.max(1e-12)).expect("valid std");
    loop {
        for _ in 0..MAX_ATTEMPTS {
            let r = rng.random_range(MIN_RADIUS..MAX_RADIUS);
            let margin = r.ceil() + 1.0;
            let cx = rng.random_range(margin..side as f64 - margin);
            let cy = rng.random_range(margin..side as f64 - margin);
            let mut mask = vec![false; side * side];
            for y in 0..side {
                for x in 0..side {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    mask[y * side + x] = shape.contains(dx, dy, r);
                }
            }
            let mut object_box: Vec<usize> = (0..side * side)
                .filter(|&p| mask[p])
                .map(|p| (p / side / PATCH_SIDE) * grid + (p % side) / PATCH_SIDE)
                .collect();
            object_box.sort_unstable();
            object_box.dedup();
            if object_box.is_empty() || object_box.len() > max_box {
                continue;
            }
            let pixels = mask
                .iter()
                .map(|&fg| {
                    // background: dim, narrow texture; foreground: bright, wide texture
                    let base = if fg {
                        rng.random_range(0.6..1.0)
                    } else {
                        rng.random_range(0.05..0.25)
                    };
                    let v: f64 = if noise_level > 0.0 { base + noise.sample(rng) } else { base };
                    // stored at f32 precision so exported corpora round-trip exactly
                    v.clamp(0.0, 1.0) as f32 as f64
                })
                .collect();
            return LabeledImage {
                pixels,
                label,
                object_box,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = generate_corpus(7, 100, 4, 0.03).unwrap();
        let b = generate_corpus(7, 100, 4, 0.03).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(8, 100, 4, 0.03).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_balanced() {
        let c = generate_corpus(7, 100, 4, 0.03).unwrap();
        for k in 0..4 {
            assert_eq!(c.images.iter().filter(|i| i.label == k).count(), 25);
        }
        let c = generate_corpus(3, 10, 3, 0.03).unwrap();
        for k in 0..3 {
            let n = c.images.iter().filter(|i| i.label == k).count();
            assert!((3..=4).contains(&n));
        }
    }

    #[test]
    fn object_boxes_within_bounds() {
        let c = generate_corpus(11, 300, 6, 0.05).unwrap();
        let m = (IMAGE_SIDE / PATCH_SIDE).pow(2);
        for img in &c.images {
            assert!(!img.object_box.is_empty());
            assert!(img.object_box.len() <= m / 2);
            assert!(img.object_box.iter().all(|&p| p < m));
            assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
            assert_eq!(img.pixels.len(), IMAGE_SIDE * IMAGE_SIDE);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_corpus(1, 0, 4, 0.0).is_err());
        assert!(generate_corpus(1, 10, 1, 0.0).is_err());
        assert!(generate_corpus(1, 10, 7, 0.0).is_err());
    }
}

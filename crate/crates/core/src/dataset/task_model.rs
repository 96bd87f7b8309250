//! The frozen downstream classifier: conv → ReLU → conv → ReLU → GAP → linear.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledImage, IMAGE_SIDE};
use crate::layers::{
    activate, activate_backward, global_average_pool, global_average_pool_backward, Activation,
    Conv2d, Dense,
};
use crate::numerics::{
    derive_rng, softmax, visit_prefixed, visit_prefixed_mut, AdamConfig, AdamState, Parameters,
    Tensor,
};

pub const CONV1_CHANNELS: usize = 8;
/// Number of feature maps `T` emitted by the last convolution.
pub const FEATURE_MAPS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskModel {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub head: Dense,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct TaskForward {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    /// `A_t` maps, `[FEATURE_MAPS, side, side]`.
    pub feature_maps: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

impl TaskModel {
    pub fn new(class_count: usize, seed: u64) -> Self {
        let mut rng = derive_rng(seed, "task-init", 0);
        Self {
            conv1: Conv2d::new(1, CONV1_CHANNELS, 2, &mut rng),
            conv2: Conv2d::new(CONV1_CHANNELS, FEATURE_MAPS, 2, &mut rng),
            head: Dense::new(FEATURE_MAPS, class_count, &mut rng),
        }
    }

    pub fn class_count(&self) -> usize {
        self.head.outputs()
    }

    pub fn feature_map_count(&self) -> usize {
        self.conv2.out_channels()
    }

    /// Spatial side of the last convolution's maps.
    pub fn feature_side(&self) -> usize {
        self.conv2.output_side(self.conv1.output_side(IMAGE_SIDE))
    }

    pub fn forward(&self, image: &[f64]) -> TaskForward {
        let s1 = self.conv1.output_side(IMAGE_SIDE);
        let pre1 = self.conv1.forward(image, IMAGE_SIDE);
        let act1 = activate(&pre1, Activation::Relu);
        let pre2 = self.conv2.forward(&act1, s1);
        let feature_maps = activate(&pre2, Activation::Relu);
        let pooled = global_average_pool(&feature_maps, self.feature_map_count());
        let logits = self.head.forward(&pooled);
        TaskForward {
            input: image.to_vec(),
            pre1,
            act1,
            pre2,
            feature_maps,
            pooled,
            logits,
        }
    }

    pub fn logits(&self, image: &[f64]) -> Vec<f64> {
        self.forward(image).logits
    }

    /// Argmax class; ties go to the lowest class id.
    pub fn predict(&self, image: &[f64]) -> usize {
        argmax(&self.logits(image))
    }

    /// Gradient of `d_logits · logits` w.r.t. the last-conv feature maps, and
    /// (optionally) every parameter.
    pub fn backward(
        &self,
        fwd: &TaskForward,
        d_logits: &[f64],
        mut grads: Option<&mut TaskModel>,
    ) -> Vec<f64> {
        let area = self.feature_side().pow(2);
        let d_pooled = self
            .head
            .backward(&fwd.pooled, d_logits, grads.as_deref_mut().map(|g| &mut g.head));
        let d_maps = global_average_pool_backward(&d_pooled, area);
        if let Some(g) = grads {
            let s1 = self.conv1.output_side(IMAGE_SIDE);
            let d_pre2 = activate_backward(&fwd.pre2, &d_maps, Activation::Relu);
            let d_act1 = self.conv2.backward(&fwd.act1, s1, &d_pre2, Some(&mut g.conv2));
            let d_pre1 = activate_backward(&fwd.pre1, &d_act1, Activation::Relu);
            self.conv1.backward(&fwd.input, IMAGE_SIDE, &d_pre1, Some(&mut g.conv1));
        }
        d_maps
    }

    /// Softmax cross-entropy of one labeled image; accumulates gradients.
    pub fn cross_entropy(&self, image: &[f64], label: usize, grads: Option<&mut TaskModel>) -> f64 {
        let fwd = self.forward(image);
        let p = softmax(&fwd.logits);
        let loss = -(p[label].max(1e-300)).ln();
        if let Some(g) = grads {
            let mut d = p;
            d[label] -= 1.0;
            self.backward(&fwd, &d, Some(g));
        }
        loss
    }
}

impl Parameters for TaskModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_prefixed(&self.conv1, "conv1", f);
        visit_prefixed(&self.conv2, "conv2", f);
        visit_prefixed(&self.head, "head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_prefixed_mut(&mut self.conv1, "conv1", f);
        visit_prefixed_mut(&mut self.conv2, "conv2", f);
        visit_prefixed_mut(&mut self.head, "head", f);
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_accuracy: f64,
}

impl Default for TaskTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 5e-3,
            target_accuracy: 0.95,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedTaskModel {
    pub model: TaskModel,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
}

/// Fit a task model on `train`, stopping early once `test` accuracy reaches
/// the target. Never fails on accuracy; see [`train_task_model`].
pub fn fit_task_model(
    train: &[LabeledImage],
    test: &[LabeledImage],
    class_count: usize,
    seed: u64,
    cfg: TaskTrainConfig,
) -> Result<TrainedTaskModel, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut model = TaskModel::new(class_count, seed);
    let mut adam = AdamState::for_params(AdamConfig::with_learning_rate(cfg.learning_rate), &model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut test_accuracy = 0.0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut derive_rng(seed, "task-epoch", epoch as u64));
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = model.zeros_like();
            for &i in batch {
                model.cross_entropy(&train[i].pixels, train[i].label, Some(&mut grads));
            }
            grads.visit_mut(&mut |_, t| t.scale(1.0 / batch.len() as f64));
            adam.step(&mut model, &grads)?;
        }
        epochs_run = epoch + 1;
        if !test.is_empty() {
            test_accuracy = accuracy_on(&model, test);
            if test_accuracy >= cfg.target_accuracy {
                break;
            }
        }
    }
    let train_accuracy = accuracy_on(&model, train);
    Ok(TrainedTaskModel {
        model,
        train_accuracy,
        test_accuracy,
        epochs_run,
    })
}

/// Train the downstream model on the corpus' 80% split and require the
/// held-out 20% to reach the configured accuracy.
pub fn train_task_model(
    corpus: &super::Corpus,
    seed: u64,
    cfg: TaskTrainConfig,
) -> Result<TrainedTaskModel, DatasetError> {
    let (train, test) = corpus.split();
    let trained = fit_task_model(train, test, corpus.class_count, seed, cfg)?;
    if trained.test_accuracy < cfg.target_accuracy {
        return Err(DatasetError::AccuracyNotReached {
            reached: trained.test_accuracy,
            target: cfg.target_accuracy,
            epochs: trained.epochs_run,
        });
    }
    Ok(trained)
}

fn accuracy_on(model: &TaskModel, images: &[LabeledImage]) -> f64 {
    let correct = images
        .iter()
        .filter(|img| model.predict(&img.pixels) == img.label)
        .count();
    correct as f64 / images.len() as f64
}

/// Fraction of argmax-correct predictions.
pub fn task_accuracy<I: AsRef<[f64]>>(
    model: &TaskModel,
    images: &[I],
    labels: &[usize],
) -> Result<f64, DatasetError> {
    if images.is_empty() {
        return Err(DatasetError::Empty);
    }
    if images.len() != labels.len() {
        return Err(DatasetError::Config(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let correct = images
        .iter()
        .zip(labels)
        .filter(|(img, &l)| model.predict(img.as_ref()) == l)
        .count();
    Ok(correct as f64 / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_parameters, rng_from_seed, CheckOptions};
    use rand::Rng;

    #[test]
    fn shapes_and_finiteness() {
        let m = TaskModel::new(4, 3);
        assert_eq!(m.feature_side(), 8);
        assert_eq!(m.feature_map_count(), FEATURE_MAPS);
        let mut rng = rng_from_seed(1);
        let img: Vec<f64> = (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.random()).collect();
        let l = m.logits(&img);
        assert_eq!(l.len(), 4);
        assert!(l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn empty_accuracy_is_error() {
        let m = TaskModel::new(2, 0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(task_accuracy(&m, &empty, &[]).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        for seed in 0..3 {
            let m = TaskModel::new(4, seed);
            let mut rng = rng_from_seed(100 + seed);
            let img: Vec<f64> = (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.random()).collect();
            let mut g = m.zeros_like();
            m.cross_entropy(&img, 2, Some(&mut g));
            let reports = check_parameters(
                &m,
                &g,
                |p| p.cross_entropy(&img, 2, None),
                CheckOptions { seed, ..Default::default() },
            )
            .unwrap();
            for r in reports {
                assert!(r.max_rel_error < 1e-4, "{r:?}");
            }
        }
    }
}

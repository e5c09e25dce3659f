//! Data-augmentation experiment: does adding generated faces to a real
//! training set help an expression classifier?

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Image};
use crate::error::{Error, Result};
use crate::metrics::classifier::{ClassifierConfig, ExpressionClassifier};
use crate::train::Model;

/// Training/testing protocol of one row of the accuracy table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentMode {
    /// Train on real images, test on real images.
    #[serde(rename = "Real/Real")]
    RealReal,
    /// Train on real images, test on generated images.
    #[serde(rename = "Real/Syn.")]
    RealSyn,
    /// Real plus conventionally augmented images, test on real images.
    #[serde(rename = "Real+Nor./Real")]
    RealPlusNormal,
    /// Real plus generated images, test on real images.
    #[serde(rename = "Real+Syn./Real")]
    RealPlusSyn,
}

impl AugmentMode {
    pub const ALL: [AugmentMode; 4] = [
        AugmentMode::RealReal,
        AugmentMode::RealSyn,
        AugmentMode::RealPlusNormal,
        AugmentMode::RealPlusSyn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AugmentMode::RealReal => "Real/Real",
            AugmentMode::RealSyn => "Real/Syn.",
            AugmentMode::RealPlusNormal => "Real+Nor./Real",
            AugmentMode::RealPlusSyn => "Real+Syn./Real",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s) || m.label().trim_end_matches('.') == s)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                valid: Self::ALL.iter().map(|m| m.label().to_string()).collect(),
            })
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub image: Image,
    /// Index into the expression vocabulary.
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub mode: AugmentMode,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn get(&self, mode: AugmentMode) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

fn labeled(ds: &Dataset) -> Result<Vec<LabeledImage>> {
    ds.samples
        .iter()
        .map(|s| {
            Ok(LabeledImage {
                image: s.image.clone(),
                label: ds.vocabulary.index_of(&s.expression)?,
            })
        })
        .collect()
}

/// Generate every other expression from every real training face.
pub fn synthesize_training_set(
    model: &Model,
    real_train: &Dataset,
    deterministic: bool,
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    let vocab = model.vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in &real_train.samples {
        for (label, expr) in vocab.labels().iter().enumerate() {
            if *expr == s.expression {
                continue;
            }
            let intensity = model.intensity_levels().map(|l| l as u8);
            let g = model.generate(&s.image, expr, intensity, deterministic, &mut rng)?;
            out.push(LabeledImage { image: g.face, label });
        }
    }
    Ok(out)
}

const NOISE_STD: f64 = 0.05;
const MAX_ROTATION_DEG: f64 = 10.0;
const CROP_FRACTION: f64 = 0.9;

/// Gaussian noise, a small rotation and a random crop (resized back).
pub fn conventional_augment(img: &Image, rng: &mut ChaCha8Rng) -> Image {
    let (h, w) = (img.height(), img.width());
    // rotation about the center, white outside the source
    let theta = rng
        .random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
        .to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut rotated = Image::filled(h, w, [1.0; 3]);
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if (0.0..w as f64).contains(&sx) && (0.0..h as f64).contains(&sy) {
                rotated.set_pixel(r, c, img.sample_bilinear(sx, sy));
            }
        }
    }
    // crop
    let ch = ((h as f64) * CROP_FRACTION).round() as usize;
    let cw = ((w as f64) * CROP_FRACTION).round() as usize;
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    let mut crop = Image::filled(ch, cw, [1.0; 3]);
    for r in 0..ch {
        for c in 0..cw {
            crop.set_pixel(r, c, rotated.pixel(top + r, left + c));
        }
    }
    let mut out = crop.resized(h, w);
    // noise
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    for v in out.data_mut() {
        *v = (*v + noise.sample(rng) as f32).clamp(-1.0, 1.0);
    }
    out
}

/// `count` conventionally augmented copies drawn round-robin from `real`.
pub fn normal_augmented_set(real: &[LabeledImage], count: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..real.len()).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count && !real.is_empty() {
        order.shuffle(&mut rng);
        for &i in &order {
            if out.len() == count {
                break;
            }
            out.push(LabeledImage {
                image: conventional_augment(&real[i].image, &mut rng),
                label: real[i].label,
            });
        }
    }
    out
}

fn run_mode(
    train: &[LabeledImage],
    test: &[LabeledImage],
    mode: AugmentMode,
    vocab: &crate::data::Vocabulary,
    cfg: &ClassifierConfig,
) -> Result<AccuracyRow> {
    let images: Vec<&Image> = train.iter().map(|l| &l.image).collect();
    let labels: Vec<usize> = train.iter().map(|l| l.label).collect();
    let clf = ExpressionClassifier::train(&images, &labels, vocab, cfg)
        .map_err(|e| Error::invalid(format!("{mode}: {e}")))?;
    let test_images: Vec<&Image> = test.iter().map(|l| &l.image).collect();
    let test_labels: Vec<usize> = test.iter().map(|l| l.label).collect();
    Ok(AccuracyRow {
        mode,
        train_size: train.len(),
        test_size: test.len(),
        accuracy: clf.accuracy(&test_images, &test_labels)?,
    })
}

/// Train one classifier per mode and report its test accuracy. The
/// conventional-augmentation set is matched in size to `synth_train`.
pub fn augmentation_experiment(
    real_train: &Dataset,
    synth_train: &[LabeledImage],
    real_test: &Dataset,
    modes: &[AugmentMode],
    cfg: &ClassifierConfig,
) -> Result<AccuracyTable> {
    if real_train.vocabulary != real_test.vocabulary {
        return Err(Error::invalid("train and test vocabularies differ"));
    }
    let vocab = &real_train.vocabulary;
    let real = labeled(real_train)?;
    let test = labeled(real_test)?;
    if test.is_empty() {
        return Err(Error::invalid("augmentation test set is empty"));
    }
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();
    let mut rows = Vec::new();
    for mode in modes {
        let row = match mode {
            AugmentMode::RealReal => run_mode(&real, &test, mode, vocab, cfg)?,
            AugmentMode::RealSyn => {
                if synth_train.is_empty() {
                    return Err(Error::invalid("Real/Syn. needs generated images"));
                }
                run_mode(&real, synth_train, mode, vocab, cfg)?
            }
            AugmentMode::RealPlusNormal => {
                let mut train = real.clone();
                train.extend(normal_augmented_set(&real, synth_train.len(), cfg.seed));
                run_mode(&train, &test, mode, vocab, cfg)?
            }
            AugmentMode::RealPlusSyn => {
                let mut train = real.clone();
                train.extend(synth_train.iter().cloned());
                run_mode(&train, &test, mode, vocab, cfg)?
            }
        };
        rows.push(row);
    }
    Ok(AccuracyTable { rows })
}

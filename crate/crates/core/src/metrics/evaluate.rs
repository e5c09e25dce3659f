//! Model evaluation on held-out pairs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::landmark_distance;
use crate::data::{make_training_pairs, Dataset, Image, LandmarkSet, PairingPolicy};
use crate::error::{Error, Result};
use crate::identity::IdentityEmbedder;
use crate::metrics::classifier::ExpressionClassifier;
use crate::metrics::perceptual::{inception_score, lpips_like};
use crate::metrics::quality::{psnr_images, ssim_images};
use crate::train::{load_checkpoint, Model};

/// Aggregate scores over a test set. `psnr_mean` is `+inf` when every pair
/// is reproduced exactly (serialized as the string `"inf"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "inf_sentinel")]
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub inception_score: f64,
    pub lpips_like_mean: f64,
    pub landmark_l2_mean: f64,
    pub n_samples: usize,
    /// Whether generation ran with dropout disabled.
    pub deterministic: bool,
    pub seed: u64,
}

/// Serialize `f64::INFINITY` as `"inf"`; JSON has no infinity literal.
pub mod inf_sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    /// Disable dropout during generation (the default for evaluation).
    pub deterministic: bool,
    /// Seed of the dropout stream when `deterministic` is false.
    pub seed: u64,
    pub pairing: PairingPolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            deterministic: true,
            seed: 0,
            pairing: PairingPolicy::Cross,
        }
    }
}

/// One evaluated pair, kept for contact sheets.
pub struct EvalSample {
    pub input: Image,
    pub truth: Image,
    pub generated: Image,
    pub landmark_image: Image,
    pub expression: String,
    pub psnr: f64,
    pub ssim: f64,
    pub landmark_l2: f64,
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub samples: Vec<EvalSample>,
}

/// Score generated images and landmarks against ground truth.
pub fn score(
    generated: &[&Image],
    truth: &[&Image],
    generated_landmarks: &[&LandmarkSet],
    truth_landmarks: &[&LandmarkSet],
    feature_net: &IdentityEmbedder,
    classifier: &ExpressionClassifier,
) -> Result<MetricsReport> {
    let n = generated.len();
    if n == 0 {
        return Err(Error::invalid("nothing to evaluate"));
    }
    if truth.len() != n || generated_landmarks.len() != n || truth_landmarks.len() != n {
        return Err(Error::Shape("evaluation inputs differ in length".into()));
    }
    let (mut psnr, mut ssim, mut lpips, mut l2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        psnr += psnr_images(generated[i], truth[i])?;
        ssim += ssim_images(generated[i], truth[i])?;
        lpips += lpips_like(feature_net, generated[i], truth[i])?;
        l2 += landmark_distance(generated_landmarks[i], truth_landmarks[i]);
    }
    let nf = n as f64;
    Ok(MetricsReport {
        psnr_mean: psnr / nf,
        ssim_mean: ssim / nf,
        inception_score: inception_score(&classifier.predict_proba(generated)?)?,
        lpips_like_mean: lpips / nf,
        landmark_l2_mean: l2 / nf,
        n_samples: n,
        deterministic: true,
        seed: 0,
    })
}

/// Generate the target of every test pair from its conditional face alone
/// and score the results.
pub fn evaluate_model(
    model: &Model,
    test: &Dataset,
    feature_net: &IdentityEmbedder,
    classifier: &ExpressionClassifier,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let mut source = test.clone();
    if model.intensity_levels().is_none() {
        source.intensity_levels = None;
    }
    let pairs = make_training_pairs(&source, opts.pairing)?.pairs;
    if pairs.is_empty() {
        return Err(Error::invalid("test set yields no pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(pairs.len());
    let mut landmarks = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let intensity = model.intensity_levels().map(|_| p.y.intensity.unwrap_or(1));
        let g = model.generate(
            &p.x.image,
            &p.y.expression,
            intensity,
            opts.deterministic,
            &mut rng,
        )?;
        samples.push(EvalSample {
            input: p.x.image.clone(),
            truth: p.y.image.clone(),
            psnr: psnr_images(&g.face, &p.y.image)?,
            ssim: ssim_images(&g.face, &p.y.image)?,
            landmark_l2: landmark_distance(&g.landmarks, &p.y.landmarks),
            generated: g.face,
            landmark_image: g.landmark_image.image,
            expression: p.y.expression.clone(),
        });
        landmarks.push(g.landmarks);
    }
    let generated: Vec<&Image> = samples.iter().map(|s| &s.generated).collect();
    let truth: Vec<&Image> = samples.iter().map(|s| &s.truth).collect();
    let gen_lm: Vec<&LandmarkSet> = landmarks.iter().collect();
    let truth_lm: Vec<&LandmarkSet> = pairs.iter().map(|p| p.landmarks()).collect();
    let mut report = score(&generated, &truth, &gen_lm, &truth_lm, feature_net, classifier)?;
    report.deterministic = opts.deterministic;
    report.seed = opts.seed;
    Ok(Evaluation { report, samples })
}

/// [`evaluate_model`] on a checkpoint directory.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    test: &Dataset,
    feature_net: &IdentityEmbedder,
    classifier: &ExpressionClassifier,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let model = load_checkpoint(checkpoint)?.model;
    evaluate_model(&model, test, feature_net, classifier, opts)
}

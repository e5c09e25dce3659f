//! Small expression classifier: scores generated images (Inception Score)
//! and measures the value of synthetic training data.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{Image, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::perceptual::probabilities;
use crate::nn::backbone::{self, Backbone};
use crate::nn::layers::Linear;
use crate::nn::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub base_filters: usize,
    pub feature_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            base_filters: 16,
            feature_dim: 64,
            epochs: 15,
            batch_size: 8,
            seed: 0,
        }
    }
}

pub struct ExpressionClassifier {
    vocabulary: Vocabulary,
    backbone: Backbone,
    head: Linear,
    train_accuracy: f64,
    _params: ParamStore,
}

const EVAL_CHUNK: usize = 32;

impl ExpressionClassifier {
    /// Train on labeled images (labels index `vocabulary`). Every class must
    /// be present in the training set.
    pub fn train(
        images: &[&Image],
        labels: &[usize],
        vocabulary: &Vocabulary,
        cfg: &ClassifierConfig,
    ) -> Result<Self> {
        let k = vocabulary.len();
        if let Some(label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label index {label} outside vocabulary")));
        }
        for (class, name) in vocabulary.labels().iter().enumerate() {
            if !labels.contains(&class) {
                return Err(Error::invalid(format!(
                    "class `{name}` is absent from the classifier training set"
                )));
            }
        }
        let mut params = ParamStore::new(cfg.seed, DType::F32, &Device::Cpu);
        let backbone = Backbone::new(&mut params, cfg.base_filters, cfg.feature_dim)?;
        let head = Linear::new(&mut params, "head", cfg.feature_dim, k, 0.1)?;
        let logits = |x: &Tensor| -> Result<Tensor> { head.forward(&backbone.forward(x)?.relu()?) };
        let train_accuracy = backbone::fit(
            &params,
            &logits,
            images,
            labels,
            k,
            cfg.epochs,
            cfg.batch_size,
            cfg.seed,
        )?;
        Ok(Self {
            vocabulary: vocabulary.clone(),
            backbone,
            head,
            train_accuracy,
            _params: params,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    /// Class probabilities for every image.
    pub fn predict_proba(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(EVAL_CHUNK) {
            let x = Image::batch_tensor(chunk, &Device::Cpu, DType::F32)?;
            let logits = self.head.forward(&self.backbone.forward(&x)?.relu()?)?;
            out.extend(probabilities(&logits.to_dtype(DType::F64)?)?);
        }
        Ok(out)
    }

    pub fn predict(&self, images: &[&Image]) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(images)?
            .into_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }

    /// Fraction of images whose predicted class equals the label.
    pub fn accuracy(&self, images: &[&Image], labels: &[usize]) -> Result<f64> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(Error::invalid("accuracy needs a non-empty labeled set"));
        }
        let pred = self.predict(images)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

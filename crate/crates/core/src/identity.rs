//! Face identity feature extractor used by the identity-preservation loss.
//!
//! The embedder is a small CNN trained as a subject classifier on the training
//! split. After training the classification head is dropped, embeddings are
//! L2-normalized and the network is frozen: its tensors are cut from the
//! autodiff graph so gradients reach the images it embeds but never its own
//! parameters.

use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Image};
use crate::error::{Error, Result};
use crate::nn::backbone::{self, Backbone};
use crate::nn::layers::Linear;
use crate::nn::ParamStore;

const WEIGHTS_FILE: &str = "embedder.safetensors";
const META_FILE: &str = "embedder.json";
/// Logit scale of the cosine classification head used during training.
const HEAD_SCALE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub embedding_dim: usize,
    pub base_filters: usize,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            base_filters: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderTrainConfig {
    pub spec: EmbedderSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EmbedderTrainConfig {
    fn default() -> Self {
        Self {
            spec: EmbedderSpec::default(),
            epochs: 20,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EmbedderMeta {
    spec: EmbedderSpec,
    subject_vocab: Vec<String>,
    train_accuracy: Option<f64>,
    parameter_hash: String,
}

pub struct IdentityEmbedder {
    spec: EmbedderSpec,
    subject_vocab: Vec<String>,
    params: ParamStore,
    backbone: Backbone,
    frozen: bool,
    train_accuracy: Option<f64>,
}

impl IdentityEmbedder {
    /// Randomly initialized, trainable (unfrozen) embedder.
    pub fn new(
        spec: EmbedderSpec,
        subject_vocab: Vec<String>,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        if spec.embedding_dim == 0 || spec.base_filters == 0 {
            return Err(Error::invalid("embedder dimensions must be positive"));
        }
        let mut params = ParamStore::new(seed, dtype, device);
        let backbone = Backbone::new(&mut params, spec.base_filters, spec.embedding_dim)?;
        Ok(Self {
            spec,
            subject_vocab,
            params,
            backbone,
            frozen: false,
            train_accuracy: None,
        })
    }

    /// Freeze: from now on the parameters are read-only constants.
    pub fn freeze(mut self) -> Self {
        if !self.frozen {
            self.backbone = self.backbone.detached();
            self.frozen = true;
        }
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    pub fn subject_vocab(&self) -> &[String] {
        &self.subject_vocab
    }

    /// Subject-classification accuracy on the training set, if trained here.
    pub fn train_accuracy(&self) -> Option<f64> {
        self.train_accuracy
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// SHA-256 of all parameters; stable for as long as the embedder is frozen.
    pub fn parameter_hash(&self) -> Result<String> {
        self.params.hash()
    }

    /// Unit-norm embeddings `(B, embedding_dim)` of images `(B, 3, H, W)`.
    /// The network has no stochastic layers, so this is deterministic.
    pub fn embed_tensor(&self, x: &Tensor) -> Result<Tensor> {
        backbone::l2_normalize(&self.backbone.forward(x)?)
    }

    pub fn embed(&self, image: &Image) -> Result<Vec<f32>> {
        let x = image.to_tensor(self.device(), self.dtype())?;
        Ok(self
            .embed_tensor(&x)?
            .squeeze(0)?
            .to_dtype(DType::F32)?
            .to_vec1()?)
    }

    /// Intermediate activations of every encoder stage (perceptual features).
    pub fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.backbone.features(x)
    }

    /// Write weights and metadata into `dir` (created if needed). Only frozen
    /// embedders are saved.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.frozen {
            return Err(Error::NotFrozen);
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.params.save(&dir.join(WEIGHTS_FILE))?;
        let meta = EmbedderMeta {
            spec: self.spec.clone(),
            subject_vocab: self.subject_vocab.clone(),
            train_accuracy: self.train_accuracy,
            parameter_hash: self.parameter_hash()?,
        };
        let path = dir.join(META_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Load a saved embedder; the result is frozen and its hash verified.
    pub fn load(dir: &Path, dtype: DType, device: &Device) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: EmbedderMeta = serde_json::from_str(&text)?;
        let mut embedder = Self::new(meta.spec, meta.subject_vocab, 0, DType::F32, device)?;
        embedder.params.load(&dir.join(WEIGHTS_FILE))?;
        if embedder.parameter_hash()? != meta.parameter_hash {
            return Err(Error::Checkpoint(format!(
                "embedder weights in {} do not match the recorded hash",
                dir.display()
            )));
        }
        embedder.train_accuracy = meta.train_accuracy;
        if dtype != DType::F32 {
            embedder = embedder.with_dtype(dtype)?;
        }
        Ok(embedder.freeze())
    }

    fn with_dtype(self, dtype: DType) -> Result<Self> {
        let tensors = self.params.export("");
        let mut out = Self::new(self.spec, self.subject_vocab, 0, dtype, self.params.device())?;
        out.params.import(&tensors, "")?;
        out.train_accuracy = self.train_accuracy;
        Ok(out)
    }
}

/// Train an embedder as a subject classifier on `train` and return it frozen.
pub fn train_embedder(train: &Dataset, cfg: &EmbedderTrainConfig) -> Result<IdentityEmbedder> {
    let subjects = train.subjects();
    if subjects.len() < 2 {
        return Err(Error::invalid(format!(
            "identity embedder needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let device = Device::Cpu;
    let mut embedder =
        IdentityEmbedder::new(cfg.spec.clone(), subjects.clone(), cfg.seed, DType::F32, &device)?;
    let head = Linear::new(
        &mut embedder.params,
        "head",
        cfg.spec.embedding_dim,
        subjects.len(),
        0.1,
    )?;
    let images: Vec<&Image> = train.samples.iter().map(|s| &s.image).collect();
    let labels: Vec<usize> = train
        .samples
        .iter()
        .map(|s| {
            subjects
                .iter()
                .position(|x| *x == s.subject_id)
                .expect("subject listed")
        })
        .collect();
    let accuracy = {
        let bb = &embedder.backbone;
        let logits = |x: &Tensor| -> Result<Tensor> {
            let e = backbone::l2_normalize(&bb.forward(x)?)?;
            head.forward(&(e * HEAD_SCALE)?)
        };
        backbone::fit(
            &embedder.params,
            &logits,
            &images,
            &labels,
            subjects.len(),
            cfg.epochs,
            cfg.batch_size,
            cfg.seed,
        )?
    };
    // Drop the classification head's parameters before freezing.
    let tensors = embedder.params.export("");
    let mut kept = IdentityEmbedder::new(cfg.spec.clone(), subjects, cfg.seed, DType::F32, &device)?;
    kept.params.import(&tensors, "")?;
    kept.train_accuracy = Some(accuracy);
    log::info!("identity embedder trained: subject accuracy {accuracy:.3}");
    Ok(kept.freeze())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dtype: DType) -> IdentityEmbedder {
        let spec = EmbedderSpec {
            embedding_dim: 8,
            base_filters: 4,
        };
        IdentityEmbedder::new(spec, vec!["a".into(), "b".into()], 3, dtype, &Device::Cpu).unwrap()
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        let e = tiny(DType::F32).freeze();
        let img = crate::data::synth::SynthFace::new(
            crate::data::synth::SubjectParams::mean(),
            crate::data::synth::ExpressionParams::named("happy"),
        )
        .render(32);
        let a = e.embed(&img).unwrap();
        let b = e.embed(&img).unwrap();
        assert_eq!(a, b);
        let norm: f32 = a.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5, "norm {norm}");
    }

    #[test]
    fn unfrozen_embedder_cannot_be_saved() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(tiny(DType::F32).save(dir.path()), Err(Error::NotFrozen)));
    }

    #[test]
    fn save_load_preserves_hash_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let e = tiny(DType::F32).freeze();
        e.save(dir.path()).unwrap();
        let back = IdentityEmbedder::load(dir.path(), DType::F32, &Device::Cpu).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.parameter_hash().unwrap(), e.parameter_hash().unwrap());
        let img = Image::filled(32, 32, [0.2, -0.3, 0.5]);
        assert_eq!(back.embed(&img).unwrap(), e.embed(&img).unwrap());
    }

    #[test]
    fn frozen_embedder_passes_no_gradient_to_parameters() {
        let e = tiny(DType::F64).freeze();
        let x =
            candle_core::Var::from_tensor(&Tensor::randn(0f64, 0.5, (1, 3, 32, 32), &Device::Cpu).unwrap())
                .unwrap();
        let loss = e.embed_tensor(x.as_tensor()).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(x.as_tensor()).is_some());
        for (_, var) in e.params.vars() {
            assert!(grads.get(var.as_tensor()).is_none());
        }
    }

    #[test]
    fn single_subject_rejected() {
        let vocab = crate::data::Vocabulary::basic_expressions();
        let ds = crate::data::synth_corpus(1, &vocab, 1, 32, 0).unwrap();
        assert!(train_embedder(&ds, &EmbedderTrainConfig::default()).is_err());
    }
}

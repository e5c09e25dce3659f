use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{landmarks_from_tensor, LandmarkImage, Provenance};
use crate::data::{intensity_one_hot, one_hot, Image, LandmarkSet, TrainingPair, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{
    Adam, AdamConfig, Discriminator, DiscriminatorSpec, ExpressionGenerator, ForwardCtx, GeneratorSpec,
    LandmarkGenerator,
};
use crate::train::config::TrainConfig;

/// Seed offsets that give every network its own initialization stream.
const SEED_GL: u64 = 1;
const SEED_GE: u64 = 2;
const SEED_DL: u64 = 3;
const SEED_DE: u64 = 4;
const SEED_NOISE: u64 = 5;

fn derive_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

/// Networks, optimizers and random streams of a run: everything a checkpoint
/// must restore.
pub struct Model {
    pub(crate) cfg: TrainConfig,
    pub(crate) vocabulary: Vocabulary,
    pub(crate) intensity_levels: Option<usize>,
    pub(crate) g_l: LandmarkGenerator,
    pub(crate) g_e: ExpressionGenerator,
    pub(crate) d_l: Discriminator,
    pub(crate) d_e: Discriminator,
    pub(crate) opt_gl: Adam,
    pub(crate) opt_ge: Adam,
    pub(crate) opt_dl: Adam,
    pub(crate) opt_de: Adam,
    /// Dropout masks.
    pub(crate) noise_rng: ChaCha8Rng,
    pub(crate) step: u64,
}

/// Tensors of one batch of training pairs.
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
    /// Target landmarks `(B, 68, 2)`.
    pub landmarks: Tensor,
    pub expression: Tensor,
    pub intensity: Option<Tensor>,
}

impl Batch {
    pub fn new(pairs: &[&TrainingPair], device: &Device, dtype: DType) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let xs: Vec<&Image> = pairs.iter().map(|p| &p.x.image).collect();
        let ys: Vec<&Image> = pairs.iter().map(|p| &p.y.image).collect();
        let lms: Vec<&LandmarkSet> = pairs.iter().map(|p| p.landmarks()).collect();
        let rows = |vals: Vec<&[f32]>| -> Result<Tensor> {
            let width = vals[0].len();
            let flat: Vec<f32> = vals.concat();
            Ok(Tensor::from_vec(flat, (vals.len(), width), device)?.to_dtype(dtype)?)
        };
        let expression = rows(pairs.iter().map(|p| p.expression_label.values()).collect())?;
        let intensity = match pairs[0].intensity_label {
            Some(_) => Some(rows(
                pairs
                    .iter()
                    .map(|p| {
                        p.intensity_label
                            .as_ref()
                            .map(|l| l.values())
                            .ok_or_else(|| Error::invalid("batch mixes intensity-labeled pairs"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?),
            None => None,
        };
        Ok(Self {
            x: Image::batch_tensor(&xs, device, dtype)?,
            y: Image::batch_tensor(&ys, device, dtype)?,
            landmarks: crate::codec::landmarks_tensor(&lms, device, dtype)?,
            expression,
            intensity,
        })
    }

    pub fn size(&self) -> usize {
        self.x.dim(0).expect("rank-4 batch")
    }

    /// All label tensors in injection order (expression, then intensity).
    pub fn labels(&self) -> Vec<&Tensor> {
        std::iter::once(&self.expression)
            .chain(self.intensity.as_ref())
            .collect()
    }
}

/// Output of inference on one image.
pub struct Generated {
    pub landmarks: LandmarkSet,
    pub landmark_image: LandmarkImage,
    pub face: Image,
}

impl Model {
    pub fn new(cfg: TrainConfig, vocabulary: Vocabulary, intensity_levels: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        if cfg.intensity_conditioning && intensity_levels.is_none() {
            return Err(Error::invalid(
                "intensity conditioning needs a dataset with intensity levels",
            ));
        }
        let intensity_levels = if cfg.intensity_conditioning {
            intensity_levels
        } else {
            None
        };
        let device = Device::Cpu;
        let dtype = DType::F32;
        let dims: Vec<usize> = std::iter::once(vocabulary.len())
            .chain(intensity_levels)
            .collect();
        let routed = |on: bool| if on { dims.clone() } else { Vec::new() };
        let res = cfg.resolution;
        let base = cfg.base_filters;
        let seed = cfg.seed;
        let g_l = LandmarkGenerator::new(
            GeneratorSpec::landmark(res, base, routed(cfg.label_routing.to_landmark_generator()))?,
            derive_seed(seed, SEED_GL),
            dtype,
            &device,
        )?;
        let g_e = ExpressionGenerator::new(
            GeneratorSpec::expression(res, base, routed(cfg.label_routing.to_expression_generator()))?,
            derive_seed(seed, SEED_GE),
            dtype,
            &device,
        )?;
        let d_l = Discriminator::new(
            DiscriminatorSpec::new(3, base, cfg.dual_discriminators),
            derive_seed(seed, SEED_DL),
            dtype,
            &device,
        )?;
        let d_e = Discriminator::new(
            DiscriminatorSpec::new(6, base, cfg.dual_discriminators),
            derive_seed(seed, SEED_DE),
            dtype,
            &device,
        )?;
        let adam = AdamConfig::new(cfg.lr, cfg.beta1, cfg.beta2);
        Ok(Self {
            vocabulary,
            intensity_levels,
            g_l,
            g_e,
            d_l,
            d_e,
            opt_gl: Adam::new(adam),
            opt_ge: Adam::new(adam),
            opt_dl: Adam::new(adam),
            opt_de: Adam::new(adam),
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, SEED_NOISE)),
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn intensity_levels(&self) -> Option<usize> {
        self.intensity_levels
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn landmark_generator(&self) -> &LandmarkGenerator {
        &self.g_l
    }

    pub fn expression_generator(&self) -> &ExpressionGenerator {
        &self.g_e
    }

    pub fn landmark_discriminator(&self) -> &Discriminator {
        &self.d_l
    }

    pub fn expression_discriminator(&self) -> &Discriminator {
        &self.d_e
    }

    /// Parameter hashes of G_l, G_e, D_l, D_e, in that order.
    pub fn parameter_hashes(&self) -> Result<[String; 4]> {
        Ok([
            self.g_l.params().hash()?,
            self.g_e.params().hash()?,
            self.d_l.params().hash()?,
            self.d_e.params().hash()?,
        ])
    }

    /// Label tensors for one inference request.
    fn request_labels(&self, expression: &str, intensity: Option<u8>) -> Result<Vec<Tensor>> {
        let device = Device::Cpu;
        let to_tensor =
            |v: &[f32]| -> Result<Tensor> { Ok(Tensor::from_vec(v.to_vec(), (1, v.len()), &device)?) };
        let mut labels = vec![to_tensor(one_hot(expression, &self.vocabulary)?.values())?];
        if let Some(levels) = self.intensity_levels {
            let level = intensity.unwrap_or(1);
            labels.push(to_tensor(intensity_one_hot(level, levels)?.values())?);
        } else if intensity.is_some() {
            return Err(Error::invalid(
                "this model was not trained with intensity conditioning",
            ));
        }
        Ok(labels)
    }

    /// Run both stages on a single face. With `deterministic` dropout is off;
    /// otherwise dropout is the noise source, drawn from `rng`. Models with
    /// intensity conditioning use level 1 when `intensity` is omitted.
    pub fn generate(
        &self,
        image: &Image,
        expression: &str,
        intensity: Option<u8>,
        deterministic: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Generated> {
        let res = self.cfg.resolution;
        if image.height() != res || image.width() != res {
            return Err(Error::Shape(format!(
                "model expects {res}x{res} images, got {}x{}",
                image.height(),
                image.width()
            )));
        }
        let labels = self.request_labels(expression, intensity)?;
        let x = image.to_tensor(&Device::Cpu, DType::F32)?;
        let mut ctx = ForwardCtx::new(!deterministic, rng);
        let (coords, lm_image, face) =
            self.forward_stages(&x, &labels.iter().collect::<Vec<_>>(), &mut ctx)?;
        let landmarks = landmarks_from_tensor(&coords.detach(), 0)?;
        let render = self.cfg.render_config();
        Ok(Generated {
            landmarks,
            landmark_image: LandmarkImage {
                image: Image::from_tensor(&lm_image, 0)?,
                radius: render.radius,
                provenance: Provenance::Generated,
                clamped: false,
            },
            face: Image::from_tensor(&face, 0)?,
        })
    }

    /// Both stages with label routing applied; returns coordinates, landmark
    /// image and face.
    pub(crate) fn forward_stages(
        &self,
        x: &Tensor,
        labels: &[&Tensor],
        ctx: &mut ForwardCtx,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let routing = self.cfg.label_routing;
        let none: &[&Tensor] = &[];
        let gl_labels = if routing.to_landmark_generator() {
            labels
        } else {
            none
        };
        let ge_labels = if routing.to_expression_generator() {
            labels
        } else {
            none
        };
        let out = self.g_l.forward(x, gl_labels, &self.cfg.render_config(), ctx)?;
        let x_hat = Tensor::cat(&[x, &out.image], 1)?;
        let face = self.g_e.forward(&x_hat, ge_labels, ctx)?;
        Ok((out.coords, out.image, face))
    }
}

use std::sync::Arc;

use crate::data::image::Image;
use crate::data::labels::{intensity_one_hot, one_hot, LabelVector, Vocabulary};
use crate::data::landmarks::LandmarkSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FaceSample {
    pub image: Image,
    pub landmarks: LandmarkSet,
    pub subject_id: String,
    pub expression: String,
    pub intensity: Option<u8>,
    pub source_path: String,
}

impl FaceSample {
    /// Check the sample against a resolution and vocabulary.
    pub fn validate(&self, resolution: usize, vocabulary: &Vocabulary) -> Result<()> {
        if self.image.height() != resolution || self.image.width() != resolution {
            return Err(Error::Shape(format!(
                "sample {} is {}x{}, expected {resolution}x{resolution}",
                self.source_path,
                self.image.height(),
                self.image.width()
            )));
        }
        if !self.landmarks.in_bounds(resolution, resolution) {
            return Err(Error::invalid(format!(
                "sample {} has landmarks outside the image",
                self.source_path
            )));
        }
        vocabulary.index_of(&self.expression)?;
        Ok(())
    }
}

/// Validated, immutable collection of samples at one resolution.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Arc<FaceSample>>,
    pub vocabulary: Vocabulary,
    pub resolution: usize,
    /// Number of intensity levels when samples carry intensity labels.
    pub intensity_levels: Option<usize>,
}

impl Dataset {
    pub fn new(
        mut samples: Vec<FaceSample>,
        vocabulary: Vocabulary,
        resolution: usize,
        intensity_levels: Option<usize>,
    ) -> Result<Self> {
        for s in &samples {
            s.validate(resolution, &vocabulary)?;
            if let (Some(level), Some(levels)) = (s.intensity, intensity_levels) {
                if level == 0 || level as usize > levels {
                    return Err(Error::invalid(format!(
                        "sample {} has intensity {level} outside 1..={levels}",
                        s.source_path
                    )));
                }
            }
        }
        samples.sort_by(|a, b| a.source_path.cmp(&b.source_path));
        Ok(Self {
            samples: samples.into_iter().map(Arc::new).collect(),
            vocabulary,
            resolution,
            intensity_levels,
        })
    }

    pub(crate) fn from_shared(&self, samples: Vec<Arc<FaceSample>>) -> Self {
        Self {
            samples,
            vocabulary: self.vocabulary.clone(),
            resolution: self.resolution,
            intensity_levels: self.intensity_levels,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.samples.iter().map(|s| s.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// One optimization example: conditional face `x`, target face `y` of the
/// same subject, and the target's labels.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub x: Arc<FaceSample>,
    pub y: Arc<FaceSample>,
    pub expression_label: LabelVector,
    pub intensity_label: Option<LabelVector>,
}

impl TrainingPair {
    pub fn new(
        x: Arc<FaceSample>,
        y: Arc<FaceSample>,
        vocabulary: &Vocabulary,
        intensity_levels: Option<usize>,
    ) -> Result<Self> {
        if x.subject_id != y.subject_id {
            return Err(Error::invalid(format!(
                "pair mixes subjects {} and {}",
                x.subject_id, y.subject_id
            )));
        }
        let expression_label = one_hot(&y.expression, vocabulary)?;
        let intensity_label = match intensity_levels {
            Some(levels) => Some(intensity_one_hot(y.intensity.unwrap_or(1), levels)?),
            None => None,
        };
        Ok(Self {
            x,
            y,
            expression_label,
            intensity_label,
        })
    }

    /// Target landmarks `l`.
    pub fn landmarks(&self) -> &LandmarkSet {
        &self.y.landmarks
    }
}

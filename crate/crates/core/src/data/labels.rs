use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered label vocabulary (expressions or intensity levels).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Vec<String>);

impl Vocabulary {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("vocabulary is empty"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self(labels))
    }

    /// The seven basic expressions in alphabetical order.
    pub fn basic_expressions() -> Self {
        Self(
            ["angry", "disgust", "fear", "happy", "neutral", "sad", "surprise"]
                .map(String::from)
                .to_vec(),
        )
    }

    /// Labels `"1"`..`"levels"` for intensity conditioning.
    pub fn intensity_levels(levels: usize) -> Result<Self> {
        Self::new((1..=levels).map(|l| l.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.0
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                valid: self.0.clone(),
            })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.iter().any(|l| l == label)
    }
}

/// One-hot label vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    values: Vec<f32>,
    hot_index: usize,
}

impl LabelVector {
    pub fn from_index(hot_index: usize, len: usize) -> Result<Self> {
        if hot_index >= len {
            return Err(Error::invalid(format!(
                "hot index {hot_index} outside vector of length {len}"
            )));
        }
        let mut values = vec![0.0; len];
        values[hot_index] = 1.0;
        Ok(Self { values, hot_index })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn hot_index(&self) -> usize {
        self.hot_index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn one_hot(label: &str, vocabulary: &Vocabulary) -> Result<LabelVector> {
    LabelVector::from_index(vocabulary.index_of(label)?, vocabulary.len())
}

/// One-hot encoding of an intensity level in `1..=levels`.
pub fn intensity_one_hot(level: u8, levels: usize) -> Result<LabelVector> {
    if level == 0 || level as usize > levels {
        return Err(Error::invalid(format!("intensity {level} outside 1..={levels}")));
    }
    LabelVector::from_index(level as usize - 1, levels)
}

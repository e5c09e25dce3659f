use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::sample::{Dataset, FaceSample, TrainingPair};
use crate::error::Result;

/// How conditional/target pairs are formed within a subject.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPolicy {
    /// Every ordered pair with differing expressions.
    #[default]
    Cross,
    /// Only pairs whose conditional image is neutral.
    FromNeutral,
}

#[derive(Clone, Debug)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    /// Subjects skipped because they show a single expression.
    pub skipped_subjects: usize,
}

/// Pairs are emitted grouped by subject, in the dataset's sorted order.
pub fn make_training_pairs(dataset: &Dataset, policy: PairingPolicy) -> Result<PairSet> {
    let mut by_subject: BTreeMap<&str, Vec<&Arc<FaceSample>>> = BTreeMap::new();
    for s in &dataset.samples {
        by_subject.entry(s.subject_id.as_str()).or_default().push(s);
    }
    let mut pairs = Vec::new();
    let mut skipped_subjects = 0;
    for (subject, samples) in by_subject {
        let mut expressions: Vec<&str> = samples.iter().map(|s| s.expression.as_str()).collect();
        expressions.sort_unstable();
        expressions.dedup();
        if expressions.len() < 2 {
            log::warn!("subject {subject} has a single expression; skipped");
            skipped_subjects += 1;
            continue;
        }
        for x in &samples {
            if policy == PairingPolicy::FromNeutral && x.expression != "neutral" {
                continue;
            }
            for y in &samples {
                if x.expression == y.expression {
                    continue;
                }
                pairs.push(TrainingPair::new(
                    Arc::clone(x),
                    Arc::clone(y),
                    &dataset.vocabulary,
                    dataset.intensity_levels,
                )?);
            }
        }
    }
    Ok(PairSet {
        pairs,
        skipped_subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labels::Vocabulary;
    use crate::data::synth::synth_corpus;

    fn corpus(subjects: usize, vocab: &[&str]) -> Dataset {
        synth_corpus(
            subjects,
            &Vocabulary::new(vocab.iter().copied()).unwrap(),
            1,
            32,
            1,
        )
        .unwrap()
    }

    #[test]
    fn cross_pairs_three_expressions() {
        let d = corpus(1, &["happy", "neutral", "sad"]);
        assert_eq!(
            make_training_pairs(&d, PairingPolicy::Cross).unwrap().pairs.len(),
            6
        );
    }

    #[test]
    fn from_neutral_seven_expressions() {
        let d = synth_corpus(1, &Vocabulary::basic_expressions(), 1, 32, 1).unwrap();
        let set = make_training_pairs(&d, PairingPolicy::FromNeutral).unwrap();
        assert_eq!(set.pairs.len(), 6);
        assert!(set.pairs.iter().all(|p| p.x.expression == "neutral"));
    }

    #[test]
    fn pairs_never_cross_subjects() {
        let d = corpus(2, &["happy", "neutral", "sad"]);
        let set = make_training_pairs(&d, PairingPolicy::Cross).unwrap();
        assert_eq!(set.pairs.len(), 12);
        for p in &set.pairs {
            assert_eq!(p.x.subject_id, p.y.subject_id);
            assert_eq!(p.landmarks(), &p.y.landmarks);
            assert_ne!(p.x.expression, p.y.expression);
        }
    }

    #[test]
    fn single_expression_subject_skipped() {
        let d = corpus(2, &["neutral"]);
        let set = make_training_pairs(&d, PairingPolicy::Cross).unwrap();
        assert!(set.pairs.is_empty());
        assert_eq!(set.skipped_subjects, 2);
    }
}

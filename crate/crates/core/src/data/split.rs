use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::sample::{Dataset, FaceSample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Hold out this many whole subjects for testing.
    SubjectHoldout(usize),
    /// Put this fraction of each expression's samples in the test set.
    SampleFraction(f64),
}

/// Deterministic train/test split.
pub fn split(dataset: &Dataset, policy: SplitPolicy, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test): (Vec<Arc<FaceSample>>, Vec<Arc<FaceSample>>) = match policy {
        SplitPolicy::SubjectHoldout(n) => {
            let mut subjects = dataset.subjects();
            if n == 0 || n >= subjects.len() {
                return Err(Error::invalid(format!(
                    "cannot hold out {n} of {} subjects",
                    subjects.len()
                )));
            }
            subjects.shuffle(&mut rng);
            let held: Vec<String> = subjects[..n].to_vec();
            dataset
                .samples
                .iter()
                .cloned()
                .partition(|s| !held.contains(&s.subject_id))
        }
        SplitPolicy::SampleFraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("test fraction {f} outside (0, 1)")));
            }
            let mut by_expr: BTreeMap<&str, Vec<&Arc<FaceSample>>> = BTreeMap::new();
            for s in &dataset.samples {
                by_expr.entry(s.expression.as_str()).or_default().push(s);
            }
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (_, mut group) in by_expr {
                group.shuffle(&mut rng);
                let n_test = (group.len() as f64 * f).round() as usize;
                test.extend(group[..n_test].iter().map(|s| Arc::clone(s)));
                train.extend(group[n_test..].iter().map(|s| Arc::clone(s)));
            }
            train.sort_by(|a, b| a.source_path.cmp(&b.source_path));
            test.sort_by(|a, b| a.source_path.cmp(&b.source_path));
            (train, test)
        }
    };
    Ok((dataset.from_shared(train), dataset.from_shared(test)))
}

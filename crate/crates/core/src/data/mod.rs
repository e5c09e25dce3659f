//! Face datasets: manifests, the synthetic corpus, pairing and splitting.

pub mod image;
pub mod labels;
pub mod landmarks;
pub mod manifest;
pub mod pairs;
pub mod sample;
pub mod split;
pub mod synth;

pub use self::image::{denormalize, normalize, Image};
pub use labels::{intensity_one_hot, one_hot, LabelVector, Vocabulary};
pub use landmarks::{layout, LandmarkSet, N_LANDMARKS};
pub use manifest::{export_dataset, load_manifest, ManifestHeader, ManifestRow};
pub use pairs::{make_training_pairs, PairSet, PairingPolicy};
pub use sample::{Dataset, FaceSample, TrainingPair};
pub use split::{split, SplitPolicy};
pub use synth::{canonical_layout, random_layout, synth_corpus, ExpressionParams, SubjectParams, SynthFace};

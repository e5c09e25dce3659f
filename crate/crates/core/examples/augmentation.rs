//! Compare expression classifiers trained on real faces, real plus
//! conventionally augmented faces, and real plus generated faces.
//!
//! cargo run --release --example augmentation -- [steps]

use landmark_expr::data::{synth_corpus, Vocabulary};
use landmark_expr::metrics::{
    augmentation_experiment, synthesize_training_set, AugmentMode, ClassifierConfig,
};
use landmark_expr::train::{TrainConfig, Trainer};

fn main() -> landmark_expr::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(30, |s| s.parse().expect("steps"));
    let vocab = Vocabulary::basic_expressions();
    let train = synth_corpus(3, &vocab, 1, 32, 5)?;
    let test = synth_corpus(2, &vocab, 1, 32, 50)?;

    let cfg = TrainConfig {
        resolution: 32,
        base_filters: 8,
        use_identity_loss: false,
        max_steps: Some(steps),
        ..Default::default()
    };
    let mut trainer = Trainer::new(&train, cfg, None)?;
    trainer.run(steps)?;

    let synth = synthesize_training_set(trainer.model(), &train, true, 0)?;
    println!(
        "{} real and {} generated training faces",
        train.len(),
        synth.len()
    );
    let table = augmentation_experiment(
        &train,
        &synth,
        &test,
        &AugmentMode::ALL,
        &ClassifierConfig::default(),
    )?;
    print!("{}", table.to_text());
    Ok(())
}

//! Score a model on held-out subjects: PSNR, SSIM, Inception Score, the
//! learned perceptual distance and landmark error.
//!
//! cargo run --release --example evaluate -- [steps]

use landmark_expr::data::{split, synth_corpus, Image, SplitPolicy, Vocabulary};
use landmark_expr::identity::{train_embedder, EmbedderTrainConfig};
use landmark_expr::metrics::{evaluate_model, ClassifierConfig, EvalOptions, ExpressionClassifier};
use landmark_expr::train::{TrainConfig, Trainer};

fn main() -> landmark_expr::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(30, |s| s.parse().expect("steps"));
    let corpus = synth_corpus(4, &Vocabulary::basic_expressions(), 1, 32, 2)?;
    let (train, test) = split(&corpus, SplitPolicy::SubjectHoldout(1), 0)?;

    let embedder = train_embedder(&train, &EmbedderTrainConfig::default())?;
    let cfg = TrainConfig {
        resolution: 32,
        base_filters: 8,
        max_steps: Some(steps),
        ..Default::default()
    };
    let mut trainer = Trainer::new(&train, cfg, Some(&embedder))?;
    trainer.run(steps)?;

    // the Inception-Score classifier is trained on real faces only
    let images: Vec<&Image> = corpus.samples.iter().map(|s| &s.image).collect();
    let labels = corpus
        .samples
        .iter()
        .map(|s| corpus.vocabulary.index_of(&s.expression))
        .collect::<landmark_expr::Result<Vec<_>>>()?;
    let classifier =
        ExpressionClassifier::train(&images, &labels, &corpus.vocabulary, &ClassifierConfig::default())?;

    let eval = evaluate_model(
        trainer.model(),
        &test,
        &embedder,
        &classifier,
        &EvalOptions::default(),
    )?;
    print!("{}", eval.report.to_text());
    Ok(())
}

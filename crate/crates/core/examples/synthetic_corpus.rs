//! Render a small synthetic face corpus, split it by subject and export both
//! halves as manifests.
//!
//! cargo run --example synthetic_corpus -- [output-dir]

use std::path::PathBuf;

use landmark_expr::data::{export_dataset, split, synth_corpus, SplitPolicy, Vocabulary};

fn main() -> landmark_expr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/synthetic".into()));
    let vocab = Vocabulary::basic_expressions();
    let corpus = synth_corpus(4, &vocab, 1, 64, 0)?;
    println!(
        "{} faces, {} subjects, expressions: {}",
        corpus.len(),
        corpus.subjects().len(),
        vocab.labels().join(", ")
    );
    let (train, test) = split(&corpus, SplitPolicy::SubjectHoldout(1), 0)?;
    for (name, ds) in [("train", &train), ("test", &test)] {
        let path = export_dataset(ds, &out.join(name))?;
        println!("{name}: {} faces -> {}", ds.len(), path.display());
    }
    Ok(())
}

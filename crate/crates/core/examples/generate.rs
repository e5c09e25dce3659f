//! Translate one face into every expression of the vocabulary with a briefly
//! trained model, saving the landmark images and faces.
//!
//! cargo run --release --example generate -- [steps] [output-dir]

use std::path::PathBuf;

use landmark_expr::data::{synth_corpus, Vocabulary};
use landmark_expr::train::{TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> landmark_expr::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(30, |s| s.parse().expect("steps"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/generate".into()));
    std::fs::create_dir_all(&out).map_err(|e| landmark_expr::Error::io(&out, e))?;

    let corpus = synth_corpus(2, &Vocabulary::basic_expressions(), 1, 32, 1)?;
    let cfg = TrainConfig {
        resolution: 32,
        base_filters: 8,
        use_identity_loss: false,
        max_steps: Some(steps),
        ..Default::default()
    };
    let mut trainer = Trainer::new(&corpus, cfg, None)?;
    trainer.run(steps)?;
    let model = trainer.model();

    let input = &corpus.samples[0];
    input.image.save_png(&out.join("input.png"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for expr in model.vocabulary().labels() {
        let g = model.generate(&input.image, expr, None, true, &mut rng)?;
        g.landmark_image
            .save_png(&out.join(format!("{expr}_landmarks.png")))?;
        g.face.save_png(&out.join(format!("{expr}_face.png")))?;
        // dropout noise gives a second, different sample
        let noisy = model.generate(&input.image, expr, None, false, &mut rng)?;
        noisy.face.save_png(&out.join(format!("{expr}_face_noisy.png")))?;
    }
    println!(
        "generated {} expressions into {}",
        model.vocabulary().len(),
        out.display()
    );
    Ok(())
}

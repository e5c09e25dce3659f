//! Train both stages on a small synthetic corpus, writing the loss log and
//! checkpoints, then resume the finished run.
//!
//! cargo run --release --example train -- [steps] [output-dir]

use std::path::PathBuf;

use landmark_expr::data::{synth_corpus, Vocabulary};
use landmark_expr::identity::{train_embedder, EmbedderTrainConfig};
use landmark_expr::train::{resume_training, train, TrainConfig};

fn main() -> landmark_expr::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(40, |s| s.parse().expect("steps"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/train".into()));

    let corpus = synth_corpus(2, &Vocabulary::basic_expressions(), 1, 32, 7)?;
    let embedder = train_embedder(&corpus, &EmbedderTrainConfig::default())?;
    println!("identity embedder accuracy: {:?}", embedder.train_accuracy());

    let cfg = TrainConfig {
        resolution: 32,
        base_filters: 8,
        max_steps: Some(steps),
        checkpoint_every: (steps / 2).max(1),
        ..Default::default()
    };
    let outcome = train(&corpus, cfg, Some(&embedder), Some(&out))?;
    for r in outcome.reports.iter().step_by((steps as usize / 8).max(1)) {
        println!(
            "step {:>4}: stage 1 {:.3}  stage 2 {:.3}  l12 {:.4}  landmark {:.3}",
            r.step, r.stage1_total, r.stage2_total, r.l12, r.landmark_recon
        );
    }
    for c in &outcome.checkpoints {
        println!("checkpoint {}", c.display());
    }
    let again = resume_training(&corpus, Some(&embedder), &out)?;
    println!(
        "resuming the finished run trained {} more steps",
        again.reports.len()
    );
    Ok(())
}

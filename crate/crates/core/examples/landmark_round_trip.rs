//! Encode a face's landmarks as a landmark image and decode them again.
//!
//! cargo run --example landmark_round_trip -- [output-dir]

use std::path::PathBuf;

use landmark_expr::codec::{extract_landmarks, landmark_distance, render_landmark_image, RenderConfig};
use landmark_expr::data::{synth_corpus, Vocabulary};

fn main() -> landmark_expr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/round_trip".into()));
    std::fs::create_dir_all(&out).map_err(|e| landmark_expr::Error::io(&out, e))?;
    let corpus = synth_corpus(1, &Vocabulary::basic_expressions(), 1, 128, 3)?;
    for face in &corpus.samples {
        let cfg = RenderConfig::for_resolution(face.image.width());
        let encoded = render_landmark_image(&face.landmarks, &face.image, &cfg)?;
        let decoded = extract_landmarks(&encoded)?;
        println!(
            "{:>9}: mean error {:.3} px, {} points filled from the template",
            face.expression,
            landmark_distance(&decoded.landmarks, &face.landmarks),
            decoded.n_filled()
        );
        face.image
            .save_png(&out.join(format!("{}_face.png", face.expression)))?;
        encoded.save_png(&out.join(format!("{}_landmarks.png", face.expression)))?;
    }
    println!("images written to {}", out.display());
    Ok(())
}

//! Landmark coordinates <-> landmark images.

mod extract;
mod render;

pub use extract::{extract_landmarks, extract_landmarks_with_template, ExtractConfig, ExtractedLandmarks};
pub use render::{
    landmarks_from_tensor, landmarks_tensor, render_landmark_image, render_tensor, sample_bilinear,
    ColorMode, LandmarkImage, Provenance, RenderConfig, BASE_RADIUS, BASE_RESOLUTION, DEFAULT_SOFTNESS,
};

use crate::data::landmarks::point_distance;
use crate::data::LandmarkSet;

/// Mean per-point Euclidean distance between two ordered landmark sets.
pub fn landmark_distance(a: &LandmarkSet, b: &LandmarkSet) -> f64 {
    let n = a.points().len();
    a.points()
        .iter()
        .zip(b.points())
        .map(|(&x, &y)| point_distance(x, y))
        .sum::<f64>()
        / n as f64
}

//! Procedural cartoon faces with exact 68-point ground truth.
//!
//! Geometry lives in unit coordinates (the image spans `[0, 1]^2`) and is
//! scaled to the requested resolution, so landmark positions are analytic
//! and independent of rasterization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::image::Image;
use crate::data::labels::Vocabulary;
use crate::data::landmarks::{LandmarkSet, N_LANDMARKS};
use crate::data::sample::{Dataset, FaceSample};
use crate::error::{Error, Result};

const BACKGROUND: [f64; 3] = [0.93, 0.93, 0.95];
const MOUTH_INTERIOR: [f64; 3] = [0.25, 0.05, 0.08];
const SUPERSAMPLE: usize = 3;

/// Per-subject appearance and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectParams {
    pub skin: [f64; 3],
    pub eye_color: [f64; 3],
    pub lip_color: [f64; 3],
    pub brow_color: [f64; 3],
    pub center: [f64; 2],
    pub face_half_width: f64,
    pub face_half_height: f64,
    pub eye_offset: f64,
    pub eye_height: f64,
    pub eye_half_width: f64,
    pub eye_half_height: f64,
    pub brow_gap: f64,
    pub brow_half_length: f64,
    pub nose_length: f64,
    pub nose_half_width: f64,
    pub mouth_drop: f64,
    pub mouth_half_width: f64,
    pub lip_thickness: f64,
}

impl SubjectParams {
    /// Mean subject used for the canonical template.
    pub fn mean() -> Self {
        Self {
            skin: [0.85, 0.7, 0.6],
            eye_color: [0.2, 0.2, 0.3],
            lip_color: [0.75, 0.3, 0.35],
            brow_color: [0.3, 0.2, 0.15],
            center: [0.5, 0.52],
            face_half_width: 0.33,
            face_half_height: 0.41,
            eye_offset: 0.135,
            eye_height: 0.09,
            eye_half_width: 0.055,
            eye_half_height: 0.028,
            brow_gap: 0.07,
            brow_half_length: 0.065,
            nose_length: 0.115,
            nose_half_width: 0.04,
            mouth_drop: 0.19,
            mouth_half_width: 0.095,
            lip_thickness: 0.018,
        }
    }

    /// Randomized subject; `index` spreads skin hues around the color wheel.
    pub fn random(index: usize, rng: &mut ChaCha8Rng) -> Self {
        let hue_base: f64 = rng.random();
        let hue = (hue_base * 0.1 + index as f64 * 0.618_033_988_75).fract();
        let skin = hsv_to_rgb(hue, rng.random_range(0.35..0.55), rng.random_range(0.75..0.9));
        let eye_color = hsv_to_rgb(
            rng.random(),
            rng.random_range(0.4..0.8),
            rng.random_range(0.15..0.4),
        );
        let lip_color = hsv_to_rgb(
            rng.random_range(0.93..1.02f64).fract(),
            rng.random_range(0.5..0.7),
            rng.random_range(0.55..0.75),
        );
        let brow_color = hsv_to_rgb(
            rng.random(),
            rng.random_range(0.3..0.6),
            rng.random_range(0.1..0.3),
        );
        let m = Self::mean();
        let mut jitter = |v: f64, rel: f64| v * (1.0 + rng.random_range(-rel..rel));
        Self {
            skin,
            eye_color,
            lip_color,
            brow_color,
            center: [jitter(m.center[0], 0.03), jitter(m.center[1], 0.03)],
            face_half_width: jitter(m.face_half_width, 0.08),
            face_half_height: jitter(m.face_half_height, 0.06),
            eye_offset: jitter(m.eye_offset, 0.1),
            eye_height: jitter(m.eye_height, 0.15),
            eye_half_width: jitter(m.eye_half_width, 0.12),
            eye_half_height: jitter(m.eye_half_height, 0.15),
            brow_gap: jitter(m.brow_gap, 0.12),
            brow_half_length: jitter(m.brow_half_length, 0.1),
            nose_length: jitter(m.nose_length, 0.1),
            nose_half_width: jitter(m.nose_half_width, 0.15),
            mouth_drop: jitter(m.mouth_drop, 0.08),
            mouth_half_width: jitter(m.mouth_half_width, 0.12),
            lip_thickness: jitter(m.lip_thickness, 0.15),
        }
    }
}

/// Parametric expression deformation at full intensity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExpressionParams {
    /// Upward displacement of the mouth corners.
    pub mouth_curve: f64,
    /// Gap between the inner lips.
    pub mouth_open: f64,
    /// Brow rotation in radians; positive lowers the inner ends.
    pub brow_angle: f64,
    /// Upward brow displacement.
    pub brow_raise: f64,
    /// Relative change of mouth width.
    pub mouth_stretch: f64,
    /// Relative change of eye opening.
    pub eye_open: f64,
}

impl ExpressionParams {
    /// Deformation for a named expression; unknown names fall back to neutral.
    pub fn named(expression: &str) -> Self {
        let p = |mouth_curve, mouth_open, brow_angle, brow_raise, mouth_stretch, eye_open| Self {
            mouth_curve,
            mouth_open,
            brow_angle,
            brow_raise,
            mouth_stretch,
            eye_open,
        };
        match expression {
            "happy" => p(0.045, 0.03, 0.0, 0.005, 0.18, -0.25),
            "sad" => p(-0.035, 0.0, -0.3, 0.0, -0.08, -0.15),
            "angry" => p(-0.015, 0.012, 0.38, -0.018, -0.1, -0.2),
            "disgust" => p(-0.025, 0.018, 0.22, -0.012, -0.05, -0.3),
            "fear" => p(-0.01, 0.045, -0.25, 0.022, 0.08, 0.35),
            "surprise" => p(0.0, 0.085, 0.0, 0.035, -0.15, 0.45),
            _ => Self::default(),
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            mouth_curve: self.mouth_curve * s,
            mouth_open: self.mouth_open * s,
            brow_angle: self.brow_angle * s,
            brow_raise: self.brow_raise * s,
            mouth_stretch: self.mouth_stretch * s,
            eye_open: self.eye_open * s,
        }
    }
}

/// One face: subject plus (already intensity-scaled) expression.
#[derive(Clone, Debug)]
pub struct SynthFace {
    pub subject: SubjectParams,
    pub expression: ExpressionParams,
}

impl SynthFace {
    pub fn new(subject: SubjectParams, expression: ExpressionParams) -> Self {
        Self { subject, expression }
    }

    /// Landmarks in unit coordinates.
    pub fn unit_landmarks(&self) -> Vec<[f64; 2]> {
        let s = &self.subject;
        let e = &self.expression;
        let [cx, cy] = s.center;
        let mut pts = Vec::with_capacity(N_LANDMARKS);

        // jaw: ellipse arc from just above the left ear around the chin
        for i in 0..17 {
            let theta = (190.0 - 12.5 * i as f64).to_radians();
            pts.push([
                cx + s.face_half_width * theta.cos(),
                cy + s.face_half_height * theta.sin(),
            ]);
        }

        let eye_y = cy - s.eye_height;
        let brow_y = eye_y - s.brow_gap - e.brow_raise;
        // brows: outer end first on the image-left brow, inner end first on the right
        for side in [-1.0, 1.0] {
            let bx = cx + side * s.eye_offset;
            for j in 0..5 {
                // u = -1 outer .. 1 inner
                let u = if side < 0.0 {
                    -1.0 + 0.5 * j as f64
                } else {
                    1.0 - 0.5 * j as f64
                };
                let x = bx - side * u * s.brow_half_length;
                let arch = 0.3 * s.brow_half_length * (1.0 - u * u);
                let y = brow_y - arch + e.brow_angle.sin() * u * s.brow_half_length;
                pts.push([x, y]);
            }
        }

        // nose bridge and base
        let tip_y = eye_y + s.nose_length;
        for j in 0..4 {
            pts.push([cx, eye_y + 0.02 + (s.nose_length - 0.02) * j as f64 / 3.0]);
        }
        for j in 0..5 {
            let u = -1.0 + 0.5 * j as f64;
            pts.push([cx + u * s.nose_half_width, tip_y + 0.012 * (1.0 - u * u) + 0.008]);
        }

        // eyes: corner, two upper, corner, two lower
        let eh = s.eye_half_height * (1.0 + e.eye_open);
        let k = (8.0f64 / 9.0).sqrt();
        for side in [-1.0, 1.0] {
            let ex = cx + side * s.eye_offset;
            let ew = s.eye_half_width;
            pts.push([ex - ew, eye_y]);
            pts.push([ex - ew / 3.0, eye_y - eh * k]);
            pts.push([ex + ew / 3.0, eye_y - eh * k]);
            pts.push([ex + ew, eye_y]);
            pts.push([ex + ew / 3.0, eye_y + eh * k]);
            pts.push([ex - ew / 3.0, eye_y + eh * k]);
        }

        // mouth
        let my = cy + s.mouth_drop;
        let mw = s.mouth_half_width * (1.0 + e.mouth_stretch);
        let base = |u: f64| my - e.mouth_curve * u * u;
        let half_open = |u: f64| 0.5 * e.mouth_open * (1.0 - u * u).max(0.0).sqrt();
        let lip = |u: f64| s.lip_thickness * (1.0 - u * u).max(0.0).sqrt();
        let upper_outer = |u: f64| base(u) - half_open(u) - lip(u);
        let lower_outer = |u: f64| base(u) + half_open(u) + 1.2 * lip(u);
        for j in 0..7 {
            let u = -1.0 + j as f64 / 3.0;
            pts.push([cx + u * mw, upper_outer(u)]);
        }
        for j in 1..6 {
            let u = 1.0 - j as f64 / 3.0;
            pts.push([cx + u * mw, lower_outer(u)]);
        }
        let inner_u = [-0.8, -0.4, 0.0, 0.4, 0.8];
        pts.push([cx + inner_u[0] * mw, base(inner_u[0])]);
        for &u in &inner_u[1..4] {
            pts.push([cx + u * mw, base(u) - half_open(u)]);
        }
        pts.push([cx + inner_u[4] * mw, base(inner_u[4])]);
        for &u in inner_u[1..4].iter().rev() {
            pts.push([cx + u * mw, base(u) + half_open(u)]);
        }
        debug_assert_eq!(pts.len(), N_LANDMARKS);
        pts
    }

    pub fn landmarks(&self, resolution: usize) -> LandmarkSet {
        let r = resolution as f64;
        LandmarkSet::new(
            self.unit_landmarks()
                .into_iter()
                .map(|[x, y]| [x * r, y * r])
                .collect(),
        )
        .expect("68 finite points")
    }

    /// Unit-space color of the face at a point.
    fn shade(&self, x: f64, y: f64, pts: &[[f64; 2]]) -> [f64; 3] {
        let s = &self.subject;
        let [cx, cy] = s.center;
        let fx = (x - cx) / s.face_half_width;
        let fy = (y - cy) / s.face_half_height;
        if fx * fx + fy * fy > 1.0 {
            return BACKGROUND;
        }
        if in_polygon(x, y, &pts[60..68]) {
            return MOUTH_INTERIOR;
        }
        if in_polygon(x, y, &pts[48..60]) {
            return s.lip_color;
        }
        if in_polygon(x, y, &pts[36..42]) || in_polygon(x, y, &pts[42..48]) {
            return s.eye_color;
        }
        let brow_w = 0.012;
        if near_polyline(x, y, &pts[17..22], brow_w) || near_polyline(x, y, &pts[22..27], brow_w) {
            return s.brow_color;
        }
        let nose_w = 0.006;
        if near_polyline(x, y, &pts[27..31], nose_w) || near_polyline(x, y, &pts[31..36], nose_w) {
            return s.skin.map(|c| c * 0.7);
        }
        s.skin
    }

    /// Rasterize with supersampled anti-aliasing.
    pub fn render(&self, resolution: usize) -> Image {
        self.render_marked(resolution, None)
    }

    /// Render with an anti-aliased green marker of radius `1.5` px drawn over
    /// landmark `marker`.
    pub fn render_marked(&self, resolution: usize, marker: Option<usize>) -> Image {
        let pts = self.unit_landmarks();
        let r = resolution as f64;
        let marker_pt = marker.map(|i| pts[i]);
        let mut img = Image::filled(resolution, resolution, [1.0; 3]);
        let n = SUPERSAMPLE;
        for row in 0..resolution {
            for col in 0..resolution {
                let mut acc = [0.0f64; 3];
                for sy in 0..n {
                    for sx in 0..n {
                        let px = col as f64 + (sx as f64 + 0.5) / n as f64;
                        let py = row as f64 + (sy as f64 + 0.5) / n as f64;
                        let mut c = self.shade(px / r, py / r, &pts);
                        if let Some([mx, my]) = marker_pt {
                            if (px - mx * r).powi(2) + (py - my * r).powi(2) <= 1.5 * 1.5 {
                                c = MARKER;
                            }
                        }
                        for k in 0..3 {
                            acc[k] += c[k];
                        }
                    }
                }
                let inv = 1.0 / (n * n) as f64;
                img.set_pixel(row, col, acc.map(|v| (v * inv * 2.0 - 1.0) as f32));
            }
        }
        img
    }
}

/// Pure marker color in `[0, 1]` units.
pub const MARKER: [f64; 3] = [0.0, 1.0, 0.0];

/// Mean-subject neutral layout at a resolution; the default assignment
/// template for landmark extraction.
pub fn canonical_layout(resolution: usize) -> LandmarkSet {
    SynthFace::new(SubjectParams::mean(), ExpressionParams::default()).landmarks(resolution)
}

/// Uniformly random layout whose points keep at least `min_distance` pixels
/// apart and stay `margin` pixels inside the canvas (rejection sampling).
pub fn random_layout(
    resolution: usize,
    min_distance: f64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LandmarkSet> {
    const MAX_ATTEMPTS: usize = 100_000;
    let span = resolution as f64 - 2.0 * margin;
    if !(span > 0.0) {
        return Err(Error::invalid("random_layout margin leaves no room"));
    }
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(N_LANDMARKS);
    for _ in 0..MAX_ATTEMPTS {
        let c = [
            margin + rng.random::<f64>() * span,
            margin + rng.random::<f64>() * span,
        ];
        if points
            .iter()
            .all(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() >= min_distance)
        {
            points.push(c);
            if points.len() == N_LANDMARKS {
                return LandmarkSet::new(points);
            }
        }
    }
    Err(Error::invalid(format!(
        "could not place {N_LANDMARKS} points {min_distance} px apart at {resolution}x{resolution}"
    )))
}

/// Render a deterministic corpus: every subject shows every expression, each
/// non-neutral expression at `intensities` levels (neutral once). Deformations
/// scale with `level / intensities`. Samples carry an intensity label only
/// when `intensities > 1`.
pub fn synth_corpus(
    n_subjects: usize,
    expressions: &Vocabulary,
    intensities: usize,
    resolution: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_subjects == 0 {
        return Err(Error::invalid("synth_corpus needs at least one subject"));
    }
    if resolution < 32 {
        return Err(Error::invalid("synth_corpus resolution must be at least 32"));
    }
    if intensities == 0 {
        return Err(Error::invalid("synth_corpus needs at least one intensity level"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for s in 0..n_subjects {
        let subject = SubjectParams::random(s, &mut rng);
        let subject_id = format!("s{s:03}");
        for expr in expressions.labels() {
            let levels: Vec<usize> = if expr == "neutral" {
                vec![1]
            } else {
                (1..=intensities).collect()
            };
            for level in levels {
                let scale = level as f64 / intensities as f64;
                let face = SynthFace::new(subject.clone(), ExpressionParams::named(expr).scaled(scale));
                let intensity = (intensities > 1).then_some(level as u8);
                let source_path = match intensity {
                    Some(l) => format!("{subject_id}_{expr}_{l}"),
                    None => format!("{subject_id}_{expr}"),
                };
                samples.push(FaceSample {
                    image: face.render(resolution),
                    landmarks: face.landmarks(resolution),
                    subject_id: subject_id.clone(),
                    expression: expr.clone(),
                    intensity,
                    source_path,
                });
            }
        }
    }
    Dataset::new(
        samples,
        expressions.clone(),
        resolution,
        (intensities > 1).then_some(intensities),
    )
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn near_polyline(x: f64, y: f64, line: &[[f64; 2]], half_width: f64) -> bool {
    line.windows(2).any(|w| {
        let [ax, ay] = w[0];
        let [bx, by] = w[1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + t * dx - x, ay + t * dy - y);
        px * px + py * py <= half_width * half_width
    })
}

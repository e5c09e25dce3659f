use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points in the standard facial layout.
pub const N_LANDMARKS: usize = 68;

/// Index ranges of the standard 68-point layout.
pub mod layout {
    use std::ops::Range;

    pub const JAW: Range<usize> = 0..17;
    pub const RIGHT_BROW: Range<usize> = 17..22;
    pub const LEFT_BROW: Range<usize> = 22..27;
    pub const NOSE_BRIDGE: Range<usize> = 27..31;
    pub const NOSE_BASE: Range<usize> = 31..36;
    pub const RIGHT_EYE: Range<usize> = 36..42;
    pub const LEFT_EYE: Range<usize> = 42..48;
    pub const OUTER_LIP: Range<usize> = 48..60;
    pub const INNER_LIP: Range<usize> = 60..68;

    pub const MOUTH_LEFT_CORNER: usize = 48;
    pub const MOUTH_RIGHT_CORNER: usize = 54;
    pub const INNER_LIP_TOP: usize = 62;
    pub const INNER_LIP_BOTTOM: usize = 66;
}

/// 68 ordered `(p, q)` points in pixel coordinates. `p` runs along image
/// columns, `q` along rows; pixel `(row, col)` spans `[col, col+1) x [row, row+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != N_LANDMARKS {
            return Err(Error::LandmarkCount {
                expected: N_LANDMARKS,
                got: points.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(Self { points })
    }

    /// Parse the flat `p_1, q_1, ..., p_68, q_68` layout.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "flat landmark array has odd length {}",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    pub fn translated(&self, dp: f64, dq: f64) -> Self {
        Self {
            points: self.points.iter().map(|&[p, q]| [p + dp, q + dq]).collect(),
        }
    }

    pub fn scaled(&self, sp: f64, sq: f64) -> Self {
        Self {
            points: self.points.iter().map(|&[p, q]| [p * sp, q * sq]).collect(),
        }
    }

    /// True when every point lies in the closed rectangle `[0, width] x [0, height]`.
    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.points
            .iter()
            .all(|&[p, q]| (0.0..=width as f64).contains(&p) && (0.0..=height as f64).contains(&q))
    }

    /// Clamp into bounds; returns whether anything moved.
    pub fn clamped(&self, height: usize, width: usize) -> (Self, bool) {
        let mut moved = false;
        let points = self
            .points
            .iter()
            .map(|&[p, q]| {
                let c = [p.clamp(0.0, width as f64), q.clamp(0.0, height as f64)];
                moved |= c != [p, q];
                c
            })
            .collect();
        (Self { points }, moved)
    }

    /// Vertical distance between the inner-lip midpoints.
    pub fn inner_lip_gap(&self) -> f64 {
        self.points[layout::INNER_LIP_BOTTOM][1] - self.points[layout::INNER_LIP_TOP][1]
    }

    /// Smallest distance between any two points.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.min(point_distance(self.points[i], self.points[j]));
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for LandmarkSet {
    type Error = Error;

    fn try_from(flat: Vec<f64>) -> Result<Self> {
        Self::from_flat(&flat)
    }
}

impl From<LandmarkSet> for Vec<f64> {
    fn from(l: LandmarkSet) -> Self {
        l.to_flat()
    }
}

#[inline]
pub(crate) fn point_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

use std::collections::VecDeque;

use crate::codec::render::LandmarkImage;
use crate::data::landmarks::point_distance;
use crate::data::{canonical_layout, Image, LandmarkSet, N_LANDMARKS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct ExtractConfig {
    /// Minimum per-channel drop below white for a pixel to count as disc.
    pub threshold: f32,
    /// Template points closer than this share one region.
    pub merge_radius: f64,
    /// Template points farther than this from every region stay unmatched.
    pub claim_radius: f64,
}

impl ExtractConfig {
    pub fn for_image(img: &LandmarkImage) -> Self {
        Self {
            threshold: 0.05,
            merge_radius: img.radius,
            claim_radius: 0.15 * img.image.width().max(img.image.height()) as f64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtractedLandmarks {
    pub landmarks: LandmarkSet,
    /// Points taken from the template because no region was assigned.
    pub filled: Vec<bool>,
    /// Points that fell in a region shared with another landmark.
    pub merged: Vec<bool>,
}

impl ExtractedLandmarks {
    pub fn n_filled(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }
}

/// Recover coordinates using the canonical layout as the assignment template.
pub fn extract_landmarks(img: &LandmarkImage) -> Result<ExtractedLandmarks> {
    let template = canonical_layout(img.image.width());
    extract_landmarks_with_template(img, &template, &ExtractConfig::for_image(img))
}

/// Recover coordinates as weighted centroids of non-white regions, matched to
/// the template's point ordering by nearest assignment.
pub fn extract_landmarks_with_template(
    img: &LandmarkImage,
    template: &LandmarkSet,
    cfg: &ExtractConfig,
) -> Result<ExtractedLandmarks> {
    let regions = find_regions(&img.image, cfg.threshold);
    if regions.is_empty() {
        return Err(Error::NoLandmarks);
    }

    // each template point claims its nearest region
    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    for (i, &t) in template.points().iter().enumerate() {
        let best = regions
            .iter()
            .enumerate()
            .map(|(r, reg)| (r, reg.distance_to(t)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((r, d)) = best {
            if d <= cfg.claim_radius {
                claims[r].push(i);
            }
        }
    }

    let mut points = template.points().to_vec();
    let mut filled = vec![true; N_LANDMARKS];
    let mut merged = vec![false; N_LANDMARKS];
    for (region, claimants) in regions.iter().zip(&claims) {
        if claimants.is_empty() {
            continue;
        }
        let groups = group_claimants(claimants, template, cfg.merge_radius);
        let parts = if groups.len() == 1 {
            vec![region.centroid(|_| true)]
        } else {
            (0..groups.len())
                .map(|g| region.centroid(|px| nearest_group(px, &groups, template) == g))
                .collect()
        };
        for (group, centroid) in groups.iter().zip(parts) {
            let Some(c) = centroid else { continue };
            let winner = *group
                .iter()
                .min_by(|&&a, &&b| {
                    point_distance(template.point(a), c).total_cmp(&point_distance(template.point(b), c))
                })
                .expect("non-empty group");
            points[winner] = c;
            filled[winner] = false;
            if group.len() > 1 {
                for &i in group {
                    merged[i] = true;
                }
            }
        }
    }
    Ok(ExtractedLandmarks {
        landmarks: LandmarkSet::new(points)?,
        filled,
        merged,
    })
}

struct Region {
    /// `(center, weight)` per pixel.
    pixels: Vec<([f64; 2], f64)>,
}

impl Region {
    fn distance_to(&self, t: [f64; 2]) -> f64 {
        self.pixels
            .iter()
            .map(|(c, _)| point_distance(*c, t))
            .fold(f64::INFINITY, f64::min)
    }

    fn centroid(&self, keep: impl Fn([f64; 2]) -> bool) -> Option<[f64; 2]> {
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for &(c, w) in &self.pixels {
            if keep(c) {
                sw += w;
                sx += w * c[0];
                sy += w * c[1];
            }
        }
        (sw > 0.0).then(|| [sx / sw, sy / sw])
    }
}

fn find_regions(img: &Image, threshold: f32) -> Vec<Region> {
    let (h, w) = (img.height(), img.width());
    let deviation = |r: usize, c: usize| {
        let px = img.pixel(r, c);
        px.iter().map(|v| 1.0 - v).fold(0.0f32, f32::max)
    };
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    for start in 0..h * w {
        if seen[start] || deviation(start / w, start % w) <= threshold {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / w, idx % w);
            pixels.push(([c as f64 + 0.5, r as f64 + 0.5], deviation(r, c) as f64));
            let neighbors = [
                (r > 0).then(|| idx - w),
                (r + 1 < h).then(|| idx + w),
                (c > 0).then(|| idx - 1),
                (c + 1 < w).then(|| idx + 1),
            ];
            for n in neighbors.into_iter().flatten() {
                if !seen[n] && deviation(n / w, n % w) > threshold {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        regions.push(Region { pixels });
    }
    regions
}

/// Single-linkage grouping of template points within `radius`.
fn group_claimants(claimants: &[usize], template: &LandmarkSet, radius: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in claimants {
        let touching: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                g.iter()
                    .any(|&j| point_distance(template.point(i), template.point(j)) < radius)
            })
            .map(|(k, _)| k)
            .collect();
        let mut merged = vec![i];
        for &k in touching.iter().rev() {
            merged.extend(groups.remove(k));
        }
        merged.sort_unstable();
        groups.push(merged);
    }
    groups.sort();
    groups
}

fn nearest_group(px: [f64; 2], groups: &[Vec<usize>], template: &LandmarkSet) -> usize {
    groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let d = members
                .iter()
                .map(|&i| point_distance(px, template.point(i)))
                .fold(f64::INFINITY, f64::min);
            (g, d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(g, _)| g)
        .unwrap_or(0)
}

//! JSON-lines manifest: a header object declaring the vocabulary, then one
//! object per sample.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::image::Image;
use crate::data::labels::Vocabulary;
use crate::data::landmarks::{LandmarkSet, N_LANDMARKS};
use crate::data::sample::{Dataset, FaceSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub vocabulary: Vocabulary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_levels: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image: String,
    pub subject: String,
    pub expression: String,
    pub intensity: Option<u8>,
    pub landmarks: Vec<f64>,
}

pub fn write_manifest(path: &Path, header: &ManifestHeader, rows: &[ManifestRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |line: String| writeln!(w, "{line}").map_err(|e| Error::io(path, e));
    put(serde_json::to_string(header)?)?;
    for row in rows {
        put(serde_json::to_string(row)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read just the header line.
pub fn read_header(path: &Path) -> Result<ManifestHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&first).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        row: 1,
        message: format!("bad header: {e}"),
    })
}

/// Load and validate every row, resampling images to `resolution x resolution`
/// and rescaling landmark coordinates by the same factors.
pub fn load_manifest(path: &Path, resolution: usize) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let row_err = |row: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut lines = BufReader::new(file).lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| row_err(1, format!("bad header: {e}")))?
        }
        None => return Err(row_err(1, "empty manifest".into())),
    };

    let mut samples = Vec::new();
    for (i, line) in lines {
        let row_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| row_err(row_no, e.to_string()))?;
        if row.landmarks.len() != 2 * N_LANDMARKS {
            return Err(row_err(
                row_no,
                format!(
                    "expected {} landmarks, got {} coordinates",
                    N_LANDMARKS,
                    row.landmarks.len()
                ),
            ));
        }
        if !header.vocabulary.contains(&row.expression) {
            return Err(row_err(
                row_no,
                format!("unknown expression `{}`", row.expression),
            ));
        }
        let image_path = resolve(&base, &row.image);
        let source = Image::load(&image_path).map_err(|e| row_err(row_no, e.to_string()))?;
        let landmarks = LandmarkSet::from_flat(&row.landmarks).map_err(|e| row_err(row_no, e.to_string()))?;
        let sample =
            rescale_sample(source, landmarks, resolution).map_err(|e| row_err(row_no, e.to_string()))?;
        samples.push(FaceSample {
            image: sample.0,
            landmarks: sample.1,
            subject_id: row.subject,
            expression: row.expression,
            intensity: row.intensity,
            source_path: row.image,
        });
    }
    Dataset::new(samples, header.vocabulary, resolution, header.intensity_levels)
}

/// Resample an image to the square target resolution, mapping landmarks linearly.
pub fn rescale_sample(
    image: Image,
    landmarks: LandmarkSet,
    resolution: usize,
) -> Result<(Image, LandmarkSet)> {
    let (h, w) = (image.height(), image.width());
    if !landmarks.in_bounds(h, w) {
        return Err(Error::invalid("landmark outside the source image"));
    }
    let landmarks = landmarks.scaled(resolution as f64 / w as f64, resolution as f64 / h as f64);
    Ok((image.resized(resolution, resolution), landmarks))
}

fn resolve(base: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write a dataset's images under `dir/images/` plus `dir/manifest.jsonl`.
pub fn export_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut rows = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let rel = format!("images/{}.png", sanitize(&s.source_path));
        s.image.save_png(&dir.join(&rel))?;
        rows.push(ManifestRow {
            image: rel,
            subject: s.subject_id.clone(),
            expression: s.expression.clone(),
            intensity: s.intensity,
            landmarks: s.landmarks.to_flat(),
        });
    }
    let header = ManifestHeader {
        vocabulary: dataset.vocabulary.clone(),
        intensity_levels: dataset.intensity_levels,
    };
    let path = dir.join("manifest.jsonl");
    write_manifest(&path, &header, &rows)?;
    Ok(path)
}

fn sanitize(s: &str) -> String {
    let stem = s.strip_suffix(".png").unwrap_or(s);
    stem.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

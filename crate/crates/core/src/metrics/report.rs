//! JSON and aligned plain-text renderings of reports, plus image grids.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::metrics::augment::AccuracyTable;
use crate::metrics::evaluate::{EvalSample, MetricsReport};

/// Left-aligned first column, right-aligned others, padded to the widest
/// cell.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(ncol) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = fmt_row(header.to_vec());
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let rows = vec![
            vec!["psnr_mean (dB)".into(), fmt_db(self.psnr_mean)],
            vec!["ssim_mean".into(), format!("{:.4}", self.ssim_mean)],
            vec!["inception_score".into(), format!("{:.4}", self.inception_score)],
            vec!["lpips_like_mean".into(), format!("{:.4}", self.lpips_like_mean)],
            vec![
                "landmark_l2_mean (px)".into(),
                format!("{:.3}", self.landmark_l2_mean),
            ],
            vec!["n_samples".into(), self.n_samples.to_string()],
            vec!["deterministic".into(), self.deterministic.to_string()],
        ];
        aligned_table(&["metric", "value"], &rows)
    }
}

impl AccuracyTable {
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.mode.label().to_string(),
                    r.train_size.to_string(),
                    r.test_size.to_string(),
                    format!("{:.4}", r.accuracy),
                ]
            })
            .collect();
        aligned_table(&["mode", "train", "test", "accuracy"], &rows)
    }
}

/// Write `value` as pretty JSON.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Grid with one row per sample: input, generated landmark image, generated
/// face, ground truth. At most `max_rows` rows.
pub fn contact_sheet(samples: &[EvalSample], max_rows: usize) -> Option<Image> {
    let rows: Vec<Vec<&Image>> = samples
        .iter()
        .take(max_rows)
        .map(|s| vec![&s.input, &s.landmark_image, &s.generated, &s.truth])
        .collect();
    Image::contact_sheet(&rows)
}

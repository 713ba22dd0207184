//! Accuracy metrics and classification-map rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hsi::{GroundTruth, Label};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[truth - 1][prediction - 1]`.
    pub confusion: Vec<Vec<u64>>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Recall per class; `None` for classes with no test pixel.
    pub per_class_accuracy: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if confusion.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument(
                "confusion matrix is not square".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("confusion matrix is empty".into()));
        }
        let n = total as f64;
        let diag: u64 = (0..c).map(|k| confusion[k][k]).sum();
        let oa = diag as f64 / n;
        let row_sums: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..c)
            .map(|k| confusion.iter().map(|r| r[k]).sum())
            .collect();
        let per_class_accuracy: Vec<Option<f64>> = (0..c)
            .map(|k| (row_sums[k] > 0).then(|| confusion[k][k] as f64 / row_sums[k] as f64))
            .collect();
        let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
        let aa = present.iter().sum::<f64>() / present.len() as f64;
        let pe = row_sums
            .iter()
            .zip(&col_sums)
            .map(|(&r, &col)| r as f64 * col as f64)
            .sum::<f64>()
            / (n * n);
        let kappa = if pe >= 1.0 {
            0.0
        } else {
            (oa - pe) / (1.0 - pe)
        };
        Ok(Self {
            confusion,
            oa,
            aa,
            kappa,
            per_class_accuracy,
        })
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    /// Flat `key=value` export. Keys: `oa`, `aa`, `kappa`, `test_pixels`,
    /// `class_<k>_recall` (`nan` when the class has no test pixel) and one
    /// `confusion_<k>` row per true class.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let total: u64 = self.confusion.iter().flatten().sum();
        let _ = writeln!(s, "oa={:.6}", self.oa);
        let _ = writeln!(s, "aa={:.6}", self.aa);
        let _ = writeln!(s, "kappa={:.6}", self.kappa);
        let _ = writeln!(s, "test_pixels={total}");
        for (k, acc) in self.per_class_accuracy.iter().enumerate() {
            match acc {
                Some(a) => {
                    let _ = writeln!(s, "class_{}_recall={a:.6}", k + 1);
                }
                None => {
                    let _ = writeln!(s, "class_{}_recall=nan", k + 1);
                }
            }
        }
        for (k, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "confusion_{}={}", k + 1, cells.join(" "));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Scores `pred` (one label per pixel) on the `test` pixels.
pub fn evaluate(pred: &[Label], gt: &GroundTruth, test: &[usize]) -> Result<EvalReport> {
    let c = gt.classes();
    let mut confusion = vec![vec![0u64; c]; c];
    for &p in test {
        let predicted = *pred
            .get(p)
            .ok_or_else(|| Error::Data(format!("no prediction for test pixel {p}")))?;
        let truth = gt.labels()[p];
        if truth == 0 {
            return Err(Error::InvalidArgument(format!(
                "test pixel {p} is unlabeled"
            )));
        }
        if predicted == 0 || predicted as usize > c {
            return Err(Error::Data(format!(
                "prediction {predicted} at pixel {p} is outside 1..={c}"
            )));
        }
        confusion[truth as usize - 1][predicted as usize - 1] += 1;
    }
    EvalReport::from_confusion(confusion)
}

pub type Rgb = [u8; 3];

/// Class `k` is drawn with `PALETTE[(k - 1) % 16]`; unlabeled is black.
pub const PALETTE: [Rgb; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

pub const UNLABELED: Rgb = [0, 0, 0];

#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<Rgb>,
    /// Labels that exceeded the palette and were wrapped.
    pub warnings: Vec<String>,
}

pub fn label_color(label: Label) -> Rgb {
    if label == 0 {
        UNLABELED
    } else {
        PALETTE[(label as usize - 1) % PALETTE.len()]
    }
}

/// Colors an arbitrary label raster; `0` is black.
pub fn render_labels(height: usize, width: usize, labels: &[Label]) -> Result<ColorMap> {
    if labels.len() != height * width {
        return Err(Error::SizeMismatch {
            expected: height * width,
            found: labels.len(),
        });
    }
    let mut wrapped: Vec<Label> = labels
        .iter()
        .copied()
        .filter(|&l| l as usize > PALETTE.len())
        .collect();
    wrapped.sort_unstable();
    wrapped.dedup();
    let warnings = wrapped
        .iter()
        .map(|l| {
            format!(
                "label {l} exceeds the {}-color palette and wraps",
                PALETTE.len()
            )
        })
        .collect();
    Ok(ColorMap {
        height,
        width,
        pixels: labels.iter().map(|&l| label_color(l)).collect(),
        warnings,
    })
}

/// Predicted classes on labeled pixels; pixels unlabeled in `gt` are black.
pub fn render_map(pred: &[Label], gt: &GroundTruth) -> Result<ColorMap> {
    if pred.len() != gt.labels().len() {
        return Err(Error::SizeMismatch {
            expected: gt.labels().len(),
            found: pred.len(),
        });
    }
    let masked: Vec<Label> = pred
        .iter()
        .zip(gt.labels())
        .map(|(&p, &t)| if t == 0 { 0 } else { p })
        .collect();
    render_labels(gt.height(), gt.width(), &masked)
}

impl ColorMap {
    /// Plain ASCII pixmap (`P3`), one RGB triple per line.
    pub fn to_ppm(&self) -> String {
        let mut s = String::with_capacity(self.pixels.len() * 12 + 32);
        let _ = write!(s, "P3\n{} {}\n255\n", self.width, self.height);
        for [r, g, b] in &self.pixels {
            let _ = writeln!(s, "{r} {g} {b}");
        }
        s
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    /// Inverse of the palette lookup: black maps to `0`, a palette color to
    /// its class index in `1..=16`, anything else is an error.
    pub fn to_labels(&self) -> Result<Vec<Label>> {
        self.pixels
            .iter()
            .map(|px| {
                if *px == UNLABELED {
                    return Ok(0);
                }
                PALETTE
                    .iter()
                    .position(|c| c == px)
                    .map(|i| i as Label + 1)
                    .ok_or_else(|| Error::Data(format!("color {px:?} is not in the palette")))
            })
            .collect()
    }
}

pub fn parse_ppm(text: &str) -> Result<ColorMap> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P3") {
        return Err(Error::Data("not a plain PPM (missing P3)".into()));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::Data(format!("PPM truncated before {what}")))?;
        t.parse()
            .map_err(|_| Error::Data(format!("bad PPM {what}: {t:?}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::Data(format!("unsupported PPM maxval {maxval}")));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let mut px = [0u8; 3];
        for ch in &mut px {
            let v = number("sample")?;
            *ch = u8::try_from(v).map_err(|_| Error::Data(format!("PPM sample {v} > 255")))?;
        }
        pixels.push(px);
    }
    if number("end").is_ok() {
        return Err(Error::Data("trailing samples in PPM".into()));
    }
    Ok(ColorMap {
        height,
        width,
        pixels,
        warnings: Vec::new(),
    })
}

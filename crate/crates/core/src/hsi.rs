//! Hyperspectral cubes, ground truth rasters and the partial-label protocol.
//!
//! Cubes are stored on disk as a `key=value` header next to a raw band-sequential
//! little-endian `float32` file. All random draws go through [`seeded_rng`], a
//! ChaCha8 stream keyed by an explicit 64-bit seed, so splits, candidate sets and
//! synthetic scenes are reproducible across machines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster;

/// Class label, `1..=c`. Zero marks an unlabeled pixel in ground truth.
pub type Label = u32;

/// Stream ids keep independent consumers of one seed from sharing draws.
pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const CANDIDATES: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
    pub const ABLATION: u64 = 4;
    pub const SVT: u64 = 5;
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    /// Band-major, then row-major within a band.
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Data(format!(
                "degenerate cube {height}x{width}x{bands}"
            )));
        }
        let expected = height * width * bands;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(offset) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn value(&self, pixel: usize, band: usize) -> f32 {
        self.data[band * self.pixels() + pixel]
    }

    /// Spectral vector of one pixel (linear row-major index).
    pub fn spectrum(&self, pixel: usize) -> Vec<f32> {
        (0..self.bands).map(|b| self.value(pixel, b)).collect()
    }
}

/// Header fields recognised by [`load_cube`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub data: PathBuf,
}

pub(crate) fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key=value, got `{line}`",
                lineno + 1
            ))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_header(text: &str) -> Result<CubeHeader> {
    let kv = parse_key_values(text).map_err(|e| Error::Data(e.to_string()))?;
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| Error::Data(format!("header missing `{k}`")))
    };
    let dim = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Data(format!("header `{k}` is not a count")))
    };
    for (key, want) in [
        ("dtype", "float32"),
        ("interleave", "bsq"),
        ("byteorder", "little"),
    ] {
        if let Some(v) = kv.get(key) {
            if v != want {
                return Err(Error::Data(format!(
                    "unsupported {key}={v}, expected {want}"
                )));
            }
        }
    }
    Ok(CubeHeader {
        width: dim("width")?,
        height: dim("height")?,
        bands: dim("bands")?,
        data: PathBuf::from(get("data")?),
    })
}

pub fn load_cube(header_path: &Path) -> Result<HsiCube> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_header(&text)?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = header.width * header.height * header.bands;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() / 4,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    HsiCube::new(header.height, header.width, header.bands, data)
}

/// Writes `header_path` and a sibling `<stem>.raw` data file.
pub fn write_cube(header_path: &Path, cube: &HsiCube) -> Result<()> {
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cube");
    let data_name = format!("{stem}.raw");
    let header = format!(
        "width={}\nheight={}\nbands={}\ndtype=float32\ninterleave=bsq\nbyteorder=little\ndata={data_name}\n",
        cube.width, cube.height, cube.bands
    );
    fs::write(header_path, header).map_err(|e| Error::io(header_path, e))?;
    let data_path = header_path.with_file_name(&data_name);
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    height: usize,
    width: usize,
    labels: Vec<Label>,
    classes: usize,
}

impl GroundTruth {
    pub fn new(height: usize, width: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::SizeMismatch {
                expected: height * width,
                found: labels.len(),
            });
        }
        let classes = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0usize; classes + 1];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        if let Some(k) = (1..=classes).find(|&k| counts[k] == 0) {
            return Err(Error::Data(format!(
                "class {k} has no pixels (labels must cover 1..={classes})"
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
            classes,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Class count `c`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Pixel indices of class `k`, ascending.
    pub fn class_pixels(&self, k: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn parse_ground_truth(text: &str, cube: &HsiCube) -> Result<GroundTruth> {
    let r = raster::parse_int_raster(text)?;
    if (r.height, r.width) != (cube.height, cube.width) {
        return Err(Error::DimensionMismatch {
            expected: (cube.height, cube.width),
            found: (r.height, r.width),
        });
    }
    let labels = r
        .values
        .iter()
        .map(|&v| Label::try_from(v).map_err(|_| Error::Data(format!("invalid label {v}"))))
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(r.height, r.width, labels)
}

pub fn load_ground_truth(path: &Path, cube: &HsiCube) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, cube)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    raster::write_int_raster(path, gt.width, &gt.labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class `k`, `max(ceil(percent * n_k), 1)` pixels go to training.
///
/// Both index lists are returned in ascending pixel order.
pub fn split_train_test(gt: &GroundTruth, percent_per_class: f64, seed: u64) -> Result<Split> {
    if !(percent_per_class > 0.0 && percent_per_class < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training fraction {percent_per_class} outside (0, 1)"
        )));
    }
    let mut rng = seeded_rng(seed, stream::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 1..=gt.classes as Label {
        let mut pixels = gt.class_pixels(k);
        if pixels.len() < 2 {
            return Err(Error::Data(format!(
                "class {k} has {} labeled pixels, need at least 2",
                pixels.len()
            )));
        }
        let n_train = train_count(pixels.len(), percent_per_class);
        pixels.shuffle(&mut rng);
        train.extend_from_slice(&pixels[..n_train]);
        test.extend_from_slice(&pixels[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub(crate) fn train_count(n: usize, percent: f64) -> usize {
    // The slack absorbs products like 0.07 * 100 = 7.000000000000001.
    let raw = (percent * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialEntry {
    pub pixel: usize,
    /// Hidden from the learner; kept for scoring disambiguation.
    pub true_label: Label,
    /// Sorted ascending.
    pub candidates: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialLabeledSet {
    pub entries: Vec<PartialEntry>,
    pub classes: usize,
    pub false_labels: usize,
}

impl PartialLabeledSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pixels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.pixel).collect()
    }

    pub fn candidate_sets(&self) -> Vec<Vec<Label>> {
        self.entries.iter().map(|e| e.candidates.clone()).collect()
    }
}

/// Candidate set = true label plus `r` distinct false labels drawn uniformly
/// without replacement.
pub fn generate_candidates(
    train: &[usize],
    gt: &GroundTruth,
    r: usize,
    seed: u64,
) -> Result<PartialLabeledSet> {
    let c = gt.classes;
    if r >= c {
        return Err(Error::InvalidArgument(format!(
            "r = {r} false labels impossible with {c} classes"
        )));
    }
    let mut rng = seeded_rng(seed, stream::CANDIDATES);
    let mut entries = Vec::with_capacity(train.len());
    for &pixel in train {
        let true_label = *gt
            .labels
            .get(pixel)
            .ok_or_else(|| Error::InvalidArgument(format!("pixel {pixel} out of range")))?;
        if true_label == 0 {
            return Err(Error::InvalidArgument(format!(
                "training pixel {pixel} is unlabeled"
            )));
        }
        let others: Vec<Label> = (1..=c as Label).filter(|&l| l != true_label).collect();
        let mut candidates: Vec<Label> = others.choose_multiple(&mut rng, r).copied().collect();
        candidates.push(true_label);
        candidates.sort_unstable();
        entries.push(PartialEntry {
            pixel,
            true_label,
            candidates,
        });
    }
    Ok(PartialLabeledSet {
        entries,
        classes: c,
        false_labels: r,
    })
}

/// `linear_index,true_label,cand1;cand2;...` with an optional fourth
/// `resolved_label` column.
pub fn format_candidates(set: &PartialLabeledSet, resolved: Option<&[Label]>) -> String {
    let mut out = String::new();
    for (i, e) in set.entries.iter().enumerate() {
        let cands: Vec<String> = e.candidates.iter().map(|l| l.to_string()).collect();
        let _ = write!(out, "{},{},{}", e.pixel, e.true_label, cands.join(";"));
        if let Some(r) = resolved {
            let _ = write!(out, ",{}", r[i]);
        }
        out.push('\n');
    }
    out
}

/// Parses a candidate-set file. Returns the set and, when present, the
/// resolved-label column.
pub fn parse_candidates(
    text: &str,
    classes: usize,
) -> Result<(PartialLabeledSet, Option<Vec<Label>>)> {
    let mut entries = Vec::new();
    let mut resolved = Vec::new();
    let mut false_labels = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("candidate file line {}: `{line}`", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(bad());
        }
        let pixel = fields[0].parse().map_err(|_| bad())?;
        let true_label: Label = fields[1].parse().map_err(|_| bad())?;
        let candidates = fields[2]
            .split(';')
            .map(|t| t.parse::<Label>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if candidates.iter().any(|&l| l == 0 || l as usize > classes) {
            return Err(bad());
        }
        let r = candidates.len() - 1;
        if *false_labels.get_or_insert(r) != r {
            return Err(bad());
        }
        if fields.len() == 4 {
            resolved.push(fields[3].parse().map_err(|_| bad())?);
        }
        entries.push(PartialEntry {
            pixel,
            true_label,
            candidates,
        });
    }
    if !resolved.is_empty() && resolved.len() != entries.len() {
        return Err(Error::Data("resolved-label column is incomplete".into()));
    }
    let set = PartialLabeledSet {
        entries,
        classes,
        false_labels: false_labels.unwrap_or(0),
    };
    Ok((set, (!resolved.is_empty()).then_some(resolved)))
}

/// Rectangular regions for `classes` classes: `strips` horizontal bands, each
/// split into near-equal column ranges.
fn region_layout(height: usize, width: usize, classes: usize) -> Vec<Label> {
    let strips = classes
        .div_ceil(width)
        .max(((classes as f64).sqrt().ceil() as usize).min(height))
        .min(height);
    let mut labels = vec![0; height * width];
    let mut next_class = 0usize;
    for s in 0..strips {
        let in_strip = classes / strips + usize::from(s < classes % strips);
        let (r0, r1) = (s * height / strips, (s + 1) * height / strips);
        for j in 0..in_strip {
            let (c0, c1) = (j * width / in_strip, (j + 1) * width / in_strip);
            for r in r0..r1 {
                for c in c0..c1 {
                    labels[r * width + c] = (next_class + j + 1) as Label;
                }
            }
        }
        next_class += in_strip;
    }
    labels
}

/// Desk-scale scene: one homogeneous rectangle per class, class spectra drawn
/// uniformly from `[0.1, 0.9]`, plus i.i.d. Gaussian noise of std `noise_sigma`.
pub fn generate_synthetic_scene(
    height: usize,
    width: usize,
    bands: usize,
    classes: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(HsiCube, GroundTruth)> {
    if height == 0 || width == 0 || bands == 0 || classes == 0 || classes > height * width {
        return Err(Error::InvalidArgument(format!(
            "degenerate scene {height}x{width}x{bands} with {classes} classes"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma}")));
    }
    let labels = region_layout(height, width, classes);
    let mut rng = seeded_rng(seed, stream::SYNTHETIC);
    let spectra: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..bands).map(|_| rng.random_range(0.1..0.9)).collect())
        .collect();
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let pixels = height * width;
    let mut data = vec![0f32; pixels * bands];
    for p in 0..pixels {
        let spectrum = &spectra[labels[p] as usize - 1];
        for (b, &s) in spectrum.iter().enumerate() {
            let n = if noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            data[b * pixels + p] = (s + n) as f32;
        }
    }
    Ok((
        HsiCube::new(height, width, bands, data)?,
        GroundTruth::new(height, width, labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(h: usize, w: usize, b: usize) -> HsiCube {
        HsiCube::new(h, w, b, (0..h * w * b).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn load_reads_band_sequential_floats() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "width=2\nheight=2\nbands=1\ndata=c.raw\n").unwrap();
        let bytes: Vec<u8> = [1f32, 2., 3., 4.]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(dir.path().join("c.raw"), bytes).unwrap();
        let c = load_cube(&hdr).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn load_rejects_short_data() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "width=5\nheight=1\nbands=1\ndata=c.raw\n").unwrap();
        fs::write(dir.path().join("c.raw"), [0u8; 16]).unwrap();
        assert!(matches!(
            load_cube(&hdr),
            Err(Error::SizeMismatch {
                expected: 5,
                found: 4
            })
        ));
    }

    #[test]
    fn load_names_first_non_finite_offset() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "width=3\nheight=1\nbands=1\ndata=c.raw\n").unwrap();
        let bytes: Vec<u8> = [1f32, f32::NAN, f32::INFINITY]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(dir.path().join("c.raw"), bytes).unwrap();
        assert!(matches!(
            load_cube(&hdr),
            Err(Error::NonFinite { offset: 1 })
        ));
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_cube(&dir.path().join("nope.hdr")),
            Err(Error::Io { .. })
        ));
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "width=1\nheight=1\nbands=1\ndata=gone.raw\n").unwrap();
        assert!(matches!(load_cube(&hdr), Err(Error::Io { .. })));
    }

    #[test]
    fn header_rejects_other_layouts() {
        assert!(parse_header("width=1\nheight=1\nbands=1\ninterleave=bil\ndata=x").is_err());
        assert!(parse_header("width=1\nheight=1\ndata=x").is_err());
    }

    #[test]
    fn ground_truth_parse() {
        let c = cube(2, 2, 1);
        let gt = parse_ground_truth("0 1\n2 1", &c).unwrap();
        assert_eq!(gt.labels(), &[0, 1, 2, 1]);
        assert_eq!(gt.classes(), 2);
    }

    #[test]
    fn ground_truth_requires_every_class() {
        let c = cube(2, 2, 1);
        assert!(parse_ground_truth("0 1\n3 1", &c).is_err());
        assert!(parse_ground_truth("0 -1\n2 1", &c).is_err());
    }

    #[test]
    fn ground_truth_dimension_mismatch() {
        let c = cube(2, 2, 1);
        assert!(matches!(
            parse_ground_truth("1 1 1\n1 1 1\n1 1 1", &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn gt_with_counts(counts: &[usize]) -> GroundTruth {
        let labels: Vec<Label> = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k as Label + 1, n))
            .collect();
        GroundTruth::new(1, labels.len(), labels).unwrap()
    }

    #[test]
    fn split_counts_follow_ceil_rule() {
        let gt = gt_with_counts(&[100, 10]);
        let s = split_train_test(&gt, 0.05, 3).unwrap();
        let n1 = s.train.iter().filter(|&&p| gt.labels()[p] == 1).count();
        let n2 = s.train.iter().filter(|&&p| gt.labels()[p] == 2).count();
        assert_eq!((n1, n2), (5, 1));
        assert_eq!(s.test.len(), 95 + 9);

        let s1 = split_train_test(&gt, 0.01, 3).unwrap();
        assert_eq!(s1.train.len(), 2);
        assert_eq!(train_count(100, 0.07), 7);
    }

    #[test]
    fn split_is_seeded() {
        let gt = gt_with_counts(&[40, 30, 20]);
        assert_eq!(
            split_train_test(&gt, 0.2, 9).unwrap(),
            split_train_test(&gt, 0.2, 9).unwrap()
        );
        assert_ne!(
            split_train_test(&gt, 0.2, 9).unwrap(),
            split_train_test(&gt, 0.2, 10).unwrap()
        );
    }

    #[test]
    fn split_rejects_bad_fraction_and_tiny_class() {
        let gt = gt_with_counts(&[10, 1]);
        assert!(split_train_test(&gt, 0.5, 0).is_err());
        let gt = gt_with_counts(&[10, 10]);
        assert!(split_train_test(&gt, 0.0, 0).is_err());
        assert!(split_train_test(&gt, 1.0, 0).is_err());
    }

    #[test]
    fn candidates_extremes() {
        let gt = gt_with_counts(&[5, 5, 5, 5]);
        let train: Vec<usize> = (0..20).collect();
        let s0 = generate_candidates(&train, &gt, 0, 1).unwrap();
        assert!(s0
            .entries
            .iter()
            .all(|e| e.candidates == vec![e.true_label]));
        let sall = generate_candidates(&train, &gt, 3, 1).unwrap();
        assert!(sall
            .entries
            .iter()
            .all(|e| e.candidates == vec![1, 2, 3, 4]));
        assert!(generate_candidates(&train, &gt, 4, 1).is_err());
    }

    #[test]
    fn candidates_sixteen_classes_r1() {
        let gt = gt_with_counts(&[3; 16]);
        let train: Vec<usize> = (0..48).collect();
        let s = generate_candidates(&train, &gt, 1, 5).unwrap();
        for e in &s.entries {
            assert_eq!(e.candidates.len(), 2);
            assert!(e.candidates.contains(&e.true_label));
        }
    }

    #[test]
    fn candidate_file_round_trip() {
        let gt = gt_with_counts(&[4, 4, 4]);
        let s = generate_candidates(&[0, 5, 9], &gt, 1, 2).unwrap();
        let resolved = vec![1, 2, 3];
        let text = format_candidates(&s, Some(&resolved));
        assert_eq!(text.lines().count(), 3);
        let (back, r) = parse_candidates(&text, 3).unwrap();
        assert_eq!(back, s);
        assert_eq!(r.unwrap(), resolved);
        let (_, none) = parse_candidates(&format_candidates(&s, None), 3).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn synthetic_noise_free_is_piecewise_constant() {
        let (cube, gt) = generate_synthetic_scene(8, 6, 3, 4, 0.0, 1).unwrap();
        for k in 1..=4 {
            let px = gt.class_pixels(k);
            let first = cube.spectrum(px[0]);
            assert!(px.iter().all(|&p| cube.spectrum(p) == first));
        }
    }

    #[test]
    fn synthetic_single_class_is_uniform() {
        let (_, gt) = generate_synthetic_scene(5, 5, 2, 1, 0.1, 1).unwrap();
        assert!(gt.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn synthetic_layouts_cover_every_class() {
        for (h, w, c) in [
            (32, 32, 4),
            (1, 10, 4),
            (10, 1, 7),
            (3, 3, 9),
            (145, 145, 16),
            (7, 5, 6),
        ] {
            let (_, gt) = generate_synthetic_scene(h, w, 1, c, 0.0, 0).unwrap();
            assert_eq!(gt.classes(), c, "{h}x{w} c={c}");
        }
        assert!(generate_synthetic_scene(2, 2, 1, 5, 0.0, 0).is_err());
        assert!(generate_synthetic_scene(2, 2, 0, 1, 0.0, 0).is_err());
    }

    #[test]
    fn synthetic_quadrants() {
        let (_, gt) = generate_synthetic_scene(4, 4, 1, 4, 0.0, 0).unwrap();
        assert_eq!(
            gt.labels(),
            &[1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4]
        );
    }

    #[test]
    fn cube_write_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = generate_synthetic_scene(6, 5, 4, 3, 0.3, 11).unwrap();
        let hdr = dir.path().join("scene.hdr");
        write_cube(&hdr, &c).unwrap();
        let back = load_cube(&hdr).unwrap();
        let bits = |c: &HsiCube| c.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&c));
        assert_eq!((back.height(), back.width(), back.bands()), (6, 5, 4));
    }
}

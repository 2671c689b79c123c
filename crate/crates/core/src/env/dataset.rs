//! Multiclass datasets: parsing, manifest checks and stratified splits.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature rows with 0-based labels and a validation/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassDataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    /// 0-based class of each row (files use 1-based labels).
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub dim: usize,
    /// Row indices held out for bandwidth selection.
    pub validation: Vec<usize>,
    /// Row indices streamed to the bandit.
    pub test: Vec<usize>,
}

impl MulticlassDataset {
    /// Builds a dataset from 1-based labels. Every row starts in the test split.
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels_1based: Vec<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        if features.len() != labels_1based.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels_1based.len()
            )));
        }
        let dim = features[0].len();
        if let Some(i) = features.iter().position(|r| r.len() != dim) {
            return Err(Error::Validation(format!("row {} has {} features, expected {dim}", i + 1, features[i].len())));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if labels_1based.contains(&0) {
            return Err(Error::Validation("labels must start at 1".into()));
        }
        let n_classes = *labels_1based.iter().max().expect("non-empty");
        let present: BTreeSet<usize> = labels_1based.iter().copied().collect();
        if present.len() != n_classes {
            let missing: Vec<usize> = (1..=n_classes).filter(|c| !present.contains(c)).collect();
            return Err(Error::Validation(format!("labels do not cover 1..={n_classes}; missing {missing:?}")));
        }
        let n = features.len();
        Ok(Self {
            name: name.into(),
            features,
            labels: labels_1based.into_iter().map(|l| l - 1).collect(),
            n_classes,
            dim,
            validation: Vec::new(),
            test: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn validation_rows(&self) -> Vec<&[f64]> {
        self.validation.iter().map(|&i| self.features[i].as_slice()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Libsvm,
    Csv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(Self::Libsvm),
            "csv" => Ok(Self::Csv),
            other => Err(Error::config(format!("unknown dataset format '{other}'"))),
        }
    }
}

/// Parses libsvm text: `label idx:value ...` with 1-based indices.
///
/// The dimension is `dim` when given, else the largest index seen.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut sparse = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label = parse_label(label_tok).map_err(|message| Error::Parse { line: line_no, message })?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got '{tok}'"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index '{i}'"),
            })?;
            if i == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value '{v}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite feature value '{v}'"),
                });
            }
            max_idx = max_idx.max(i);
            entries.push((i, v));
        }
        sparse.push((line_no, entries));
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data lines".into(),
        });
    }
    let d = dim.unwrap_or(max_idx);
    let mut rows = Vec::with_capacity(sparse.len());
    for (line_no, entries) in sparse {
        let mut row = vec![0.0; d];
        for (i, v) in entries {
            if i > d {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("feature index {i} exceeds dimension {d}"),
                });
            }
            row[i - 1] = v;
        }
        rows.push(row);
    }
    Ok((rows, labels))
}

fn parse_label(tok: &str) -> std::result::Result<usize, String> {
    let v: f64 = tok.parse().map_err(|_| format!("bad label '{tok}'"))?;
    if v.fract() != 0.0 || v < 1.0 {
        return Err(format!("label '{tok}' is not a positive integer"));
    }
    Ok(v as usize)
}

/// Parses dense CSV with header `label,f1,...,fd`.
pub fn parse_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    if &headers[0] != "label" || headers.iter().skip(1).enumerate().any(|(i, h)| h != format!("f{}", i + 1)) {
        return Err(Error::Parse {
            line: 1,
            message: "header must be label,f1,...,fd".into(),
        });
    }
    let d = headers.len() - 1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", d + 1, rec.len()),
            });
        }
        labels.push(parse_label(&rec[0]).map_err(|message| Error::Parse { line, message })?);
        let row = rec
            .iter()
            .skip(1)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    message: format!("bad feature value '{f}'"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok((rows, labels))
}

/// One dataset known to the fetcher and loader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// File name relative to the data directory.
    pub path: String,
    pub format: DatasetFormat,
    #[serde(rename = "N")]
    pub n_classes: usize,
    pub d: usize,
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    #[serde(default)]
    dataset: Vec<ManifestEntry>,
}

/// Reads a TOML manifest made of `[[dataset]]` tables.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: ManifestFile = toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok(m.dataset)
}

/// Class counts and dimensions of the supported benchmark sets. No checksums
/// are pinned here; supply a manifest file to verify downloads.
pub fn builtin_manifest() -> Vec<ManifestEntry> {
    let base = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass";
    [
        ("digits", "digits.csv", DatasetFormat::Csv, 10, 64, None),
        ("letter", "letter.scale", DatasetFormat::Libsvm, 26, 16, Some(format!("{base}/letter.scale"))),
        ("mnist", "mnist.scale", DatasetFormat::Libsvm, 10, 780, Some(format!("{base}/mnist.scale.bz2"))),
        ("pendigits", "pendigits", DatasetFormat::Libsvm, 10, 16, Some(format!("{base}/pendigits"))),
        ("segment", "segment.scale", DatasetFormat::Libsvm, 7, 19, Some(format!("{base}/segment.scale"))),
        ("usps", "usps", DatasetFormat::Libsvm, 10, 256, Some(format!("{base}/usps.bz2"))),
    ]
    .into_iter()
    .map(|(name, path, format, n, d, url)| ManifestEntry {
        name: name.into(),
        path: path.into(),
        format,
        n_classes: n,
        d,
        sha256: None,
        url,
    })
    .collect()
}

/// Reads and validates a dataset file. With a manifest entry, the class count
/// and dimension must match it.
pub fn load_dataset(path: &Path, format: DatasetFormat, entry: Option<&ManifestEntry>) -> Result<MulticlassDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (rows, labels) = match format {
        DatasetFormat::Libsvm => parse_libsvm(&text, entry.map(|e| e.d))?,
        DatasetFormat::Csv => parse_csv(&text)?,
    };
    let name = entry
        .map(|e| e.name.clone())
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    let ds = MulticlassDataset::new(name, rows, labels)?;
    if let Some(e) = entry {
        if ds.n_classes != e.n_classes || ds.dim != e.d {
            return Err(Error::Validation(format!(
                "{}: found N={} d={}, manifest says N={} d={}",
                e.name, ds.n_classes, ds.dim, e.n_classes, e.d
            )));
        }
    }
    Ok(ds)
}

/// Seeded stratified split. The validation size is `round(fraction * n)`,
/// spread over classes by largest remainder; every class with at least two
/// rows keeps one row on each side.
pub fn split_dataset(ds: &MulticlassDataset, fraction: f64, seed: u64) -> Result<MulticlassDataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let counts = ds.class_counts();
    let n = ds.len();
    let total = ((fraction * n as f64).round() as usize).clamp(0, n);
    let ideal: Vec<f64> = counts.iter().map(|&c| fraction * c as f64).collect();
    let mut alloc: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    let mut assigned: usize = alloc.iter().sum();
    for &c in order.iter().cycle().take(2 * counts.len()) {
        if assigned >= total {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            assigned += 1;
        }
    }
    rebalance(&mut alloc, &counts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut validation = Vec::with_capacity(total);
    let mut test = Vec::with_capacity(n - total);
    for (c, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        validation.extend_from_slice(&rows[..alloc[c]]);
        test.extend_from_slice(&rows[alloc[c]..]);
    }
    validation.sort_unstable();
    test.sort_unstable();
    let mut out = ds.clone();
    out.validation = validation;
    out.test = test;
    Ok(out)
}

/// Moves single rows between classes so each class with two or more rows is
/// present on both sides, keeping the total fixed.
fn rebalance(alloc: &mut [usize], counts: &[usize]) {
    for c in 0..alloc.len() {
        if counts[c] < 2 {
            continue;
        }
        if alloc[c] == 0 {
            if let Some(d) = donor(alloc, counts, |a, _| a >= 2) {
                alloc[d] -= 1;
                alloc[c] += 1;
            }
        } else if alloc[c] == counts[c] {
            if let Some(d) = donor(alloc, counts, |a, n| n - a >= 2) {
                alloc[d] += 1;
                alloc[c] -= 1;
            }
        }
    }
}

fn donor(alloc: &[usize], counts: &[usize], ok: impl Fn(usize, usize) -> bool) -> Option<usize> {
    (0..alloc.len())
        .filter(|&d| ok(alloc[d], counts[d]))
        .max_by_key(|&d| (alloc[d].min(counts[d] - alloc[d]), std::cmp::Reverse(d)))
}

/// Seed of the bundled `mini_digits.csv` fixture.
pub const MINI_DIGITS_SEED: u64 = 20_160_901;

/// Generates the bundled 3-class fixture: 200 rows per class of 8 features,
/// Gaussian blobs where classes 2 and 3 overlap more with each other than
/// with class 1. Returns CSV text with 4-decimal values.
pub fn mini_digits() -> String {
    const D: usize = 8;
    const PER_CLASS: usize = 200;
    let mut means = [[0.0; D]; 3];
    means[0][0] = 2.0;
    means[0][1] = 0.5;
    means[1][2] = 1.6;
    means[1][3] = 0.8;
    means[2][2] = 0.8;
    means[2][3] = 1.6;
    let noise = Normal::new(0.0, 0.6).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(MINI_DIGITS_SEED);
    let mut rows: Vec<(usize, [f64; D])> = Vec::with_capacity(3 * PER_CLASS);
    for (c, m) in means.iter().enumerate() {
        for _ in 0..PER_CLASS {
            let mut x = [0.0; D];
            for (xi, mi) in x.iter_mut().zip(m) {
                *xi = mi + noise.sample(&mut rng);
            }
            rows.push((c + 1, x));
        }
    }
    rows.shuffle(&mut rng);
    let mut out = String::from("label");
    for j in 1..=D {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (l, x) in rows {
        out.push_str(&l.to_string());
        for v in x {
            // Avoid printing "-0.0000".
            let v = if v.abs() < 5e-5 { 0.0 } else { v };
            out.push_str(&format!(",{v:.4}"));
        }
        out.push('\n');
    }
    out
}

/// The bundled fixture, parsed.
pub fn mini_digits_dataset() -> Result<MulticlassDataset> {
    let (rows, labels) = parse_csv(include_str!("../../fixtures/mini_digits.csv"))?;
    MulticlassDataset::new("mini-digits", rows, labels)
}

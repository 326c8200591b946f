//! Datasets: CIFAR-10 binary batches converted to grayscale, and small
//! synthetic template datasets for desk-scale runs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SnnError};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";
pub const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub label: usize,
    pub source: String,
}

impl ImageSample {
    pub fn new(pixels: Vec<f64>, rows: usize, cols: usize, label: usize, source: impl Into<String>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(SnnError::Dimension {
                expected: rows * cols,
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SnnError::InvalidParameter(format!(
                "pixel intensity {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            pixels,
            rows,
            cols,
            label,
            source: source.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<ImageSample>,
    pub rows: usize,
    pub cols: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<ImageSample>, rows: usize, cols: usize, n_classes: usize) -> Result<Self> {
        for s in &samples {
            if s.rows != rows || s.cols != cols {
                return Err(SnnError::Dimension {
                    expected: rows * cols,
                    found: s.rows * s.cols,
                });
            }
            if s.label >= n_classes {
                return Err(SnnError::Format(format!(
                    "label {} of {} exceeds class count {n_classes}",
                    s.label, s.source
                )));
            }
        }
        Ok(Self {
            samples,
            rows,
            cols,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps samples whose label is in `classes`, relabelled to their
    /// position in `classes`.
    pub fn select_classes(&self, classes: &[usize]) -> Result<Dataset> {
        if classes.is_empty() {
            return Err(SnnError::Empty("class selection"));
        }
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                classes
                    .iter()
                    .position(|&c| c == s.label)
                    .map(|k| ImageSample { label: k, ..s.clone() })
            })
            .collect();
        Dataset::new(samples, self.rows, self.cols, classes.len())
    }

    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            ..self.clone_empty()
        }
    }

    /// First `n` samples of every class, keeping dataset order.
    pub fn take_per_class(&self, n: usize) -> Dataset {
        let mut seen = vec![0usize; self.n_classes];
        let samples = self
            .samples
            .iter()
            .filter(|s| {
                seen[s.label] += 1;
                seen[s.label] <= n
            })
            .cloned()
            .collect();
        Dataset {
            samples,
            ..self.clone_empty()
        }
    }

    fn clone_empty(&self) -> Dataset {
        Dataset {
            samples: Vec::new(),
            rows: self.rows,
            cols: self.cols,
            n_classes: self.n_classes,
        }
    }

    /// SHA-256 over shape, labels and pixel bits, truncated to 64 bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        h.update((self.n_classes as u64).to_le_bytes());
        for s in &self.samples {
            h.update((s.label as u64).to_le_bytes());
            for p in &s.pixels {
                h.update(p.to_bits().to_le_bytes());
            }
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Converts one 3073-byte record (label, 1024 R, 1024 G, 1024 B) using BT.601
/// luminance.
pub fn parse_cifar_record(record: &[u8], source: impl Into<String>) -> Result<ImageSample> {
    if record.len() != CIFAR_RECORD_LEN {
        return Err(SnnError::Format(format!(
            "CIFAR-10 record has {} bytes, expected {CIFAR_RECORD_LEN}",
            record.len()
        )));
    }
    let label = record[0] as usize;
    if label > 9 {
        return Err(SnnError::Format(format!("CIFAR-10 label byte {label} > 9")));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let (r, rest) = record[1..].split_at(plane);
    let (g, b) = rest.split_at(plane);
    let pixels = (0..plane)
        .map(|i| {
            let y = 299 * r[i] as u32 + 587 * g[i] as u32 + 114 * b[i] as u32;
            y as f64 / 255_000.0
        })
        .collect();
    ImageSample::new(pixels, CIFAR_SIDE, CIFAR_SIDE, label, source)
}

pub fn load_cifar_file(path: &Path) -> Result<Vec<ImageSample>> {
    let bytes = fs::read(path).map_err(|e| SnnError::io(format!("reading {}", path.display()), e))?;
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(SnnError::Format(format!(
            "{}: truncated record ({} bytes is not a multiple of {CIFAR_RECORD_LEN})",
            path.display(),
            bytes.len()
        )));
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("cifar");
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(k, rec)| parse_cifar_record(rec, format!("{name}#{k}")))
        .collect()
}

/// Loads the five training batches (`train = true`) or the test batch from
/// a CIFAR-10 binary-version directory.
pub fn load_cifar10(dir: &Path, train: bool) -> Result<Dataset> {
    let files: Vec<&str> = if train {
        CIFAR_TRAIN_FILES.to_vec()
    } else {
        vec![CIFAR_TEST_FILE]
    };
    let mut samples = Vec::new();
    for f in files {
        samples.extend(load_cifar_file(&dir.join(f))?);
    }
    Dataset::new(samples, CIFAR_SIDE, CIFAR_SIDE, 10)
}

const MAX_TEMPLATES: usize = 10;

/// Binary template for class `k`: bars, diagonals, quadrant blocks, a frame
/// and a centre block.
pub fn template(k: usize, rows: usize, cols: usize) -> Result<Vec<f64>> {
    if k >= MAX_TEMPLATES {
        return Err(SnnError::InvalidParameter(format!(
            "at most {MAX_TEMPLATES} synthetic templates, asked for class {k}"
        )));
    }
    if rows < 4 || cols < 4 {
        return Err(SnnError::InvalidParameter(format!(
            "synthetic grid must be at least 4x4, got {rows}x{cols}"
        )));
    }
    let (r3, c3) = (rows / 3, cols / 3);
    let (rh, ch) = (rows / 2, cols / 2);
    let half_width = rows.min(cols) as f64 / 6.0;
    let mut px = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let y = r as f64 + 0.5;
            let x = (c as f64 + 0.5) * rows as f64 / cols as f64;
            let on = match k {
                0 => r >= r3 && r < rows - r3,
                1 => c >= c3 && c < cols - c3,
                2 => (y - x).abs() < half_width,
                3 => (y - (rows as f64 - x)).abs() < half_width,
                4 => r < rh && c < ch,
                5 => r < rh && c >= ch,
                6 => r >= rh && c < ch,
                7 => r >= rh && c >= ch,
                8 => r == 0 || c == 0 || r == rows - 1 || c == cols - 1,
                _ => r >= rows / 4 && r < rows - rows / 4 && c >= cols / 4 && c < cols - cols / 4,
            };
            if on {
                px[r * cols + c] = 1.0;
            }
        }
    }
    Ok(px)
}

/// Class templates with per-pixel uniform noise of amplitude `noise`,
/// clamped to [0, 1]. Samples are interleaved by class.
pub fn make_synthetic(
    n_classes: usize,
    rows: usize,
    cols: usize,
    samples_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(1..=MAX_TEMPLATES).contains(&n_classes) {
        return Err(SnnError::InvalidParameter(format!(
            "synthetic class count must be in 1..={MAX_TEMPLATES}, got {n_classes}"
        )));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(SnnError::InvalidParameter(format!(
            "noise must be in [0, 1], got {noise}"
        )));
    }
    let templates = (0..n_classes)
        .map(|k| template(k, rows, cols))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_classes * samples_per_class);
    for i in 0..samples_per_class {
        for (k, t) in templates.iter().enumerate() {
            let pixels = t
                .iter()
                .map(|&v| {
                    if noise > 0.0 {
                        (v + rng.gen_range(-noise..=noise)).clamp(0.0, 1.0)
                    } else {
                        v
                    }
                })
                .collect();
            samples.push(ImageSample::new(
                pixels,
                rows,
                cols,
                k,
                format!("synthetic#{}", i * n_classes + k),
            )?);
        }
    }
    Dataset::new(samples, rows, cols, n_classes)
}

/// Where a dataset comes from, parsed from strings such as
/// `synthetic:classes=3,rows=8,cols=8,per_class=50,noise=0.1,seed=7` or
/// `cifar10:dir=/data/cifar-10-batches-bin,split=test,classes=3+5,per_class=100`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        rows: usize,
        cols: usize,
        per_class: usize,
        noise: f64,
        seed: u64,
    },
    Cifar10 {
        dir: String,
        train: bool,
        /// Original label indices to keep, relabelled in this order.
        classes: Option<Vec<usize>>,
        /// First `n` samples of each kept class.
        per_class: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let bad = |msg: String| SnnError::InvalidParameter(format!("dataset `{spec}`: {msg}"));
        let mut pairs = Vec::new();
        for item in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{item}`")))?;
            pairs.push((k.trim(), v.trim()));
        }
        fn num<T: std::str::FromStr>(k: &str, v: &str, spec: &str) -> Result<T> {
            v.parse()
                .map_err(|_| SnnError::InvalidParameter(format!("dataset `{spec}`: bad value `{v}` for `{k}`")))
        }
        match kind {
            "synthetic" => {
                let (mut classes, mut rows, mut cols, mut per_class, mut noise, mut seed) = (3, 8, 8, 50, 0.1, 0);
                for (k, v) in pairs {
                    match k {
                        "classes" => classes = num(k, v, spec)?,
                        "rows" => rows = num(k, v, spec)?,
                        "cols" => cols = num(k, v, spec)?,
                        "per_class" => per_class = num(k, v, spec)?,
                        "noise" => noise = num(k, v, spec)?,
                        "seed" => seed = num(k, v, spec)?,
                        _ => return Err(bad(format!("unknown option `{k}`"))),
                    }
                }
                Ok(DatasetSpec::Synthetic {
                    classes,
                    rows,
                    cols,
                    per_class,
                    noise,
                    seed,
                })
            }
            "cifar10" => {
                let (mut dir, mut train, mut classes, mut per_class) = (None, true, None, None);
                for (k, v) in pairs {
                    match k {
                        "dir" => dir = Some(v.to_string()),
                        "split" => {
                            train = match v {
                                "train" => true,
                                "test" => false,
                                _ => return Err(bad(format!("split must be train or test, got `{v}`"))),
                            }
                        }
                        "classes" => {
                            classes = Some(v.split('+').map(|c| num(k, c, spec)).collect::<Result<Vec<usize>>>()?)
                        }
                        "per_class" => per_class = Some(num(k, v, spec)?),
                        _ => return Err(bad(format!("unknown option `{k}`"))),
                    }
                }
                let dir = dir.ok_or_else(|| bad("missing dir=".into()))?;
                Ok(DatasetSpec::Cifar10 {
                    dir,
                    train,
                    classes,
                    per_class,
                })
            }
            other => Err(bad(format!("unknown dataset kind `{other}`"))),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic {
                classes,
                rows,
                cols,
                per_class,
                noise,
                seed,
            } => make_synthetic(*classes, *rows, *cols, *per_class, *noise, *seed),
            DatasetSpec::Cifar10 {
                dir,
                train,
                classes,
                per_class,
            } => {
                let mut ds = load_cifar10(Path::new(dir), *train)?;
                if let Some(c) = classes {
                    ds = ds.select_classes(c)?;
                }
                if let Some(n) = per_class {
                    ds = ds.take_per_class(*n);
                }
                Ok(ds)
            }
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        match self {
            DatasetSpec::Synthetic { classes, .. } => (0..*classes).map(|k| format!("template_{k}")).collect(),
            DatasetSpec::Cifar10 { classes, .. } => match classes {
                Some(c) => c
                    .iter()
                    .map(|&k| {
                        CIFAR_CLASSES
                            .get(k)
                            .map_or_else(|| format!("class_{k}"), |s| s.to_string())
                    })
                    .collect(),
                None => CIFAR_CLASSES.iter().map(|s| s.to_string()).collect(),
            },
        }
    }
}

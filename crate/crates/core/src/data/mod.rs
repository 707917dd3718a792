//! Labeled image datasets, CIFAR binary ingestion, synthetic fixtures and model files.

mod model_file;

pub use model_file::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
/// Bytes per image: three 32×32 planes, R then G then B.
pub const IMAGE_BYTES: usize = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
pub const CIFAR10_RECORD: usize = 1 + IMAGE_BYTES;
pub const CIFAR100_RECORD: usize = 2 + IMAGE_BYTES;

const CIFAR10_TRAIN: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR10_TEST: &str = "test_batch.bin";
const CIFAR100_TRAIN: &str = "train.bin";
const CIFAR100_TEST: &str = "test.bin";

/// Images stored as raw bytes, channel-major per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    images: Vec<u8>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<u8>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_BYTES {
            return Err(Error::invalid(
                "LabeledDataset",
                format!("{} image bytes for {} labels", images.len(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(
                "LabeledDataset",
                format!("label {bad} outside {class_count} classes"),
            ));
        }
        Ok(LabeledDataset {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    /// The first `n` samples (all of them if fewer exist).
    pub fn take(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            images: self.images[..n * IMAGE_BYTES].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
        }
    }

    /// Samples in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut images = Vec::with_capacity(indices.len() * IMAGE_BYTES);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        LabeledDataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Per-channel mean of `x / 255` over every pixel of every sample.
    pub fn channel_means(&self) -> Vec<f32> {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        let mut sums = [0u64; IMAGE_CHANNELS];
        for img in self.images.chunks_exact(IMAGE_BYTES) {
            for (c, sum) in sums.iter_mut().enumerate() {
                *sum += img[c * plane..(c + 1) * plane]
                    .iter()
                    .map(|&b| u64::from(b))
                    .sum::<u64>();
            }
        }
        let count = (self.len() * plane).max(1) as f64;
        sums.iter().map(|&s| (s as f64 / 255.0 / count) as f32).collect()
    }

    /// Sample `i` as floats: `x / 255 − mean[c]`, 3×32×32 channel-major.
    pub fn normalized(&self, i: usize, mean: &[f32]) -> Vec<f32> {
        let plane = IMAGE_SIDE * IMAGE_SIDE;
        self.image(i)
            .iter()
            .enumerate()
            .map(|(k, &b)| normalize_byte(b, mean.get(k / plane).copied().unwrap_or(0.0)))
            .collect()
    }
}

pub fn normalize_byte(b: u8, mean: f32) -> f32 {
    f32::from(b) / 255.0 - mean
}

/// Inverse of [`normalize_byte`], rounded and clamped to a byte.
pub fn denormalize(v: f32, mean: f32) -> u8 {
    ((v + mean) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Parses fixed-size records of `label_bytes` label bytes followed by one image.
/// `label_at` picks which label byte is kept.
fn parse_records(
    path: &Path,
    bytes: &[u8],
    label_bytes: usize,
    label_at: usize,
    classes: usize,
) -> Result<LabeledDataset> {
    let record = label_bytes + IMAGE_BYTES;
    let count = bytes.len() / record;
    let trailing = bytes.len() % record;
    if trailing != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            record: count,
            trailing,
            record_size: record,
        });
    }
    let mut images = Vec::with_capacity(count * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(count);
    for (k, rec) in bytes.chunks_exact(record).enumerate() {
        let label = usize::from(rec[label_at]);
        if label >= classes {
            return Err(Error::Data {
                path: path.to_path_buf(),
                reason: format!("record {k} has label {label}, expected < {classes}"),
            });
        }
        labels.push(label);
        images.extend_from_slice(&rec[label_bytes..]);
    }
    Ok(LabeledDataset {
        images,
        labels,
        class_count: classes,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: "missing dataset file".into(),
        });
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_split(
    dir: &Path,
    files: &[&str],
    label_bytes: usize,
    label_at: usize,
    classes: usize,
) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        let part = parse_records(&path, &read_file(&path)?, label_bytes, label_at, classes)?;
        images.extend(part.images);
        labels.extend(part.labels);
    }
    Ok(LabeledDataset {
        images,
        labels,
        class_count: classes,
    })
}

/// `(train, test)` from the five `data_batch_*.bin` files and `test_batch.bin`.
pub fn load_cifar10(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok((
        load_split(dir, &CIFAR10_TRAIN, 1, 0, 10)?,
        load_split(dir, &[CIFAR10_TEST], 1, 0, 10)?,
    ))
}

/// `(train, test)` from `train.bin` and `test.bin`, fine labels.
pub fn load_cifar100(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok((
        load_split(dir, &[CIFAR100_TRAIN], 2, 1, 100)?,
        load_split(dir, &[CIFAR100_TEST], 2, 1, 100)?,
    ))
}

fn write_records(path: &Path, ds: &LabeledDataset, prefix: impl Fn(usize) -> Vec<u8>) -> Result<()> {
    let mut out = Vec::with_capacity(ds.len() * (IMAGE_BYTES + 2));
    for i in 0..ds.len() {
        out.extend(prefix(i));
        out.extend_from_slice(ds.image(i));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Writes one CIFAR-10 batch file (label byte + image per record).
pub fn write_cifar10_batch(path: &Path, ds: &LabeledDataset) -> Result<()> {
    write_records(path, ds, |i| vec![ds.label(i) as u8])
}

/// Writes one CIFAR-100 file; `coarse` supplies the discarded coarse label of each record.
pub fn write_cifar100_file(path: &Path, ds: &LabeledDataset, coarse: impl Fn(usize) -> u8) -> Result<()> {
    write_records(path, ds, |i| vec![coarse(i), ds.label(i) as u8])
}

/// Writes a full CIFAR-10 directory layout. `train` is split across the five batch files.
pub fn write_cifar10_dir(dir: &Path, train: &LabeledDataset, test: &LabeledDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let per = train.len().div_ceil(CIFAR10_TRAIN.len());
    let mut written = Vec::new();
    for (b, name) in CIFAR10_TRAIN.iter().enumerate() {
        let lo = (b * per).min(train.len());
        let hi = ((b + 1) * per).min(train.len());
        let idx: Vec<usize> = (lo..hi).collect();
        let path = dir.join(name);
        write_cifar10_batch(&path, &train.select(&idx))?;
        written.push(path);
    }
    let path = dir.join(CIFAR10_TEST);
    write_cifar10_batch(&path, test)?;
    written.push(path);
    Ok(written)
}

/// Channel mean (in bytes) planted for `class`: base-6 digits of the class index, one per channel.
pub fn synth_class_mean(class: usize, channel: usize) -> f64 {
    let digit = (class / 6usize.pow(channel as u32)) % 6;
    40.0 + 35.0 * digit as f64
}

/// Deterministic noisy images whose per-channel means depend on the label; labels cycle `i % classes`.
pub fn synth_dataset(n: usize, classes: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || classes == 0 {
        return Err(Error::invalid("synth_dataset", "n and classes must be at least 1"));
    }
    if classes > 216 {
        return Err(Error::invalid("synth_dataset", "at most 216 distinct planted means"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 18.0).expect("valid normal");
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut images = Vec::with_capacity(n * IMAGE_BYTES);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for &label in &labels {
        // low-frequency texture shared by the sample's channels, plus per-pixel noise
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for c in 0..IMAGE_CHANNELS {
            let mean = synth_class_mean(label, c);
            for p in 0..plane {
                let (y, x) = ((p / IMAGE_SIDE) as f64, (p % IMAGE_SIDE) as f64);
                let texture = 12.0 * ((x + y) * 0.3 + phase).sin();
                let v = mean + texture + noise.sample(&mut rng);
                images.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    LabeledDataset::new(images, labels, classes)
}

//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the red, green and blue 32×32 planes in row-major order.

use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{bail, Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_IMAGE_BYTES: usize = 3 * 32 * 32;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_IMAGE_BYTES + 1;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Parses raw batch bytes; `source` names the origin in error messages.
pub fn decode_records(bytes: &[u8], source: &str) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        bail!(
            Parse,
            "{}: {} bytes is not a whole number of {}-byte records; truncated record at offset {}",
            source,
            bytes.len(),
            CIFAR_RECORD_BYTES,
            whole
        );
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CIFAR_IMAGE_BYTES);
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = record[0];
        if label > 9 {
            bail!(
                Parse,
                "{}: label byte {} > 9 at offset {}",
                source,
                label,
                i * CIFAR_RECORD_BYTES
            );
        }
        labels.push(label as usize);
        pixels.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
    }
    let images = Tensor::from_vec(&[n, 3, 32, 32], pixels)?;
    Dataset::new(images, labels, 10)
}

/// Inverse of [`decode_records`] for row `index` of an unnormalized dataset.
pub fn encode_record(ds: &Dataset, index: usize) -> Result<[u8; CIFAR_RECORD_BYTES]> {
    if ds.sample_shape() != [3, 32, 32] {
        bail!(Shape, "not a CIFAR image dataset: {:?}", ds.sample_shape());
    }
    if index >= ds.len() {
        bail!(Argument, "record {} out of range 0..{}", index, ds.len());
    }
    let mut out = [0u8; CIFAR_RECORD_BYTES];
    out[0] = ds.labels[index] as u8;
    let start = index * CIFAR_IMAGE_BYTES;
    let plane = &ds.images.data()[start..start + CIFAR_IMAGE_BYTES];
    for (dst, &v) in out[1..].iter_mut().zip(plane) {
        let b = (v * 255.0).round();
        if !(0.0..=255.0).contains(&b) {
            bail!(Numeric, "pixel {} is outside the byte range", v);
        }
        *dst = b as u8;
    }
    Ok(out)
}

pub fn read_batch_file(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_records(&bytes, &path.display().to_string())
}

/// Resolves a directory holding the batch files, also accepting the parent of
/// the archive's `cifar-10-batches-bin` folder.
pub fn find_cifar10_dir(dir: &Path) -> Option<PathBuf> {
    [dir.to_path_buf(), dir.join("cifar-10-batches-bin")]
        .into_iter()
        .find(|d| d.join(TEST_FILE).is_file() && TRAIN_FILES.iter().all(|f| d.join(f).is_file()))
}

/// Loads the five training batches and the test batch.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let root = find_cifar10_dir(dir).ok_or_else(|| {
        Error::Config(format!(
            "{}: missing CIFAR-10 batch files (data_batch_1..5.bin, test_batch.bin)",
            dir.display()
        ))
    })?;
    let parts = TRAIN_FILES
        .iter()
        .map(|f| read_batch_file(&root.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let test = read_batch_file(&root.join(TEST_FILE))?;
    Ok((concat(parts)?, test))
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let n: usize = parts.iter().map(Dataset::len).sum();
    let mut pixels = Vec::with_capacity(n * CIFAR_IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    for p in parts {
        labels.extend_from_slice(&p.labels);
        pixels.extend(p.images.into_data());
    }
    Dataset::new(Tensor::from_vec(&[n, 3, 32, 32], pixels)?, labels, 10)
}

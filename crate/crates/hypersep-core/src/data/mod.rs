//! Dataset loading, normalization, and minibatch scheduling.

pub mod idx;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    EmnistBalanced,
}

impl DatasetKind {
    pub fn n_classes(self) -> usize {
        match self {
            DatasetKind::Mnist => 10,
            DatasetKind::EmnistBalanced => 47,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::EmnistBalanced => "emnist-balanced",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "mnist" => Ok(DatasetKind::Mnist),
            "emnist-balanced" => Ok(DatasetKind::EmnistBalanced),
            other => Err(Error::config(format!("unknown dataset tag {other:?}"))),
        }
    }

    /// EMNIST ships images transposed relative to MNIST orientation.
    pub fn needs_transpose(self) -> bool {
        matches!(self, DatasetKind::EmnistBalanced)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A fully validated dataset: images normalized to `[0, 1]`, labels in
/// `[0, n_classes)`, one label per image row.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<u8>,
    n_classes: usize,
    kind: DatasetKind,
    split: Split,
}

impl Dataset {
    pub fn new(
        images: Tensor,
        labels: Vec<u8>,
        kind: DatasetKind,
        split: Split,
    ) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Inconsistent(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        let n_classes = kind.n_classes();
        for (i, &l) in labels.iter().enumerate() {
            if (l as usize) >= n_classes {
                return Err(Error::Validation(format!(
                    "label {l} at index {i} outside [0, {n_classes})"
                )));
            }
        }
        for &v in images.data() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("pixel value {v} outside [0, 1]")));
            }
        }
        Ok(Dataset { images, labels, n_classes, kind, split })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Copies the given rows into a dense batch tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        self.images.gather_rows(indices)
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Keeps the first `n` samples; used for scaled-down desk runs.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.images = self.images.gather_rows(&(0..n).collect::<Vec<_>>());
            self.labels.truncate(n);
        }
    }
}

/// Transposes each row of `images` viewed as a `side x side` square in
/// place. Involutive: applying it twice restores the input.
pub fn transpose_square_rows(images: &mut Tensor, side: usize) {
    assert_eq!(images.cols(), side * side, "rows are not square images");
    for r in 0..images.rows() {
        let row = images.row_mut(r);
        for i in 0..side {
            for j in (i + 1)..side {
                row.swap(i * side + j, j * side + i);
            }
        }
    }
}

/// Loads an IDX image/label pair from disk, normalizes pixels to `[0, 1]`,
/// and fixes EMNIST orientation.
pub fn load_dataset(
    image_path: &Path,
    label_path: &Path,
    kind: DatasetKind,
    split: Split,
) -> Result<Dataset> {
    let image_bytes = idx::read_maybe_gzip(image_path)?;
    let label_bytes = idx::read_maybe_gzip(label_path)?;
    let mut images = idx::parse_idx_images(&image_bytes)?;
    let labels = idx::parse_idx_labels(&label_bytes)?;
    if kind.needs_transpose() {
        transpose_square_rows(&mut images, idx::IMAGE_SIDE);
    }
    images.scale(1.0 / 255.0);
    Dataset::new(images, labels, kind, split)
}

/// A seeded permutation of sample indices cut into consecutive minibatches.
/// The permutation depends only on `(seed, epoch)`.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    permutation: Vec<usize>,
    batch_size: usize,
}

impl BatchPlan {
    pub fn new(n_samples: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if batch_size > n_samples {
            return Err(Error::config(format!(
                "batch size {batch_size} exceeds sample count {n_samples}"
            )));
        }
        let mut permutation: Vec<usize> = (0..n_samples).collect();
        let mut r = rng::substream(seed, epoch as u64);
        rng::shuffle(&mut permutation, &mut r);
        Ok(BatchPlan { permutation, batch_size })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// All batches in order; only the final one may be short.
    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.permutation.chunks(self.batch_size)
    }

    /// Batches of exactly `batch_size`, dropping a ragged tail.
    pub fn full_batches(&self) -> impl Iterator<Item = &[usize]> {
        let bs = self.batch_size;
        self.permutation.chunks(bs).filter(move |c| c.len() == bs)
    }
}

pub fn minibatches(dataset: &Dataset, batch_size: usize, seed: u64, epoch: usize) -> Result<BatchPlan> {
    BatchPlan::new(dataset.len(), batch_size, seed, epoch)
}

//! Frozen representation caches: the penultimate-layer outputs of a
//! trained network on both dataset splits, plus provenance metadata,
//! persisted in the HSRC container.
//!
//! Layout: magic `HSRC`, version u32 LE, metadata block, tensor records
//! `train_reprs` and `test_reprs`, then byte records `train_labels` and
//! `test_labels`.

use crate::data::{Dataset, DatasetKind, Split};
use crate::error::{Error, Result};
use crate::io::{put_bytes, put_meta, put_tensor, put_u32, Reader};
use crate::nn::Network;
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::path::Path;

pub const CACHE_MAGIC: [u8; 4] = *b"HSRC";
pub const CACHE_VERSION: u32 = 1;

/// Forward pass chunking; keeps peak memory flat on the full train split.
const CAPTURE_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct ReprCache {
    train_reprs: Tensor,
    test_reprs: Tensor,
    train_labels: Vec<u8>,
    test_labels: Vec<u8>,
    n_classes: usize,
    meta: BTreeMap<String, String>,
}

impl ReprCache {
    /// `meta` must carry at least `dataset` (a known tag) and `scheme`.
    pub fn new(
        train_reprs: Tensor,
        test_reprs: Tensor,
        train_labels: Vec<u8>,
        test_labels: Vec<u8>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        if train_reprs.rows() != train_labels.len() || test_reprs.rows() != test_labels.len() {
            return Err(Error::Inconsistent(format!(
                "representation/label count mismatch: train {}/{}, test {}/{}",
                train_reprs.rows(),
                train_labels.len(),
                test_reprs.rows(),
                test_labels.len()
            )));
        }
        if train_reprs.cols() != test_reprs.cols() {
            return Err(Error::Inconsistent(format!(
                "train width {} differs from test width {}",
                train_reprs.cols(),
                test_reprs.cols()
            )));
        }
        let tag = meta
            .get("dataset")
            .ok_or_else(|| Error::Inconsistent("cache metadata lacks `dataset`".into()))?;
        let kind = DatasetKind::from_tag(tag)?;
        if !meta.contains_key("scheme") {
            return Err(Error::Inconsistent("cache metadata lacks `scheme`".into()));
        }
        let n_classes = kind.n_classes();
        for (split, labels) in [("train", &train_labels), ("test", &test_labels)] {
            if let Some(&l) = labels.iter().find(|&&l| (l as usize) >= n_classes) {
                return Err(Error::Validation(format!(
                    "{split} label {l} outside [0, {n_classes})"
                )));
            }
        }
        Ok(ReprCache {
            train_reprs,
            test_reprs,
            train_labels,
            test_labels,
            n_classes,
            meta,
        })
    }

    pub fn train_reprs(&self) -> &Tensor {
        &self.train_reprs
    }

    pub fn test_reprs(&self) -> &Tensor {
        &self.test_reprs
    }

    pub fn train_labels(&self) -> &[u8] {
        &self.train_labels
    }

    pub fn test_labels(&self) -> &[u8] {
        &self.test_labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn width(&self) -> usize {
        self.train_reprs.cols()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn scheme(&self) -> &str {
        self.meta.get("scheme").map(String::as_str).unwrap_or("")
    }

    pub fn dataset_tag(&self) -> &str {
        self.meta.get("dataset").map(String::as_str).unwrap_or("")
    }
}

/// Forwards every sample of both splits with no augmentation and stores
/// the capture-layer output.
pub fn capture_representations(
    net: &Network,
    train: &Dataset,
    test: &Dataset,
    extra_meta: &BTreeMap<String, String>,
) -> Result<ReprCache> {
    if train.kind() != test.kind() {
        return Err(Error::config(format!(
            "split kinds differ: {} vs {}",
            train.kind().tag(),
            test.kind().tag()
        )));
    }
    if train.split() != Split::Train || test.split() != Split::Test {
        return Err(Error::config("capture expects (train, test) splits in order"));
    }
    if net.input_dim() != train.images().cols() {
        return Err(Error::config(format!(
            "network input width {} does not match image width {}",
            net.input_dim(),
            train.images().cols()
        )));
    }

    let mut meta = extra_meta.clone();
    meta.insert("dataset".to_string(), train.kind().tag().to_string());
    meta.entry("scheme".to_string()).or_insert_with(|| "unspecified".to_string());

    let train_reprs = capture_split(net, train)?;
    let test_reprs = capture_split(net, test)?;
    ReprCache::new(
        train_reprs,
        test_reprs,
        train.labels().to_vec(),
        test.labels().to_vec(),
        meta,
    )
}

fn capture_split(net: &Network, ds: &Dataset) -> Result<Tensor> {
    let width = net.layer_sizes()[net.capture_index() + 1];
    let mut out = Tensor::zeros(ds.len(), width);
    let mut row = 0;
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(CAPTURE_CHUNK) {
        let batch = ds.gather(chunk);
        let captured = net.capture(&batch)?;
        for r in 0..captured.rows() {
            out.row_mut(row).copy_from_slice(captured.row(r));
            row += 1;
        }
    }
    Ok(out)
}

pub fn encode_cache(cache: &ReprCache) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CACHE_MAGIC);
    put_u32(&mut buf, CACHE_VERSION);
    put_meta(&mut buf, &cache.meta);
    put_tensor(&mut buf, "train_reprs", &cache.train_reprs);
    put_tensor(&mut buf, "test_reprs", &cache.test_reprs);
    put_bytes(&mut buf, "train_labels", &cache.train_labels);
    put_bytes(&mut buf, "test_labels", &cache.test_labels);
    buf
}

pub fn decode_cache(bytes: &[u8]) -> Result<ReprCache> {
    let mut r = Reader::new(bytes);
    r.expect_magic(&CACHE_MAGIC)?;
    let version = r.u32("version")?;
    if version != CACHE_VERSION {
        return Err(Error::format(
            4,
            format!("cache version {version}, expected {CACHE_VERSION}"),
        ));
    }
    let meta = r.meta()?;
    let train_reprs = r.tensor("train_reprs")?;
    let test_reprs = r.tensor("test_reprs")?;
    let train_labels = r.byte_record("train_labels")?;
    let test_labels = r.byte_record("test_labels")?;
    r.finish()?;
    ReprCache::new(train_reprs, test_reprs, train_labels, test_labels, meta)
}

pub fn save_cache(path: &Path, cache: &ReprCache) -> Result<()> {
    Ok(std::fs::write(path, encode_cache(cache))?)
}

pub fn load_cache(path: &Path) -> Result<ReprCache> {
    decode_cache(&std::fs::read(path)?)
}

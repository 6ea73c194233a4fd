//! Super-class probe suite.
//!
//! A super-class is a subset of the dataset's labels, encoded as a bitmask
//! (bit `b` set means label `b` belongs). The suite trains one binary
//! linear head per mask on frozen train-split representations, scores each
//! on the test split, and compares against a multi-class reference head.
//! Hyper-separable representations put most masks below the reference
//! error; class-separable ones put most above it.

pub mod cache;
pub mod head;

pub use cache::{capture_representations, load_cache, save_cache, ReprCache};
pub use head::{eval_perr, train_linear_head, HeadConfig, LinearHead};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng;
use std::collections::HashSet;
use std::fmt::Write as _;

/// Head rng stream reserved for the multi-class reference; mask streams
/// are the mask bits themselves, which stay below 2^63.
const REFERENCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SuperClassMask {
    bits: u64,
    n_classes: usize,
}

impl SuperClassMask {
    pub fn new(bits: u64, n_classes: usize) -> Result<Self> {
        if n_classes == 0 || n_classes > 63 {
            return Err(Error::config(format!(
                "super-class masks support 1..=63 classes, got {n_classes}"
            )));
        }
        if bits >> n_classes != 0 {
            return Err(Error::Validation(format!(
                "mask {bits} has bits outside {n_classes} classes"
            )));
        }
        Ok(SuperClassMask { bits, n_classes })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn contains(&self, label: u8) -> bool {
        (label as usize) < self.n_classes && self.bits >> label & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn complement(&self) -> SuperClassMask {
        SuperClassMask {
            bits: self.bits ^ (full_bits(self.n_classes)),
            n_classes: self.n_classes,
        }
    }

    /// `n_classes` characters, bit 0 (class 0) rightmost.
    pub fn bit_string(&self) -> String {
        (0..self.n_classes)
            .rev()
            .map(|b| if self.bits >> b & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

fn full_bits(n_classes: usize) -> u64 {
    (1u64 << n_classes) - 1
}

/// 1 for labels inside the super-class, 0 outside.
pub fn superclass_labels(labels: &[u8], mask: &SuperClassMask) -> Result<Vec<u8>> {
    if let Some(&l) = labels.iter().find(|&&l| (l as usize) >= mask.n_classes) {
        return Err(Error::Validation(format!(
            "label {l} outside [0, {})",
            mask.n_classes
        )));
    }
    Ok(labels.iter().map(|&l| mask.contains(l) as u8).collect())
}

/// All `2^C` masks, 0 upward.
pub fn enumerate_superclasses(n_classes: usize) -> Result<Vec<SuperClassMask>> {
    if n_classes == 0 || n_classes > 20 {
        return Err(Error::config(format!(
            "enumeration supports 1..=20 classes, got {n_classes}; sample instead"
        )));
    }
    Ok((0..1u64 << n_classes)
        .map(|bits| SuperClassMask { bits, n_classes })
        .collect())
}

/// `count` distinct masks drawn uniformly from `[0, 2^C)`; duplicates are
/// redrawn, so the result is a uniform sample without replacement.
pub fn sample_superclasses(n_classes: usize, count: usize, seed: u64) -> Result<Vec<SuperClassMask>> {
    if n_classes == 0 || n_classes > 63 {
        return Err(Error::config(format!(
            "sampling supports 1..=63 classes, got {n_classes}"
        )));
    }
    if (count as u128) > 1u128 << n_classes {
        return Err(Error::config(format!(
            "cannot draw {count} distinct masks from 2^{n_classes} values"
        )));
    }
    let limit = 1u64 << n_classes;
    let mut r = rng::seeded(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut masks = Vec::with_capacity(count);
    while masks.len() < count {
        let bits = rand::Rng::random_range(&mut r, 0..limit);
        if seen.insert(bits) {
            masks.push(SuperClassMask { bits, n_classes });
        }
    }
    Ok(masks)
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Epochs, batch size and optimizer for every head; the seed field is
    /// ignored (the suite derives per-head seeds from `seed`).
    pub head: HeadConfig,
    pub seed: u64,
    /// Worker threads for per-mask trainings; 0 uses the default pool.
    pub workers: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            head: HeadConfig::default(),
            seed: 0,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaskResult {
    pub mask: SuperClassMask,
    pub n_pos_train: usize,
    pub n_pos_test: usize,
    /// Test-split decision error; `None` when training failed.
    pub perr_test: Option<f64>,
    pub error: Option<String>,
}

/// Fixed-range counting histogram; values at or above `hi` land in the
/// last bin (decision errors cluster well below it).
#[derive(Debug, Clone)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(n_bins: usize, lo: f64, hi: f64) -> Histogram {
        assert!(n_bins > 0 && hi > lo);
        Histogram {
            lo,
            hi,
            counts: vec![0; n_bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let t = (v - self.lo) / (self.hi - self.lo);
        let bin = ((t * n as f64).floor() as i64).clamp(0, n as i64 - 1) as usize;
        self.counts[bin] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `n_bins + 1` boundaries.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub scheme: String,
    pub dataset: String,
    pub reference_perr: f64,
    pub rows: Vec<MaskResult>,
    /// Share of successfully probed masks with perr strictly below the
    /// reference; ties count in neither fraction.
    pub fraction_better: f64,
    pub fraction_worse: f64,
    pub histogram: Histogram,
}

impl ProbeReport {
    pub fn n_masks(&self) -> usize {
        self.rows.len()
    }

    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// One row per mask; the perr cell is empty for failed masks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mask_decimal,mask_bits,n_pos_train,n_pos_test,perr_test\n");
        for r in &self.rows {
            let perr = r.perr_test.map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.mask.bits(),
                r.mask.bit_string(),
                r.n_pos_train,
                r.n_pos_test,
                perr
            )
            .unwrap();
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let edges = self
            .histogram
            .edges()
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let counts = self
            .histogram
            .counts()
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "scheme,{}\ndataset,{}\nreference_perr,{}\nn_masks,{}\nn_failed,{}\nfraction_better,{}\nfraction_worse,{}\nhistogram_edges,{}\nhistogram_counts,{}\n",
            self.scheme,
            self.dataset,
            self.reference_perr,
            self.n_masks(),
            self.n_failed(),
            self.fraction_better,
            self.fraction_worse,
            edges,
            counts
        )
    }

    /// `bin_lo,bin_hi,count` rows for plotting.
    pub fn histogram_csv(&self) -> String {
        let edges = self.histogram.edges();
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.histogram.counts().iter().enumerate() {
            writeln!(out, "{},{},{}", edges[i], edges[i + 1], c).unwrap();
        }
        out
    }
}

/// Trains the multi-class reference head, then one binary head per mask,
/// all on frozen representations. Per-mask failures land in the report
/// rather than aborting the sweep. Deterministic: head seeds derive from
/// `config.seed` and the mask bits, and assembly preserves mask order, so
/// the result is identical across worker counts and build modes.
pub fn run_probe_suite(
    cache: &ReprCache,
    masks: &[SuperClassMask],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if masks.is_empty() {
        return Err(Error::config("probe suite needs at least one mask"));
    }
    let n_classes = cache.n_classes();
    for m in masks {
        if m.n_classes() != n_classes {
            return Err(Error::config(format!(
                "mask over {} classes probed against a {}-class cache",
                m.n_classes(),
                n_classes
            )));
        }
    }

    let reference_cfg = HeadConfig {
        seed: rng::substream_seed(config.seed, REFERENCE_STREAM),
        ..config.head.clone()
    };
    let reference =
        train_linear_head(cache.train_reprs(), cache.train_labels(), n_classes, &reference_cfg)?;
    let reference_perr = eval_perr(&reference, cache.test_reprs(), cache.test_labels())?;

    let probe_one = |_: usize, mask: &SuperClassMask| -> MaskResult {
        let train_targets = superclass_labels(cache.train_labels(), mask)
            .expect("cache labels validated against the mask class count");
        let test_targets = superclass_labels(cache.test_labels(), mask)
            .expect("cache labels validated against the mask class count");
        let n_pos_train = train_targets.iter().filter(|&&t| t == 1).count();
        let n_pos_test = test_targets.iter().filter(|&&t| t == 1).count();
        let cfg = HeadConfig {
            seed: rng::substream_seed(config.seed, mask.bits()),
            ..config.head.clone()
        };
        let outcome = train_linear_head(cache.train_reprs(), &train_targets, 2, &cfg)
            .and_then(|head| eval_perr(&head, cache.test_reprs(), &test_targets));
        match outcome {
            Ok(perr) => MaskResult {
                mask: *mask,
                n_pos_train,
                n_pos_test,
                perr_test: Some(perr),
                error: None,
            },
            Err(e) => MaskResult {
                mask: *mask,
                n_pos_train,
                n_pos_test,
                perr_test: None,
                error: Some(e.to_string()),
            },
        }
    };

    let rows = in_worker_pool(config.workers, || map_indexed(masks, probe_one))?;

    let mut histogram = Histogram::new(50, 0.0, 0.6);
    let mut better = 0usize;
    let mut worse = 0usize;
    let mut succeeded = 0usize;
    for r in &rows {
        if let Some(p) = r.perr_test {
            succeeded += 1;
            histogram.add(p);
            if p < reference_perr {
                better += 1;
            } else if p > reference_perr {
                worse += 1;
            }
        }
    }
    let (fraction_better, fraction_worse) = if succeeded == 0 {
        (0.0, 0.0)
    } else {
        (better as f64 / succeeded as f64, worse as f64 / succeeded as f64)
    };

    Ok(ProbeReport {
        scheme: cache.scheme().to_string(),
        dataset: cache.dataset_tag().to_string(),
        reference_perr,
        rows,
        fraction_better,
        fraction_worse,
        histogram,
    })
}

#[cfg(feature = "parallel")]
fn in_worker_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn in_worker_pool<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

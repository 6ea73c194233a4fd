//! The five subcommands. Each one locks the output directory, does its
//! work, writes artifacts plus a resolved-config snapshot, and finishes
//! with a manifest recording content hashes of everything it touched.

use crate::artifacts::{histogram_svg, sha256_hex, Manifest, OutDirLock};
use crate::config::RunConfig;
use crate::CmdError;
use hypersep_core::augment::TransformSpec;
use hypersep_core::contrastive::{train_contrastive, ContrastiveConfig};
use hypersep_core::data::{load_dataset, Dataset, DatasetKind, Split};
use hypersep_core::nn::checkpoint::{
    decode_checkpoint, encode_checkpoint, META_DATASET, META_SCHEME,
};
use hypersep_core::nn::{Activation, Network};
use hypersep_core::probe::{
    cache::{decode_cache, encode_cache},
    capture_representations, enumerate_superclasses, eval_perr, run_probe_suite,
    sample_superclasses, train_linear_head, HeadConfig, ProbeConfig, SuperClassMask,
};
use hypersep_core::rng;
use hypersep_core::supervised::{train_supervised, SupervisedConfig};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Stream reserved for the multi-class reference head; per-mask heads use
/// the mask bits, which stay below 2^63.
const REFERENCE_STREAM: u64 = u64::MAX;

struct DataFiles {
    train_images: PathBuf,
    train_labels: PathBuf,
    test_images: PathBuf,
    test_labels: PathBuf,
}

/// Locates the four IDX files for a dataset, accepting gzipped or plain
/// names. A missing file is the declared "missing data" failure.
fn dataset_files(data_dir: &Path, kind: DatasetKind) -> Result<DataFiles, CmdError> {
    let (subdir, names) = match kind {
        DatasetKind::Mnist => (
            "mnist",
            [
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
            ],
        ),
        DatasetKind::EmnistBalanced => (
            "emnist",
            [
                "emnist-balanced-train-images-idx3-ubyte",
                "emnist-balanced-train-labels-idx1-ubyte",
                "emnist-balanced-test-images-idx3-ubyte",
                "emnist-balanced-test-labels-idx1-ubyte",
            ],
        ),
    };
    let dir = data_dir.join(subdir);
    let mut found = Vec::with_capacity(4);
    for name in names {
        let gz = dir.join(format!("{name}.gz"));
        let plain = dir.join(name);
        if gz.is_file() {
            found.push(gz);
        } else if plain.is_file() {
            found.push(plain);
        } else {
            return Err(CmdError::new(
                2,
                format!("missing data: expected {} (or .gz)", plain.display()),
            ));
        }
    }
    let mut it = found.into_iter();
    Ok(DataFiles {
        train_images: it.next().unwrap(),
        train_labels: it.next().unwrap(),
        test_images: it.next().unwrap(),
        test_labels: it.next().unwrap(),
    })
}

fn load_split(files: &DataFiles, kind: DatasetKind, split: Split) -> Result<Dataset, CmdError> {
    let (images, labels) = match split {
        Split::Train => (&files.train_images, &files.train_labels),
        Split::Test => (&files.test_images, &files.test_labels),
    };
    Ok(load_dataset(images, labels, kind, split)?)
}

fn record_inputs(manifest: &mut Manifest, files: &DataFiles) -> Result<(), CmdError> {
    manifest.input("train_images", &files.train_images)?;
    manifest.input("train_labels", &files.train_labels)?;
    manifest.input("test_images", &files.test_images)?;
    manifest.input("test_labels", &files.test_labels)
}

fn write_config_snapshot(manifest: &mut Manifest, cfg: &RunConfig, out: &Path, cmd: &str) -> Result<(), CmdError> {
    let path = out.join(format!("{cmd}.config.toml"));
    manifest.write_output("config", &path, cfg.to_toml().as_bytes())
}

fn init_network(cfg: &RunConfig, n_classes: usize) -> Result<Network, CmdError> {
    let sizes = cfg.effective_sizes(n_classes);
    let mut acts = vec![Activation::ReLU; sizes.len().saturating_sub(2)];
    acts.push(Activation::Identity);
    Ok(Network::init(&sizes, &acts, cfg.seeds.init)?)
}

fn train_error(e: hypersep_core::Error) -> CmdError {
    match e {
        hypersep_core::Error::Numerical(msg) => {
            CmdError::new(3, format!("non-finite loss: {msg}"))
        }
        other => other.into(),
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CmdError> {
    let out = cfg.out_dir.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let mut manifest = Manifest::new("train");
    let kind = cfg.kind()?;
    let files = dataset_files(&cfg.data_dir, kind)?;
    record_inputs(&mut manifest, &files)?;
    let train = load_split(&files, kind, Split::Train)?;
    let net = init_network(cfg, kind.n_classes())?;
    let epochs = cfg.effective_epochs();
    eprintln!(
        "[hypersep] training {} on {} for {} epochs",
        cfg.scheme, cfg.dataset, epochs
    );

    let (net, curve) = match cfg.scheme.as_str() {
        "contrastive" => {
            let c = ContrastiveConfig {
                tau: cfg.tau,
                pairs: cfg.pairs,
                epochs,
                seed_data: cfg.seeds.data,
                seed_augment: cfg.seeds.augment,
                adam: cfg.adam.into(),
            };
            train_contrastive(&train, net, &cfg.transform, &c).map_err(train_error)?
        }
        _ => {
            let c = SupervisedConfig {
                batch_size: cfg.batch_size,
                epochs,
                seed_data: cfg.seeds.data,
                seed_augment: cfg.seeds.augment,
                adam: cfg.adam.into(),
            };
            train_supervised(&train, net, &cfg.transform, &c).map_err(train_error)?
        }
    };

    let mut meta = BTreeMap::new();
    meta.insert(META_DATASET.to_string(), cfg.dataset.clone());
    meta.insert(META_SCHEME.to_string(), cfg.scheme.clone());
    meta.insert("epochs".to_string(), epochs.to_string());
    meta.insert("tau".to_string(), cfg.tau.to_string());
    meta.insert(
        "transform".to_string(),
        toml::to_string(&cfg.transform).expect("transform serializes"),
    );
    manifest.write_output(
        "checkpoint",
        &out.join("checkpoint.hsnn"),
        &encode_checkpoint(&net, &meta),
    )?;

    let mut csv = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        writeln!(csv, "{i},{l}").unwrap();
    }
    manifest.write_output("loss_curve", &out.join("loss.csv"), csv.as_bytes())?;
    write_config_snapshot(&mut manifest, cfg, &out, "train")?;
    manifest.note("dataset", &cfg.dataset);
    manifest.note("scheme", &cfg.scheme);
    manifest.note("epochs", epochs);
    manifest.note("final_loss", curve.last().copied().unwrap_or(f64::NAN));
    manifest.finish(&out)
}

pub fn cmd_capture(
    cfg: &RunConfig,
    checkpoint: Option<PathBuf>,
    dataset_flag: Option<String>,
) -> Result<(), CmdError> {
    let out = cfg.out_dir.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let mut manifest = Manifest::new("capture");
    let ckpt_path = checkpoint.unwrap_or_else(|| out.join("checkpoint.hsnn"));
    let ckpt_bytes = std::fs::read(&ckpt_path)
        .map_err(|e| CmdError::new(4, format!("checkpoint {}: {e}", ckpt_path.display())))?;
    let (net, ckpt_meta) = decode_checkpoint(&ckpt_bytes)
        .map_err(|e| CmdError::new(4, format!("corrupt checkpoint: {e}")))?;
    manifest.note("input.checkpoint", sha256_hex(&ckpt_bytes));

    let tag = dataset_flag
        .or_else(|| ckpt_meta.get(META_DATASET).cloned())
        .unwrap_or_else(|| cfg.dataset.clone());
    let kind = DatasetKind::from_tag(&tag).map_err(|e| CmdError::new(1, e.to_string()))?;
    let files = dataset_files(&cfg.data_dir, kind)?;
    record_inputs(&mut manifest, &files)?;
    let train = load_split(&files, kind, Split::Train)?;
    let test = load_split(&files, kind, Split::Test)?;
    eprintln!(
        "[hypersep] capturing representations for {} samples",
        train.len() + test.len()
    );

    let mut extra = BTreeMap::new();
    extra.insert(
        "scheme".to_string(),
        ckpt_meta
            .get(META_SCHEME)
            .cloned()
            .unwrap_or_else(|| cfg.scheme.clone()),
    );
    extra.insert("checkpoint".to_string(), sha256_hex(&ckpt_bytes));
    let cache = capture_representations(&net, &train, &test, &extra)?;
    manifest.write_output("cache", &out.join("cache.hsrc"), &encode_cache(&cache))?;
    write_config_snapshot(&mut manifest, cfg, &out, "capture")?;
    manifest.note("dataset", tag);
    manifest.note("width", cache.width());
    manifest.finish(&out)
}

fn build_masks(cfg: &RunConfig, n_classes: usize) -> Result<Vec<SuperClassMask>, CmdError> {
    let source = match cfg.probe.masks.as_str() {
        "auto" if n_classes <= 20 => "enumerate",
        "auto" => "sample",
        s => s,
    };
    match source {
        "enumerate" => Ok(enumerate_superclasses(n_classes)?),
        _ => {
            if cfg.probe.count == 0 {
                return Err(CmdError::new(1, "mask count must be positive"));
            }
            Ok(sample_superclasses(n_classes, cfg.probe.count, cfg.seeds.probe)?)
        }
    }
}

pub fn cmd_probe(cfg: &RunConfig, cache_path: Option<PathBuf>, svg: bool) -> Result<(), CmdError> {
    let out = cfg.out_dir.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let mut manifest = Manifest::new("probe");
    let path = cache_path.unwrap_or_else(|| out.join("cache.hsrc"));
    let bytes = std::fs::read(&path)
        .map_err(|e| CmdError::new(5, format!("cache {}: {e}", path.display())))?;
    let cache =
        decode_cache(&bytes).map_err(|e| CmdError::new(5, format!("cache {}: {e}", path.display())))?;
    manifest.note("input.cache", sha256_hex(&bytes));

    let masks = build_masks(cfg, cache.n_classes())?;
    eprintln!(
        "[hypersep] probing {} masks over {} classes ({} probe epochs each)",
        masks.len(),
        cache.n_classes(),
        cfg.probe.epochs
    );
    let probe_cfg = ProbeConfig {
        head: HeadConfig {
            epochs: cfg.probe.epochs,
            batch_size: cfg.probe.batch_size,
            seed: 0,
            adam: cfg.adam.into(),
        },
        seed: cfg.seeds.probe,
        workers: cfg.probe.workers,
    };
    let report = run_probe_suite(&cache, &masks, &probe_cfg)?;

    manifest.write_output("rows", &out.join("probe_rows.csv"), report.to_csv().as_bytes())?;
    manifest.write_output(
        "summary",
        &out.join("probe_summary.txt"),
        report.summary_text().as_bytes(),
    )?;
    manifest.write_output(
        "histogram",
        &out.join("probe_hist.csv"),
        report.histogram_csv().as_bytes(),
    )?;
    if svg {
        let rendered = histogram_svg(
            &report.histogram.edges(),
            &[(report.scheme.as_str(), report.histogram.counts())],
        );
        manifest.write_output("histogram_svg", &out.join("probe_hist.svg"), rendered.as_bytes())?;
    }
    write_config_snapshot(&mut manifest, cfg, &out, "probe")?;
    manifest.note("reference_perr", report.reference_perr);
    manifest.note("n_masks", report.n_masks());
    manifest.note("n_failed", report.n_failed());
    manifest.note("fraction_better", report.fraction_better);
    manifest.note("fraction_worse", report.fraction_worse);
    manifest.finish(&out)
}

/// Named transform grid entries; `+` composes left to right.
fn parse_grid(grid: &str) -> Result<Vec<(String, TransformSpec)>, CmdError> {
    let mut entries = Vec::new();
    for raw in grid.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut parts = Vec::new();
        for name in raw.split('+').map(str::trim) {
            parts.push(named_transform(name)?);
        }
        let spec = if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            TransformSpec::Compose { children: parts }
        };
        entries.push((raw.to_string(), spec));
    }
    if entries.is_empty() {
        return Err(CmdError::new(1, "empty transform grid"));
    }
    Ok(entries)
}

fn named_transform(name: &str) -> Result<TransformSpec, CmdError> {
    Ok(match name {
        "elastic" => TransformSpec::Elastic {
            sigma: 4.0,
            alpha: 4.0,
        },
        "translate" => TransformSpec::Translate { max_shift: 3.0 },
        "rotate" => TransformSpec::Rotate { max_degrees: 15.0 },
        "resize" => TransformSpec::Resize {
            min_scale: 0.85,
            max_scale: 1.15,
        },
        "identity" => TransformSpec::identity(),
        other => {
            return Err(CmdError::new(
                1,
                format!("unknown transform `{other}` (elastic, translate, rotate, resize, identity)"),
            ))
        }
    })
}

pub fn cmd_sweep(cfg: &RunConfig, grid: &str) -> Result<(), CmdError> {
    let out = cfg.out_dir.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let mut manifest = Manifest::new("sweep-transforms");
    let entries = parse_grid(grid)?;
    let kind = cfg.kind()?;
    let files = dataset_files(&cfg.data_dir, kind)?;
    record_inputs(&mut manifest, &files)?;
    let train = load_split(&files, kind, Split::Train)?;
    let test = load_split(&files, kind, Split::Test)?;
    let epochs = cfg.effective_epochs();

    let mut csv = String::from("transform,perr_test,error\n");
    for (name, spec) in &entries {
        eprintln!("[hypersep] sweep: {name} ({epochs} contrastive epochs)");
        match sweep_entry(cfg, &train, &test, spec, epochs) {
            Ok(perr) => {
                writeln!(csv, "{name},{perr},").unwrap();
                manifest.note(&format!("perr.{name}"), perr);
            }
            Err(e) => {
                writeln!(csv, "{name},,{}", e.message.replace(',', ";")).unwrap();
                manifest.note(&format!("error.{name}"), e.message);
            }
        }
    }
    manifest.write_output("sweep", &out.join("sweep.csv"), csv.as_bytes())?;
    write_config_snapshot(&mut manifest, cfg, &out, "sweep-transforms")?;
    manifest.finish(&out)
}

/// Short contrastive training, capture, multi-class probe; the reference
/// error is the sweep's figure of merit.
fn sweep_entry(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    spec: &TransformSpec,
    epochs: usize,
) -> Result<f64, CmdError> {
    let net = init_network(cfg, train.n_classes())?;
    let c = ContrastiveConfig {
        tau: cfg.tau,
        pairs: cfg.pairs,
        epochs,
        seed_data: cfg.seeds.data,
        seed_augment: cfg.seeds.augment,
        adam: cfg.adam.into(),
    };
    let (net, _) = train_contrastive(train, net, spec, &c).map_err(train_error)?;
    let cache = capture_representations(&net, train, test, &BTreeMap::new())?;
    let head_cfg = HeadConfig {
        epochs: cfg.probe.epochs,
        batch_size: cfg.probe.batch_size,
        seed: rng::substream_seed(cfg.seeds.probe, REFERENCE_STREAM),
        adam: cfg.adam.into(),
    };
    let head = train_linear_head(
        cache.train_reprs(),
        cache.train_labels(),
        cache.n_classes(),
        &head_cfg,
    )?;
    Ok(eval_perr(&head, cache.test_reprs(), cache.test_labels())?)
}

struct Summary {
    map: BTreeMap<String, String>,
    edges: Vec<f64>,
    counts: Vec<u64>,
}

fn read_summary(path: &Path) -> Result<Summary, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::new(1, format!("summary {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| CmdError::new(1, format!("bad summary line `{line}`")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let parse_list = |key: &str| -> Result<Vec<String>, CmdError> {
        Ok(map
            .get(key)
            .ok_or_else(|| CmdError::new(1, format!("summary lacks `{key}`")))?
            .split(';')
            .map(str::to_string)
            .collect())
    };
    let edges = parse_list("histogram_edges")?
        .iter()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CmdError::new(1, format!("bad histogram edge: {e}")))?;
    let counts = parse_list("histogram_counts")?
        .iter()
        .map(|s| s.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CmdError::new(1, format!("bad histogram count: {e}")))?;
    Ok(Summary { map, edges, counts })
}

fn summary_field<'a>(s: &'a Summary, key: &str, path: &Path) -> Result<&'a str, CmdError> {
    s.map
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CmdError::new(1, format!("summary {} lacks `{key}`", path.display())))
}

pub fn cmd_report(
    cfg: &RunConfig,
    contrastive: &Path,
    supervised: &Path,
    svg: bool,
) -> Result<(), CmdError> {
    let out = cfg.out_dir.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let mut manifest = Manifest::new("report");
    manifest.input("contrastive_summary", contrastive)?;
    manifest.input("supervised_summary", supervised)?;
    let a = read_summary(contrastive)?;
    let b = read_summary(supervised)?;

    let dataset_a = summary_field(&a, "dataset", contrastive)?;
    let dataset_b = summary_field(&b, "dataset", supervised)?;
    if dataset_a != dataset_b {
        return Err(CmdError::new(
            6,
            format!("dataset tag mismatch: `{dataset_a}` vs `{dataset_b}`"),
        ));
    }
    if a.edges != b.edges {
        return Err(CmdError::new(1, "histogram bins differ between summaries"));
    }

    let mut table = String::from("metric,contrastive,supervised\n");
    for key in [
        "dataset",
        "scheme",
        "reference_perr",
        "n_masks",
        "n_failed",
        "fraction_better",
        "fraction_worse",
    ] {
        writeln!(
            table,
            "{key},{},{}",
            summary_field(&a, key, contrastive)?,
            summary_field(&b, key, supervised)?
        )
        .unwrap();
    }
    print!("{table}");

    let mut hist = String::from("bin_lo,bin_hi,contrastive,supervised\n");
    for i in 0..a.counts.len().min(b.counts.len()) {
        writeln!(hist, "{},{},{},{}", a.edges[i], a.edges[i + 1], a.counts[i], b.counts[i]).unwrap();
    }
    manifest.write_output("table", &out.join("report_table.csv"), table.as_bytes())?;
    manifest.write_output("histogram", &out.join("report_hist.csv"), hist.as_bytes())?;
    if svg {
        let rendered = histogram_svg(
            &a.edges,
            &[("contrastive", &a.counts[..]), ("supervised", &b.counts[..])],
        );
        manifest.write_output("histogram_svg", &out.join("report_hist.svg"), rendered.as_bytes())?;
    }
    write_config_snapshot(&mut manifest, cfg, &out, "report")?;
    manifest.finish(&out)
}

//! Acceptance gate. Each numbered criterion prints exactly one PASS or
//! FAIL line so a log scrape shows the whole contract at a glance.
//!
//! Tier 1 (c01..c05) is a fast property suite. Tier 2 (c06..c09) runs the
//! desk-scale experiment end to end on the vendored MNIST files; the two
//! trained runs are built once and shared across criteria through a lazy
//! static, so the suite stays within the desk budget no matter how the
//! harness orders the tests. Tier 3 (c10) is the hours-long full-scale
//! reproduction and stays behind `--ignored`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::Rng;

use hypersep_core::augment::{
    augment_sample, elastic_distort, make_view_pair, resize_by, rotate_by, translate_by,
    TransformSpec,
};
use hypersep_core::contrastive::{
    nt_xent_batch, nt_xent_pair, partner, train_contrastive, ContrastiveBatch, ContrastiveConfig,
};
use hypersep_core::data::{idx, load_dataset, Dataset, DatasetKind, Split};
use hypersep_core::nn::checkpoint::{decode_checkpoint, encode_checkpoint};
use hypersep_core::nn::{grad_check, AdamConfig, Network};
use hypersep_core::probe::cache::{decode_cache, encode_cache};
use hypersep_core::probe::head::{cross_entropy_loss, LinearHead};
use hypersep_core::probe::{
    capture_representations, enumerate_superclasses, run_probe_suite, sample_superclasses,
    HeadConfig, ProbeConfig, ProbeReport, ReprCache, SuperClassMask,
};
use hypersep_core::rng;
use hypersep_core::supervised::{mse_loss, train_supervised, SupervisedConfig};
use hypersep_core::Tensor;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Prints the one-line verdict, then fails the test if the criterion did
/// not hold. The line doubles as the panic message so it also survives in
/// captured output.
fn check(line: String, ok: bool) {
    println!("{line}");
    assert!(ok, "{line}");
}

/// Relative disagreement between two gradients taken as vectors; robust
/// to individual entries that happen to sit near zero.
fn vec_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = r.random_range(lo..hi);
    }
    t
}

// ---------------------------------------------------------------------------
// Tier 1
// ---------------------------------------------------------------------------

#[test]
fn c01_gradient_correctness() {
    const TOL: f64 = 1e-4;
    let h = 1e-6;

    // NT-Xent gradient in the representations, against central differences
    // entry by entry.
    let mut worst_ntx: f64 = 0.0;
    for inst in 0..5u64 {
        let pairs = 2 + (inst as usize) % 3;
        let dim = 5 + (inst as usize) % 4;
        let tau = [0.5, 1.0, 2.0, 0.8, 1.5][inst as usize];
        let z = random_tensor(2 * pairs, dim, -1.0, 1.0, 300 + inst);
        let analytic = nt_xent_batch(&ContrastiveBatch::new(&z, tau).unwrap())
            .unwrap()
            .grad;
        let mut numeric = Tensor::zeros(z.rows(), z.cols());
        for idx in 0..z.len() {
            let mut zp = z.clone();
            zp.data_mut()[idx] += h;
            let lp = nt_xent_batch(&ContrastiveBatch::new(&zp, tau).unwrap())
                .unwrap()
                .loss;
            let mut zm = z.clone();
            zm.data_mut()[idx] -= h;
            let lm = nt_xent_batch(&ContrastiveBatch::new(&zm, tau).unwrap())
                .unwrap()
                .loss;
            numeric.data_mut()[idx] = (lp - lm) / (2.0 * h);
        }
        worst_ntx = worst_ntx.max(vec_rel_err(analytic.data(), numeric.data()));
    }

    // NT-Xent composed through a ReLU trunk, and MSE likewise, using the
    // parameter-space finite-difference checker.
    let mut worst_net_ntx: f64 = 0.0;
    let mut worst_mse: f64 = 0.0;
    for inst in 0..5u64 {
        let net = Network::feedforward(&[6, 8, 4], 500 + inst).unwrap();
        let batch = random_tensor(6, 6, -1.0, 1.0, 600 + inst);
        let tau = if inst % 2 == 0 { 1.0 } else { 0.7 };
        let ntx_loss = move |out: &Tensor| {
            let report = nt_xent_batch(&ContrastiveBatch::new(out, tau)?)?;
            Ok((report.loss, report.grad))
        };
        let err = grad_check(&net, &batch, ntx_loss, 1e-5, 40, inst).unwrap();
        worst_net_ntx = worst_net_ntx.max(err);

        let targets = random_tensor(6, 4, -1.0, 1.0, 700 + inst);
        let mse = move |out: &Tensor| mse_loss(out, &targets);
        let err = grad_check(&net, &batch, mse, 1e-5, 40, inst).unwrap();
        worst_mse = worst_mse.max(err);
    }

    // Cross-entropy head: the logits gradient directly, then the chained
    // weight and bias gradients used by the probe trainer.
    let mut worst_ce: f64 = 0.0;
    for inst in 0..5u64 {
        let b = 6 + (inst as usize) % 3;
        let k = 3 + (inst as usize) % 2;
        let dim = 5;
        let reprs = random_tensor(b, dim, -1.0, 1.0, 800 + inst);
        let targets: Vec<u8> = (0..b).map(|i| ((i + inst as usize) % k) as u8).collect();
        let head = LinearHead::init(k, dim, 900 + inst).unwrap();

        let logits = head.logits(&reprs);
        let (_, dlogits) = cross_entropy_loss(&logits, &targets).unwrap();
        let mut numeric = Tensor::zeros(b, k);
        for idx in 0..logits.len() {
            let mut lp = logits.clone();
            lp.data_mut()[idx] += h;
            let mut lm = logits.clone();
            lm.data_mut()[idx] -= h;
            let up = cross_entropy_loss(&lp, &targets).unwrap().0;
            let down = cross_entropy_loss(&lm, &targets).unwrap().0;
            numeric.data_mut()[idx] = (up - down) / (2.0 * h);
        }
        worst_ce = worst_ce.max(vec_rel_err(dlogits.data(), numeric.data()));

        let dw = dlogits.matmul_tn(&reprs);
        let mut numeric_w = Tensor::zeros(k, dim);
        for idx in 0..dw.len() {
            let eval = |delta: f64| {
                let mut probe = head.clone();
                probe.weights.data_mut()[idx] += delta;
                cross_entropy_loss(&probe.logits(&reprs), &targets).unwrap().0
            };
            numeric_w.data_mut()[idx] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        worst_ce = worst_ce.max(vec_rel_err(dw.data(), numeric_w.data()));
    }

    let ok = worst_ntx < TOL && worst_net_ntx < TOL && worst_mse < TOL && worst_ce < TOL;
    check(
        format!(
            "acceptance c01 gradient correctness: {} (worst rel err: nt-xent {:.2e}, \
             nt-xent through net {:.2e}, mse {:.2e}, cross-entropy head {:.2e}; tol 1e-4)",
            verdict(ok),
            worst_ntx,
            worst_net_ntx,
            worst_mse,
            worst_ce
        ),
        ok,
    );
}

/// Naive cosine similarity, written independently of the library path.
fn brute_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Term-by-term pair loss: -s(i,j)/tau + ln sum_{k != i} exp(s(i,k)/tau),
/// with no max subtraction and no shared similarity matrix.
fn brute_pair_loss(z: &Tensor, tau: f64, i: usize, j: usize) -> f64 {
    let mut denom = 0.0;
    for k in 0..z.rows() {
        if k != i {
            denom += (brute_cosine(z.row(i), z.row(k)) / tau).exp();
        }
    }
    denom.ln() - brute_cosine(z.row(i), z.row(j)) / tau
}

#[test]
fn c02_nt_xent_oracle_equivalence() {
    let mut worst_pair: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut min_loss = f64::INFINITY;

    for inst in 0..6u64 {
        let pairs = [1, 2, 3, 5, 8, 4][inst as usize];
        let dim = 4 + (inst as usize) % 5;
        let tau = [0.25, 1.0, 4.0, 0.5, 2.0, 1.0][inst as usize];
        let z = random_tensor(2 * pairs, dim, -1.0, 1.0, 1000 + inst);
        let batch = ContrastiveBatch::new(&z, tau).unwrap();
        let report = nt_xent_batch(&batch).unwrap();

        let mut brute_mean = 0.0;
        for i in 0..2 * pairs {
            let j = partner(i);
            let brute = brute_pair_loss(&z, tau, i, j);
            brute_mean += brute;
            worst_pair = worst_pair.max((report.pair_losses[i] - brute).abs());
            let standalone = nt_xent_pair(&batch, i, j).unwrap();
            worst_pair = worst_pair.max((standalone - brute).abs());
            min_loss = min_loss.min(report.pair_losses[i]);
        }
        brute_mean /= (2 * pairs) as f64;
        worst_mean = worst_mean.max((report.loss - brute_mean).abs());
    }

    // A single pair has one denominator term, the partner itself, so the
    // loss cancels exactly.
    let z1 = random_tensor(2, 7, -1.0, 1.0, 2000);
    let single = nt_xent_batch(&ContrastiveBatch::new(&z1, 1.0).unwrap()).unwrap();
    let single_exact = single.loss == 0.0 && single.pair_losses.iter().all(|&l| l == 0.0);

    // Cosine similarity ignores positive row rescaling.
    let z = random_tensor(8, 6, -1.0, 1.0, 2100);
    let base = nt_xent_batch(&ContrastiveBatch::new(&z, 0.8).unwrap()).unwrap().loss;
    let mut r = rng::seeded(2101);
    let mut scaled = z.clone();
    for row in 0..scaled.rows() {
        let s = r.random_range(0.05..20.0);
        for v in scaled.row_mut(row) {
            *v *= s;
        }
    }
    let rescaled = nt_xent_batch(&ContrastiveBatch::new(&scaled, 0.8).unwrap()).unwrap().loss;
    let rescale_err = (base - rescaled).abs();

    // Relabeling the pairs permutes the per-anchor terms but not the mean.
    let perm = [2usize, 0, 3, 1];
    let mut permuted = Tensor::zeros(8, 6);
    for (q, &p) in perm.iter().enumerate() {
        let flip = q % 2 == 1;
        for within in 0..2 {
            let src = 2 * p + if flip { 1 - within } else { within };
            permuted.row_mut(2 * q + within).copy_from_slice(z.row(src));
        }
    }
    let perm_loss = nt_xent_batch(&ContrastiveBatch::new(&permuted, 0.8).unwrap()).unwrap().loss;
    let perm_err = (base - perm_loss).abs();

    let ok = worst_pair <= 1e-10
        && worst_mean <= 1e-10
        && min_loss >= 0.0
        && single_exact
        && rescale_err <= 1e-10
        && perm_err <= 1e-12;
    check(
        format!(
            "acceptance c02 nt-xent oracle equivalence: {} (brute-force pair dev {:.2e} <= 1e-10, \
             mean dev {:.2e}, min pair loss {:.2e} >= 0, single-pair loss exactly zero: {}, \
             rescale dev {:.2e} <= 1e-10, permutation dev {:.2e} <= 1e-12)",
            verdict(ok),
            worst_pair,
            worst_mean,
            min_loss,
            single_exact,
            rescale_err,
            perm_err
        ),
        ok,
    );
}

#[test]
fn c03_mask_algebra() {
    let mut ok = true;

    let mut r = rng::seeded(3000);
    for _ in 0..200 {
        let c = r.random_range(1..=20usize);
        let bits = r.random_range(0..1u64 << c);
        let m = SuperClassMask::new(bits, c).unwrap();
        let comp = m.complement();
        ok &= comp.bits() == !bits & ((1u64 << c) - 1);
        ok &= m.popcount() + comp.popcount() == c as u32;
        for b in 0..c as u8 {
            ok &= m.contains(b) != comp.contains(b);
        }
        ok &= comp.complement().bits() == m.bits();
    }

    let all10 = enumerate_superclasses(10).unwrap();
    let distinct10: HashSet<u64> = all10.iter().map(|m| m.bits()).collect();
    ok &= all10.len() == 1024 && distinct10.len() == 1024;
    ok &= all10.iter().enumerate().all(|(i, m)| m.bits() == i as u64);

    let sampled = sample_superclasses(47, 1000, 42).unwrap();
    let distinct47: HashSet<u64> = sampled.iter().map(|m| m.bits()).collect();
    ok &= sampled.len() == 1000 && distinct47.len() == 1000;
    ok &= sampled.iter().all(|m| m.bits() < 1u64 << 47);

    check(
        format!(
            "acceptance c03 mask algebra: {} (complement and popcount identities over 200 random \
             masks, enumerate(10) -> {} distinct, sample(47, 1000) -> {} distinct below 2^47)",
            verdict(ok),
            distinct10.len(),
            distinct47.len()
        ),
        ok,
    );
}

#[test]
fn c04_format_round_trips() {
    // Checkpoint: encode -> decode -> encode must be byte-stable and the
    // decoded network identical.
    let net = Network::feedforward(&[7, 5, 3], 11).unwrap();
    let meta = BTreeMap::from([
        ("dataset".to_string(), "mnist".to_string()),
        ("scheme".to_string(), "contrastive".to_string()),
    ]);
    let bytes = encode_checkpoint(&net, &meta);
    let (net2, meta2) = decode_checkpoint(&bytes).unwrap();
    let bytes2 = encode_checkpoint(&net2, &meta2);
    let probe_batch = random_tensor(3, 7, -1.0, 1.0, 4200);
    let out = net.forward(&probe_batch).unwrap();
    let out2 = net2.forward(&probe_batch).unwrap();
    let ckpt_ok = bytes == bytes2
        && net.layer_sizes() == net2.layer_sizes()
        && out.last().unwrap().data() == out2.last().unwrap().data();

    // Representation cache, same discipline.
    let cache = ReprCache::new(
        random_tensor(5, 6, -2.0, 2.0, 4000),
        random_tensor(3, 6, -2.0, 2.0, 4001),
        vec![0, 3, 9, 1, 2],
        vec![4, 0, 7],
        BTreeMap::from([
            ("dataset".to_string(), "mnist".to_string()),
            ("scheme".to_string(), "supervised".to_string()),
        ]),
    )
    .unwrap();
    let cbytes = encode_cache(&cache);
    let cache2 = decode_cache(&cbytes).unwrap();
    let cbytes2 = encode_cache(&cache2);
    let cache_ok = cbytes == cbytes2
        && cache.train_reprs().data() == cache2.train_reprs().data()
        && cache.test_reprs().data() == cache2.test_reprs().data()
        && cache.train_labels() == cache2.train_labels()
        && cache.test_labels() == cache2.test_labels();

    // IDX fixture: whole-valued pixels survive write -> parse -> write.
    let mut images = random_tensor(4, 784, 0.0, 1.0, 4100);
    for v in images.data_mut() {
        *v = (*v * 255.0).round();
    }
    let labels: Vec<u8> = vec![3, 1, 4, 1];
    let ibytes = idx::write_idx_images(&images).unwrap();
    let lbytes = idx::write_idx_labels(&labels);
    let parsed_images = idx::parse_idx_images(&ibytes).unwrap();
    let parsed_labels = idx::parse_idx_labels(&lbytes).unwrap();
    let idx_ok = parsed_images.data() == images.data()
        && parsed_labels == labels
        && idx::write_idx_images(&parsed_images).unwrap() == ibytes
        && idx::write_idx_labels(&parsed_labels) == lbytes;

    let ok = ckpt_ok && cache_ok && idx_ok;
    check(
        format!(
            "acceptance c04 format round-trips: {} (checkpoint bitwise {}, cache bitwise {}, \
             idx exact {})",
            verdict(ok),
            ckpt_ok,
            cache_ok,
            idx_ok
        ),
        ok,
    );
}

#[test]
fn c05_augmentation_identities() {
    let image: Vec<f64> = random_tensor(1, 784, 0.0, 1.0, 5000).data().to_vec();

    let mut r = rng::seeded(5001);
    let zero_alpha = elastic_distort(&image, 28, 4.0, 0.0, &mut r).unwrap();
    let elastic_id = zero_alpha == image;

    let affine_id = translate_by(&image, 28, 0.0, 0.0) == image
        && rotate_by(&image, 28, 0.0) == image
        && resize_by(&image, 28, 1.0).unwrap() == image;

    // Same seed, same bytes, across the full view-pair pipeline; a
    // different stream must diverge.
    let spec = TransformSpec::default();
    let (a1, b1) = make_view_pair(&image, 28, &spec, &mut rng::substream(42, 7)).unwrap();
    let (a2, b2) = make_view_pair(&image, 28, &spec, &mut rng::substream(42, 7)).unwrap();
    let (a3, _) = make_view_pair(&image, 28, &spec, &mut rng::substream(42, 8)).unwrap();
    let s1 = augment_sample(&image, 28, &spec, &mut rng::substream(43, 0)).unwrap();
    let s2 = augment_sample(&image, 28, &spec, &mut rng::substream(43, 0)).unwrap();
    let deterministic = a1 == a2 && b1 == b2 && s1 == s2 && a1 != a3;

    let ok = elastic_id && affine_id && deterministic;
    check(
        format!(
            "acceptance c05 augmentation identities: {} (alpha-0 elastic identity {}, \
             zero-parameter affine identities {}, fixed-seed determinism {})",
            verdict(ok),
            elastic_id,
            affine_id,
            deterministic
        ),
        ok,
    );
}

// ---------------------------------------------------------------------------
// Tier 2: desk-scale experiment
// ---------------------------------------------------------------------------

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("..").join("..").join("data")
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf, String> {
    for name in [format!("{stem}.gz"), stem.to_string()] {
        let p = dir.join(&name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(format!("missing {stem} (or .gz) under {}", dir.display()))
}

fn load_mnist() -> Result<(Dataset, Dataset), String> {
    let dir = data_dir().join("mnist");
    let train = load_dataset(
        &find_file(&dir, "train-images-idx3-ubyte")?,
        &find_file(&dir, "train-labels-idx1-ubyte")?,
        DatasetKind::Mnist,
        Split::Train,
    )
    .map_err(|e| e.to_string())?;
    let test = load_dataset(
        &find_file(&dir, "t10k-images-idx3-ubyte")?,
        &find_file(&dir, "t10k-labels-idx1-ubyte")?,
        DatasetKind::Mnist,
        Split::Test,
    )
    .map_err(|e| e.to_string())?;
    Ok((train, test))
}

fn load_emnist() -> Option<(Dataset, Dataset)> {
    let dir = data_dir().join("emnist");
    let train = load_dataset(
        &find_file(&dir, "emnist-balanced-train-images-idx3-ubyte").ok()?,
        &find_file(&dir, "emnist-balanced-train-labels-idx1-ubyte").ok()?,
        DatasetKind::EmnistBalanced,
        Split::Train,
    )
    .ok()?;
    let test = load_dataset(
        &find_file(&dir, "emnist-balanced-test-images-idx3-ubyte").ok()?,
        &find_file(&dir, "emnist-balanced-test-labels-idx1-ubyte").ok()?,
        DatasetKind::EmnistBalanced,
        Split::Test,
    )
    .ok()?;
    Some((train, test))
}

fn scheme_meta(scheme: &str) -> BTreeMap<String, String> {
    BTreeMap::from([("scheme".to_string(), scheme.to_string())])
}

fn head_config(epochs: usize) -> HeadConfig {
    HeadConfig { epochs, batch_size: 256, seed: 0, adam: AdamConfig::default() }
}

fn probe_config(head_epochs: usize) -> ProbeConfig {
    ProbeConfig { head: head_config(head_epochs), seed: 0, workers: 0 }
}

struct DeskRun {
    contrastive: ProbeReport,
    supervised: ProbeReport,
}

static DESK: OnceLock<Result<DeskRun, String>> = OnceLock::new();

/// Trains both desk-scale runs once; c07..c09 each read from here.
fn desk() -> &'static Result<DeskRun, String> {
    DESK.get_or_init(|| {
        let (train, test) = load_mnist()?;
        let masks = enumerate_superclasses(10).map_err(|e| e.to_string())?;
        let probe_cfg = probe_config(10);

        eprintln!("[desk] contrastive: 40 epochs, 256 pairs per batch");
        let net = Network::feedforward(&[784, 400, 400, 100], 0).map_err(|e| e.to_string())?;
        let cfg = ContrastiveConfig {
            tau: 1.0,
            pairs: 256,
            epochs: 40,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        };
        let (net, losses) = train_contrastive(&train, net, &TransformSpec::default(), &cfg)
            .map_err(|e| format!("contrastive training: {e}"))?;
        eprintln!(
            "[desk] contrastive final loss {:.4}; capturing and probing 1024 masks",
            losses.last().copied().unwrap_or(f64::NAN)
        );
        let cache = capture_representations(&net, &train, &test, &scheme_meta("contrastive"))
            .map_err(|e| e.to_string())?;
        let contrastive =
            run_probe_suite(&cache, &masks, &probe_cfg).map_err(|e| e.to_string())?;
        drop(cache);
        eprintln!(
            "[desk] contrastive probe done: reference perr {:.4}, fraction_better {:.4}",
            contrastive.reference_perr, contrastive.fraction_better
        );

        eprintln!("[desk] supervised: 10 epochs, batches of 1000");
        let net = Network::feedforward(&[784, 400, 400, 10], 0).map_err(|e| e.to_string())?;
        let cfg = SupervisedConfig {
            batch_size: 1000,
            epochs: 10,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        };
        let (net, _) = train_supervised(&train, net, &TransformSpec::default(), &cfg)
            .map_err(|e| format!("supervised training: {e}"))?;
        let cache = capture_representations(&net, &train, &test, &scheme_meta("supervised"))
            .map_err(|e| e.to_string())?;
        let supervised =
            run_probe_suite(&cache, &masks, &probe_cfg).map_err(|e| e.to_string())?;
        eprintln!(
            "[desk] supervised probe done: reference perr {:.4}, fraction_worse {:.4}",
            supervised.reference_perr, supervised.fraction_worse
        );

        Ok(DeskRun { contrastive, supervised })
    })
}

#[test]
fn c06_untrained_head_anchors() {
    // All heads run at 0 epochs, so only the class structure matters; the
    // representations come from untrained trunks for pipeline fidelity.
    let (mut train, test) = match load_mnist() {
        Ok(d) => d,
        Err(e) => {
            return check(format!("acceptance c06 untrained-head anchors: FAIL ({e})"), false)
        }
    };
    train.truncate(2048);
    let net = Network::feedforward(&[784, 400, 400, 100], 0).unwrap();
    let cache = capture_representations(&net, &train, &test, &scheme_meta("untrained")).unwrap();
    let masks = sample_superclasses(10, 128, 11).unwrap();
    let report = run_probe_suite(&cache, &masks, &probe_config(0)).unwrap();
    let mnist_multi = report.reference_perr;
    let perrs: Vec<f64> = report.rows.iter().filter_map(|r| r.perr_test).collect();
    let binary_mean = perrs.iter().sum::<f64>() / perrs.len() as f64;

    // 47-class anchor; the untrained error depends only on class count and
    // balance, so a balanced synthetic set stands in when the real files
    // are not vendored.
    let (mut train47, test47, source) = match load_emnist() {
        Some((tr, te)) => (tr, te, "emnist"),
        None => {
            let make = |n: usize, split: Split, seed: u64| {
                Dataset::new(
                    random_tensor(n, 784, 0.0, 1.0, seed),
                    (0..n).map(|i| (i % 47) as u8).collect(),
                    DatasetKind::EmnistBalanced,
                    split,
                )
                .unwrap()
            };
            (make(470, Split::Train, 6100), make(4700, Split::Test, 6101), "synthetic stand-in")
        }
    };
    train47.truncate(2048);
    let net47 = Network::feedforward(&[784, 400, 400, 100], 0).unwrap();
    let cache47 =
        capture_representations(&net47, &train47, &test47, &scheme_meta("untrained")).unwrap();
    let masks47 = sample_superclasses(47, 4, 3).unwrap();
    let report47 = run_probe_suite(&cache47, &masks47, &probe_config(0)).unwrap();
    let multi47 = report47.reference_perr;

    let ok = (mnist_multi - 0.90).abs() <= 0.05
        && (multi47 - 0.98).abs() <= 0.05
        && (binary_mean - 0.50).abs() <= 0.05
        && perrs.len() >= 100;
    check(
        format!(
            "acceptance c06 untrained-head anchors: {} (mnist multi-class perr {:.4} ~ 0.90, \
             47-class perr {:.4} ~ 0.98 via {}, binary mean perr {:.4} ~ 0.50 over {} masks)",
            verdict(ok),
            mnist_multi,
            multi47,
            source,
            binary_mean,
            perrs.len()
        ),
        ok,
    );
}

#[test]
fn c07_contrastive_desk_run() {
    match desk() {
        Err(e) => check(format!("acceptance c07 contrastive desk run: FAIL ({e})"), false),
        Ok(d) => {
            let r = &d.contrastive;
            let clean = r.rows.iter().all(|m| m.error.is_none());
            let ok = r.reference_perr <= 0.05 && r.fraction_better >= 0.80 && clean;
            check(
                format!(
                    "acceptance c07 contrastive desk run: {} (multi-class perr {:.4} <= 0.05, \
                     fraction_better {:.4} >= 0.80 over {} masks, all masks probed: {})",
                    verdict(ok),
                    r.reference_perr,
                    r.fraction_better,
                    r.rows.len(),
                    clean
                ),
                ok,
            );
        }
    }
}

#[test]
fn c08_supervised_desk_run() {
    match desk() {
        Err(e) => check(format!("acceptance c08 supervised desk run: FAIL ({e})"), false),
        Ok(d) => {
            let r = &d.supervised;
            let clean = r.rows.iter().all(|m| m.error.is_none());
            let ok = r.reference_perr <= 0.03 && r.fraction_worse >= 0.60 && clean;
            check(
                format!(
                    "acceptance c08 supervised desk run: {} (multi-class perr {:.4} <= 0.03, \
                     fraction_worse {:.4} >= 0.60 over {} masks, all masks probed: {})",
                    verdict(ok),
                    r.reference_perr,
                    r.fraction_worse,
                    r.rows.len(),
                    clean
                ),
                ok,
            );
        }
    }
}

#[test]
fn c09_contrastive_exceeds_supervised() {
    match desk() {
        Err(e) => {
            check(format!("acceptance c09 contrastive exceeds supervised: FAIL ({e})"), false)
        }
        Ok(d) => {
            let ok = d.contrastive.fraction_better > d.supervised.fraction_better;
            check(
                format!(
                    "acceptance c09 contrastive exceeds supervised: {} (fraction_better \
                     contrastive {:.4} > supervised {:.4})",
                    verdict(ok),
                    d.contrastive.fraction_better,
                    d.supervised.fraction_better
                ),
                ok,
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Tier 3: full-scale reproduction (hours; run with --ignored)
// ---------------------------------------------------------------------------

struct FullRun {
    perr: f64,
    fraction_better: f64,
}

fn full_run(
    train: &Dataset,
    test: &Dataset,
    contrastive: bool,
    epochs: usize,
    masks: &[SuperClassMask],
) -> Result<FullRun, String> {
    let (net, scheme) = if contrastive {
        let net = Network::feedforward(&[784, 400, 400, 100], 0).map_err(|e| e.to_string())?;
        let cfg = ContrastiveConfig {
            tau: 1.0,
            pairs: 1000,
            epochs,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        };
        let (net, _) = train_contrastive(train, net, &TransformSpec::default(), &cfg)
            .map_err(|e| e.to_string())?;
        (net, "contrastive")
    } else {
        let net = Network::feedforward(&[784, 400, 400, train.n_classes()], 0)
            .map_err(|e| e.to_string())?;
        let cfg = SupervisedConfig {
            batch_size: 1000,
            epochs,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        };
        let (net, _) = train_supervised(train, net, &TransformSpec::default(), &cfg)
            .map_err(|e| e.to_string())?;
        (net, "supervised")
    };
    let cache = capture_representations(&net, train, test, &scheme_meta(scheme))
        .map_err(|e| e.to_string())?;
    let report =
        run_probe_suite(&cache, masks, &probe_config(10)).map_err(|e| e.to_string())?;
    Ok(FullRun { perr: report.reference_perr, fraction_better: report.fraction_better })
}

#[test]
#[ignore = "full-scale reproduction; several hours of compute"]
fn c10_full_scale_reproduction() {
    let mut failures: Vec<String> = Vec::new();
    let mut row = |name: &str, ok: bool, detail: String| {
        println!("acceptance c10 {name}: {} ({detail})", verdict(ok));
        if !ok {
            failures.push(format!("{name}: {detail}"));
        }
    };

    match load_mnist() {
        Err(e) => row("mnist", false, e),
        Ok((train, test)) => {
            let masks = enumerate_superclasses(10).unwrap();
            match full_run(&train, &test, true, 200, &masks) {
                Err(e) => row("mnist contrastive", false, e),
                Ok(r) => {
                    row(
                        "mnist contrastive",
                        (r.perr - 0.014).abs() <= 0.01
                            && (r.fraction_better - 0.93).abs() <= 0.05,
                        format!(
                            "perr {:.4} within 0.014 +- 0.01, fraction_better {:.4} within \
                             0.93 +- 0.05",
                            r.perr, r.fraction_better
                        ),
                    );
                }
            }
            match full_run(&train, &test, false, 50, &masks) {
                Err(e) => row("mnist supervised", false, e),
                Ok(r) => {
                    row(
                        "mnist supervised",
                        (r.perr - 0.009).abs() <= 0.005,
                        format!("perr {:.4} within 0.009 +- 0.005", r.perr),
                    );
                }
            }
        }
    }

    match load_emnist() {
        None => println!(
            "acceptance c10 emnist: SKIP (emnist-balanced files not present under {})",
            data_dir().join("emnist").display()
        ),
        Some((train, test)) => {
            let masks = sample_superclasses(47, 1000, 0).unwrap();
            match full_run(&train, &test, true, 300, &masks) {
                Err(e) => row("emnist contrastive", false, e),
                Ok(r) => {
                    row(
                        "emnist contrastive",
                        (r.perr - 0.186).abs() <= 0.05
                            && (r.fraction_better - 0.98).abs() <= 0.03,
                        format!(
                            "perr {:.4} within 0.186 +- 0.05, fraction_better {:.4} within \
                             0.98 +- 0.03",
                            r.perr, r.fraction_better
                        ),
                    );
                }
            }
            match full_run(&train, &test, false, 50, &masks) {
                Err(e) => row("emnist supervised", false, e),
                Ok(r) => {
                    row(
                        "emnist supervised",
                        (r.perr - 0.132).abs() <= 0.04,
                        format!("perr {:.4} within 0.132 +- 0.04", r.perr),
                    );
                }
            }
        }
    }

    assert!(failures.is_empty(), "full-scale rows out of tolerance: {failures:?}");
}

//! HSNN checkpoint container: a trained (or freshly initialized) network
//! plus free-form run metadata.
//!
//! Layout: magic `HSNN`, version u32 LE, metadata block, then one tensor
//! record per parameter in layer order (`w0`, `b0`, `w1`, `b1`, ...).
//! Layer sizes and activation tags live in the metadata under reserved
//! keys so the decoder can validate shapes before reconstructing.

use super::{Activation, Layer, Network};
use crate::error::{Error, Result};
use crate::io::{put_meta, put_tensor, put_u32, Reader};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Reserved metadata keys written by the encoder.
pub const META_LAYERS: &str = "layers";
pub const META_ACTIVATIONS: &str = "activations";
/// Conventional keys written by callers and consumed downstream.
pub const META_DATASET: &str = "dataset";
pub const META_SCHEME: &str = "scheme";

pub fn encode_checkpoint(net: &Network, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let mut full_meta = meta.clone();
    let sizes: Vec<String> = net.layer_sizes().iter().map(usize::to_string).collect();
    full_meta.insert(META_LAYERS.to_string(), sizes.join(","));
    let tags: Vec<&str> = net.activations().iter().map(Activation::tag).collect();
    full_meta.insert(META_ACTIVATIONS.to_string(), tags.join(","));

    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    put_meta(&mut buf, &full_meta);
    for (i, layer) in net.layers().iter().enumerate() {
        put_tensor(&mut buf, &format!("w{i}"), &layer.weights);
        put_tensor(&mut buf, &format!("b{i}"), &layer.bias);
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, BTreeMap<String, String>)> {
    let mut r = Reader::new(bytes);
    r.expect_magic(&CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            4,
            format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let meta = r.meta()?;

    let sizes = parse_sizes(&meta, &r)?;
    let activations = parse_activations(&meta, &r)?;
    if activations.len() + 1 != sizes.len() {
        return Err(r.fail(format!(
            "{} activation tags for {} layer sizes",
            activations.len(),
            sizes.len()
        )));
    }

    let mut layers = Vec::with_capacity(activations.len());
    for (i, &activation) in activations.iter().enumerate() {
        let weights = r.tensor(&format!("w{i}"))?;
        let bias = r.tensor(&format!("b{i}"))?;
        if weights.shape() != (sizes[i + 1], sizes[i]) {
            return Err(r.fail(format!(
                "w{i} has shape {:?}, metadata declares ({}, {})",
                weights.shape(),
                sizes[i + 1],
                sizes[i]
            )));
        }
        layers.push(Layer { weights, bias, activation });
    }
    r.finish()?;
    let net = Network::from_layers(layers)?;
    Ok((net, meta))
}

fn parse_sizes(meta: &BTreeMap<String, String>, r: &Reader) -> Result<Vec<usize>> {
    let raw = meta
        .get(META_LAYERS)
        .ok_or_else(|| r.fail("metadata lacks `layers` key"))?;
    raw.split(',')
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| r.fail(format!("bad layer size {s:?}")))
        })
        .collect()
}

fn parse_activations(meta: &BTreeMap<String, String>, r: &Reader) -> Result<Vec<Activation>> {
    let raw = meta
        .get(META_ACTIVATIONS)
        .ok_or_else(|| r.fail("metadata lacks `activations` key"))?;
    raw.split(',').map(Activation::from_tag).collect()
}

pub fn save_checkpoint(path: &Path, net: &Network, meta: &BTreeMap<String, String>) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(net, meta))?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    decode_checkpoint(&std::fs::read(path)?)
}

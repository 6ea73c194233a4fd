//! Benign image transformations: elastic distortion after Simard et al.,
//! plus mild translation, rotation, and resizing, composed into the view
//! pairs that drive contrastive training.
//!
//! All transforms pull-sample with bilinear interpolation and treat
//! out-of-bounds reads as background (0), so `[0,1]` images stay in
//! `[0,1]`. Images are flat `side*side` row-major slices.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Elastic { sigma: f64, alpha: f64 },
    Translate { max_shift: f64 },
    Rotate { max_degrees: f64 },
    Resize { min_scale: f64, max_scale: f64 },
    Compose { children: Vec<TransformSpec> },
}

impl TransformSpec {
    /// The empty composition; applies nothing.
    pub fn identity() -> Self {
        TransformSpec::Compose { children: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransformSpec::Elastic { sigma, alpha } => {
                if !(*sigma > 0.0) {
                    return Err(Error::config(format!("elastic sigma must be positive, got {sigma}")));
                }
                if !(*alpha >= 0.0) {
                    return Err(Error::config(format!("elastic alpha must be nonnegative, got {alpha}")));
                }
            }
            TransformSpec::Translate { max_shift } => {
                if !(*max_shift >= 0.0) {
                    return Err(Error::config(format!("max_shift must be nonnegative, got {max_shift}")));
                }
            }
            TransformSpec::Rotate { max_degrees } => {
                if !(*max_degrees >= 0.0 && *max_degrees <= 20.0) {
                    return Err(Error::config(format!(
                        "max_degrees must lie in [0, 20] to stay mild, got {max_degrees}"
                    )));
                }
            }
            TransformSpec::Resize { min_scale, max_scale } => {
                if !(*min_scale > 0.0 && *min_scale <= *max_scale && *max_scale < 2.0) {
                    return Err(Error::config(format!(
                        "scale range [{min_scale}, {max_scale}] must satisfy 0 < min <= max < 2"
                    )));
                }
            }
            TransformSpec::Compose { children } => {
                for c in children {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }
}

impl Default for TransformSpec {
    /// Elastic distortion alone performed best in the experiments.
    ///
    /// The field is normalized before scaling, so `alpha` is the maximum
    /// displacement in pixels. 4 px keeps the distortion benign on 28x28
    /// digits: mean pixel mass changes by ~12% (measured over MNIST),
    /// comparable to the classic sigma=4 elastic-distortion regime, while
    /// 12 px in this convention would shear digits beyond recognition.
    fn default() -> Self {
        TransformSpec::Elastic { sigma: 4.0, alpha: 4.0 }
    }
}

/// Truncated Gaussian kernel of radius `ceil(3 sigma)`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        kernel.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    Ok(kernel)
}

/// Separable Gaussian smoothing. Near edges the clipped kernel is
/// renormalized by its in-bounds mass, so constants are preserved exactly.
pub fn gaussian_smooth(field: &Tensor, sigma: f64) -> Result<Tensor> {
    let kernel = gaussian_kernel(sigma)?;
    let radius = kernel.len() / 2;
    let (rows, cols) = field.shape();

    let mut pass1 = Tensor::zeros(rows, cols);
    for r in 0..rows {
        let src = field.row(r);
        let dst = pass1.row_mut(r);
        for (c, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                let i = c as isize + t as isize - radius as isize;
                if (0..cols as isize).contains(&i) {
                    acc += w * src[i as usize];
                    mass += w;
                }
            }
            *d = acc / mass;
        }
    }

    let mut out = Tensor::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                let i = r as isize + t as isize - radius as isize;
                if (0..rows as isize).contains(&i) {
                    acc += w * pass1.get(i as usize, c);
                    mass += w;
                }
            }
            out.set(r, c, acc / mass);
        }
    }
    Ok(out)
}

/// Sum of absolute horizontal and vertical neighbor differences.
pub fn total_variation(t: &Tensor) -> f64 {
    let (rows, cols) = t.shape();
    let mut tv = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                tv += (t.get(r, c + 1) - t.get(r, c)).abs();
            }
            if r + 1 < rows {
                tv += (t.get(r + 1, c) - t.get(r, c)).abs();
            }
        }
    }
    tv
}

/// Per-pixel displacements in pixel units; `dx` shifts sampling along
/// columns, `dy` along rows.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    dx: Tensor,
    dy: Tensor,
}

impl DisplacementField {
    pub fn from_parts(dx: Tensor, dy: Tensor) -> Result<Self> {
        if dx.shape() != dy.shape() || dx.rows() != dx.cols() {
            return Err(Error::dimension(format!(
                "displacement fields must be square and congruent, got {:?} and {:?}",
                dx.shape(),
                dy.shape()
            )));
        }
        if !dx.is_all_finite() || !dy.is_all_finite() {
            return Err(Error::Validation("displacement field has non-finite entries".into()));
        }
        Ok(DisplacementField { dx, dy })
    }

    /// Simard-style field: i.i.d. uniform `[-1,1]` draws (dx first, then
    /// dy, row-major), Gaussian-smoothed, normalized to unit max
    /// magnitude, scaled by `alpha`.
    pub fn sample(side: usize, sigma: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::config(format!("alpha must be nonnegative, got {alpha}")));
        }
        let draw = |side: usize, rng: &mut ChaCha8Rng| {
            let mut t = Tensor::zeros(side, side);
            for v in t.data_mut() {
                *v = rng::uniform(rng, -1.0, 1.0);
            }
            t
        };
        let mut dx = draw(side, rng);
        let mut dy = draw(side, rng);
        dx = gaussian_smooth(&dx, sigma)?;
        dy = gaussian_smooth(&dy, sigma)?;
        for f in [&mut dx, &mut dy] {
            let m = f.max_abs();
            if m > 0.0 {
                f.scale(alpha / m);
            }
        }
        Ok(DisplacementField { dx, dy })
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx.max_abs().max(self.dy.max_abs())
    }

    /// Pull-samples the source at `(r + dy, c + dx)` per output pixel.
    pub fn apply(&self, image: &[f64]) -> Vec<f64> {
        let side = self.dx.rows();
        assert_eq!(image.len(), side * side, "image does not match field side");
        let mut out = vec![0.0; image.len()];
        for r in 0..side {
            for c in 0..side {
                let fy = r as f64 + self.dy.get(r, c);
                let fx = c as f64 + self.dx.get(r, c);
                out[r * side + c] = bilinear(image, side, fy, fx);
            }
        }
        out
    }
}

/// Bilinear read at fractional coordinates; out-of-bounds corners
/// contribute 0. Exact at integer coordinates.
fn bilinear(src: &[f64], side: usize, fy: f64, fx: f64) -> f64 {
    let y0 = fy.floor();
    let x0 = fx.floor();
    let wy = fy - y0;
    let wx = fx - x0;
    let y0 = y0 as isize;
    let x0 = x0 as isize;
    let mut acc = 0.0;
    for (dy, wr) in [(0, 1.0 - wy), (1, wy)] {
        for (dx, wc) in [(0, 1.0 - wx), (1, wx)] {
            let w = wr * wc;
            if w == 0.0 {
                continue;
            }
            let y = y0 + dy;
            let x = x0 + dx;
            if (0..side as isize).contains(&y) && (0..side as isize).contains(&x) {
                acc += w * src[y as usize * side + x as usize];
            }
        }
    }
    acc.clamp(0.0, 1.0)
}

pub fn elastic_distort(
    image: &[f64],
    side: usize,
    sigma: f64,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    assert_eq!(image.len(), side * side, "image is not side x side");
    let field = DisplacementField::sample(side, sigma, alpha, rng)?;
    Ok(field.apply(image))
}

/// Shifts content by `(tx, ty)` pixels (columns, rows).
pub fn translate_by(image: &[f64], side: usize, tx: f64, ty: f64) -> Vec<f64> {
    resample(image, side, |r, c| (r - ty, c - tx))
}

/// Rotates content by `degrees` about the image center.
pub fn rotate_by(image: &[f64], side: usize, degrees: f64) -> Vec<f64> {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let ctr = (side as f64 - 1.0) / 2.0;
    resample(image, side, |r, c| {
        let y = r - ctr;
        let x = c - ctr;
        (ctr + (-sin * x + cos * y), ctr + (cos * x + sin * y))
    })
}

/// Scales content about the center; `scale > 1` magnifies.
pub fn resize_by(image: &[f64], side: usize, scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::config(format!("resize scale must be positive, got {scale}")));
    }
    let ctr = (side as f64 - 1.0) / 2.0;
    Ok(resample(image, side, |r, c| {
        (ctr + (r - ctr) / scale, ctr + (c - ctr) / scale)
    }))
}

fn resample(image: &[f64], side: usize, src_of: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
    assert_eq!(image.len(), side * side, "image is not side x side");
    let mut out = vec![0.0; image.len()];
    for r in 0..side {
        for c in 0..side {
            let (sy, sx) = src_of(r as f64, c as f64);
            out[r * side + c] = bilinear(image, side, sy, sx);
        }
    }
    out
}

/// Applies one affine kind with parameters drawn from `rng`.
pub fn affine_transform(
    image: &[f64],
    side: usize,
    spec: &TransformSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    spec.validate()?;
    match spec {
        TransformSpec::Translate { max_shift } => {
            let tx = rng::uniform(rng, -max_shift, *max_shift);
            let ty = rng::uniform(rng, -max_shift, *max_shift);
            Ok(translate_by(image, side, tx, ty))
        }
        TransformSpec::Rotate { max_degrees } => {
            let deg = rng::uniform(rng, -max_degrees, *max_degrees);
            Ok(rotate_by(image, side, deg))
        }
        TransformSpec::Resize { min_scale, max_scale } => {
            let s = rng::uniform(rng, *min_scale, *max_scale);
            resize_by(image, side, s)
        }
        other => Err(Error::config(format!("{other:?} is not an affine transform"))),
    }
}

/// One random draw of `spec` applied to `image`; the augmentation stage
/// for both training schemes.
pub fn augment_sample(
    image: &[f64],
    side: usize,
    spec: &TransformSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    spec.validate()?;
    match spec {
        TransformSpec::Elastic { sigma, alpha } => elastic_distort(image, side, *sigma, *alpha, rng),
        TransformSpec::Compose { children } => {
            let mut cur = image.to_vec();
            for child in children {
                cur = augment_sample(&cur, side, child, rng)?;
            }
            Ok(cur)
        }
        affine => affine_transform(image, side, affine, rng),
    }
}

/// Two independent draws of `spec` on the same source; the substreams are
/// seeded from two consecutive parent draws, so the pair is reproducible.
pub fn make_view_pair(
    image: &[f64],
    side: usize,
    spec: &TransformSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    use rand::RngCore;
    let mut r1 = rng::seeded(rng.next_u64());
    let mut r2 = rng::seeded(rng.next_u64());
    let a = augment_sample(image, side, spec, &mut r1)?;
    let b = augment_sample(image, side, spec, &mut r2)?;
    Ok((a, b))
}

//! Synthetic data: the Gaussian blur operator and white noise for the
//! imaging experiment, smooth random-field images, and the GARCH-driven
//! factor-model market.

mod images;
mod market;

pub use images::{synthetic_images, ImageSpec};
pub use market::{
    garch_path, garch_volatility_path, synthetic_market, GarchPath, MarketData, SyntheticMarketSpec,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    ZeroPad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurSpec {
    pub image_side: usize,
    pub kernel_side: usize,
    pub kernel_std: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl BlurSpec {
    /// 28 x 28 images, 5 x 5 kernel, standard deviation 1.5.
    pub fn paper() -> Self {
        BlurSpec {
            image_side: 28,
            kernel_side: 5,
            kernel_std: 1.5,
            boundary: Boundary::ZeroPad,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.kernel_side.is_multiple_of(2) {
            return Err(DatagenError::Spec(format!("kernel side {} must be odd", self.kernel_side)));
        }
        if self.kernel_side > self.image_side {
            return Err(DatagenError::Spec(format!(
                "kernel side {} exceeds image side {}",
                self.kernel_side, self.image_side
            )));
        }
        if !(self.kernel_std > 0.0 && self.kernel_std.is_finite()) {
            return Err(DatagenError::Spec(format!("kernel std must be positive, got {}", self.kernel_std)));
        }
        Ok(())
    }
}

/// Square Gaussian kernel sampled at integer offsets from the center and
/// normalized to sum 1; row-major `side x side`.
pub fn gaussian_kernel(side: usize, std: f64) -> Vec<f64> {
    let c = (side / 2) as f64;
    let mut k: Vec<f64> = (0..side * side)
        .map(|idx| {
            let (a, b) = ((idx / side) as f64 - c, (idx % side) as f64 - c);
            (-(a * a + b * b) / (2.0 * std * std)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Zero-padded correlation of a row-major `side x side` image with a
/// row-major `ks x ks` kernel.
pub(crate) fn correlate(image: &[f64], side: usize, kernel: &[f64], ks: usize) -> Vec<f64> {
    let half = (ks / 2) as isize;
    let s = side as isize;
    let mut out = vec![0.0; side * side];
    for p in 0..s {
        for q in 0..s {
            let mut acc = 0.0;
            for a in 0..ks as isize {
                let pi = p + a - half;
                if pi < 0 || pi >= s {
                    continue;
                }
                for b in 0..ks as isize {
                    let qi = q + b - half;
                    if qi < 0 || qi >= s {
                        continue;
                    }
                    acc += kernel[(a * ks as isize + b) as usize] * image[(pi * s + qi) as usize];
                }
            }
            out[(p * s + q) as usize] = acc;
        }
    }
    out
}

/// Blur operator `F`: column `j` is the blurred basis image `e_j`, with
/// images flattened row-major.
pub fn build_blur_operator(spec: &BlurSpec) -> Result<DenseMatrix, DatagenError> {
    spec.validate()?;
    let side = spec.image_side;
    let n = side * side;
    let kernel = gaussian_kernel(spec.kernel_side, spec.kernel_std);
    let half = (spec.kernel_side / 2) as isize;
    let s = side as isize;
    let mut f = DenseMatrix::zeros(n, n);
    for j in 0..n {
        // The blurred basis image is the (flipped) kernel placed at pixel j.
        let (pj, qj) = ((j / side) as isize, (j % side) as isize);
        let col = f.col_mut(j);
        for a in 0..spec.kernel_side as isize {
            let p = pj - (a - half);
            if p < 0 || p >= s {
                continue;
            }
            for b in 0..spec.kernel_side as isize {
                let q = qj - (b - half);
                if q < 0 || q >= s {
                    continue;
                }
                col[(p * s + q) as usize] = kernel[(a * spec.kernel_side as isize + b) as usize];
            }
        }
    }
    Ok(f)
}

/// `Y + E` with i.i.d. `N(0, std²)` entries drawn from `rng`.
pub fn add_white_noise_with(y: &DenseMatrix, std: f64, rng: &mut SeededRng) -> Result<DenseMatrix, DatagenError> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(DatagenError::Spec(format!("noise std must be finite and >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(y.clone());
    }
    let mut out = y.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v += std * rng.normal());
    Ok(out)
}

pub fn add_white_noise(y: &DenseMatrix, std: f64, seed: u64) -> Result<DenseMatrix, DatagenError> {
    add_white_noise_with(y, std, &mut SeededRng::new(seed))
}

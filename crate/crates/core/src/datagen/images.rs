use serde::{Deserialize, Serialize};

use super::{correlate, gaussian_kernel, DatagenError};
use crate::linalg::DenseMatrix;
use crate::rng::SeededRng;

/// Smooth random-field images clipped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    pub side: usize,
    /// Standard deviation, in pixels, of the Gaussian smoothing of white noise.
    pub smoothing_std: f64,
    /// Standard deviation of the smoothed field around the mid-gray level 0.5.
    pub contrast: f64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        ImageSpec {
            side: 28,
            smoothing_std: 2.0,
            contrast: 0.25,
        }
    }
}

/// `side² x count` matrix of row-major flattened images.
pub fn synthetic_images(spec: &ImageSpec, count: usize, rng: &mut SeededRng) -> Result<DenseMatrix, DatagenError> {
    if spec.side == 0 || !(spec.smoothing_std > 0.0) || !(spec.contrast >= 0.0) {
        return Err(DatagenError::Spec(format!("invalid image spec {spec:?}")));
    }
    let ks = (2.0 * (3.0 * spec.smoothing_std).ceil() + 1.0) as usize;
    let kernel = gaussian_kernel(ks, spec.smoothing_std);
    let n = spec.side * spec.side;
    let mut out = DenseMatrix::zeros(n, count);
    for j in 0..count {
        let noise: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let field = correlate(&noise, spec.side, &kernel, ks);
        let mean = field.iter().sum::<f64>() / n as f64;
        let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if std > 0.0 { spec.contrast / std } else { 0.0 };
        for (o, v) in out.col_mut(j).iter_mut().zip(&field) {
            *o = (0.5 + scale * (v - mean)).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_are_bounded_and_deterministic() {
        let spec = ImageSpec::default();
        let a = synthetic_images(&spec, 5, &mut SeededRng::new(1)).unwrap();
        let b = synthetic_images(&spec, 5, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (784, 5));
        assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn neighbouring_pixels_are_correlated() {
        let spec = ImageSpec::default();
        let imgs = synthetic_images(&spec, 50, &mut SeededRng::new(2)).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..50 {
            let c = imgs.col(j);
            for p in 0..28 {
                for q in 0..27 {
                    let (a, b) = (c[p * 28 + q] - 0.5, c[p * 28 + q + 1] - 0.5);
                    num += a * b;
                    den += a * a;
                }
            }
        }
        assert!(num / den > 0.7);
    }
}

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::linalg::DenseMatrix;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticMarketSpec {
    pub days: usize,
    pub assets: usize,
    pub factors: usize,
    pub garch_omega: f64,
    pub garch_alpha: f64,
    pub garch_beta: f64,
    pub seed: u64,
    /// Relative factor standard deviations, dominant first.
    #[serde(default = "default_ratios")]
    pub factor_ratios: Vec<f64>,
    /// AR(1) coefficient of every factor path.
    #[serde(default = "default_ar")]
    pub factor_ar: f64,
    /// Standard deviation of the weakest-unit factor: factor `k` has
    /// standard deviation `factor_scale * factor_ratios[k]`.
    #[serde(default = "default_factor_scale")]
    pub factor_scale: f64,
    /// Multiplier on the GARCH variances in the noise `Δ = noise_scale · P ⊙ Q`.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_ratios() -> Vec<f64> {
    vec![5.0, 2.0, 1.0]
}

fn default_ar() -> f64 {
    0.2
}

fn default_factor_scale() -> f64 {
    0.01
}

fn default_noise_scale() -> f64 {
    0.05
}

impl SyntheticMarketSpec {
    /// 2000 days, 10 assets, 3 factors, GARCH(0.01, 0.1, 0.85).
    pub fn paper(seed: u64) -> Self {
        SyntheticMarketSpec {
            days: 2000,
            assets: 10,
            factors: 3,
            garch_omega: 0.01,
            garch_alpha: 0.1,
            garch_beta: 0.85,
            seed,
            factor_ratios: default_ratios(),
            factor_ar: default_ar(),
            factor_scale: default_factor_scale(),
            noise_scale: default_noise_scale(),
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::Spec(m));
        if self.days == 0 || self.assets == 0 || self.factors == 0 {
            return bad("days, assets and factors must be positive".into());
        }
        if !(self.garch_omega > 0.0) || self.garch_alpha < 0.0 || self.garch_beta < 0.0 {
            return bad("GARCH parameters need omega > 0 and alpha, beta >= 0".into());
        }
        if self.garch_alpha + self.garch_beta >= 1.0 {
            return bad(format!(
                "alpha + beta = {} must be < 1 for a finite unconditional variance",
                self.garch_alpha + self.garch_beta
            ));
        }
        if self.factor_ratios.len() != self.factors {
            return bad(format!(
                "{} factor ratios given for {} factors",
                self.factor_ratios.len(),
                self.factors
            ));
        }
        if self.factor_ar.abs() >= 1.0 {
            return bad(format!("AR coefficient {} must satisfy |phi| < 1", self.factor_ar));
        }
        if self.factor_scale < 0.0 || self.noise_scale < 0.0 {
            return bad("scales must be nonnegative".into());
        }
        Ok(())
    }
}

/// GARCH(1,1) variances `υ²_t` and the shocks `ε_t = υ_t z_t` that drive them.
#[derive(Clone, Debug)]
pub struct GarchPath {
    pub variance: Vec<f64>,
    pub shocks: Vec<f64>,
}

/// `υ²_t = ω + α ε²_{t−1} + β υ²_{t−1}`, started at `ω / (1 − α − β)`.
pub fn garch_path(omega: f64, alpha: f64, beta: f64, len: usize, rng: &mut SeededRng) -> GarchPath {
    let mut variance = Vec::with_capacity(len);
    let mut shocks = Vec::with_capacity(len);
    let mut v = omega / (1.0 - alpha - beta);
    for t in 0..len {
        if t > 0 {
            let e = shocks[t - 1];
            v = omega + alpha * e * e + beta * v;
        }
        variance.push(v);
        shocks.push(v.sqrt() * rng.normal());
    }
    GarchPath { variance, shocks }
}

/// Length-`days` variance path from the spec's GARCH constants.
pub fn garch_volatility_path(spec: &SyntheticMarketSpec) -> Result<Vec<f64>, DatagenError> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed).split(0);
    Ok(garch_path(spec.garch_omega, spec.garch_alpha, spec.garch_beta, spec.days, &mut rng).variance)
}

#[derive(Clone, Debug)]
pub struct MarketData {
    /// `T x A`
    pub returns: DenseMatrix,
    /// `T x r`
    pub true_factors: DenseMatrix,
    /// `A x r`
    pub true_loadings: DenseMatrix,
    /// `T x A` GARCH variances `P`.
    pub variances: DenseMatrix,
}

/// `X = C Bᵀ + Δ` with AR(1) factor paths `C`, loadings `B`, and
/// heteroskedastic noise `Δ = noise_scale · P ⊙ Q`.
///
/// The first factor is market-like: every asset loads on it positively,
/// in `[0.5, 1.5]`. The remaining loadings are uniform on `[−1, 1]`.
pub fn synthetic_market(spec: &SyntheticMarketSpec) -> Result<MarketData, DatagenError> {
    spec.validate()?;
    let (t, a, r) = (spec.days, spec.assets, spec.factors);
    let root = SeededRng::new(spec.seed);
    let mut frng = root.split(1);
    let phi = spec.factor_ar;
    let innov = (1.0 - phi * phi).sqrt();
    let mut c = DenseMatrix::zeros(t, r);
    for k in 0..r {
        let sd = spec.factor_scale * spec.factor_ratios[k];
        let col = c.col_mut(k);
        let mut prev = sd * frng.normal();
        for v in col.iter_mut() {
            *v = prev;
            prev = phi * prev + sd * innov * frng.normal();
        }
    }
    let mut lrng = root.split(2);
    let b = DenseMatrix::from_fn(a, r, |_, k| if k == 0 { lrng.uniform(0.5, 1.5) } else { lrng.uniform(-1.0, 1.0) });
    let mut p = DenseMatrix::zeros(t, a);
    for j in 0..a {
        let mut g = root.split(16 + j as u64);
        let path = garch_path(spec.garch_omega, spec.garch_alpha, spec.garch_beta, t, &mut g);
        p.col_mut(j).copy_from_slice(&path.variance);
    }
    let mut qrng = root.split(3);
    let mut returns = c.matmul_t(&b).expect("conformable");
    if spec.noise_scale > 0.0 {
        for (x, pv) in returns.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *x += spec.noise_scale * pv * qrng.normal();
        }
    }
    Ok(MarketData {
        returns,
        true_factors: c,
        true_loadings: b,
        variances: p,
    })
}

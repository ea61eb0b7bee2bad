//! Trained comparators: a gradient-trained linear or affine encoder-decoder,
//! a PCA baseline, and an optional one-hidden-layer leaky-ReLU network.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::empirical::{DataSet, EmpiricalError};
use crate::linalg::{svd, DenseMatrix, LinalgError};
use crate::mappings::{Branch, ConstructionTrace, Form, OptimalMap, ProblemKind, Task};
use crate::rng::SeededRng;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    #[default]
    Adam,
    PlainGd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub rank: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    /// `None` trains full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub affine: bool,
}

impl TrainConfig {
    /// Adam, `lr = 1e-3`, 200 full-batch epochs.
    pub fn paper(rank: usize, seed: u64) -> Self {
        TrainConfig {
            rank,
            epochs: 200,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            batch_size: None,
            seed,
            affine: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.rank == 0 {
            return Err(TrainError::Config("rank must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedMap {
    /// `r x n`
    pub encoder: DenseMatrix,
    /// `m x r`
    pub decoder: DenseMatrix,
    pub bias: Option<Vec<f64>>,
    pub initial_loss: f64,
    /// Full-data loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedMap {
    /// `D E`
    pub fn composed(&self) -> DenseMatrix {
        self.decoder.matmul(&self.encoder).expect("conformable by construction")
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut y = self.decoder.matmul(&self.encoder.matmul(x)?)?;
        if let Some(b) = &self.bias {
            y.add_to_columns(b);
        }
        Ok(y)
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&self.initial_loss)
    }
}

/// `(1/J) ‖D E X + b 1ᵀ − Y‖²`
pub fn mse_loss(
    encoder: &DenseMatrix,
    decoder: &DenseMatrix,
    bias: Option<&[f64]>,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<f64, LinalgError> {
    let mut pred = decoder.matmul(&encoder.matmul(x)?)?;
    if let Some(b) = bias {
        pred.add_to_columns(b);
    }
    Ok(pred.sub(y)?.frobenius_norm_sq() / x.cols() as f64)
}

struct Gradients {
    loss: f64,
    encoder: DenseMatrix,
    decoder: DenseMatrix,
    bias: Option<Vec<f64>>,
}

/// Analytic gradients of the MSE loss with residual `R = D E X + b 1ᵀ − Y`:
/// `∂D = (2/J) R (E X)ᵀ`, `∂E = (2/J) Dᵀ R Xᵀ`, `∂b = (2/J) R 1`.
fn gradients(
    encoder: &DenseMatrix,
    decoder: &DenseMatrix,
    bias: Option<&[f64]>,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<Gradients, LinalgError> {
    let j = x.cols() as f64;
    let ex = encoder.matmul(x)?;
    let mut resid = decoder.matmul(&ex)?;
    if let Some(b) = bias {
        resid.add_to_columns(b);
    }
    resid.axpy(-1.0, y)?;
    let loss = resid.frobenius_norm_sq() / j;
    let c = 2.0 / j;
    let mut gd = resid.matmul_t(&ex)?;
    gd.scale_mut(c);
    let mut ge = decoder.t_matmul(&resid)?.matmul_t(x)?;
    ge.scale_mut(c);
    let gb = bias.map(|_| {
        (0..resid.rows())
            .map(|i| c * (0..resid.cols()).map(|k| resid[(i, k)]).sum::<f64>())
            .collect()
    });
    Ok(Gradients {
        loss,
        encoder: ge,
        decoder: gd,
        bias: gb,
    })
}

/// First-order optimizer state for one parameter block.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, opt: Optimizer, lr: f64, t: i32, params: &mut [f64], grad: &[f64]) {
        match opt {
            Optimizer::PlainGd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn batches(j: usize, batch: Option<usize>, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    match batch {
        None => vec![(0..j).collect()],
        Some(b) if b >= j => vec![(0..j).collect()],
        Some(b) => rng.permutation(j).chunks(b).map(|c| c.to_vec()).collect(),
    }
}

/// Fan-in uniform initialization `U[−1/√fan_in, 1/√fan_in]`.
fn init_layer(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    let bound = 1.0 / (cols.max(1) as f64).sqrt();
    rng.uniform_matrix(rows, cols, -bound, bound)
}

/// Trains `y ≈ D E x (+ b)` on `d.x → d.y` with the MSE loss.
pub fn train_encoder_decoder(d: &DataSet, cfg: &TrainConfig) -> Result<TrainedMap, TrainError> {
    cfg.validate()?;
    let x = &d.x;
    let y = d.observations()?;
    let (n, m, r) = (x.rows(), y.rows(), cfg.rank);
    let root = SeededRng::new(cfg.seed);
    let mut init = root.split(0);
    let mut shuffle = root.split(1);
    let mut enc = init_layer(&mut init, r, n);
    let mut dec = init_layer(&mut init, m, r);
    let mut bias = cfg.affine.then(|| vec![0.0; m]);
    let initial_loss = mse_loss(&enc, &dec, bias.as_deref(), x, y)?;
    let (mut me, mut md, mut mb) = (Moments::new(r * n), Moments::new(m * r), Moments::new(m));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut t = 0;
    for epoch in 1..=cfg.epochs {
        for idx in batches(x.cols(), cfg.batch_size, &mut shuffle) {
            let (bx, by);
            let (xb, yb) = if idx.len() == x.cols() {
                (x, y)
            } else {
                bx = x.select_columns(&idx);
                by = y.select_columns(&idx);
                (&bx, &by)
            };
            let g = gradients(&enc, &dec, bias.as_deref(), xb, yb)?;
            t += 1;
            me.step(cfg.optimizer, cfg.learning_rate, t, enc.as_mut_slice(), g.encoder.as_slice());
            md.step(cfg.optimizer, cfg.learning_rate, t, dec.as_mut_slice(), g.decoder.as_slice());
            if let (Some(b), Some(gb)) = (bias.as_mut(), g.bias.as_ref()) {
                mb.step(cfg.optimizer, cfg.learning_rate, t, b, gb);
            }
        }
        let loss = mse_loss(&enc, &dec, bias.as_deref(), x, y)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        history.push(loss);
    }
    let last = *history.last().expect("epochs >= 1");
    if last > initial_loss {
        return Err(TrainError::Diverged {
            epoch: cfg.epochs,
            loss: last,
        });
    }
    Ok(TrainedMap {
        encoder: enc,
        decoder: dec,
        bias,
        initial_loss,
        loss_history: history,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientReport {
    pub max_relative_error: f64,
    /// Parameter block (`encoder`, `decoder`, `bias`) and entry of the worst match.
    pub worst: (String, usize, usize),
    pub tolerance: f64,
    pub passed: bool,
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-6;
pub const GRADIENT_CHECK_TOLERANCE: f64 = 1e-5;

/// Compares analytic gradients at the seeded initialization of `cfg`
/// against central differences.
pub fn gradient_check(cfg: &TrainConfig, d: &DataSet) -> Result<GradientReport, TrainError> {
    cfg.validate()?;
    let x = &d.x;
    let y = d.observations()?;
    let (n, m, r) = (x.rows(), y.rows(), cfg.rank);
    let mut init = SeededRng::new(cfg.seed).split(0);
    let enc = init_layer(&mut init, r, n);
    let dec = init_layer(&mut init, m, r);
    // A nonzero bias exercises the bias path away from the trivial point.
    let bias: Option<Vec<f64>> = cfg.affine.then(|| (0..m).map(|_| init.uniform(-0.5, 0.5)).collect());
    gradient_check_at(&enc, &dec, bias.as_deref(), x, y)
}

pub fn gradient_check_at(
    enc: &DenseMatrix,
    dec: &DenseMatrix,
    bias: Option<&[f64]>,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<GradientReport, TrainError> {
    let g = gradients(enc, dec, bias, x, y)?;
    let h = GRADIENT_CHECK_STEP;
    let floor = 1e-6 * g.loss.abs().max(1.0);
    let mut worst = (0.0, (String::new(), 0, 0));
    let mut record = |name: &str, i: usize, j: usize, analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if rel > worst.0 || worst.1 .0.is_empty() {
            worst = (rel, (name.to_string(), i, j));
        }
    };
    for (name, base, grad) in [("encoder", enc, &g.encoder), ("decoder", dec, &g.decoder)] {
        for jj in 0..base.cols() {
            for ii in 0..base.rows() {
                let mut p = base.clone();
                p[(ii, jj)] += h;
                let (ep, dp) = if name == "encoder" { (&p, dec) } else { (enc, &p) };
                let up = mse_loss(ep, dp, bias, x, y)?;
                p[(ii, jj)] -= 2.0 * h;
                let (ep, dp) = if name == "encoder" { (&p, dec) } else { (enc, &p) };
                let down = mse_loss(ep, dp, bias, x, y)?;
                record(name, ii, jj, grad[(ii, jj)], (up - down) / (2.0 * h));
            }
        }
    }
    if let (Some(b), Some(gb)) = (bias, g.bias.as_ref()) {
        for i in 0..b.len() {
            let mut p = b.to_vec();
            p[i] += h;
            let up = mse_loss(enc, dec, Some(&p), x, y)?;
            p[i] -= 2.0 * h;
            let down = mse_loss(enc, dec, Some(&p), x, y)?;
            record("bias", i, 0, gb[i], (up - down) / (2.0 * h));
        }
    }
    Ok(GradientReport {
        max_relative_error: worst.0,
        worst: worst.1,
        tolerance: GRADIENT_CHECK_TOLERANCE,
        passed: worst.0 <= GRADIENT_CHECK_TOLERANCE,
    })
}

/// Centered rank-`r` PCA reconstruction `x ↦ U_r U_rᵀ (x − μ) + μ`.
pub fn pca_baseline(d: &DataSet, r: usize) -> Result<OptimalMap, TrainError> {
    let j = d.sample_count();
    if j < 2 {
        return Err(EmpiricalError::InsufficientSamples { needed: 2, got: j }.into());
    }
    if r == 0 {
        return Err(TrainError::Config("rank must be at least 1".into()));
    }
    let mu = d.x.column_mean();
    let mut c = d.x.clone();
    c.add_to_columns(&mu.iter().map(|v| -v).collect::<Vec<_>>());
    let f = svd(&c, 0.0)?;
    let used = r.min(f.effective_rank);
    let a = f.u_leading(used).gram_outer();
    let amu = a.mul_vec(&mu)?;
    let bias: Vec<f64> = mu.iter().zip(amu).map(|(m, v)| m - v).collect();
    let mut pred = a.matmul(&d.x)?;
    pred.add_to_columns(&bias);
    let risk = pred.sub(&d.x)?.frobenius_norm_sq() / j as f64;
    Ok(OptimalMap {
        a,
        bias: Some(bias),
        rank: r,
        kind: ProblemKind::new(Task::Autoencode, Form::Affine),
        risk,
        trace: ConstructionTrace {
            branch: Branch::Projector,
            requested_rank: r,
            used_rank: used,
            available_rank: f.effective_rank,
            clamped: r > f.effective_rank,
            tie: f.has_tie_at(r, crate::linalg::TIE_TOLERANCE),
            signal_factor_rank: f.effective_rank,
            observation_factor: None,
        },
    })
}

/// Negative-side slope of the leaky rectifier, `φ(z) = max(z, a z)`.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// `y = D φ(E x + c) + b` with a leaky rectifier `φ`.
#[derive(Clone, Debug)]
pub struct NonlinearMap {
    pub encoder: DenseMatrix,
    pub hidden_bias: Vec<f64>,
    pub decoder: DenseMatrix,
    pub bias: Vec<f64>,
    pub slope: f64,
    pub loss_history: Vec<f64>,
}

impl NonlinearMap {
    fn hidden(&self, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
        let mut z = self.encoder.matmul(x)?;
        z.add_to_columns(&self.hidden_bias);
        let mut h = z.clone();
        h.as_mut_slice().iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= self.slope
            }
        });
        Ok((z, h))
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let (_, h) = self.hidden(x)?;
        let mut y = self.decoder.matmul(&h)?;
        y.add_to_columns(&self.bias);
        Ok(y)
    }

    pub fn loss(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64, LinalgError> {
        Ok(self.apply(x)?.sub(y)?.frobenius_norm_sq() / x.cols() as f64)
    }
}

/// Trains the one-hidden-layer leaky-rectifier network with width
/// `cfg.rank`. Results depend on the initialization; the network is a
/// comparator only.
pub fn train_nonlinear(d: &DataSet, cfg: &TrainConfig, slope: f64) -> Result<NonlinearMap, TrainError> {
    cfg.validate()?;
    let x = &d.x;
    let y = d.observations()?;
    let (n, m, r) = (x.rows(), y.rows(), cfg.rank);
    let root = SeededRng::new(cfg.seed);
    let mut init = root.split(0);
    let mut shuffle = root.split(1);
    let mut net = NonlinearMap {
        encoder: init_layer(&mut init, r, n),
        hidden_bias: vec![0.0; r],
        decoder: init_layer(&mut init, m, r),
        bias: vec![0.0; m],
        slope,
        loss_history: Vec::with_capacity(cfg.epochs),
    };
    let mut opt = [
        Moments::new(r * n),
        Moments::new(r),
        Moments::new(m * r),
        Moments::new(m),
    ];
    let mut t = 0;
    for epoch in 1..=cfg.epochs {
        for idx in batches(x.cols(), cfg.batch_size, &mut shuffle) {
            let xb = x.select_columns(&idx);
            let yb = y.select_columns(&idx);
            let c = 2.0 / idx.len() as f64;
            let (z, h) = net.hidden(&xb)?;
            let mut resid = net.decoder.matmul(&h)?;
            resid.add_to_columns(&net.bias);
            resid.axpy(-1.0, &yb)?;
            let mut gd = resid.matmul_t(&h)?;
            gd.scale_mut(c);
            let gb: Vec<f64> = (0..m).map(|i| c * resid.row(i).iter().sum::<f64>()).collect();
            let mut back = net.decoder.t_matmul(&resid)?;
            for (bv, zv) in back.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if *zv < 0.0 {
                    *bv *= slope;
                }
            }
            let mut ge = back.matmul_t(&xb)?;
            ge.scale_mut(c);
            let gc: Vec<f64> = (0..r).map(|i| c * back.row(i).iter().sum::<f64>()).collect();
            t += 1;
            let lr = cfg.learning_rate;
            opt[0].step(cfg.optimizer, lr, t, net.encoder.as_mut_slice(), ge.as_slice());
            opt[1].step(cfg.optimizer, lr, t, &mut net.hidden_bias, &gc);
            opt[2].step(cfg.optimizer, lr, t, net.decoder.as_mut_slice(), gd.as_slice());
            opt[3].step(cfg.optimizer, lr, t, &mut net.bias, &gb);
        }
        let loss = net.loss(x, y)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        net.loss_history.push(loss);
    }
    Ok(net)
}

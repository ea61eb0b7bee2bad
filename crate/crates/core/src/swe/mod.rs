//! Linearized-momentum shallow-water simulator on a closed rectangular
//! basin, its initial-condition families, and dataset extraction for the
//! inverse problem `x_T = F(x_0) + ε`.
//!
//! Fields share one `nx x ny` array shape, indexed `(i, j)` with `i` along
//! x and `j` along y. Velocities are read at cell faces: `u[i, j]` is the
//! flow across the east face of cell `(i, j)` and `v[i, j]` across its
//! north face, so the last `u` row and last `v` column sit on the walls and
//! stay zero.

mod initial;

pub use initial::{Family, InitialConditionSpec};

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::add_white_noise_with;
use crate::empirical::DataSet;
use crate::linalg::DenseMatrix;
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum SweError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("time step {dt} s exceeds the CFL bound {bound} s")]
    Cfl { dt: f64, bound: f64 },
    #[error("simulation became non-finite at step {step}")]
    Instability { step: usize },
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweParams {
    /// Gravitational acceleration, m/s².
    pub g: f64,
    /// Mean depth, m.
    pub depth: f64,
    /// Reference Coriolis parameter, 1/s.
    pub f0: f64,
    /// Coriolis gradient, 1/(m s).
    pub beta: f64,
    /// Domain side length along each axis, m.
    pub domain_len: f64,
    pub nx: usize,
    pub ny: usize,
    pub cfl_fraction: f64,
    /// Explicit time step; must not exceed the CFL bound.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl SweParams {
    /// 64 x 64 grid over 10⁶ m with the reference physical constants.
    pub fn paper() -> Self {
        SweParams {
            g: 9.8,
            depth: 100.0,
            f0: 1e-4,
            beta: 2e-11,
            domain_len: 1e6,
            nx: 64,
            ny: 64,
            cfl_fraction: 0.1,
            dt: None,
        }
    }

    /// The reference constants on a 16 x 16 grid.
    pub fn desk() -> Self {
        SweParams {
            nx: 16,
            ny: 16,
            ..Self::paper()
        }
    }

    pub fn dx(&self) -> f64 {
        self.domain_len / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain_len / (self.ny - 1) as f64
    }

    /// Largest stable step, `min(Δx, Δy) / √(g H)`.
    pub fn cfl_bound(&self) -> f64 {
        self.dx().min(self.dy()) / (self.g * self.depth).sqrt()
    }

    pub fn validate(&self) -> Result<(), SweError> {
        let positive = [("g", self.g), ("depth", self.depth), ("domain_len", self.domain_len)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SweError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.f0 >= 0.0 && self.beta >= 0.0) {
            return Err(SweError::Params("Coriolis parameters must be nonnegative".into()));
        }
        if self.nx < 3 || self.ny < 3 {
            return Err(SweError::Params(format!("grid {}x{} is too small", self.nx, self.ny)));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(SweError::Params(format!("cfl_fraction {} must lie in (0, 1]", self.cfl_fraction)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || dt > self.cfl_bound() {
                return Err(SweError::Cfl {
                    dt,
                    bound: self.cfl_bound(),
                });
            }
        }
        Ok(())
    }

    /// Cell-center coordinate along y, measured from the domain center.
    pub fn y_coord(&self, j: usize) -> f64 {
        -0.5 * self.domain_len + j as f64 * self.dy()
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        -0.5 * self.domain_len + i as f64 * self.dx()
    }
}

/// `cfl_fraction · min(Δx, Δy) / √(g H)`, or the explicit step when set.
pub fn cfl_timestep(p: &SweParams) -> f64 {
    p.dt.unwrap_or(p.cfl_fraction * p.cfl_bound())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweState {
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: Vec<f64>,
    pub time_step: usize,
}

impl SweState {
    pub fn flat(nx: usize, ny: usize) -> Self {
        SweState {
            nx,
            ny,
            u: vec![0.0; nx * ny],
            v: vec![0.0; nx * ny],
            eta: vec![0.0; nx * ny],
            time_step: 0,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.eta).all(|x| x.is_finite())
    }

    /// `Σ η Δx Δy`
    pub fn volume(&self, p: &SweParams) -> f64 {
        self.eta.iter().sum::<f64>() * p.dx() * p.dy()
    }

    /// `[u; v; η]`, each flattened with `(i, j) ↦ i ny + j`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.u.len());
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.eta);
        out
    }
}

/// Row ranges of each variable inside a vectorized state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    pub u: Range<usize>,
    pub v: Range<usize>,
    pub eta: Range<usize>,
}

impl VariableLayout {
    pub fn for_grid(nx: usize, ny: usize) -> Self {
        let c = nx * ny;
        VariableLayout {
            u: 0..c,
            v: c..2 * c,
            eta: 2 * c..3 * c,
        }
    }
}

/// Validated parameters with the derived step, spacings and Coriolis profile.
#[derive(Clone, Debug)]
pub struct SweModel {
    pub params: SweParams,
    pub dt: f64,
    dx: f64,
    dy: f64,
    /// `f = f0 + β y` per `j`.
    coriolis: Vec<f64>,
}

impl SweModel {
    pub fn new(params: &SweParams) -> Result<Self, SweError> {
        params.validate()?;
        let coriolis = (0..params.ny).map(|j| params.f0 + params.beta * params.y_coord(j)).collect();
        Ok(SweModel {
            dt: cfl_timestep(params),
            dx: params.dx(),
            dy: params.dy(),
            coriolis,
            params: params.clone(),
        })
    }

    /// One step:
    /// 1. provisional `u`, `v` from the pressure gradient, forward in time
    ///    and forward in space;
    /// 2. Coriolis coupling with `α = f Δt`, `β_c = α² / 4`;
    /// 3. walls pin the normal velocity to zero;
    /// 4. upwind face depths `η + H` chosen by the sign of the new velocity;
    /// 5. `η` from the flux divergence of the continuity equation.
    pub fn step(&self, s: &SweState) -> SweState {
        let (nx, ny) = (s.nx, s.ny);
        let (dt, dx, dy, g, h) = (self.dt, self.dx, self.dy, self.params.g, self.params.depth);
        let id = |i: usize, j: usize| i * ny + j;
        let mut u = vec![0.0; nx * ny];
        let mut v = vec![0.0; nx * ny];
        for i in 0..nx - 1 {
            for j in 0..ny {
                u[id(i, j)] = s.u[id(i, j)] - g * dt / dx * (s.eta[id(i + 1, j)] - s.eta[id(i, j)]);
            }
        }
        for i in 0..nx {
            for j in 0..ny - 1 {
                v[id(i, j)] = s.v[id(i, j)] - g * dt / dy * (s.eta[id(i, j + 1)] - s.eta[id(i, j)]);
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let alpha = dt * self.coriolis[j];
                if alpha == 0.0 {
                    continue;
                }
                let bc = alpha * alpha / 4.0;
                let k = id(i, j);
                let (up, vp) = (u[k], v[k]);
                u[k] = (up - bc * s.u[k] + alpha * s.v[k]) / (1.0 + bc);
                v[k] = (vp - bc * s.v[k] - alpha * s.u[k]) / (1.0 + bc);
            }
        }
        for j in 0..ny {
            u[id(nx - 1, j)] = 0.0;
        }
        for i in 0..nx {
            v[id(i, ny - 1)] = 0.0;
        }
        // Upwind depth on each interior face.
        let face_x = |i: usize, j: usize| {
            if u[id(i, j)] > 0.0 {
                s.eta[id(i, j)] + h
            } else {
                s.eta[id(i + 1, j)] + h
            }
        };
        let face_y = |i: usize, j: usize| {
            if v[id(i, j)] > 0.0 {
                s.eta[id(i, j)] + h
            } else {
                s.eta[id(i, j + 1)] + h
            }
        };
        let mut eta = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let east = if i + 1 < nx { u[id(i, j)] * face_x(i, j) } else { 0.0 };
                let west = if i > 0 { u[id(i - 1, j)] * face_x(i - 1, j) } else { 0.0 };
                let north = if j + 1 < ny { v[id(i, j)] * face_y(i, j) } else { 0.0 };
                let south = if j > 0 { v[id(i, j - 1)] * face_y(i, j - 1) } else { 0.0 };
                eta[id(i, j)] = s.eta[id(i, j)] - dt * ((east - west) / dx + (north - south) / dy);
            }
        }
        SweState {
            nx,
            ny,
            u,
            v,
            eta,
            time_step: s.time_step + 1,
        }
    }

    /// Runs from `initial` and returns the states at `extract_steps`
    /// (ascending, step 0 being `initial` itself).
    pub fn run(&self, initial: SweState, extract_steps: &[usize]) -> Result<Vec<SweState>, SweError> {
        if extract_steps.windows(2).any(|w| w[0] > w[1]) {
            return Err(SweError::Request("extract steps must be sorted".into()));
        }
        let mut out = Vec::with_capacity(extract_steps.len());
        let mut state = initial;
        let mut next = 0;
        let last = extract_steps.last().copied().unwrap_or(0);
        loop {
            while next < extract_steps.len() && extract_steps[next] == state.time_step {
                out.push(state.clone());
                next += 1;
            }
            if state.time_step >= last {
                break;
            }
            state = self.step(&state);
            if !state.is_finite() {
                return Err(SweError::Instability { step: state.time_step });
            }
        }
        Ok(out)
    }
}

pub fn swe_step(s: &SweState, p: &SweParams) -> Result<SweState, SweError> {
    Ok(SweModel::new(p)?.step(s))
}

pub fn simulate(ic: &InitialConditionSpec, p: &SweParams, extract_steps: &[usize]) -> Result<Vec<SweState>, SweError> {
    let model = SweModel::new(p)?;
    model.run(ic.initial_state(p), extract_steps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweDatasetSpec {
    pub count_per_family: usize,
    pub families: Vec<Family>,
    pub params: SweParams,
    pub noise_std: f64,
    pub seed: u64,
    /// Step whose state forms the observation.
    pub observation_step: usize,
}

#[derive(Clone, Debug)]
pub struct SweDataset {
    /// `x`: initial states, `y`: noisy observed states; one column per instance.
    pub data: DataSet,
    pub layout: VariableLayout,
    /// Family of each column.
    pub families: Vec<Family>,
}

/// Simulates `count_per_family` random instances of each family.
pub fn build_swe_dataset(spec: &SweDatasetSpec) -> Result<SweDataset, SweError> {
    if spec.families.is_empty() || spec.count_per_family == 0 {
        return Err(SweError::Request("need at least one family and one instance".into()));
    }
    let model = SweModel::new(&spec.params)?;
    let root = SeededRng::new(spec.seed);
    let mut ic_rng = root.split(0);
    let mut noise_rng = root.split(1);
    let (nx, ny) = (spec.params.nx, spec.params.ny);
    let n = 3 * nx * ny;
    let total = spec.count_per_family * spec.families.len();
    let mut x = DenseMatrix::zeros(n, total);
    let mut y = DenseMatrix::zeros(n, total);
    let mut fams = Vec::with_capacity(total);
    let mut col = 0;
    for &family in &spec.families {
        for _ in 0..spec.count_per_family {
            let ic = InitialConditionSpec::sample(family, &spec.params, &mut ic_rng);
            let snaps = model.run(ic.initial_state(&spec.params), &[0, spec.observation_step])?;
            x.col_mut(col).copy_from_slice(&snaps[0].to_vector());
            y.col_mut(col).copy_from_slice(&snaps[1].to_vector());
            fams.push(family);
            col += 1;
        }
    }
    let y = add_white_noise_with(&y, spec.noise_std, &mut noise_rng).map_err(|e| SweError::Request(e.to_string()))?;
    Ok(SweDataset {
        data: DataSet::paired(x, y).expect("matching sample counts"),
        layout: VariableLayout::for_grid(nx, ny),
        families: fams,
    })
}

use serde::{Deserialize, Serialize};

use super::{SweParams, SweState};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianBumpEta,
    GaussianDipoleEta,
    VelocityJet,
    MixedUvEta,
    RingWave,
    StepWave,
}

impl Family {
    pub const IN_DISTRIBUTION: [Family; 4] = [
        Family::GaussianBumpEta,
        Family::GaussianDipoleEta,
        Family::VelocityJet,
        Family::MixedUvEta,
    ];
    pub const OUT_OF_DISTRIBUTION: [Family; 2] = [Family::RingWave, Family::StepWave];

    pub fn is_in_distribution(self) -> bool {
        Self::IN_DISTRIBUTION.contains(&self)
    }

    /// Families whose initial velocity is identically zero.
    pub fn is_eta_only(self) -> bool {
        !matches!(self, Family::VelocityJet | Family::MixedUvEta)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianBumpEta => "gaussian-bump-eta",
            Family::GaussianDipoleEta => "gaussian-dipole-eta",
            Family::VelocityJet => "velocity-jet",
            Family::MixedUvEta => "mixed-uv-eta",
            Family::RingWave => "ring-wave",
            Family::StepWave => "step-wave",
        }
    }
}

/// One initial condition. Lengths are fractions of the domain side and
/// `center` is measured from the domain center.
///
/// | family | amplitude | width | extent | angle |
/// |---|---|---|---|---|
/// | gaussian-bump-eta | peak η (m) | Gaussian σ | unused | unused |
/// | gaussian-dipole-eta | peak η (m) | Gaussian σ | half separation | axis |
/// | velocity-jet | peak speed (m/s) | jet half-width | unused | unused |
/// | mixed-uv-eta | peak η (m) | Gaussian σ | vortex speed (m/s) | unused |
/// | ring-wave | peak η (m) | ring thickness | ring radius | unused |
/// | step-wave | step height (m) | tanh width | unused | unused |
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionSpec {
    pub family: Family,
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: f64,
    #[serde(default)]
    pub extent: f64,
    #[serde(default)]
    pub angle: f64,
}

impl InitialConditionSpec {
    /// Centered bump of the given height and relative width.
    pub fn bump(amplitude: f64, width: f64) -> Self {
        InitialConditionSpec {
            family: Family::GaussianBumpEta,
            amplitude,
            center: [0.0, 0.0],
            width,
            extent: 0.0,
            angle: 0.0,
        }
    }

    pub fn sample(family: Family, _p: &SweParams, rng: &mut SeededRng) -> Self {
        let center = [rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)];
        let (amplitude, width, extent, angle) = match family {
            Family::GaussianBumpEta => (rng.uniform(0.5, 2.0), rng.uniform(0.05, 0.15), 0.0, 0.0),
            Family::GaussianDipoleEta => (
                rng.uniform(0.5, 2.0),
                rng.uniform(0.05, 0.1),
                rng.uniform(0.08, 0.15),
                rng.uniform(0.0, std::f64::consts::PI),
            ),
            Family::VelocityJet => (rng.uniform(0.05, 0.3) * sign(rng), rng.uniform(0.05, 0.15), 0.0, 0.0),
            Family::MixedUvEta => (
                rng.uniform(0.5, 2.0),
                rng.uniform(0.05, 0.15),
                rng.uniform(0.05, 0.3) * sign(rng),
                0.0,
            ),
            Family::RingWave => (rng.uniform(0.5, 2.0), rng.uniform(0.02, 0.05), rng.uniform(0.15, 0.3), 0.0),
            Family::StepWave => (rng.uniform(0.5, 2.0), rng.uniform(0.02, 0.08), 0.0, 0.0),
        };
        InitialConditionSpec {
            family,
            amplitude,
            center,
            width,
            extent,
            angle,
        }
    }

    pub fn from_seed(family: Family, p: &SweParams, seed: u64) -> Self {
        Self::sample(family, p, &mut SeededRng::new(seed))
    }

    /// Fields on the grid; wall-normal velocities are zero.
    pub fn initial_state(&self, p: &SweParams) -> SweState {
        let (nx, ny) = (p.nx, p.ny);
        let l = p.domain_len;
        let mut s = SweState::flat(nx, ny);
        let (cx, cy) = (self.center[0] * l, self.center[1] * l);
        let w = self.width * l;
        let a = self.amplitude;
        let gauss = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * w * w)).exp();
        for i in 0..nx {
            for j in 0..ny {
                let (x, y) = (p.x_coord(i) - cx, p.y_coord(j) - cy);
                let k = s.idx(i, j);
                match self.family {
                    Family::GaussianBumpEta => s.eta[k] = a * gauss(x, y),
                    Family::GaussianDipoleEta => {
                        let (ox, oy) = (self.extent * l * self.angle.cos(), self.extent * l * self.angle.sin());
                        s.eta[k] = a * (gauss(x - ox, y - oy) - gauss(x + ox, y + oy));
                    }
                    Family::VelocityJet => s.u[k] = a * (-y * y / (2.0 * w * w)).exp(),
                    Family::MixedUvEta => {
                        let g = gauss(x, y);
                        s.eta[k] = a * g;
                        s.u[k] = -self.extent * (y / w) * g;
                        s.v[k] = self.extent * (x / w) * g;
                    }
                    Family::RingWave => {
                        let d = (x * x + y * y).sqrt() - self.extent * l;
                        s.eta[k] = a * (-d * d / (2.0 * w * w)).exp();
                    }
                    Family::StepWave => s.eta[k] = 0.5 * a * (1.0 + (x / w).tanh()),
                }
            }
        }
        for j in 0..ny {
            let k = s.idx(nx - 1, j);
            s.u[k] = 0.0;
        }
        for i in 0..nx {
            let k = s.idx(i, ny - 1);
            s.v[k] = 0.0;
        }
        s
    }
}

fn sign(rng: &mut SeededRng) -> f64 {
    if rng.below(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

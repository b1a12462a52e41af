//! Seeded test corpus of scalar profiles.
//!
//! Every entry is a function of the normal coordinate `x_n` only. The shipped
//! copy in `data/corpus.json` equals `generate(DEFAULT_SEED)` bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Half, ScalarField};

pub const DEFAULT_SEED: u64 = 20_240_611;
pub const CORPUS_SIZE: usize = 20;

const SHIPPED: &str = include_str!("../data/corpus.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    /// `max(ln|x - center|, floor)`.
    ClippedLog { center: f64, floor: f64 },
    /// `Σ_j amp_j cos(2^j freq x + phase_j)`.
    Lacunary { freq: f64, amps: Vec<f64>, phases: Vec<f64> },
    /// Gaussian bump restricted to the half containing `center`.
    HalfBump { center: f64, width: f64, amplitude: f64 },
    /// `amplitude tanh((x - center) / width)`.
    Step { center: f64, width: f64, amplitude: f64 },
    /// `sign(x) min(1, |x| / scale)`.
    Ramp { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    #[serde(flatten)]
    pub profile: Profile,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::ClippedLog { center, floor } => (x - center).abs().ln().max(*floor),
            Profile::Lacunary { freq, amps, phases } => amps
                .iter()
                .zip(phases)
                .enumerate()
                .map(|(j, (a, p))| a * ((1u32 << j) as f64 * freq * x + p).cos())
                .sum(),
            Profile::HalfBump { center, width, amplitude } => {
                if x * center > 0.0 {
                    amplitude * (-0.5 * ((x - center) / width).powi(2)).exp()
                } else {
                    0.0
                }
            }
            Profile::Step { center, width, amplitude } => amplitude * ((x - center) / width).tanh(),
            Profile::Ramp { scale } => x.signum() * (x.abs() / scale).min(1.0),
        }
    }

    /// The half-space carrying the support, if the profile vanishes on the other.
    pub fn support_half(&self) -> Option<Half> {
        match self {
            Profile::HalfBump { center, .. } => Some(if *center > 0.0 { Half::Upper } else { Half::Lower }),
            _ => None,
        }
    }
}

impl CorpusEntry {
    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        let n = grid.dim();
        ScalarField::from_fn(grid, |x| self.profile.eval(x[n - 1]))
    }
}

/// Deterministic corpus: 4 clipped logs, 4 lacunary series, 8 half-space
/// bumps, 3 steps and 1 ramp. All features are at least `0.2` wide.
pub fn generate(seed: u64) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(CORPUS_SIZE);
    let mut push = |id: String, profile: Profile| out.push(CorpusEntry { id, profile });
    for k in 0..4 {
        let center = if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
        let floor = rng.random_range(0.25f64..0.4).ln();
        push(format!("log{k}"), Profile::ClippedLog { center, floor });
    }
    for k in 0..4 {
        let terms = 3 + k % 2;
        let amps = (0..terms).map(|j| rng.random_range(0.5..1.0) / (j + 1) as f64).collect();
        let phases = (0..terms).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        push(format!("lac{k}"), Profile::Lacunary { freq: rng.random_range(0.8..1.2), amps, phases });
    }
    for k in 0..8 {
        let width = rng.random_range(0.2..0.4);
        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
        let center = side * (4.0 * width + rng.random_range(0.0..0.6));
        let amplitude = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        push(format!("bump{k}"), Profile::HalfBump { center, width, amplitude });
    }
    for k in 0..3 {
        let center = rng.random_range(-0.8..0.8);
        let width = rng.random_range(0.2..0.5);
        push(format!("step{k}"), Profile::Step { center, width, amplitude: rng.random_range(0.5..1.0) });
    }
    push("ramp0".into(), Profile::Ramp { scale: 1.0 });
    out
}

/// The corpus shipped with the crate.
pub fn shipped() -> Result<Vec<CorpusEntry>> {
    serde_json::from_str(SHIPPED).map_err(|e| Error::Config(format!("shipped corpus: {e}")))
}

/// Shipped corpus when `seed` is the default, freshly generated otherwise.
pub fn corpus(seed: u64) -> Result<Vec<CorpusEntry>> {
    if seed == DEFAULT_SEED {
        shipped()
    } else {
        Ok(generate(seed))
    }
}

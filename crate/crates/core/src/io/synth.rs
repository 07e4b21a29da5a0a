use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{ClassId, DomainTrials, Error, Result};

const TAG_MIXING: u64 = 1;
const TAG_LATENT: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Shifted-domain generator settings.
///
/// Trial `i` of class `k` in domain `d` is
/// `R_dom(d·θ) R_cls(k·φ) A₀ diag(√v) Z + noise·E`, where `A₀` is a random
/// orthogonal mixing, `v` a fixed decaying source-variance profile, `Z` a
/// latent drawn from `(seed, k, i)` only and `E` noise drawn per domain.
/// Class rotations act in the planes `(0,1), (2,3), …` and domain rotations
/// in `(1,2), (3,4), …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub channels: usize,
    pub samples: usize,
    pub trials_per_class: usize,
    pub classes: usize,
    pub class_rotation_deg: f64,
    pub domain_rotation_deg: f64,
    pub noise_scale: f64,
    pub domains: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            channels: 8,
            samples: 128,
            trials_per_class: 60,
            classes: 2,
            class_rotation_deg: 20.0,
            domain_rotation_deg: 30.0,
            noise_scale: 0.5,
            domains: 6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.channels < 2 || self.samples == 0 || self.trials_per_class == 0 || self.domains == 0 {
            return Err(Error::Config("channels ≥ 2 and positive samples, trials and domains are required".into()));
        }
        if !self.class_rotation_deg.is_finite() || !self.domain_rotation_deg.is_finite() {
            return Err(Error::Config("rotation angles must be finite".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config(format!("noise scale must be finite and nonnegative, got {}", self.noise_scale)));
        }
        Ok(())
    }
}

fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, tag, a, b].into_iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    // filled row by row so the draw order does not depend on storage order
    let mut m = DMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Product of Givens rotations by `angle` in the planes `(o, o+1), (o+2, o+3), …`.
fn givens(c: usize, offset: usize, angle: f64) -> DMatrix<f64> {
    let mut g = DMatrix::identity(c, c);
    let (cos, sin) = (angle.cos(), angle.sin());
    let mut i = offset;
    while i + 1 < c {
        g[(i, i)] = cos;
        g[(i, i + 1)] = -sin;
        g[(i + 1, i)] = sin;
        g[(i + 1, i + 1)] = cos;
        i += 2;
    }
    g
}

/// Generates `cfg.domains` labeled domains named `s01`, `s02`, ….
pub fn synth_domains(cfg: &SynthConfig) -> Result<Vec<DomainTrials<f64>>> {
    cfg.validate()?;
    let c = cfg.channels;
    let mixing = gaussian(&mut stream(cfg.seed, TAG_MIXING, 0, 0), c, c).qr().q();
    let profile = DVector::from_fn(c, |j, _| (-3.0 * j as f64 / (c - 1) as f64).exp().sqrt());
    let base = mixing * DMatrix::from_diagonal(&profile);
    let class_maps: Vec<DMatrix<f64>> =
        (0..cfg.classes).map(|k| givens(c, 0, (k as f64 * cfg.class_rotation_deg).to_radians()) * &base).collect();
    let n = cfg.trials_per_class * cfg.classes;
    let labels: Vec<ClassId> = (0..n).map(|i| (i % cfg.classes) as ClassId + 1).collect();
    let latents: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let k = i % cfg.classes;
            let within = i / cfg.classes;
            let z = gaussian(&mut stream(cfg.seed, TAG_LATENT, k as u64, within as u64), c, cfg.samples);
            &class_maps[k] * z
        })
        .collect();
    (0..cfg.domains)
        .map(|d| {
            let rot = givens(c, 1, (d as f64 * cfg.domain_rotation_deg).to_radians());
            let mut noise_rng = stream(cfg.seed, TAG_NOISE, d as u64, 0);
            let trials = latents
                .iter()
                .map(|s| {
                    let e = gaussian(&mut noise_rng, c, cfg.samples);
                    &rot * s + e * cfg.noise_scale
                })
                .collect();
            DomainTrials::new(trials, Some(labels.clone()), format!("s{:02}", d + 1))
        })
        .collect()
}

//! Goal spaces: embedding functions from rollout outcomes to latent
//! vectors, their split into modules (axis-aligned coordinate subsets), the
//! per-module goal samplers, and the goal-reaching cost.

pub mod cnn;

use std::path::Path;

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Dataset, RolloutResult};
pub use cnn::{CnnEncoder, EncoderError};

/// Number of uniform feature samples used to estimate the mixed encoder's goal range.
pub const MIXED_CALIBRATION_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum GoalSpaceError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("kl_2d_planes needs an even number of latent dims (n_d = {0})")]
    OddDims(usize),
    #[error("kl_2d_planes needs a per-dimension KL vector")]
    MissingKl,
    #[error("engineered_pair needs n_d = 4 (got {0})")]
    NotFourDims(usize),
    #[error("parity file: {0}")]
    Parity(String),
}

/// Embedding `R(o)` of one outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Coordinate selection `P_k`.
    pub fn project(&self, dims: &[usize]) -> Vec<f64> {
        dims.iter().map(|d| self.0[*d]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Engineered,
    Mixed,
    Cnn,
}

/// Ball and distractor positions, as the simulator reports them.
pub fn encode_engineered(result: &RolloutResult) -> LatentVector {
    LatentVector(result.true_features.to_vec())
}

/// Orthogonal 4×4 mixing of the engineered features: an entangled
/// representation that preserves distances.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedEncoder {
    m: Matrix4<f64>,
}

impl MixedEncoder {
    pub fn new(m: Matrix4<f64>) -> Result<Self, EncoderError> {
        let err = (m.transpose() * m - Matrix4::identity()).abs().max();
        if !err.is_finite() || err > 1e-6 {
            return Err(EncoderError::NotOrthogonal(err));
        }
        Ok(Self { m })
    }

    /// Orthogonal factor of a seeded Gaussian matrix, with signs fixed so the
    /// diagonal of R is positive (Haar-distributed).
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..4 {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Self::new(q).expect("QR factor is orthogonal")
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn apply(&self, features: &[f64; 4]) -> [f64; 4] {
        let v = self.m * nalgebra::Vector4::from_column_slice(features);
        [v[0], v[1], v[2], v[3]]
    }

    pub fn encode(&self, result: &RolloutResult) -> LatentVector {
        LatentVector(self.apply(&result.true_features).to_vec())
    }

    /// Per-dim `(min, max)` of mixed embeddings of uniform `[-1, 1]⁴` features.
    pub fn calibration_range(&self, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lo = vec![f64::INFINITY; 4];
        let mut hi = vec![f64::NEG_INFINITY; 4];
        for _ in 0..samples {
            let f: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            for (d, v) in self.apply(&f).iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        (lo, hi)
    }
}

pub fn encode_mixed(result: &RolloutResult, enc: &MixedEncoder) -> LatentVector {
    enc.encode(result)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Engineered,
    Mixed(MixedEncoder),
    Cnn(Box<CnnEncoder>),
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Engineered => EncoderKind::Engineered,
            Encoder::Mixed(_) => EncoderKind::Mixed,
            Encoder::Cnn(_) => EncoderKind::Cnn,
        }
    }

    pub fn n_d(&self) -> usize {
        match self {
            Encoder::Engineered | Encoder::Mixed(_) => 4,
            Encoder::Cnn(c) => c.n_d(),
        }
    }

    pub fn kl_per_dim(&self) -> Option<&[f64]> {
        match self {
            Encoder::Cnn(c) => Some(c.kl_per_dim()),
            _ => None,
        }
    }

    /// Whether encoding needs the rendered observation.
    pub fn needs_image(&self) -> bool {
        matches!(self, Encoder::Cnn(_))
    }

    pub fn encode(&self, result: &RolloutResult) -> LatentVector {
        match self {
            Encoder::Engineered => encode_engineered(result),
            Encoder::Mixed(m) => m.encode(result),
            Encoder::Cnn(c) => LatentVector(c.forward(&result.observation)),
        }
    }
}

pub fn load_encoder(path: &Path) -> Result<Encoder, EncoderError> {
    Ok(Encoder::Cnn(Box::new(CnnEncoder::load(path)?)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleScheme {
    /// One module per latent dimension.
    CanonicalAxes,
    /// Dimensions sorted by increasing KL and paired consecutively.
    Kl2dPlanes,
    /// `{0, 1}` and `{2, 3}`: ball and distractor for engineered features.
    EngineeredPair,
    /// A single module over every dimension (plain random goal exploration).
    Single,
}

/// Groups latent dims into modules according to `scheme`.
pub fn group_dims(n_d: usize, kl: Option<&[f64]>, scheme: ModuleScheme) -> Result<Vec<Vec<usize>>, GoalSpaceError> {
    match scheme {
        ModuleScheme::CanonicalAxes => Ok((0..n_d).map(|d| vec![d]).collect()),
        ModuleScheme::Single => Ok(vec![(0..n_d).collect()]),
        ModuleScheme::EngineeredPair => {
            if n_d != 4 {
                return Err(GoalSpaceError::NotFourDims(n_d));
            }
            Ok(vec![vec![0, 1], vec![2, 3]])
        }
        ModuleScheme::Kl2dPlanes => {
            let kl = kl.ok_or(GoalSpaceError::MissingKl)?;
            if !n_d.is_multiple_of(2) {
                return Err(GoalSpaceError::OddDims(n_d));
            }
            if kl.len() != n_d {
                return Err(GoalSpaceError::Encoder(EncoderError::ShapeMismatch(format!(
                    "kl vector has {} entries, n_d = {n_d}",
                    kl.len()
                ))));
            }
            let mut order: Vec<usize> = (0..n_d).collect();
            order.sort_by(|a, b| kl[*a].total_cmp(&kl[*b]));
            Ok(order.chunks(2).map(|c| c.to_vec()).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSampler {
    GaussianPrior,
    UniformRange { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalModule {
    pub index: usize,
    pub dims: Vec<usize>,
    pub sampler: GoalSampler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub module_index: usize,
    pub tau: Vec<f64>,
}

impl GoalModule {
    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Goal {
        let tau = match &self.sampler {
            GoalSampler::GaussianPrior => self.dims.iter().map(|_| StandardNormal.sample(rng)).collect(),
            GoalSampler::UniformRange { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| if l < h { rng.random_range(*l..=*h) } else { *l })
                .collect(),
        };
        Goal { module_index: self.index, tau }
    }

    pub fn project(&self, embedding: &LatentVector) -> Vec<f64> {
        embedding.project(&self.dims)
    }

    /// `‖P_k(embedding) − τ‖`.
    pub fn cost(&self, goal: &Goal, embedding: &LatentVector) -> f64 {
        debug_assert_eq!(goal.module_index, self.index);
        distance(&self.project(embedding), &goal.tau)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// An encoder together with its modules.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpace {
    pub encoder: Encoder,
    pub scheme: ModuleScheme,
    pub modules: Vec<GoalModule>,
}

impl GoalSpace {
    /// Builds modules for `encoder`. Goal samplers follow the encoder:
    /// engineered features are uniform on `[-1, 1]`, mixed features uniform
    /// over their calibrated range, learned latents use the unit Gaussian prior.
    pub fn new(encoder: Encoder, scheme: ModuleScheme, calibration_seed: u64) -> Result<Self, GoalSpaceError> {
        let groups = group_dims(encoder.n_d(), encoder.kl_per_dim(), scheme)?;
        let range = match &encoder {
            Encoder::Engineered => Some((vec![-1.0; 4], vec![1.0; 4])),
            Encoder::Mixed(m) => Some(m.calibration_range(MIXED_CALIBRATION_SAMPLES, calibration_seed)),
            Encoder::Cnn(_) => None,
        };
        let modules = groups
            .into_iter()
            .enumerate()
            .map(|(index, dims)| {
                let sampler = match &range {
                    Some((lo, hi)) => GoalSampler::UniformRange {
                        lo: dims.iter().map(|d| lo[*d]).collect(),
                        hi: dims.iter().map(|d| hi[*d]).collect(),
                    },
                    None => GoalSampler::GaussianPrior,
                };
                GoalModule { index, dims, sampler }
            })
            .collect();
        Ok(Self { encoder, scheme, modules })
    }
}

/// Posterior means exported alongside an encoder for cross-runtime checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityFile {
    pub records: Vec<ParityRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityRecord {
    /// Index into the dataset the encoder was trained on.
    pub index: usize,
    pub mean: Vec<f64>,
}

impl ParityFile {
    pub fn load(path: &Path) -> Result<Self, GoalSpaceError> {
        let text = std::fs::read_to_string(path).map_err(|e| GoalSpaceError::Parity(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GoalSpaceError::Parity(e.to_string()))
    }

    /// Largest absolute difference between recorded means and this encoder's forward pass.
    pub fn max_abs_error(&self, encoder: &CnnEncoder, dataset: &Dataset) -> Result<f64, GoalSpaceError> {
        let mut worst = 0.0f64;
        for r in &self.records {
            if r.index >= dataset.header.n {
                return Err(GoalSpaceError::Parity(format!("index {} outside dataset", r.index)));
            }
            if r.mean.len() != encoder.n_d() {
                return Err(GoalSpaceError::Parity(format!("record {} has {} means", r.index, r.mean.len())));
            }
            let got = encoder.forward(&dataset.image(r.index));
            for (a, b) in got.iter().zip(&r.mean) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

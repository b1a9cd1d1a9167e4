//! The exploration loop: random parameter exploration, random goal
//! exploration over a single module, and modular goal exploration with
//! learning-progress module selection.

pub mod interest;
pub mod metapolicy;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalspace::{
    load_encoder, Encoder, EncoderError, EncoderKind, GoalModule, GoalSampler, GoalSpace, GoalSpaceError,
    LatentVector, MixedEncoder, ModuleScheme,
};
use crate::sim::{ArmEnv, Context, Parameterization, DEFAULT_SIGMA_D};
pub use interest::{module_probabilities, update_interest, GoalHistory, InterestState};
pub use metapolicy::{MetaPolicy, MetaPolicyError, ModuleDatabase};

pub const DEFAULT_BOOTSTRAP: usize = 100;

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    GoalSpace(#[from] GoalSpaceError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    MetaPolicy(#[from] MetaPolicyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Log { path: PathBuf, line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Random parameterization exploration.
    #[serde(rename = "RPE")]
    Rpe,
    /// Random goal exploration over one module spanning the whole goal space.
    #[serde(rename = "RGE")]
    Rge,
    /// Modular goal exploration with interest-driven module sampling.
    #[serde(rename = "MGE")]
    Mge,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Rpe => "RPE",
            Algorithm::Rge => "RGE",
            Algorithm::Mge => "MGE",
        })
    }
}

/// Which embedding the agent sets goals in and how it is split into modules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpaceConfig {
    pub encoder: EncoderKind,
    pub scheme: ModuleScheme,
    /// Seed of the orthogonal mixing matrix (mixed encoder only).
    #[serde(default)]
    pub mixing_seed: u64,
    /// Interchange file (cnn encoder only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_path: Option<PathBuf>,
}

impl GoalSpaceConfig {
    pub fn engineered() -> Self {
        Self { encoder: EncoderKind::Engineered, scheme: ModuleScheme::EngineeredPair, mixing_seed: 0, encoder_path: None }
    }

    pub fn mixed(mixing_seed: u64) -> Self {
        Self { encoder: EncoderKind::Mixed, scheme: ModuleScheme::EngineeredPair, mixing_seed, encoder_path: None }
    }

    pub fn build(&self) -> Result<GoalSpace, ExploreError> {
        let encoder = match self.encoder {
            EncoderKind::Engineered => Encoder::Engineered,
            EncoderKind::Mixed => Encoder::Mixed(MixedEncoder::random(self.mixing_seed)),
            EncoderKind::Cnn => {
                let path = self
                    .encoder_path
                    .as_ref()
                    .ok_or_else(|| ExploreError::Config("goal_space.encoder_path is required for cnn".into()))?;
                load_encoder(path)?
            }
        };
        Ok(GoalSpace::new(encoder, self.scheme, self.mixing_seed.wrapping_add(1))?)
    }

    /// Short label such as `engineered` or `mixed-engineered_pair`.
    pub fn label(&self) -> String {
        let enc = match self.encoder {
            EncoderKind::Engineered => "engineered",
            EncoderKind::Mixed => "mixed",
            EncoderKind::Cnn => "cnn",
        };
        let scheme = match self.scheme {
            ModuleScheme::CanonicalAxes => "axes",
            ModuleScheme::Kl2dPlanes => "kl2d",
            ModuleScheme::EngineeredPair => "pair",
            ModuleScheme::Single => "single",
        };
        format!("{enc}-{scheme}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_bootstrap")]
    pub n_bootstrap: usize,
    pub n_episodes: usize,
    pub exploration_noise: f64,
    pub seed: u64,
    pub goal_space: GoalSpaceConfig,
    #[serde(default = "default_sigma_d")]
    pub sigma_d: f64,
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

fn default_sigma_d() -> f64 {
    DEFAULT_SIGMA_D
}

impl ExplorationConfig {
    pub fn new(algorithm: Algorithm, goal_space: GoalSpaceConfig, n_episodes: usize, seed: u64) -> Self {
        Self {
            algorithm,
            n_bootstrap: DEFAULT_BOOTSTRAP,
            n_episodes,
            exploration_noise: 0.1,
            seed,
            goal_space,
            sigma_d: DEFAULT_SIGMA_D,
        }
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        let bad = |s: &str| Err(ExploreError::Config(s.to_string()));
        if self.exploration_noise < 0.0 || !self.exploration_noise.is_finite() {
            return bad("exploration_noise must be finite and >= 0");
        }
        if self.sigma_d < 0.0 || !self.sigma_d.is_finite() {
            return bad("sigma_d must be finite and >= 0");
        }
        if self.algorithm != Algorithm::Rpe && self.n_bootstrap < 2 {
            return bad("n_bootstrap must be >= 2");
        }
        if self.n_episodes == 0 {
            return bad("n_episodes must be >= 1");
        }
        Ok(())
    }
}

/// Independent random streams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Context = 1,
    Parameters = 2,
    ModuleChoice = 3,
    Goal = 4,
    Noise = 5,
    Distractor = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub episode: usize,
    pub context: Context,
    pub theta: Parameterization,
    pub true_features: [f64; 4],
    pub grasped: bool,
    pub embedding: LatentVector,
    pub module: Option<usize>,
    pub goal: Option<Vec<f64>>,
    pub cost: Option<f64>,
    pub upsilon: Vec<f64>,
    pub p: Vec<f64>,
}

impl HistoryRecord {
    pub fn ball(&self) -> [f64; 2] {
        [self.true_features[0], self.true_features[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationHistory {
    pub config: ExplorationConfig,
    /// Modules goals were drawn from; empty for RPE.
    pub modules: Vec<GoalModule>,
    pub records: Vec<HistoryRecord>,
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    config: ExplorationConfig,
    modules: Vec<GoalModule>,
    streams: Vec<(String, u64)>,
}

impl ExplorationHistory {
    /// One JSON header line (config, modules, RNG streams), then one line per episode.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let streams = [
            Stream::Context,
            Stream::Parameters,
            Stream::ModuleChoice,
            Stream::Goal,
            Stream::Noise,
            Stream::Distractor,
        ]
        .iter()
        .map(|s| (format!("{s:?}"), *s as u64))
        .collect();
        let header = LogHeader { config: self.config.clone(), modules: self.modules.clone(), streams };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ExploreError> {
        let io = |source| ExploreError::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_jsonl(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ExploreError> {
        let io = |source| ExploreError::Io { path: path.to_path_buf(), source };
        let log = |line: usize, msg: String| ExploreError::Log { path: path.to_path_buf(), line, msg };
        let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
        let first = lines.next().ok_or_else(|| log(1, "empty history log".into()))?.map_err(io)?;
        let header: LogHeader = serde_json::from_str(&first).map_err(|e| log(1, e.to_string()))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let r: HistoryRecord = serde_json::from_str(&line).map_err(|e| log(i + 2, e.to_string()))?;
            if r.episode != records.len() {
                return Err(log(i + 2, format!("episode {} out of order", r.episode)));
            }
            records.push(r);
        }
        Ok(Self { config: header.config, modules: header.modules, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Merges all modules of `gs` into one module over every dimension.
pub fn single_module(gs: &GoalSpace) -> GoalModule {
    let mut per_dim: Vec<(usize, Option<(f64, f64)>)> = Vec::new();
    for m in &gs.modules {
        for (i, d) in m.dims.iter().enumerate() {
            let range = match &m.sampler {
                GoalSampler::UniformRange { lo, hi } => Some((lo[i], hi[i])),
                GoalSampler::GaussianPrior => None,
            };
            per_dim.push((*d, range));
        }
    }
    per_dim.sort_by_key(|(d, _)| *d);
    let dims = per_dim.iter().map(|(d, _)| *d).collect();
    let sampler = if per_dim.iter().all(|(_, r)| r.is_some()) {
        GoalSampler::UniformRange {
            lo: per_dim.iter().map(|(_, r)| r.unwrap().0).collect(),
            hi: per_dim.iter().map(|(_, r)| r.unwrap().1).collect(),
        }
    } else {
        GoalSampler::GaussianPrior
    };
    GoalModule { index: 0, dims, sampler }
}

/// Runs one trial.
///
/// RPE draws every parameterization uniformly. RGE and MGE spend the first
/// `n_bootstrap` episodes on random parameterizations (counted in
/// `n_episodes`), then each episode: choose a module (MGE: from the interest
/// distribution; RGE: the single module), sample a goal, retrieve and perturb
/// the nearest stored parameterization, roll out, encode, update interest
/// for the chosen module and the archives of all modules.
pub fn run_exploration(cfg: &ExplorationConfig, gs: &GoalSpace) -> Result<ExplorationHistory, ExploreError> {
    cfg.validate()?;
    let env = ArmEnv { sigma_d: cfg.sigma_d, render: gs.encoder.needs_image(), ..ArmEnv::default() };
    let modules: Vec<GoalModule> = match cfg.algorithm {
        Algorithm::Rpe => Vec::new(),
        Algorithm::Rge => vec![single_module(gs)],
        Algorithm::Mge => gs.modules.clone(),
    };
    let goal_directed = !modules.is_empty();
    let n_boot = if goal_directed { cfg.n_bootstrap } else { cfg.n_episodes };

    let mut ctx_rng = stream_rng(cfg.seed, Stream::Context);
    let mut param_rng = stream_rng(cfg.seed, Stream::Parameters);
    let mut module_rng = stream_rng(cfg.seed, Stream::ModuleChoice);
    let mut goal_rng = stream_rng(cfg.seed, Stream::Goal);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let mut distractor_rng = stream_rng(cfg.seed, Stream::Distractor);

    let mut interest = InterestState::new(modules.len());
    let mut p = interest.probabilities();
    let mut policy: Option<MetaPolicy> = None;
    let mut bootstrap = Vec::new();
    let mut records = Vec::with_capacity(cfg.n_episodes);

    for episode in 0..cfg.n_episodes {
        let ctx = Context::sample(&mut ctx_rng);
        let mut chosen = None;
        let theta = match &policy {
            Some(mp) if episode >= n_boot => {
                let k = if modules.len() == 1 {
                    0
                } else {
                    WeightedIndex::new(&p).expect("valid probabilities").sample(&mut module_rng)
                };
                let goal = modules[k].sample_goal(&mut goal_rng);
                let theta = mp.infer(&ctx, &goal.tau, k, cfg.exploration_noise, &mut noise_rng)?;
                chosen = Some((k, goal));
                theta
            }
            _ => Parameterization::random(&mut param_rng),
        };
        let result = env.rollout(&ctx, &theta, &mut distractor_rng);
        let embedding = gs.encoder.encode(&result);

        let mut cost = None;
        if let Some((k, goal)) = &chosen {
            let achieved = modules[*k].project(&embedding);
            interest.observe(*k, &goal.tau, &achieved);
            cost = Some(modules[*k].cost(goal, &embedding));
            p = interest.probabilities();
        }
        match policy.as_mut() {
            Some(mp) => mp.update(&ctx, &theta, &embedding, &modules),
            None if goal_directed => {
                bootstrap.push((ctx, theta.clone(), embedding.clone()));
                if bootstrap.len() == n_boot {
                    policy = Some(MetaPolicy::init(&bootstrap, &modules)?);
                    bootstrap.clear();
                }
            }
            None => {}
        }

        records.push(HistoryRecord {
            episode,
            context: ctx,
            theta,
            true_features: result.true_features,
            grasped: result.grasped(),
            embedding,
            module: chosen.as_ref().map(|(k, _)| *k),
            goal: chosen.map(|(_, g)| g.tau),
            cost,
            upsilon: interest.upsilon.clone(),
            p: p.clone(),
        });
    }
    Ok(ExplorationHistory { config: cfg.clone(), modules, records })
}

/// Recomputes the interest and probability trajectories from a history's
/// goals and achieved projections.
pub fn replay_interest(history: &ExplorationHistory) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut state = InterestState::new(history.modules.len());
    let mut p = state.probabilities();
    history
        .records
        .iter()
        .map(|r| {
            if let (Some(k), Some(goal)) = (r.module, &r.goal) {
                let achieved = history.modules[k].project(&r.embedding);
                state.observe(k, goal, &achieved);
                p = state.probabilities();
            }
            (state.upsilon.clone(), p.clone())
        })
        .collect()
}

//! Experiment matrix runner: algorithms × goal spaces × seeds.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   histories/<ALG>_<goal-space>_seed<S>.jsonl   one per trial
//!   report_<ALG>_<goal-space>.json               one per condition
//!   summary.csv                                  condition,episode,mean,std,n_trials
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{exploration_ratio, grasp_count, interest_series, mean_std};
use crate::imgep::{run_exploration, Algorithm, ExplorationConfig, ExplorationHistory, GoalSpaceConfig, DEFAULT_BOOTSTRAP};
use crate::sim::DEFAULT_SIGMA_D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_goal_spaces")]
    pub goal_spaces: Vec<GoalSpaceConfig>,
    pub seeds: Vec<u64>,
    pub n_episodes: usize,
    #[serde(default = "default_bootstrap")]
    pub n_bootstrap: usize,
    #[serde(default = "default_noise")]
    pub exploration_noise: f64,
    #[serde(default = "default_sigma_d")]
    pub sigma_d: f64,
}

fn default_goal_spaces() -> Vec<GoalSpaceConfig> {
    vec![GoalSpaceConfig::engineered()]
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

fn default_noise() -> f64 {
    0.1
}

fn default_sigma_d() -> f64 {
    DEFAULT_SIGMA_D
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid experiment config")?;
        if cfg.algorithms.is_empty() || cfg.goal_spaces.is_empty() || cfg.seeds.is_empty() {
            bail!("invalid experiment config: algorithms, goal_spaces and seeds must be non-empty");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| path.display().to_string())?;
        // encoder paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for gs in &mut cfg.goal_spaces {
            if let Some(p) = gs.encoder_path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// `(condition label, trial configs)` in config order.
    pub fn conditions(&self) -> Vec<(String, Vec<ExplorationConfig>)> {
        let mut out = Vec::new();
        for gs in &self.goal_spaces {
            for alg in &self.algorithms {
                let trials = self
                    .seeds
                    .iter()
                    .map(|seed| ExplorationConfig {
                        algorithm: *alg,
                        n_bootstrap: self.n_bootstrap,
                        n_episodes: self.n_episodes,
                        exploration_noise: self.exploration_noise,
                        seed: *seed,
                        goal_space: gs.clone(),
                        sigma_d: self.sigma_d,
                    })
                    .collect();
                out.push((condition_label(*alg, gs), trials));
            }
        }
        out
    }
}

pub fn condition_label(alg: Algorithm, gs: &GoalSpaceConfig) -> String {
    format!("{alg}_{}", gs.label())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub history_file: String,
    pub ratio: Vec<f64>,
    /// One series per module (empty for RPE).
    pub interest: Vec<Vec<f64>>,
    pub final_balls: Vec<[f64; 2]>,
    pub grasp_count: usize,
}

impl TrialReport {
    pub fn from_history(history: &ExplorationHistory, history_file: String) -> Self {
        Self {
            seed: history.config.seed,
            history_file,
            ratio: exploration_ratio(history),
            interest: interest_series(history),
            final_balls: history.records.iter().map(|r| r.ball()).collect(),
            grasp_count: grasp_count(history),
        }
    }

    pub fn final_ratio(&self) -> f64 {
        self.ratio.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub condition: String,
    pub algorithm: Algorithm,
    pub goal_space: GoalSpaceConfig,
    pub module_dims: Vec<Vec<usize>>,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialReport>,
    pub ratio_mean: Vec<f64>,
    pub ratio_std: Vec<f64>,
}

impl ExperimentReport {
    pub fn assemble(condition: String, config: &ExperimentConfig, histories: &[(ExplorationHistory, String)]) -> Self {
        let first = &histories[0].0;
        let trials: Vec<TrialReport> =
            histories.iter().map(|(h, f)| TrialReport::from_history(h, f.clone())).collect();
        let (ratio_mean, ratio_std) = mean_std(&trials.iter().map(|t| t.ratio.clone()).collect::<Vec<_>>());
        Self {
            condition,
            algorithm: first.config.algorithm,
            goal_space: first.config.goal_space.clone(),
            module_dims: first.modules.iter().map(|m| m.dims.clone()).collect(),
            config: config.clone(),
            trials,
            ratio_mean,
            ratio_std,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn final_ratios(&self) -> Vec<f64> {
        self.trials.iter().map(TrialReport::final_ratio).collect()
    }
}

/// Long-format CSV: one row per condition and episode.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("condition,episode,mean,std,n_trials\n");
    for r in reports {
        for (i, (m, s)) in r.ratio_mean.iter().zip(&r.ratio_std).enumerate() {
            writeln!(out, "{},{},{},{},{}", r.condition, i, m, s, r.trials.len()).unwrap();
        }
    }
    out
}

/// `episode,ratio` for one history.
pub fn ratio_csv(history: &ExplorationHistory) -> String {
    let mut out = String::from("episode,ratio\n");
    for (i, r) in exploration_ratio(history).iter().enumerate() {
        writeln!(out, "{i},{r}").unwrap();
    }
    out
}

pub fn history_file_name(cfg: &ExplorationConfig) -> String {
    format!("{}_seed{}.jsonl", condition_label(cfg.algorithm, &cfg.goal_space), cfg.seed)
}

/// Runs every trial (in parallel), writing each history log as soon as its
/// trial ends, then the per-condition reports and the summary CSV.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ExperimentReport>> {
    let hist_dir = out_dir.join("histories");
    std::fs::create_dir_all(&hist_dir).with_context(|| format!("creating {}", hist_dir.display()))?;

    let conditions = config.conditions();
    let mut goal_spaces = Vec::new();
    for gs in &config.goal_spaces {
        goal_spaces.push(gs.build().with_context(|| format!("building goal space {}", gs.label()))?);
    }
    let jobs: Vec<(usize, ExplorationConfig)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(c, (_, trials))| trials.iter().map(move |t| (c, t.clone())))
        .collect();
    let n_alg = config.algorithms.len();

    let results: Vec<(usize, ExplorationHistory, String)> = jobs
        .into_par_iter()
        .map(|(c, cfg)| {
            let gs = &goal_spaces[c / n_alg];
            let history = run_exploration(&cfg, gs)
                .with_context(|| format!("trial {} seed {}", conditions[c].0, cfg.seed))?;
            let name = history_file_name(&cfg);
            history.save(&hist_dir.join(&name))?;
            Ok((c, history, format!("histories/{name}")))
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for (c, (label, _)) in conditions.iter().enumerate() {
        let hs: Vec<(ExplorationHistory, String)> =
            results.iter().filter(|(i, _, _)| *i == c).map(|(_, h, f)| (h.clone(), f.clone())).collect();
        let report = ExperimentReport::assemble(label.clone(), config, &hs);
        report.save(&out_dir.join(format!("report_{label}.json")))?;
        reports.push(report);
    }
    let csv_path = out_dir.join("summary.csv");
    std::fs::write(&csv_path, summary_csv(&reports)).with_context(|| format!("writing {}", csv_path.display()))?;
    Ok(reports)
}

/// Rebuilds the reports of a finished run from its history logs alone.
pub fn reports_from_logs(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ExperimentReport>> {
    config
        .conditions()
        .into_iter()
        .map(|(label, trials)| {
            let hs = trials
                .iter()
                .map(|cfg| {
                    let rel = format!("histories/{}", history_file_name(cfg));
                    Ok((ExplorationHistory::load(&out_dir.join(&rel))?, rel))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExperimentReport::assemble(label, config, &hs))
        })
        .collect()
}

pub fn report_paths(out_dir: &Path, reports: &[ExperimentReport]) -> Vec<PathBuf> {
    reports.iter().map(|r| out_dir.join(format!("report_{}.json", r.condition))).collect()
}

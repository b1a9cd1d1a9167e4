//! Per-module 1-nearest-neighbour inverse models.
//!
//! Each module keeps its own archive keyed by `(context, P_k R(o))`; every
//! outcome is inserted into every module's archive with that module's
//! projection, whichever module the goal came from.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::goalspace::{GoalModule, LatentVector};
use crate::sim::{Context, Parameterization, THETA_DIM};

pub const CONTEXT_DIM: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MetaPolicyError {
    #[error("bootstrap needs at least two distinct observations (got {0})")]
    NotEnoughBootstrap(usize),
    #[error("database for module {0} is empty")]
    EmptyDatabase(usize),
    #[error("no database for module {0}")]
    UnknownModule(usize),
    #[error("query has {got} goal values, module {module} stores {expected}")]
    GoalDims { module: usize, expected: usize, got: usize },
}

/// Append-only archive for one module. Keys are stored flat:
/// `CONTEXT_DIM` context values followed by the projected embedding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModuleDatabase {
    proj_dim: usize,
    keys: Vec<f64>,
    thetas: Vec<Parameterization>,
}

impl ModuleDatabase {
    pub fn new(proj_dim: usize) -> Self {
        Self { proj_dim, keys: Vec::new(), thetas: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    fn stride(&self) -> usize {
        CONTEXT_DIM + self.proj_dim
    }

    pub fn push(&mut self, ctx: &Context, theta: &Parameterization, projection: &[f64]) {
        assert_eq!(projection.len(), self.proj_dim, "projection length");
        self.keys.extend_from_slice(&ctx.as_array());
        self.keys.extend_from_slice(projection);
        self.thetas.push(theta.clone());
    }

    /// `(context, theta, projection)` of entry `i`.
    pub fn entry(&self, i: usize) -> (&[f64], &Parameterization, &[f64]) {
        let key = &self.keys[i * self.stride()..(i + 1) * self.stride()];
        (&key[..CONTEXT_DIM], &self.thetas[i], &key[CONTEXT_DIM..])
    }

    /// Index of the entry closest to `query` (Euclidean, lowest index on ties).
    pub fn nearest(&self, query: &[f64]) -> Option<usize> {
        debug_assert_eq!(query.len(), self.stride());
        let mut best: Option<(usize, f64)> = None;
        for (i, key) in self.keys.chunks_exact(self.stride()).enumerate() {
            let d: f64 = key.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Nearest-neighbour meta-policy: one database per module.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPolicy {
    databases: Vec<ModuleDatabase>,
}

impl MetaPolicy {
    /// Seeds every module's database with every bootstrap outcome.
    pub fn init(
        bootstrap: &[(Context, Parameterization, LatentVector)],
        modules: &[GoalModule],
    ) -> Result<Self, MetaPolicyError> {
        let mut distinct: Vec<&LatentVector> = Vec::new();
        for (_, _, e) in bootstrap {
            if !distinct.contains(&e) {
                distinct.push(e);
            }
            if distinct.len() >= 2 {
                break;
            }
        }
        if distinct.len() < 2 {
            return Err(MetaPolicyError::NotEnoughBootstrap(distinct.len()));
        }
        let mut mp = Self { databases: modules.iter().map(|m| ModuleDatabase::new(m.dims.len())).collect() };
        for (c, theta, e) in bootstrap {
            mp.update(c, theta, e, modules);
        }
        Ok(mp)
    }

    /// Appends one entry per module.
    pub fn update(&mut self, ctx: &Context, theta: &Parameterization, embedding: &LatentVector, modules: &[GoalModule]) {
        for (db, m) in self.databases.iter_mut().zip(modules) {
            db.push(ctx, theta, &m.project(embedding));
        }
    }

    pub fn database(&self, k: usize) -> Option<&ModuleDatabase> {
        self.databases.get(k)
    }

    pub fn databases(&self) -> &[ModuleDatabase] {
        &self.databases
    }

    /// Stored parameterization whose `(context, outcome)` is nearest to
    /// `(ctx, tau)` in module `k`, plus Gaussian noise of std `sigma`
    /// clipped back into `[-1, 1]`.
    pub fn infer<R: Rng + ?Sized>(
        &self,
        ctx: &Context,
        tau: &[f64],
        k: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Parameterization, MetaPolicyError> {
        let db = self.databases.get(k).ok_or(MetaPolicyError::UnknownModule(k))?;
        if tau.len() != db.proj_dim {
            return Err(MetaPolicyError::GoalDims { module: k, expected: db.proj_dim, got: tau.len() });
        }
        let mut query = ctx.as_array().to_vec();
        query.extend_from_slice(tau);
        let i = db.nearest(&query).ok_or(MetaPolicyError::EmptyDatabase(k))?;
        let base = &db.thetas[i];
        if sigma <= 0.0 {
            return Ok(base.clone());
        }
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        let mut v = [0.0; THETA_DIM];
        for (out, b) in v.iter_mut().zip(base.values()) {
            *out = b + noise.sample(rng);
        }
        Ok(Parameterization::clipped(v))
    }
}

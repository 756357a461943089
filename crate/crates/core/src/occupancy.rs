//! Discretized state-action occupancy measures and their Monte Carlo
//! estimation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateKey = Vec<i32>;
pub type ActionKey = u32;

/// Uniform grid over `[lo, hi]` per dimension; values outside are clamped
/// into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretizer {
    pub bins: u32,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Discretizer {
    pub fn new(bins: u32, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if bins == 0 || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Config(
                "discretizer needs bins > 0 and lo < hi per dimension".into(),
            ));
        }
        Ok(Discretizer { bins, lo, hi })
    }

    pub fn key(&self, obs: &[f64]) -> Result<StateKey> {
        if obs.len() != self.lo.len() {
            return Err(Error::Dimension {
                expected: self.lo.len(),
                found: obs.len(),
                context: "observation".into(),
            });
        }
        Ok(obs
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| {
                let u = ((x - lo) / (hi - lo) * self.bins as f64).floor();
                u.clamp(0.0, (self.bins - 1) as f64) as i32
            })
            .collect())
    }
}

/// Normalized distribution over `(state, action)` keys.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    probs: BTreeMap<(StateKey, ActionKey), f64>,
}

impl OccupancyMeasure {
    /// Normalizes non-negative weights; duplicate keys accumulate.
    pub fn from_weights<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((StateKey, ActionKey), f64)>,
    {
        let mut probs = BTreeMap::new();
        for (k, w) in entries {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "occupancy weight {w} is not a non-negative number"
                )));
            }
            *probs.entry(k).or_insert(0.0) += w;
        }
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Err(Error::EmptySequence);
        }
        probs.retain(|_, w| *w > 0.0);
        for w in probs.values_mut() {
            *w /= total;
        }
        Ok(OccupancyMeasure { probs })
    }

    pub fn from_samples<I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (StateKey, ActionKey)>,
    {
        Self::from_weights(samples.into_iter().map(|k| (k, 1.0)))
    }

    pub fn prob(&self, state: &StateKey, action: ActionKey) -> f64 {
        self.probs
            .get(&(state.clone(), action))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(StateKey, ActionKey), &f64)> {
        self.probs.iter()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Marginal over states.
    pub fn state_marginal(&self) -> BTreeMap<StateKey, f64> {
        let mut out = BTreeMap::new();
        for ((s, _), p) in &self.probs {
            *out.entry(s.clone()).or_insert(0.0) += p;
        }
        out
    }

    /// `π(a | s)` recovered from the measure, or `None` if `s` is never visited.
    pub fn conditional(&self, state: &StateKey) -> Option<BTreeMap<ActionKey, f64>> {
        let lo = (state.clone(), ActionKey::MIN);
        let mut out = BTreeMap::new();
        let mut total = 0.0;
        for ((s, a), p) in self.probs.range(lo..) {
            if s != state {
                break;
            }
            out.insert(*a, *p);
            total += p;
        }
        if total <= 0.0 {
            return None;
        }
        for p in out.values_mut() {
            *p /= total;
        }
        Some(out)
    }
}

/// A joint policy running in an environment, seen through discretized keys.
pub trait OccupancyModel {
    type State: Clone;

    fn initial(&self, rng: &mut ChaCha8Rng) -> Self::State;
    fn act(&self, state: &Self::State, rng: &mut ChaCha8Rng) -> ActionKey;
    fn transition(
        &self,
        state: &Self::State,
        action: ActionKey,
        rng: &mut ChaCha8Rng,
    ) -> Self::State;
    fn state_key(&self, state: &Self::State) -> StateKey;
}

/// Empirical state-action visit distribution over `rollouts` episodes of
/// `horizon` steps. Rollout `r` draws from stream `r` of the seed, so results
/// do not depend on evaluation order.
pub fn estimate_occupancy<M: OccupancyModel>(
    model: &M,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<OccupancyMeasure> {
    if horizon == 0 || rollouts == 0 {
        return Err(Error::Config(
            "occupancy estimation needs horizon >= 1 and rollouts >= 1".into(),
        ));
    }
    let mut counts: BTreeMap<(StateKey, ActionKey), f64> = BTreeMap::new();
    for r in 0..rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut s = model.initial(&mut rng);
        for _ in 0..horizon {
            let a = model.act(&s, &mut rng);
            *counts.entry((model.state_key(&s), a)).or_insert(0.0) += 1.0;
            s = model.transition(&s, a, &mut rng);
        }
    }
    OccupancyMeasure::from_weights(counts)
}

//! Strategy-level feint rewards: short/long-term temporal terms, the spatial
//! divergence term, and their collective combination.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupancy::{ActionKey, OccupancyMeasure, StateKey};

/// Per-step weights for one feint window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub alpha_feint: Vec<f64>,
    pub alpha_attack: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda_short: f64,
    pub lambda_long: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Constant weights from which a [`WeightSchedule`] is expanded once the
/// window lengths are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub alpha_feint: f64,
    pub alpha_attack: f64,
    pub beta: f64,
    pub lambda_short: f64,
    pub lambda_long: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha_feint: 0.1,
            alpha_attack: 1.0,
            beta: 1.0,
            lambda_short: 0.67,
            lambda_long: 0.33,
            mu1: 0.5,
            mu2: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_feint,
            self.alpha_attack,
            self.beta,
            self.lambda_short,
            self.lambda_long,
            self.mu1,
            self.mu2,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "reward weights must be finite and non-negative".into(),
            ));
        }
        if (self.lambda_short + self.lambda_long - 1.0).abs() > 1e-9 {
            return Err(Error::Config("lambda_short + lambda_long must be 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self, window: &FeintWindow) -> WeightSchedule {
        WeightSchedule {
            alpha_feint: vec![self.alpha_feint; window.t_f + 1],
            alpha_attack: vec![self.alpha_attack; window.t_s.saturating_sub(window.t_f)],
            beta: vec![self.beta; window.long_len()],
            lambda_short: self.lambda_short,
            lambda_long: self.lambda_long,
            mu1: self.mu1,
            mu2: self.mu2,
        }
    }
}

/// Step window of one feint: starts at `t_0`, feint lasts until `t_0 + t_f`,
/// follow-up until `t_0 + t_s`, long-term horizon ends at `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeintWindow {
    pub t_0: usize,
    pub t_f: usize,
    pub t_s: usize,
    pub horizon: usize,
}

impl FeintWindow {
    pub fn long_len(&self) -> usize {
        self.horizon.saturating_sub(self.t_0 + self.t_s)
    }

    fn check(&self) -> Result<()> {
        if self.t_f > self.t_s {
            return Err(Error::WindowMismatch(format!(
                "t_f {} exceeds t_s {}",
                self.t_f, self.t_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: StateKey,
    pub actions: Vec<ActionKey>,
    pub rewards: Vec<f64>,
}

/// Contiguous steps starting at absolute step `start`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new(start: usize) -> Self {
        Trajectory {
            start,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, step: TrajectoryStep) -> Result<()> {
        if let Some(first) = self.steps.first() {
            if first.rewards.len() != step.rewards.len() {
                return Err(Error::Dimension {
                    expected: first.rewards.len(),
                    found: step.rewards.len(),
                    context: "per-agent rewards".into(),
                });
            }
        }
        self.steps.push(step);
        Ok(())
    }

    /// One-past the last covered absolute step.
    pub fn end(&self) -> usize {
        self.start + self.steps.len()
    }

    pub fn reward(&self, t: usize, agent: usize) -> Result<f64> {
        if t < self.start || t >= self.end() {
            return Err(Error::WindowMismatch(format!(
                "step {t} outside trajectory [{}, {})",
                self.start,
                self.end()
            )));
        }
        let r = &self.steps[t - self.start].rewards;
        r.get(agent).copied().ok_or(Error::UnknownAgent(agent))
    }

    fn weighted_sum(&self, from: usize, weights: &[f64], agent: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w * self.reward(from + k, agent)?;
        }
        Ok(acc)
    }
}

fn expect_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::WindowMismatch(format!(
            "{name} has {got} weights, window needs {want}"
        )));
    }
    Ok(())
}

/// Weighted reward over the feint steps `[t_0, t_0+t_f]` and the follow-up
/// steps `[t_0+t_f+1, t_0+t_s]`.
pub fn rew_short(
    traj: &Trajectory,
    window: &FeintWindow,
    w: &WeightSchedule,
    agent: usize,
) -> Result<f64> {
    window.check()?;
    let FeintWindow { t_0, t_f, t_s, .. } = *window;
    expect_len("alpha_feint", w.alpha_feint.len(), t_f + 1)?;
    expect_len("alpha_attack", w.alpha_attack.len(), t_s - t_f)?;
    Ok(traj.weighted_sum(t_0, &w.alpha_feint, agent)?
        + traj.weighted_sum(t_0 + t_f + 1, &w.alpha_attack, agent)?)
}

/// `(1/T) Σ β_t R_t` over `(t_0+t_s, T]`; the normalizer is the horizon `T`
/// itself, not the window length. An empty window contributes 0.
pub fn rew_long(
    traj: &Trajectory,
    window: &FeintWindow,
    w: &WeightSchedule,
    agent: usize,
) -> Result<f64> {
    window.check()?;
    let FeintWindow {
        t_0, t_s, horizon, ..
    } = *window;
    expect_len("beta", w.beta.len(), window.long_len())?;
    if w.beta.is_empty() {
        return Ok(0.0);
    }
    Ok(traj.weighted_sum(t_0 + t_s + 1, &w.beta, agent)? / horizon as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TemporalBreakdown {
    pub short: f64,
    pub long: f64,
    pub temporal: f64,
}

pub fn rew_temporal(
    traj: &Trajectory,
    window: &FeintWindow,
    w: &WeightSchedule,
    agent: usize,
) -> Result<TemporalBreakdown> {
    let short = rew_short(traj, window, w, agent)?;
    let long = rew_long(traj, window, w, agent)?;
    Ok(TemporalBreakdown {
        short,
        long,
        temporal: w.lambda_short * short + w.lambda_long * long,
    })
}

pub const KL_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FDivergence {
    #[default]
    Kl,
    TotalVariation,
    SquaredHellinger,
}

impl std::str::FromStr for FDivergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(FDivergence::Kl),
            "tv" | "total_variation" => Ok(FDivergence::TotalVariation),
            "hellinger" | "squared_hellinger" => Ok(FDivergence::SquaredHellinger),
            other => Err(Error::Config(format!("unknown f-divergence '{other}'"))),
        }
    }
}

impl FDivergence {
    /// `D_f(p ‖ q)` for two distributions over the same outcomes.
    ///
    /// KL smooths both sides with [`KL_SMOOTHING`] and renormalizes, so
    /// disjoint supports give a large but finite value.
    pub fn divergence(self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p.len() != q.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                found: q.len(),
                context: "f-divergence".into(),
            });
        }
        let d = match self {
            FDivergence::Kl => {
                let n = p.len() as f64;
                let z = 1.0 + n * KL_SMOOTHING;
                p.iter()
                    .zip(q)
                    .map(|(a, b)| {
                        let (a, b) = ((a + KL_SMOOTHING) / z, (b + KL_SMOOTHING) / z);
                        a * (a / b).ln()
                    })
                    .sum::<f64>()
            }
            FDivergence::TotalVariation => {
                0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
            }
            FDivergence::SquaredHellinger => {
                0.5 * p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
                    .sum::<f64>()
            }
        };
        Ok(d.max(0.0))
    }
}

/// Divergence between the conditional action distributions of two occupancy
/// measures at `state`. The state must be visited by both.
pub fn rew_spatial(
    new: &OccupancyMeasure,
    old: &OccupancyMeasure,
    state: &StateKey,
    f: FDivergence,
) -> Result<f64> {
    let p = new.conditional(state).ok_or(Error::UnsupportedState)?;
    let q = old.conditional(state).ok_or(Error::UnsupportedState)?;
    let (p, q) = align(&p, &q);
    f.divergence(&p, &q)
}

/// Lines two sparse distributions up over the union of their keys.
pub fn align(p: &BTreeMap<ActionKey, f64>, q: &BTreeMap<ActionKey, f64>) -> (Vec<f64>, Vec<f64>) {
    let keys: BTreeSet<_> = p.keys().chain(q.keys()).collect();
    keys.into_iter()
        .map(|k| {
            (
                p.get(k).copied().unwrap_or(0.0),
                q.get(k).copied().unwrap_or(0.0),
            )
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CollectiveBreakdown {
    pub short: f64,
    pub long: f64,
    pub temporal: f64,
    pub spatial_sum: f64,
    /// Trajectory states skipped because one measure never visits them.
    pub spatial_skipped: usize,
    pub collective: f64,
}

/// `μ1 · Σ_participants temporal + μ2 · Σ_states spatial` over the window.
///
/// The spatial sum walks the trajectory states from `t_0` to the horizon;
/// states unsupported by either measure are skipped and counted.
pub fn rew_collective(
    traj: &Trajectory,
    window: &FeintWindow,
    w: &WeightSchedule,
    participants: &[usize],
    new: &OccupancyMeasure,
    old: &OccupancyMeasure,
    f: FDivergence,
) -> Result<CollectiveBreakdown> {
    let mut out = CollectiveBreakdown::default();
    for &agent in participants {
        let t = rew_temporal(traj, window, w, agent)?;
        out.short += t.short;
        out.long += t.long;
        out.temporal += t.temporal;
    }
    let from = window.t_0.max(traj.start);
    let to = window.horizon.min(traj.end().saturating_sub(1));
    if w.mu2 != 0.0 {
        for t in from..=to {
            match rew_spatial(new, old, &traj.steps[t - traj.start].state, f) {
                Ok(d) => out.spatial_sum += d,
                Err(Error::UnsupportedState) => out.spatial_skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    out.collective = w.mu1 * out.temporal + w.mu2 * out.spatial_sum;
    Ok(out)
}

/// Optional multiplicative adjustment of the short/long balance, driven by
/// the sign of the change in collective reward between updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaAdapter {
    pub enabled: bool,
    pub eta: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    last: Option<f64>,
}

impl Default for LambdaAdapter {
    fn default() -> Self {
        LambdaAdapter {
            enabled: false,
            eta: 0.01,
            min: 0.1,
            max: 0.9,
            last: None,
        }
    }
}

impl LambdaAdapter {
    pub fn update(&mut self, weights: &mut RewardWeights, collective: f64) {
        if !self.enabled {
            return;
        }
        if let Some(prev) = self.last {
            let delta = collective - prev;
            let sign = if delta > 0.0 {
                1.0
            } else if delta < 0.0 {
                -1.0
            } else {
                0.0
            };
            let short = (weights.lambda_short * (1.0 + self.eta * sign)).clamp(self.min, self.max);
            weights.lambda_short = short;
            weights.lambda_long = 1.0 - short;
        }
        self.last = Some(collective);
    }
}

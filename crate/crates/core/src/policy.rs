//! Tabular softmax learners: the regular actor-critic and the feint chooser.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples an index from a distribution by inverse CDF.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Softmax over the logits of allowed entries; masked entries get 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; logits.len()];
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    pub feint_lr: f64,
    /// Smoothing factor of the feint learner's running reward baseline.
    pub feint_baseline_rate: f64,
    /// Weight of the policy-entropy bonus in the actor update.
    pub entropy: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            actor_lr: 0.05,
            critic_lr: 0.1,
            discount: 0.9,
            feint_lr: 0.1,
            feint_baseline_rate: 0.05,
            entropy: 0.0,
        }
    }
}

/// One decision of the regular policy inside an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub context: usize,
    pub mask: Vec<bool>,
    pub choice: usize,
    /// Episode step at which the decision was taken.
    pub step: usize,
}

/// Softmax actor with a tabular state-value critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub contexts: usize,
    pub choices: usize,
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
    pub updates: u64,
}

impl ActorCritic {
    pub fn new(contexts: usize, choices: usize) -> Self {
        ActorCritic {
            contexts,
            choices,
            logits: vec![0.0; contexts * choices],
            values: vec![0.0; contexts],
            updates: 0,
        }
    }

    fn row(&self, context: usize) -> &[f64] {
        &self.logits[context * self.choices..(context + 1) * self.choices]
    }

    pub fn distribution(&self, context: usize, mask: &[bool]) -> Vec<f64> {
        masked_softmax(self.row(context), mask)
    }

    /// `∇_θ log π(choice | context)` restricted to the context's logits.
    pub fn grad_log_prob(&self, context: usize, mask: &[bool], choice: usize) -> Vec<f64> {
        let p = self.distribution(context, mask);
        (0..self.choices)
            .map(|k| {
                if !mask[k] {
                    0.0
                } else {
                    f64::from(u8::from(k == choice)) - p[k]
                }
            })
            .collect()
    }

    /// `∇_θ H(π(· | context))`: `-p_k (log p_k + H)` on allowed entries.
    pub fn entropy_grad(&self, context: usize, mask: &[bool]) -> Vec<f64> {
        let p = self.distribution(context, mask);
        let h: f64 = -p
            .iter()
            .filter(|x| **x > 0.0)
            .map(|x| x * x.ln())
            .sum::<f64>();
        p.iter()
            .map(|x| if *x > 0.0 { -x * (x.ln() + h) } else { 0.0 })
            .collect()
    }

    /// One REINFORCE-with-baseline pass over an episode. `rewards[t]` is the
    /// reward received at episode step `t`; each decision is credited with the
    /// discounted return from its step onward.
    pub fn update(&mut self, decisions: &[Decision], rewards: &[f64], cfg: &LearnerConfig) {
        self.updates += 1;
        if decisions.is_empty() {
            return;
        }
        let mut returns = vec![0.0; rewards.len() + 1];
        for t in (0..rewards.len()).rev() {
            returns[t] = rewards[t] + cfg.discount * returns[t + 1];
        }
        for d in decisions {
            let g = returns[d.step.min(rewards.len())];
            let adv = g - self.values[d.context];
            let grad = self.grad_log_prob(d.context, &d.mask, d.choice);
            let ent = if cfg.entropy != 0.0 {
                self.entropy_grad(d.context, &d.mask)
            } else {
                vec![0.0; self.choices]
            };
            let base = d.context * self.choices;
            for (k, gk) in grad.iter().enumerate() {
                self.logits[base + k] += cfg.actor_lr * (adv * gk + cfg.entropy * ent[k]);
            }
            self.values[d.context] += cfg.critic_lr * (g - self.values[d.context]);
        }
    }
}

/// Softmax over whichever feint candidates are available, with one logit per
/// candidate key shared across situations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeintChooser {
    pub logits: BTreeMap<String, f64>,
    pub baseline: f64,
    pub updates: u64,
}

impl FeintChooser {
    pub fn distribution(&self, keys: &[String]) -> Vec<f64> {
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| self.logits.get(k).copied().unwrap_or(0.0))
            .collect();
        masked_softmax(&logits, &vec![true; keys.len()])
    }

    /// Policy-gradient step for the candidate `chosen` out of `keys`, driven by
    /// the real reward accumulated over that feint's window.
    pub fn update(
        &mut self,
        keys: &[String],
        chosen: usize,
        reward: f64,
        cfg: &LearnerConfig,
    ) -> Result<()> {
        if chosen >= keys.len() {
            return Err(Error::InvalidProfile(format!(
                "feint choice {chosen} out of {} candidates",
                keys.len()
            )));
        }
        let p = self.distribution(keys);
        let adv = reward - self.baseline;
        for (k, key) in keys.iter().enumerate() {
            let g = f64::from(u8::from(k == chosen)) - p[k];
            *self.logits.entry(key.clone()).or_insert(0.0) += cfg.feint_lr * adv * g;
        }
        self.baseline += cfg.feint_baseline_rate * (reward - self.baseline);
        self.updates += 1;
        Ok(())
    }
}

//! Dual-behavior composition by backward search over precomputed templates,
//! plus the feint timing classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, UnitAction};
use crate::error::{Error, Result};
use crate::templates::{reflect_actions, FeintBehavior, Provenance, TemplateSet, Variant};

/// Raw backward-search hit: `(Select_i, a_k, Select_j)` for one template.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SearchMatch {
    pub template: String,
    pub behavior_i: String,
    pub behavior_j: String,
    /// Position of `a_t` inside `behavior_i`.
    pub start_pos: usize,
    pub junction_pos_i: usize,
    pub junction_pos_j: usize,
    pub select_i: Vec<String>,
    pub junction: String,
    pub select_j: Vec<String>,
}

/// Every template with `a_t ∈ Avail_i` and `a_target ∈ Avail_j`, one pass.
///
/// Each occurrence of `a_t` in `Avail_i` yields its own match.
pub fn backward_search(a_t: &str, a_target: &str, templates: &TemplateSet) -> Vec<SearchMatch> {
    let mut out = Vec::new();
    for t in &templates.templates {
        if !t.avail_suffix.iter().any(|a| a == a_target) {
            continue;
        }
        for (p, id) in t.avail_prefix.iter().enumerate() {
            if id != a_t {
                continue;
            }
            out.push(SearchMatch {
                template: t.key(),
                behavior_i: t.behavior_i.clone(),
                behavior_j: t.behavior_j.clone(),
                start_pos: p,
                junction_pos_i: t.junction_pos_i,
                junction_pos_j: t.junction_pos_j,
                select_i: t.avail_prefix[p..].to_vec(),
                junction: t.junction.clone(),
                select_j: t.avail_suffix.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBehaviorModel {
    pub id: String,
    pub feint: FeintBehavior,
    pub junction: String,
    pub followup: Vec<UnitAction>,
    pub followup_provenance: Vec<Provenance>,
    pub t_f: usize,
    pub t_s: usize,
    pub source_behavior_id: String,
    pub target_behavior_id: String,
    pub start_pos: usize,
    pub junction_pos_i: usize,
    pub junction_pos_j: usize,
    /// Offset inside the full DBM of the first reward-sequence step.
    pub reward_offset: usize,
}

impl DualBehaviorModel {
    /// Feint followed by the follow-up, as one plan.
    pub fn actions(&self) -> impl Iterator<Item = &UnitAction> {
        self.feint.actions.iter().chain(self.followup.iter())
    }

    pub fn provenance(&self) -> impl Iterator<Item = &Provenance> {
        self.feint
            .provenance
            .iter()
            .chain(self.followup_provenance.iter())
    }
}

impl fmt::Display for DualBehaviorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: feint {} (t_f={}) -> {} via {} (t_s={})",
            self.id,
            self.source_behavior_id,
            self.t_f,
            self.target_behavior_id,
            self.junction,
            self.t_s
        )
    }
}

/// Upgrades one backward-search match into every valid dual-behavior model.
///
/// The feint is a palindrome over a prefix of `Select_i` (one model per cut),
/// so it ends exactly where `a_t` starts; the follow-up replays
/// `Select_i ++ a_k ++ Select_j` from there. Matches whose feint would touch a
/// reward sequence, or whose follow-up misses the target's reward sequence,
/// produce nothing.
pub fn upgrade_match(m: &SearchMatch, cat: &Catalog) -> Result<Vec<DualBehaviorModel>> {
    let bi = cat
        .behavior(&m.behavior_i)
        .ok_or_else(|| Error::UnknownBehavior(m.behavior_i.clone()))?;
    let bj = cat
        .behavior(&m.behavior_j)
        .ok_or_else(|| Error::UnknownBehavior(m.behavior_j.clone()))?;
    let (t, ki, kj) = (m.start_pos, m.junction_pos_i, m.junction_pos_j);
    // Select_i must stay inside the stretch-out of behavior i
    if ki > bi.stretch_end || t >= ki {
        return Ok(Vec::new());
    }
    // the whole reward sequence of behavior j must come after the junction
    if kj >= bj.stretch_end || bj.reward_end == bj.stretch_end {
        return Ok(Vec::new());
    }
    let select_i = &bi.actions[t..ki];
    let mut followup = select_i.to_vec();
    followup.push(bj.actions[kj].clone());
    followup.extend_from_slice(&bj.actions[kj + 1..]);
    let mut followup_prov: Vec<Provenance> = (t..ki)
        .map(|index| Provenance {
            behavior: bi.id.clone(),
            index,
            reflected: false,
        })
        .collect();
    followup_prov.extend((kj..bj.len()).map(|index| Provenance {
        behavior: bj.id.clone(),
        index,
        reflected: false,
    }));
    let reward_in_followup = (ki - t) + (bj.stretch_end - kj);

    let mut out = Vec::with_capacity(select_i.len());
    for cut in 1..=select_i.len() {
        let head = &select_i[..cut];
        let mut actions = head.to_vec();
        actions.extend(reflect_actions(head)?);
        let mut prov: Vec<Provenance> = (t..t + cut)
            .map(|index| Provenance {
                behavior: bi.id.clone(),
                index,
                reflected: false,
            })
            .collect();
        prov.extend((t..t + cut).rev().map(|index| Provenance {
            behavior: bi.id.clone(),
            index,
            reflected: true,
        }));
        let t_f = actions.len();
        let feint = FeintBehavior {
            actions,
            provenance: prov,
            variant: Variant::PrefixPalindrome,
            origin: m.template.clone(),
            cut_index: t + cut,
        };
        let dbm = DualBehaviorModel {
            id: format!("{}#t{}c{}", m.template, t, cut),
            junction: m.junction.clone(),
            t_f,
            t_s: t_f + followup.len(),
            source_behavior_id: bi.id.clone(),
            target_behavior_id: bj.id.clone(),
            start_pos: t,
            junction_pos_i: ki,
            junction_pos_j: kj,
            reward_offset: t_f + reward_in_followup,
            feint,
            followup: followup.clone(),
            followup_provenance: followup_prov.clone(),
        };
        debug_assert!(junction_gap(&dbm, cat) <= cat.epsilon_state);
        out.push(dbm);
    }
    Ok(out)
}

/// Distance between the feint's end state and the follow-up's start state.
pub fn junction_gap(dbm: &DualBehaviorModel, cat: &Catalog) -> f64 {
    match (dbm.feint.actions.last(), dbm.followup.first()) {
        (Some(a), Some(b)) => cat
            .distance(&a.end_state, &b.start_state)
            .unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    }
}

/// Composes every dual-behavior model that starts with `a_t` and reaches `a_target`.
pub fn compose_dbms(
    a_t: &str,
    a_target: &str,
    templates: &TemplateSet,
    cat: &Catalog,
) -> Result<Vec<DualBehaviorModel>> {
    for id in [a_t, a_target] {
        if cat.action(id).is_none() {
            return Err(Error::UnknownAction(id.to_string()));
        }
    }
    let mut out = Vec::new();
    for m in backward_search(a_t, a_target, templates) {
        out.extend(upgrade_match(&m, cat)?);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimingClass {
    TooShort,
    Proper,
    TooLong,
}

/// Classifies a feint by when its follow-up reward starts (`t_a2`) relative
/// to the end of the opponent's defense (`t_b1`) and the start of the
/// opponent's own reward (`t_b2`). Ties: `t_a2 == t_b1` is proper,
/// `t_a2 == t_b2` is too long.
pub fn classify_timing(t_a2: i64, t_b1: i64, t_b2: i64) -> Result<TimingClass> {
    if t_b1 >= t_b2 {
        return Err(Error::InvalidWindow { t_b1, t_b2 });
    }
    Ok(if t_a2 < t_b1 {
        TimingClass::TooShort
    } else if t_a2 < t_b2 {
        TimingClass::Proper
    } else {
        TimingClass::TooLong
    })
}

//! Palindrome-directed feint generation and template precomputation.
//!
//! Three ways to build a feint from attack behaviors:
//! - a splice of two behaviors at a pair of similar states,
//! - a stretch-out prefix followed by its own reflection,
//! - a retract suffix preceded by its reflection.
//!
//! [`precompute_templates`] enumerates junction tuples `(a_k, Avail_i, Avail_j)`
//! over every ordered behavior pair once, before any game is played.

use serde::{Deserialize, Serialize};

use crate::catalog::{Behavior, Catalog, SequencePart, UnitAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    SpliceSimilar,
    PrefixPalindrome,
    SuffixPalindrome,
}

/// Where an action of a generated sequence came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub behavior: String,
    pub index: usize,
    pub reflected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeintBehavior {
    pub actions: Vec<UnitAction>,
    pub provenance: Vec<Provenance>,
    pub variant: Variant,
    pub origin: String,
    pub cut_index: usize,
}

impl FeintBehavior {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Trajectory `s_0 .. s_n`: every action's start state plus the final end state.
    pub fn trajectory(&self) -> Vec<&crate::catalog::PhysicalState> {
        let mut out: Vec<_> = self.actions.iter().map(|a| &a.start_state).collect();
        if let Some(last) = self.actions.last() {
            out.push(&last.end_state);
        }
        out
    }
}

/// Reverses a sequence and swaps each action's start and end states.
pub fn reflect_actions(seq: &[UnitAction]) -> Result<Vec<UnitAction>> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(seq.iter().rev().map(UnitAction::reflected).collect())
}

fn provenance(b: &Behavior, range: std::ops::Range<usize>, reflected: bool) -> Vec<Provenance> {
    let mut v: Vec<_> = range
        .map(|index| Provenance {
            behavior: b.id.clone(),
            index,
            reflected,
        })
        .collect();
    if reflected {
        v.reverse();
    }
    v
}

/// Prefix palindrome: `actions[0..cut) ++ reflect(actions[0..cut))`, cut inside the stretch-out.
pub fn generate_prefix_palindrome(b: &Behavior, cut: usize) -> Result<FeintBehavior> {
    if cut == 0 || cut > b.stretch_end {
        return Err(Error::CutOutOfRange {
            cut,
            lo: 1,
            hi: b.stretch_end,
        });
    }
    let head = &b.actions[..cut];
    let mut actions = head.to_vec();
    actions.extend(reflect_actions(head)?);
    let mut prov = provenance(b, 0..cut, false);
    prov.extend(provenance(b, 0..cut, true));
    Ok(FeintBehavior {
        actions,
        provenance: prov,
        variant: Variant::PrefixPalindrome,
        origin: b.id.clone(),
        cut_index: cut,
    })
}

/// Suffix palindrome: `reflect(actions[cut..]) ++ actions[cut..]`, cut inside the retract.
pub fn generate_suffix_palindrome(b: &Behavior, cut: usize) -> Result<FeintBehavior> {
    if cut < b.reward_end || cut >= b.len() {
        return Err(Error::CutOutOfRange {
            cut,
            lo: b.reward_end,
            hi: b.len().saturating_sub(1),
        });
    }
    let tail = &b.actions[cut..];
    let mut actions = reflect_actions(tail)?;
    actions.extend_from_slice(tail);
    let mut prov = provenance(b, cut..b.len(), true);
    prov.extend(provenance(b, cut..b.len(), false));
    Ok(FeintBehavior {
        actions,
        provenance: prov,
        variant: Variant::SuffixPalindrome,
        origin: b.id.clone(),
        cut_index: cut,
    })
}

/// Splice: `bi.actions[0..idx_i) ++ bj.actions[idx_j..]` joined at two similar states.
pub fn generate_splice(
    bi: &Behavior,
    bj: &Behavior,
    (idx_i, idx_j): (usize, usize),
    cat: &Catalog,
) -> Result<FeintBehavior> {
    let si = bi.state_at(idx_i).ok_or(Error::CutOutOfRange {
        cut: idx_i,
        lo: 1,
        hi: bi.len(),
    })?;
    let sj = bj.state_at(idx_j).ok_or(Error::CutOutOfRange {
        cut: idx_j,
        lo: 0,
        hi: bj.len(),
    })?;
    let distance = cat.distance(si, sj)?;
    if distance > cat.epsilon_state {
        return Err(Error::NotSimilar {
            distance,
            epsilon: cat.epsilon_state,
        });
    }
    let leak_i = (0..idx_i).find(|&k| bi.part_of(k) == SequencePart::Reward);
    let leak_j = (idx_j..bj.len()).find(|&k| bj.part_of(k) == SequencePart::Reward);
    if let Some(k) = leak_i {
        return Err(Error::RewardLeak {
            behavior: bi.id.clone(),
            action: bi.actions[k].id.clone(),
        });
    }
    if let Some(k) = leak_j {
        return Err(Error::RewardLeak {
            behavior: bj.id.clone(),
            action: bj.actions[k].id.clone(),
        });
    }
    let mut actions = bi.actions[..idx_i].to_vec();
    actions.extend_from_slice(&bj.actions[idx_j..]);
    if actions.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut prov = provenance(bi, 0..idx_i, false);
    prov.extend(provenance(bj, idx_j..bj.len(), false));
    Ok(FeintBehavior {
        actions,
        provenance: prov,
        variant: Variant::SpliceSimilar,
        origin: format!("{}+{}", bi.id, bj.id),
        cut_index: idx_i,
    })
}

/// Predicate deciding when two actions count as the "same" junction action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JunctionRule {
    /// Identical action ids only.
    #[default]
    SameId,
    /// Identical ids, or start and end states each within the catalog tolerance.
    SameIdOrSimilar,
}

impl JunctionRule {
    pub fn matches(self, a: &UnitAction, b: &UnitAction, cat: &Catalog) -> bool {
        if a.id == b.id {
            return true;
        }
        match self {
            JunctionRule::SameId => false,
            JunctionRule::SameIdOrSimilar => {
                cat.similar(&a.start_state, &b.start_state)
                    && cat.similar(&a.end_state, &b.end_state)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeintTemplate {
    /// Id of the junction action as it appears in `behavior_j`.
    pub junction: String,
    pub behavior_i: String,
    pub behavior_j: String,
    pub junction_pos_i: usize,
    pub junction_pos_j: usize,
    pub avail_prefix: Vec<String>,
    pub avail_suffix: Vec<String>,
}

impl FeintTemplate {
    pub fn key(&self) -> String {
        format!(
            "{}|{}@{}|{}@{}",
            self.junction,
            self.behavior_i,
            self.junction_pos_i,
            self.behavior_j,
            self.junction_pos_j
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TemplateSet {
    pub rule: JunctionRule,
    pub templates: Vec<FeintTemplate>,
}

impl TemplateSet {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Count of templates per ordered behavior pair.
    pub fn pair_counts(&self) -> std::collections::BTreeMap<(String, String), usize> {
        let mut out = std::collections::BTreeMap::new();
        for t in &self.templates {
            *out.entry((t.behavior_i.clone(), t.behavior_j.clone()))
                .or_default() += 1;
        }
        out
    }
}

/// Enumerates `(a_k, Avail_i, Avail_j)` for every ordered pair `(i, j)`, self
/// pairs included, and every junction position pair. Output is sorted.
pub fn precompute_templates(cat: &Catalog, rule: JunctionRule) -> TemplateSet {
    let mut templates = Vec::new();
    for bi in &cat.behaviors {
        for bj in &cat.behaviors {
            for (ki, ai) in bi.actions.iter().enumerate() {
                for (kj, aj) in bj.actions.iter().enumerate() {
                    if !rule.matches(ai, aj, cat) {
                        continue;
                    }
                    templates.push(FeintTemplate {
                        junction: aj.id.clone(),
                        behavior_i: bi.id.clone(),
                        behavior_j: bj.id.clone(),
                        junction_pos_i: ki,
                        junction_pos_j: kj,
                        avail_prefix: bi.actions[..ki].iter().map(|a| a.id.clone()).collect(),
                        avail_suffix: bj.actions[kj + 1..].iter().map(|a| a.id.clone()).collect(),
                    });
                }
            }
        }
    }
    templates.sort();
    templates.dedup();
    TemplateSet { rule, templates }
}

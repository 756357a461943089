//! Behavior catalog: physical states, unit actions and attack behaviors.
//!
//! An attack behavior is a sequence of one-step unit actions partitioned into
//! a stretch-out sequence `[0, stretch_end)`, a reward sequence
//! `[stretch_end, reward_end)` and a retract sequence `[reward_end, len)`.
//! Everything downstream (template generation, composition, the game) relies
//! on the continuity checks in this module.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suffix that marks a time-reversed copy of a catalog action.
pub const REFLECT_SUFFIX: &str = "~rev";

/// Default similarity tolerance in normalized joint units.
pub const DEFAULT_EPSILON_STATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Footing {
    LeftForward,
    RightForward,
    Neutral,
}

/// Attack direction tag used by the hit/defense model.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub enum Direction {
    High,
    #[default]
    Mid,
    Low,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::High, Direction::Mid, Direction::Low];

    pub fn index(self) -> usize {
        match self {
            Direction::High => 0,
            Direction::Mid => 1,
            Direction::Low => 2,
        }
    }
}

/// Joint-position descriptor of a body: per joint `[x, y, stretch_angle]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalState {
    pub joints: Vec<[f64; 3]>,
    pub footing: Footing,
}

impl PhysicalState {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    fn coords_in_range(&self) -> bool {
        self.joints
            .iter()
            .flatten()
            .all(|c| c.is_finite() && (-1.0..=1.0).contains(c))
    }
}

/// Distance between two physical states: L∞ over every joint coordinate plus
/// `footing_penalty` when the footings differ.
pub fn state_distance(a: &PhysicalState, b: &PhysicalState, footing_penalty: f64) -> Result<f64> {
    if a.joints.len() != b.joints.len() {
        return Err(Error::Dimension {
            expected: a.joints.len(),
            found: b.joints.len(),
            context: "state_distance".into(),
        });
    }
    let linf = a
        .joints
        .iter()
        .zip(&b.joints)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0_f64, f64::max);
    let penalty = if a.footing == b.footing {
        0.0
    } else {
        footing_penalty
    };
    Ok(linf + penalty)
}

/// Minimal movement in one unit time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitAction {
    pub id: String,
    pub start_state: PhysicalState,
    pub end_state: PhysicalState,
}

impl UnitAction {
    /// The same movement played backwards.
    pub fn reflected(&self) -> UnitAction {
        let id = match self.id.strip_suffix(REFLECT_SUFFIX) {
            Some(base) => base.to_string(),
            None => format!("{}{}", self.id, REFLECT_SUFFIX),
        };
        UnitAction {
            id,
            start_state: self.end_state.clone(),
            end_state: self.start_state.clone(),
        }
    }

    /// Catalog id of the movement this action was derived from.
    pub fn base_id(&self) -> &str {
        self.id.strip_suffix(REFLECT_SUFFIX).unwrap_or(&self.id)
    }

    pub fn is_reflected(&self) -> bool {
        self.id.ends_with(REFLECT_SUFFIX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Behavior {
    pub id: String,
    pub name: String,
    pub reward_value: f64,
    pub stretch_end: usize,
    pub reward_end: usize,
    pub actions: Vec<UnitAction>,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SequencePart {
    StretchOut,
    Reward,
    Retract,
}

impl Behavior {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn part_of(&self, index: usize) -> SequencePart {
        if index < self.stretch_end {
            SequencePart::StretchOut
        } else if index < self.reward_end {
            SequencePart::Reward
        } else {
            SequencePart::Retract
        }
    }

    pub fn stretch_out(&self) -> &[UnitAction] {
        &self.actions[..self.stretch_end.min(self.len())]
    }

    pub fn reward_sequence(&self) -> &[UnitAction] {
        let end = self.reward_end.min(self.len());
        &self.actions[self.stretch_end.min(end)..end]
    }

    pub fn retract(&self) -> &[UnitAction] {
        &self.actions[self.reward_end.min(self.len())..]
    }

    /// Physical state "at" an index: the start of `actions[index]`, or the end
    /// of the last action when `index == len`.
    pub fn state_at(&self, index: usize) -> Option<&PhysicalState> {
        if index < self.len() {
            Some(&self.actions[index].start_state)
        } else if index == self.len() && index > 0 {
            Some(&self.actions[index - 1].end_state)
        } else {
            None
        }
    }

    pub fn start_state(&self) -> &PhysicalState {
        &self.actions[0].start_state
    }

    pub fn end_state(&self) -> &PhysicalState {
        &self.actions[self.len() - 1].end_state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Partition {
        rule: String,
    },
    Continuity {
        index: usize,
        distance: f64,
    },
    JointCount {
        action: String,
        expected: usize,
        found: usize,
    },
    CoordinateRange {
        action: String,
    },
    NegativeReward,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Partition { rule } => write!(f, "partition: {rule}"),
            Violation::Continuity { index, distance } => {
                write!(
                    f,
                    "continuity gap {distance:.4} between actions {index} and {}",
                    index + 1
                )
            }
            Violation::JointCount {
                action,
                expected,
                found,
            } => {
                write!(f, "action {action}: {found} joints, expected {expected}")
            }
            Violation::CoordinateRange { action } => {
                write!(
                    f,
                    "action {action}: joint coordinate outside [-1, 1] or non-finite"
                )
            }
            Violation::NegativeReward => write!(f, "reward_value must be >= 0"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn continuity_violations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.violations.iter().filter_map(|v| match v {
            Violation::Continuity { index, distance } => Some((*index, *distance)),
            _ => None,
        })
    }
}

/// Checks every adjacent pair of a raw action sequence for continuity.
pub fn continuity_gaps(
    actions: &[UnitAction],
    epsilon: f64,
    footing_penalty: f64,
) -> Vec<(usize, f64)> {
    actions
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            // joint-count mismatches are reported separately; treat as a gap
            let d = state_distance(&w[0].end_state, &w[1].start_state, footing_penalty)
                .unwrap_or(f64::INFINITY);
            (d > epsilon).then_some((k, d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub epsilon_state: f64,
    pub joint_count: usize,
    pub behaviors: Vec<Behavior>,
}

impl Catalog {
    /// Builds a catalog and runs every validation rule on it.
    pub fn new(epsilon_state: f64, joint_count: usize, behaviors: Vec<Behavior>) -> Result<Self> {
        let cat = Catalog {
            epsilon_state,
            joint_count,
            behaviors,
        };
        cat.check()?;
        Ok(cat)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cat: Catalog = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cat.check()?;
        Ok(cat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn footing_penalty(&self) -> f64 {
        2.0 * self.epsilon_state
    }

    pub fn distance(&self, a: &PhysicalState, b: &PhysicalState) -> Result<f64> {
        state_distance(a, b, self.footing_penalty())
    }

    pub fn similar(&self, a: &PhysicalState, b: &PhysicalState) -> bool {
        self.distance(a, b)
            .map(|d| d <= self.epsilon_state)
            .unwrap_or(false)
    }

    pub fn behavior(&self, id: &str) -> Option<&Behavior> {
        self.behaviors.iter().find(|b| b.id == id)
    }

    pub fn behavior_index(&self, id: &str) -> Option<usize> {
        self.behaviors.iter().position(|b| b.id == id)
    }

    /// Looks an action up by id, including reflected copies.
    pub fn action(&self, id: &str) -> Option<UnitAction> {
        let base = id.strip_suffix(REFLECT_SUFFIX).unwrap_or(id);
        let found = self
            .behaviors
            .iter()
            .flat_map(|b| b.actions.iter())
            .find(|a| a.id == base)?;
        Some(if base == id {
            found.clone()
        } else {
            found.reflected()
        })
    }

    /// Posture agents rest in: the start state of the first behavior.
    pub fn rest_state(&self) -> &PhysicalState {
        self.behaviors[0].start_state()
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon_state > 0.0 && self.epsilon_state.is_finite()) {
            return Err(Error::Validation {
                behavior: String::new(),
                rule: "epsilon_state must be > 0".into(),
            });
        }
        if self.behaviors.is_empty() {
            return Err(Error::Validation {
                behavior: String::new(),
                rule: "catalog has no behaviors".into(),
            });
        }
        for b in &self.behaviors {
            for a in &b.actions {
                for s in [&a.start_state, &a.end_state] {
                    if s.joint_count() != self.joint_count {
                        return Err(Error::Dimension {
                            expected: self.joint_count,
                            found: s.joint_count(),
                            context: format!("behavior {} action {}", b.id, a.id),
                        });
                    }
                }
            }
        }
        let mut behavior_ids = BTreeMap::new();
        let mut action_defs: BTreeMap<&str, &UnitAction> = BTreeMap::new();
        for b in &self.behaviors {
            if behavior_ids.insert(b.id.as_str(), ()).is_some() {
                return Err(Error::Validation {
                    behavior: b.id.clone(),
                    rule: "duplicate behavior id".into(),
                });
            }
            let report = validate_behavior(b, self);
            if let Some(v) = report.violations.first() {
                return Err(Error::Validation {
                    behavior: b.id.clone(),
                    rule: v.to_string(),
                });
            }
            for a in &b.actions {
                if a.id.ends_with(REFLECT_SUFFIX) {
                    return Err(Error::Validation {
                        behavior: b.id.clone(),
                        rule: format!(
                            "action id {} uses the reserved suffix {REFLECT_SUFFIX}",
                            a.id
                        ),
                    });
                }
                // a shared id names one movement; every use must agree on its states
                match action_defs.get(a.id.as_str()) {
                    Some(prev) if *prev != a => {
                        return Err(Error::Validation {
                            behavior: b.id.clone(),
                            rule: format!("action id {} reused with different states", a.id),
                        })
                    }
                    _ => {
                        action_defs.insert(&a.id, a);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lists every continuity and partition violation of `b` under `cat`'s tolerance.
pub fn validate_behavior(b: &Behavior, cat: &Catalog) -> ValidationReport {
    let mut violations = Vec::new();
    let n = b.actions.len();
    if b.stretch_end == 0 {
        violations.push(Violation::Partition {
            rule: "stretch_end must be > 0".into(),
        });
    }
    if b.stretch_end > b.reward_end {
        violations.push(Violation::Partition {
            rule: format!(
                "stretch_end {} > reward_end {}",
                b.stretch_end, b.reward_end
            ),
        });
    }
    if b.reward_end > n {
        violations.push(Violation::Partition {
            rule: format!("reward_end {} > action count {n}", b.reward_end),
        });
    }
    if !(b.reward_value >= 0.0 && b.reward_value.is_finite()) {
        violations.push(Violation::NegativeReward);
    }
    for a in &b.actions {
        for s in [&a.start_state, &a.end_state] {
            if s.joint_count() != cat.joint_count {
                violations.push(Violation::JointCount {
                    action: a.id.clone(),
                    expected: cat.joint_count,
                    found: s.joint_count(),
                });
            } else if !s.coords_in_range() {
                violations.push(Violation::CoordinateRange {
                    action: a.id.clone(),
                });
            }
        }
    }
    for (index, distance) in continuity_gaps(&b.actions, cat.epsilon_state, cat.footing_penalty()) {
        violations.push(Violation::Continuity { index, distance });
    }
    ValidationReport { violations }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Catalog::from_json(&text)
}

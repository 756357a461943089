//! Scripted 1v1 exchanges that pit a feint of chosen length against a
//! defend-then-counter opponent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Direction};
use crate::compose::{classify_timing, compose_dbms, TimingClass};
use crate::env::{AgentSpec, Arena, Command, Plan, Rules, StepEvent};
use crate::error::{Error, Result};
use crate::templates::{precompute_templates, JunctionRule};

/// One log record: the step at which an event happened plus the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: u64,
    #[serde(flatten)]
    pub event: StepEvent,
}

pub fn to_jsonl(records: &[EventRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("event serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeintChoice {
    pub behavior: &'static str,
    pub cut: usize,
    pub junction: usize,
}

/// The feint each timing class is scripted with.
pub fn scripted_choice(class: TimingClass) -> FeintChoice {
    match class {
        TimingClass::TooShort => FeintChoice {
            behavior: "jab",
            cut: 1,
            junction: 1,
        },
        TimingClass::Proper => FeintChoice {
            behavior: "cross",
            cut: 1,
            junction: 2,
        },
        TimingClass::TooLong => FeintChoice {
            behavior: "overhand",
            cut: 2,
            junction: 2,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub t_a2: i64,
    pub t_b1: i64,
    pub t_b2: i64,
    pub class: TimingClass,
    pub events: Vec<EventRecord>,
}

pub const DEFENDER_GUARD: Direction = Direction::High;
pub const COUNTER: &str = "jab";
pub const EXCHANGE_STEPS: u64 = 16;

/// Agent 0 opens with a self-feint of the behavior in `choice`; agent 1
/// guards high from step 0 and counters with a jab once the guard drops.
pub fn run_exchange(cat: &Arc<Catalog>, choice: FeintChoice) -> Result<ExchangeReport> {
    let rules = Rules::default();
    let agents = vec![
        AgentSpec {
            name: "A".into(),
            team: 0,
            spawn: [4.6, 5.0],
        },
        AgentSpec {
            name: "B".into(),
            team: 1,
            spawn: [5.4, 5.0],
        },
    ];
    let arena = Arena::new(rules, agents, cat.clone())?;
    let b = cat
        .behavior(choice.behavior)
        .ok_or_else(|| Error::UnknownBehavior(choice.behavior.into()))?;
    let target = b.reward_sequence().first().ok_or(Error::EmptySequence)?;
    let templates = precompute_templates(cat, JunctionRule::SameId);
    let dbm = compose_dbms(&b.actions[0].id, &target.id, &templates, cat)?
        .into_iter()
        .find(|d| {
            d.source_behavior_id == b.id
                && d.target_behavior_id == b.id
                && d.start_pos == 0
                && d.t_f == 2 * choice.cut
                && d.junction_pos_i == choice.junction
                && d.junction_pos_j == choice.junction
        })
        .ok_or_else(|| {
            Error::Config(format!(
                "no self-feint for {} with cut {}",
                b.id, choice.cut
            ))
        })?;
    let feint = Plan::from_dbm(&dbm, cat)?;
    let counter = cat
        .behavior(COUNTER)
        .ok_or_else(|| Error::UnknownBehavior(COUNTER.into()))?;

    let t_b1 = rules.defend_steps as i64;
    let t_b2 = t_b1 + counter.stretch_end as i64;
    let t_a2 = dbm.reward_offset as i64;
    let class = classify_timing(t_a2, t_b1, t_b2)?;

    let mut state = arena.reset(0);
    let mut events = Vec::new();
    for step in 0..EXCHANGE_STEPS {
        let a = if step == 0 {
            Command::Begin(feint.clone())
        } else {
            Command::Continue
        };
        let b = if step == 0 {
            Command::Begin(Plan::defend(DEFENDER_GUARD, rules.defend_steps))
        } else if step as i64 == t_b1 {
            Command::Begin(Plan::from_behavior(counter))
        } else {
            Command::Continue
        };
        let out = arena.step_in_place(&mut state, &[a, b])?;
        events.extend(
            out.events
                .into_iter()
                .map(|event| EventRecord { step, event }),
        );
    }
    Ok(ExchangeReport {
        t_a2,
        t_b1,
        t_b2,
        class,
        events,
    })
}

/// Whether the events show the outcome the timing class predicts: blocked,
/// attacker lands and knocks down, or defender lands first.
pub fn outcome_matches(report: &ExchangeReport) -> bool {
    let first_hit = report.events.iter().find_map(|r| match r.event {
        StepEvent::Hit { attacker, .. } => Some(attacker),
        _ => None,
    });
    let attacker_landed = report
        .events
        .iter()
        .any(|r| matches!(r.event, StepEvent::Hit { attacker: 0, .. }));
    let blocked = report
        .events
        .iter()
        .any(|r| matches!(r.event, StepEvent::Blocked { attacker: 0, .. }));
    let knockdown = report
        .events
        .iter()
        .any(|r| matches!(r.event, StepEvent::Knockdown { agent: 1 }));
    match report.class {
        TimingClass::TooShort => blocked && !attacker_landed,
        TimingClass::Proper => first_hit == Some(0) && knockdown,
        TimingClass::TooLong => first_hit == Some(1),
    }
}

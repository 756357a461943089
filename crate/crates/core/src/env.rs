//! Discrete-step boxing arena: agents on a bounded plane executing catalog
//! behaviors, with hit, block, interruption and knockdown resolution.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Behavior, Catalog, Direction, PhysicalState, SequencePart, UnitAction};
use crate::compose::DualBehaviorModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rules {
    pub arena_width: f64,
    pub arena_height: f64,
    pub hit_range: f64,
    pub hit_half_angle_deg: f64,
    /// Knockdown when the incoming value is at least this multiple of the
    /// target's current behavior reward.
    pub knockdown_ratio: f64,
    pub knockdown_steps: u32,
    pub defend_steps: usize,
    pub move_distance: f64,
    pub move_steps: usize,
    pub min_separation: f64,
    pub spawn_jitter: f64,
    /// Steps a blocked attacker is stunned. A block then also aborts the
    /// attacker's plan and ends the defender's guard; 0 disables all three.
    pub block_stun_steps: u32,
    /// A hit interrupts the target's plan only when its value is at least
    /// this multiple of the plan's reward value.
    pub interrupt_ratio: f64,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            arena_width: 10.0,
            arena_height: 10.0,
            hit_range: 1.0,
            hit_half_angle_deg: 60.0,
            knockdown_ratio: 2.0,
            knockdown_steps: 3,
            defend_steps: 5,
            move_distance: 0.3,
            move_steps: 2,
            min_separation: 0.5,
            spawn_jitter: 0.0,
            block_stun_steps: 0,
            interrupt_ratio: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub team: u32,
    pub spawn: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    /// Wind-up of a real attack.
    Stretch(Direction),
    /// Step of a feint; looks like a wind-up to opponents.
    Feint(Direction),
    Strike(Direction),
    Recover,
    Guard(Direction),
    Move,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action_id: String,
    /// Posture required at the start of the step; `None` keeps any posture.
    pub start: Option<PhysicalState>,
    pub end: Option<PhysicalState>,
    pub kind: StepKind,
    /// Forward displacement along the facing direction.
    pub advance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanKind {
    Behavior,
    Dual,
    Defend,
    Move,
    Idle,
}

/// Immutable action sequence an agent can commit to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: String,
    pub kind: PlanKind,
    /// Reward value of the behavior the plan delivers, 0 for utility plans.
    pub reward_value: f64,
    pub steps: Arc<[PlanStep]>,
}

fn behavior_step(b: &Behavior, index: usize, action: &UnitAction) -> PlanStep {
    let kind = match b.part_of(index) {
        SequencePart::StretchOut => StepKind::Stretch(b.direction),
        SequencePart::Reward => StepKind::Strike(b.direction),
        SequencePart::Retract => StepKind::Recover,
    };
    PlanStep {
        action_id: action.id.clone(),
        start: Some(action.start_state.clone()),
        end: Some(action.end_state.clone()),
        kind,
        advance: 0.0,
    }
}

fn utility(id: &str, kind: PlanKind, step_kind: StepKind, n: usize, advance: f64) -> Plan {
    let steps: Vec<PlanStep> = (0..n.max(1))
        .map(|_| PlanStep {
            action_id: id.to_string(),
            start: None,
            end: None,
            kind: step_kind,
            advance,
        })
        .collect();
    Plan {
        id: id.to_string(),
        kind,
        reward_value: 0.0,
        steps: steps.into(),
    }
}

impl Plan {
    pub fn from_behavior(b: &Behavior) -> Plan {
        let steps: Vec<PlanStep> = b
            .actions
            .iter()
            .enumerate()
            .map(|(k, a)| behavior_step(b, k, a))
            .collect();
        Plan {
            id: b.id.clone(),
            kind: PlanKind::Behavior,
            reward_value: b.reward_value,
            steps: steps.into(),
        }
    }

    /// Feint steps telegraph the source behavior's direction; follow-up steps
    /// take their kind from the behavior they were copied from.
    pub fn from_dbm(dbm: &DualBehaviorModel, cat: &Catalog) -> Result<Plan> {
        let source = cat
            .behavior(&dbm.source_behavior_id)
            .ok_or_else(|| Error::UnknownBehavior(dbm.source_behavior_id.clone()))?;
        let target = cat
            .behavior(&dbm.target_behavior_id)
            .ok_or_else(|| Error::UnknownBehavior(dbm.target_behavior_id.clone()))?;
        let mut steps = Vec::with_capacity(dbm.t_s);
        for a in &dbm.feint.actions {
            steps.push(PlanStep {
                action_id: a.id.clone(),
                start: Some(a.start_state.clone()),
                end: Some(a.end_state.clone()),
                kind: StepKind::Feint(source.direction),
                advance: 0.0,
            });
        }
        for (a, p) in dbm.followup.iter().zip(&dbm.followup_provenance) {
            let b = cat
                .behavior(&p.behavior)
                .ok_or_else(|| Error::UnknownBehavior(p.behavior.clone()))?;
            steps.push(behavior_step(b, p.index, a));
        }
        Ok(Plan {
            id: dbm.id.clone(),
            kind: PlanKind::Dual,
            reward_value: target.reward_value,
            steps: steps.into(),
        })
    }

    pub fn defend(direction: Direction, steps: usize) -> Plan {
        let id = format!("defend_{}", format!("{direction:?}").to_lowercase());
        utility(
            &id,
            PlanKind::Defend,
            StepKind::Guard(direction),
            steps,
            0.0,
        )
    }

    pub fn advance(distance: f64, steps: usize) -> Plan {
        utility("advance", PlanKind::Move, StepKind::Move, steps, distance)
    }

    pub fn retreat(distance: f64, steps: usize) -> Plan {
        utility("retreat", PlanKind::Move, StepKind::Move, steps, -distance)
    }

    pub fn idle() -> Plan {
        utility("idle", PlanKind::Idle, StepKind::Rest, 1, 0.0)
    }

    /// One catalog action on its own, typed by the first behavior using it.
    pub fn unit(action: &UnitAction, cat: &Catalog) -> Plan {
        let base = action.base_id();
        let found = cat
            .behaviors
            .iter()
            .find_map(|b| b.actions.iter().position(|a| a.id == base).map(|k| (b, k)));
        let (kind, value) = match found {
            Some((b, k)) if !action.is_reflected() => match b.part_of(k) {
                SequencePart::StretchOut => (StepKind::Stretch(b.direction), 0.0),
                SequencePart::Reward => (StepKind::Strike(b.direction), b.reward_value),
                SequencePart::Retract => (StepKind::Recover, 0.0),
            },
            Some((b, _)) => (StepKind::Feint(b.direction), 0.0),
            None => (StepKind::Rest, 0.0),
        };
        let step = PlanStep {
            action_id: action.id.clone(),
            start: Some(action.start_state.clone()),
            end: Some(action.end_state.clone()),
            kind,
            advance: 0.0,
        };
        Plan {
            id: action.id.clone(),
            kind: PlanKind::Behavior,
            reward_value: value,
            steps: vec![step].into(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start_posture(&self) -> Option<&PhysicalState> {
        self.steps.iter().find_map(|s| s.start.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePlan {
    pub plan: Plan,
    pub progress: usize,
    pub strike_resolved: bool,
    pub start_posture: PhysicalState,
    pub credited: f64,
    pub received: f64,
}

impl ActivePlan {
    pub fn current(&self) -> &PlanStep {
        &self.plan.steps[self.progress]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub name: String,
    pub team: u32,
    pub position: [f64; 2],
    pub orientation: f64,
    pub linear_velocity: [f64; 2],
    pub angular_velocity: f64,
    pub posture: PhysicalState,
    pub plan: Option<ActivePlan>,
    pub score: f64,
    pub received: f64,
    pub down_steps: u32,
    #[serde(default)]
    pub stun_steps: u32,
}

impl AgentState {
    pub fn is_busy(&self) -> bool {
        self.plan.is_some() || self.down_steps > 0 || self.stun_steps > 0
    }

    pub fn in_dual(&self) -> bool {
        self.plan
            .as_ref()
            .is_some_and(|p| p.plan.kind == PlanKind::Dual)
    }

    fn guarding(&self) -> Option<Direction> {
        match self.plan.as_ref()?.current().kind {
            StepKind::Guard(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub agents: Vec<AgentState>,
    pub step: u64,
}

impl GameState {
    /// Stable digest of the full state, f64s by bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        // FNV-1a
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

/// What an opponent can read off an agent this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cue {
    None,
    Threat(Direction),
    Guard,
    Down,
}

impl Cue {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        match self {
            Cue::None => 0,
            Cue::Threat(d) => 1 + d.index(),
            Cue::Guard => 4,
            Cue::Down => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Continue,
    Begin(Plan),
    Unit(UnitAction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum StepEvent {
    Hit {
        attacker: usize,
        defender: usize,
        reward_value: f64,
    },
    Blocked {
        attacker: usize,
        defender: usize,
        direction: Direction,
    },
    Interrupted {
        agent: usize,
        at_index: usize,
    },
    Knockdown {
        agent: usize,
    },
    FeintStarted {
        agent: usize,
        plan: String,
    },
    /// Real reward credited to the agent over the dual-behavior window.
    /// Emitted on completion and on interruption.
    DBMCompleted {
        agent: usize,
        collective_reward: f64,
        received: f64,
        interrupted: bool,
    },
    IllegalAction {
        agent: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub events: Vec<StepEvent>,
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The arena: rules, roster and catalog. States live separately so they can
/// be cloned cheaply for lookahead.
#[derive(Debug, Clone)]
pub struct Arena {
    pub rules: Rules,
    pub agents: Vec<AgentSpec>,
    pub catalog: Arc<Catalog>,
}

impl Arena {
    pub fn new(rules: Rules, agents: Vec<AgentSpec>, catalog: Arc<Catalog>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::Config("need at least two agents".into()));
        }
        if !(rules.arena_width > 0.0 && rules.arena_height > 0.0 && rules.hit_range > 0.0) {
            return Err(Error::Config(
                "arena size and hit range must be positive".into(),
            ));
        }
        if !(0.0..=180.0).contains(&rules.hit_half_angle_deg)
            || rules.knockdown_ratio < 0.0
            || rules.interrupt_ratio < 0.0
            || rules.min_separation < 0.0
        {
            return Err(Error::Config(
                "hit angle must be in [0, 180]; ratios and separation non-negative".into(),
            ));
        }
        for a in &agents {
            let [x, y] = a.spawn;
            if !(0.0..=rules.arena_width).contains(&x) || !(0.0..=rules.arena_height).contains(&y) {
                return Err(Error::Config(format!(
                    "spawn of '{}' outside the arena",
                    a.name
                )));
            }
        }
        if agents.iter().all(|a| a.team == agents[0].team) {
            return Err(Error::Config("all agents on one team".into()));
        }
        Ok(Arena {
            rules,
            agents,
            catalog,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn reset(&self, seed: u64) -> GameState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rest = self.catalog.rest_state().clone();
        let agents = self
            .agents
            .iter()
            .map(|spec| {
                let mut position = spec.spawn;
                if self.rules.spawn_jitter > 0.0 {
                    for p in position.iter_mut() {
                        *p += rng.gen_range(-self.rules.spawn_jitter..=self.rules.spawn_jitter);
                    }
                }
                AgentState {
                    name: spec.name.clone(),
                    team: spec.team,
                    position: self.clamp(position),
                    orientation: 0.0,
                    linear_velocity: [0.0; 2],
                    angular_velocity: 0.0,
                    posture: rest.clone(),
                    plan: None,
                    score: 0.0,
                    received: 0.0,
                    down_steps: 0,
                    stun_steps: 0,
                }
            })
            .collect();
        let mut state = GameState { agents, step: 0 };
        for i in 0..state.agents.len() {
            if let Some(j) = self.nearest_opponent(&state, i) {
                let d = [
                    state.agents[j].position[0] - state.agents[i].position[0],
                    state.agents[j].position[1] - state.agents[i].position[1],
                ];
                state.agents[i].orientation = d[1].atan2(d[0]);
            }
        }
        state
    }

    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(0.0, self.rules.arena_width),
            p[1].clamp(0.0, self.rules.arena_height),
        ]
    }

    pub fn opponents(&self, state: &GameState, agent: usize) -> impl Iterator<Item = usize> + '_ {
        let team = state.agents[agent].team;
        let teams: Vec<u32> = state.agents.iter().map(|a| a.team).collect();
        (0..teams.len()).filter(move |j| teams[*j] != team)
    }

    pub fn nearest_opponent(&self, state: &GameState, agent: usize) -> Option<usize> {
        let p = state.agents[agent].position;
        let mut best: Option<(f64, usize)> = None;
        for j in self.opponents(state, agent) {
            let d = dist(p, state.agents[j].position);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        best.map(|(_, j)| j)
    }

    pub fn cue(&self, state: &GameState, agent: usize) -> Cue {
        let a = &state.agents[agent];
        if a.down_steps > 0 || a.stun_steps > 0 {
            return Cue::Down;
        }
        match a.plan.as_ref().map(|p| p.current().kind) {
            Some(StepKind::Stretch(d) | StepKind::Feint(d) | StepKind::Strike(d)) => Cue::Threat(d),
            Some(StepKind::Guard(_)) => Cue::Guard,
            _ => Cue::None,
        }
    }

    /// Relative position, orientation, linear and angular velocity of every
    /// other agent, expressed in `agent`'s frame, in agent order.
    pub fn observe(&self, state: &GameState, agent: usize) -> Result<Vec<f64>> {
        let me = state.agents.get(agent).ok_or(Error::UnknownAgent(agent))?;
        let mut out = Vec::with_capacity(6 * (state.agents.len() - 1));
        for (j, other) in state.agents.iter().enumerate() {
            if j == agent {
                continue;
            }
            let p = rotate(
                [
                    other.position[0] - me.position[0],
                    other.position[1] - me.position[1],
                ],
                -me.orientation,
            );
            let v = rotate(
                [
                    other.linear_velocity[0] - me.linear_velocity[0],
                    other.linear_velocity[1] - me.linear_velocity[1],
                ],
                -me.orientation,
            );
            out.extend_from_slice(&[
                p[0],
                p[1],
                wrap_angle(other.orientation - me.orientation),
                v[0],
                v[1],
                other.angular_velocity - me.angular_velocity,
            ]);
        }
        Ok(out)
    }

    pub fn step(
        &self,
        state: &GameState,
        commands: &[Command],
    ) -> Result<(GameState, StepOutcome)> {
        let mut next = state.clone();
        let out = self.step_in_place(&mut next, commands)?;
        Ok((next, out))
    }

    /// Advances one step: commands, then movement and posture, then contacts
    /// in agent-id order, then plan progress.
    pub fn step_in_place(
        &self,
        state: &mut GameState,
        commands: &[Command],
    ) -> Result<StepOutcome> {
        let n = state.agents.len();
        if commands.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: commands.len(),
                context: "joint commands".into(),
            });
        }
        let mut out = StepOutcome {
            rewards: vec![0.0; n],
            events: Vec::new(),
        };

        for (i, cmd) in commands.iter().enumerate() {
            let plan = match cmd {
                Command::Continue => continue,
                Command::Begin(p) => p.clone(),
                Command::Unit(a) => Plan::unit(a, &self.catalog),
            };
            if let Err(reason) = self.check_begin(&state.agents[i], &plan) {
                out.events
                    .push(StepEvent::IllegalAction { agent: i, reason });
                continue;
            }
            if plan.kind == PlanKind::Dual {
                out.events.push(StepEvent::FeintStarted {
                    agent: i,
                    plan: plan.id.clone(),
                });
            }
            let a = &mut state.agents[i];
            a.plan = Some(ActivePlan {
                start_posture: a.posture.clone(),
                plan,
                progress: 0,
                strike_resolved: false,
                credited: 0.0,
                received: 0.0,
            });
        }

        self.apply_motion(state);
        self.resolve_contacts(state, &mut out);

        for i in 0..n {
            let a = &mut state.agents[i];
            if let Some(p) = a.plan.as_mut() {
                p.progress += 1;
                if p.progress == p.plan.len() {
                    let done = a.plan.take().expect("plan present");
                    if done.plan.kind == PlanKind::Dual {
                        out.events.push(StepEvent::DBMCompleted {
                            agent: i,
                            collective_reward: done.credited,
                            received: done.received,
                            interrupted: false,
                        });
                    }
                }
            } else {
                if a.down_steps > 0
                    && !out
                        .events
                        .iter()
                        .any(|e| matches!(e, StepEvent::Knockdown { agent } if *agent == i))
                {
                    a.down_steps -= 1;
                }
                if a.stun_steps > 0
                    && !out
                        .events
                        .iter()
                        .any(|e| matches!(e, StepEvent::Blocked { attacker, .. } if *attacker == i))
                {
                    a.stun_steps -= 1;
                }
            }
        }
        state.step += 1;
        Ok(out)
    }

    fn check_begin(&self, a: &AgentState, plan: &Plan) -> std::result::Result<(), String> {
        if a.down_steps > 0 {
            return Err("agent is down".into());
        }
        if a.stun_steps > 0 {
            return Err("agent is stunned".into());
        }
        if a.plan.is_some() {
            return Err("a plan is already in progress".into());
        }
        if plan.is_empty() {
            return Err("empty plan".into());
        }
        if let Some(start) = &plan.steps[0].start {
            let d = self
                .catalog
                .distance(&a.posture, start)
                .map_err(|e| e.to_string())?;
            if d > self.catalog.epsilon_state {
                return Err(format!(
                    "plan '{}' starts {d:.3} away from the current posture",
                    plan.id
                ));
            }
        }
        Ok(())
    }

    fn apply_motion(&self, state: &mut GameState) {
        let n = state.agents.len();
        for i in 0..n {
            let prev = state.agents[i].position;
            let (advance, end) = match state.agents[i].plan.as_ref() {
                Some(p) => (p.current().advance, p.current().end.clone()),
                None => (0.0, None),
            };
            if let Some(end) = end {
                state.agents[i].posture = end;
            }
            if advance != 0.0 {
                let th = state.agents[i].orientation;
                let target =
                    self.clamp([prev[0] + advance * th.cos(), prev[1] + advance * th.sin()]);
                let blocked = (0..n).any(|j| {
                    j != i && dist(target, state.agents[j].position) < self.rules.min_separation
                });
                if !blocked {
                    state.agents[i].position = target;
                }
            }
            let now = state.agents[i].position;
            state.agents[i].linear_velocity = [now[0] - prev[0], now[1] - prev[1]];
        }
        for i in 0..n {
            let old = state.agents[i].orientation;
            let new = match self.nearest_opponent(state, i) {
                Some(j) => {
                    let d = [
                        state.agents[j].position[0] - state.agents[i].position[0],
                        state.agents[j].position[1] - state.agents[i].position[1],
                    ];
                    if d[0] == 0.0 && d[1] == 0.0 {
                        old
                    } else {
                        d[1].atan2(d[0])
                    }
                }
                None => old,
            };
            state.agents[i].orientation = new;
            state.agents[i].angular_velocity = wrap_angle(new - old);
        }
    }

    /// Nearest opponent inside the strike cone who is not down.
    fn strike_target(&self, state: &GameState, attacker: usize) -> Option<usize> {
        let a = &state.agents[attacker];
        let half = self.rules.hit_half_angle_deg.to_radians();
        let mut best: Option<(f64, usize)> = None;
        for j in self.opponents(state, attacker) {
            let o = &state.agents[j];
            if o.down_steps > 0 {
                continue;
            }
            let d = dist(a.position, o.position);
            if d > self.rules.hit_range + 1e-12 {
                continue;
            }
            let bearing = (o.position[1] - a.position[1]).atan2(o.position[0] - a.position[0]);
            if wrap_angle(bearing - a.orientation).abs() > half + 1e-12 {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        best.map(|(_, j)| j)
    }

    fn resolve_contacts(&self, state: &mut GameState, out: &mut StepOutcome) {
        for i in 0..state.agents.len() {
            let (dir, value) = match state.agents[i].plan.as_ref() {
                Some(p) if !p.strike_resolved => match p.current().kind {
                    StepKind::Strike(d) => (d, p.plan.reward_value),
                    _ => continue,
                },
                _ => continue,
            };
            if let Some(p) = state.agents[i].plan.as_mut() {
                p.strike_resolved = true;
            }
            let Some(j) = self.strike_target(state, i) else {
                continue;
            };
            if state.agents[j].guarding() == Some(dir) {
                out.events.push(StepEvent::Blocked {
                    attacker: i,
                    defender: j,
                    direction: dir,
                });
                if self.rules.block_stun_steps > 0 {
                    state.agents[j].plan = None;
                    let a = &mut state.agents[i];
                    if let Some(p) = a.plan.take() {
                        out.events.push(StepEvent::Interrupted {
                            agent: i,
                            at_index: p.progress,
                        });
                        a.posture = p.start_posture.clone();
                        if p.plan.kind == PlanKind::Dual {
                            out.events.push(StepEvent::DBMCompleted {
                                agent: i,
                                collective_reward: p.credited,
                                received: p.received,
                                interrupted: true,
                            });
                        }
                    }
                    a.stun_steps = self.rules.block_stun_steps;
                }
                continue;
            }
            out.events.push(StepEvent::Hit {
                attacker: i,
                defender: j,
                reward_value: value,
            });
            out.rewards[i] += value;
            state.agents[i].score += value;
            if let Some(p) = state.agents[i].plan.as_mut() {
                p.credited += value;
            }
            let target = &mut state.agents[j];
            target.received += value;
            let current_value = target.plan.as_ref().map_or(0.0, |p| p.plan.reward_value);
            if value < self.rules.interrupt_ratio * current_value {
                // the hit lands but the heavier plan carries on
                if let Some(p) = target.plan.as_mut() {
                    p.received += value;
                }
                continue;
            }
            if let Some(mut p) = target.plan.take() {
                p.received += value;
                out.events.push(StepEvent::Interrupted {
                    agent: j,
                    at_index: p.progress,
                });
                target.posture = p.start_posture.clone();
                if p.plan.kind == PlanKind::Dual {
                    out.events.push(StepEvent::DBMCompleted {
                        agent: j,
                        collective_reward: p.credited,
                        received: p.received,
                        interrupted: true,
                    });
                }
                if value >= self.rules.knockdown_ratio * current_value {
                    out.events.push(StepEvent::Knockdown { agent: j });
                    target.down_steps = self.rules.knockdown_steps;
                }
            }
        }
    }
}

//! Training and evaluation loop: a regular policy per agent, an optional
//! feint layer driven by imaginary play, and the two update schedules.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Direction};
use crate::compose::{compose_dbms, DualBehaviorModel};
use crate::config::{Controller, FeintConfig, Scenario};
use crate::env::{Command, Cue, GameState, Plan, StepEvent, StepKind};
use crate::error::{Error, Result};
use crate::occupancy::{ActionKey, Discretizer, OccupancyMeasure, StateKey};
use crate::policy::{sample_index, ActorCritic, Decision, FeintChooser};
use crate::reward::{
    rew_collective, CollectiveBreakdown, FeintWindow, LambdaAdapter, RewardWeights, Trajectory,
    TrajectoryStep,
};
use crate::scripted::EventRecord;
use crate::templates::{precompute_templates, JunctionRule, TemplateSet};

/// One entry of the regular policy's action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    /// Catalog behavior by index.
    Attack(usize),
    Defend(Direction),
    Advance,
    Retreat,
    Idle,
}

pub fn choice_set(cat: &Catalog) -> Vec<Choice> {
    let mut out: Vec<Choice> = (0..cat.behaviors.len()).map(Choice::Attack).collect();
    out.extend(Direction::ALL.iter().map(|d| Choice::Defend(*d)));
    out.extend([Choice::Advance, Choice::Retreat, Choice::Idle]);
    out
}

pub const DISTANCE_BANDS: usize = 3;

pub fn context_count() -> usize {
    DISTANCE_BANDS * Cue::COUNT
}

/// What a policy sees of the game: the distance band and cue of the nearest
/// opponent. `incoming` is the direction of that opponent's next strike and
/// is only read by [`Controller::Blocker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub band: usize,
    pub cue: Cue,
    pub incoming: Option<Direction>,
    pub context: usize,
}

/// Class of the step an agent executes, used as the action key of
/// occupancy measures.
pub fn step_class(kind: Option<StepKind>, down: bool) -> ActionKey {
    if down {
        return 15;
    }
    match kind {
        None | Some(StepKind::Rest) => 0,
        Some(StepKind::Stretch(d)) => 1 + d.index() as u32,
        Some(StepKind::Feint(d)) => 4 + d.index() as u32,
        Some(StepKind::Strike(d)) => 7 + d.index() as u32,
        Some(StepKind::Recover) => 10,
        Some(StepKind::Guard(d)) => 11 + d.index() as u32,
        Some(StepKind::Move) => 14,
    }
}

/// Choice probabilities of the scripted archetypes. Weights are normalized
/// over the allowed choices.
pub fn scripted_distribution(
    controller: Controller,
    view: &View,
    choices: &[Choice],
    mask: &[bool],
) -> Vec<f64> {
    let weight = |c: &Choice| -> f64 {
        let close = view.band == 0;
        match controller {
            Controller::Learner => 1.0,
            Controller::Aggressor => match (c, view.band) {
                (Choice::Attack(_), 0) => 1.0,
                (Choice::Attack(_), 1) => 0.3,
                (Choice::Defend(_), 0) => 0.1,
                (Choice::Advance, b) if b > 0 => 2.0,
                (Choice::Idle, _) => 0.1,
                _ => 0.0,
            },
            Controller::Reactive => match (c, view.cue) {
                (Choice::Defend(d), Cue::Threat(t)) if view.band <= 1 => {
                    if *d == t {
                        8.0
                    } else {
                        0.0
                    }
                }
                (Choice::Attack(_), Cue::Threat(_)) if close => 0.1,
                (Choice::Attack(_), Cue::Down | Cue::Guard) if close => 1.0,
                (Choice::Attack(_), Cue::None) if close => 0.4,
                (Choice::Idle, _) => 1.0,
                (Choice::Advance, _) if !close => 1.0,
                _ => 0.0,
            },
            Controller::Patient => match (c, view.cue) {
                (Choice::Attack(_), Cue::Down) if close => 2.0,
                (Choice::Attack(_), _) if close => 0.2,
                (Choice::Defend(_), _) if close => 1.0,
                (Choice::Idle, _) => 1.5,
                (Choice::Advance, _) if !close => 1.0,
                _ => 0.0,
            },
            Controller::Blocker => match (c, view.incoming) {
                (Choice::Defend(d), Some(t)) => f64::from(u8::from(*d == t)),
                (Choice::Idle, None) => 1.0,
                _ => 0.0,
            },
        }
    };
    let mut w: Vec<f64> = choices
        .iter()
        .zip(mask)
        .map(|(c, m)| if *m { weight(c) } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    if z <= 0.0 {
        // nothing preferred: fall back to uniform over what is allowed
        let allowed = mask.iter().filter(|m| **m).count().max(1) as f64;
        return mask
            .iter()
            .map(|m| if *m { 1.0 / allowed } else { 0.0 })
            .collect();
    }
    for x in &mut w {
        *x /= z;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegularPolicy {
    Learned(ActorCritic),
    Scripted(Controller),
}

impl RegularPolicy {
    pub fn distribution(&self, view: &View, choices: &[Choice], mask: &[bool]) -> Vec<f64> {
        match self {
            RegularPolicy::Learned(ac) => ac.distribution(view.context, mask),
            RegularPolicy::Scripted(c) => scripted_distribution(*c, view, choices, mask),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicies {
    pub name: String,
    pub controller: Controller,
    pub regular: RegularPolicy,
    /// Present iff the agent may feint.
    pub feint: Option<FeintChooser>,
}

/// Counts policy use per agent and step. A step where an agent is controlled
/// by anything other than exactly one model is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InferenceCounter {
    pub regular: u64,
    pub feint: u64,
    /// Policy samples taken inside imaginary rollouts.
    pub imaginary: u64,
    pub violations: u64,
}

/// Outcome of one activation check and, if activated, of imaginary play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginaryPlayDecision {
    pub step: usize,
    pub agent: usize,
    pub activated: bool,
    pub a_target: Option<String>,
    pub candidate_dbms: Vec<String>,
    /// Candidate proposed by the feint policy and evaluated.
    pub proposed: Option<String>,
    pub chosen: Option<String>,
    pub feint_value: f64,
    pub baseline_value: f64,
    pub breakdown: CollectiveBreakdown,
}

/// Value of one candidate against the regular-only continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutComparison {
    pub feint_value: f64,
    pub baseline_value: f64,
    pub feint: CollectiveBreakdown,
    pub baseline: CollectiveBreakdown,
    pub policy_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentEpisode {
    pub name: String,
    pub credited: f64,
    pub received: f64,
    /// Real game reward: credited minus received.
    pub reward: f64,
    pub activations: u64,
    pub commits: u64,
    pub dbm_success: u64,
    pub dbm_failure: u64,
    pub feint_updates: u64,
    pub regular_updates: u64,
    /// Sums over the committed decisions of the episode.
    pub breakdown: CollectiveBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub agents: Vec<AgentEpisode>,
    pub decisions: Vec<ImaginaryPlayDecision>,
    pub events: Vec<EventRecord>,
    pub counter: InferenceCounter,
}

struct Candidate {
    dbm: DualBehaviorModel,
    plan: Plan,
}

struct Pending {
    keys: Vec<String>,
    chosen: usize,
}

/// Per-scenario simulator with learners, feint layer and caches.
pub struct Harness {
    pub scenario: Scenario,
    pub templates: Arc<TemplateSet>,
    pub choices: Vec<Choice>,
    pub policies: Vec<AgentPolicies>,
    pub weights: RewardWeights,
    pub adapter: LambdaAdapter,
    pub counter: InferenceCounter,
    discretizer: Discretizer,
    candidates: BTreeMap<String, Arc<Vec<Candidate>>>,
}

fn add_breakdown(acc: &mut CollectiveBreakdown, b: &CollectiveBreakdown) {
    acc.short += b.short;
    acc.long += b.long;
    acc.temporal += b.temporal;
    acc.spatial_sum += b.spatial_sum;
    acc.spatial_skipped += b.spatial_skipped;
    acc.collective += b.collective;
}

fn scale_breakdown(b: &CollectiveBreakdown, pairs: usize) -> CollectiveBreakdown {
    let k = pairs as f64;
    CollectiveBreakdown {
        short: b.short / k,
        long: b.long / k,
        temporal: b.temporal / k,
        spatial_sum: b.spatial_sum / k,
        spatial_skipped: b.spatial_skipped,
        collective: b.collective / k,
    }
}

/// Reward received by each agent from hits in one step's events.
fn received_by(events: &[StepEvent], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for e in events {
        if let StepEvent::Hit {
            defender,
            reward_value,
            ..
        } = e
        {
            out[*defender] += reward_value;
        }
    }
    out
}

impl Harness {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let templates = Arc::new(precompute_templates(
            &scenario.catalog,
            JunctionRule::SameId,
        ));
        Harness::with_templates(scenario, templates)
    }

    pub fn with_templates(scenario: Scenario, templates: Arc<TemplateSet>) -> Result<Self> {
        let choices = choice_set(&scenario.catalog);
        let cfg = &scenario.config;
        let policies = cfg
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentPolicies {
                name: a.name.clone(),
                controller: a.controller,
                regular: match a.controller {
                    Controller::Learner => {
                        RegularPolicy::Learned(ActorCritic::new(context_count(), choices.len()))
                    }
                    c => RegularPolicy::Scripted(c),
                },
                feint: cfg.feint_agents.contains(&i).then(FeintChooser::default),
            })
            .collect();
        let rules = &cfg.rules;
        let span = rules.arena_width.max(rules.arena_height);
        let per_other_lo = [
            -span,
            -span,
            -PI,
            -rules.move_distance,
            -rules.move_distance,
            -PI,
        ];
        let per_other_hi = [
            span,
            span,
            PI,
            rules.move_distance.max(1e-9),
            rules.move_distance.max(1e-9),
            PI,
        ];
        let others = cfg.agents.len() - 1;
        let discretizer = Discretizer::new(
            cfg.feint.state_bins,
            per_other_lo
                .iter()
                .copied()
                .cycle()
                .take(6 * others)
                .collect(),
            per_other_hi
                .iter()
                .copied()
                .cycle()
                .take(6 * others)
                .collect(),
        )?;
        Ok(Harness {
            weights: cfg.reward,
            adapter: cfg.lambda_adapter,
            scenario,
            templates,
            choices,
            policies,
            counter: InferenceCounter::default(),
            discretizer,
            candidates: BTreeMap::new(),
        })
    }

    fn catalog(&self) -> &Catalog {
        &self.scenario.catalog
    }

    fn feint_cfg(&self) -> &FeintConfig {
        &self.scenario.config.feint
    }

    pub fn view(&self, state: &GameState, agent: usize) -> View {
        let arena = &self.scenario.arena;
        let Some(j) = arena.nearest_opponent(state, agent) else {
            return View {
                band: DISTANCE_BANDS - 1,
                cue: Cue::None,
                incoming: None,
                context: (DISTANCE_BANDS - 1) * Cue::COUNT,
            };
        };
        let (a, b) = (state.agents[agent].position, state.agents[j].position);
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        let r = arena.rules.hit_range;
        let band = if d <= r {
            0
        } else if d <= 2.0 * r {
            1
        } else {
            2
        };
        let cue = arena.cue(state, j);
        let incoming = state.agents[j].plan.as_ref().and_then(|p| {
            if p.strike_resolved {
                return None;
            }
            p.plan.steps[p.progress..]
                .iter()
                .find_map(|s| match s.kind {
                    StepKind::Strike(dir) => Some(dir),
                    _ => None,
                })
        });
        View {
            band,
            cue,
            incoming,
            context: band * Cue::COUNT + cue.index(),
        }
    }

    /// Attacks are allowed when the posture is close to the behavior's start.
    pub fn mask(&self, state: &GameState, agent: usize) -> Vec<bool> {
        let cat = self.catalog();
        let posture = &state.agents[agent].posture;
        self.choices
            .iter()
            .map(|c| match c {
                Choice::Attack(b) => cat
                    .distance(posture, cat.behaviors[*b].start_state())
                    .is_ok_and(|d| d <= cat.epsilon_state),
                _ => true,
            })
            .collect()
    }

    pub fn plan_for(&self, agent: usize, choice: Choice) -> Plan {
        let rules = &self.scenario.config.rules;
        match choice {
            Choice::Attack(b) => Plan::from_behavior(&self.catalog().behaviors[b]),
            Choice::Defend(d) if self.policies[agent].controller == Controller::Blocker => {
                Plan::defend(d, 1)
            }
            Choice::Defend(d) => Plan::defend(d, rules.defend_steps),
            Choice::Advance => Plan::advance(rules.move_distance, rules.move_steps),
            Choice::Retreat => Plan::retreat(rules.move_distance, rules.move_steps),
            Choice::Idle => Plan::idle(),
        }
    }

    /// Regular policy distribution of a free agent.
    pub fn regular_distribution(
        &self,
        state: &GameState,
        agent: usize,
    ) -> (View, Vec<bool>, Vec<f64>) {
        let view = self.view(state, agent);
        let mask = self.mask(state, agent);
        let p = self.policies[agent]
            .regular
            .distribution(&view, &self.choices, &mask);
        (view, mask, p)
    }

    /// Activation test of imaginary play. Returns the target behavior index:
    /// the highest-reward behavior whose start is within δ_near of the
    /// current posture and which the regular policy picks with probability
    /// below `p_low`.
    pub fn should_activate(
        &self,
        state: &GameState,
        agent: usize,
        regular: &[f64],
    ) -> Option<usize> {
        let a = &state.agents[agent];
        if a.in_dual() || a.plan.is_some() || a.down_steps > 0 {
            return None;
        }
        let cfg = self.feint_cfg();
        let cat = self.catalog();
        if let Some(range) = cfg.engage_range {
            let j = self.scenario.arena.nearest_opponent(state, agent)?;
            let (p, q) = (a.position, state.agents[j].position);
            if (p[0] - q[0]).hypot(p[1] - q[1]) > range {
                return None;
            }
        }
        let near = cfg.delta_near.unwrap_or(2.0 * cat.epsilon_state);
        let mut best: Option<usize> = None;
        for (k, c) in self.choices.iter().enumerate() {
            let Choice::Attack(b) = *c else { continue };
            let beh = &cat.behaviors[b];
            if beh.reward_value < cfg.high_reward_min
                || beh.reward_sequence().is_empty()
                || regular[k] >= cfg.p_low
            {
                continue;
            }
            if !cat
                .distance(&a.posture, beh.start_state())
                .is_ok_and(|d| d <= near)
            {
                continue;
            }
            if best.map_or(true, |o| beh.reward_value > cat.behaviors[o].reward_value) {
                best = Some(b);
            }
        }
        best
    }

    /// Every DBM that can start from the current posture and reaches the
    /// target's reward sequence, sorted by id. Cached per start set and target.
    fn candidates_for(
        &mut self,
        state: &GameState,
        agent: usize,
        target: usize,
    ) -> Result<Arc<Vec<Candidate>>> {
        let cat = self.scenario.catalog.clone();
        let posture = &state.agents[agent].posture;
        let mut starts: Vec<&str> = Vec::new();
        for b in &cat.behaviors {
            for a in &b.actions {
                if !starts.contains(&a.id.as_str())
                    && cat
                        .distance(posture, &a.start_state)
                        .is_ok_and(|d| d <= cat.epsilon_state)
                {
                    starts.push(&a.id);
                }
            }
        }
        starts.sort_unstable();
        let beh = &cat.behaviors[target];
        let key = format!("{}|{}", starts.join(","), beh.id);
        if let Some(c) = self.candidates.get(&key) {
            return Ok(c.clone());
        }
        let a_target = &beh.reward_sequence()[0].id;
        let mut out: Vec<Candidate> = Vec::new();
        for a_t in &starts {
            for dbm in compose_dbms(a_t, a_target, &self.templates, &cat)? {
                if dbm.target_behavior_id != beh.id || out.iter().any(|c| c.dbm.id == dbm.id) {
                    continue;
                }
                let plan = Plan::from_dbm(&dbm, &cat)?;
                out.push(Candidate { dbm, plan });
            }
        }
        out.sort_by(|a, b| a.dbm.id.cmp(&b.dbm.id));
        let out = Arc::new(out);
        self.candidates.insert(key, out.clone());
        Ok(out)
    }

    /// Ids of the DBM candidates for `target` from the current posture.
    pub fn candidate_ids(
        &mut self,
        state: &GameState,
        agent: usize,
        target: usize,
    ) -> Result<Vec<String>> {
        Ok(self
            .candidates_for(state, agent, target)?
            .iter()
            .map(|c| c.dbm.id.clone())
            .collect())
    }

    /// Plays `horizon + 1` steps on a copy of `state`. The focal agent starts
    /// `plan` at the first step if one is given; everyone else, and the
    /// focal agent once free, follows frozen regular policies.
    fn rollout(
        &self,
        state: &GameState,
        agent: usize,
        plan: Option<&Plan>,
        horizon: usize,
        seed: u64,
    ) -> Result<(Trajectory, Vec<(StateKey, ActionKey)>, u64)> {
        let arena = &self.scenario.arena;
        let n = state.agents.len();
        let mut s = state.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traj = Trajectory::new(0);
        let mut samples = Vec::with_capacity(horizon + 1);
        let mut inferences = 0;
        for t in 0..=horizon {
            let mut commands = Vec::with_capacity(n);
            let mut focal_kind = None;
            for j in 0..n {
                let a = &s.agents[j];
                let cmd = if t == 0 && j == agent && plan.is_some() {
                    Command::Begin(plan.expect("checked").clone())
                } else if a.is_busy() {
                    Command::Continue
                } else {
                    let (_, _, p) = self.regular_distribution(&s, j);
                    inferences += 1;
                    Command::Begin(self.plan_for(j, self.choices[sample_index(&p, &mut rng)]))
                };
                if j == agent {
                    focal_kind = match &cmd {
                        Command::Begin(p) => Some(p.steps[0].kind),
                        _ => a.plan.as_ref().map(|p| p.current().kind),
                    };
                }
                commands.push(cmd);
            }
            let key = self.discretizer.key(&arena.observe(&s, agent)?)?;
            let class = step_class(focal_kind, s.agents[agent].down_steps > 0);
            let out = arena
                .step_in_place(&mut s, &commands)
                .map_err(|e| Error::Snapshot(e.to_string()))?;
            let received = received_by(&out.events, n);
            traj.push(TrajectoryStep {
                state: key.clone(),
                actions: vec![class],
                rewards: vec![out.rewards[agent] - received[agent]],
            })?;
            samples.push((key, class));
        }
        Ok((traj, samples, inferences))
    }

    /// Imaginary play for one candidate: DBM rollouts against regular-only
    /// rollouts, paired by seed and averaged. Neither touches `state`.
    pub fn compare(
        &self,
        state: &GameState,
        agent: usize,
        dbm: &DualBehaviorModel,
        seed: u64,
    ) -> Result<RolloutComparison> {
        let plan = Plan::from_dbm(dbm, self.catalog())?;
        self.compare_plan(state, agent, dbm, &plan, seed)
    }

    fn compare_plan(
        &self,
        state: &GameState,
        agent: usize,
        dbm: &DualBehaviorModel,
        plan: &Plan,
        seed: u64,
    ) -> Result<RolloutComparison> {
        let cfg = self.feint_cfg();
        let horizon = dbm.t_s + cfg.extra_steps;
        let pairs = cfg.rollouts.max(1);
        let mut feint_trajs = Vec::with_capacity(pairs);
        let mut base_trajs = Vec::with_capacity(pairs);
        let (mut feint_samples, mut base_samples) = (Vec::new(), Vec::new());
        let mut policy_samples = 0;
        for k in 0..pairs {
            // the k-th pair shares one seed so both arms see the same noise
            let s = seed.wrapping_add(k as u64);
            let (t, x, n1) = self.rollout(state, agent, Some(plan), horizon, s)?;
            feint_trajs.push(t);
            feint_samples.extend(x);
            let (t, x, n2) = self.rollout(state, agent, None, horizon, s)?;
            base_trajs.push(t);
            base_samples.extend(x);
            policy_samples += n1 + n2;
        }
        let new = OccupancyMeasure::from_samples(feint_samples)?;
        let old = OccupancyMeasure::from_samples(base_samples)?;
        let window = FeintWindow {
            t_0: 0,
            t_f: dbm.t_f,
            t_s: dbm.t_s,
            horizon,
        };
        let sched = self.weights.schedule(&window);
        let f = self.scenario.config.f_divergence;
        let mut feint = CollectiveBreakdown::default();
        let mut baseline = CollectiveBreakdown::default();
        for t in &feint_trajs {
            add_breakdown(
                &mut feint,
                &rew_collective(t, &window, &sched, &[0], &new, &old, f)?,
            );
        }
        for t in &base_trajs {
            add_breakdown(
                &mut baseline,
                &rew_collective(t, &window, &sched, &[0], &old, &old, f)?,
            );
        }
        let feint = scale_breakdown(&feint, pairs);
        let baseline = scale_breakdown(&baseline, pairs);
        Ok(RolloutComparison {
            feint_value: feint.collective,
            baseline_value: baseline.collective,
            feint,
            baseline,
            policy_samples,
        })
    }

    /// Activation check plus imaginary play for a free agent. The feint
    /// policy proposes one candidate; it is chosen iff its value beats the
    /// regular-only continuation.
    pub fn imaginary_play<R: Rng>(
        &mut self,
        state: &GameState,
        agent: usize,
        regular: &[f64],
        rng: &mut R,
    ) -> Result<(ImaginaryPlayDecision, Option<Plan>)> {
        let mut decision = ImaginaryPlayDecision {
            step: state.step as usize,
            agent,
            activated: false,
            a_target: None,
            candidate_dbms: Vec::new(),
            proposed: None,
            chosen: None,
            feint_value: 0.0,
            baseline_value: 0.0,
            breakdown: CollectiveBreakdown::default(),
        };
        if self.policies[agent].feint.is_none() {
            return Ok((decision, None));
        }
        let Some(target) = self.should_activate(state, agent, regular) else {
            return Ok((decision, None));
        };
        decision.activated = true;
        decision.a_target = Some(
            self.catalog().behaviors[target].reward_sequence()[0]
                .id
                .clone(),
        );
        let cands = self.candidates_for(state, agent, target)?;
        decision.candidate_dbms = cands.iter().map(|c| c.dbm.id.clone()).collect();
        if cands.is_empty() {
            return Ok((decision, None));
        }
        let chooser = self.policies[agent]
            .feint
            .as_ref()
            .expect("feint layer present");
        let k = sample_index(&chooser.distribution(&decision.candidate_dbms), rng);
        let cand = &cands[k];
        decision.proposed = Some(cand.dbm.id.clone());
        let cmp = self.compare_plan(state, agent, &cand.dbm, &cand.plan, rng.gen())?;
        self.counter.imaginary += cmp.policy_samples;
        decision.feint_value = cmp.feint_value;
        decision.baseline_value = cmp.baseline_value;
        decision.breakdown = cmp.feint;
        if cmp.feint_value > cmp.baseline_value {
            decision.chosen = Some(cand.dbm.id.clone());
            return Ok((decision, Some(cand.plan.clone())));
        }
        Ok((decision, None))
    }

    /// One real episode. With `learn` set, regular learners update once at
    /// the end and feint learners once per completed DBM.
    pub fn run_episode(
        &mut self,
        episode: usize,
        seed: u64,
        learn: bool,
        record_events: bool,
    ) -> Result<EpisodeReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64);
        let n = self.scenario.arena.agent_count();
        let length = self.scenario.config.episode_length;
        let mut state = self.scenario.arena.reset(rng.gen());
        let mut report = EpisodeReport {
            episode,
            ..Default::default()
        };
        report.agents = self
            .policies
            .iter()
            .map(|p| AgentEpisode {
                name: p.name.clone(),
                ..Default::default()
            })
            .collect();
        let mut decisions: Vec<Vec<Decision>> = vec![Vec::new(); n];
        let mut rewards: Vec<Vec<f64>> = vec![Vec::with_capacity(length); n];
        let mut cooldown = vec![0usize; n];
        let mut pending: Vec<Option<Pending>> = (0..n).map(|_| None).collect();
        let before = self.counter;

        for step in 0..length {
            let mut commands = Vec::with_capacity(n);
            let mut used = vec![0u8; n];
            for i in 0..n {
                let a = &state.agents[i];
                if a.is_busy() {
                    used[i] += 1;
                    if a.in_dual() {
                        self.counter.feint += 1;
                    } else {
                        self.counter.regular += 1;
                    }
                    commands.push(Command::Continue);
                    continue;
                }
                let (view, mask, p) = self.regular_distribution(&state, i);
                if cooldown[i] == 0 && self.policies[i].feint.is_some() {
                    let (decision, plan) = self.imaginary_play(&state, i, &p, &mut rng)?;
                    if decision.activated {
                        report.agents[i].activations += 1;
                        if let Some(plan) = plan {
                            report.agents[i].commits += 1;
                            add_breakdown(&mut report.agents[i].breakdown, &decision.breakdown);
                            pending[i] = Some(Pending {
                                chosen: decision
                                    .candidate_dbms
                                    .iter()
                                    .position(|id| Some(id) == decision.chosen.as_ref())
                                    .expect("chosen among candidates"),
                                keys: decision.candidate_dbms.clone(),
                            });
                            report.decisions.push(decision);
                            used[i] += 1;
                            self.counter.feint += 1;
                            commands.push(Command::Begin(plan));
                            continue;
                        }
                        cooldown[i] = self.feint_cfg().cooldown_steps;
                        report.decisions.push(decision);
                    }
                }
                let choice = sample_index(&p, &mut rng);
                decisions[i].push(Decision {
                    context: view.context,
                    mask,
                    choice,
                    step,
                });
                used[i] += 1;
                self.counter.regular += 1;
                commands.push(Command::Begin(self.plan_for(i, self.choices[choice])));
            }
            self.counter.violations += used.iter().filter(|u| **u != 1).count() as u64;
            for c in &mut cooldown {
                *c = c.saturating_sub(1);
            }

            let out = self.scenario.arena.step_in_place(&mut state, &commands)?;
            let received = received_by(&out.events, n);
            for i in 0..n {
                rewards[i].push(out.rewards[i] - received[i]);
                report.agents[i].credited += out.rewards[i];
                report.agents[i].received += received[i];
            }
            for e in &out.events {
                if let StepEvent::DBMCompleted {
                    agent,
                    collective_reward,
                    received,
                    ..
                } = e
                {
                    let stats = &mut report.agents[*agent];
                    if *collective_reward > 0.0 {
                        stats.dbm_success += 1;
                    } else {
                        stats.dbm_failure += 1;
                    }
                    let window_reward = collective_reward - received;
                    if let Some(p) = pending[*agent].take() {
                        if learn {
                            if let Some(chooser) = self.policies[*agent].feint.as_mut() {
                                chooser.update(
                                    &p.keys,
                                    p.chosen,
                                    window_reward,
                                    &self.scenario.config.learner,
                                )?;
                                stats.feint_updates += 1;
                            }
                            self.adapter.update(&mut self.weights, window_reward);
                        }
                    }
                }
            }
            if record_events {
                report
                    .events
                    .extend(out.events.into_iter().map(|event| EventRecord {
                        step: step as u64,
                        event,
                    }));
            }
        }

        for i in 0..n {
            report.agents[i].reward = report.agents[i].credited - report.agents[i].received;
            if learn {
                if let RegularPolicy::Learned(ac) = &mut self.policies[i].regular {
                    ac.update(&decisions[i], &rewards[i], &self.scenario.config.learner);
                    report.agents[i].regular_updates += 1;
                }
            }
        }
        report.counter = InferenceCounter {
            regular: self.counter.regular - before.regular,
            feint: self.counter.feint - before.feint,
            imaginary: self.counter.imaginary - before.imaginary,
            violations: self.counter.violations - before.violations,
        };
        Ok(report)
    }

    /// Runs `episodes` learning episodes from `seed`.
    pub fn train(&mut self, episodes: usize, seed: u64, config_hash: &str) -> Result<TrainingLog> {
        let mut log = TrainingLog {
            seed,
            config_hash: config_hash.to_string(),
            rows: Vec::new(),
            wall_seconds: Vec::new(),
        };
        for e in 0..episodes {
            let start = std::time::Instant::now();
            let report = self.run_episode(e, seed, true, false)?;
            log.wall_seconds.push(start.elapsed().as_secs_f64());
            log.push(&report);
        }
        Ok(log)
    }
}

/// One CSV row: one agent in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub agent: usize,
    pub name: String,
    pub reward: f64,
    pub credited: f64,
    pub received: f64,
    pub activations: u64,
    pub commits: u64,
    pub dbm_success: u64,
    pub dbm_failure: u64,
    pub short: f64,
    pub long: f64,
    pub temporal: f64,
    pub spatial: f64,
    pub collective: f64,
}

/// Per-episode results of a run. Wall times are kept apart from the rows so
/// the CSV is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<LogRow>,
    pub wall_seconds: Vec<f64>,
}

impl TrainingLog {
    pub fn push(&mut self, report: &EpisodeReport) {
        for (agent, a) in report.agents.iter().enumerate() {
            self.rows.push(LogRow {
                episode: report.episode,
                agent,
                name: a.name.clone(),
                reward: a.reward,
                credited: a.credited,
                received: a.received,
                activations: a.activations,
                commits: a.commits,
                dbm_success: a.dbm_success,
                dbm_failure: a.dbm_failure,
                short: a.breakdown.short,
                long: a.breakdown.long,
                temporal: a.breakdown.temporal,
                spatial: a.breakdown.spatial_sum,
                collective: a.breakdown.collective,
            });
        }
    }

    pub fn episodes(&self) -> usize {
        self.rows.last().map_or(0, |r| r.episode + 1)
    }

    /// Rewards of one agent, one per episode.
    pub fn rewards(&self, agent: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.agent == agent)
            .map(|r| r.reward)
            .collect()
    }

    /// Mean reward of `agent` over the last `fraction` of episodes.
    pub fn tail_mean(&self, agent: usize, fraction: f64) -> f64 {
        let r = self.rewards(agent);
        let k = ((r.len() as f64 * fraction).ceil() as usize).clamp(1, r.len().max(1));
        r[r.len().saturating_sub(k)..].iter().sum::<f64>() / k as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "episode,agent,name,reward,credited,received,activations,commits,dbm_success,dbm_failure,short,long,temporal,spatial,collective\n",
        );
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.episode,
                r.agent,
                r.name,
                r.reward,
                r.credited,
                r.received,
                r.activations,
                r.commits,
                r.dbm_success,
                r.dbm_failure,
                r.short,
                r.long,
                r.temporal,
                r.spatial,
                r.collective
            );
        }
        s
    }
}

/// One member of a policy pool: a controller plus the feint layer switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPolicy {
    pub id: String,
    pub controller: Controller,
    pub feint: bool,
}

impl PoolPolicy {
    pub fn new(controller: Controller, feint: bool) -> Self {
        let base = serde_json::to_value(controller)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        PoolPolicy {
            id: if feint { format!("{base}+feint") } else { base },
            controller,
            feint,
        }
    }
}

/// The scripted archetypes without and with the feint layer.
pub fn default_pools() -> Vec<(String, Vec<PoolPolicy>)> {
    let archetypes = [
        Controller::Aggressor,
        Controller::Reactive,
        Controller::Patient,
    ];
    vec![
        (
            "no_feint".to_string(),
            archetypes
                .iter()
                .map(|c| PoolPolicy::new(*c, false))
                .collect(),
        ),
        (
            "feint".to_string(),
            archetypes
                .iter()
                .map(|c| PoolPolicy::new(*c, true))
                .collect(),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub name: String,
    pub members: Vec<String>,
    /// Population efficacy against every policy of the evaluation.
    pub efficacy: f64,
    /// Nash mixture of the pool's own sub-game.
    pub mixture: Vec<f64>,
    /// Sum of both players' best-response gains against that mixture in
    /// the game over all evaluated policies.
    pub exploitability: f64,
    /// Sum over members of the part of each payoff row not spanned by the
    /// rows of the members before it.
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub matrix: crate::diversity::PayoffMatrix,
    pub pools: Vec<PoolReport>,
}

/// Mean real reward of `row` against `col` in the 1v1 built from `base`;
/// even episode seeds seat `row` first, odd ones second.
struct Matchups<'a> {
    base: &'a crate::config::ScenarioConfig,
    catalog: Arc<Catalog>,
    templates: Arc<TemplateSet>,
    harnesses: BTreeMap<(String, String), Harness>,
    /// Trained feint layers by policy id.
    choosers: BTreeMap<String, FeintChooser>,
    played: usize,
}

impl Matchups<'_> {
    fn harness(&mut self, first: &PoolPolicy, second: &PoolPolicy) -> Result<&mut Harness> {
        let key = (first.id.clone(), second.id.clone());
        if !self.harnesses.contains_key(&key) {
            let mut cfg = self.base.clone();
            cfg.agents.truncate(2);
            if cfg.agents.len() != 2 {
                return Err(Error::Config(
                    "evaluation needs a two-agent base scenario".into(),
                ));
            }
            cfg.agents[0].controller = first.controller;
            cfg.agents[1].controller = second.controller;
            cfg.agents[0].name = first.id.clone();
            cfg.agents[1].name = second.id.clone();
            cfg.feint_agents = [first.feint, second.feint]
                .iter()
                .enumerate()
                .filter(|(_, f)| **f)
                .map(|(i, _)| i)
                .collect();
            let scenario = Scenario::new(cfg, self.catalog.clone())?;
            let mut h = Harness::with_templates(scenario, self.templates.clone())?;
            for (seat, p) in [first, second].iter().enumerate() {
                if let (true, Some(c)) = (p.feint, self.choosers.get(&p.id)) {
                    h.policies[seat].feint = Some(c.clone());
                }
            }
            self.harnesses.insert(key.clone(), h);
        }
        Ok(self.harnesses.get_mut(&key).expect("inserted above"))
    }

    /// Trains the feint layer of `policy` against each opponent in turn,
    /// `episodes` in total, and keeps it for later matchups.
    fn pretrain(
        &mut self,
        policy: &PoolPolicy,
        opponents: &[PoolPolicy],
        episodes: usize,
        seed: u64,
    ) -> Result<()> {
        let mut chooser = FeintChooser::default();
        for e in 0..episodes {
            let opp = &opponents[e % opponents.len()];
            let h = self.harness(policy, opp)?;
            h.policies[0].feint = Some(chooser);
            h.run_episode(e, seed, true, false)?;
            chooser = h.policies[0].feint.take().expect("feint layer present");
        }
        self.harnesses.clear();
        self.choosers.insert(policy.id.clone(), chooser);
        Ok(())
    }

    fn payoff(&mut self, row: &PoolPolicy, col: &PoolPolicy, seed: u64) -> Result<f64> {
        let (first, second, seat) = if seed % 2 == 0 {
            (row, col, 0)
        } else {
            (col, row, 1)
        };
        self.played += 1;
        let played = self.played;
        let h = self.harness(first, second)?;
        let report = h.run_episode(played, seed, false, false)?;
        Ok(report.agents[seat].reward)
    }
}

/// Builds the payoff matrix over the union of the pools and scores each pool.
/// Feint-enabled members first train their feint layer for `pretrain`
/// episodes against the whole union; evaluation episodes do not learn.
pub fn evaluate_pools(
    base: &crate::config::ScenarioConfig,
    catalog: Arc<Catalog>,
    pools: &[(String, Vec<PoolPolicy>)],
    episodes: usize,
    pretrain: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    use crate::diversity::{
        build_payoff_matrix, exploitability, population_efficacy, response_diversity, Bimatrix,
    };
    use crate::lp::solve_matrix_game;

    let mut union: Vec<PoolPolicy> = Vec::new();
    for (_, members) in pools {
        if members.is_empty() {
            return Err(Error::EmptyPool);
        }
        for m in members {
            if !union.iter().any(|u| u.id == m.id) {
                union.push(m.clone());
            }
        }
    }
    let ids: Vec<String> = union.iter().map(|p| p.id.clone()).collect();
    let templates = Arc::new(precompute_templates(&catalog, JunctionRule::SameId));
    let mut games = Matchups {
        base,
        catalog,
        templates,
        harnesses: BTreeMap::new(),
        choosers: BTreeMap::new(),
        played: 0,
    };
    if pretrain > 0 {
        for p in union.iter().filter(|p| p.feint) {
            games.pretrain(p, &union, pretrain, seed)?;
        }
    }
    let by_id: BTreeMap<&str, &PoolPolicy> = union.iter().map(|p| (p.id.as_str(), p)).collect();
    let matrix = build_payoff_matrix(&ids, &ids, episodes, seed, |r, c, s| {
        games
            .payoff(by_id[r], by_id[c], s)
            .map_err(|e| e.to_string())
    })?;

    let mut reports = Vec::new();
    for (name, members) in pools {
        let member_ids: Vec<String> = members.iter().map(|m| m.id.clone()).collect();
        let rows = matrix.select_rows(&member_ids)?;
        let efficacy = population_efficacy(&rows)?.value;
        let idx: Vec<usize> = member_ids
            .iter()
            .map(|m| ids.iter().position(|i| i == m).expect("member in union"))
            .collect();
        let sub: Vec<Vec<f64>> = idx
            .iter()
            .map(|r| idx.iter().map(|c| matrix.values[*r][*c]).collect())
            .collect();
        let mixture = solve_matrix_game(&sub)?.row_strategy;
        let mut profile = vec![0.0; ids.len()];
        for (k, i) in idx.iter().enumerate() {
            profile[*i] = mixture[k];
        }
        let game = Bimatrix::zero_sum(matrix.values.clone());
        let expl = exploitability(&[profile.clone(), profile], &game)?;
        let mut diversity = 0.0;
        for k in 0..rows.values.len() {
            diversity += response_diversity(&rows.values[k], &rows.values[..k])?;
        }
        reports.push(PoolReport {
            name: name.clone(),
            members: member_ids,
            efficacy,
            mixture,
            exploitability: expl,
            diversity,
        });
    }
    Ok(EvaluationReport {
        matrix,
        pools: reports,
    })
}

use std::collections::BTreeMap;

use feint_core::occupancy::{
    estimate_occupancy, ActionKey, OccupancyMeasure, OccupancyModel, StateKey,
};
use feint_core::reward::{
    rew_collective, rew_long, rew_short, rew_temporal, FDivergence, FeintWindow, Trajectory,
    TrajectoryStep, WeightSchedule, KL_SMOOTHING,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

/// `|a - b|` relative to the larger magnitude, floored at 1 so sums that
/// cancel to nearly zero are compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

struct Case {
    traj: Trajectory,
    window: FeintWindow,
    w: WeightSchedule,
    participants: Vec<usize>,
    samples_new: Vec<(StateKey, ActionKey)>,
    samples_old: Vec<(StateKey, ActionKey)>,
    f: FDivergence,
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..2.0)).collect()
}

fn samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<(StateKey, ActionKey)> {
    (0..n)
        .map(|_| (vec![rng.gen_range(0..4)], rng.gen_range(0..3)))
        .collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let start = rng.gen_range(0..3);
    let t_0 = start + rng.gen_range(0..3);
    let t_f = rng.gen_range(0..5);
    let t_s = t_f + rng.gen_range(0..6);
    let horizon = t_0 + t_s + rng.gen_range(0..8);
    let end = horizon + 1 + rng.gen_range(0..3);
    let agents = rng.gen_range(1..=3);
    let mut traj = Trajectory::new(start);
    for _ in start..end {
        traj.push(TrajectoryStep {
            state: vec![rng.gen_range(0..5)],
            actions: vec![0; agents],
            rewards: (0..agents).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        })
        .unwrap();
    }
    let window = FeintWindow {
        t_0,
        t_f,
        t_s,
        horizon,
    };
    let lambda_short = rng.gen_range(0.0..1.0);
    let w = WeightSchedule {
        alpha_feint: weights(rng, t_f + 1),
        alpha_attack: weights(rng, t_s - t_f),
        beta: weights(rng, horizon - t_0 - t_s),
        lambda_short,
        lambda_long: 1.0 - lambda_short,
        mu1: rng.gen_range(0.0..1.0),
        mu2: rng.gen_range(0.0..1.0),
    };
    let participants: Vec<usize> = (0..agents).filter(|_| rng.gen_bool(0.7)).collect();
    let f = [
        FDivergence::Kl,
        FDivergence::TotalVariation,
        FDivergence::SquaredHellinger,
    ][rng.gen_range(0..3)];
    let (n_new, n_old) = (rng.gen_range(1..40), rng.gen_range(1..40));
    Case {
        samples_new: samples(rng, n_new),
        samples_old: samples(rng, n_old),
        traj,
        window,
        w,
        participants,
        f,
    }
}

/// Walks every absolute step once and picks the weight by the region it
/// falls in.
fn oracle_temporal(c: &Case, agent: usize) -> (f64, f64, f64) {
    let FeintWindow {
        t_0,
        t_f,
        t_s,
        horizon,
    } = c.window;
    let (mut short, mut long) = (0.0, 0.0);
    for (k, step) in c.traj.steps.iter().enumerate() {
        let t = c.traj.start + k;
        let r = step.rewards[agent];
        if t >= t_0 && t <= t_0 + t_f {
            short += c.w.alpha_feint[t - t_0] * r;
        } else if t > t_0 + t_f && t <= t_0 + t_s {
            short += c.w.alpha_attack[t - t_0 - t_f - 1] * r;
        } else if t > t_0 + t_s && t <= horizon {
            long += c.w.beta[t - t_0 - t_s - 1] * r;
        }
    }
    let long = if horizon > t_0 + t_s {
        long / horizon as f64
    } else {
        0.0
    };
    (
        short,
        long,
        c.w.lambda_short * short + c.w.lambda_long * long,
    )
}

/// Conditional action frequencies of `state` straight from the samples.
fn conditional(samples: &[(StateKey, ActionKey)], state: &StateKey) -> Option<[f64; 3]> {
    let mut counts = [0.0; 3];
    for (s, a) in samples {
        if s == state {
            counts[*a as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    (total > 0.0).then(|| counts.map(|c| c / total))
}

/// The three divergences written out over the actions either side uses.
fn oracle_divergence(f: FDivergence, p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let used: Vec<usize> = (0..3).filter(|k| p[*k] > 0.0 || q[*k] > 0.0).collect();
    match f {
        FDivergence::Kl => {
            let z = 1.0 + used.len() as f64 * KL_SMOOTHING;
            used.iter()
                .map(|k| {
                    let (a, b) = ((p[*k] + KL_SMOOTHING) / z, (q[*k] + KL_SMOOTHING) / z);
                    a * (a / b).ln()
                })
                .sum::<f64>()
                .max(0.0)
        }
        FDivergence::TotalVariation => {
            used.iter().map(|k| (p[*k] - q[*k]).abs()).sum::<f64>() / 2.0
        }
        FDivergence::SquaredHellinger => {
            used.iter()
                .map(|k| (p[*k].sqrt() - q[*k].sqrt()).powi(2))
                .sum::<f64>()
                / 2.0
        }
    }
}

fn oracle_collective(c: &Case) -> f64 {
    let temporal: f64 = c
        .participants
        .iter()
        .map(|a| oracle_temporal(c, *a).2)
        .sum();
    let mut spatial = 0.0;
    if c.w.mu2 != 0.0 {
        for (k, step) in c.traj.steps.iter().enumerate() {
            let t = c.traj.start + k;
            if t < c.window.t_0 || t > c.window.horizon {
                continue;
            }
            if let (Some(p), Some(q)) = (
                conditional(&c.samples_new, &step.state),
                conditional(&c.samples_old, &step.state),
            ) {
                spatial += oracle_divergence(c.f, &p, &q);
            }
        }
    }
    c.w.mu1 * temporal + c.w.mu2 * spatial
}

fn worked_fixtures() -> Result<(), String> {
    let mut traj = Trajectory::new(0);
    for k in 0..9 {
        let r = if k <= 3 { 1.0 } else { 2.0 };
        traj.push(TrajectoryStep {
            state: vec![0],
            actions: vec![0],
            rewards: vec![r],
        })
        .unwrap();
    }
    let window = FeintWindow {
        t_0: 0,
        t_f: 1,
        t_s: 3,
        horizon: 8,
    };
    let w = WeightSchedule {
        alpha_feint: vec![0.1; 2],
        alpha_attack: vec![1.0; 2],
        beta: vec![1.0; 5],
        lambda_short: 0.67,
        lambda_long: 0.33,
        mu1: 0.5,
        mu2: 0.5,
    };
    let t = rew_temporal(&traj, &window, &w, 0).map_err(|e| e.to_string())?;
    for (name, got, want) in [
        ("short", t.short, 2.2),
        ("long", t.long, 1.25),
        ("temporal", t.temporal, 1.8865),
    ] {
        if (got - want).abs() > 1e-12 {
            return Err(format!("{name} = {got}, expected {want}"));
        }
    }
    Ok(())
}

pub fn reward_fixtures() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cases = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c = random_case(&mut rng);
        let agents = c.traj.steps[0].rewards.len();
        for a in 0..agents {
            let (short, long, temporal) = oracle_temporal(&c, a);
            worst = worst.max(rel_err(
                rew_short(&c.traj, &c.window, &c.w, a).unwrap(),
                short,
            ));
            worst = worst.max(rel_err(
                rew_long(&c.traj, &c.window, &c.w, a).unwrap(),
                long,
            ));
            worst = worst.max(rel_err(
                rew_temporal(&c.traj, &c.window, &c.w, a).unwrap().temporal,
                temporal,
            ));
        }
        let new = OccupancyMeasure::from_samples(c.samples_new.clone()).unwrap();
        let old = OccupancyMeasure::from_samples(c.samples_old.clone()).unwrap();
        let got =
            rew_collective(&c.traj, &c.window, &c.w, &c.participants, &new, &old, c.f).unwrap();
        worst = worst.max(rel_err(got.collective, oracle_collective(&c)));
    }
    let fixtures = worked_fixtures();
    Outcome::new(
        worst <= 1e-12 && fixtures.is_ok(),
        format!(
            "{cases} random cases, worst relative error {worst:.2e}; worked fixtures 2.2 / 1.25 / 1.8865 {}",
            match &fixtures {
                Ok(()) => "reproduced".to_string(),
                Err(e) => format!("wrong: {e}"),
            }
        ),
    )
}

/// Three states; action 1 moves on, action 0 stays put except from state 2,
/// which falls back to 0 with probability 0.4.
struct Toy;

const MOVE: [f64; 3] = [0.6, 0.35, 0.5];

impl OccupancyModel for Toy {
    type State = usize;

    fn initial(&self, rng: &mut ChaCha8Rng) -> usize {
        usize::from(rng.gen_bool(0.3))
    }

    fn act(&self, s: &usize, rng: &mut ChaCha8Rng) -> ActionKey {
        u32::from(rng.gen_bool(MOVE[*s]))
    }

    fn transition(&self, s: &usize, a: ActionKey, rng: &mut ChaCha8Rng) -> usize {
        match (a, *s) {
            (1, s) => (s + 1) % 3,
            (_, 2) if rng.gen_bool(0.4) => 0,
            (_, s) => s,
        }
    }

    fn state_key(&self, s: &usize) -> StateKey {
        vec![*s as i32]
    }
}

/// Exact finite-horizon occupancy by pushing the state distribution forward.
fn toy_exact(horizon: usize) -> BTreeMap<(usize, u32), f64> {
    let mut dist = [0.7, 0.3, 0.0];
    let mut occ = BTreeMap::new();
    for _ in 0..horizon {
        let mut next = [0.0; 3];
        for s in 0..3 {
            let go = dist[s] * MOVE[s];
            let stay = dist[s] - go;
            *occ.entry((s, 0)).or_insert(0.0) += stay / horizon as f64;
            *occ.entry((s, 1)).or_insert(0.0) += go / horizon as f64;
            next[(s + 1) % 3] += go;
            if s == 2 {
                next[0] += 0.4 * stay;
                next[2] += 0.6 * stay;
            } else {
                next[s] += stay;
            }
        }
        dist = next;
    }
    occ
}

fn l1(m: &OccupancyMeasure, exact: &BTreeMap<(usize, u32), f64>) -> f64 {
    exact
        .iter()
        .map(|((s, a), p)| (m.prob(&vec![*s as i32], *a) - p).abs())
        .sum()
}

pub fn divergence_and_occupancy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut problems = Vec::new();
    let fs = [
        FDivergence::Kl,
        FDivergence::TotalVariation,
        FDivergence::SquaredHellinger,
    ];
    let mut min_positive = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(2..6);
        let draw = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            let z: f64 = raw.iter().sum();
            if z == 0.0 {
                vec![1.0 / n as f64; n]
            } else {
                raw.iter().map(|x| x / z).collect()
            }
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let gap: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        for f in fs {
            let d_pq = f.divergence(&p, &q).unwrap();
            let d_pp = f.divergence(&p, &p).unwrap();
            if d_pq < 0.0 || d_pp.abs() > 1e-12 {
                problems.push(format!("{f:?}: D(p,q) = {d_pq}, D(p,p) = {d_pp}"));
            }
            if gap >= 1e-3 {
                min_positive = min_positive.min(d_pq);
                if d_pq <= 0.0 {
                    problems.push(format!("{f:?}: zero divergence for distinct p, q"));
                }
            }
        }
    }

    let (horizon, rollouts) = (10, 4000);
    let exact = toy_exact(horizon);
    let m = estimate_occupancy(&Toy, horizon, rollouts, 7).unwrap();
    let mut worst_sigmas: f64 = 0.0;
    for ((s, a), p) in &exact {
        // a rollout's visit fraction lies in [0, 1] with mean p, so its
        // variance is at most p(1 - p)
        let sigma = (p * (1.0 - p) / rollouts as f64).sqrt();
        let got = m.prob(&vec![*s as i32], *a);
        worst_sigmas = worst_sigmas.max((got - p).abs() / sigma);
    }
    if worst_sigmas > 3.0 {
        problems.push(format!(
            "occupancy entry {worst_sigmas:.2} sigma from exact"
        ));
    }

    let seeds = 400;
    let mean_l1 = |n: usize| {
        (0..seeds)
            .map(|s| {
                l1(
                    &estimate_occupancy(&Toy, 8, n, 1000 + s).unwrap(),
                    &toy_exact(8),
                )
            })
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = mean_l1(200) / mean_l1(100);
    if !(0.25..=0.75).contains(&ratio) {
        problems.push(format!("L1 ratio {ratio:.3} outside the 0.5 ± 50% band"));
    }
    Outcome::new(
        problems.is_empty(),
        format!(
            "D_f checks on 1000 pairs x 3 divergences (smallest D for distinct pairs {min_positive:.2e}); occupancy worst {worst_sigmas:.2} sigma; L1 ratio on doubling {ratio:.3}{}",
            if problems.is_empty() { String::new() } else { format!("; problems: {:?}", &problems[..problems.len().min(5)]) }
        ),
    )
}

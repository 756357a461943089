use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use feint_core::catalog::{continuity_gaps, Catalog, SequencePart};
use feint_core::compose::{compose_dbms, junction_gap, DualBehaviorModel};
use feint_core::templates::{
    generate_prefix_palindrome, generate_splice, generate_suffix_palindrome, precompute_templates,
    FeintBehavior, JunctionRule, TemplateSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gen::{action_ids, random_catalog};
use crate::Outcome;

type TemplateKey = (
    String,
    String,
    String,
    usize,
    usize,
    Vec<String>,
    Vec<String>,
);

/// Every pair of catalog slots carrying the same action id.
fn oracle_templates(cat: &Catalog) -> BTreeSet<TemplateKey> {
    let mut out = BTreeSet::new();
    for bi in &cat.behaviors {
        for bj in &cat.behaviors {
            for ki in 0..bi.len() {
                for kj in 0..bj.len() {
                    if bi.actions[ki].id == bj.actions[kj].id {
                        let prefix = bi.actions[..ki].iter().map(|a| a.id.clone()).collect();
                        let suffix = bj.actions[kj + 1..].iter().map(|a| a.id.clone()).collect();
                        out.insert((
                            bj.actions[kj].id.clone(),
                            bi.id.clone(),
                            bj.id.clone(),
                            ki,
                            kj,
                            prefix,
                            suffix,
                        ));
                    }
                }
            }
        }
    }
    out
}

fn template_keys(set: &TemplateSet) -> BTreeSet<TemplateKey> {
    set.templates
        .iter()
        .map(|t| {
            (
                t.junction.clone(),
                t.behavior_i.clone(),
                t.behavior_j.clone(),
                t.junction_pos_i,
                t.junction_pos_j,
                t.avail_prefix.clone(),
                t.avail_suffix.clone(),
            )
        })
        .collect()
}

/// Source, target, start, both junction positions, cut, and the full id
/// sequence of the model.
type ModelKey = (String, String, usize, usize, usize, usize, Vec<String>);

/// Walks every `(i, j, t, k_i, k_j)` directly: `a_t` sits at `t < k_i` inside
/// the stretch-out of `i`, the junction ids agree, the target follows the
/// junction in `j`, and all of `j`'s non-empty reward sequence lies after
/// the junction. Each cut of the start-to-junction run is one model.
fn oracle_models(cat: &Catalog, a_t: &str, a_target: &str) -> BTreeSet<ModelKey> {
    let mut out = BTreeSet::new();
    for bi in &cat.behaviors {
        for bj in &cat.behaviors {
            if bj.reward_end == bj.stretch_end {
                continue;
            }
            for ki in 1..=bi.stretch_end.min(bi.len() - 1) {
                for kj in 0..bj.stretch_end {
                    if bi.actions[ki].id != bj.actions[kj].id
                        || !bj.actions[kj + 1..].iter().any(|a| a.id == a_target)
                    {
                        continue;
                    }
                    for t in 0..ki {
                        if bi.actions[t].id != a_t {
                            continue;
                        }
                        for cut in 1..=ki - t {
                            let mut ids: Vec<String> = bi.actions[t..t + cut]
                                .iter()
                                .map(|a| a.id.clone())
                                .collect();
                            ids.extend(
                                bi.actions[t..t + cut]
                                    .iter()
                                    .rev()
                                    .map(|a| format!("{}~rev", a.id)),
                            );
                            ids.extend(bi.actions[t..ki].iter().map(|a| a.id.clone()));
                            ids.extend(bj.actions[kj..].iter().map(|a| a.id.clone()));
                            out.insert((bi.id.clone(), bj.id.clone(), t, ki, kj, cut, ids));
                        }
                    }
                }
            }
        }
    }
    out
}

fn model_key(d: &DualBehaviorModel) -> ModelKey {
    let cut = d.t_f / 2;
    let ids = d.actions().map(|a| a.id.clone()).collect();
    (
        d.source_behavior_id.clone(),
        d.target_behavior_id.clone(),
        d.start_pos,
        d.junction_pos_i,
        d.junction_pos_j,
        cut,
        ids,
    )
}

pub fn oracle_equivalence() -> Outcome {
    let catalogs = 25;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut library = Duration::ZERO;
    let mut mismatches = 0;
    let mut templates = 0;
    let mut models = 0;
    let mut queries = 0;
    for _ in 0..catalogs {
        let cat = random_catalog(&mut rng);
        assert!(
            cat.behaviors.len() <= crate::gen::MAX_BEHAVIORS
                && cat
                    .behaviors
                    .iter()
                    .all(|b| b.len() <= crate::gen::MAX_ACTIONS)
        );
        let start = Instant::now();
        let set = precompute_templates(&cat, JunctionRule::SameId);
        library += start.elapsed();
        if template_keys(&set) != oracle_templates(&cat) {
            mismatches += 1;
        }
        templates += set.len();
        let ids = action_ids(&cat);
        for a_t in &ids {
            for a_target in &ids {
                let start = Instant::now();
                let got = compose_dbms(a_t, a_target, &set, &cat).expect("known ids");
                library += start.elapsed();
                queries += 1;
                models += got.len();
                let got: BTreeSet<ModelKey> = got.iter().map(model_key).collect();
                if got != oracle_models(&cat, a_t, a_target) {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = library.as_secs_f64();
    Outcome::new(
        mismatches == 0 && secs < 1.0,
        format!("{catalogs} catalogs, {templates} templates, {queries} queries, {models} models, {mismatches} mismatches, library time {secs:.3}s"),
    )
}

#[derive(Default)]
struct Tally {
    palindromes: usize,
    splices: usize,
    models: usize,
    violations: usize,
    examples: Vec<String>,
}

impl Tally {
    fn fail(&mut self, what: String) {
        self.violations += 1;
        if self.examples.len() < 5 {
            self.examples.push(what);
        }
    }

    /// No action that came from a reward sequence, judged by provenance.
    fn check_leak(&mut self, f: &FeintBehavior, cat: &Catalog, label: &str) {
        for p in &f.provenance {
            let b = cat
                .behavior(&p.behavior)
                .expect("provenance names a behavior");
            if b.part_of(p.index) == SequencePart::Reward {
                self.fail(format!(
                    "{label}: reward action {} of {}",
                    b.actions[p.index].id, b.id
                ));
                return;
            }
        }
    }

    fn check_palindrome(&mut self, f: &FeintBehavior, cat: &Catalog, label: &str) {
        self.palindromes += 1;
        let traj = f.trajectory();
        let n = traj.len() - 1;
        for t in 0..=n {
            let d = cat.distance(traj[t], traj[n - t]).expect("same joints");
            if d != 0.0 {
                self.fail(format!("{label}: s_{t} vs s_{} differ by {d}", n - t));
                return;
            }
        }
        if !cat.similar(traj[0], traj[n]) {
            self.fail(format!("{label}: start and end differ"));
        }
        if !continuity_gaps(&f.actions, cat.epsilon_state, cat.footing_penalty()).is_empty() {
            self.fail(format!("{label}: continuity gap"));
        }
        self.check_leak(f, cat, label);
    }
}

pub fn palindrome_properties() -> Outcome {
    let target = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut tally = Tally::default();
    let mut catalogs = 0;
    while tally.palindromes < target
        || tally.palindromes - tally.models < target / 2
        || tally.splices < target / 2
    {
        let cat = random_catalog(&mut rng);
        catalogs += 1;
        for b in &cat.behaviors {
            for cut in 1..=b.stretch_end {
                let f = generate_prefix_palindrome(b, cut).expect("cut inside stretch-out");
                tally.check_palindrome(&f, &cat, &format!("prefix {} c{cut}", b.id));
            }
            for cut in b.reward_end..b.len() {
                let f = generate_suffix_palindrome(b, cut).expect("cut inside retract");
                tally.check_palindrome(&f, &cat, &format!("suffix {} c{cut}", b.id));
            }
        }
        // similar-state splices: continuity and leakage only, they are not mirrored
        for bi in &cat.behaviors {
            for bj in &cat.behaviors {
                for ii in 1..=bi.len() {
                    for jj in 0..bj.len() {
                        if let Ok(f) = generate_splice(bi, bj, (ii, jj), &cat) {
                            tally.splices += 1;
                            if !continuity_gaps(
                                &f.actions,
                                cat.epsilon_state,
                                cat.footing_penalty(),
                            )
                            .is_empty()
                            {
                                tally.fail(format!(
                                    "splice {}@{ii}+{}@{jj}: continuity gap",
                                    bi.id, bj.id
                                ));
                            }
                            tally.check_leak(&f, &cat, "splice");
                        }
                    }
                }
            }
        }
        let set = precompute_templates(&cat, JunctionRule::SameId);
        let ids = action_ids(&cat);
        for a_t in &ids {
            for a_target in &ids {
                for d in compose_dbms(a_t, a_target, &set, &cat).expect("known ids") {
                    tally.models += 1;
                    tally.check_palindrome(&d.feint, &cat, &d.id);
                    if junction_gap(&d, &cat) > cat.epsilon_state {
                        tally.fail(format!("{}: junction gap", d.id));
                    }
                    let all: Vec<_> = d.actions().cloned().collect();
                    if !continuity_gaps(&all, cat.epsilon_state, cat.footing_penalty()).is_empty() {
                        tally.fail(format!("{}: model continuity gap", d.id));
                    }
                }
            }
        }
    }
    let v = tally.violations;
    Outcome::new(
        v == 0,
        format!(
            "{} palindromic feints ({} of them inside composed models) and {} splices from {catalogs} catalogs, {v} violations{}",
            tally.palindromes,
            tally.models,
            tally.splices,
            if v == 0 { String::new() } else { format!(": {:?}", tally.examples) }
        ),
    )
}

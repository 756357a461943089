//! Random catalogs: behaviors are walks over a small posture graph, and an
//! action id names one edge of that graph, so shared ids always agree on
//! their states and behaviors overlap often enough to form templates.

use feint_core::catalog::{Behavior, Catalog, Direction, Footing, PhysicalState, UnitAction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MAX_BEHAVIORS: usize = 6;
pub const MAX_ACTIONS: usize = 8;

fn posture(node: usize) -> PhysicalState {
    let v = 0.1 * node as f64;
    PhysicalState {
        joints: vec![[v, 0.0, 0.0], [0.0, -v, 0.5 * v]],
        footing: Footing::Neutral,
    }
}

fn edge(from: usize, to: usize) -> UnitAction {
    UnitAction {
        id: format!("m{from}_{to}"),
        start_state: posture(from),
        end_state: posture(to),
    }
}

pub fn random_catalog(rng: &mut ChaCha8Rng) -> Catalog {
    let nodes = rng.gen_range(3..=5);
    let count = rng.gen_range(2..=MAX_BEHAVIORS);
    let mut behaviors = Vec::with_capacity(count);
    for b in 0..count {
        let len = rng.gen_range(2..=MAX_ACTIONS);
        let mut at = 0;
        let mut actions = Vec::with_capacity(len);
        for _ in 0..len {
            let mut next = rng.gen_range(0..nodes - 1);
            if next >= at {
                next += 1;
            }
            actions.push(edge(at, next));
            at = next;
        }
        let stretch_end = rng.gen_range(1..len);
        // an empty reward sequence now and then
        let reward_end = if rng.gen_bool(0.1) {
            stretch_end
        } else {
            rng.gen_range(stretch_end + 1..=len)
        };
        behaviors.push(Behavior {
            id: format!("b{b}"),
            name: format!("behavior {b}"),
            reward_value: rng.gen_range(0.5..5.0),
            stretch_end,
            reward_end,
            actions,
            direction: Direction::ALL[rng.gen_range(0..3)],
        });
    }
    Catalog::new(0.05, 2, behaviors).expect("generated catalog is valid")
}

/// Every distinct action id of a catalog, sorted.
pub fn action_ids(cat: &Catalog) -> Vec<String> {
    let mut ids: Vec<String> = cat
        .behaviors
        .iter()
        .flat_map(|b| b.actions.iter().map(|a| a.id.clone()))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

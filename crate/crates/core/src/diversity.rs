//! Payoff matrices over policy pools, response diversity, exploitability and
//! population efficacy.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_matrix_game, GameSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn check_ids(ids: &[String]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::EmptyPool);
    }
    let unique: BTreeSet<_> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidProfile("duplicate policy id in pool".into()));
    }
    Ok(())
}

impl PayoffMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_ids(&rows)?;
        check_ids(&cols)?;
        if values.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                found: values.len(),
                context: "payoff rows".into(),
            });
        }
        for r in &values {
            if r.len() != cols.len() {
                return Err(Error::Dimension {
                    expected: cols.len(),
                    found: r.len(),
                    context: "payoff columns".into(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver("payoff matrix has non-finite entries".into()));
            }
        }
        Ok(PayoffMatrix { rows, cols, values })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (id, r) in self.rows.iter().zip(&self.values) {
            out.push_str(id);
            for v in r {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, ids: &[String]) -> Result<PayoffMatrix> {
        let mut values = Vec::with_capacity(ids.len());
        for id in ids {
            let k = self
                .rows
                .iter()
                .position(|r| r == id)
                .ok_or_else(|| Error::InvalidProfile(format!("unknown policy '{id}'")))?;
            values.push(self.values[k].clone());
        }
        PayoffMatrix::new(ids.to_vec(), self.cols.clone(), values)
    }
}

/// Mean of `episodes` evaluator calls per cell. Cell `(k, j)` draws its
/// episode seeds from stream `k·N + j` of `seed`.
pub fn build_payoff_matrix<F>(
    rows: &[String],
    cols: &[String],
    episodes: usize,
    seed: u64,
    mut evaluator: F,
) -> Result<PayoffMatrix>
where
    F: FnMut(&str, &str, u64) -> std::result::Result<f64, String>,
{
    check_ids(rows)?;
    check_ids(cols)?;
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let mut values = vec![vec![0.0; cols.len()]; rows.len()];
    for (k, row) in rows.iter().enumerate() {
        for (j, col) in cols.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((k * cols.len() + j) as u64);
            let mut sum = 0.0;
            for _ in 0..episodes {
                let v = evaluator(row, col, rng.next_u64()).map_err(|message| {
                    Error::EvaluationFailure {
                        row: row.clone(),
                        col: col.clone(),
                        message,
                    }
                })?;
                if !v.is_finite() {
                    return Err(Error::EvaluationFailure {
                        row: row.clone(),
                        col: col.clone(),
                        message: format!("non-finite payoff {v}"),
                    });
                }
                sum += v;
            }
            values[k][j] = sum / episodes as f64;
        }
    }
    PayoffMatrix::new(rows.to_vec(), cols.to_vec(), values)
}

/// Euclidean norm of the part of `a_new` orthogonal to the row space of
/// `rows`. Zero iff `a_new` is a linear combination of the rows.
pub fn response_diversity(a_new: &[f64], rows: &[Vec<f64>]) -> Result<f64> {
    let n = a_new.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if r.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: r.len(),
                context: "payoff row".into(),
            });
        }
        let scale = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = r.clone();
        // two passes of modified Gram-Schmidt keep the basis orthogonal
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * scale.max(1.0) {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut res = a_new.to_vec();
    for _ in 0..2 {
        for b in &basis {
            let d = dot(&res, b);
            for (x, y) in res.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
    let norm = dot(&res, &res).sqrt();
    let scale = dot(a_new, a_new).sqrt().max(1.0);
    Ok(if norm <= 1e-12 * scale { 0.0 } else { norm })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Population efficacy: the value of the matrix game where the pool mixes
/// over rows and the opponent picks the worst column mixture.
pub fn population_efficacy(matrix: &PayoffMatrix) -> Result<GameSolution> {
    if matrix.rows.is_empty() || matrix.cols.is_empty() {
        return Err(Error::EmptyPool);
    }
    solve_matrix_game(&matrix.values)
}

/// Finite normal-form game with any number of players.
pub trait FiniteGame {
    fn strategy_counts(&self) -> Vec<usize>;
    /// Payoff to every player for one pure profile.
    fn payoffs(&self, profile: &[usize]) -> Vec<f64>;
}

/// Two-player game given by the row player's and column player's matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Bimatrix {
    pub row: Vec<Vec<f64>>,
    pub col: Vec<Vec<f64>>,
}

impl Bimatrix {
    pub fn zero_sum(a: Vec<Vec<f64>>) -> Self {
        let neg = a.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        Bimatrix { row: a, col: neg }
    }
}

impl FiniteGame for Bimatrix {
    fn strategy_counts(&self) -> Vec<usize> {
        vec![self.row.len(), self.row.first().map_or(0, Vec::len)]
    }

    fn payoffs(&self, p: &[usize]) -> Vec<f64> {
        vec![self.row[p[0]][p[1]], self.col[p[0]][p[1]]]
    }
}

/// Pure profiles beyond this count are refused.
pub const MAX_PROFILES: usize = 10_000_000;

fn expected_payoffs<G: FiniteGame>(game: &G, counts: &[usize], profile: &[Vec<f64>]) -> Vec<f64> {
    let players = counts.len();
    let mut total = vec![0.0; players];
    let mut idx = vec![0usize; players];
    loop {
        let w: f64 = idx.iter().zip(profile).map(|(s, p)| p[*s]).product();
        if w != 0.0 {
            for (t, v) in total.iter_mut().zip(game.payoffs(&idx)) {
                *t += w * v;
            }
        }
        let mut k = 0;
        loop {
            if k == players {
                return total;
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `Σ_i (max_{s_i} Rew_i(s_i, π_{-i}) − Rew_i(π))` for a mixed profile.
pub fn exploitability<G: FiniteGame>(profile: &[Vec<f64>], game: &G) -> Result<f64> {
    let counts = game.strategy_counts();
    if counts.iter().any(|c| *c == 0) {
        return Err(Error::EmptyPool);
    }
    let size = counts.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c));
    if size.map_or(true, |s| s > MAX_PROFILES) {
        return Err(Error::UnboundedGame);
    }
    if profile.len() != counts.len() {
        return Err(Error::Dimension {
            expected: counts.len(),
            found: profile.len(),
            context: "profile players".into(),
        });
    }
    for (p, c) in profile.iter().zip(&counts) {
        if p.len() != *c {
            return Err(Error::Dimension {
                expected: *c,
                found: p.len(),
                context: "mixed strategy".into(),
            });
        }
        let s: f64 = p.iter().sum();
        if p.iter().any(|x| !(*x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProfile(
                "mixed strategy must be a distribution".into(),
            ));
        }
    }
    let current = expected_payoffs(game, &counts, profile);
    let mut total = 0.0;
    for i in 0..counts.len() {
        let mut best = f64::NEG_INFINITY;
        for s in 0..counts[i] {
            let mut dev = profile.to_vec();
            dev[i] = vec![0.0; counts[i]];
            dev[i][s] = 1.0;
            best = best.max(expected_payoffs(game, &counts, &dev)[i]);
        }
        total += (best - current[i]).max(0.0);
    }
    Ok(total)
}

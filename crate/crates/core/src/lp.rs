//! Zero-sum matrix games solved exactly with a dense simplex (Bland's rule).

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    /// Game value for the row player (maximizer).
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
}

/// Solves `max_x min_y xᵀ A y` over the two simplices.
pub fn solve_matrix_game(a: &[Vec<f64>]) -> Result<GameSolution> {
    let m = a.len();
    if m == 0 || a[0].is_empty() {
        return Err(Error::EmptyPool);
    }
    let n = a[0].len();
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: a.iter().map(Vec::len).find(|l| *l != n).unwrap_or(0),
            context: "payoff rows".into(),
        });
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Solver("payoff matrix has non-finite entries".into()));
    }
    let min = a.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // max Σy s.t. (A + shift) y ≤ 1, y ≥ 0; tableau columns: y (n), slacks (m), rhs
    let width = n + m + 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        for j in 0..n {
            tab[i][j] = a[i][j] + shift;
        }
        tab[i][n + i] = 1.0;
        tab[i][width - 1] = 1.0;
    }
    for j in 0..n {
        tab[m][j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_iter = 50 * (n + m) * (n + m) + 1000;
    let mut iter = 0;
    loop {
        iter += 1;
        if iter > max_iter {
            return Err(Error::Solver("simplex did not terminate".into()));
        }
        let Some(enter) = (0..n + m).find(|&j| tab[m][j] < -PIVOT_TOL) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let coef = tab[i][enter];
            if coef > PIVOT_TOL {
                let ratio = tab[i][width - 1] / coef;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - PIVOT_TOL
                            || (ratio <= best + PIVOT_TOL && basis[i] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // the shifted matrix is positive, so the problem is bounded
        let r = leave.ok_or_else(|| Error::Solver("unbounded simplex step".into()))?;
        let p = tab[r][enter];
        for v in tab[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = tab[r].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[enter];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        basis[r] = enter;
    }

    let total = tab[m][width - 1];
    if total <= 0.0 {
        return Err(Error::Solver("degenerate game".into()));
    }
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = tab[i][width - 1].max(0.0);
        }
    }
    let x: Vec<f64> = (0..m).map(|i| tab[m][n + i].max(0.0)).collect();
    let normalize = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|e| e / s).collect::<Vec<_>>()
    };
    Ok(GameSolution {
        value: 1.0 / total - shift,
        row_strategy: normalize(x),
        col_strategy: normalize(y),
    })
}

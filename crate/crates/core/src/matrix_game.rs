//! Exact solution of finite two-player zero-sum matrix games.
//!
//! The payoff is shifted so every entry is at least one, which makes the
//! column player's program `max 1ᵀy s.t. By ≤ 1, y ≥ 0` feasible at the
//! origin and bounded. A dense primal simplex with Bland's rule solves it;
//! the row strategy is read off the slack reduced costs of the final tableau.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

/// Payoff matrix; rows are the maximizer's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    payoff: DMatrix<f64>,
}

impl MatrixGame {
    pub fn new(payoff: DMatrix<f64>) -> Result<Self> {
        if payoff.nrows() == 0 || payoff.ncols() == 0 {
            return Err(Error::ParameterOutOfRange("matrix game needs at least one row and column".into()));
        }
        if payoff.iter().any(|x| !x.is_finite()) {
            return Err(Error::ParameterOutOfRange("matrix game has a non-finite payoff".into()));
        }
        Ok(MatrixGame { payoff })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ParameterOutOfRange("ragged payoff rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn payoff(&self) -> &DMatrix<f64> {
        &self.payoff
    }

    pub fn rows(&self) -> usize {
        self.payoff.nrows()
    }

    pub fn cols(&self) -> usize {
        self.payoff.ncols()
    }

    /// `xᵀ A y`.
    pub fn expected_payoff(&self, row: &[f64], col: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in col.iter().enumerate() {
                acc += x * self.payoff[(i, j)] * y;
            }
        }
        acc
    }

    /// Worst payoff the row mixture can receive against any pure column.
    pub fn row_guarantee(&self, row: &[f64]) -> f64 {
        (0..self.cols()).map(|j| self.column_payoff(row, j)).fold(f64::INFINITY, f64::min)
    }

    /// Best payoff any pure row can extract against the column mixture.
    pub fn col_concession(&self, col: &[f64]) -> f64 {
        (0..self.rows())
            .map(|i| col.iter().enumerate().map(|(j, &y)| self.payoff[(i, j)] * y).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn column_payoff(&self, row: &[f64], j: usize) -> f64 {
        row.iter().enumerate().map(|(i, &x)| x * self.payoff[(i, j)]).sum()
    }
}

/// Optimal mixed strategies and the game value.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    /// Value certified by the maximizer's program (from the dual prices).
    pub row_lp_value: f64,
    /// Value certified by the minimizer's program (from the primal basis).
    pub col_lp_value: f64,
}

impl MatrixGameSolution {
    /// Column concession minus row guarantee; zero at an exact equilibrium.
    pub fn security_gap(&self, game: &MatrixGame) -> f64 {
        game.col_concession(&self.col_strategy) - game.row_guarantee(&self.row_strategy)
    }
}

/// Solve `max_x min_y xᵀAy` over mixed strategies.
pub fn solve_matrix_game(game: &MatrixGame) -> Result<MatrixGameSolution> {
    let a = &game.payoff;
    let (m, n) = (a.nrows(), a.ncols());

    if m == 1 || n == 1 {
        return Ok(solve_degenerate(game));
    }

    let shift = 1.0 - a.min();
    let width = n + m + 1;
    let rhs = width - 1;
    // Rows 0..m are constraints, row m is the objective row (stores -c).
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + j] = a[(i, j)] + shift;
        }
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = 1.0;
    }
    for j in 0..n {
        t[m * width + j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let cap = 50 * (m + n);
    let mut pivots = 0;
    loop {
        let entering = (0..n + m).find(|&j| t[m * width + j] < -PIVOT_EPS);
        let Some(col) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[i * width + col];
            if coef > PIVOT_EPS {
                let ratio = t[i * width + rhs] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - PIVOT_EPS
                            || ((ratio - best).abs() <= PIVOT_EPS && basis[i] < basis[r])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        // The feasible region is bounded, so a blocking row always exists.
        let Some((row, _)) = leave else { return Err(Error::NumericalFailure { cap }) };
        pivot(&mut t, width, m, row, col);
        basis[row] = col;
        pivots += 1;
        if pivots > cap {
            return Err(Error::NumericalFailure { cap });
        }
    }

    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * width + rhs].max(0.0);
        }
    }
    let x: Vec<f64> = (0..m).map(|i| t[m * width + n + i].max(0.0)).collect();
    let sum_y: f64 = y.iter().sum();
    let sum_x: f64 = x.iter().sum();
    let col_strategy = normalize(y);
    let row_strategy = normalize(x);
    let col_lp_value = 1.0 / sum_y - shift;
    let row_lp_value = 1.0 / sum_x - shift;
    let objective = t[m * width + rhs];
    Ok(MatrixGameSolution {
        value: 1.0 / objective - shift,
        row_strategy,
        col_strategy,
        row_lp_value,
        col_lp_value,
    })
}

fn pivot(t: &mut [f64], width: usize, m: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for k in 0..width {
        t[row * width + k] /= p;
    }
    for i in 0..=m {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f == 0.0 {
            continue;
        }
        for k in 0..width {
            t[i * width + k] -= f * t[row * width + k];
        }
        t[i * width + col] = 0.0;
    }
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    x
}

// One player has a single action: the game is a max (or min) scan.
fn solve_degenerate(game: &MatrixGame) -> MatrixGameSolution {
    let a = &game.payoff;
    let (m, n) = (a.nrows(), a.ncols());
    let mut row_strategy = vec![0.0; m];
    let mut col_strategy = vec![0.0; n];
    let value = if m == 1 {
        let (j, v) = argmin((0..n).map(|j| a[(0, j)]));
        row_strategy[0] = 1.0;
        col_strategy[j] = 1.0;
        v
    } else {
        let (i, v) = argmax((0..m).map(|i| a[(i, 0)]));
        row_strategy[i] = 1.0;
        col_strategy[0] = 1.0;
        v
    };
    MatrixGameSolution { value, row_strategy, col_strategy, row_lp_value: value, col_lp_value: value }
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Value of the minimizer's best pure reply to a fixed row mixture, with the
/// lowest-index minimizing column.
pub fn best_response_value(game: &MatrixGame, row_strategy: &[f64]) -> Result<(f64, usize)> {
    if row_strategy.len() != game.rows() {
        return Err(Error::DimensionMismatch {
            what: "row strategy",
            expected: game.rows(),
            found: row_strategy.len(),
        });
    }
    let (j, v) = argmin((0..game.cols()).map(|j| game.column_payoff(row_strategy, j)));
    Ok((v, j))
}

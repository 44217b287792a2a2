//! Reference computations used as oracles by the integration tests. None of
//! them call the library's solvers.

#![allow(dead_code)]

use mgpi::GameModel;
use nalgebra::{DMatrix, DVector};

/// Value of a matrix game by enumerating equal-size support pairs and solving
/// the indifference equations. Returns `(value, row strategy, col strategy)`.
pub fn support_enumeration(a: &DMatrix<f64>) -> (f64, Vec<f64>, Vec<f64>) {
    let (m, n) = (a.nrows(), a.ncols());
    let tol = 1e-10;
    for k in 1..=m.min(n) {
        for rows in subsets(m, k) {
            for cols in subsets(n, k) {
                let Some((x_s, w)) = indifference(a, &rows, &cols, false) else { continue };
                let Some((y_s, w2)) = indifference(a, &rows, &cols, true) else { continue };
                if (w - w2).abs() > 1e-8 || x_s.iter().chain(&y_s).any(|&p| p < -tol) {
                    continue;
                }
                let mut x = vec![0.0; m];
                let mut y = vec![0.0; n];
                for (i, &r) in rows.iter().enumerate() {
                    x[r] = x_s[i].max(0.0);
                }
                for (j, &c) in cols.iter().enumerate() {
                    y[c] = y_s[j].max(0.0);
                }
                let guarantee = (0..n).map(|c| (0..m).map(|r| x[r] * a[(r, c)]).sum::<f64>()).fold(f64::INFINITY, f64::min);
                let concession = (0..m).map(|r| (0..n).map(|c| a[(r, c)] * y[c]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
                if guarantee >= w - 1e-9 && concession <= w + 1e-9 {
                    return (w, x, y);
                }
            }
        }
    }
    panic!("no equilibrium found by support enumeration");
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

// Row mode: find x on `rows` making every column in `cols` pay w.
// Column mode: find y on `cols` making every row in `rows` pay w.
fn indifference(a: &DMatrix<f64>, rows: &[usize], cols: &[usize], column_mode: bool) -> Option<(Vec<f64>, f64)> {
    let k = rows.len();
    let mut sys = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for eq in 0..k {
        for var in 0..k {
            sys[(eq, var)] = if column_mode { a[(rows[eq], cols[var])] } else { a[(rows[var], cols[eq])] };
        }
        sys[(eq, k)] = -1.0;
    }
    for var in 0..k {
        sys[(k, var)] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = sys.lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((sol.rows(0, k).iter().copied().collect(), sol[k]))
}

/// Howard policy iteration for games whose minimizer has one action per
/// state. Returns the optimal values.
pub fn howard_mdp(game: &GameModel) -> DVector<f64> {
    let n = game.num_states();
    assert!((0..n).all(|s| game.actions_min(s) == 1), "minimizer must be trivial");
    let alpha = game.discount();
    let mut policy = vec![0usize; n];
    loop {
        let mut p = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for s in 0..n {
            g[s] = game.reward(s, policy[s], 0);
            for &(t, q) in game.successors(s, policy[s], 0) {
                p[(s, t)] += q;
            }
        }
        let j = (DMatrix::identity(n, n) - p * alpha).lu().solve(&g).expect("policy evaluation");
        let q = |s: usize, u: usize| {
            game.reward(s, u, 0) + alpha * game.successors(s, u, 0).iter().map(|&(t, w)| w * j[t]).sum::<f64>()
        };
        let mut changed = false;
        for s in 0..n {
            let current = q(s, policy[s]);
            for u in 0..game.actions_max(s) {
                if q(s, u) > current + 1e-12 && q(s, u) > q(s, policy[s]) {
                    policy[s] = u;
                    changed = true;
                }
            }
        }
        if !changed {
            return j;
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

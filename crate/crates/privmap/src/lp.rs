//! Dense two-phase simplex for the small linear programs that arise in
//! mapping optimization, plus a closed-form solver for the recurring
//! "cheapest mixture above a threshold" program over the simplex.

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

/// min c^T x subject to a_eq x = b_eq, a_ge x >= b_ge, x >= 0.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ge: Vec<Vec<f64>>,
    pub b_ge: Vec<f64>,
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.c.len();
        for (i, row) in self.a_eq.iter().chain(self.a_ge.iter()).enumerate() {
            if row.len() != n {
                return Err(Error::Lp(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_ge.len() != self.b_ge.len() {
            return Err(Error::Lp("constraint/rhs length mismatch".into()));
        }
        let n_surplus = self.a_ge.len();
        let m = self.a_eq.len() + self.a_ge.len();
        // columns: structural, surplus, artificial
        let cols = n + n_surplus + m;
        let mut a = vec![vec![0.0f64; cols]; m];
        let mut b = vec![0.0f64; m];
        for (i, row) in self.a_eq.iter().enumerate() {
            a[i][..n].copy_from_slice(row);
            b[i] = self.b_eq[i];
        }
        for (k, row) in self.a_ge.iter().enumerate() {
            let i = self.a_eq.len() + k;
            a[i][..n].copy_from_slice(row);
            a[i][n + k] = -1.0;
            b[i] = self.b_ge[k];
        }
        for i in 0..m {
            if b[i] < 0.0 {
                b[i] = -b[i];
                for v in a[i].iter_mut() {
                    *v = -*v;
                }
            }
            a[i][n + n_surplus + i] = 1.0;
        }
        let mut basis: Vec<usize> = (0..m).map(|i| n + n_surplus + i).collect();

        // phase 1: minimize sum of artificials
        let mut c1 = vec![0.0f64; cols];
        for v in c1.iter_mut().skip(n + n_surplus) {
            *v = 1.0;
        }
        let p1 = simplex(&mut a, &mut b, &c1, &mut basis, cols)?;
        if p1 == LpStatus::Unbounded {
            return Err(Error::Lp("phase 1 unbounded".into()));
        }
        let p1_obj: f64 = basis
            .iter()
            .zip(b.iter())
            .filter(|(&j, _)| j >= n + n_surplus)
            .map(|(_, &bi)| bi)
            .sum();
        if p1_obj > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![0.0; n],
            });
        }
        // drive any artificial still basic at zero out of the basis
        for i in 0..m {
            if basis[i] >= n + n_surplus {
                if let Some(j) = (0..n + n_surplus).find(|&j| a[i][j].abs() > PIVOT_TOL) {
                    pivot(&mut a, &mut b, i, j);
                    basis[i] = j;
                }
            }
        }
        // forbid artificials in phase 2
        for row in a.iter_mut() {
            for v in row.iter_mut().skip(n + n_surplus) {
                *v = 0.0;
            }
        }

        let mut c2 = vec![0.0f64; cols];
        c2[..n].copy_from_slice(&self.c);
        let p2 = simplex(&mut a, &mut b, &c2, &mut basis, n + n_surplus)?;
        if p2 == LpStatus::Unbounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                x: vec![0.0; n],
            });
        }
        let mut x = vec![0.0f64; n];
        for (i, &j) in basis.iter().enumerate() {
            if j < n {
                x[j] = b[i];
            }
        }
        let objective = self.c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective,
            x,
        })
    }
}

/// Runs simplex with Bland's rule on the tableau; entering columns are
/// restricted to indices below `active_cols`.
fn simplex(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    c: &[f64],
    basis: &mut [usize],
    active_cols: usize,
) -> Result<LpStatus> {
    let m = a.len();
    for _ in 0..MAX_PIVOTS {
        // reduced costs via basic cost combination
        let mut entering = None;
        for j in 0..active_cols {
            if basis.contains(&j) {
                continue;
            }
            let mut red = c[j];
            for i in 0..m {
                red -= c[basis[i]] * a[i][j];
            }
            if red < -FEAS_TOL {
                entering = Some(j);
                break; // Bland: smallest index
            }
        }
        let Some(j) = entering else {
            return Ok(LpStatus::Optimal);
        };
        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if a[i][j] > PIVOT_TOL {
                let ratio = b[i] / a[i][j];
                if ratio < best - 1e-12 || (ratio < best + 1e-12 && leave.map_or(true, |l: usize| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(i) = leave else {
            return Ok(LpStatus::Unbounded);
        };
        pivot(a, b, i, j);
        basis[i] = j;
    }
    Err(Error::Lp("pivot limit exceeded".into()))
}

fn pivot(a: &mut [Vec<f64>], b: &mut [f64], r: usize, c: usize) {
    let piv = a[r][c];
    for v in a[r].iter_mut() {
        *v /= piv;
    }
    b[r] /= piv;
    let row = a[r].clone();
    let br = b[r];
    for i in 0..a.len() {
        if i == r {
            continue;
        }
        let f = a[i][c];
        if f != 0.0 {
            for (v, &rv) in a[i].iter_mut().zip(&row) {
                *v -= f * rv;
            }
            b[i] -= f * br;
        }
    }
}

/// Minimizes sum_i w_i cost_i over the probability simplex subject to
/// sum_i w_i value_i >= threshold. The optimum is supported on at most two
/// points: either the globally cheapest point (if it clears the threshold)
/// or a mixture of two points on the lower convex hull whose values bracket
/// the threshold. Returns (index, weight) pairs with positive weight.
pub fn solve_weights_simplex(
    costs: &[f64],
    values: &[f64],
    threshold: f64,
) -> Result<Vec<(usize, f64)>> {
    if costs.len() != values.len() || costs.is_empty() {
        return Err(Error::Lp("costs/values length mismatch".into()));
    }
    let n = costs.len();
    // cheapest point, tie-break by larger value
    let mut best = 0usize;
    for i in 1..n {
        if costs[i] < costs[best] - 1e-15
            || (costs[i] <= costs[best] + 1e-15 && values[i] > values[best])
        {
            best = i;
        }
    }
    if values[best] >= threshold - FEAS_TOL {
        return Ok(vec![(best, 1.0)]);
    }
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if vmax < threshold - FEAS_TOL {
        return Err(Error::Infeasible(format!(
            "threshold {threshold} above best attainable value {vmax}"
        )));
    }
    // lower convex hull of (value, cost), values ascending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .partial_cmp(&values[j])
            .unwrap()
            .then(costs[i].partial_cmp(&costs[j]).unwrap())
    });
    let mut hull: Vec<usize> = Vec::new();
    for &i in &order {
        if let Some(&last) = hull.last() {
            if (values[i] - values[last]).abs() < 1e-15 {
                if costs[i] >= costs[last] {
                    continue;
                }
                hull.pop();
            }
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (values[b] - values[a]) * (costs[i] - costs[a])
                - (costs[b] - costs[a]) * (values[i] - values[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    // locate the hull segment containing the threshold
    for w in hull.windows(2) {
        let (l, r) = (w[0], w[1]);
        if values[l] <= threshold + FEAS_TOL && threshold <= values[r] + FEAS_TOL {
            let span = values[r] - values[l];
            if span.abs() < 1e-15 {
                return Ok(vec![(r, 1.0)]);
            }
            let wr = ((threshold - values[l]) / span).clamp(0.0, 1.0);
            if wr <= 0.0 {
                return Ok(vec![(l, 1.0)]);
            }
            if wr >= 1.0 {
                return Ok(vec![(r, 1.0)]);
            }
            return Ok(vec![(l, 1.0 - wr), (r, wr)]);
        }
    }
    // threshold equals the max value attained at a single hull point
    let top = *hull.last().expect("nonempty hull");
    Ok(vec![(top, 1.0)])
}

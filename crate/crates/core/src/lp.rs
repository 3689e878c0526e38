//! Dense two-phase simplex in dictionary form.
//!
//! Only the nonbasic columns are stored, so a program with `k` constraints
//! over `n` variables costs `O(k * n)` per pivot regardless of how many slack
//! variables it has. The robust solver produces many programs with a handful
//! of variables and up to a few hundred constraints, which is exactly the
//! shape this layout favors.
//!
//! Pivoting follows Bland's rule (lowest-labelled improving column, lowest
//! labelled leaving row among ratio ties), which rules out cycling and makes
//! the returned vertex a deterministic function of the input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TAU_LP;

const EPS_PIVOT: f64 = 1e-12;
const EPS_COST: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("coefficient vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
    #[error("solution violates constraint {row} by {violation:e}")]
    Numerical { row: usize, violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
}

/// `maximize c·x + offset` subject to linear constraints and `x >= lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    offset: f64,
    coeffs: Vec<f64>,
    relations: Vec<Relation>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
}

impl LinearProgram {
    /// Maximization problem with all variables bounded below by zero.
    pub fn maximize(objective: Vec<f64>, offset: f64) -> Self {
        let num_vars = objective.len();
        Self {
            num_vars,
            objective,
            offset,
            coeffs: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; num_vars],
        }
    }

    pub fn with_lower_bounds(mut self, lower: Vec<f64>) -> Result<Self, LpError> {
        if lower.len() != self.num_vars {
            return Err(LpError::Dimension {
                expected: self.num_vars,
                got: lower.len(),
            });
        }
        self.lower = lower;
        Ok(self)
    }

    pub fn add_constraint(
        &mut self,
        coeffs: &[f64],
        relation: Relation,
        rhs: f64,
    ) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars {
            return Err(LpError::Dimension {
                expected: self.num_vars,
                got: coeffs.len(),
            });
        }
        self.coeffs.extend_from_slice(coeffs);
        self.relations.push(relation);
        self.rhs.push(rhs);
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self) -> (&[f64], f64) {
        (&self.objective, self.offset)
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn constraint(&self, i: usize) -> (&[f64], Relation, f64) {
        let n = self.num_vars;
        (
            &self.coeffs[i * n..(i + 1) * n],
            self.relations[i],
            self.rhs[i],
        )
    }

    pub fn constraints(&self) -> impl Iterator<Item = (&[f64], Relation, f64)> + '_ {
        (0..self.num_constraints()).map(move |i| self.constraint(i))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .map(|(c, v)| c * v)
            .sum::<f64>()
            + self.offset
    }

    /// Largest violation of any constraint or bound at `x`, with the index of
    /// the offending constraint (`num_constraints() + j` for the bound on
    /// variable `j`).
    pub fn max_violation(&self, x: &[f64]) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for (i, (a, rel, b)) in self.constraints().enumerate() {
            let lhs: f64 = a.iter().zip(x).map(|(c, v)| c * v).sum();
            let v = match rel {
                Relation::Le => lhs - b,
                Relation::Ge => b - lhs,
            };
            if v > worst.1 {
                worst = (i, v);
            }
        }
        for (j, (&l, &v)) in self.lower.iter().zip(x).enumerate() {
            if l - v > worst.1 {
                worst = (self.num_constraints() + j, l - v);
            }
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_vars && self.max_violation(x).1 <= tol
    }

    fn check_finite(&self) -> Result<(), LpError> {
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !all_finite(&self.objective) || !self.offset.is_finite() {
            return Err(LpError::NonFinite("objective"));
        }
        if !all_finite(&self.coeffs) || !all_finite(&self.rhs) {
            return Err(LpError::NonFinite("constraints"));
        }
        if !all_finite(&self.lower) {
            return Err(LpError::NonFinite("lower bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is `Optimal`.
    pub solution: Vec<f64>,
    /// Objective value at `solution`; NaN unless `status` is `Optimal`.
    pub objective: f64,
}

impl LpResult {
    fn without_solution(status: LpStatus) -> Self {
        Self {
            status,
            solution: Vec::new(),
            objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Dictionary `x_B = b - A x_N`, objective `z = z0 + d · x_N`.
///
/// Variable labels double as Bland's ordering: the phase-one artificial is
/// `0`, structural variables are `1..=n`, slacks follow.
struct Dictionary {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; the last entry of each row is `b`.
    tab: Vec<f64>,
    /// Reduced costs `d`, with `z0` in the last slot.
    obj: Vec<f64>,
    basis: Vec<usize>,
    nonbasis: Vec<usize>,
    pivots: usize,
    limit: usize,
    scratch: Vec<f64>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Dictionary {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.tab[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.tab[r * self.width() + self.cols]
    }

    fn pivot(&mut self, r: usize, s: usize) -> Result<(), LpError> {
        self.pivots += 1;
        if self.pivots > self.limit {
            return Err(LpError::IterationLimit(self.limit));
        }
        let w = self.width();
        let piv = self.at(r, s);
        debug_assert!(piv.abs() > 0.0);
        let inv = 1.0 / piv;
        {
            let row = &mut self.tab[r * w..(r + 1) * w];
            for (c, v) in row.iter_mut().enumerate() {
                if c == s {
                    *v = inv;
                } else {
                    *v *= inv;
                }
            }
        }
        let mut pivot_row = std::mem::take(&mut self.scratch);
        pivot_row.clear();
        pivot_row.extend_from_slice(&self.tab[r * w..(r + 1) * w]);
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let factor = self.tab[i * w + s];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * w..(i + 1) * w];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            row[s] = -factor * inv;
            let b = &mut row[self.cols];
            if *b < 0.0 && *b > -EPS_PIVOT {
                *b = 0.0;
            }
        }
        let d = self.obj[s];
        if d != 0.0 {
            for (c, v) in self.obj.iter_mut().enumerate() {
                if c == s {
                    *v = -d * inv;
                } else if c == self.cols {
                    // z = z0 + d x_s and x_s enters at b_r / a_rs.
                    *v += d * pivot_row[c];
                } else {
                    *v -= d * pivot_row[c];
                }
            }
        }
        self.scratch = pivot_row;
        std::mem::swap(&mut self.basis[r], &mut self.nonbasis[s]);
        Ok(())
    }

    fn entering(&self) -> Option<usize> {
        (0..self.cols)
            .filter(|&c| self.obj[c] > EPS_COST)
            .min_by_key(|&c| self.nonbasis[c])
    }

    fn leaving(&self, s: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, s);
            if a <= EPS_PIVOT {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bv)) => {
                    let tie = (ratio - bv).abs() <= EPS_PIVOT * (1.0 + bv.abs());
                    if (tie && self.basis[r] < self.basis[br]) || (!tie && ratio < bv) {
                        Some((r, ratio))
                    } else {
                        Some((br, bv))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        while let Some(s) = self.entering() {
            match self.leaving(s) {
                Some(r) => self.pivot(r, s)?,
                None => return Ok(Outcome::Unbounded),
            }
        }
        Ok(Outcome::Optimal)
    }

    fn remove_column(&mut self, s: usize) {
        let w = self.width();
        let mut tab = Vec::with_capacity(self.rows * (w - 1));
        for r in 0..self.rows {
            for c in 0..w {
                if c != s {
                    tab.push(self.tab[r * w + c]);
                }
            }
        }
        self.tab = tab;
        self.obj.remove(s);
        self.nonbasis.remove(s);
        self.cols -= 1;
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width();
        self.tab.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

/// Solves `lp`, returning a vertex optimum, or an `Infeasible`/`Unbounded`
/// status. Errors are reserved for malformed input and numerical breakdown.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult, LpError> {
    lp.check_finite()?;
    let n = lp.num_vars;

    // Substitute x = lower + y and write every row as a·y <= b.
    let mut coeffs: Vec<f64> = Vec::with_capacity(lp.coeffs.len());
    let mut bounds: Vec<f64> = Vec::with_capacity(lp.num_constraints());
    for (a, rel, b) in lp.constraints() {
        if a.iter().all(|&c| c == 0.0) {
            let slack = match rel {
                Relation::Le => b,
                Relation::Ge => -b,
            };
            if slack < -TAU_LP {
                return Ok(LpResult::without_solution(LpStatus::Infeasible));
            }
            continue;
        }
        let shift: f64 = a.iter().zip(&lp.lower).map(|(c, l)| c * l).sum();
        match rel {
            Relation::Le => {
                coeffs.extend_from_slice(a);
                bounds.push(b - shift);
            }
            Relation::Ge => {
                coeffs.extend(a.iter().map(|c| -c));
                bounds.push(shift - b);
            }
        }
    }

    let k = bounds.len();
    let needs_phase_one = bounds.iter().any(|&b| b < 0.0);
    // Column 0 is the artificial x0 when phase one is needed.
    let extra = usize::from(needs_phase_one);
    let cols = n + extra;
    let mut tab = Vec::with_capacity(k * (cols + 1));
    for (row, &b) in coeffs.chunks_exact(n.max(1)).zip(&bounds) {
        if needs_phase_one {
            tab.push(-1.0);
        }
        tab.extend_from_slice(row);
        tab.push(b);
    }
    let mut nonbasis: Vec<usize> = (1..=n).collect();
    if needs_phase_one {
        nonbasis.insert(0, 0);
    }
    let mut dict = Dictionary {
        rows: k,
        cols,
        tab,
        obj: vec![0.0; cols + 1],
        basis: (n + 1..=n + k).collect(),
        nonbasis,
        pivots: 0,
        limit: 50 * (k + cols + 1) + 1000,
        scratch: Vec::with_capacity(cols + 1),
    };

    if needs_phase_one {
        // maximize -x0
        dict.obj[0] = -1.0;
        let first = (0..k)
            .min_by(|&a, &b| {
                dict.rhs(a)
                    .partial_cmp(&dict.rhs(b))
                    .expect("finite right-hand sides")
                    .then(dict.basis[a].cmp(&dict.basis[b]))
            })
            .expect("a negative row exists");
        dict.pivot(first, 0)?;
        dict.run()?;
        let scale = 1.0 + bounds.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if -dict.obj[dict.cols] > TAU_LP * scale {
            return Ok(LpResult::without_solution(LpStatus::Infeasible));
        }
        if let Some(r) = dict.basis.iter().position(|&v| v == 0) {
            // x0 is basic at level zero: swap it out on a degenerate pivot.
            let s = (0..dict.cols)
                .filter(|&c| dict.nonbasis[c] != 0)
                .max_by(|&a, &b| {
                    dict.at(r, a)
                        .abs()
                        .partial_cmp(&dict.at(r, b).abs())
                        .expect("finite tableau")
                        .then(b.cmp(&a))
                });
            match s {
                Some(s) if dict.at(r, s).abs() > EPS_PIVOT => dict.pivot(r, s)?,
                _ => dict.remove_row(r),
            }
        }
        let s = dict
            .nonbasis
            .iter()
            .position(|&v| v == 0)
            .expect("artificial is nonbasic after phase one");
        dict.remove_column(s);
    }

    // Phase two objective expressed over the current nonbasic variables.
    let cost = |label: usize| -> f64 {
        if (1..=n).contains(&label) {
            lp.objective[label - 1]
        } else {
            0.0
        }
    };
    let mut obj: Vec<f64> = dict.nonbasis.iter().map(|&v| cost(v)).collect();
    obj.push(0.0);
    for r in 0..dict.rows {
        let cb = cost(dict.basis[r]);
        if cb == 0.0 {
            continue;
        }
        for (c, v) in obj[..dict.cols].iter_mut().enumerate() {
            *v -= cb * dict.at(r, c);
        }
        obj[dict.cols] += cb * dict.rhs(r);
    }
    dict.obj = obj;

    if let Outcome::Unbounded = dict.run()? {
        return Ok(LpResult::without_solution(LpStatus::Unbounded));
    }

    let mut x = lp.lower.clone();
    for r in 0..dict.rows {
        let label = dict.basis[r];
        if (1..=n).contains(&label) {
            x[label - 1] += dict.rhs(r).max(0.0);
        }
    }
    let (row, violation) = lp.max_violation(&x);
    if violation > TAU_LP {
        return Err(LpError::Numerical { row, violation });
    }
    Ok(LpResult {
        status: LpStatus::Optimal,
        objective: lp.evaluate(&x),
        solution: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_upper_bound() {
        let mut lp = LinearProgram::maximize(vec![1.0], 0.0);
        lp.add_constraint(&[1.0], Relation::Le, 1.0).unwrap();
        let res = solve_lp(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(res.solution, vec![1.0]);
        assert_eq!(res.objective, 1.0);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let mut lp = LinearProgram::maximize(vec![1.0], 0.0);
        lp.add_constraint(&[1.0], Relation::Le, 1.0).unwrap();
        lp.add_constraint(&[1.0], Relation::Ge, 2.0).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn payment_difference() {
        let mut lp = LinearProgram::maximize(vec![-1.0, 1.0], 0.0);
        lp.add_constraint(&[0.0, 1.0], Relation::Le, 0.25).unwrap();
        let res = solve_lp(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.objective - 0.25).abs() < 1e-12);
        assert_eq!(res.solution, vec![0.0, 0.25]);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0], 0.0);
        lp.add_constraint(&[1.0, -1.0], Relation::Le, 1.0).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn ge_constraints_need_phase_one() {
        // max -x - y  s.t. x + y >= 1, x - y <= 0.5
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0], 3.0);
        lp.add_constraint(&[1.0, 1.0], Relation::Ge, 1.0).unwrap();
        lp.add_constraint(&[1.0, -1.0], Relation::Le, 0.5).unwrap();
        let res = solve_lp(&lp).unwrap();
        assert!(res.is_optimal());
        assert!((res.objective - 2.0).abs() < 1e-12);
        assert!(lp.is_feasible(&res.solution, TAU_LP));
    }

    #[test]
    fn shifted_lower_bounds() {
        let mut lp = LinearProgram::maximize(vec![-1.0], 0.0)
            .with_lower_bounds(vec![0.5])
            .unwrap();
        lp.add_constraint(&[1.0], Relation::Le, 2.0).unwrap();
        let res = solve_lp(&lp).unwrap();
        assert_eq!(res.solution, vec![0.5]);
    }

    #[test]
    fn zero_row_handling() {
        let mut lp = LinearProgram::maximize(vec![1.0], 0.0);
        lp.add_constraint(&[0.0], Relation::Le, -0.25).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::maximize(vec![-1.0], 0.0);
        lp.add_constraint(&[0.0], Relation::Le, 0.25).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().solution, vec![0.0]);
    }

    #[test]
    fn degenerate_vertex() {
        // Three constraints active at the optimum (1, 1).
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0], 0.0);
        lp.add_constraint(&[1.0, 0.0], Relation::Le, 1.0).unwrap();
        lp.add_constraint(&[0.0, 1.0], Relation::Le, 1.0).unwrap();
        lp.add_constraint(&[1.0, 1.0], Relation::Le, 2.0).unwrap();
        lp.add_constraint(&[1.0, -1.0], Relation::Ge, 0.0).unwrap();
        let res = solve_lp(&lp).unwrap();
        assert!((res.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0], 0.0);
        assert!(matches!(
            lp.add_constraint(&[1.0], Relation::Le, 1.0),
            Err(LpError::Dimension {
                expected: 2,
                got: 1
            })
        ));
        lp.add_constraint(&[1.0, f64::NAN], Relation::Le, 1.0)
            .unwrap();
        assert!(matches!(solve_lp(&lp), Err(LpError::NonFinite(_))));
    }

    #[test]
    fn deterministic() {
        let mut lp = LinearProgram::maximize(vec![0.3, 0.7, -0.2], 0.1);
        lp.add_constraint(&[1.0, 1.0, 1.0], Relation::Le, 1.0)
            .unwrap();
        lp.add_constraint(&[0.5, -0.2, 0.1], Relation::Ge, 0.05)
            .unwrap();
        lp.add_constraint(&[0.0, 1.0, -1.0], Relation::Le, 0.4)
            .unwrap();
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(
            a.solution.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.solution.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

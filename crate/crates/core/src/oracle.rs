//! Brute-force references over a uniform contract grid.
//!
//! The grid has levels `{0, h, 2h, ...}` per coordinate, completed with the
//! box's upper bound when it is not a multiple of `h`, and is scanned in
//! lexicographic order (first coordinate most significant). Scans run in
//! parallel; the merge keeps the largest value and, among equal values, the
//! lexicographically smallest point, which is also the first maximizer of a
//! serial scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::TypedInstance;
use crate::model::{optimistic_best_response, principal_utility, psi, Contract, Instance};

/// Upper limit on the number of grid points a single scan may visit.
pub const GRID_POINT_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid step and upper bound must be positive and finite (step {step}, upper {upper})")]
    InvalidGrid { step: f64, upper: f64 },
    #[error("grid has {points} points, above the cap of {cap}")]
    CapExceeded { points: u128, cap: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub upper: f64,
}

impl GridSpec {
    pub fn new(step: f64, upper: f64) -> Result<Self, OracleError> {
        if !(step > 0.0 && step.is_finite() && upper > 0.0 && upper.is_finite()) {
            return Err(OracleError::InvalidGrid { step, upper });
        }
        Ok(Self { step, upper })
    }

    /// Grid over the unit hypercube.
    pub fn unit(step: f64) -> Result<Self, OracleError> {
        Self::new(step, 1.0)
    }

    /// Per-coordinate levels, ascending, always including `0` and `upper`.
    pub fn levels(&self) -> Vec<f64> {
        let ratio = self.upper / self.step;
        let rounded = ratio.round();
        if rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * ratio {
            // Divide rather than multiply so that e.g. 25/100 is exactly 0.25.
            let k = rounded as usize;
            (0..=k).map(|i| self.upper * i as f64 / k as f64).collect()
        } else {
            let k = ratio.floor() as usize;
            let mut levels: Vec<f64> = (0..=k).map(|i| i as f64 * self.step).collect();
            if levels.last().is_some_and(|&v| v < self.upper) {
                levels.push(self.upper);
            }
            levels
        }
    }

    pub fn point_count(&self, m: usize) -> u128 {
        let per_axis = self.levels().len() as u128;
        (0..m).fold(1u128, |acc, _| acc.saturating_mul(per_axis))
    }

    pub fn check_cap(&self, m: usize) -> Result<u64, OracleError> {
        let points = self.point_count(m);
        if points > GRID_POINT_CAP as u128 {
            return Err(OracleError::CapExceeded {
                points,
                cap: GRID_POINT_CAP,
            });
        }
        Ok(points as u64)
    }

    /// Writes grid point `index` (lexicographic order) into `out`.
    pub fn point_into(levels: &[f64], mut index: u64, out: &mut [f64]) {
        let base = levels.len() as u64;
        for slot in out.iter_mut().rev() {
            *slot = levels[(index % base) as usize];
            index /= base;
        }
    }

    /// Every grid point in lexicographic order.
    pub fn points(&self, m: usize) -> Result<Vec<Contract>, OracleError> {
        let count = self.check_cap(m)?;
        let levels = self.levels();
        Ok((0..count)
            .map(|i| {
                let mut p = vec![0.0; m];
                Self::point_into(&levels, i, &mut p);
                Contract::new(p).expect("grid levels are nonnegative")
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMax {
    pub contract: Contract,
    pub value: f64,
    pub points: u64,
}

/// Maximizes `value` over the grid in `m` dimensions.
pub fn grid_max<F>(m: usize, grid: &GridSpec, value: F) -> Result<GridMax, OracleError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let count = grid.check_cap(m)?;
    let levels = grid.levels();
    let (best_value, best_index) = (0..count)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, i| {
                GridSpec::point_into(&levels, i, buf);
                (value(buf), i)
            },
        )
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |x, y| {
                if x.0 > y.0 || (x.0 == y.0 && x.1 < y.1) {
                    x
                } else {
                    y
                }
            },
        );
    let mut p = vec![0.0; m];
    GridSpec::point_into(&levels, best_index, &mut p);
    Ok(GridMax {
        contract: Contract::new(p).expect("grid levels are nonnegative"),
        value: best_value,
        points: count,
    })
}

/// Grid maximum of `Ψ` for a single instance.
pub fn grid_psi_max(inst: &Instance, delta: f64, grid: &GridSpec) -> Result<GridMax, OracleError> {
    grid_max(inst.m(), grid, |p| psi(inst, p, delta))
}

/// Grid value of `OPT(C, δ)`: the λ-weighted utility under each type's worst
/// δ-best response.
pub fn grid_opt_typed(
    tinst: &TypedInstance,
    delta: f64,
    grid: &GridSpec,
) -> Result<GridMax, OracleError> {
    grid_max(tinst.m(), grid, |p| tinst.robust_value(p, delta))
}

/// Grid value of `OPT(C)`: the λ-weighted utility under each type's
/// optimistic exact best response.
pub fn grid_opt_typed_nonrobust(
    tinst: &TypedInstance,
    grid: &GridSpec,
) -> Result<GridMax, OracleError> {
    grid_max(tinst.m(), grid, |p| {
        tinst
            .types()
            .iter()
            .zip(tinst.lambda())
            .map(|(inst, w)| w * principal_utility(inst, p, optimistic_best_response(inst, p)))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_tight_ub;

    #[test]
    fn levels_include_endpoints() {
        assert_eq!(GridSpec::unit(0.5).unwrap().levels(), vec![0.0, 0.5, 1.0]);
        assert_eq!(
            GridSpec::unit(0.3).unwrap().levels(),
            vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]
        );
        let l = GridSpec::unit(0.01).unwrap().levels();
        assert_eq!(l.len(), 101);
        assert_eq!(l[25], 0.25);
        assert_eq!(GridSpec::unit(2.0).unwrap().levels(), vec![0.0, 1.0]);
    }

    #[test]
    fn cap_enforced() {
        let g = GridSpec::unit(0.01).unwrap();
        assert!(g.check_cap(3).is_ok());
        assert!(matches!(
            g.check_cap(4),
            Err(OracleError::CapExceeded { .. })
        ));
        assert!(GridSpec::unit(0.0).is_err());
    }

    #[test]
    fn points_lexicographic() {
        let pts = GridSpec::unit(0.5).unwrap().points(2).unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(&*pts[1], &[0.0, 0.5]);
        assert_eq!(&*pts[3], &[0.5, 0.0]);
    }

    #[test]
    fn tight_ub_grid_max() {
        let inst = gen_tight_ub(0.25).unwrap();
        let res = grid_psi_max(&inst, 0.25, &GridSpec::unit(0.05).unwrap()).unwrap();
        assert!((res.value - 0.75).abs() < 1e-12);
        assert_eq!(&*res.contract, &[0.0, 0.25]);
    }

    #[test]
    fn opt_out_only_grid_max() {
        let inst = Instance::new(vec![vec![1.0, 0.0]], vec![0.0, 0.4], vec![0.0]).unwrap();
        let res = grid_psi_max(&inst, 0.3, &GridSpec::unit(0.1).unwrap()).unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(&*res.contract, &[0.0, 0.0]);
    }

    #[test]
    fn refinement_never_decreases() {
        let inst = crate::generators::gen_random(3, 2, 5, true);
        let coarse = grid_psi_max(&inst, 0.2, &GridSpec::unit(0.1).unwrap()).unwrap();
        let fine = grid_psi_max(&inst, 0.2, &GridSpec::unit(0.05).unwrap()).unwrap();
        assert!(fine.value >= coarse.value);
    }
}

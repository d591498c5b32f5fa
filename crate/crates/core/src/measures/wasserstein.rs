use rayon::prelude::*;

use super::{euclid_dist, path_dist, solve_assignment, EmpiricalMeasure};
use crate::error::{invalid, shape, Error, Result};

pub const DEFAULT_ASSIGNMENT_CAP: usize = 2048;

/// Pairwise ground costs, row-major `N×N`: Euclidean distance for points,
/// sup-norm distance for paths.
pub fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    check_pair(mu, nu)?;
    let n = mu.len();
    let mut cost = vec![0.0; n * n];
    match (mu, nu) {
        (EmpiricalMeasure::Points(a), EmpiricalMeasure::Points(b)) => {
            cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let x = a.point(i);
                for (j, c) in row.iter_mut().enumerate() {
                    *c = euclid_dist(x, b.point(j));
                }
            });
        }
        (EmpiricalMeasure::Paths(a), EmpiricalMeasure::Paths(b)) => {
            cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, c) in row.iter_mut().enumerate() {
                    *c = path_dist(&a[i], &b[j]);
                }
            });
        }
        _ => unreachable!("checked by check_pair"),
    }
    Ok(cost)
}

/// Exact `d_p` between equal-size empirical measures, with the default
/// assignment cap.
pub fn wasserstein(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    wasserstein_with_cap(mu, nu, p, DEFAULT_ASSIGNMENT_CAP)
}

pub fn wasserstein_with_cap(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    cap: usize,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("Wasserstein exponent must be a finite p >= 1, got {p}")));
    }
    check_pair(mu, nu)?;
    let n = mu.len();

    if let (EmpiricalMeasure::Points(a), EmpiricalMeasure::Points(b)) = (mu, nu) {
        if a.dim() == 1 {
            // monotone rearrangement is optimal for convex costs on the line
            let mut xs = a.coords().to_vec();
            let mut ys = b.coords().to_vec();
            xs.sort_by(f64::total_cmp);
            ys.sort_by(f64::total_cmp);
            let acc: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs().powf(p)).sum();
            return Ok((acc / n as f64).powf(1.0 / p));
        }
    }

    if n > cap {
        return Err(Error::AssignmentTooLarge { n, cap });
    }
    let mut cost = cost_matrix(mu, nu)?;
    if p != 1.0 {
        cost.iter_mut().for_each(|c| *c = c.powf(p));
    }
    let plan = solve_assignment(n, &cost);
    let acc: f64 = plan.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((acc / n as f64).powf(1.0 / p))
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::UnequalSizes {
            left: mu.len(),
            right: nu.len(),
        });
    }
    match (mu, nu) {
        (EmpiricalMeasure::Points(a), EmpiricalMeasure::Points(b)) => {
            if a.dim() != b.dim() {
                return Err(shape("point atoms of different dimension"));
            }
        }
        (EmpiricalMeasure::Paths(a), EmpiricalMeasure::Paths(b)) => a[0].check_compatible(&b[0])?,
        _ => return Err(shape("cannot compare point atoms with path atoms")),
    }
    Ok(())
}

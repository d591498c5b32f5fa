//! Paths, empirical measures and the metrics built on them.

mod assignment;
mod density;
mod norms;
mod wasserstein;

pub use assignment::solve_assignment;
pub use density::{histogram_sup_mass, kde_density_norm, silverman_bandwidth, KdeOptions};
pub use norms::{h_modulus, h_seminorm, moment_norm, modulus_table, sup_norm, Seminorm};
pub use wasserstein::{
    cost_matrix, wasserstein, wasserstein_with_cap, DEFAULT_ASSIGNMENT_CAP,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Uniform grid `t_k = k·horizon/steps` on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    /// Per-step integrals of a rate that is constant in time.
    pub fn constant_integrals(&self, rate: f64) -> Vec<f64> {
        vec![rate * self.dt(); self.steps]
    }
}

/// Continuous trajectory sampled on a [`TimeGrid`], values in `ℝ^dim`,
/// stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("path dimension must be positive"));
        }
        if values.len() != grid.nodes() * dim {
            return Err(shape(format!(
                "path needs {} values ({} nodes × dim {}), got {}",
                grid.nodes() * dim,
                grid.nodes(),
                dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite path value at flat index {pos}")));
        }
        Ok(Self { grid, dim, values })
    }

    pub(crate) fn from_raw(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.nodes() * dim);
        Self { grid, dim, values }
    }

    pub fn constant(grid: TimeGrid, point: &[f64]) -> Result<Self> {
        let values = point.iter().copied().cycle().take(grid.nodes() * point.len()).collect();
        Self::new(grid, point.len(), values)
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nodes() * dim);
        for k in 0..grid.nodes() {
            let v = f(grid.time(k));
            if v.len() != dim {
                return Err(shape("closure returned a point of the wrong dimension"));
            }
            values.extend(v);
        }
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise difference `self − other`.
    pub fn sub(&self, other: &Path) -> Result<Path> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Path::from_raw(self.grid, self.dim, values))
    }

    pub(crate) fn check_compatible(&self, other: &Path) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(shape("paths live on different grids or dimensions"));
        }
        Ok(())
    }
}

/// `N` points in `ℝ^dim`, stored atom-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be positive"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(shape(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(shape("points of mixed dimension"));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Atom average. Each coordinate is summed in ascending value order, so the
    /// result does not depend on atom order.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut col = Vec::with_capacity(self.len());
        (0..self.dim)
            .map(|j| {
                col.clear();
                col.extend(self.iter().map(|p| p[j]));
                order_free_sum(&mut col) / n
            })
            .collect()
    }
}

/// Uniform-weight empirical measure `(1/N) Σ δ_{atom_i}`.
#[derive(Debug, Clone, PartialEq)]
pub enum EmpiricalMeasure {
    Points(PointCloud),
    Paths(Vec<Path>),
}

impl EmpiricalMeasure {
    pub fn points(dim: usize, coords: Vec<f64>) -> Result<Self> {
        Ok(Self::Points(PointCloud::new(dim, coords)?))
    }

    /// 1-D convenience constructor.
    pub fn scalars(values: &[f64]) -> Result<Self> {
        Self::points(1, values.to_vec())
    }

    pub fn paths(paths: Vec<Path>) -> Result<Self> {
        let first = paths.first().ok_or_else(|| invalid("empirical measure needs at least one atom"))?;
        for p in &paths[1..] {
            first.check_compatible(p)?;
        }
        Ok(Self::Paths(paths))
    }

    /// `δ_0` replicated `n` times, shaped like `self`.
    pub fn zero_like(&self) -> Self {
        match self {
            Self::Points(c) => Self::Points(PointCloud {
                dim: c.dim,
                coords: vec![0.0; c.coords.len()],
            }),
            Self::Paths(ps) => {
                let p = &ps[0];
                let zero = Path::from_raw(p.grid, p.dim, vec![0.0; p.values.len()]);
                Self::Paths(vec![zero; ps.len()])
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Points(c) => c.len(),
            Self::Paths(ps) => ps.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Points(c) => c.dim,
            Self::Paths(ps) => ps[0].dim,
        }
    }

    /// Norm of atom `i` in its ambient space (Euclidean or sup-norm).
    pub fn atom_norm(&self, i: usize) -> f64 {
        match self {
            Self::Points(c) => euclid(c.point(i)),
            Self::Paths(ps) => sup_norm(&ps[i]),
        }
    }
}

/// `N` paths on one grid; also read as the measure flow `t_k ↦ μ_{t_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    dim: usize,
    members: Vec<Path>,
    seed: u64,
}

impl Ensemble {
    pub fn new(members: Vec<Path>, seed: u64) -> Result<Self> {
        let first = members.first().ok_or_else(|| invalid("ensemble needs at least one member"))?;
        let (grid, dim) = (first.grid, first.dim);
        for p in &members[1..] {
            first.check_compatible(p)?;
        }
        Ok(Self {
            grid,
            dim,
            members,
            seed,
        })
    }

    pub(crate) fn from_raw(grid: TimeGrid, dim: usize, members: Vec<Path>, seed: u64) -> Self {
        Self {
            grid,
            dim,
            members,
            seed,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn members(&self) -> &[Path] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Path {
        &self.members[i]
    }

    pub fn into_members(self) -> Vec<Path> {
        self.members
    }

    /// Point-atom empirical measure at node `k`.
    pub fn slice(&self, k: usize) -> PointCloud {
        let mut coords = Vec::with_capacity(self.len() * self.dim);
        for p in &self.members {
            coords.extend_from_slice(p.point(k));
        }
        PointCloud {
            dim: self.dim,
            coords,
        }
    }

    /// All time slices, node by node.
    pub fn measure_flow(&self) -> Vec<PointCloud> {
        (0..self.grid.nodes()).map(|k| self.slice(k)).collect()
    }

    pub fn to_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::Paths(self.members.clone())
    }

    /// Members at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Ensemble {
        let members = indices.iter().map(|&i| self.members[i].clone()).collect();
        Ensemble::from_raw(self.grid, self.dim, members, self.seed)
    }

    pub(crate) fn check_compatible(&self, other: &Ensemble) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim || self.len() != other.len() {
            return Err(shape(format!(
                "ensembles differ in grid, dimension or size ({} vs {})",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Sum in ascending value order; permutation invariant bit for bit.
pub(crate) fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sup over nodes of the Euclidean distance between two paths on one grid.
pub(crate) fn path_dist(a: &Path, b: &Path) -> f64 {
    a.values
        .chunks_exact(a.dim)
        .zip(b.values.chunks_exact(b.dim))
        .map(|(x, y)| euclid_dist(x, y))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(3), 1.0);
        assert!((0..3).all(|k| g.time(k) < g.time(k + 1)));
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn path_validates_length_and_finiteness() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert!(Path::new(g, 1, vec![0.0, 1.0]).is_err());
        assert!(Path::new(g, 1, vec![0.0, f64::INFINITY, 1.0]).is_err());
        assert!(Path::new(g, 1, vec![0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn ensemble_slices_are_point_measures() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let a = Path::new(g, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let b = Path::new(g, 1, vec![5.0, 6.0, 7.0]).unwrap();
        let e = Ensemble::new(vec![a, b], 0).unwrap();
        assert_eq!(e.slice(1).coords(), &[1.0, 6.0]);
        assert_eq!(e.measure_flow().len(), 3);
    }

    #[test]
    fn ensemble_rejects_mixed_grids() {
        let a = Path::constant(TimeGrid::new(1.0, 2).unwrap(), &[0.0]).unwrap();
        let b = Path::constant(TimeGrid::new(1.0, 3).unwrap(), &[0.0]).unwrap();
        assert!(Ensemble::new(vec![a, b], 0).is_err());
    }
}

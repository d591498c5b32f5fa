//! Input ensembles `Y^i = ξ^i + W^i`.
//!
//! Every particle draws from its own ChaCha stream `(seed, i)`, so an ensemble
//! of size `N` is a prefix of any larger ensemble sampled with the same seed.
//! All processes listed in [`NoiseProcess`] are Gaussian, hence carry
//! `exp(λ‖ω‖^α)` moments for every `α < 2`.

mod io;

pub use io::{read_binary, read_binary_file, write_binary, write_binary_file, write_csv};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, shape, Error, Result};
use crate::lattice::LatticeFunction;
use crate::measures::{EmpiricalMeasure, Ensemble, Path, TimeGrid};

/// Largest grid (in nodes) for which the fBm covariance is factorized.
pub const FBM_NODE_CAP: usize = 4096;
const JITTER: f64 = 1e-12;
const JITTER_ATTEMPTS: usize = 3;

/// Law of the initial condition `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(Vec<f64>),
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Independent coordinates with the given means and variances.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    /// Density sampled on a lattice; each node stands for the cell of width
    /// `spacing` centred on it.
    Density(CustomDensity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    InverseCdf,
    Rejection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomDensity {
    lattice: LatticeFunction,
    method: SamplingMethod,
    max_value: f64,
    marginal_cdfs: Vec<Vec<f64>>,
}

impl CustomDensity {
    /// Validates nonnegativity and rescales so the lattice Riemann sum is 1.
    pub fn new(lattice: LatticeFunction) -> Result<Self> {
        if lattice.components() != 1 {
            return Err(invalid("a density lattice must be scalar"));
        }
        if lattice.samples().iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("density samples must be finite and nonnegative"));
        }
        let mass = lattice.integral()[0];
        if !(mass > 0.0) {
            return Err(invalid("density has zero mass"));
        }
        let samples: Vec<f64> = lattice.samples().iter().map(|v| v / mass).collect();
        let lattice = lattice.with_samples(1, samples)?;

        let d = lattice.dim();
        let total: f64 = lattice.samples().iter().sum();
        let mut marginals: Vec<Vec<f64>> = lattice.extents().iter().map(|&e| vec![0.0; e]).collect();
        let mut idx = vec![0; d];
        for flat in 0..lattice.node_count() {
            lattice.index(flat, &mut idx);
            let v = lattice.samples()[flat];
            for k in 0..d {
                marginals[k][idx[k]] += v;
            }
        }
        let max_value = lattice.samples().iter().cloned().fold(0.0, f64::max);
        let mut product = true;
        for flat in 0..lattice.node_count() {
            lattice.index(flat, &mut idx);
            let mut p = 1.0;
            for k in 0..d {
                p *= marginals[k][idx[k]] / total;
            }
            let v = lattice.samples()[flat] / total;
            if (v - p).abs() > 1e-9 * (max_value / total) {
                product = false;
                break;
            }
        }
        let marginal_cdfs = marginals
            .into_iter()
            .map(|m| {
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = m
                    .iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect();
                let last = acc;
                cdf.iter_mut().for_each(|c| *c /= last);
                cdf
            })
            .collect();
        Ok(Self {
            lattice,
            method: if product {
                SamplingMethod::InverseCdf
            } else {
                SamplingMethod::Rejection
            },
            max_value,
            marginal_cdfs,
        })
    }

    pub fn lattice(&self) -> &LatticeFunction {
        &self.lattice
    }

    pub fn method(&self) -> SamplingMethod {
        self.method
    }

    /// Sup of the normalized density.
    pub fn sup(&self) -> f64 {
        self.max_value
    }

    fn nearest(&self, x: &[f64]) -> Option<usize> {
        let lf = &self.lattice;
        let mut flat = 0;
        for k in 0..lf.dim() {
            let u = ((x[k] - lf.origin()[k]) / lf.spacing()).round();
            if u < 0.0 || u > (lf.extents()[k] - 1) as f64 {
                return None;
            }
            flat += u as usize * lf.strides()[k];
        }
        Some(flat)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let lf = &self.lattice;
        let h = lf.spacing();
        match self.method {
            SamplingMethod::InverseCdf => {
                for (k, cdf) in self.marginal_cdfs.iter().enumerate() {
                    let u: f64 = rng.random();
                    let i = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                    out[k] = lf.origin()[k] + (i as f64 + rng.random::<f64>() - 0.5) * h;
                }
            }
            SamplingMethod::Rejection => loop {
                for (k, o) in out.iter_mut().enumerate() {
                    let lo = lf.origin()[k] - 0.5 * h;
                    let hi = lf.upper(k) + 0.5 * h;
                    *o = lo + (hi - lo) * rng.random::<f64>();
                }
                let v = self.nearest(out).map_or(0.0, |f| lf.samples()[f]);
                if rng.random::<f64>() * self.max_value < v {
                    break;
                }
            },
        }
    }
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point(x) => x.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Density(c) => c.lattice.dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Point(x) if x.iter().any(|v| !v.is_finite()) => {
                Err(invalid("initial point must be finite"))
            }
            InitialLaw::Uniform { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(shape("uniform box bounds differ in dimension"));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(invalid("uniform box needs lo < hi in every coordinate"));
                }
                Ok(())
            }
            InitialLaw::Gaussian { mean, variance } => {
                if mean.len() != variance.len() {
                    return Err(shape("gaussian mean and variance differ in dimension"));
                }
                if variance.iter().any(|v| !(*v >= 0.0)) {
                    return Err(invalid("gaussian variances must be nonnegative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Sup norm of the density, where one exists.
    pub fn density_sup(&self) -> Option<f64> {
        match self {
            InitialLaw::Uniform { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| 1.0 / (b - a)).product()),
            InitialLaw::Gaussian { variance, .. } if variance.iter().all(|v| *v > 0.0) => Some(
                variance
                    .iter()
                    .map(|v| (2.0 * std::f64::consts::PI * v).powf(-0.5))
                    .product(),
            ),
            InitialLaw::Density(c) => Some(c.sup()),
            _ => None,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            InitialLaw::Point(x) => out.copy_from_slice(x),
            InitialLaw::Uniform { lo, hi } => {
                for k in 0..out.len() {
                    out[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
                }
            }
            InitialLaw::Gaussian { mean, variance } => {
                for k in 0..out.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    out[k] = mean[k] + variance[k].sqrt() * z;
                }
            }
            InitialLaw::Density(c) => c.sample(rng, out),
        }
    }
}

/// The continuous driving process `W`, started at 0, independent per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseProcess {
    Zero,
    Brownian { sigma: f64 },
    Fbm { hurst: f64, sigma: f64 },
    Ou { theta: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub initial: InitialLaw,
    pub process: NoiseProcess,
}

impl NoiseSpec {
    pub fn new(initial: InitialLaw, process: NoiseProcess) -> Result<Self> {
        initial.validate()?;
        match process {
            NoiseProcess::Zero => {}
            NoiseProcess::Brownian { sigma } => check_sigma(sigma)?,
            NoiseProcess::Fbm { hurst, sigma } => {
                check_sigma(sigma)?;
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(invalid(format!("Hurst index must lie in (0, 1), got {hurst}")));
                }
            }
            NoiseProcess::Ou { theta, sigma } => {
                check_sigma(sigma)?;
                if !(theta.is_finite() && theta >= 0.0) {
                    return Err(invalid(format!("OU rate must be nonnegative, got {theta}")));
                }
            }
        }
        if initial.dim() == 0 {
            return Err(invalid("noise dimension must be positive"));
        }
        Ok(Self { initial, process })
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!("noise scale must be nonnegative, got {sigma}")));
    }
    Ok(())
}

/// RNG of particle `index` under `seed`.
pub fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// fBm covariance `(σ²/2)(t^{2H} + s^{2H} − |t−s|^{2H})` over `t_1..t_M`,
/// row-major `M×M`.
pub fn fbm_covariance(grid: &TimeGrid, hurst: f64, sigma: f64) -> Vec<f64> {
    let m = grid.steps();
    let two_h = 2.0 * hurst;
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        let t = grid.time(i + 1);
        for j in 0..m {
            let s = grid.time(j + 1);
            cov[i * m + j] = 0.5 * sigma * sigma * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h));
        }
    }
    cov
}

/// Lower Cholesky factor of a symmetric matrix, retrying with `1e-12·I`
/// jitter at most three times.
pub fn cholesky_with_jitter(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut shift = 0.0;
    for _ in 0..=JITTER_ATTEMPTS {
        if let Some(l) = cholesky(n, a, shift) {
            return Ok(l);
        }
        shift += JITTER;
    }
    Err(Error::NotPositiveDefinite {
        attempts: JITTER_ATTEMPTS,
    })
}

fn cholesky(n: usize, a: &[f64], shift: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            if i == j {
                s += shift;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Samples `N` independent input paths.
pub fn sample_paths(spec: &NoiseSpec, grid: TimeGrid, n: usize, seed: u64) -> Result<Ensemble> {
    if n == 0 {
        return Err(invalid("need at least one particle"));
    }
    let d = spec.dim();
    let m = grid.steps();
    let factor = match spec.process {
        NoiseProcess::Fbm { hurst, sigma } => {
            if grid.nodes() > FBM_NODE_CAP {
                return Err(invalid(format!(
                    "fBm grid has {} nodes, above the factorization cap {FBM_NODE_CAP}",
                    grid.nodes()
                )));
            }
            Some(cholesky_with_jitter(m, &fbm_covariance(&grid, hurst, sigma))?)
        }
        _ => None,
    };

    let members: Vec<Path> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(seed, i);
            let mut values = vec![0.0; grid.nodes() * d];
            let mut xi = vec![0.0; d];
            spec.initial.sample(&mut rng, &mut xi);
            fill_noise(&spec.process, &grid, d, factor.as_deref(), &mut rng, &mut values);
            for k in 0..grid.nodes() {
                for j in 0..d {
                    values[k * d + j] += xi[j];
                }
            }
            Path::from_raw(grid, d, values)
        })
        .collect();
    Ok(Ensemble::from_raw(grid, d, members, seed))
}

fn fill_noise(
    process: &NoiseProcess,
    grid: &TimeGrid,
    d: usize,
    factor: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
    values: &mut [f64],
) {
    let m = grid.steps();
    let dt = grid.dt();
    match *process {
        NoiseProcess::Zero => {}
        NoiseProcess::Brownian { sigma } => {
            let sd = sigma * dt.sqrt();
            for k in 1..=m {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    values[k * d + j] = values[(k - 1) * d + j] + sd * z;
                }
            }
        }
        NoiseProcess::Ou { theta, sigma } => {
            let (decay, sd) = if theta == 0.0 {
                (1.0, sigma * dt.sqrt())
            } else {
                let e = (-theta * dt).exp();
                (e, sigma * ((1.0 - e * e) / (2.0 * theta)).sqrt())
            };
            for k in 1..=m {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    values[k * d + j] = decay * values[(k - 1) * d + j] + sd * z;
                }
            }
        }
        NoiseProcess::Fbm { .. } => {
            let l = factor.expect("factor computed for fBm");
            let mut z = vec![0.0; m];
            for j in 0..d {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                for i in 0..m {
                    let row = &l[i * m..i * m + i + 1];
                    let s: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                    values[(i + 1) * d + j] = s;
                }
            }
        }
    }
}

/// `L^N(Y) = (1/N) Σ δ_{Y^i}` on path space.
pub fn empirical_input(ensemble: &Ensemble) -> EmpiricalMeasure {
    ensemble.to_measure()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{moment_norm, sup_norm, wasserstein};

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 64).unwrap()
    }

    fn bm(d: usize) -> NoiseSpec {
        NoiseSpec::new(InitialLaw::Point(vec![0.0; d]), NoiseProcess::Brownian { sigma: 1.0 }).unwrap()
    }

    #[test]
    fn zero_process_gives_constant_paths() {
        let spec = NoiseSpec::new(InitialLaw::Point(vec![1.0, -2.0]), NoiseProcess::Zero).unwrap();
        let e = sample_paths(&spec, grid(), 5, 9).unwrap();
        let c = Path::constant(grid(), &[1.0, -2.0]).unwrap();
        assert!(e.members().iter().all(|p| *p == c));
    }

    #[test]
    fn brownian_increment_variance() {
        let g = grid();
        let e = sample_paths(&bm(1), g, 2000, 2).unwrap();
        let incs: Vec<f64> = e
            .members()
            .iter()
            .flat_map(|p| p.values().windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .collect();
        let n = incs.len() as f64;
        let var = incs.iter().map(|x| x * x).sum::<f64>() / n;
        // Var of x² for a centred normal is 2dt²
        let se = (2.0f64).sqrt() * g.dt() / n.sqrt();
        assert!((var - g.dt()).abs() < 3.0 * se, "{var} vs {}", g.dt());
    }

    #[test]
    fn half_hurst_covariance_is_brownian() {
        let g = grid();
        let cov = fbm_covariance(&g, 0.5, 1.0);
        let m = g.steps();
        for i in 0..m {
            for j in 0..m {
                let expect = g.time(i + 1).min(g.time(j + 1));
                assert!((cov[i * m + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fbm_marginal_variance() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        let spec = NoiseSpec::new(InitialLaw::Point(vec![0.0]), NoiseProcess::Fbm { hurst: 0.3, sigma: 1.0 }).unwrap();
        let e = sample_paths(&spec, g, 4000, 2).unwrap();
        let var = e.members().iter().map(|p| p.point(32)[0].powi(2)).sum::<f64>() / 4000.0;
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(matches!(
            cholesky_with_jitter(2, &a),
            Err(Error::NotPositiveDefinite { attempts: 3 })
        ));
    }

    #[test]
    fn ou_stationary_variance() {
        let g = TimeGrid::new(20.0, 50).unwrap();
        let spec = NoiseSpec::new(InitialLaw::Point(vec![0.0]), NoiseProcess::Ou { theta: 1.0, sigma: 1.0 }).unwrap();
        let e = sample_paths(&spec, g, 4000, 4).unwrap();
        let var = e.members().iter().map(|p| p.point(50)[0].powi(2)).sum::<f64>() / 4000.0;
        assert!((var - 0.5).abs() < 0.05, "{var}");
    }

    #[test]
    fn reproducible_and_prefix_stable() {
        let a = sample_paths(&bm(2), grid(), 8, 77).unwrap();
        let b = sample_paths(&bm(2), grid(), 8, 77).unwrap();
        let c = sample_paths(&bm(2), grid(), 20, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.members(), &c.members()[..8]);
        let other = sample_paths(&bm(2), grid(), 8, 78).unwrap();
        assert_ne!(a.members(), other.members());
    }

    #[test]
    fn empirical_input_examples() {
        let e = sample_paths(&bm(1), grid(), 1, 3).unwrap();
        let mu = empirical_input(&e);
        assert_eq!(moment_norm(&mu, 1.0).unwrap(), sup_norm(e.member(0)));

        let e = sample_paths(&bm(1), grid(), 10, 3).unwrap();
        let mean = e.members().iter().map(sup_norm).sum::<f64>() / 10.0;
        assert!((moment_norm(&empirical_input(&e), 1.0).unwrap() - mean).abs() < 1e-14);

        let single = sample_paths(&bm(1), grid(), 1, 3).unwrap();
        let twice = Ensemble::new(vec![single.member(0).clone(); 2], 0).unwrap();
        assert!(matches!(
            wasserstein(&empirical_input(&twice), &empirical_input(&single), 1.0),
            Err(Error::UnequalSizes { .. })
        ));
    }

    #[test]
    fn custom_density_normalizes_and_picks_method() {
        let product = LatticeFunction::from_fn(vec![20, 10], vec![0.0, 0.0], 0.1, 1, |x| {
            vec![(1.0 + x[0]) * (2.0 - x[1])]
        })
        .unwrap();
        let c = CustomDensity::new(product).unwrap();
        assert_eq!(c.method(), SamplingMethod::InverseCdf);
        assert!((c.lattice().integral()[0] - 1.0).abs() < 1e-9);

        let coupled = LatticeFunction::from_fn(vec![20, 20], vec![0.0, 0.0], 0.1, 1, |x| {
            vec![if x[0] + x[1] < 1.5 { 1.0 } else { 0.0 }]
        })
        .unwrap();
        let c = CustomDensity::new(coupled).unwrap();
        assert_eq!(c.method(), SamplingMethod::Rejection);
        let spec = NoiseSpec::new(InitialLaw::Density(c), NoiseProcess::Zero).unwrap();
        let e = sample_paths(&spec, grid(), 2000, 5).unwrap();
        // nearest-node cells with x + y < 1.5 all lie below the diagonal x + y = 1.6
        assert!(e.members().iter().all(|p| p.point(0)[0] + p.point(0)[1] < 1.6));
    }

    #[test]
    fn uniform_initial_law_stays_in_box() {
        let spec = NoiseSpec::new(
            InitialLaw::Uniform {
                lo: vec![0.0, -1.0],
                hi: vec![1.0, 1.0],
            },
            NoiseProcess::Zero,
        )
        .unwrap();
        assert_eq!(spec.initial.density_sup(), Some(0.5));
        let e = sample_paths(&spec, grid(), 500, 6).unwrap();
        assert!(e.members().iter().all(|p| {
            let x = p.point(0);
            (0.0..1.0).contains(&x[0]) && (-1.0..1.0).contains(&x[1])
        }));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NoiseSpec::new(InitialLaw::Point(vec![0.0]), NoiseProcess::Fbm { hurst: 1.0, sigma: 1.0 }).is_err());
        assert!(NoiseSpec::new(InitialLaw::Point(vec![0.0]), NoiseProcess::Brownian { sigma: -1.0 }).is_err());
        let big = TimeGrid::new(1.0, FBM_NODE_CAP).unwrap();
        let spec = NoiseSpec::new(InitialLaw::Point(vec![0.0]), NoiseProcess::Fbm { hurst: 0.7, sigma: 1.0 }).unwrap();
        assert!(sample_paths(&spec, big, 1, 0).is_err());
    }
}

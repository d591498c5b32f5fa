//! Lipschitz approximation by inf-convolution on a finite cloud of visited
//! arguments `z = (x, μ)` with metric `|x − y| + d_p(μ, ν)`.

use super::{DriftSpec, PreparedMeasure, RateFn};
use crate::error::{invalid, shape, Error, Result};
use crate::measures::{euclid, euclid_dist, moment_norm, wasserstein_with_cap, EmpiricalMeasure, PointCloud};

/// `gⁿ(z_i) = min_j (g(z_j) + n · dist(i, j))` over the cloud.
pub fn inf_convolution(values: &[f64], n: f64, dist: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let k = values.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| values[j] + n * dist(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// [`inf_convolution`] on a Euclidean point cloud.
pub fn lipschitz_approximate(values: &[f64], cloud: &PointCloud, n: f64) -> Result<Vec<f64>> {
    if values.len() != cloud.len() {
        return Err(shape(format!(
            "{} values for a cloud of {} points",
            values.len(),
            cloud.len()
        )));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid(format!("n must be positive, got {n}")));
    }
    Ok(inf_convolution(values, n, |i, j| euclid_dist(cloud.point(i), cloud.point(j))))
}

/// `ρ`: 1 on `[0, 1]`, linear down to 0 on `[1, 2]`, 0 beyond.
pub fn cutoff(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        2.0 - x
    }
}

/// `fⁿ(z) = gⁿ(z) (1 + d(z, z₀)) ρ(d(z, z₀)/n)` with `g = B / (1 + d(·, z₀))`,
/// `z₀ = (0, δ₀)`, componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct InfConvolutionDrift {
    dim: usize,
    n: f64,
    p: f64,
    cap: usize,
    xs: Vec<Vec<f64>>,
    measures: Vec<EmpiricalMeasure>,
    /// `g(z_k)`, cloud-major.
    g: Vec<f64>,
    lipschitz: f64,
    growth: f64,
}

impl InfConvolutionDrift {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn cloud_len(&self) -> usize {
        self.xs.len()
    }

    /// Largest difference quotient of `fⁿ` over cloud pairs.
    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    /// `c` with `|fⁿ(x, μ)| ≤ c (1 + |x| + ‖μ‖_p)`.
    pub fn growth(&self) -> RateFn {
        RateFn::Constant(self.growth)
    }

    /// `d_p(μ, μ_k)` for every cloud measure, and `‖μ‖_p`.
    pub(crate) fn measure_distances(&self, mu: &PointCloud) -> Result<(Vec<f64>, f64)> {
        let m = EmpiricalMeasure::Points(mu.clone());
        let d = self
            .measures
            .iter()
            .map(|nu| wasserstein_with_cap(&m, nu, self.p, self.cap))
            .collect::<Result<Vec<_>>>()?;
        Ok((d, moment_norm(&m, self.p)?))
    }

    fn eval_with(&self, x: &[f64], dists: &[f64], moment: f64, out: &mut [f64]) {
        let d0 = euclid(x) + moment;
        let rho = cutoff(d0 / self.n);
        if rho == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let dz: Vec<f64> = self
            .xs
            .iter()
            .zip(dists)
            .map(|(xk, dk)| euclid_dist(x, xk) + dk)
            .collect();
        for (c, o) in out.iter_mut().enumerate() {
            let gn = dz
                .iter()
                .enumerate()
                .map(|(k, d)| self.g[k * self.dim + c] + self.n * d)
                .fold(f64::INFINITY, f64::min);
            *o = gn * (1.0 + d0) * rho;
        }
    }

    pub(crate) fn eval_into(&self, x: &[f64], prep: &PreparedMeasure<'_>, out: &mut [f64]) {
        let (dists, moment) = prep
            .cloud_distances
            .as_ref()
            .expect("prepared by DriftSpec::prepare");
        self.eval_with(x, dists, *moment, out);
    }
}

/// Builds the approximation from the arguments `(x_k, μ_k)`; the `μ_k` must share
/// one atom count. Arguments with `|x| + ‖μ‖_p > radius` are rejected.
pub fn approximate_drift(
    spec: &DriftSpec,
    args: &[(Vec<f64>, PointCloud)],
    n: f64,
    p: f64,
    radius: f64,
) -> Result<DriftSpec> {
    spec.validate()?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid(format!("n must be positive, got {n}")));
    }
    if args.is_empty() {
        return Err(invalid("approximation cloud is empty"));
    }
    if let DriftSpec::Zero { dim } = spec {
        return Ok(DriftSpec::Zero { dim: *dim });
    }
    let dim = spec.dim();
    let cap = args[0].1.len().max(crate::measures::DEFAULT_ASSIGNMENT_CAP);
    let mut xs = Vec::with_capacity(args.len());
    let mut measures = Vec::with_capacity(args.len());
    let mut d0 = Vec::with_capacity(args.len());
    let mut g = Vec::with_capacity(args.len() * dim);
    for (x, mu) in args {
        if x.len() != dim || mu.dim() != dim {
            return Err(shape("approximation argument has the wrong dimension"));
        }
        if mu.len() != args[0].1.len() {
            return Err(Error::UnequalSizes {
                left: args[0].1.len(),
                right: mu.len(),
            });
        }
        let m = EmpiricalMeasure::Points(mu.clone());
        let r = euclid(x) + moment_norm(&m, p)?;
        if r > radius {
            return Err(invalid(format!("argument at distance {r} exceeds the cloud radius {radius}")));
        }
        let b = super::eval_drift(spec, 0.0, x, &m)?;
        g.extend(b.iter().map(|v| v / (1.0 + r)));
        xs.push(x.clone());
        measures.push(m);
        d0.push(r);
    }

    let k = xs.len();
    let mut dist = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let d = euclid_dist(&xs[i], &xs[j]) + wasserstein_with_cap(&measures[i], &measures[j], p, cap)?;
            dist[i * k + j] = d;
            dist[j * k + i] = d;
        }
    }

    let growth = (0..dim)
        .map(|c| (0..k).map(|i| g[i * dim + c].abs()).fold(0.0, f64::max).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut drift = InfConvolutionDrift {
        dim,
        n,
        p,
        cap,
        xs,
        measures,
        g,
        lipschitz: 0.0,
        growth,
    };

    // measured Lipschitz constant of fⁿ on the cloud itself
    let mut values = vec![0.0; k * dim];
    for i in 0..k {
        let row = &dist[i * k..(i + 1) * k];
        let (x, out) = (drift.xs[i].clone(), &mut values[i * dim..(i + 1) * dim]);
        drift.eval_with(&x, row, d0[i] - euclid(&x), out);
    }
    let mut lip: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let d = dist[i * k + j];
            if d > 0.0 {
                let diff = euclid_dist(&values[i * dim..(i + 1) * dim], &values[j * dim..(j + 1) * dim]);
                lip = lip.max(diff / d);
            }
        }
    }
    drift.lipschitz = lip;
    Ok(DriftSpec::Approximated(std::sync::Arc::new(drift)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drifts::eval_drift;
    use proptest::prelude::*;

    fn grid_cloud() -> PointCloud {
        PointCloud::new(1, (0..=64).map(|k| -1.0 + k as f64 / 32.0).collect()).unwrap()
    }

    #[test]
    fn constant_is_fixed() {
        let cloud = grid_cloud();
        let g = vec![1.0; cloud.len()];
        for n in [0.5, 1.0, 7.0] {
            assert_eq!(lipschitz_approximate(&g, &cloud, n).unwrap(), g);
        }
    }

    #[test]
    fn step_becomes_ramp() {
        let cloud = PointCloud::new(1, (0..=400).map(|k| -1.0 + k as f64 / 200.0).collect()).unwrap();
        let g: Vec<f64> = cloud.coords().iter().map(|z| if *z > 0.0 { 1.0 } else { 0.0 }).collect();
        let h = 1.0 / 200.0;
        for n in [1.0, 3.0, 10.0] {
            let gn = lipschitz_approximate(&g, &cloud, n).unwrap();
            for (z, v) in cloud.coords().iter().zip(&gn) {
                let want = (n * z.max(0.0)).min(1.0);
                assert!((v - want).abs() <= n * h + 1e-12, "n = {n}, z = {z}");
            }
        }
    }

    #[test]
    fn lipschitz_data_is_unchanged() {
        let cloud = grid_cloud();
        let g: Vec<f64> = cloud.coords().iter().map(|z| (z - 0.25).abs()).collect();
        for n in [1.0, 2.0, 4.0] {
            assert_eq!(lipschitz_approximate(&g, &cloud, n).unwrap(), g);
        }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(1.0), 1.0);
        assert_eq!(cutoff(1.5), 0.5);
        assert_eq!(cutoff(2.0), 0.0);
        assert_eq!(cutoff(9.0), 0.0);
    }

    fn args(seed: u64, count: usize) -> Vec<(Vec<f64>, PointCloud)> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let x = vec![rng.random_range(-0.5..0.5)];
                let mu = PointCloud::new(1, (0..4).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
                (x, mu)
            })
            .collect()
    }

    #[test]
    fn lipschitz_drift_is_reproduced_inside_radius() {
        let spec = DriftSpec::mean_attraction(1, 1.0);
        let a = args(3, 12);
        let approx = approximate_drift(&spec, &a, 4.0, 1.0, 10.0).unwrap();
        for (x, mu) in &a {
            let m = EmpiricalMeasure::Points(mu.clone());
            let want = eval_drift(&spec, 0.0, x, &m).unwrap()[0];
            let got = eval_drift(&approx, 0.0, x, &m).unwrap()[0];
            assert!((want - got).abs() < 1e-12, "{want} vs {got}");
        }
        let DriftSpec::Approximated(inner) = &approx else { unreachable!() };
        assert!(inner.lipschitz_constant() <= 4.0 * (1.0 + 1e-12));
    }

    #[test]
    fn zero_and_cutoff_region() {
        let a = args(5, 6);
        assert_eq!(
            approximate_drift(&DriftSpec::zero(1), &a, 1.0, 1.0, 10.0).unwrap(),
            DriftSpec::zero(1)
        );
        let spec = DriftSpec::mean_attraction(1, 1.0);
        let approx = approximate_drift(&spec, &a, 0.5, 1.0, 10.0).unwrap();
        let far = EmpiricalMeasure::scalars(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(eval_drift(&approx, 0.0, &[1.0], &far).unwrap(), vec![0.0]);
        assert!(approximate_drift(&spec, &a, 1.0, 1.0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn lemma_properties(vals in prop::collection::vec(-4i32..4, 33)) {
            // dyadic data keeps every sum exact
            let cloud = PointCloud::new(1, (0..33).map(|k| -1.0 + k as f64 / 16.0).collect()).unwrap();
            let g: Vec<f64> = vals.iter().map(|v| *v as f64 / 4.0).collect();
            let sup = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let mut prev: Option<Vec<f64>> = None;
            for n in [1.0, 2.0, 4.0, 8.0, 64.0] {
                let gn = lipschitz_approximate(&g, &cloud, n).unwrap();
                for i in 0..gn.len() {
                    prop_assert!(gn[i] <= g[i] && gn[i].abs() <= sup);
                    for j in 0..gn.len() {
                        let d = (cloud.point(i)[0] - cloud.point(j)[0]).abs();
                        prop_assert!((gn[i] - gn[j]).abs() <= n * d);
                    }
                }
                if let Some(p) = &prev {
                    prop_assert!(p.iter().zip(&gn).all(|(a, b)| a <= b));
                }
                prev = Some(gn);
            }
            // n beyond the largest difference quotient recovers g
            prop_assert_eq!(prev.unwrap(), g);
        }
    }
}

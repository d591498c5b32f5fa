use super::{DriftSpec, Kernel};
use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeFunction;

/// Smooths a lattice kernel with a truncated Gaussian bump of radius `eps`
/// (`σ = eps/2`), applied separably along each axis. Taps falling outside the
/// lattice are dropped and the remaining weights renormalized, so constants are
/// preserved up to the boundary.
pub fn mollify_lattice(lf: &LatticeFunction, eps: f64) -> Result<LatticeFunction> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("mollifier radius must be positive, got {eps}")));
    }
    let h = lf.spacing();
    if h > eps / 2.0 {
        return Err(invalid(format!(
            "mollifier radius {eps} is below the lattice resolution (spacing {h})"
        )));
    }
    let sigma = eps / 2.0;
    let reach = (eps / h + 1e-9).floor() as isize;
    let weights: Vec<f64> = (-reach..=reach)
        .map(|j| {
            let x = j as f64 * h;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();

    let m = lf.components();
    let extents = lf.extents().to_vec();
    let strides = lf.strides().to_vec();
    let mut cur = lf.samples().to_vec();
    let mut idx = vec![0usize; lf.dim()];
    for axis in 0..lf.dim() {
        let len = extents[axis] as isize;
        let stride = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for flat in 0..lf.node_count() {
            lf.index(flat, &mut idx);
            let i = idx[axis] as isize;
            let mut norm = 0.0;
            let out = &mut next[flat * m..(flat + 1) * m];
            for (t, w) in weights.iter().enumerate() {
                let j = i + t as isize - reach;
                if j < 0 || j >= len {
                    continue;
                }
                norm += w;
                let src = (flat as isize + (j - i) * stride as isize) as usize;
                for c in 0..m {
                    out[c] += w * cur[src * m + c];
                }
            }
            out.iter_mut().for_each(|v| *v /= norm);
        }
        cur = next;
    }
    lf.with_samples(m, cur)
}

/// Mollifies the lattice kernel of a convolution drift; declared exponents and
/// divergence bound carry over.
pub fn mollify_kernel(spec: &DriftSpec, eps: f64) -> Result<DriftSpec> {
    match spec {
        DriftSpec::ConvolutionKernel {
            kernel: Kernel::Lattice(lf),
            exponents,
            divergence_bound,
        } => Ok(DriftSpec::ConvolutionKernel {
            kernel: Kernel::lattice(mollify_lattice(lf, eps)?)?,
            exponents: *exponents,
            divergence_bound: *divergence_bound,
        }),
        _ => Err(Error::Unsupported("mollification needs a lattice convolution kernel".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_fixed() {
        let lf = LatticeFunction::from_fn(vec![21, 17], vec![-1.0, -1.0], 0.125, 2, |_| vec![3.0, -1.5]).unwrap();
        let out = mollify_lattice(&lf, 0.5).unwrap();
        for (a, b) in out.samples().iter().zip(lf.samples()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn linear_is_fixed_away_from_boundary() {
        let h = 1.0 / 64.0;
        let lf = LatticeFunction::from_fn(vec![257], vec![-2.0], h, 1, |x| vec![x[0]]).unwrap();
        let eps = 0.25;
        let out = mollify_lattice(&lf, eps).unwrap();
        let margin = (eps / h).ceil() as usize;
        for k in margin..257 - margin {
            assert!((out.samples()[k] - lf.samples()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_mass_and_ramp() {
        let h = 1.0 / 128.0;
        let lf = LatticeFunction::from_fn(vec![1025], vec![-4.0], h, 1, |x| {
            vec![if x[0].abs() <= 1.0 { 1.0 } else { 0.0 }]
        })
        .unwrap();
        let eps = 0.1;
        let out = mollify_lattice(&lf, eps).unwrap();
        assert!((out.integral()[0] - lf.integral()[0]).abs() < 1e-10);
        let mut x = [0.0];
        for k in 0..1025 {
            out.node_coords(k, &mut x);
            let v = out.samples()[k];
            if (x[0].abs() - 1.0).abs() > eps + 1e-9 {
                assert_eq!(v, lf.samples()[k]);
            }
            assert!((0.0..=1.0 + 1e-15).contains(&v));
        }
    }

    #[test]
    fn rejects_coarse_lattice() {
        let lf = LatticeFunction::from_fn(vec![9], vec![-1.0], 0.25, 1, |x| vec![x[0]]).unwrap();
        assert!(mollify_lattice(&lf, 0.4).is_err());
        assert!(mollify_lattice(&lf, 0.5).is_ok());
    }

    #[test]
    fn divergence_does_not_grow() {
        let lf = LatticeFunction::from_fn(vec![65, 65], vec![-2.0, -2.0], 1.0 / 16.0, 2, |x| {
            vec![(3.0 * x[1]).sin() - 0.3 * x[0], x[0].cos() - 0.3 * x[1]]
        })
        .unwrap();
        let before = lf.divergence().unwrap().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let out = mollify_lattice(&lf, 0.25).unwrap();
        let after = out.divergence().unwrap().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(after <= before + lf.spacing());
    }
}

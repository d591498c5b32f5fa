//! Regularly sampled functions `ℝ^d → ℝ^m`.
//!
//! Text file layout (whitespace separated, `#` starts a comment):
//!
//! ```text
//! dim 2
//! components 2
//! extents 64 64
//! origin -2.0 -2.0
//! spacing 0.0625
//! samples
//! <extents product × components values, row-major, components innermost>
//! ```

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::error::{invalid, shape, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    extents: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    components: usize,
    samples: Vec<f64>,
    strides: Vec<usize>,
}

impl LatticeFunction {
    pub fn new(
        extents: Vec<usize>,
        origin: Vec<f64>,
        spacing: f64,
        components: usize,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if extents.is_empty() || extents.len() != origin.len() {
            return Err(shape("extents and origin must share a nonzero dimension"));
        }
        if extents.iter().any(|&e| e < 2) {
            return Err(invalid("every lattice axis needs at least two nodes"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("lattice spacing must be positive, got {spacing}")));
        }
        if components == 0 {
            return Err(invalid("lattice functions need at least one component"));
        }
        let nodes: usize = extents.iter().product();
        if samples.len() != nodes * components {
            return Err(shape(format!(
                "lattice expects {} samples, got {}",
                nodes * components,
                samples.len()
            )));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(invalid("lattice samples contain NaN"));
        }
        let d = extents.len();
        let mut strides = vec![1usize; d];
        for k in (0..d - 1).rev() {
            strides[k] = strides[k + 1] * extents[k + 1];
        }
        Ok(Self {
            extents,
            origin,
            spacing,
            components,
            samples,
            strides,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(
        extents: Vec<usize>,
        origin: Vec<f64>,
        spacing: f64,
        components: usize,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let nodes: usize = extents.iter().product();
        let mut lf = Self::new(
            extents,
            origin,
            spacing,
            components,
            vec![0.0; nodes * components],
        )?;
        let mut x = vec![0.0; lf.dim()];
        for flat in 0..nodes {
            lf.node_coords(flat, &mut x);
            let v = f(&x);
            if v.len() != components {
                return Err(shape("sample closure returned the wrong number of components"));
            }
            lf.samples[flat * components..(flat + 1) * components].copy_from_slice(&v);
        }
        if lf.samples.iter().any(|v| v.is_nan()) {
            return Err(invalid("lattice samples contain NaN"));
        }
        Ok(lf)
    }

    /// Same lattice, new samples.
    pub fn with_samples(&self, components: usize, samples: Vec<f64>) -> Result<Self> {
        Self::new(self.extents.clone(), self.origin.clone(), self.spacing, components, samples)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn node_count(&self) -> usize {
        self.samples.len() / self.components
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn value(&self, flat: usize) -> &[f64] {
        &self.samples[flat * self.components..(flat + 1) * self.components]
    }

    pub fn index(&self, flat: usize, out: &mut [usize]) {
        let mut rest = flat;
        for k in 0..self.dim() {
            out[k] = rest / self.strides[k];
            rest %= self.strides[k];
        }
    }

    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for k in 0..self.dim() {
            let i = rest / self.strides[k];
            rest %= self.strides[k];
            out[k] = self.origin[k] + i as f64 * self.spacing;
        }
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + (self.extents[axis] - 1) as f64 * self.spacing
    }

    /// Euclidean norm of the sample at every node.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples
            .chunks_exact(self.components)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Multilinear interpolation, zero outside the lattice box.
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        assert!(d <= 8, "interpolation supports at most 8 dimensions");
        for k in 0..d {
            let u = (x[k] - self.origin[k]) / self.spacing;
            let last = (self.extents[k] - 1) as f64;
            if !(u >= 0.0 && u <= last) {
                return;
            }
            let i = (u.floor() as usize).min(self.extents[k] - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat += (base[k] + up as usize) * self.strides[k];
            }
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.value(flat)) {
                *o += w * v;
            }
        }
    }

    /// Partial derivative `∂_axis` of every component by central differences,
    /// one-sided at the boundary.
    pub fn partial(&self, axis: usize) -> Vec<f64> {
        let m = self.components;
        let n = self.extents[axis];
        let stride = self.strides[axis];
        let h = self.spacing;
        let mut out = vec![0.0; self.samples.len()];
        let mut idx = vec![0; self.dim()];
        for flat in 0..self.node_count() {
            self.index(flat, &mut idx);
            let i = idx[axis];
            let (lo, hi, width) = if i == 0 {
                (flat, flat + stride, h)
            } else if i == n - 1 {
                (flat - stride, flat, h)
            } else {
                (flat - stride, flat + stride, 2.0 * h)
            };
            for c in 0..m {
                out[flat * m + c] = (self.samples[hi * m + c] - self.samples[lo * m + c]) / width;
            }
        }
        out
    }

    /// Frobenius norm of the discrete Jacobian at every node.
    pub fn jacobian_norm(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.node_count()];
        for axis in 0..self.dim() {
            let p = self.partial(axis);
            for (a, v) in acc.iter_mut().zip(p.chunks_exact(self.components)) {
                *a += v.iter().map(|x| x * x).sum::<f64>();
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        acc
    }

    /// Discrete divergence; requires `components == dim`.
    pub fn divergence(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        if self.components != d {
            return Err(shape("divergence needs a vector field with dim components"));
        }
        let mut div = vec![0.0; self.node_count()];
        for axis in 0..d {
            let p = self.partial(axis);
            for (flat, v) in div.iter_mut().enumerate() {
                *v += p[flat * d + axis];
            }
        }
        Ok(div)
    }

    /// Riemann sum of every component.
    pub fn integral(&self) -> Vec<f64> {
        let cell = self.spacing.powi(self.dim() as i32);
        let mut acc = vec![0.0; self.components];
        for v in self.samples.chunks_exact(self.components) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a *= cell);
        acc
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(s, "dim {}", self.dim());
        let _ = writeln!(s, "components {}", self.components);
        let _ = writeln!(s, "extents {}", join(self.extents.iter().map(|e| e.to_string()).collect()));
        let _ = writeln!(s, "origin {}", join(self.origin.iter().map(|e| format!("{e:?}")).collect()));
        let _ = writeln!(s, "spacing {:?}", self.spacing);
        let _ = writeln!(s, "samples");
        for v in self.samples.chunks_exact(self.components) {
            let _ = writeln!(s, "{}", join(v.iter().map(|e| format!("{e:?}")).collect()));
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut dim = None;
        let mut components = None;
        let mut extents = None;
        let mut origin = None;
        let mut spacing = None;
        let mut samples = Vec::new();
        let mut in_samples = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| format!("line {}: {what}", lineno + 1);
            if in_samples {
                for tok in line.split_whitespace() {
                    samples.push(tok.parse::<f64>().map_err(|_| bad("bad sample value"))?);
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let rest: Vec<&str> = parts.collect();
            let floats = || -> std::result::Result<Vec<f64>, String> {
                rest.iter().map(|t| t.parse::<f64>().map_err(|_| bad("bad number"))).collect()
            };
            let ints = || -> std::result::Result<Vec<usize>, String> {
                rest.iter().map(|t| t.parse::<usize>().map_err(|_| bad("bad integer"))).collect()
            };
            match key {
                "dim" => dim = ints()?.first().copied(),
                "components" => components = ints()?.first().copied(),
                "extents" => extents = Some(ints()?),
                "origin" => origin = Some(floats()?),
                "spacing" => spacing = floats()?.first().copied(),
                "samples" => in_samples = true,
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        let dim = dim.ok_or("missing `dim`")?;
        let extents = extents.ok_or("missing `extents`")?;
        let origin = origin.ok_or("missing `origin`")?;
        if extents.len() != dim || origin.len() != dim {
            return Err(format!("`extents` and `origin` must have {dim} entries"));
        }
        Self::new(
            extents,
            origin,
            spacing.ok_or("missing `spacing`")?,
            components.ok_or("missing `components`")?,
            samples,
        )
        .map_err(|e| e.to_string())
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear2d() -> LatticeFunction {
        LatticeFunction::from_fn(vec![9, 9], vec![-1.0, -1.0], 0.25, 2, |x| {
            vec![2.0 * x[0] - x[1], x[0] + 3.0 * x[1]]
        })
        .unwrap()
    }

    #[test]
    fn interpolation_reproduces_affine_fields() {
        let lf = linear2d();
        let mut out = [0.0; 2];
        lf.interpolate(&[0.3, -0.55], &mut out);
        assert!((out[0] - 1.15).abs() < 1e-12 && (out[1] + 1.35).abs() < 1e-12);
        lf.interpolate(&[1.0, 1.0], &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] - 4.0).abs() < 1e-12);
        lf.interpolate(&[1.01, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn differences_are_exact_on_affine_fields() {
        let lf = linear2d();
        let div = lf.divergence().unwrap();
        assert!(div.iter().all(|v| (v - 5.0).abs() < 1e-12));
        let jn = lf.jacobian_norm();
        assert!(jn.iter().all(|v| (v - 15f64.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn text_round_trip() {
        let lf = linear2d();
        let back = LatticeFunction::parse(&lf.to_text()).unwrap();
        assert_eq!(back, lf);
        assert!(LatticeFunction::parse("dim 1\nbogus 3\n").is_err());
        assert!(LatticeFunction::parse("dim 1\ncomponents 1\nextents 3\norigin 0\nspacing 1\nsamples\n1 2\n").is_err());
    }

    #[test]
    fn rejects_nan_and_short_axes() {
        assert!(LatticeFunction::new(vec![1], vec![0.0], 1.0, 1, vec![0.0]).is_err());
        assert!(LatticeFunction::new(vec![2], vec![0.0], 1.0, 1, vec![0.0, f64::NAN]).is_err());
    }
}

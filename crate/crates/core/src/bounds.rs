//! Theoretical stability bounds: Grönwall factors, a priori path bounds and the
//! Bihari function `M(r) = G⁻¹(G(r) + κ)`.

use crate::error::{invalid, Error, Result};
use crate::measures::{sup_norm, Ensemble};

/// Nodes per quadrature segment before doubling.
pub const QUADRATURE_NODES: usize = 2000;
const BISECTION_ITERS: usize = 200;
const BRACKET_CAP: f64 = 1e300;

/// Modulus of continuity `f`, concave and nondecreasing with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Modulus {
    /// `f(u) = slope · u`.
    Linear { slope: f64 },
    /// `f(u) = u (1 − ln u)` on `(0, 1]`, `f(u) = 1` beyond.
    OsgoodLog,
    /// Piecewise linear through `(xs[i], ys[i])`, `xs[0] = ys[0] = 0`, extended
    /// beyond the last node with the last slope.
    Sampled { xs: Vec<f64>, ys: Vec<f64> },
}

impl Modulus {
    pub fn tag(&self) -> &'static str {
        match self {
            Modulus::Linear { .. } => "linear",
            Modulus::OsgoodLog => "osgood_log",
            Modulus::Sampled { .. } => "sampled",
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Linear { slope } => slope * u,
            Modulus::OsgoodLog => {
                if u <= 1.0 {
                    u * (1.0 - u.ln())
                } else {
                    1.0
                }
            }
            Modulus::Sampled { xs, ys } => {
                let n = xs.len();
                let k = match xs.partition_point(|x| *x < u) {
                    0 => 1,
                    i if i >= n => n - 1,
                    i => i,
                };
                let slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
                ys[k - 1] + slope * (u - xs[k - 1])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Declaration(format!("modulus: {m}")));
        match self {
            Modulus::Linear { slope } => {
                if !(slope.is_finite() && *slope > 0.0) {
                    return bad("linear slope must be positive and finite");
                }
            }
            Modulus::OsgoodLog => {}
            Modulus::Sampled { xs, ys } => {
                if xs.len() != ys.len() || xs.len() < 2 {
                    return bad("needs at least two (x, f(x)) samples of equal length");
                }
                if xs[0] != 0.0 || ys[0] != 0.0 {
                    return bad("first sample must be f(0) = 0");
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return bad("samples must be finite");
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("abscissae must be strictly increasing");
                }
                if ys[1] <= 0.0 {
                    return bad("f must be positive away from 0");
                }
                let slopes: Vec<f64> = (1..xs.len())
                    .map(|i| (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]))
                    .collect();
                if slopes.iter().any(|s| *s < 0.0) {
                    return bad("samples must be nondecreasing");
                }
                if slopes.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-15) {
                    return bad("samples must be concave");
                }
            }
        }
        Ok(())
    }

    /// Points where `r / f(r)` is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Modulus::Linear { .. } => Vec::new(),
            Modulus::OsgoodLog => vec![1.0],
            Modulus::Sampled { xs, .. } => xs[1..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    ClosedForm,
    Quadrature,
}

impl BoundMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BoundMethod::ClosedForm => "closed-form",
            BoundMethod::Quadrature => "quadrature+inversion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    /// Finite, or `+∞` with `reason` set.
    pub value: f64,
    pub method: BoundMethod,
    pub error_estimate: f64,
    pub reason: Option<String>,
}

impl BoundReport {
    fn closed(name: &str, inputs: &[(&str, f64)], value: f64) -> Self {
        BoundReport {
            name: name.into(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            method: BoundMethod::ClosedForm,
            error_estimate: 0.0,
            reason: (!value.is_finite()).then(|| "overflow".to_string()),
        }
    }
}

/// Quadrature value with its Richardson error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// `∫_a^b r / f(r) d(ln r)` for `0 < a ≤ b`, split at the modulus breakpoints.
fn log_integral(f: &Modulus, a: f64, b: f64, nodes: usize) -> Quadrature {
    let mut cuts = vec![a];
    cuts.extend(f.breakpoints().into_iter().filter(|x| *x > a && *x < b));
    cuts.push(b);
    let g = |s: f64| {
        let r = s.exp();
        r / f.eval(r)
    };
    let trap = |lo: f64, hi: f64, n: usize| {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (g(lo) + g(hi));
        for i in 1..n {
            acc += g(lo + h * i as f64);
        }
        acc * h
    };
    let mut value = 0.0;
    let mut error = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0].ln(), w[1].ln());
        if hi <= lo {
            continue;
        }
        let tn = trap(lo, hi, nodes);
        let t2n = trap(lo, hi, 2 * nodes);
        value += t2n + (t2n - tn) / 3.0;
        error += (t2n - tn).abs() / 3.0;
    }
    Quadrature { value, error }
}

/// `G(u) = ∫_{x0}^u dr / f(r)`, integrated in `ln r`.
pub fn bihari_g(f: &Modulus, u: f64, x0: f64) -> Result<Quadrature> {
    f.validate()?;
    if !(u > 0.0 && u.is_finite()) || !(x0 > 0.0 && x0.is_finite()) {
        return Err(invalid(format!("G needs u, x0 > 0, got u = {u}, x0 = {x0}")));
    }
    Ok(signed_integral(f, x0, u))
}

fn signed_integral(f: &Modulus, from: f64, to: f64) -> Quadrature {
    if from <= to {
        log_integral(f, from, to, QUADRATURE_NODES)
    } else {
        let q = log_integral(f, to, from, QUADRATURE_NODES);
        Quadrature {
            value: -q.value,
            error: q.error,
        }
    }
}

/// `M(r) = G⁻¹(G(r) + κ)` with `G` anchored at `x0 = 1`.
pub fn bihari_m(f: &Modulus, kappa: f64, r: f64) -> Result<BoundReport> {
    bihari_m_anchored(f, kappa, r, 1.0)
}

/// [`bihari_m`] with an explicit anchor `x0` for `G`.
pub fn bihari_m_anchored(f: &Modulus, kappa: f64, r: f64, x0: f64) -> Result<BoundReport> {
    f.validate()?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid(format!("κ must be finite and nonnegative, got {kappa}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("r must be finite and nonnegative, got {r}")));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(invalid(format!("x0 must be positive, got {x0}")));
    }
    let inputs = vec![
        ("kappa".to_string(), kappa),
        ("r".to_string(), r),
        ("x0".to_string(), x0),
    ];
    let report = |value: f64, error_estimate: f64| BoundReport {
        name: format!("bihari_M[{}]", f.tag()),
        inputs: inputs.clone(),
        value,
        method: BoundMethod::Quadrature,
        error_estimate,
        reason: None,
    };
    if r == 0.0 {
        return Ok(report(0.0, 0.0));
    }
    if kappa == 0.0 {
        return Ok(report(r, 0.0));
    }

    let gr = signed_integral(f, x0, r);
    let target = gr.value + kappa;
    let g_at = |u: f64| signed_integral(f, x0, u).value;

    // M(r) ≥ r since κ ≥ 0; expand upward until the target is bracketed
    let mut lo = r;
    let mut hi = (2.0 * r).max(1.0);
    while g_at(hi) < target {
        lo = hi;
        hi *= 16.0;
        if hi > BRACKET_CAP {
            return Err(Error::Bracket {
                target,
                lo: r,
                hi: BRACKET_CAP,
            });
        }
    }
    let mut g_hi_err = 0.0;
    for _ in 0..BISECTION_ITERS {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        let q = signed_integral(f, x0, mid);
        if q.value < target {
            lo = mid;
        } else {
            hi = mid;
            g_hi_err = q.error;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let m = 0.5 * (lo + hi);
    // dM = f(M) dG
    let err = f.eval(m) * (gr.error + g_hi_err) + (hi - lo);
    Ok(report(m, err))
}

/// Osgood stability bound `M(r)` with `κ = 2‖h‖_{L¹}`.
pub fn osgood_stability_bound(f: &Modulus, h_l1: f64, r: f64) -> Result<BoundReport> {
    let mut rep = bihari_m(f, 2.0 * h_l1, r)?;
    rep.name = format!("osgood_stability[{}]", f.tag());
    rep.inputs.push(("h_l1".into(), h_l1));
    Ok(rep)
}

/// `e^{2‖g‖_{L¹}}`.
pub fn lipschitz_stability_bound(g_l1: f64) -> f64 {
    (2.0 * g_l1).exp()
}

pub fn lipschitz_stability_report(g_l1: f64) -> BoundReport {
    BoundReport::closed("lipschitz_stability", &[("g_l1", g_l1)], lipschitz_stability_bound(g_l1))
}

/// Pathwise a priori bound `e^{‖h‖}(‖h‖(1 + m) + ‖Y(ω)‖)` from Grönwall applied
/// to `|X_t| ≤ |Y_t| + ∫ h (1 + |X| + m)`, where `m` is the ensemble moment of
/// `‖X‖`.
pub fn apriori_path_bound(h_l1: f64, y_sup: f64, ensemble_moment: f64) -> f64 {
    h_l1.exp() * (h_l1 * (1.0 + ensemble_moment) + y_sup)
}

pub fn apriori_report(h_l1: f64, y_sup: f64, ensemble_moment: f64) -> BoundReport {
    BoundReport::closed(
        "apriori_path",
        &[("h_l1", h_l1), ("y_sup", y_sup), ("moment", ensemble_moment)],
        apriori_path_bound(h_l1, y_sup, ensemble_moment),
    )
}

/// Bound on `⟦X − Y⟧_h`: increments of `∫B` over `[s, t]` are at most
/// `∫_s^t h · (1 + ‖X(ω)‖ + E‖X‖)`.
pub fn seminorm_bound(x_sup: f64, ensemble_moment: f64) -> f64 {
    1.0 + x_sup + ensemble_moment
}

/// `(1/N) Σ exp(c ‖Y¹_i‖^α) + (1/N) Σ exp(c ‖Y²_i‖^α)`; overflow gives `+∞`.
pub fn local_lip_f(ens1: &Ensemble, ens2: &Ensemble, c: f64, alpha: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("local Lipschitz factor needs c, α > 0"));
    }
    let avg = |e: &Ensemble| {
        let n = e.len() as f64;
        e.members()
            .iter()
            .map(|p| (c * sup_norm(p).powf(alpha)).exp())
            .sum::<f64>()
            / n
    };
    let v = avg(ens1) + avg(ens2);
    Ok(if v.is_nan() { f64::INFINITY } else { v })
}

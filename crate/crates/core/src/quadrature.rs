//! Gauss–Jacobi / Gauss–Legendre rules and adaptive integration of
//! integrands carrying algebraic endpoint weights.
//!
//! All integrals here have the shape
//!
//! ```text
//!     ∫_a^b (x - a)^p (b - x)^q f(x) dx
//! ```
//!
//! with `f` smooth (or at least continuous). Sub-intervals touching a
//! weighted endpoint are integrated with a Gauss–Jacobi rule that absorbs
//! the power exactly; all other sub-intervals use Gauss–Legendre on the full
//! integrand.

use nalgebra::DMatrix;

use crate::error::{domain, KimuraError, Result};
use crate::special::ln_gamma;

/// A Gauss rule on [-1, 1] for the weight (1 - t)^alpha (1 + t)^beta.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl GaussRule {
    /// Golub–Welsch construction of the `n`-point Gauss–Jacobi rule.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain("quadrature rule needs at least one node"));
        }
        if !(alpha > -1.0 && beta > -1.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(domain(format!(
                "Jacobi exponents must exceed -1 (alpha = {alpha}, beta = {beta})"
            )));
        }
        let ab = alpha + beta;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let k = i as f64;
            let denom = 2.0 * k + ab;
            let diag = if i == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / (denom * (denom + 2.0))
            };
            jac[(i, i)] = diag;
            if i + 1 < n {
                let k1 = k + 1.0;
                let d1 = 2.0 * k1 + ab;
                let num = 4.0 * k1 * (k1 + alpha) * (k1 + beta) * (k1 + ab);
                let off = (num / (d1 * d1 * (d1 + 1.0) * (d1 - 1.0))).sqrt();
                // k = 0 with alpha + beta = -1 makes d1 - 1 vanish; use the limit
                let off = if off.is_finite() {
                    off
                } else {
                    (4.0 * (1.0 + alpha) * (1.0 + beta) / ((ab + 2.0).powi(2) * (ab + 3.0))).sqrt()
                };
                jac[(i, i + 1)] = off;
                jac[(i + 1, i)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v * v)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            alpha,
            beta,
        })
    }

    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0, 0.0).expect("Legendre rule parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Nodes and weights mapped onto [a, b] such that
    /// Σ wᵢ f(xᵢ) ≈ ∫_a^b (b - x)^alpha (x - a)^beta f(x) dx.
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let scale = half.powf(self.alpha + self.beta + 1.0);
        let xs = self.nodes.iter().map(|t| a + half * (1.0 + t)).collect();
        let ws = self.weights.iter().map(|w| w * scale).collect();
        (xs, ws)
    }

    /// ∫_a^b (b - x)^alpha (x - a)^beta f(x) dx.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let scale = half.powf(self.alpha + self.beta + 1.0);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + half * (1.0 + t));
        }
        acc * scale
    }
}

/// Tolerances and limits for [`integrate_weighted`].
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub order: usize,
    pub max_intervals: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            order: 10,
            max_intervals: 400,
        }
    }
}

impl QuadSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

struct Integrator<'a> {
    lo: f64,
    hi: f64,
    lo_exp: f64,
    hi_exp: f64,
    f: &'a dyn Fn(f64) -> f64,
    plain: GaussRule,
    lo_rule: Option<GaussRule>,
    hi_rule: Option<GaussRule>,
    both_rule: Option<GaussRule>,
    spec: QuadSpec,
}

impl Integrator<'_> {
    fn weight(&self, x: f64) -> f64 {
        let mut w = 1.0;
        if self.lo_exp != 0.0 {
            w *= (x - self.lo).powf(self.lo_exp);
        }
        if self.hi_exp != 0.0 {
            w *= (self.hi - x).powf(self.hi_exp);
        }
        w
    }

    fn single(&self, a: f64, b: f64) -> f64 {
        let touches_lo = a == self.lo && self.lo_exp != 0.0;
        let touches_hi = b == self.hi && self.hi_exp != 0.0;
        let f = self.f;
        let v = match (touches_lo, touches_hi) {
            (false, false) => self.plain.integrate(a, b, |x| self.weight(x) * f(x)),
            (true, false) => {
                let rule = self.lo_rule.as_ref().expect("built with the integrator");
                let hi_exp = self.hi_exp;
                let hi = self.hi;
                rule.integrate(a, b, |x| {
                    let w = if hi_exp != 0.0 { (hi - x).powf(hi_exp) } else { 1.0 };
                    w * f(x)
                })
            }
            (false, true) => {
                let rule = self.hi_rule.as_ref().expect("built with the integrator");
                let lo_exp = self.lo_exp;
                let lo = self.lo;
                rule.integrate(a, b, |x| {
                    let w = if lo_exp != 0.0 { (x - lo).powf(lo_exp) } else { 1.0 };
                    w * f(x)
                })
            }
            (true, true) => {
                let rule = self.both_rule.as_ref().expect("built with the integrator");
                rule.integrate(a, b, f)
            }
        };
        v
    }

    fn piece(&self, a: f64, b: f64) -> Result<Piece> {
        let whole = self.single(a, b);
        let m = 0.5 * (a + b);
        let halves = self.single(a, m) + self.single(m, b);
        Ok(Piece {
            a,
            b,
            value: halves,
            err: (whole - halves).abs(),
        })
    }

    fn run(&self) -> Result<f64> {
        let mut pieces = vec![self.piece(self.lo, self.hi)?];
        let mut previous = f64::NAN;
        loop {
            let total: f64 = pieces.iter().map(|p| p.value).sum();
            let err: f64 = pieces.iter().map(|p| p.err).sum();
            if !total.is_finite() {
                return Err(KimuraError::Numerical(format!(
                    "non-finite integrand on [{}, {}]",
                    self.lo, self.hi
                )));
            }
            let tol = self.spec.abs_tol.max(self.spec.rel_tol * total.abs());
            if err <= tol {
                return Ok(total);
            }
            if pieces.len() >= self.spec.max_intervals {
                return Err(KimuraError::Convergence {
                    previous,
                    last: total,
                    tol,
                });
            }
            previous = total;
            let (worst, _) = pieces
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.err.total_cmp(&b.1.err))
                .expect("nonempty");
            let p = pieces.swap_remove(worst);
            let m = 0.5 * (p.a + p.b);
            if !(m > p.a && m < p.b) {
                return Err(KimuraError::Convergence {
                    previous,
                    last: total,
                    tol,
                });
            }
            pieces.push(self.piece(p.a, m)?);
            pieces.push(self.piece(m, p.b)?);
        }
    }
}

/// Adaptive evaluation of ∫_lo^hi (x - lo)^lo_exp (hi - x)^hi_exp f(x) dx.
pub fn integrate_weighted(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    lo_exp: f64,
    hi_exp: f64,
    spec: QuadSpec,
) -> Result<f64> {
    if !(hi >= lo) {
        return Err(domain(format!("empty interval [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(0.0);
    }
    let lo_rule = if lo_exp != 0.0 {
        Some(GaussRule::jacobi(spec.order, 0.0, lo_exp)?)
    } else {
        None
    };
    let hi_rule = if hi_exp != 0.0 {
        Some(GaussRule::jacobi(spec.order, hi_exp, 0.0)?)
    } else {
        None
    };
    let both_rule = if lo_exp != 0.0 && hi_exp != 0.0 {
        Some(GaussRule::jacobi(spec.order, hi_exp, lo_exp)?)
    } else {
        None
    };
    let it = Integrator {
        lo,
        hi,
        lo_exp,
        hi_exp,
        f,
        plain: GaussRule::legendre(spec.order),
        lo_rule,
        hi_rule,
        both_rule,
        spec,
    };
    it.run()
}

/// One axis of a tensor integration box.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub lo_exp: f64,
    pub hi_exp: f64,
}

impl Axis {
    pub fn plain(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_exp: 0.0,
            hi_exp: 0.0,
        }
    }
}

/// Iterated adaptive integration of `f` over a region whose limits may depend
/// on the outer coordinates. `axes(k, outer)` returns axis `k` given the
/// already fixed coordinates `outer[..k]`.
///
/// Unlike [`integrate_weighted`], the axis exponents are hints: `f` is the
/// complete integrand and is divided by the endpoint powers before the
/// Gauss–Jacobi rules see it.
pub fn integrate_nested(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    axes: &dyn Fn(usize, &[f64]) -> Axis,
    spec: QuadSpec,
) -> Result<f64> {
    if dim == 0 {
        return Ok(f(&[]));
    }
    nested_level(f, dim, axes, spec, 0, &vec![0.0; dim])
}

fn nested_level(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    axes: &dyn Fn(usize, &[f64]) -> Axis,
    spec: QuadSpec,
    level: usize,
    coords: &[f64],
) -> Result<f64> {
    let axis = axes(level, &coords[..level]);
    if axis.hi <= axis.lo {
        return Ok(0.0);
    }
    let inner_spec = QuadSpec {
        rel_tol: spec.rel_tol * 0.1,
        ..spec
    };
    let failure = std::cell::RefCell::new(None);
    let cell = std::cell::RefCell::new(coords.to_vec());
    let g = |x: f64| -> f64 {
        let mut c = cell.borrow_mut();
        c[level] = x;
        if level + 1 == dim {
            f(&c[..])
        } else {
            let local = c.clone();
            drop(c);
            match nested_level(f, dim, axes, inner_spec, level + 1, &local) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        }
    };
    let h = |x: f64| {
        let mut w = 1.0;
        if axis.lo_exp != 0.0 {
            w *= (x - axis.lo).powf(axis.lo_exp);
        }
        if axis.hi_exp != 0.0 {
            w *= (axis.hi - x).powf(axis.hi_exp);
        }
        g(x) / w
    };
    let v = integrate_weighted(&h, axis.lo, axis.hi, axis.lo_exp, axis.hi_exp, spec)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(5);
        // degree 9 is the exactness limit
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert_relative_eq!(v, 2f64.powi(10) / 10.0, max_relative = 1e-14);
    }

    #[test]
    fn jacobi_absorbs_endpoint_power() {
        // ∫_0^1 x^{-1/2} (1 + x) dx = 2 + 2/3
        let rule = GaussRule::jacobi(6, 0.0, -0.5).unwrap();
        let v = rule.integrate(0.0, 1.0, |x| 1.0 + x);
        assert_relative_eq!(v, 8.0 / 3.0, max_relative = 1e-14);
        // two-sided: ∫_0^1 x^{-1/2}(1-x)^{-1/2} dx = π
        let rule = GaussRule::jacobi(4, -0.5, -0.5).unwrap();
        assert_relative_eq!(rule.integrate(0.0, 1.0, |_| 1.0), std::f64::consts::PI, max_relative = 1e-14);
    }

    #[test]
    fn jacobi_rejects_bad_exponents() {
        assert!(GaussRule::jacobi(4, -1.0, 0.0).is_err());
        assert!(GaussRule::jacobi(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn adaptive_handles_kinks_and_weights() {
        let f = |x: f64| (x - 0.3).abs();
        let v = integrate_weighted(&f, 0.0, 1.0, 0.0, 0.0, QuadSpec::default()).unwrap();
        assert_relative_eq!(v, 0.045 + 0.245, max_relative = 1e-10);
        // ∫_0^2 x^{0.4} e^{-x} dx against a weighted rule with a smooth remainder
        let g = |x: f64| (-x).exp();
        let v = integrate_weighted(&g, 0.0, 2.0, 0.4, 0.0, QuadSpec::default()).unwrap();
        let reference = GaussRule::jacobi(30, 0.0, 0.4).unwrap().integrate(0.0, 2.0, g);
        assert_relative_eq!(v, reference, max_relative = 1e-12);
    }

    #[test]
    fn adaptive_reports_last_estimates_on_failure() {
        let f = |x: f64| if x < 0.5 { 0.0 } else { 1.0 / (x - 0.5).abs().max(1e-300) };
        let spec = QuadSpec {
            max_intervals: 8,
            ..QuadSpec::default()
        };
        match integrate_weighted(&f, 0.0, 1.0, 0.0, 0.0, spec) {
            Err(KimuraError::Convergence { last, .. }) => assert!(last.is_finite()),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn nested_disc_area() {
        // quarter disc of radius 1 with variable limits
        let v = integrate_nested(
            &|_| 1.0,
            2,
            &|k, outer| {
                if k == 0 {
                    Axis {
                        lo: 0.0,
                        hi: 1.0,
                        lo_exp: 0.0,
                        hi_exp: 0.5,
                    }
                } else {
                    Axis::plain(0.0, (1.0 - outer[0] * outer[0]).max(0.0).sqrt())
                }
            },
            QuadSpec::default().with_rel_tol(1e-10),
        )
        .unwrap();
        assert_relative_eq!(v, std::f64::consts::FRAC_PI_4, max_relative = 1e-8);
    }
}

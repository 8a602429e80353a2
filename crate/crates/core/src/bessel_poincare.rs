//! The entire function φ_b, its first root ζ₁ and the one-dimensional
//! weighted Neumann Poincaré constants built from it.
//!
//! φ_b(ζ) = Σ_{k≥0} (−ζ)^k / (k! Γ(k+b)) = (z/2)^{1−b} J_{b−1}(z), z = 2√ζ.

use std::f64::consts::PI;

use serde::Serialize;

use crate::corner_geometry::Point;
use crate::error::{domain, KimuraError, Result};
use crate::special::recip_gamma;

/// Above this value of z = 2√ζ the Hankel expansion replaces the series.
pub const ASYMPTOTIC_SWITCH: f64 = 30.0;

/// Default tolerance for [`zeta1`].
pub const ZETA1_TOL: f64 = 1e-12;

const SCAN_FACTOR: f64 = 1.5;
const SCAN_LIMIT: f64 = 1e6;

// Minimal double-double arithmetic for the alternating series, whose terms
// reach e^z/z before cancelling down to O(z^{1/2-b}).
#[derive(Clone, Copy)]
struct Dd(f64, f64);

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn add(self, y: Dd) -> Dd {
        let Dd(s, e) = two_sum(self.0, y.0);
        quick_two_sum(s, e + self.1 + y.1)
    }

    fn mul_f(self, f: f64) -> Dd {
        let p = self.0 * f;
        let e = self.0.mul_add(f, -p) + self.1 * f;
        quick_two_sum(p, e)
    }

    fn div(self, y: Dd) -> Dd {
        let q1 = self.0 / y.0;
        let r = self.add(y.mul_f(-q1));
        let q2 = r.0 / y.0;
        quick_two_sum(q1, q2)
    }
}

fn phi_series(b: f64, zeta: f64) -> f64 {
    let mut term = Dd(1.0, 0.0);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        let denom = two_sum(k, b).mul_f(k + 1.0);
        term = term.mul_f(-zeta).div(denom);
        sum = sum.add(term);
        k += 1.0;
        if k > zeta.abs().sqrt() && term.0.abs() <= 1e-33 * sum.0.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if k > 2000.0 || !sum.0.is_finite() {
            break;
        }
    }
    (sum.0 + sum.1) * recip_gamma(b)
}

/// Hankel expansion of J_ν(z); `None` when the smallest term is not small.
fn bessel_j_asymptotic(nu: f64, z: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut t = 1.0f64;
    let mut k = 1usize;
    loop {
        let odd = (2 * k - 1) as f64;
        let next = t * (mu - odd * odd) / (k as f64 * 8.0 * z);
        if next.abs() >= t.abs() && k > 1 {
            break;
        }
        t = next;
        // signs: P = t0 - t2 + t4 ..., Q = t1 - t3 + ...
        match k % 4 {
            0 => p += t,
            1 => q += t,
            2 => p -= t,
            _ => q -= t,
        }
        if t == 0.0 || t.abs() < 1e-17 * p.abs().max(q.abs()) {
            break;
        }
        k += 1;
        if k > 500 {
            break;
        }
    }
    if t.abs() > 1e-10 {
        return None;
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    Some((2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin()))
}

/// φ_b(ζ).
pub fn phi(b: f64, zeta: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(domain(format!("phi needs b > 0, got {b}")));
    }
    if zeta.is_nan() {
        return Err(domain("phi evaluated at NaN"));
    }
    if zeta > 0.0 {
        let z = 2.0 * zeta.sqrt();
        if z > ASYMPTOTIC_SWITCH {
            if let Some(j) = bessel_j_asymptotic(b - 1.0, z) {
                return Ok((0.5 * z).powf(1.0 - b) * j);
            }
        }
    }
    Ok(phi_series(b, zeta))
}

/// ζ₁(b): the smallest positive root of φ_{b+1}.
pub fn zeta1(b: f64, tol: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(domain(format!("zeta1 needs b > 0, got {b}")));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let f = |z: f64| phi(b + 1.0, z);
    let start = b + 1.0;
    let f0 = f(start)?;
    if !(f0 > 0.0) {
        return Err(KimuraError::Consistency(format!(
            "phi_(b+1) is not positive at b+1 = {start}"
        )));
    }
    // Multiplicative steps, each split so that z = 2√ζ advances by at most
    // one; consecutive roots are further apart than that in z.
    let mut lo = start;
    let mut hi;
    loop {
        let target = lo * SCAN_FACTOR;
        let pieces = (2.0 * (target.sqrt() - lo.sqrt())).ceil().max(1.0) as usize;
        let mut found = None;
        let mut prev = lo;
        for i in 1..=pieces {
            let s = (lo.sqrt() + (target.sqrt() - lo.sqrt()) * i as f64 / pieces as f64).powi(2);
            if f(s)? <= 0.0 {
                found = Some((prev, s));
                break;
            }
            prev = s;
        }
        if let Some((a, c)) = found {
            lo = a;
            hi = c;
            break;
        }
        lo = target;
        if lo > SCAN_LIMIT {
            return Err(KimuraError::Search { from: start, to: lo });
        }
    }
    while hi - lo > tol * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    if !(root > start) {
        return Err(KimuraError::Consistency(format!(
            "zeta1({b}) = {root} does not exceed b+1"
        )));
    }
    Ok(root)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareBound1D {
    pub b: f64,
    pub beta: f64,
    pub b_up: f64,
    pub center_x: f64,
    pub case_id: u8,
    pub lambda_lower: f64,
    pub exact: bool,
    /// At the seams x = 1 and x = 2 the other admissible case and its value.
    pub alternative: Option<(u8, f64)>,
}

fn case_value(case: u8, b: f64, beta: f64, x: f64) -> Result<f64> {
    Ok(match case {
        1 => 4.0 * zeta1(b, ZETA1_TOL)? / ((1.0 + x) * (1.0 + x)),
        2 => 4.0 * (1.0 + beta) / ((1.0 + x) * (1.0 + x)),
        _ => PI * PI / (4.0 * 3f64.powf((2.0 * b - 1.0).abs())),
    })
}

/// Lower bound for the first nonzero Neumann eigenvalue of
/// −w^{1−2b}∂_w(w^{2b−1}∂_w) on [max(x−1, 0), x+1].
pub fn poincare_1d(b: f64, beta: f64, b_up: f64, center_x: f64) -> Result<PoincareBound1D> {
    if !(beta > 0.0) || !(beta <= b && b <= b_up) {
        return Err(domain(format!("need 0 < beta <= b <= B, got {beta}, {b}, {b_up}")));
    }
    if !(center_x >= 0.0) || !center_x.is_finite() {
        return Err(domain(format!("centre must be nonnegative, got {center_x}")));
    }
    let x = center_x;
    let (case_id, alternative) = if x <= 1.0 {
        (1, if x == 1.0 { Some(2) } else { None })
    } else if x < 2.0 {
        (2, None)
    } else if x == 2.0 {
        let two = case_value(2, b, beta, x)?;
        let three = case_value(3, b, beta, x)?;
        if two >= three {
            (2, Some(3))
        } else {
            (3, Some(2))
        }
    } else {
        (3, None)
    };
    let lambda_lower = case_value(case_id, b, beta, x)?;
    let alternative = match alternative {
        Some(c) => Some((c, case_value(c, b, beta, x)?)),
        None => None,
    };
    Ok(PoincareBound1D {
        b,
        beta,
        b_up,
        center_x,
        case_id,
        lambda_lower,
        exact: case_id == 1,
        alternative,
    })
}

/// Lower bound for 1/C in the Poincaré inequality on the ℓ∞ ball of radius r
/// about `center` for constant weights `b0`.
pub fn poincare_product(b0: &[f64], r: f64, center: &Point) -> Result<f64> {
    if b0.len() != center.w.len() {
        return Err(domain("weight vector and centre disagree in dimension"));
    }
    if !(r > 0.0) {
        return Err(domain(format!("radius must be positive, got {r}")));
    }
    let mut best = f64::INFINITY;
    for (b, w) in b0.iter().zip(&center.w) {
        let bound = poincare_1d(*b, *b, *b, w / r)?;
        best = best.min(bound.lambda_lower / (r * r));
    }
    if !center.y.is_empty() {
        best = best.min(PI * PI / (4.0 * r * r));
    }
    if !best.is_finite() {
        return Err(domain("the ball has no directions"));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::special::gamma;

    #[test]
    fn phi_at_zero_and_closed_forms() {
        for &b in &[0.3, 0.5, 1.0, 2.5, 7.0] {
            assert_relative_eq!(phi(b, 0.0).unwrap(), 1.0 / gamma(b), max_relative = 1e-15);
        }
        assert!(phi(0.5, PI * PI / 16.0).unwrap().abs() < 1e-15);
        assert!(phi(1.5, PI * PI / 4.0).unwrap().abs() < 1e-15);
        for &z in &[0.1, 3.0, 50.0, 220.0, 230.0, 900.0, 1e4] {
            let closed = (2.0 * f64::sqrt(z)).cos() / PI.sqrt();
            assert!((phi(0.5, z).unwrap() - closed).abs() < 1e-13, "zeta={z}");
            let closed = (2.0 * f64::sqrt(z)).sin() / (PI * z).sqrt();
            assert!((phi(1.5, z).unwrap() - closed).abs() < 1e-13, "zeta={z}");
        }
        assert!(phi(0.0, 1.0).is_err());
        assert!(phi(-1.0, 1.0).is_err());
    }

    #[test]
    fn negative_argument_is_positive_series() {
        // φ_{1/2}(−s) = cosh(2√s)/√π
        let s: f64 = 4.0;
        assert_relative_eq!(phi(0.5, -s).unwrap(), (2.0 * s.sqrt()).cosh() / PI.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn series_and_asymptotic_agree_at_the_switch() {
        for &b in &[0.25, 1.0, 2.0, 4.5] {
            let zeta = 225.0 * (1.0 + 1e-9);
            let series = phi_series(b, zeta);
            let asym = (0.5 * 2.0 * zeta.sqrt()).powf(1.0 - b)
                * bessel_j_asymptotic(b - 1.0, 2.0 * zeta.sqrt()).unwrap();
            assert!((series - asym).abs() < 1e-12 * series.abs().max(1e-3), "b={b}");
        }
    }

    #[test]
    fn zeta1_examples() {
        assert_relative_eq!(zeta1(0.5, ZETA1_TOL).unwrap(), PI * PI / 4.0, max_relative = 1e-11);
        let j11: f64 = 3.831_705_970_207_512_5;
        assert_relative_eq!(zeta1(1.0, ZETA1_TOL).unwrap(), j11 * j11 / 4.0, max_relative = 1e-11);
        assert!(zeta1(0.0, 1e-12).is_err());
        assert!(zeta1(1.0, 0.0).is_err());
    }

    #[test]
    fn poincare_cases() {
        let p = poincare_1d(0.5, 0.5, 0.5, 0.0).unwrap();
        assert_eq!(p.case_id, 1);
        assert!(p.exact);
        assert_relative_eq!(p.lambda_lower, PI * PI, max_relative = 1e-11);

        let p = poincare_1d(1.0, 1.0, 1.0, 1.5).unwrap();
        assert_eq!(p.case_id, 2);
        assert!(!p.exact);
        assert_relative_eq!(p.lambda_lower, 1.28, max_relative = 1e-15);

        let p = poincare_1d(0.5, 0.5, 0.5, 3.0).unwrap();
        assert_eq!(p.case_id, 3);
        assert_relative_eq!(p.lambda_lower, PI * PI / 4.0, max_relative = 1e-15);

        assert!(poincare_1d(2.0, 0.5, 1.0, 0.0).is_err());
        assert!(poincare_1d(1.0, 1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn seams_report_both_cases() {
        let p = poincare_1d(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.case_id, 1);
        let (alt, value) = p.alternative.unwrap();
        assert_eq!(alt, 2);
        assert!(p.lambda_lower >= value);
        let p = poincare_1d(1.0, 1.0, 1.0, 2.0).unwrap();
        let (_, value) = p.alternative.unwrap();
        assert!(p.lambda_lower >= value);
    }

    #[test]
    fn product_constant() {
        let y_only = Point::new(vec![], vec![0.0]);
        assert_relative_eq!(poincare_product(&[], 1.0, &y_only).unwrap(), PI * PI / 4.0);
        let corner = Point::origin(1, 1);
        let v1 = poincare_product(&[0.5], 1.0, &corner).unwrap();
        assert_relative_eq!(v1, PI * PI / 4.0, max_relative = 1e-12);
        let v2 = poincare_product(&[0.5], 2.0, &corner).unwrap();
        assert_relative_eq!(v2, v1 / 4.0, max_relative = 1e-12);
        assert!(poincare_product(&[0.5], 0.0, &corner).is_err());
    }
}

//! One-dimensional weighted geometries used by the discretisations.
//!
//! Each geometry carries a principal coefficient a(x), a density ρ(x) and a
//! chart θ(x) in which the intrinsic distance is |θ(p) − θ(q)|. On the
//! interval and the half-line this is the square-root surrogate, half the
//! distance induced by the symbol a(x)∂²ₓ; on flat and w-coordinate lines it
//! is the symbol distance itself.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::quadrature::{integrate_weighted, QuadSpec};

pub type Potential = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LineKind {
    /// x(1-x)∂²ₓ on [0, 1] with density x^{b0-1}(1-x)^{b1-1}.
    UnitInterval { b0: f64, b1: f64 },
    /// x∂²ₓ on [0, length] with density x^{b-1}.
    HalfLine { b: f64, length: f64 },
    /// ∂²_w on [lo, hi] ⊂ [0, ∞) with density w^{2b-1}.
    WCoordinate { b: f64, lo: f64, hi: f64 },
    /// ∂²_y on [lo, hi] with Lebesgue density.
    Flat { lo: f64, hi: f64 },
}

#[derive(Clone)]
pub struct LineGeometry {
    kind: LineKind,
    potential: Option<Potential>,
}

impl std::fmt::Debug for LineGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LineGeometry")
            .field("kind", &self.kind)
            .field("potential", &self.potential.is_some())
            .finish()
    }
}

impl LineGeometry {
    pub fn new(kind: LineKind) -> Result<Self> {
        let ok = match kind {
            LineKind::UnitInterval { b0, b1 } => b0 > 0.0 && b1 > 0.0,
            LineKind::HalfLine { b, length } => b > 0.0 && length > 0.0,
            LineKind::WCoordinate { b, lo, hi } => b > 0.0 && lo >= 0.0 && hi > lo,
            LineKind::Flat { lo, hi } => hi > lo,
        };
        if !ok {
            return Err(domain(format!("invalid line geometry {kind:?}")));
        }
        Ok(Self { kind, potential: None })
    }

    pub fn unit_interval(b0: f64, b1: f64) -> Result<Self> {
        Self::new(LineKind::UnitInterval { b0, b1 })
    }

    /// Multiplies the density by e^{U(x)}.
    pub fn with_potential(mut self, u: Potential) -> Self {
        self.potential = Some(u);
        self
    }

    pub fn kind(&self) -> LineKind {
        self.kind
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            LineKind::UnitInterval { .. } => (0.0, 1.0),
            LineKind::HalfLine { length, .. } => (0.0, length),
            LineKind::WCoordinate { lo, hi, .. } | LineKind::Flat { lo, hi } => (lo, hi),
        }
    }

    /// Principal coefficient a(x) of a(x)∂²ₓ.
    pub fn coefficient(&self, x: f64) -> f64 {
        match self.kind {
            LineKind::UnitInterval { .. } => x * (1.0 - x),
            LineKind::HalfLine { .. } => x,
            LineKind::WCoordinate { .. } | LineKind::Flat { .. } => 1.0,
        }
    }

    /// Powers (p_lo, p_hi) such that ρ(x) = (x-lo)^{p_lo}(hi-x)^{p_hi} g(x)
    /// with g smooth and positive on the closed domain.
    pub fn endpoint_exponents(&self) -> (f64, f64) {
        match self.kind {
            LineKind::UnitInterval { b0, b1 } => (b0 - 1.0, b1 - 1.0),
            LineKind::HalfLine { b, .. } => (b - 1.0, 0.0),
            LineKind::WCoordinate { b, lo: 0.0, .. } => (2.0 * b - 1.0, 0.0),
            _ => (0.0, 0.0),
        }
    }

    /// Smooth factor g(x) of the density.
    pub fn regular_factor(&self, x: f64) -> f64 {
        let base = match self.kind {
            LineKind::WCoordinate { b, lo, .. } if lo > 0.0 => x.powf(2.0 * b - 1.0),
            _ => 1.0,
        };
        match &self.potential {
            Some(u) => base * u(x).exp(),
            None => base,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        let (pl, ph) = self.endpoint_exponents();
        let mut d = self.regular_factor(x);
        if pl != 0.0 {
            d *= (x - lo).powf(pl);
        }
        if ph != 0.0 {
            d *= (hi - x).powf(ph);
        }
        d
    }

    /// ∫_a^b ρ(x) dx for a sub-interval of the domain.
    pub fn mass_between(&self, a: f64, b: f64, quad: QuadSpec) -> Result<f64> {
        let (lo, hi) = self.domain();
        let a = a.max(lo);
        let b = b.min(hi);
        if b <= a {
            return Ok(0.0);
        }
        let (pl, ph) = self.endpoint_exponents();
        let pl_here = if a == lo { pl } else { 0.0 };
        let ph_here = if b == hi { ph } else { 0.0 };
        let f = |x: f64| {
            let mut v = self.regular_factor(x);
            if pl_here == 0.0 && pl != 0.0 {
                v *= (x - lo).powf(pl);
            }
            if ph_here == 0.0 && ph != 0.0 {
                v *= (hi - x).powf(ph);
            }
            v
        };
        // the Jacobi weights are measured from a and b, which coincide with
        // lo and hi whenever the exponent is active
        integrate_weighted(&f, a, b, pl_here, ph_here, quad)
    }

    pub fn total_mass(&self, quad: QuadSpec) -> Result<f64> {
        let (lo, hi) = self.domain();
        self.mass_between(lo, hi, quad)
    }

    /// Metric chart θ(x).
    pub fn chart(&self, x: f64) -> f64 {
        match self.kind {
            LineKind::UnitInterval { .. } => x.clamp(0.0, 1.0).sqrt().asin(),
            LineKind::HalfLine { .. } => x.max(0.0).sqrt(),
            _ => x,
        }
    }

    pub fn chart_inverse(&self, theta: f64) -> f64 {
        match self.kind {
            LineKind::UnitInterval { .. } => {
                let s = theta.clamp(0.0, std::f64::consts::FRAC_PI_2).sin();
                s * s
            }
            LineKind::HalfLine { .. } => theta.max(0.0) * theta.max(0.0),
            _ => theta,
        }
    }

    pub fn distance(&self, p: f64, q: f64) -> f64 {
        (self.chart(p) - self.chart(q)).abs()
    }

    /// The ball of radius r about c, clipped to the domain.
    pub fn ball(&self, c: f64, r: f64) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let t = self.chart(c);
        let a = self.chart_inverse(t - r).max(lo);
        let b = self.chart_inverse(t + r).min(hi);
        (a, b)
    }

    pub fn ball_mass(&self, c: f64, r: f64, quad: QuadSpec) -> Result<f64> {
        let (a, b) = self.ball(c, r);
        self.mass_between(a, b, quad)
    }

    /// ∫ a(x)^{-1/2} dx over the domain: the length in the symbol metric.
    pub fn symbol_length(&self) -> f64 {
        let (lo, hi) = self.domain();
        match self.kind {
            LineKind::UnitInterval { .. } | LineKind::HalfLine { .. } => 2.0 * (self.chart(hi) - self.chart(lo)),
            _ => hi - lo,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn interval_masses() {
        let g = LineGeometry::unit_interval(0.5, 0.5).unwrap();
        let q = QuadSpec::default();
        assert_relative_eq!(g.total_mass(q).unwrap(), PI, max_relative = 1e-12);
        // ∫_0^{1/2} x^{-1/2}(1-x)^{-1/2} dx = π/2
        assert_relative_eq!(g.mass_between(0.0, 0.5, q).unwrap(), PI / 2.0, max_relative = 1e-12);
        let g = LineGeometry::unit_interval(2.0, 3.0).unwrap();
        assert_relative_eq!(g.total_mass(q).unwrap(), 1.0 / 12.0, max_relative = 1e-12);
        assert_relative_eq!(g.symbol_length(), PI);
    }

    #[test]
    fn balls_and_charts() {
        let g = LineGeometry::new(LineKind::HalfLine { b: 1.0, length: 10.0 }).unwrap();
        let (a, b) = g.ball(1.0, 0.5);
        assert_relative_eq!(a, 0.25);
        assert_relative_eq!(b, 2.25);
        assert_eq!(g.ball(0.01, 1.0).0, 0.0);
        assert_relative_eq!(g.distance(0.0, 4.0), 2.0);
        let g = LineGeometry::unit_interval(1.0, 1.0).unwrap();
        for &x in &[0.0, 0.1, 0.5, 0.97, 1.0] {
            assert_relative_eq!(g.chart_inverse(g.chart(x)), x, epsilon = 1e-15);
        }
        assert_eq!(g.ball(0.5, 10.0), (0.0, 1.0));
    }

    #[test]
    fn w_ball_matches_closed_form() {
        let g = LineGeometry::new(LineKind::WCoordinate { b: 1.5, lo: 0.0, hi: 3.0 }).unwrap();
        let q = QuadSpec::default();
        let v = g.ball_mass(1.0, 0.5, q).unwrap();
        let expect = (1.5f64.powi(3) - 0.5f64.powi(3)) / 3.0;
        assert_relative_eq!(v, expect, max_relative = 1e-12);
        let g = LineGeometry::new(LineKind::WCoordinate { b: 1.5, lo: 0.5, hi: 3.0 }).unwrap();
        assert_relative_eq!(g.total_mass(q).unwrap(), (27.0 - 0.125) / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LineGeometry::unit_interval(0.0, 1.0).is_err());
        assert!(LineGeometry::new(LineKind::Flat { lo: 1.0, hi: 1.0 }).is_err());
    }
}

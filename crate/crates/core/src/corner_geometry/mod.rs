//! Weighted measures on corner domains S_{n,m} = ℝ₊ⁿ × ℝᵐ.
//!
//! Points are stored in square-root coordinates (w; y) with wᵢ = √xᵢ. In
//! these coordinates the weighted measure dμ_b = Π xᵢ^{bᵢ-1} dx dy becomes
//! 2ⁿ Π wᵢ^{2bᵢ-1} dw dy, and the intrinsic metric is uniformly equivalent to
//! the Euclidean (or ℓ∞) metric.
//!
//! Ball masses are reported for the reduced density Π wᵢ^{2bᵢ-1} e^U, i.e.
//! without the constant 2ⁿ; [`WeightedMeasure::ball_mass_x`] restores it.

pub mod line;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, KimuraError, Result};
use crate::quadrature::{integrate_nested, Axis, QuadSpec};

pub use line::{LineGeometry, LineKind};

/// A point of S_{n,m} in (w; y) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(w: Vec<f64>, y: Vec<f64>) -> Self {
        Self { w, y }
    }

    /// The corner (0; 0).
    pub fn origin(n: usize, m: usize) -> Self {
        Self::new(vec![0.0; n], vec![0.0; m])
    }

    /// Converts from (x; y) coordinates.
    pub fn from_x(x: &[f64], y: &[f64]) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !(**v >= 0.0)) {
            return Err(domain(format!("corner coordinate {bad} is negative")));
        }
        Ok(Self::new(x.iter().map(|v| v.sqrt()).collect(), y.to_vec()))
    }

    pub fn x(&self) -> Vec<f64> {
        self.w.iter().map(|w| w * w).collect()
    }

    pub fn dim(&self) -> usize {
        self.w.len() + self.y.len()
    }

    fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.w.iter().chain(self.y.iter()).copied()
    }

    fn from_flat(n: usize, flat: &[f64]) -> Self {
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }
}

/// ℓ∞ distance in (w; y) coordinates.
pub fn sup_distance(p: &Point, q: &Point) -> f64 {
    p.coords()
        .zip(q.coords())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Euclidean distance in (w; y) coordinates.
pub fn euclid_distance(p: &Point, q: &Point) -> f64 {
    p.coords()
        .zip(q.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Surrogate for the intrinsic distance between two points given in
/// (x; y) coordinates: sqrt(Σ|√x₁ᵢ − √x₂ᵢ|² + ‖y₁ − y₂‖²).
pub fn intrinsic_distance(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() || y1.len() != y2.len() {
        return Err(domain("points have different dimensions"));
    }
    let p = Point::from_x(x1, y1)?;
    let q = Point::from_x(x2, y2)?;
    Ok(euclid_distance(&p, &q))
}

pub type WeightFn = Arc<dyn Fn(usize, &Point) -> f64 + Send + Sync>;
pub type CornerPotential = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Weights {
    Constant(Vec<f64>),
    Variable(WeightFn),
}

/// The weights bᵢ(w; y) of a corner measure together with the constants
/// that control them.
#[derive(Clone)]
pub struct WeightSpec {
    n: usize,
    weights: Weights,
    beta0: f64,
    upper: f64,
    constancy_radius: f64,
    log_modulus: f64,
}

impl std::fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.weights {
            Weights::Constant(v) => format!("constant {v:?}"),
            Weights::Variable(_) => "variable".to_string(),
        };
        f.debug_struct("WeightSpec")
            .field("n", &self.n)
            .field("weights", &kind)
            .field("beta0", &self.beta0)
            .field("upper", &self.upper)
            .field("constancy_radius", &self.constancy_radius)
            .field("log_modulus", &self.log_modulus)
            .finish()
    }
}

/// Outcome of sampling the [`WeightSpec`] invariants.
#[derive(Debug, Clone, Serialize)]
pub struct WeightCheck {
    pub min_value: f64,
    pub max_value: f64,
    pub worst_log_modulus: f64,
    pub max_constancy_defect: f64,
    pub samples: usize,
}

impl WeightSpec {
    pub fn constant(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(domain(format!("weights must be positive, got {bad}")));
        }
        let beta0 = values.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            n: values.len(),
            weights: Weights::Constant(values),
            beta0: if beta0.is_finite() { beta0 } else { 1.0 },
            upper: if upper > 0.0 { upper } else { 1.0 },
            constancy_radius: 0.0,
            log_modulus: 0.0,
        })
    }

    pub fn variable(
        n: usize,
        f: WeightFn,
        beta0: f64,
        upper: f64,
        constancy_radius: f64,
        log_modulus: f64,
    ) -> Result<Self> {
        if !(beta0 > 0.0 && upper >= beta0) {
            return Err(domain(format!("need 0 < beta0 <= upper, got {beta0}, {upper}")));
        }
        if !(constancy_radius >= 0.0 && log_modulus >= 0.0) {
            return Err(domain("constancy radius and log modulus must be nonnegative"));
        }
        Ok(Self {
            n,
            weights: Weights::Variable(f),
            beta0,
            upper,
            constancy_radius,
            log_modulus,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn constancy_radius(&self) -> f64 {
        self.constancy_radius
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.weights, Weights::Constant(_))
    }

    pub fn value(&self, i: usize, p: &Point) -> f64 {
        match &self.weights {
            Weights::Constant(v) => v[i],
            Weights::Variable(f) => f(i, p),
        }
    }

    /// Samples the bounds, the logarithmic modulus of continuity and the
    /// constancy outside the radius R on a deterministic grid of
    /// `per_axis` points per coordinate in [0, extent].
    pub fn check_invariants(&self, m: usize, per_axis: usize, extent: f64) -> Result<WeightCheck> {
        let dim = self.n + m;
        let per_axis = per_axis.max(2);
        let axis: Vec<f64> = (0..per_axis)
            .map(|k| extent * k as f64 / (per_axis - 1) as f64)
            .collect();
        let mut points = Vec::new();
        let total = per_axis.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut flat = vec![0.0; dim];
            for c in flat.iter_mut() {
                *c = axis[rem % per_axis];
                rem /= per_axis;
            }
            points.push(Point::from_flat(self.n, &flat));
        }
        let mut check = WeightCheck {
            min_value: f64::INFINITY,
            max_value: f64::NEG_INFINITY,
            worst_log_modulus: 0.0,
            max_constancy_defect: 0.0,
            samples: points.len(),
        };
        let far = Point::from_flat(self.n, &vec![self.constancy_radius * 2.0 + extent + 1.0; dim]);
        for i in 0..self.n {
            let asymptotic = self.value(i, &far);
            for (a, p) in points.iter().enumerate() {
                let v = self.value(i, p);
                check.min_value = check.min_value.min(v);
                check.max_value = check.max_value.max(v);
                if sup_distance(p, &Point::origin(self.n, m)) > self.constancy_radius {
                    check.max_constancy_defect = check.max_constancy_defect.max((v - asymptotic).abs());
                }
                for q in points.iter().skip(a + 1) {
                    let d = sup_distance(p, q);
                    if d > 0.0 && d < 0.5 {
                        let modulus = (v - self.value(i, q)).abs() * d.ln().abs();
                        check.worst_log_modulus = check.worst_log_modulus.max(modulus);
                    }
                }
            }
        }
        let tol = 1e-12;
        if check.min_value < self.beta0 - tol || check.max_value > self.upper + tol {
            return Err(domain(format!(
                "weights leave [{}, {}]: sampled range [{}, {}]",
                self.beta0, self.upper, check.min_value, check.max_value
            )));
        }
        if check.worst_log_modulus > self.log_modulus + tol {
            return Err(domain(format!(
                "logarithmic modulus {} exceeds declared {}",
                check.worst_log_modulus, self.log_modulus
            )));
        }
        if check.max_constancy_defect > tol {
            return Err(domain(format!(
                "weights vary beyond the constancy radius (defect {})",
                check.max_constancy_defect
            )));
        }
        Ok(check)
    }
}

/// Which family of balls to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricKind {
    /// ℓ∞ balls in (w; y): products of intervals.
    SupW,
    /// Euclidean balls in (w; y).
    EuclidW,
    /// Balls of the intrinsic surrogate metric in (x; y); the same sets as
    /// `EuclidW` once the centre is written in w-coordinates.
    IntrinsicSurrogateX,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
    pub metric: MetricKind,
}

impl Ball {
    pub fn new(center: Point, radius: f64, metric: MetricKind) -> Self {
        Self { center, radius, metric }
    }

    /// Intrinsic-surrogate ball about a centre given in (x; y) coordinates.
    pub fn intrinsic_x(x: &[f64], y: &[f64], radius: f64) -> Result<Self> {
        Ok(Self::new(Point::from_x(x, y)?, radius, MetricKind::IntrinsicSurrogateX))
    }

    /// The ℓ∞ ball as a product of coordinate intervals, clipped at wᵢ = 0.
    pub fn sup_box(&self) -> Vec<(f64, f64)> {
        let r = self.radius;
        self.center
            .w
            .iter()
            .map(|w| ((w - r).max(0.0), w + r))
            .chain(self.center.y.iter().map(|y| (y - r, y + r)))
            .collect()
    }
}

/// Mass of the one-dimensional ball B_r(w) = [max(w - r, 0), w + r] under
/// w^{2b-1} dw.
pub fn ball_mass_1d_const(b: f64, w: f64, r: f64) -> Result<f64> {
    if !(b > 0.0) || !(r > 0.0) || !(w >= 0.0) {
        return Err(domain(format!("need b > 0, r > 0, w >= 0 (b={b}, w={w}, r={r})")));
    }
    let e = 2.0 * b;
    Ok(if w <= r {
        (w + r).powf(e) / e
    } else {
        ((w + r).powf(e) - (w - r).powf(e)) / e
    })
}

/// The measure dμ_b (optionally times e^U) on S_{n,m}.
#[derive(Clone)]
pub struct WeightedMeasure {
    weights: WeightSpec,
    m: usize,
    u_factor: Option<CornerPotential>,
}

impl std::fmt::Debug for WeightedMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightedMeasure")
            .field("weights", &self.weights)
            .field("m", &self.m)
            .field("u_factor", &self.u_factor.is_some())
            .finish()
    }
}

impl WeightedMeasure {
    pub fn new(weights: WeightSpec, m: usize) -> Self {
        Self {
            weights,
            m,
            u_factor: None,
        }
    }

    pub fn with_potential(mut self, u: CornerPotential) -> Self {
        self.u_factor = Some(u);
        self
    }

    pub fn n(&self) -> usize {
        self.weights.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &WeightSpec {
        &self.weights
    }

    fn reduced_density(&self, p: &Point) -> f64 {
        let mut d = 1.0;
        for (i, w) in p.w.iter().enumerate() {
            d *= w.powf(2.0 * self.weights.value(i, p) - 1.0);
        }
        if let Some(u) = &self.u_factor {
            d *= u(p).exp();
        }
        d
    }

    /// Density of dμ_b with respect to dw dy: 2ⁿ Π wᵢ^{2bᵢ-1} e^U.
    pub fn density_w(&self, p: &Point) -> f64 {
        2f64.powi(self.n() as i32) * self.reduced_density(p)
    }

    /// Mass of `ball` under Π wᵢ^{2bᵢ-1} e^U dw dy.
    pub fn ball_mass(&self, ball: &Ball, quad: QuadSpec) -> Result<f64> {
        let n = self.n();
        let dim = n + self.m;
        if ball.center.w.len() != n || ball.center.y.len() != self.m {
            return Err(domain("ball centre has the wrong dimension"));
        }
        if ball.center.w.iter().any(|w| !(*w >= 0.0)) {
            return Err(domain("ball centre lies outside the corner domain"));
        }
        if !(ball.radius >= 0.0) {
            return Err(domain(format!("negative radius {}", ball.radius)));
        }
        if ball.radius == 0.0 {
            return Ok(0.0);
        }
        let center: Vec<f64> = ball.center.coords().collect();
        // exponent hints: the weight at the corner projection of the centre
        let hints: Vec<f64> = (0..n)
            .map(|i| {
                let mut proj = ball.center.clone();
                proj.w[i] = 0.0;
                2.0 * self.weights.value(i, &proj) - 1.0
            })
            .collect();
        let f = |flat: &[f64]| self.reduced_density(&Point::from_flat(n, flat));
        let r = ball.radius;
        match ball.metric {
            MetricKind::SupW => {
                let bx = ball.sup_box();
                let axes = |k: usize, _outer: &[f64]| {
                    let (lo, hi) = bx[k];
                    Axis {
                        lo,
                        hi,
                        lo_exp: if k < n && lo == 0.0 { hints[k] } else { 0.0 },
                        hi_exp: 0.0,
                    }
                };
                integrate_nested(&f, dim, &axes, quad)
            }
            MetricKind::EuclidW | MetricKind::IntrinsicSurrogateX => {
                let axes = |k: usize, outer: &[f64]| {
                    let used: f64 = outer.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
                    let s = (r * r - used).max(0.0).sqrt();
                    let remaining = (dim - k - 1) as f64;
                    let mut lo = center[k] - s;
                    let mut lo_exp = 0.5 * remaining;
                    if k < n && lo <= 0.0 {
                        lo = 0.0;
                        lo_exp = hints[k];
                    }
                    Axis {
                        lo,
                        hi: center[k] + s,
                        lo_exp,
                        hi_exp: 0.5 * remaining,
                    }
                };
                integrate_nested(&f, dim, &axes, quad)
            }
        }
    }

    /// Mass of `ball` under dμ_b itself (the x-coordinate measure).
    pub fn ball_mass_x(&self, ball: &Ball, quad: QuadSpec) -> Result<f64> {
        Ok(2f64.powi(self.n() as i32) * self.ball_mass(ball, quad)?)
    }

    /// μ(B_{2r}) / μ(B_r).
    pub fn doubling_ratio(&self, center: &Point, r: f64, metric: MetricKind, quad: QuadSpec) -> Result<f64> {
        if !(r > 0.0) {
            return Err(domain(format!("doubling ratio needs r > 0, got {r}")));
        }
        let small = self.ball_mass(&Ball::new(center.clone(), r, metric), quad)?;
        let big = self.ball_mass(&Ball::new(center.clone(), 2.0 * r, metric), quad)?;
        if !(small > 0.0) {
            return Err(KimuraError::Numerical(format!("ball of radius {r} has zero mass")));
        }
        Ok(big / small)
    }

    /// Sampled doubling dimension D = log₂ max μ(B_{2r})/μ(B_r).
    pub fn estimate_doubling_dimension(&self, sweep: &DoublingSweep, quad: QuadSpec) -> Result<DoublingEstimate> {
        if sweep.centers.is_empty() || sweep.radii.is_empty() {
            return Err(domain("doubling sweep is empty"));
        }
        let jobs: Vec<(usize, usize)> = (0..sweep.centers.len())
            .flat_map(|c| (0..sweep.radii.len()).map(move |r| (c, r)))
            .collect();
        let ratios: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|&(c, r)| self.doubling_ratio(&sweep.centers[c], sweep.radii[r], sweep.metric, quad))
            .collect();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (k, ratio) in ratios.into_iter().enumerate() {
            let ratio = ratio?;
            // ties go to the earliest sample so the report is stable
            if ratio > best.0 * (1.0 + 1e-12) {
                best = (ratio, k);
            }
        }
        let (c, r) = jobs[best.1];
        Ok(DoublingEstimate {
            dimension: best.0.log2(),
            max_ratio: best.0,
            worst_center: sweep.centers[c].clone(),
            worst_radius: sweep.radii[r],
            samples: jobs.len(),
        })
    }
}

/// Deterministic set of centres and radii for doubling estimates.
#[derive(Debug, Clone)]
pub struct DoublingSweep {
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
    pub metric: MetricKind,
}

impl DoublingSweep {
    /// Tensor grid of centres with coordinates {0} ∪ logspace(extent/100,
    /// extent, per_axis - 1) on every axis, and `radii_count` log-spaced
    /// radii in [r_min, r_max].
    pub fn log_grid(
        n: usize,
        m: usize,
        extent: f64,
        per_axis: usize,
        r_min: f64,
        r_max: f64,
        radii_count: usize,
    ) -> Self {
        let mut axis = vec![0.0];
        let k = per_axis.saturating_sub(1);
        for j in 0..k {
            let frac = if k == 1 { 1.0 } else { j as f64 / (k - 1) as f64 };
            axis.push(extent * 100f64.powf(frac - 1.0));
        }
        let dim = n + m;
        let total = axis.len().pow(dim as u32);
        let centers = (0..total)
            .map(|idx| {
                let mut rem = idx;
                let flat: Vec<f64> = (0..dim)
                    .map(|_| {
                        let v = axis[rem % axis.len()];
                        rem /= axis.len();
                        v
                    })
                    .collect();
                Point::from_flat(n, &flat)
            })
            .collect();
        Self {
            centers,
            radii: log_space(r_min, r_max, radii_count),
            metric: MetricKind::SupW,
        }
    }
}

pub(crate) fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingEstimate {
    pub dimension: f64,
    pub max_ratio: f64,
    pub worst_center: Point,
    pub worst_radius: f64,
    pub samples: usize,
}

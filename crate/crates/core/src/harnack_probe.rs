//! Harnack ratios on parabolic cylinders, Hölder moduli of solutions, the
//! small-time growth of Hölder norms, and best constants for singular
//! potentials.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::corner_geometry::line::LineGeometry;
use crate::error::{domain, KimuraError, Result};
use crate::heat_semigroup::{solve_parabolic, ParabolicOptions, Trajectory};
use crate::kimura_discretization::{p1_interpolate, DiscreteOperator};
use crate::linalg::{dense_generalized_eigen, BandCholesky, BandMatrix};

/// A parabolic cylinder family about (s, center) with radius r (measured in
/// the metric chart).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnackWindow {
    pub s: f64,
    pub r: f64,
    pub center: f64,
}

/// A time interval times a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cylinder {
    pub t0: f64,
    pub t1: f64,
    pub radius: f64,
}

impl HarnackWindow {
    pub fn new(s: f64, r: f64, center: f64) -> Result<Self> {
        if !(r > 0.0) || !(s >= 4.0 * r * r) {
            return Err(domain(format!("need r > 0 and s >= 4r² (s={s}, r={r})")));
        }
        Ok(Self { s, r, center })
    }

    /// The window whose full cylinder starts at time 0.
    pub fn from_start(r: f64, center: f64) -> Result<Self> {
        Self::new(4.0 * r * r, r, center)
    }

    pub fn plus(&self) -> Cylinder {
        Cylinder {
            t0: self.s - self.r * self.r,
            t1: self.s,
            radius: self.r,
        }
    }

    pub fn minus(&self) -> Cylinder {
        Cylinder {
            t0: self.s - 3.0 * self.r * self.r,
            t1: self.s - 2.0 * self.r * self.r,
            radius: self.r,
        }
    }

    pub fn full(&self) -> Cylinder {
        Cylinder {
            t0: self.s - 4.0 * self.r * self.r,
            t1: self.s,
            radius: 2.0 * self.r,
        }
    }
}

fn nodes_in_ball(disc: &DiscreteOperator, geometry: &LineGeometry, center: f64, r: f64) -> Vec<usize> {
    let (a, b) = geometry.ball(center, r);
    (0..disc.nodes.len())
        .filter(|&i| disc.nodes[i] >= a && disc.nodes[i] <= b)
        .collect()
}

/// Crank–Nicolson solve fine enough to sample a window: 32 steps per r².
pub fn solve_for_window(disc: &DiscreteOperator, window: &HarnackWindow, initial: &[f64]) -> Result<Trajectory> {
    let dt = window.r * window.r / 32.0;
    let steps = (window.s / dt).round().max(1.0) as usize;
    solve_parabolic(
        disc,
        initial,
        window.s,
        ParabolicOptions {
            steps,
            startup_steps: 2,
            store_every: 1,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackOutcome {
    pub ratio: f64,
    pub sup_minus: f64,
    pub inf_plus: f64,
    /// (t, x) where the infimum over the later cylinder is attained.
    pub inf_at: (f64, f64),
}

/// Sample points of a window: grid nodes inside the ball and solver time
/// slices inside each cylinder.
#[derive(Debug, Clone, Serialize)]
pub struct WindowSamples {
    pub nodes: Vec<usize>,
    pub points: Vec<f64>,
    /// (slice index, time) pairs.
    pub minus_times: Vec<(usize, f64)>,
    pub plus_times: Vec<(usize, f64)>,
}

fn slices_in(times: &[f64], cyl: Cylinder) -> Vec<(usize, f64)> {
    let eps = 1e-12 * cyl.t1.max(1.0);
    times
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= cyl.t0 - eps && **t <= cyl.t1 + eps)
        .map(|(k, t)| (k, *t))
        .collect()
}

pub fn window_samples(
    disc: &DiscreteOperator,
    geometry: &LineGeometry,
    window: &HarnackWindow,
    times: &[f64],
) -> Result<WindowSamples> {
    let nodes = nodes_in_ball(disc, geometry, window.center, window.r);
    if nodes.is_empty() {
        return Err(domain(format!("ball of radius {} holds no grid nodes", window.r)));
    }
    let minus_times = slices_in(times, window.minus());
    let plus_times = slices_in(times, window.plus());
    if minus_times.is_empty() || plus_times.is_empty() {
        return Err(domain("a cylinder holds no time slices"));
    }
    Ok(WindowSamples {
        points: nodes.iter().map(|&i| disc.nodes[i]).collect(),
        nodes,
        minus_times,
        plus_times,
    })
}

/// The ratio for any solution evaluated at the window samples through
/// `value(slice, time, sample_index)`.
pub fn ratio_from_samples(
    samples: &WindowSamples,
    value: &dyn Fn(usize, f64, usize) -> f64,
    scale: f64,
) -> Result<HarnackOutcome> {
    let mut sup = f64::NEG_INFINITY;
    for &(k, t) in &samples.minus_times {
        for j in 0..samples.points.len() {
            sup = sup.max(value(k, t, j));
        }
    }
    let (mut inf, mut at) = (f64::INFINITY, (0.0, 0.0));
    for &(k, t) in &samples.plus_times {
        for j in 0..samples.points.len() {
            let v = value(k, t, j);
            if v < inf {
                inf = v;
                at = (t, samples.points[j]);
            }
        }
    }
    if !(inf > 1e-14 * scale) {
        return Err(KimuraError::DegenerateWindow(format!(
            "infimum {inf:e} at t = {}, x = {}",
            at.0, at.1
        )));
    }
    Ok(HarnackOutcome {
        ratio: sup / inf,
        sup_minus: sup,
        inf_plus: inf,
        inf_at: at,
    })
}

/// sup over W− divided by inf over W+ for the solution with the given data.
pub fn harnack_ratio(
    disc: &DiscreteOperator,
    geometry: &LineGeometry,
    window: &HarnackWindow,
    initial: &[f64],
) -> Result<HarnackOutcome> {
    if initial.iter().any(|v| *v < 0.0) || initial.iter().all(|v| *v == 0.0) {
        return Err(domain("initial data must be nonnegative and not identically zero"));
    }
    let traj = solve_for_window(disc, window, initial)?;
    let samples = window_samples(disc, geometry, window, &traj.times)?;
    let scale = initial.iter().fold(0.0f64, |m, v| m.max(*v));
    ratio_from_samples(&samples, &|k, _, j| traj.states[k][samples.nodes[j]], scale)
}

/// Families of nonnegative initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DataFamily {
    Constants { count: usize },
    /// Clipped Gaussian node values, one backward-Euler smoothing step of
    /// length `smoothing`, shifted to have minimum zero.
    Random { seed: u64, count: usize, smoothing: f64 },
}

impl DataFamily {
    pub fn random(seed: u64, count: usize) -> Self {
        Self::Random {
            seed,
            count,
            smoothing: 1e-4,
        }
    }

    pub fn generate(&self, disc: &DiscreteOperator) -> Result<Vec<Vec<f64>>> {
        let n = disc.dim();
        match *self {
            DataFamily::Constants { count } => Ok(vec![vec![1.0; n]; count]),
            DataFamily::Random { seed, count, smoothing } => {
                if !(smoothing > 0.0) {
                    return Err(domain("smoothing time must be positive"));
                }
                let chol = BandCholesky::new(&disc.mass.add_scaled(smoothing, &disc.stiffness))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let raw: Vec<f64> = (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z.clamp(-3.0, 3.0)
                        })
                        .collect();
                    let mut u = chol.solve(&disc.mass.matvec(&raw));
                    let least = u.iter().copied().fold(f64::INFINITY, f64::min);
                    u.iter_mut().for_each(|v| *v -= least);
                    out.push(u);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleStability {
    /// (r, max ratio over the family).
    pub per_radius: Vec<(f64, f64)>,
    pub spread: f64,
    pub factor: f64,
    pub pass: bool,
    pub min_ratio: f64,
}

/// Maximal Harnack ratio per radius over a data family.
pub fn harnack_scale_stability(
    disc: &DiscreteOperator,
    geometry: &LineGeometry,
    center: f64,
    radii: &[f64],
    family: &DataFamily,
    factor: f64,
) -> Result<ScaleStability> {
    if radii.is_empty() {
        return Err(domain("no radii given"));
    }
    let data = family.generate(disc)?;
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut min_ratio = f64::INFINITY;
    for &r in radii {
        let window = HarnackWindow::from_start(r, center)?;
        let ratios: Result<Vec<f64>> = data
            .par_iter()
            .map(|u| harnack_ratio(disc, geometry, &window, u).map(|o| o.ratio))
            .collect();
        let ratios = ratios?;
        min_ratio = ratios.iter().copied().fold(min_ratio, f64::min);
        per_radius.push((r, ratios.iter().copied().fold(0.0, f64::max)));
    }
    let hi = per_radius.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = per_radius.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    Ok(ScaleStability {
        per_radius,
        spread,
        factor,
        pass: spread < factor,
        min_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoelderFit {
    pub gamma: f64,
    pub c: f64,
    pub residual: f64,
    /// Whether the raw slope exceeded 1 and was capped.
    pub capped: bool,
}

fn value_at(disc: &DiscreteOperator, traj: &Trajectory, t: f64, x: f64) -> f64 {
    let k = traj.times.partition_point(|s| *s < t).min(traj.times.len() - 1);
    let at = |k: usize| p1_interpolate(&disc.nodes, &traj.states[k], x);
    if k == 0 || traj.times[k] == t {
        return at(k);
    }
    let (t0, t1) = (traj.times[k - 1], traj.times[k]);
    let w = (t - t0) / (t1 - t0);
    at(k - 1) * (1.0 - w) + at(k) * w
}

/// Hölder exponent of the solutions on the later cylinder of `window`:
/// log-log regression of the binned modulus max|Δu|/sup|u| against the
/// parabolic separation (|s₁−s₂|^{1/2} + ρ(p,q))/r ≤ 1.
pub fn holder_exponent(
    disc: &DiscreteOperator,
    geometry: &LineGeometry,
    solutions: &[Trajectory],
    window: &HarnackWindow,
) -> Result<HoelderFit> {
    if solutions.len() < 5 {
        return Err(domain(format!("need at least 5 solutions, got {}", solutions.len())));
    }
    let cyl = window.plus();
    let (a, b) = geometry.ball(window.center, window.r);
    let (ca, cb) = (geometry.chart(a), geometry.chart(b));
    let xs: Vec<f64> = (0..=32)
        .map(|k| geometry.chart_inverse(ca + (cb - ca) * k as f64 / 32.0))
        .collect();
    let ts: Vec<f64> = (0..=8).map(|k| cyl.t0 + (cyl.t1 - cyl.t0) * k as f64 / 8.0).collect();
    let bins = 12usize;
    let d_min = (geometry.distance(xs[0], xs[1]) / window.r).min(((ts[1] - ts[0]).sqrt()) / window.r);
    let (lmin, lmax) = (d_min.ln(), 0.0f64);
    let mut modulus = vec![0.0f64; bins];
    let mut any = false;
    for traj in solutions {
        let vals: Vec<Vec<f64>> = ts
            .iter()
            .map(|&t| xs.iter().map(|&x| value_at(disc, traj, t, x)).collect())
            .collect();
        let sup = vals.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            continue;
        }
        for (i1, t1) in ts.iter().enumerate() {
            for (i2, t2) in ts.iter().enumerate().skip(i1) {
                for (j1, &x1) in xs.iter().enumerate() {
                    for (j2, &x2) in xs.iter().enumerate() {
                        if i1 == i2 && j2 <= j1 {
                            continue;
                        }
                        let d = ((t2 - t1).abs().sqrt() + geometry.distance(x1, x2)) / window.r;
                        if d <= 0.0 || d > 1.0 {
                            continue;
                        }
                        let du = (vals[i1][j1] - vals[i2][j2]).abs() / sup;
                        let bin = (((d.ln() - lmin) / (lmax - lmin)) * bins as f64).floor();
                        let bin = (bin.max(0.0) as usize).min(bins - 1);
                        if du > 0.0 {
                            any = true;
                        }
                        modulus[bin] = modulus[bin].max(du);
                    }
                }
            }
        }
    }
    if !any {
        return Err(KimuraError::DegenerateWindow("solutions are constant; exponent undefined".into()));
    }
    let pts: Vec<(f64, f64)> = modulus
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(k, m)| (lmin + (lmax - lmin) * (k as f64 + 0.5) / bins as f64, m.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(KimuraError::DegenerateWindow("too few separation bins populated".into()));
    }
    let (slope, intercept, residual) = linear_fit(&pts);
    if !(slope > 0.0) {
        return Err(KimuraError::DegenerateWindow(format!("nonpositive modulus slope {slope}")));
    }
    Ok(HoelderFit {
        gamma: slope.min(1.0),
        c: intercept.exp(),
        residual,
        capped: slope > 1.0,
    })
}

/// Least squares y ≈ a x + b; returns (a, b, rms residual).
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rms = (pts.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupFit {
    pub gamma: f64,
    /// Fitted rate p in ‖u(t)‖ ≈ A t^{−p}.
    pub rate: f64,
    pub amplitude: f64,
    pub threshold: f64,
    pub pass: bool,
    /// (t, ‖u(t)‖_{0,γ}).
    pub norms: Vec<(f64, f64)>,
}

/// sup|u| + max_{i≠j} |uᵢ − uⱼ| / ρ(xᵢ, xⱼ)^γ over grid nodes.
pub fn holder_norm(disc: &DiscreteOperator, geometry: &LineGeometry, u: &[f64], gamma: f64) -> f64 {
    let n = u.len();
    let charts: Vec<f64> = disc.nodes.iter().map(|&x| geometry.chart(x)).collect();
    let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let semi = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in (i + 1)..n {
                let d = (charts[j] - charts[i]).abs();
                if d > 0.0 {
                    best = best.max((u[i] - u[j]).abs() / d.powf(gamma));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    sup + semi
}

/// Fits the small-time growth of the γ-Hölder norm of the solution with the
/// given data over `times` ⊂ (0, 1/2).
pub fn holder_blowup(
    disc: &DiscreteOperator,
    geometry: &LineGeometry,
    initial: &[f64],
    times: &[f64],
    gamma: f64,
) -> Result<BlowupFit> {
    if times.len() < 3 {
        return Err(domain("need at least three times"));
    }
    if times.iter().any(|t| !(*t > 0.0 && *t < 0.5)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("times must increase within (0, 1/2)"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("exponent must lie in (0, 1], got {gamma}")));
    }
    // step so every requested time is hit: each gap split into many steps
    let mut norms = Vec::with_capacity(times.len());
    let mut u = initial.to_vec();
    let mut now = 0.0;
    for &t in times {
        let gap = t - now;
        let steps = ((gap / (times[0] / 64.0)).ceil() as usize).clamp(16, 4096);
        let traj = solve_parabolic(
            disc,
            &u,
            gap,
            ParabolicOptions {
                steps,
                startup_steps: if now == 0.0 { 2 } else { 0 },
                store_every: steps,
            },
        )?;
        u = traj.states.last().expect("final state").clone();
        now = t;
        norms.push((t, holder_norm(disc, geometry, &u, gamma)));
    }
    let pts: Vec<(f64, f64)> = norms.iter().map(|(t, n)| (t.ln(), n.ln())).collect();
    let (slope, intercept, _) = linear_fit(&pts);
    let rate = -slope;
    let threshold = (gamma / 2.0).max(0.5) + 0.1;
    Ok(BlowupFit {
        gamma,
        rate,
        amplitude: intercept.exp(),
        threshold,
        pass: rate <= threshold,
        norms,
    })
}

/// Matrix of ∫ q_h φᵢ φⱼ dμ where q_h is the P1 interpolant of |q| at the
/// nodes; at a node where q is not finite the value is taken half an
/// element inside the domain.
pub fn potential_matrix(disc: &DiscreteOperator, q: &dyn Fn(f64) -> f64) -> Result<BandMatrix> {
    if disc.element_quad.len() + 1 != disc.nodes.len() {
        return Err(KimuraError::Unsupported("potential matrices need a one-dimensional operator".into()));
    }
    let n = disc.nodes.len();
    let qn: Vec<f64> = (0..n)
        .map(|i| {
            let x = disc.nodes[i];
            let v = q(x).abs();
            if v.is_finite() {
                v
            } else if i == 0 {
                q(x + 0.5 * (disc.nodes[1] - x)).abs()
            } else {
                q(x - 0.5 * (x - disc.nodes[i - 1])).abs()
            }
        })
        .collect();
    if qn.iter().any(|v| !v.is_finite()) {
        return Err(domain("potential is not finite near the grid nodes"));
    }
    let mut out = BandMatrix::zeros(n, 1);
    for (e, quad) in disc.element_quad.iter().enumerate() {
        let (a, b) = (disc.nodes[e], disc.nodes[e + 1]);
        let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
        for (&x, &w) in quad.x.iter().zip(&quad.w) {
            let t = (x - a) / (b - a);
            let qv = qn[e] * (1.0 - t) + qn[e + 1] * t;
            m00 += w * qv * (1.0 - t) * (1.0 - t);
            m01 += w * qv * t * (1.0 - t);
            m11 += w * qv * t * t;
        }
        out.add(e, e, m00);
        out.add(e + 1, e + 1, m11);
        out.add(e, e + 1, m01);
        out.add(e + 1, e, m01);
    }
    Ok(out)
}

/// Smallest C with ∫|q|u² dμ ≤ η Q(u,u) + C ∫u² dμ on the discrete space.
pub fn singular_inequality_constant(disc: &DiscreteOperator, q: &dyn Fn(f64) -> f64, eta: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(domain(format!("eta must be nonnegative, got {eta}")));
    }
    let qm = potential_matrix(disc, q)?;
    let a = qm.add_scaled(-eta, &disc.stiffness);
    let n = disc.dim();
    let sol = dense_generalized_eigen(&a.to_dense(), &disc.mass.to_dense(), n, false)?;
    let top = sol.values.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0))
}

/// Dense view of a band matrix, for reports.
pub fn dense(m: &BandMatrix) -> DMatrix<f64> {
    m.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kimura_discretization::{assemble, eigs, GridSpec, KimuraOperator1D};
    use approx::assert_relative_eq;

    fn interval(b: f64, n: usize) -> (DiscreteOperator, LineGeometry) {
        let op = KimuraOperator1D::interval(b, b).unwrap();
        (assemble(&op, &GridSpec::chart(n)).unwrap(), op.geometry().clone())
    }

    #[test]
    fn windows_nest() {
        let w = HarnackWindow::from_start(0.1, 0.0).unwrap();
        let (p, m, f) = (w.plus(), w.minus(), w.full());
        assert!(f.t0 <= m.t0 && m.t1 <= p.t0 && p.t1 <= f.t1);
        assert_relative_eq!(p.t0 - m.t1, 0.01, epsilon = 1e-15);
        assert!(HarnackWindow::new(0.01, 0.1, 0.0).is_err());
    }

    #[test]
    fn constants_give_ratio_one() {
        let (d, g) = interval(0.5, 120);
        let w = HarnackWindow::from_start(0.1, 0.0).unwrap();
        let o = harnack_ratio(&d, &g, &w, &vec![2.0; d.dim()]).unwrap();
        assert_relative_eq!(o.ratio, 1.0, epsilon = 1e-10);
        let s = harnack_scale_stability(&d, &g, 0.0, &[0.05, 0.1], &DataFamily::Constants { count: 2 }, 3.0).unwrap();
        assert_relative_eq!(s.spread, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let (d, g) = interval(0.5, 120);
        let w = HarnackWindow::from_start(0.1, 0.0).unwrap();
        let data = DataFamily::random(7, 3).generate(&d).unwrap();
        let mut top = 0.0f64;
        for u in &data {
            let a = harnack_ratio(&d, &g, &w, u).unwrap().ratio;
            let scaled: Vec<f64> = u.iter().map(|v| 5.0 * v).collect();
            let b = harnack_ratio(&d, &g, &w, &scaled).unwrap().ratio;
            assert_relative_eq!(a, b, max_relative = 1e-10);
            top = top.max(a);
        }
        assert!(top >= 1.0);
        // small perturbations of constants stay close to one
        let e = eigs(&d, 2).unwrap();
        let u: Vec<f64> = (0..d.dim()).map(|i| 1.0 + 1e-4 * e.eigenvectors[(i, 1)]).collect();
        let r = harnack_ratio(&d, &g, &w, &u).unwrap().ratio;
        assert!(r >= 1.0 && r < 1.0 + 1e-3);
    }

    #[test]
    fn singular_constants() {
        let (d, _) = interval(1.0, 60);
        let c = singular_inequality_constant(&d, &|_| 3.0, 0.5).unwrap();
        assert_relative_eq!(c, 3.0, max_relative = 1e-9);
        let log = |x: f64| x.ln();
        let c1 = singular_inequality_constant(&d, &log, 1.0).unwrap();
        let c01 = singular_inequality_constant(&d, &log, 0.1).unwrap();
        assert!(c01 > c1 && c1 > 0.0);
    }

    #[test]
    fn smooth_data_has_no_blowup() {
        let (d, g) = interval(1.0, 100);
        let u: Vec<f64> = d.nodes.iter().map(|x| 1.0 + x * (1.0 - x)).collect();
        let fit = holder_blowup(&d, &g, &u, &[0.002, 0.01, 0.05, 0.2], 0.5).unwrap();
        assert!(fit.rate.abs() < 0.1, "rate {}", fit.rate);
        assert!(fit.pass);
    }
}

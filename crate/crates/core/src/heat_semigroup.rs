//! Heat kernels of the discretised operators, Gaussian envelope fits,
//! Weyl counting and Crank–Nicolson time stepping.
//!
//! The kernel is taken with respect to dμ: u(t) = ∫ p_t(·, η) u₀(η) dμ(η),
//! which on the finite element space reads u(t) = K_t M u₀ with
//! K_t = Ψ e^{−Λt} Ψᵀ.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::corner_geometry::line::LineGeometry;
use crate::error::{domain, KimuraError, Result};
use crate::kimura_discretization::{DiscreteOperator, EigenDecomposition};
use crate::linalg::BandCholesky;
use crate::quadrature::QuadSpec;
use crate::special::gamma;

/// Modes with e^{−λt} below this are dropped from spectral sums.
pub const TRUNCATION: f64 = 1e-14;

/// Kernel entries below this multiple of ε·Σ|terms| are roundoff.
const NOISE_FACTOR: f64 = 1e3;

/// Default resolution floor relative to √(p_t(ξ,ξ) p_t(η,η)).
pub const RESOLUTION: f64 = 1e-8;

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

fn active_modes(eig: &EigenDecomposition, t: f64) -> usize {
    let cut = -TRUNCATION.ln() / t;
    eig.eigenvalues.iter().take_while(|l| **l <= cut).count().max(1)
}

/// Smallest time at which the available spectrum reaches the truncation
/// threshold.
pub fn reliable_t_min(eig: &EigenDecomposition) -> f64 {
    let top = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if top > 0.0 {
        -TRUNCATION.ln() / top
    } else {
        f64::INFINITY
    }
}

/// Full nodal kernel matrix K_t.
pub fn heat_kernel(eig: &EigenDecomposition, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    let k = active_modes(eig, t);
    let psi = eig.eigenvectors.columns(0, k);
    let mut scaled = psi.clone_owned();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= (-eig.eigenvalues[j] * t).exp();
    }
    Ok(&scaled * psi.transpose())
}

/// max over nodes of |∫ p_t(ξ, η) dμ(η) − 1|.
pub fn conservation_defect(disc: &DiscreteOperator, eig: &EigenDecomposition, t: f64) -> Result<f64> {
    let k = heat_kernel(eig, t)?;
    let masses = disc.node_mass();
    Ok((0..k.nrows())
        .map(|i| (k.row(i).iter().zip(&masses).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max))
}

/// max |K_{2t} − K_t M K_t| relative to max |K_{2t}|.
pub fn semigroup_defect(disc: &DiscreteOperator, eig: &EigenDecomposition, t: f64) -> Result<f64> {
    let kt = heat_kernel(eig, t)?;
    let k2 = heat_kernel(eig, 2.0 * t)?;
    let m = disc.mass.to_dense();
    let comp = &kt * m * &kt;
    Ok((&k2 - comp).amax() / k2.amax())
}

/// Kernel values at sample nodes for a set of times.
#[derive(Debug, Clone, Serialize)]
pub struct HeatKernelGrid {
    pub times: Vec<f64>,
    pub sample_nodes: Vec<usize>,
    pub points: Vec<f64>,
    #[serde(skip)]
    pub kernel: Vec<DMatrix<f64>>,
    #[serde(skip)]
    noise: Vec<DMatrix<f64>>,
    /// Grid-limited smallest time resolved by the available spectrum.
    pub t_min_reliable: f64,
    pub modes: usize,
    /// Entries smaller than this fraction of the geometric mean of the two
    /// diagonal values are below the discretisation's resolution (the
    /// consistent-mass kernel oscillates around zero there).
    pub resolution: f64,
}

impl HeatKernelGrid {
    pub fn build(disc: &DiscreteOperator, eig: &EigenDecomposition, times: &[f64], sample_nodes: &[usize]) -> Result<Self> {
        if times.is_empty() || sample_nodes.is_empty() {
            return Err(domain("kernel grid needs times and sample points"));
        }
        for &t in times {
            check_time(t)?;
        }
        if sample_nodes.iter().any(|&i| i >= disc.dim()) {
            return Err(domain("sample node outside the grid"));
        }
        let s = sample_nodes.len();
        let slices: Vec<(DMatrix<f64>, DMatrix<f64>)> = times
            .par_iter()
            .map(|&t| {
                let k = active_modes(eig, t);
                let mut val = DMatrix::zeros(s, s);
                let mut abs = DMatrix::zeros(s, s);
                for m in 0..k {
                    let decay = (-eig.eigenvalues[m] * t).exp();
                    for (a, &i) in sample_nodes.iter().enumerate() {
                        let pi = eig.eigenvectors[(i, m)] * decay;
                        for (b, &j) in sample_nodes.iter().enumerate() {
                            let term = pi * eig.eigenvectors[(j, m)];
                            val[(a, b)] += term;
                            abs[(a, b)] += term.abs();
                        }
                    }
                }
                (val, abs * (NOISE_FACTOR * f64::EPSILON))
            })
            .collect();
        let (kernel, noise) = slices.into_iter().unzip();
        Ok(Self {
            times: times.to_vec(),
            sample_nodes: sample_nodes.to_vec(),
            points: sample_nodes.iter().map(|&i| disc.nodes[i]).collect(),
            kernel,
            noise,
            t_min_reliable: reliable_t_min(eig),
            modes: eig.eigenvalues.len(),
            resolution: RESOLUTION,
        })
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    /// Whether the (t, a, b) entry rises above roundoff and the resolution
    /// floor.
    pub fn resolved(&self, t: usize, a: usize, b: usize) -> bool {
        let k = &self.kernel[t];
        let v = k[(a, b)].abs();
        let floor = self.resolution * (k[(a, a)] * k[(b, b)]).abs().sqrt();
        v > self.noise[t][(a, b)] && v > floor
    }

    /// Number of unresolved entries that are negative.
    pub fn unresolved_negative(&self) -> usize {
        let mut count = 0;
        for (t, k) in self.kernel.iter().enumerate() {
            for a in 0..k.nrows() {
                for b in 0..k.ncols() {
                    if !self.resolved(t, a, b) && k[(a, b)] < 0.0 {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.kernel
            .iter()
            .map(|k| (k - k.transpose()).amax())
            .fold(0.0, f64::max)
    }

    /// Smallest resolved kernel value; negative resolved values are errors.
    pub fn check_positivity(&self) -> Result<f64> {
        let mut least = f64::INFINITY;
        for (t, k) in self.kernel.iter().enumerate() {
            for a in 0..k.nrows() {
                for b in 0..k.ncols() {
                    if !self.resolved(t, a, b) {
                        continue;
                    }
                    let v = k[(a, b)];
                    if v <= 0.0 {
                        return Err(KimuraError::Positivity(format!(
                            "p_t({}, {}) = {v:e} at t = {}",
                            self.points[a], self.points[b], self.times[t]
                        )));
                    }
                    least = least.min(v);
                }
            }
        }
        Ok(least)
    }

    /// (ξ, η, p) rows of one time slice.
    pub fn slice_rows(&self, t: usize) -> Vec<(f64, f64, f64)> {
        let k = &self.kernel[t];
        let mut out = Vec::with_capacity(k.len());
        for (a, &x) in self.points.iter().enumerate() {
            for (b, &y) in self.points.iter().enumerate() {
                out.push((x, y, k[(a, b)]));
            }
        }
        out
    }
}

/// `count` nodes equally spaced in the metric chart (deduplicated).
pub fn chart_sample_nodes(disc: &DiscreteOperator, geometry: &LineGeometry, count: usize) -> Vec<usize> {
    let (lo, hi) = geometry.domain();
    let (a, b) = (geometry.chart(lo), geometry.chart(hi));
    let mut out: Vec<usize> = (0..count)
        .map(|k| {
            let theta = a + (b - a) * k as f64 / (count.max(2) - 1) as f64;
            let x = geometry.chart_inverse(theta);
            let i = disc.nodes.partition_point(|v| *v < x).min(disc.nodes.len() - 1);
            if i > 0 && (disc.nodes[i] - x).abs() > (x - disc.nodes[i - 1]).abs() {
                i - 1
            } else {
                i
            }
        })
        .collect();
    out.dedup();
    out
}

pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    crate::corner_geometry::log_space(lo, hi, count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatKernelBoundParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d: f64,
    pub eta: f64,
}

impl HeatKernelBoundParams {
    /// C0 e^{C1 t} e^{−ρ²/(C2 t)} (1 + ρ/√t)^D / √(μ(B_√t(ξ)) μ(B_√t(η))).
    pub fn upper_bound(&self, geometry: &LineGeometry, t: f64, xi: f64, eta: f64) -> Result<f64> {
        let quad = QuadSpec::default().with_rel_tol(1e-10);
        let r = t.sqrt();
        let masses = geometry.ball_mass(xi, r, quad)? * geometry.ball_mass(eta, r, quad)?;
        let rho = geometry.distance(xi, eta);
        Ok(self.c0 * (self.c1 * t).exp() * (-rho * rho / (self.c2 * t)).exp() * (1.0 + rho / r).powf(self.d)
            / masses.sqrt())
    }
}

/// Where a fitted constant is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub xi: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeFit {
    pub params: HeatKernelBoundParams,
    pub worst: SamplePoint,
    pub samples: usize,
    /// Entries dropped as unresolved.
    pub excluded: usize,
}

struct BallMasses(Vec<Vec<f64>>);

fn ball_masses(grid: &HeatKernelGrid, geometry: &LineGeometry) -> Result<BallMasses> {
    let quad = QuadSpec::default().with_rel_tol(1e-10);
    let rows: Result<Vec<Vec<f64>>> = grid
        .times
        .par_iter()
        .map(|&t| {
            grid.points
                .iter()
                .map(|&x| geometry.ball_mass(x, t.sqrt(), quad))
                .collect()
        })
        .collect();
    Ok(BallMasses(rows?))
}

/// Smallest C0 with p_t(ξ,η) ≤ C0 e^{−ρ²/(4t)} (1 + ρ/√t)^D / √(μ(B_√t(ξ)) μ(B_√t(η))).
pub fn fit_upper_envelope(grid: &HeatKernelGrid, geometry: &LineGeometry, d: f64) -> Result<EnvelopeFit> {
    let masses = ball_masses(grid, geometry)?;
    let mut best = (0.0f64, SamplePoint { t: 0.0, xi: 0.0, eta: 0.0 });
    let (mut samples, mut excluded) = (0, 0);
    for (ti, &t) in grid.times.iter().enumerate() {
        for (a, &x) in grid.points.iter().enumerate() {
            for (b, &y) in grid.points.iter().enumerate() {
                if !grid.resolved(ti, a, b) {
                    excluded += 1;
                    continue;
                }
                samples += 1;
                let p = grid.kernel[ti][(a, b)];
                let rho = geometry.distance(x, y);
                let envelope = (-rho * rho / (4.0 * t)).exp() * (1.0 + rho / t.sqrt()).powf(d)
                    / (masses.0[ti][a] * masses.0[ti][b]).sqrt();
                let c = p / envelope;
                if c > best.0 {
                    best = (c, SamplePoint { t, xi: x, eta: y });
                }
            }
        }
    }
    if samples == 0 {
        return Err(KimuraError::InsufficientSpectrum("no kernel value above roundoff".into()));
    }
    Ok(EnvelopeFit {
        params: HeatKernelBoundParams {
            c0: best.0,
            c1: 0.0,
            c2: 4.0,
            d,
            eta: 0.0,
        },
        worst: best.1,
        samples,
        excluded,
    })
}

/// Smallest C with ln C + Cρ²/t ≥ −ln(p μ(B_√t(ξ))).
fn lower_constant(p_mu: f64, a: f64) -> f64 {
    let target = -p_mu.ln();
    if a == 0.0 {
        return target.exp();
    }
    // g(u) = u + a e^u − target is increasing in u = ln C
    let (mut lo, mut hi) = (-745.0f64, 709.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + a * mid.exp() >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// Smallest C with p_t(ξ,η) ≥ e^{−Cρ²/t} / (C μ(B_√t(ξ))).
pub fn fit_lower_envelope(grid: &HeatKernelGrid, geometry: &LineGeometry) -> Result<EnvelopeFit> {
    grid.check_positivity()?;
    let masses = ball_masses(grid, geometry)?;
    let mut best = (0.0f64, SamplePoint { t: 0.0, xi: 0.0, eta: 0.0 });
    let (mut samples, mut excluded) = (0, 0);
    for (ti, &t) in grid.times.iter().enumerate() {
        for (a, &x) in grid.points.iter().enumerate() {
            for (b, &y) in grid.points.iter().enumerate() {
                if !grid.resolved(ti, a, b) {
                    excluded += 1;
                    continue;
                }
                samples += 1;
                let p = grid.kernel[ti][(a, b)];
                let rho = geometry.distance(x, y);
                let c = lower_constant(p * masses.0[ti][a], rho * rho / t);
                if c > best.0 {
                    best = (c, SamplePoint { t, xi: x, eta: y });
                }
            }
        }
    }
    if samples == 0 {
        return Err(KimuraError::InsufficientSpectrum("no kernel value above roundoff".into()));
    }
    Ok(EnvelopeFit {
        params: HeatKernelBoundParams {
            c0: best.0,
            c1: 0.0,
            c2: best.0,
            d: 0.0,
            eta: 0.0,
        },
        worst: best.1,
        samples,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiagonalRatios {
    pub sup: f64,
    pub inf: f64,
    pub sup_at: SamplePoint,
    pub inf_at: SamplePoint,
}

/// Extremes of p_t(ξ,ξ) μ(B_√t(ξ)) over the sample.
pub fn diagonal_comparability(grid: &HeatKernelGrid, geometry: &LineGeometry) -> Result<DiagonalRatios> {
    let masses = ball_masses(grid, geometry)?;
    let origin = SamplePoint { t: 0.0, xi: 0.0, eta: 0.0 };
    let mut out = DiagonalRatios {
        sup: f64::NEG_INFINITY,
        inf: f64::INFINITY,
        sup_at: origin,
        inf_at: origin,
    };
    for (ti, &t) in grid.times.iter().enumerate() {
        for (a, &x) in grid.points.iter().enumerate() {
            let r = grid.kernel[ti][(a, a)] * masses.0[ti][a];
            let at = SamplePoint { t, xi: x, eta: x };
            if r > out.sup {
                out.sup = r;
                out.sup_at = at;
            }
            if r < out.inf {
                out.inf = r;
                out.inf_at = at;
            }
        }
    }
    Ok(out)
}

/// Relative change |a − b| / max(|a|, |b|).
pub fn relative_change(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Heat kernel of ∂² on [lo, hi] with Neumann conditions, by reflection.
pub fn flat_neumann_kernel(lo: f64, hi: f64, t: f64, x: f64, y: f64) -> f64 {
    let len = hi - lo;
    let (x, y) = (x - lo, y - lo);
    let g = |z: f64| (-z * z / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
    let reach = (1.0 + (40.0 * t).sqrt() / len).ceil() as i64 + 1;
    (-reach..=reach)
        .map(|k| {
            let shift = 2.0 * k as f64 * len;
            g(x - y + shift) + g(x + y + shift)
        })
        .sum()
}

/// Σ e^{−λ_k t} over the given eigenvalues.
pub fn heat_trace(eigenvalues: &[f64], t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(eigenvalues.iter().map(|l| (-l * t).exp()).sum())
}

/// N(λ) = #{k : λ_k ≤ λ}.
pub fn weyl_counting(eigenvalues: &[f64], lambda: f64) -> usize {
    eigenvalues.iter().filter(|l| **l <= lambda).count()
}

/// Vol_g / (Γ(1 + d/2) (4π)^{d/2}).
pub fn classical_weyl_constant(volume: f64, d: usize) -> f64 {
    let h = 0.5 * d as f64;
    volume / (gamma(1.0 + h) * (4.0 * std::f64::consts::PI).powf(h))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylReport {
    pub lambdas: Vec<f64>,
    /// (λ_k, N(λ_k)) over the fit window.
    pub counting: Vec<(f64, usize)>,
    pub window: (f64, f64),
    pub fitted_constant: f64,
    pub classical_weyl_constant: f64,
    pub relative_error: f64,
    /// N(λ)/λ^{d/2} at the top of the window.
    pub ratio_at_top: f64,
    /// Dimensional constant implied by a t^{d/2}·trace → K·μ(domain)
    /// normalisation, given the total mass.
    pub implied_dimensional_constant: Option<f64>,
}

/// Fits N(λ) ≈ c λ^{d/2} over the top decade of the reliable part of the
/// spectrum (indices below n_dof/20).
pub fn weyl_fit(
    eigenvalues: &[f64],
    n_dof: usize,
    d: usize,
    volume: f64,
    total_mass: Option<f64>,
) -> Result<WeylReport> {
    if d == 0 {
        return Err(domain("dimension must be positive"));
    }
    let reliable = (n_dof / 20).min(eigenvalues.len());
    if reliable < 10 {
        return Err(KimuraError::InsufficientSpectrum(format!(
            "only {reliable} reliable eigenvalues"
        )));
    }
    let top = eigenvalues[reliable - 1];
    let window = (top / 10.0, top);
    let h = 0.5 * d as f64;
    let pts: Vec<(f64, usize)> = eigenvalues[..reliable]
        .iter()
        .filter(|l| **l >= window.0 && **l > 0.0)
        .map(|&l| (l, weyl_counting(eigenvalues, l)))
        .collect();
    if pts.len() < 3 {
        return Err(KimuraError::InsufficientSpectrum(format!(
            "fit window [{}, {}] holds {} eigenvalues",
            window.0,
            window.1,
            pts.len()
        )));
    }
    // least-squares slope of N against λ^{d/2}
    let xs: Vec<f64> = pts.iter().map(|p| p.0.powf(h)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let fitted = sxy / sxx;
    let classical = classical_weyl_constant(volume, d);
    let last = pts[pts.len() - 1];
    Ok(WeylReport {
        lambdas: eigenvalues[..reliable].to_vec(),
        counting: pts.clone(),
        window,
        fitted_constant: fitted,
        classical_weyl_constant: classical,
        relative_error: relative_change(fitted, classical),
        ratio_at_top: last.1 as f64 / last.0.powf(h),
        implied_dimensional_constant: total_mass.map(|m| classical * gamma(1.0 + h) / m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParabolicOptions {
    pub steps: usize,
    /// Leading steps replaced by two backward-Euler half steps each, to
    /// damp rough data.
    pub startup_steps: usize,
    /// Keep every `store_every`-th state (the last one is always kept).
    pub store_every: usize,
}

impl ParabolicOptions {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            startup_steps: 0,
            store_every: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub min_value: f64,
    /// Nodes that dipped below −1e−10·max|u₀| at some stored time.
    pub negativity_violations: usize,
}

/// Crank–Nicolson on (M + dt/2 S) u⁺ = (M − dt/2 S) u.
pub fn solve_parabolic(disc: &DiscreteOperator, initial: &[f64], t_end: f64, opts: ParabolicOptions) -> Result<Trajectory> {
    if opts.steps == 0 {
        return Err(domain("need at least one time step"));
    }
    if initial.len() != disc.dim() {
        return Err(domain("initial data has the wrong length"));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(domain("initial data is not finite"));
    }
    check_time(t_end)?;
    let dt = t_end / opts.steps as f64;
    let cn = BandCholesky::new(&disc.mass.add_scaled(0.5 * dt, &disc.stiffness))?;
    let explicit = disc.mass.add_scaled(-0.5 * dt, &disc.stiffness);
    let be = if opts.startup_steps > 0 {
        Some(BandCholesky::new(&disc.mass.add_scaled(0.5 * dt, &disc.stiffness))?)
    } else {
        None
    };
    let scale = initial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut u = initial.to_vec();
    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![u.clone()],
        min_value: u.iter().copied().fold(f64::INFINITY, f64::min),
        negativity_violations: 0,
    };
    let every = opts.store_every.max(1);
    for step in 1..=opts.steps {
        if step <= opts.startup_steps {
            let be = be.as_ref().expect("factor built above");
            for _ in 0..2 {
                u = be.solve(&disc.mass.matvec(&u));
            }
        } else {
            u = cn.solve(&explicit.matvec(&u));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(KimuraError::Numerical(format!("non-finite state at step {step}")));
        }
        if step % every == 0 || step == opts.steps {
            let least = u.iter().copied().fold(f64::INFINITY, f64::min);
            out.min_value = out.min_value.min(least);
            out.negativity_violations += u.iter().filter(|v| **v < -tol).count();
            out.times.push(dt * step as f64);
            out.states.push(u.clone());
        }
    }
    Ok(out)
}

/// ∫ u dμ for nodal values u.
pub fn integral(disc: &DiscreteOperator, u: &[f64]) -> f64 {
    disc.mass.matvec(u).iter().sum()
}

//! Euler–Maruyama simulation of Kimura diffusions on the simplex
//! {xᵢ ≥ 0, Σxᵢ ≤ 1} ⊂ ℝⁿ with generator Σ(xᵢδᵢⱼ − xᵢxⱼ)∂ᵢ∂ⱼ + Σbᵢ∂ᵢ, so
//! dX = b dt + σ dW with σσᵀ = 2a.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::corner_geometry::line::LineKind;
use crate::error::{domain, KimuraError, Result};
use crate::heat_semigroup::HeatKernelBoundParams;
use crate::kimura_discretization::{p1_interpolate, DiscreteOperator, EigenDecomposition, KimuraOperator1D};

pub type DriftField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    /// bᵢ(x) = βᵢ − |β| xᵢ for weights β₁, …, β_{n+1}; the last weight
    /// belongs to the face Σxᵢ = 1.
    MutationWeights(Vec<f64>),
    /// A general field with a declared bound on sup|b|.
    Field { field: DriftField, sup: f64, label: String },
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::MutationWeights(w) => f.debug_tuple("MutationWeights").field(w).finish(),
            Drift::Field { label, sup, .. } => write!(f, "Field({label}, sup {sup})"),
        }
    }
}

impl Drift {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::MutationWeights(w) => {
                let total: f64 = w.iter().sum();
                for i in 0..x.len() {
                    out[i] = w[i] - total * x[i];
                }
            }
            Drift::Field { field, .. } => field(x, out),
        }
    }

    /// sup of |b| over the simplex; linear fields peak at a vertex.
    fn sup(&self, n: usize) -> f64 {
        match self {
            Drift::MutationWeights(_) => {
                let mut out = vec![0.0; n];
                let mut best = 0.0f64;
                for v in 0..=n {
                    let mut x = vec![0.0; n];
                    if v < n {
                        x[v] = 1.0;
                    }
                    self.eval(&x, &mut out);
                    best = best.max(out.iter().map(|b| b * b).sum::<f64>().sqrt());
                }
                best
            }
            Drift::Field { sup, .. } => *sup,
        }
    }

    fn describe(&self) -> String {
        match self {
            Drift::MutationWeights(w) => format!("mutation weights {w:?}"),
            Drift::Field { label, sup, .. } => format!("{label} (sup {sup})"),
        }
    }
}

/// Collect states every `every` steps once `burn_in_fraction` of the run
/// has elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recording {
    pub burn_in_fraction: f64,
    pub every: usize,
}

/// Keep full trajectories for the first `paths` paths, every `every` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thinning {
    pub paths: usize,
    pub every: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexSDE {
    pub n: usize,
    pub drift: Drift,
    pub dt: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    pub record: Option<Recording>,
    pub thin: Option<Thinning>,
}

impl SimplexSDE {
    /// One-dimensional process with b(x) = b0(1 − x) − b1 x.
    pub fn interval(b0: f64, b1: f64, start: f64, dt: f64, steps: usize, paths: usize, seed: u64) -> Self {
        Self {
            n: 1,
            drift: Drift::MutationWeights(vec![b0, b1]),
            dt,
            steps,
            paths,
            seed,
            start: vec![start],
            record: None,
            thin: None,
        }
    }

    pub fn inradius(&self) -> f64 {
        let n = self.n as f64;
        1.0 / (n + n.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.start.len() != self.n {
            return Err(domain(format!("start point must have {} coordinates", self.n)));
        }
        if let Drift::MutationWeights(w) = &self.drift {
            if w.len() != self.n + 1 || w.iter().any(|b| !(*b >= 0.0)) {
                return Err(domain(format!("need {} nonnegative weights, got {w:?}", self.n + 1)));
            }
        }
        if !in_simplex(&self.start, 0.0) {
            return Err(domain(format!("start {:?} lies outside the simplex", self.start)));
        }
        if !(self.dt > 0.0) || self.steps == 0 || self.paths == 0 {
            return Err(domain("dt, steps and paths must be positive"));
        }
        let sup = self.drift.sup(self.n);
        if !(self.dt * sup < self.inradius() / 4.0) {
            return Err(KimuraError::StepSize(format!(
                "dt·sup|b| = {} is not below inradius/4 = {}",
                self.dt * sup,
                self.inradius() / 4.0
            )));
        }
        if let Some(r) = self.record {
            if !(0.0..1.0).contains(&r.burn_in_fraction) || r.every == 0 {
                return Err(domain("burn-in fraction must lie in [0, 1) and the stride be positive"));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            n: self.n,
            drift: self.drift.describe(),
            dt: self.dt,
            steps: self.steps,
            paths: self.paths,
            seed: self.seed,
            start: self.start.clone(),
            record: self.record,
            thin: self.thin,
            generator_convention: "generator equals the operator: dX = b dt + sqrt(2a) dW".into(),
            rng: "ChaCha8, one stream per path".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub n: usize,
    pub drift: String,
    pub dt: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    pub record: Option<Recording>,
    pub thin: Option<Thinning>,
    pub generator_convention: String,
    pub rng: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationOutput {
    pub terminal: Vec<Vec<f64>>,
    /// Post-burn-in states, path by path.
    pub samples: Vec<Vec<f64>>,
    /// (t, state) for the thinned paths.
    pub trajectories: Vec<Vec<(f64, Vec<f64>)>>,
    pub projections: u64,
    pub steps_taken: u64,
    pub manifest: RunManifest,
}

impl SimulationOutput {
    pub fn projection_rate(&self) -> f64 {
        self.projections as f64 / self.steps_taken.max(1) as f64
    }
}

pub fn in_simplex(x: &[f64], tol: f64) -> bool {
    x.iter().all(|v| *v >= -tol) && x.iter().sum::<f64>() <= 1.0 + tol
}

/// Euclidean projection onto {xᵢ ≥ 0, Σxᵢ ≤ 1}; returns whether x moved.
pub fn project_to_simplex(x: &mut [f64]) -> bool {
    if in_simplex(x, 0.0) {
        return false;
    }
    let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 1.0 {
        x.copy_from_slice(&clamped);
        return true;
    }
    // projection onto the face Σxᵢ = 1
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite state"));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (i + 1) as f64;
        if *v - t > 0.0 {
            tau = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
    let s: f64 = x.iter().sum();
    if s > 1.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    true
}

/// σ with σσᵀ = 2(diag(x) − xxᵀ), by symmetric eigendecomposition with
/// negative eigenvalues clamped to zero.
pub fn diffusion_root(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    if n == 1 {
        return DMatrix::from_element(1, 1, (2.0 * x[0] * (1.0 - x[0])).max(0.0).sqrt());
    }
    let a = DMatrix::from_fn(n, n, |i, j| 2.0 * (if i == j { x[i] } else { 0.0 } - x[i] * x[j]));
    let eig = SymmetricEigen::new(a);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

struct PathResult {
    terminal: Vec<f64>,
    samples: Vec<Vec<f64>>,
    trajectory: Option<Vec<(f64, Vec<f64>)>>,
    projections: u64,
}

fn run_path(sde: &SimplexSDE, path: usize) -> Result<PathResult> {
    let n = sde.n;
    let mut rng = ChaCha8Rng::seed_from_u64(sde.seed);
    rng.set_stream(path as u64);
    let mut x = sde.start.clone();
    let mut b = vec![0.0; n];
    let mut xi = vec![0.0; n];
    let sq = sde.dt.sqrt();
    let mut projections = 0;
    let mut samples = Vec::new();
    let record_from = sde
        .record
        .map(|r| (r.burn_in_fraction * sde.steps as f64).ceil() as usize);
    let thin = sde.thin.filter(|t| path < t.paths);
    let mut trajectory = thin.map(|_| vec![(0.0, x.clone())]);
    for step in 1..=sde.steps {
        sde.drift.eval(&x, &mut b);
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let sigma = diffusion_root(&x);
        for i in 0..n {
            let mut noise = 0.0;
            for j in 0..n {
                noise += sigma[(i, j)] * xi[j];
            }
            x[i] += b[i] * sde.dt + noise * sq;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KimuraError::StepSize(format!(
                "non-finite state on path {path} at step {step} (dt = {})",
                sde.dt
            )));
        }
        if project_to_simplex(&mut x) {
            projections += 1;
        }
        if let (Some(from), Some(r)) = (record_from, sde.record) {
            if step >= from.max(1) && (step - from.max(1)) % r.every == 0 {
                samples.push(x.clone());
            }
        }
        if let (Some(t), Some(tr)) = (thin, trajectory.as_mut()) {
            if step % t.every == 0 {
                tr.push((step as f64 * sde.dt, x.clone()));
            }
        }
    }
    Ok(PathResult {
        terminal: x,
        samples,
        trajectory,
        projections,
    })
}

/// Runs every path; output is reproducible given the seed.
pub fn simulate(sde: &SimplexSDE) -> Result<SimulationOutput> {
    sde.validate()?;
    let results: Result<Vec<PathResult>> = (0..sde.paths).into_par_iter().map(|p| run_path(sde, p)).collect();
    let results = results?;
    let mut out = SimulationOutput {
        terminal: Vec::with_capacity(sde.paths),
        samples: Vec::new(),
        trajectories: Vec::new(),
        projections: 0,
        steps_taken: (sde.steps * sde.paths) as u64,
        manifest: sde.manifest(),
    };
    for r in results {
        out.terminal.push(r.terminal);
        out.samples.extend(r.samples);
        if let Some(t) = r.trajectory {
            out.trajectories.push(t);
        }
        out.projections += r.projections;
    }
    Ok(out)
}

/// Histogram partition of [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bins {
    pub edges: Vec<f64>,
}

impl Bins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("bin edges must increase"));
        }
        Ok(Self { edges })
    }

    pub fn uniform(count: usize) -> Self {
        Self {
            edges: (0..=count).map(|i| i as f64 / count as f64).collect(),
        }
    }

    /// Symmetric bins whose widths grow by `ratio` per bin from the centre
    /// out to both ends of [0, 1].
    pub fn edge_widened(count: usize, ratio: f64) -> Self {
        let half = count.div_ceil(2);
        let widths: Vec<f64> = (0..half).map(|i| ratio.powi(i as i32)).collect();
        let total: f64 = widths.iter().sum();
        let mut upper = vec![0.5];
        for w in &widths {
            let last = *upper.last().expect("nonempty");
            upper.push(last + 0.5 * w / total);
        }
        *upper.last_mut().expect("nonempty") = 1.0;
        let mut edges: Vec<f64> = upper.iter().rev().map(|u| 1.0 - u).collect();
        edges.pop();
        edges.extend(upper);
        edges[0] = 0.0;
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locate(&self, v: f64) -> Option<usize> {
        if v < self.edges[0] || v > *self.edges.last().expect("nonempty") {
            return None;
        }
        let k = self.edges.partition_point(|e| *e <= v);
        Some(k.saturating_sub(1).min(self.len() - 1))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalDensity {
    pub bins: Bins,
    pub counts: Vec<u64>,
    /// Bin masses summing to one.
    pub masses: Vec<f64>,
    pub path_count: usize,
}

impl EmpiricalDensity {
    /// Σ |mᵢ − ref(bin i)| where `reference(lo, hi)` is the reference mass.
    pub fn l1_distance(&self, reference: &dyn Fn(f64, f64) -> f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| (m - reference(self.bins.edges[i], self.bins.edges[i + 1])).abs())
            .sum()
    }

    pub fn l1_between(&self, other: &EmpiricalDensity) -> Result<f64> {
        if self.bins != other.bins {
            return Err(KimuraError::Config("histograms use different bins".into()));
        }
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Expected L¹ fluctuation of the histogram: Σ √(2mᵢ(1−mᵢ)/(πN)).
    pub fn mc_error(&self) -> f64 {
        let n = self.counts.iter().sum::<u64>() as f64;
        self.masses
            .iter()
            .map(|m| (2.0 * m * (1.0 - m) / (std::f64::consts::PI * n)).sqrt())
            .sum()
    }

    /// Density with respect to Lebesgue measure on each bin.
    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m / (self.bins.edges[i + 1] - self.bins.edges[i]))
            .collect()
    }
}

/// Normalized histogram of scalar samples.
pub fn empirical_stationary(values: &[f64], bins: &Bins) -> Result<EmpiricalDensity> {
    let mut counts = vec![0u64; bins.len()];
    for &v in values {
        if let Some(k) = bins.locate(v) {
            counts[k] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(KimuraError::Numerical("no samples fell in any bin".into()));
    }
    Ok(EmpiricalDensity {
        bins: bins.clone(),
        masses: counts.iter().map(|c| *c as f64 / total as f64).collect(),
        counts,
        path_count: values.len(),
    })
}

/// Coordinate `i` of every state.
pub fn marginal(states: &[Vec<f64>], i: usize) -> Vec<f64> {
    states.iter().map(|s| s[i]).collect()
}

/// Discretized operator matching a one-dimensional SDE.
pub struct TransitionReference<'a> {
    pub op: &'a KimuraOperator1D,
    pub disc: &'a DiscreteOperator,
    pub eig: &'a EigenDecomposition,
    pub envelope: Option<HeatKernelBoundParams>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeViolation {
    pub lo: f64,
    pub hi: f64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    pub t: f64,
    pub start: f64,
    pub l1: f64,
    pub mc_error: f64,
    pub reference_masses: Vec<f64>,
    pub empirical: EmpiricalDensity,
    pub checked_bins: usize,
    pub violations: Vec<EnvelopeViolation>,
    pub envelope_pass: Option<bool>,
}

/// Bin masses of p_t(x₀, ·)dμ from the discrete spectral expansion.
pub fn reference_transition_masses(
    disc: &DiscreteOperator,
    eig: &EigenDecomposition,
    t: f64,
    x0: f64,
    bins: &Bins,
) -> Vec<f64> {
    let mut masses = vec![0.0; bins.len()];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let decay = (-lambda * t).exp();
        if decay < 1e-16 {
            continue;
        }
        let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let at_start = p1_interpolate(&disc.nodes, &col, x0);
        for (e, quad) in disc.element_quad.iter().enumerate() {
            let (a, b) = (disc.nodes[e], disc.nodes[e + 1]);
            for (&x, &w) in quad.x.iter().zip(&quad.w) {
                let s = (x - a) / (b - a);
                let v = col[e] * (1.0 - s) + col[e + 1] * s;
                if let Some(bin) = bins.locate(x) {
                    masses[bin] += decay * at_start * v * w;
                }
            }
        }
    }
    masses
}

/// Empirical time-t law from a fixed start against the discrete kernel row,
/// with an optional pointwise check against a fitted upper envelope on
/// bins with at least 50 hits.
pub fn transition_check(
    sde: &SimplexSDE,
    t: f64,
    reference: &TransitionReference<'_>,
    bins: &Bins,
) -> Result<TransitionReport> {
    let (b0, b1) = match (&sde.drift, reference.op.geometry().kind()) {
        (Drift::MutationWeights(w), LineKind::UnitInterval { b0, b1 }) if sde.n == 1 => {
            if (w[0] - b0).abs() > 1e-12 || (w[1] - b1).abs() > 1e-12 {
                return Err(KimuraError::Config(format!(
                    "simulation weights {w:?} differ from operator weights ({b0}, {b1})"
                )));
            }
            (b0, b1)
        }
        _ => {
            return Err(KimuraError::Config(
                "transition checks need a one-dimensional weighted process and unit-interval operator".into(),
            ))
        }
    };
    if reference.op.drift_weights().is_some() {
        return Err(KimuraError::Config("operator carries a drift potential; weights alone must match".into()));
    }
    let _ = (b0, b1);
    let steps = (t / sde.dt).round() as usize;
    if steps == 0 || ((steps as f64) * sde.dt - t).abs() > 1e-9 * t {
        return Err(KimuraError::Config(format!("t = {t} is not a whole number of steps of {}", sde.dt)));
    }
    let run = SimplexSDE {
        steps,
        record: None,
        thin: None,
        ..sde.clone()
    };
    let x0 = sde.start[0];
    let out = simulate(&run)?;
    let empirical = empirical_stationary(&marginal(&out.terminal, 0), bins)?;
    let reference_masses = reference_transition_masses(reference.disc, reference.eig, t, x0, bins);
    let l1 = empirical
        .masses
        .iter()
        .zip(&reference_masses)
        .map(|(a, b)| (a - b).abs())
        .sum();
    let geometry = reference.op.geometry();
    let mut violations = Vec::new();
    let mut checked = 0;
    if let Some(params) = reference.envelope {
        let quad = crate::quadrature::QuadSpec::default();
        for i in 0..bins.len() {
            if empirical.counts[i] < 50 {
                continue;
            }
            checked += 1;
            let (lo, hi) = (bins.edges[i], bins.edges[i + 1]);
            let mu = geometry.mass_between(lo, hi, quad)?;
            let density = empirical.masses[i] / mu;
            let mut bound = 0.0f64;
            for s in 0..=4 {
                let y = lo + (hi - lo) * s as f64 / 4.0;
                bound = bound.max(params.upper_bound(geometry, t, x0, y)?);
            }
            if density > bound {
                violations.push(EnvelopeViolation {
                    lo,
                    hi,
                    empirical: density,
                    bound,
                });
            }
        }
    }
    Ok(TransitionReport {
        t,
        start: x0,
        l1,
        mc_error: empirical.mc_error(),
        reference_masses,
        checked_bins: checked,
        envelope_pass: reference.envelope.map(|_| violations.is_empty()),
        violations,
        empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projection_lands_in_simplex() {
        let mut x = vec![0.8, 0.7];
        assert!(project_to_simplex(&mut x));
        assert_relative_eq!(x[0], 0.55, epsilon = 1e-15);
        assert_relative_eq!(x[1], 0.45, epsilon = 1e-15);
        let mut y = vec![-0.1, 0.3];
        project_to_simplex(&mut y);
        assert_eq!(y, vec![0.0, 0.3]);
        let mut z = vec![0.2, 0.3];
        assert!(!project_to_simplex(&mut z));
    }

    #[test]
    fn diffusion_root_squares_back() {
        let x = [0.2, 0.3, 0.1];
        let s = diffusion_root(&x);
        let a = &s * s.transpose();
        for i in 0..3 {
            for j in 0..3 {
                let expect = 2.0 * (if i == j { x[i] } else { 0.0 } - x[i] * x[j]);
                assert_relative_eq!(a[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn vertex_is_absorbing_without_drift() {
        let mut sde = SimplexSDE::interval(0.0, 0.0, 1.0, 1e-3, 100, 4, 1);
        let out = simulate(&sde).unwrap();
        assert!(out.terminal.iter().all(|x| x[0] == 1.0));
        sde.n = 2;
        sde.drift = Drift::MutationWeights(vec![0.0; 3]);
        sde.start = vec![0.0, 1.0];
        let out = simulate(&sde).unwrap();
        assert!(out.terminal.iter().all(|x| x == &vec![0.0, 1.0]));
    }

    #[test]
    fn reproducible_and_checked() {
        let sde = SimplexSDE::interval(1.0, 1.0, 0.5, 1e-3, 50, 8, 42);
        let a = simulate(&sde).unwrap();
        let b = simulate(&sde).unwrap();
        assert_eq!(a.terminal, b.terminal);
        let bad = SimplexSDE::interval(1.0, 1.0, 0.5, 0.2, 50, 8, 42);
        assert!(matches!(simulate(&bad), Err(KimuraError::StepSize(_))));
        let outside = SimplexSDE::interval(1.0, 1.0, 1.5, 1e-3, 50, 8, 42);
        assert!(simulate(&outside).is_err());
    }

    #[test]
    fn widened_bins_partition_the_interval() {
        let b = Bins::edge_widened(20, 1.1);
        assert_eq!(b.len(), 20);
        assert_eq!(b.edges[0], 0.0);
        assert_eq!(*b.edges.last().unwrap(), 1.0);
        assert!(b.edges[1] - b.edges[0] > b.edges[11] - b.edges[10]);
        for i in 0..=20 {
            assert_relative_eq!(b.edges[i], 1.0 - b.edges[20 - i], epsilon = 1e-15);
        }
        assert_eq!(b.locate(1.0), Some(19));
        assert_eq!(b.locate(0.0), Some(0));
    }
}

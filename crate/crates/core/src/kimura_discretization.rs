//! Piecewise-linear finite elements for one-dimensional Kimura operators and
//! their tensor products on S_{1,1}.
//!
//! Every operator is assembled from its Dirichlet form
//! ∫ a(x) u′ v′ dμ with dμ = ρ(x) dx, so constants lie in the kernel of the
//! stiffness matrix and the natural boundary condition is built in.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::corner_geometry::line::{LineGeometry, LineKind, Potential};
use crate::error::{domain, KimuraError, Result};
use crate::linalg::{band_lowest_eigen, dense_generalized_eigen, normalize_signs, BandMatrix};
use crate::quadrature::{integrate_weighted, GaussRule, QuadSpec};
use crate::special::beta;

pub type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Largest dense eigenproblem; bigger problems use banded subspace iteration.
const DENSE_LIMIT: usize = 1200;
/// Relative change between sweeps at which subspace iteration stops; much
/// tighter stalls on rounding for the upper modes of fine grids.
const SUBSPACE_TOL: f64 = 1e-12;

/// Boundary weights and potential recovered from a drift on [0, 1].
#[derive(Clone)]
pub struct DriftWeights {
    pub b0: f64,
    /// Exponent of (1 − x); equals −b(1) in the drift orientation used here.
    pub b1: f64,
    pub drift: DriftFn,
    pub potential: Potential,
}

impl std::fmt::Debug for DriftWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftWeights")
            .field("b0", &self.b0)
            .field("b1", &self.b1)
            .finish()
    }
}

impl DriftWeights {
    /// U at the given points.
    pub fn u_samples(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| (self.potential)(x)).collect()
    }
}

fn potential_slope(drift: &DriftFn, b0: f64, b1: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    let drift = drift.clone();
    move |x: f64| (drift(x) - (b0 * (1.0 - x) - b1 * x)) / (x * (1.0 - x))
}

/// Splits a drift b(x) on [0, 1] into boundary weights and the potential U
/// with ∂ₓU = (b(x) − (b0(1−x) − b1 x)) / (x(1−x)) and U(1/2) = 0.
pub fn drift_to_weights(drift: DriftFn) -> Result<DriftWeights> {
    let b0 = drift(0.0);
    let b1 = -drift(1.0);
    if !(b0 > 0.0) || !(b1 > 0.0) {
        return Err(KimuraError::Model(format!(
            "drift gives boundary weights b0 = {b0}, b1 = {b1}; both must be positive"
        )));
    }
    let slope = potential_slope(&drift, b0, b1);
    let quad = QuadSpec::default().with_rel_tol(1e-12);
    let u = {
        let slope = slope.clone();
        move |x: f64| -> f64 {
            if x == 0.5 {
                return 0.0;
            }
            let (a, b, sign) = if x > 0.5 { (0.5, x, 1.0) } else { (x, 0.5, -1.0) };
            let f = |s: f64| slope(s);
            let quad = QuadSpec {
                abs_tol: 1e-14,
                ..quad
            };
            sign * integrate_weighted(&f, a, b, 0.0, 0.0, quad).unwrap_or(f64::NAN)
        }
    };
    // Boundedness: increments of U over successive decades must die out.
    for end in [0.0, 1.0] {
        let at = |k: i32| {
            let d = 10f64.powi(-k);
            u(if end == 0.0 { d } else { 1.0 - d })
        };
        let values: Vec<f64> = (1..=12).map(at).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KimuraError::Model(format!("potential is not finite near x = {end}")));
        }
        let steps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let tail = &steps[steps.len() - 3..];
        let decaying = tail.windows(2).all(|w| w[1] <= 0.9 * w[0] || w[1] < 1e-9);
        if !decaying && tail[2] > 1e-6 {
            return Err(KimuraError::Model(format!(
                "potential grows without bound near x = {end} (decade increments {tail:?})"
            )));
        }
    }
    Ok(DriftWeights {
        b0,
        b1,
        drift,
        potential: Arc::new(u),
    })
}

/// Continuous description of a one-dimensional Kimura operator.
#[derive(Clone, Debug)]
pub struct KimuraOperator1D {
    geometry: LineGeometry,
    drift: Option<DriftWeights>,
}

impl KimuraOperator1D {
    /// x(1−x)∂² + (b0(1−x) − b1x)∂ on [0, 1].
    pub fn interval(b0: f64, b1: f64) -> Result<Self> {
        Ok(Self {
            geometry: LineGeometry::unit_interval(b0, b1)?,
            drift: None,
        })
    }

    /// x(1−x)∂² + b(x)∂ on [0, 1] for a general drift.
    pub fn interval_with_drift(drift: DriftFn) -> Result<Self> {
        let weights = drift_to_weights(drift)?;
        let geometry = LineGeometry::unit_interval(weights.b0, weights.b1)?.with_potential(weights.potential.clone());
        Ok(Self {
            geometry,
            drift: Some(weights),
        })
    }

    /// x∂² + b∂ on [0, length].
    pub fn half_line(b: f64, length: f64) -> Result<Self> {
        Ok(Self {
            geometry: LineGeometry::new(LineKind::HalfLine { b, length })?,
            drift: None,
        })
    }

    /// ∂²_w + (2b−1)/w ∂_w on the ball [max(c−r, 0), c+r].
    pub fn w_ball(b: f64, center: f64, radius: f64) -> Result<Self> {
        if !(center >= 0.0) || !(radius > 0.0) {
            return Err(domain(format!("invalid w-ball centre {center}, radius {radius}")));
        }
        Ok(Self {
            geometry: LineGeometry::new(LineKind::WCoordinate {
                b,
                lo: (center - radius).max(0.0),
                hi: center + radius,
            })?,
            drift: None,
        })
    }

    /// ∂² on [lo, hi] with Neumann conditions.
    pub fn neumann(lo: f64, hi: f64) -> Result<Self> {
        Ok(Self {
            geometry: LineGeometry::new(LineKind::Flat { lo, hi })?,
            drift: None,
        })
    }

    pub fn from_geometry(geometry: LineGeometry) -> Self {
        Self { geometry, drift: None }
    }

    pub fn geometry(&self) -> &LineGeometry {
        &self.geometry
    }

    pub fn drift_weights(&self) -> Option<&DriftWeights> {
        self.drift.as_ref()
    }

    /// First-order coefficient of the operator in its own coordinate.
    pub fn drift_at(&self, x: f64) -> f64 {
        if let Some(d) = &self.drift {
            return (d.drift)(x);
        }
        match self.geometry.kind() {
            LineKind::UnitInterval { b0, b1 } => b0 * (1.0 - x) - b1 * x,
            LineKind::HalfLine { b, .. } => b,
            LineKind::WCoordinate { b, .. } => (2.0 * b - 1.0) / x,
            LineKind::Flat { .. } => 0.0,
        }
    }

    /// Whether the principal coefficient vanishes or the density is singular
    /// at (lo, hi).
    pub fn degenerate_ends(&self) -> (bool, bool) {
        let (lo, hi) = self.geometry.domain();
        let (pl, ph) = self.geometry.endpoint_exponents();
        (
            pl != 0.0 || self.geometry.coefficient(lo) == 0.0,
            ph != 0.0 || self.geometry.coefficient(hi) == 0.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Grading {
    Uniform,
    /// Element sizes shrink by `ratio` over `layer` elements toward each
    /// degenerate endpoint.
    Geometric { ratio: f64, layer: usize },
    /// Nodes equally spaced in the metric chart of the operator.
    Chart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub elements: usize,
    pub grading: Grading,
    pub interior_order: usize,
    pub singular_order: usize,
}

impl GridSpec {
    pub fn uniform(elements: usize) -> Self {
        Self {
            elements,
            grading: Grading::Uniform,
            interior_order: 4,
            singular_order: 8,
        }
    }

    pub fn graded(elements: usize) -> Self {
        Self {
            grading: Grading::Geometric {
                ratio: 0.8,
                layer: (elements / 4).min(20),
            },
            ..Self::uniform(elements)
        }
    }

    pub fn chart(elements: usize) -> Self {
        Self {
            grading: Grading::Chart,
            ..Self::uniform(elements)
        }
    }

    /// Nodes for an operator, using its metric chart when requested.
    pub fn nodes_for(&self, op: &KimuraOperator1D) -> Result<Vec<f64>> {
        let g = op.geometry();
        let (lo, hi) = g.domain();
        if self.grading != Grading::Chart {
            return self.nodes(lo, hi, op.degenerate_ends());
        }
        let (a, b) = (g.chart(lo), g.chart(hi));
        let mut nodes = self.nodes(a, b, (false, false))?;
        for v in nodes.iter_mut() {
            *v = g.chart_inverse(*v);
        }
        let last = nodes.len() - 1;
        nodes[0] = lo;
        nodes[last] = hi;
        Ok(nodes)
    }

    /// Nodes on [lo, hi]; chart grading falls back to uniform here.
    pub fn nodes(&self, lo: f64, hi: f64, degenerate: (bool, bool)) -> Result<Vec<f64>> {
        let n = self.elements;
        if n < 8 {
            return Err(domain(format!("grid needs at least 8 elements, got {n}")));
        }
        let mut sizes = vec![1.0; n];
        if let Grading::Geometric { ratio, layer } = self.grading {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(domain(format!("grading ratio must lie in (0, 1], got {ratio}")));
            }
            let ends = degenerate.0 as usize + degenerate.1 as usize;
            let layer = layer.min(n / (2 * ends.max(1)));
            for j in 0..layer {
                let size = ratio.powi((layer - j) as i32);
                if degenerate.0 {
                    sizes[j] = size;
                }
                if degenerate.1 {
                    sizes[n - 1 - j] = size;
                }
            }
        }
        let total: f64 = sizes.iter().sum();
        let mut nodes = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        nodes.push(lo);
        for s in &sizes[..n - 1] {
            acc += s;
            nodes.push(lo + (hi - lo) * acc / total);
        }
        nodes.push(hi);
        Ok(nodes)
    }
}

/// Quadrature points on one element, weights including the density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementQuad {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Assembled stiffness/mass pair.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    /// Grid nodes (the x-axis for tensor operators).
    pub nodes: Vec<f64>,
    /// y-axis nodes for tensor operators.
    pub y_nodes: Option<Vec<f64>>,
    pub stiffness: BandMatrix,
    pub mass: BandMatrix,
    /// Per-element quadrature of dμ (one-dimensional operators only).
    pub element_quad: Vec<ElementQuad>,
    factors: Option<Box<(DiscreteOperator, DiscreteOperator)>>,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn is_tensor(&self) -> bool {
        self.factors.is_some()
    }

    pub fn factors(&self) -> Option<(&DiscreteOperator, &DiscreteOperator)> {
        self.factors.as_deref().map(|(a, b)| (a, b))
    }

    /// μ-mass attached to each node: ∫ φᵢ dμ.
    pub fn node_mass(&self) -> Vec<f64> {
        self.mass.row_sums()
    }

    pub fn total_mass(&self) -> f64 {
        self.node_mass().iter().sum()
    }

    /// ‖S·1‖∞.
    pub fn constant_residual(&self) -> f64 {
        self.stiffness.row_sums().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn validate_nodes(nodes: &[f64], lo: f64, hi: f64) -> Result<()> {
    if nodes.len() < 9 {
        return Err(domain(format!("grid needs at least 8 elements, got {}", nodes.len().saturating_sub(1))));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("grid nodes must be strictly increasing"));
    }
    if nodes[0] != lo || nodes[nodes.len() - 1] != hi {
        return Err(domain(format!(
            "grid must span the domain [{lo}, {hi}], got [{}, {}]",
            nodes[0],
            nodes[nodes.len() - 1]
        )));
    }
    Ok(())
}

/// Assembles on the grid described by `grid`.
pub fn assemble(op: &KimuraOperator1D, grid: &GridSpec) -> Result<DiscreteOperator> {
    let nodes = grid.nodes_for(op)?;
    assemble_on_nodes(op, nodes, grid.interior_order, grid.singular_order)
}

/// Assembles on explicitly given nodes.
pub fn assemble_on_nodes(
    op: &KimuraOperator1D,
    nodes: Vec<f64>,
    interior_order: usize,
    singular_order: usize,
) -> Result<DiscreteOperator> {
    let g = &op.geometry;
    let (lo, hi) = g.domain();
    validate_nodes(&nodes, lo, hi)?;
    let (pl, ph) = g.endpoint_exponents();
    let plain = GaussRule::legendre(interior_order);
    // elements within a few widths of a singular endpoint see a steep density
    let steep = GaussRule::legendre(2 * singular_order);
    let lo_rule = GaussRule::jacobi(singular_order, 0.0, pl)?;
    let hi_rule = GaussRule::jacobi(singular_order, ph, 0.0)?;
    let n = nodes.len();
    let mut s = BandMatrix::zeros(n, 1);
    let mut m = BandMatrix::zeros(n, 1);
    let mut quads = Vec::with_capacity(n - 1);
    for e in 0..n - 1 {
        let (a, b) = (nodes[e], nodes[e + 1]);
        let first = e == 0 && pl != 0.0;
        let last = e == n - 2 && ph != 0.0;
        let (xs, ws) = if first {
            lo_rule.mapped(a, b)
        } else if last {
            hi_rule.mapped(a, b)
        } else if (pl != 0.0 && a - lo < 20.0 * (b - a)) || (ph != 0.0 && hi - b < 20.0 * (b - a)) {
            steep.mapped(a, b)
        } else {
            plain.mapped(a, b)
        };
        let w: Vec<f64> = xs
            .iter()
            .zip(&ws)
            .map(|(&x, &wt)| {
                let mut d = g.regular_factor(x);
                if pl != 0.0 && !first {
                    d *= (x - lo).powf(pl);
                }
                if ph != 0.0 && !last {
                    d *= (hi - x).powf(ph);
                }
                wt * d
            })
            .collect();
        let h = b - a;
        let mut stiff = 0.0;
        let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
        for (&x, &wt) in xs.iter().zip(&w) {
            stiff += wt * g.coefficient(x);
            let t = (x - a) / h;
            m00 += wt * (1.0 - t) * (1.0 - t);
            m01 += wt * t * (1.0 - t);
            m11 += wt * t * t;
        }
        if !(m00 > 0.0 && m11 > 0.0) || !stiff.is_finite() {
            return Err(KimuraError::Numerical(format!("element {e} has no mass")));
        }
        let k = stiff / (h * h);
        s.add(e, e, k);
        s.add(e + 1, e + 1, k);
        s.add(e, e + 1, -k);
        s.add(e + 1, e, -k);
        m.add(e, e, m00);
        m.add(e + 1, e + 1, m11);
        m.add(e, e + 1, m01);
        m.add(e + 1, e, m01);
        quads.push(ElementQuad { x: xs, w });
    }
    Ok(DiscreteOperator {
        nodes,
        y_nodes: None,
        stiffness: s,
        mass: m,
        element_quad: quads,
        factors: None,
    })
}

/// Tensor operator x∂²ₓ + b∂ₓ + ∂²_y style sums on a product domain.
#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub x_op: KimuraOperator1D,
    pub x_grid: GridSpec,
    pub y_op: KimuraOperator1D,
    pub y_grid: GridSpec,
    /// Coefficient of a mixed second derivative; only zero is supported.
    pub cross: f64,
}

/// Kronecker-sum assembly: S = Sx⊗My + Mx⊗Sy and M = Mx⊗My, with node
/// index i·ny + j.
pub fn assemble_2d(spec: &TensorSpec) -> Result<DiscreteOperator> {
    if spec.cross != 0.0 {
        return Err(KimuraError::Unsupported(
            "mixed second-order terms are not tensorizable".into(),
        ));
    }
    let x = assemble(&spec.x_op, &spec.x_grid)?;
    let y = assemble(&spec.y_op, &spec.y_grid)?;
    let stiffness = BandMatrix::kron(&x.stiffness, &y.mass)
        .add_scaled(1.0, &BandMatrix::kron(&x.mass, &y.stiffness));
    let mass = BandMatrix::kron(&x.mass, &y.mass);
    Ok(DiscreteOperator {
        nodes: x.nodes.clone(),
        y_nodes: Some(y.nodes.clone()),
        stiffness,
        mass,
        element_quad: Vec::new(),
        factors: Some(Box::new((x, y))),
    })
}

/// Eigenvalues λ_k (ascending, ≥ 0) with M-orthonormal eigenvectors ψ_k.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// max |ΨᵀMΨ − I|.
    pub fn orthonormality_defect(&self, disc: &DiscreteOperator) -> f64 {
        let k = self.eigenvalues.len();
        let mut worst = 0.0f64;
        let mv: Vec<Vec<f64>> = (0..k)
            .map(|j| disc.mass.matvec(self.eigenvectors.column(j).as_slice()))
            .collect();
        for i in 0..k {
            for (j, mj) in mv.iter().enumerate() {
                let g: f64 = self.eigenvectors.column(i).iter().zip(mj).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

fn clamp_values(values: &mut [f64]) {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for v in values.iter_mut() {
        if v.abs() < 1e-10 * scale {
            *v = 0.0;
        }
    }
}

/// Lowest `k` eigenpairs of S v = λ M v.
pub fn eigs(disc: &DiscreteOperator, k: usize) -> Result<EigenDecomposition> {
    let n = disc.dim();
    if k > n {
        return Err(domain(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    if let Some((x, y)) = disc.factors() {
        return tensor_eigs(x, y, k);
    }
    let sol = if n <= DENSE_LIMIT || 8 * k > n {
        dense_generalized_eigen(&disc.stiffness.to_dense(), &disc.mass.to_dense(), k, true)?
    } else {
        band_lowest_eigen(&disc.stiffness, &disc.mass, k, SUBSPACE_TOL)?
    };
    let mut values = sol.values;
    clamp_values(&mut values);
    let mut vectors = sol.vectors.expect("vectors requested");
    normalize_signs(&mut vectors);
    Ok(EigenDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Lowest `k` eigenvalues without eigenvectors.
pub fn eigenvalues(disc: &DiscreteOperator, k: usize) -> Result<Vec<f64>> {
    let n = disc.dim();
    if k > n {
        return Err(domain(format!("requested {k} eigenvalues of a {n}-dimensional operator")));
    }
    let mut values = if let Some((x, y)) = disc.factors() {
        let ex = eigenvalues(x, x.dim())?;
        let ey = eigenvalues(y, y.dim())?;
        let mut all: Vec<f64> = ex.iter().flat_map(|a| ey.iter().map(move |b| a + b)).collect();
        all.sort_by(f64::total_cmp);
        all.truncate(k);
        all
    } else if n <= DENSE_LIMIT || 8 * k > n {
        dense_generalized_eigen(&disc.stiffness.to_dense(), &disc.mass.to_dense(), k, false)?.values
    } else {
        band_lowest_eigen(&disc.stiffness, &disc.mass, k, SUBSPACE_TOL)?.values
    };
    clamp_values(&mut values);
    Ok(values)
}

fn tensor_eigs(x: &DiscreteOperator, y: &DiscreteOperator, k: usize) -> Result<EigenDecomposition> {
    let ex = eigs(x, x.dim())?;
    let ey = eigs(y, y.dim())?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(x.dim() * y.dim());
    for (i, a) in ex.eigenvalues.iter().enumerate() {
        for (j, b) in ey.eigenvalues.iter().enumerate() {
            pairs.push((a + b, i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.truncate(k);
    let (nx, ny) = (x.dim(), y.dim());
    let vectors = DMatrix::from_fn(nx * ny, k, |r, c| {
        let (_, i, j) = pairs[c];
        ex.eigenvectors[(r / ny, i)] * ey.eigenvectors[(r % ny, j)]
    });
    Ok(EigenDecomposition {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        eigenvectors: vectors,
    })
}

/// P_0..P_{n_max} of the Jacobi family (α, β) at t ∈ [−1, 1] by the
/// three-term recurrence.
fn jacobi_values(alpha: f64, beta: f64, n_max: usize, t: f64) -> Vec<f64> {
    let mut p = vec![1.0];
    if n_max == 0 {
        return p;
    }
    p.push(0.5 * (alpha - beta) + 0.5 * (alpha + beta + 2.0) * t);
    for n in 1..n_max {
        let nf = n as f64;
        let s = 2.0 * nf + alpha + beta;
        let a = 2.0 * (nf + 1.0) * (nf + alpha + beta + 1.0) * s;
        let b = (s + 1.0) * ((s + 2.0) * s * t + alpha * alpha - beta * beta);
        let c = 2.0 * (nf + alpha) * (nf + beta) * (s + 2.0);
        p.push((b * p[n] - c * p[n - 1]) / a);
    }
    p
}

/// Eigenvalues n(n + b0 + b1 − 1), n = 0..=n_max, after checking that the
/// Jacobi polynomials p_n(x) = P_n^{(b1−1, b0−1)}(2x − 1) satisfy
/// L p_n + λ_n p_n = 0 on a sample of [0, 1] (residual relative to
/// (1 + λ_n) sup|p_n|).
pub fn jacobi_exact_spectrum(b0: f64, b1: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(b0 > 0.0) || !(b1 > 0.0) {
        return Err(domain(format!("weights must be positive, got {b0}, {b1}")));
    }
    let (alpha, beta) = (b1 - 1.0, b0 - 1.0);
    let samples: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
    // values of P^{(α,β)}, P^{(α+1,β+1)}, P^{(α+2,β+2)} at every sample
    let tables: Vec<[Vec<f64>; 3]> = samples
        .iter()
        .map(|&x| {
            let t = 2.0 * x - 1.0;
            [
                jacobi_values(alpha, beta, n_max, t),
                jacobi_values(alpha + 1.0, beta + 1.0, n_max.saturating_sub(1), t),
                jacobi_values(alpha + 2.0, beta + 2.0, n_max.saturating_sub(2), t),
            ]
        })
        .collect();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let nf = n as f64;
        let lambda = nf * (nf + b0 + b1 - 1.0);
        let s1 = nf + alpha + beta + 1.0;
        let mut scale = 0.0f64;
        let mut residual = 0.0f64;
        for (&x, tab) in samples.iter().zip(&tables) {
            let p = tab[0][n];
            let dp = if n >= 1 { s1 * tab[1][n - 1] } else { 0.0 };
            let d2p = if n >= 2 { s1 * (s1 + 1.0) * tab[2][n - 2] } else { 0.0 };
            let lp = x * (1.0 - x) * d2p + (b0 * (1.0 - x) - b1 * x) * dp;
            scale = scale.max(p.abs());
            residual = residual.max((lp + lambda * p).abs());
        }
        let residual = residual / (scale * (1.0 + lambda));
        if !(residual < 1e-9) {
            return Err(KimuraError::Consistency(format!(
                "degree-{n} eigenpolynomial residual {residual:e}"
            )));
        }
        out.push(lambda);
    }
    Ok(out)
}

/// Normalized stationary density c₀ ρ(x).
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    pub c0: f64,
    geometry: LineGeometry,
}

impl StationaryDensity {
    pub fn density(&self, x: f64) -> f64 {
        self.c0 * self.geometry.density(x)
    }

    pub fn geometry(&self) -> &LineGeometry {
        &self.geometry
    }
}

pub fn stationary_density(op: &KimuraOperator1D, quad: QuadSpec) -> Result<StationaryDensity> {
    let g = op.geometry.clone();
    let c0 = match (g.kind(), g.potential()) {
        (LineKind::UnitInterval { b0, b1 }, None) => 1.0 / beta(b0, b1),
        _ => {
            let total = g.total_mass(quad)?;
            if !(total > 0.0) || !total.is_finite() {
                return Err(domain("density is not integrable"));
            }
            1.0 / total
        }
    };
    Ok(StationaryDensity { c0, geometry: g })
}

/// Piecewise-linear interpolation of nodal values; constant extension
/// outside the grid.
pub fn p1_interpolate(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let i = nodes.partition_point(|v| *v <= x) - 1;
    let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    values[i] * (1.0 - t) + values[i + 1] * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn uniform_masses_and_kernel() {
        let op = KimuraOperator1D::interval(1.0, 1.0).unwrap();
        let d = assemble(&op, &GridSpec::uniform(40)).unwrap();
        assert_relative_eq!(d.total_mass(), 1.0, max_relative = 1e-13);
        assert!(d.constant_residual() < 1e-12);
        assert!(d.stiffness.asymmetry() < 1e-12);
        let op = KimuraOperator1D::interval(0.5, 0.5).unwrap();
        let d = assemble(&op, &GridSpec::graded(64)).unwrap();
        assert_relative_eq!(d.total_mass(), PI, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        let op = KimuraOperator1D::interval(1.0, 1.0).unwrap();
        assert!(assemble(&op, &GridSpec::uniform(4)).is_err());
        let mut nodes: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        nodes.swap(3, 4);
        assert!(assemble_on_nodes(&op, nodes, 4, 8).is_err());
    }

    #[test]
    fn exact_spectra() {
        assert_eq!(jacobi_exact_spectrum(1.0, 1.0, 3).unwrap(), vec![0.0, 2.0, 6.0, 12.0]);
        assert_eq!(jacobi_exact_spectrum(0.5, 0.5, 3).unwrap(), vec![0.0, 1.0, 4.0, 9.0]);
        assert_eq!(jacobi_exact_spectrum(2.0, 3.0, 0).unwrap(), vec![0.0]);
        assert!(jacobi_exact_spectrum(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn discrete_spectra_approach_exact() {
        for &(b0, b1) in &[(1.0, 1.0), (0.5, 0.5), (2.0, 3.0)] {
            let op = KimuraOperator1D::interval(b0, b1).unwrap();
            let d = assemble(&op, &GridSpec::graded(400)).unwrap();
            let e = eigs(&d, 6).unwrap();
            let exact = jacobi_exact_spectrum(b0, b1, 5).unwrap();
            assert!(e.eigenvalues[0].abs() < 1e-9);
            for k in 1..6 {
                assert_relative_eq!(e.eigenvalues[k], exact[k], max_relative = 5e-3);
            }
            assert!(e.orthonormality_defect(&d) < 1e-10);
            // constant ground state
            let c = e.eigenvectors.column(0);
            assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-8 * c[0].abs()));
        }
    }

    #[test]
    fn banded_path_matches_dense() {
        let op = KimuraOperator1D::interval(0.5, 0.5).unwrap();
        let d = assemble(&op, &GridSpec::graded(1500)).unwrap();
        let band = eigenvalues(&d, 6).unwrap();
        let exact = jacobi_exact_spectrum(0.5, 0.5, 5).unwrap();
        for k in 1..6 {
            assert_relative_eq!(band[k], exact[k], max_relative = 1e-4);
        }
    }

    #[test]
    fn w_ball_matches_bessel_case() {
        let op = KimuraOperator1D::w_ball(0.5, 0.0, 1.0).unwrap();
        let d = assemble(&op, &GridSpec::graded(200)).unwrap();
        let e = eigenvalues(&d, 2).unwrap();
        assert_relative_eq!(e[1], PI * PI, max_relative = 1e-3);
    }

    #[test]
    fn stationary_densities() {
        let q = QuadSpec::default();
        let s = stationary_density(&KimuraOperator1D::interval(1.0, 1.0).unwrap(), q).unwrap();
        assert_relative_eq!(s.density(0.3), 1.0, max_relative = 1e-14);
        let s = stationary_density(&KimuraOperator1D::interval(0.5, 0.5).unwrap(), q).unwrap();
        let x: f64 = 0.2;
        assert_relative_eq!(s.density(x), 1.0 / (PI * (x * (1.0 - x)).sqrt()), max_relative = 1e-13);
        let s = stationary_density(&KimuraOperator1D::interval(2.0, 3.0).unwrap(), q).unwrap();
        assert_relative_eq!(s.c0, 12.0, max_relative = 1e-13);
    }

    #[test]
    fn drift_examples() {
        let d = drift_to_weights(Arc::new(|x| 0.7 * (1.0 - x) - 1.3 * x)).unwrap();
        assert_relative_eq!(d.b0, 0.7);
        assert_relative_eq!(d.b1, 1.3);
        assert!(d.u_samples(&[0.01, 0.3, 0.99]).iter().all(|u| u.abs() < 1e-12));
        let d = drift_to_weights(Arc::new(|x| (1.0 - x) / 2.0 - x / 3.0)).unwrap();
        assert_relative_eq!(d.b0, 0.5);
        assert_relative_eq!(d.b1, 1.0 / 3.0, max_relative = 1e-15);
        assert!(matches!(drift_to_weights(Arc::new(|_| 0.5)), Err(KimuraError::Model(_))));
    }

    #[test]
    fn drift_with_bounded_potential() {
        // b(x) = b0(1-x) - b1 x + x(1-x) U'(x) with U = sin(3x)
        let drift: DriftFn = Arc::new(|x| (1.0 - x) - 2.0 * x + x * (1.0 - x) * 3.0 * (3.0 * x).cos());
        let d = drift_to_weights(drift.clone()).unwrap();
        let u = d.u_samples(&[0.1, 0.9]);
        assert_relative_eq!(u[0], (0.3f64).sin() - 1.5f64.sin(), epsilon = 1e-10);
        assert_relative_eq!(u[1], (2.7f64).sin() - 1.5f64.sin(), epsilon = 1e-10);
        let op = KimuraOperator1D::interval_with_drift(drift).unwrap();
        let s = stationary_density(&op, QuadSpec::default()).unwrap();
        let total = op.geometry().mass_between(0.0, 1.0, QuadSpec::default()).unwrap() * s.c0;
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn tensor_assembly() {
        let spec = TensorSpec {
            x_op: KimuraOperator1D::half_line(0.5, 1.0).unwrap(),
            x_grid: GridSpec::graded(24),
            y_op: KimuraOperator1D::neumann(-1.0, 1.0).unwrap(),
            y_grid: GridSpec::uniform(16),
            cross: 0.0,
        };
        let d = assemble_2d(&spec).unwrap();
        assert!(d.constant_residual() < 1e-12);
        let (x, y) = d.factors().unwrap();
        let ex = eigenvalues(x, 5).unwrap();
        let ey = eigenvalues(y, 5).unwrap();
        let mut sums: Vec<f64> = ex.iter().flat_map(|a| ey.iter().map(move |b| a + b)).collect();
        sums.sort_by(f64::total_cmp);
        let e = eigs(&d, 5).unwrap();
        for k in 0..5 {
            assert_relative_eq!(e.eigenvalues[k], sums[k], epsilon = 1e-9);
        }
        assert_relative_eq!(e.eigenvalues[1], ex[1].min(ey[1]), epsilon = 1e-9);
        assert!(e.orthonormality_defect(&d) < 1e-10);
        let bad = TensorSpec { cross: 0.1, ..spec };
        assert!(matches!(assemble_2d(&bad), Err(KimuraError::Unsupported(_))));
    }

    #[test]
    fn interpolation() {
        let nodes = [0.0, 1.0, 3.0];
        let vals = [1.0, 3.0, 7.0];
        assert_eq!(p1_interpolate(&nodes, &vals, 2.0), 5.0);
        assert_eq!(p1_interpolate(&nodes, &vals, -1.0), 1.0);
        assert_eq!(p1_interpolate(&nodes, &vals, 3.0), 7.0);
    }
}

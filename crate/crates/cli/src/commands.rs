//! One function per command. Each returns the numeric payload, a verdict
//! and any tables; nothing here touches the filesystem.

use std::f64::consts::PI;

use kimura_core::bessel_poincare::{phi, poincare_1d, zeta1, PoincareBound1D, ZETA1_TOL};
use kimura_core::corner_geometry::{DoublingSweep, LineGeometry, WeightSpec, WeightedMeasure};
use kimura_core::harnack_probe::{
    harnack_scale_stability, holder_blowup, holder_exponent, singular_inequality_constant, solve_for_window,
    BlowupFit, DataFamily, HarnackWindow, HoelderFit, ScaleStability,
};
use kimura_core::heat_semigroup::{
    chart_sample_nodes, conservation_defect, diagonal_comparability, fit_lower_envelope, fit_upper_envelope,
    log_times, relative_change, semigroup_defect, weyl_fit, DiagonalRatios, EnvelopeFit, HeatKernelGrid,
    WeylReport,
};
use kimura_core::kimura_discretization::{
    assemble, eigenvalues, eigs, jacobi_exact_spectrum, stationary_density, DiscreteOperator, GridSpec,
    KimuraOperator1D,
};
use kimura_core::quadrature::QuadSpec;
use kimura_core::stationary_series::{
    apply_adjoint, coefficient_table, compare_first_order, format_table, solve_expansion, CoefficientCheck,
};
use kimura_core::wright_fisher_mc::{
    empirical_stationary, marginal, simulate, Bins, Drift, EmpiricalDensity, SimplexSDE, Thinning,
};
use kimura_core::{KimuraError, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::report::{Outcome, Table};
use crate::Context;

fn quad() -> QuadSpec {
    QuadSpec::default().with_rel_tol(1e-11)
}

fn bad(msg: impl Into<String>) -> KimuraError {
    KimuraError::Config(msg.into())
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn doubling(p: &DoublingParams, _: &Context) -> Result<Outcome> {
    if p.weights.is_empty() {
        return Err(bad("at least one weight is needed"));
    }
    let n = p.weights.len();
    let mu = WeightedMeasure::new(WeightSpec::constant(p.weights.clone())?, p.m);
    let sweep = DoublingSweep::log_grid(n, p.m, p.extent, p.per_axis, p.r_min, p.r_max, p.radii);
    let est = mu.estimate_doubling_dimension(&sweep, quad())?;
    let corner = 2.0 * p.weights.iter().sum::<f64>() + p.m as f64;
    // the corner dominates the sweep only when no weight falls below 1/2
    let pass = p
        .weights
        .iter()
        .all(|b| *b >= 0.5)
        .then(|| (est.dimension - corner).abs() <= 1e-9 * corner);
    Ok(Outcome::new(
        json!({ "estimate": est, "corner_dimension": corner, "centers": sweep.centers.len(), "radii": sweep.radii }),
        pass,
    ))
}

pub fn bessel(p: &BesselParams, _: &Context) -> Result<Outcome> {
    let z = zeta1(p.b, p.tol)?;
    let closed = (p.b == 0.5).then_some(PI * PI / 4.0);
    let closed_error = closed.map(|c| (z - c).abs() / c);
    let pass = z > p.b + 1.0 && closed_error.is_none_or(|e| e <= 1e-10);
    let mut curve = Table::new("zeta1_curve", &["b", "zeta1", "b_plus_one"]);
    for k in 1..=40 {
        let b = 0.25 * k as f64;
        curve.push(vec![b, zeta1(b, ZETA1_TOL)?, b + 1.0]);
    }
    let mut out = Outcome::new(
        json!({
            "b": p.b,
            "zeta1": z,
            "lower_bound": p.b + 1.0,
            "residual": phi(p.b + 1.0, z)?,
            "closed_form": closed,
            "closed_form_rel_error": closed_error,
        }),
        Some(pass),
    );
    out.tables.push(curve);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareComparison {
    pub bound: PoincareBound1D,
    pub discrete: f64,
    pub rel_diff: f64,
}

/// The 1D bound on the ball of radius one about `x` against the first
/// nonzero discrete Neumann eigenvalue there.
pub fn poincare_comparison(b: f64, x: f64, elements: usize) -> Result<PoincareComparison> {
    let bound = poincare_1d(b, b, b, x)?;
    let op = KimuraOperator1D::w_ball(b, x, 1.0)?;
    let discrete = eigenvalues(&assemble(&op, &GridSpec::graded(elements))?, 2)?[1];
    Ok(PoincareComparison {
        rel_diff: (discrete - bound.lambda_lower) / bound.lambda_lower,
        bound,
        discrete,
    })
}

pub fn poincare(p: &PoincareParams, _: &Context) -> Result<Outcome> {
    let c = poincare_comparison(p.b, p.x, p.elements)?;
    let pass = if c.bound.exact { c.rel_diff.abs() <= 5e-3 } else { c.rel_diff >= -5e-3 };
    Ok(Outcome::new(to_json(&c), Some(pass)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeCheck {
    pub mode: usize,
    pub exact: f64,
    pub discrete: f64,
    pub rel_error: f64,
    /// log₂ of the error ratio under halving the element size; None when
    /// the coarse grid is already exact.
    pub order: Option<f64>,
}

pub fn spectrum_check(b0: f64, b1: f64, elements: usize, modes: usize) -> Result<Vec<ModeCheck>> {
    let exact = jacobi_exact_spectrum(b0, b1, modes)?;
    let op = KimuraOperator1D::interval(b0, b1)?;
    let fine = eigenvalues(&assemble(&op, &GridSpec::graded(elements))?, modes + 1)?;
    let coarse = eigenvalues(&assemble(&op, &GridSpec::graded(elements / 2))?, modes + 1)?;
    Ok((1..=modes)
        .map(|n| {
            let coarse_err = (coarse[n] - exact[n]).abs();
            let fine_err = (fine[n] - exact[n]).abs();
            ModeCheck {
                mode: n,
                exact: exact[n],
                discrete: fine[n],
                rel_error: fine_err / exact[n],
                order: (coarse_err > 1e-9 * exact[n]).then(|| (coarse_err / fine_err).log2()),
            }
        })
        .collect())
}

pub fn spectrum(p: &SpectrumParams, _: &Context) -> Result<Outcome> {
    if p.elements < 4 || p.modes == 0 {
        return Err(bad("need at least 4 elements and one mode"));
    }
    let checks = spectrum_check(p.b0, p.b1, p.elements, p.modes)?;
    let pass = checks
        .iter()
        .all(|c| c.rel_error <= p.tolerance && c.order.is_none_or(|o| o >= 1.0));
    let mut table = Table::new("spectrum", &["mode", "exact", "discrete", "rel_error", "order"]);
    for c in &checks {
        table.push(vec![c.mode as f64, c.exact, c.discrete, c.rel_error, c.order.unwrap_or(f64::NAN)]);
    }
    let mut out = Outcome::new(json!({ "modes": checks }), Some(pass));
    out.tables.push(table);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatLevel {
    pub elements: usize,
    /// (t, conservation defect, semigroup defect).
    pub defects: Vec<(f64, f64, f64)>,
    pub t_min_reliable: f64,
    pub positivity: f64,
    pub upper: EnvelopeFit,
    pub lower: EnvelopeFit,
    pub diagonal: DiagonalRatios,
    #[serde(skip)]
    pub grid: HeatKernelGrid,
}

pub fn heat_level(
    b0: f64,
    b1: f64,
    elements: usize,
    points: usize,
    times: &[f64],
    d: f64,
) -> Result<(HeatLevel, LineGeometry)> {
    let op = KimuraOperator1D::interval(b0, b1)?;
    let disc = assemble(&op, &GridSpec::chart(elements))?;
    let eig = eigs(&disc, disc.dim())?;
    let g = op.geometry().clone();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut defects = Vec::new();
    for t in [t0, (t0 * t1).sqrt(), t1] {
        defects.push((t, conservation_defect(&disc, &eig, t)?, semigroup_defect(&disc, &eig, t)?));
    }
    let grid = HeatKernelGrid::build(&disc, &eig, times, &chart_sample_nodes(&disc, &g, points))?;
    let level = HeatLevel {
        elements,
        defects,
        t_min_reliable: grid.t_min_reliable,
        positivity: grid.check_positivity()?,
        upper: fit_upper_envelope(&grid, &g, d)?,
        lower: fit_lower_envelope(&grid, &g)?,
        diagonal: diagonal_comparability(&grid, &g)?,
        grid,
    };
    Ok((level, g))
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatRefinement {
    pub upper_c0: f64,
    pub lower_c0: f64,
    pub diagonal_sup: f64,
    pub diagonal_inf: f64,
}

pub fn heat_refinement(a: &HeatLevel, b: &HeatLevel) -> HeatRefinement {
    HeatRefinement {
        upper_c0: relative_change(a.upper.params.c0, b.upper.params.c0),
        lower_c0: relative_change(a.lower.params.c0, b.lower.params.c0),
        diagonal_sup: relative_change(a.diagonal.sup, b.diagonal.sup),
        diagonal_inf: relative_change(a.diagonal.inf, b.diagonal.inf),
    }
}

pub fn heat_level_passes(l: &HeatLevel) -> bool {
    l.defects.iter().all(|(_, c, s)| *c < 1e-8 && *s < 1e-8)
        && l.positivity > 0.0
        && l.upper.params.c0.is_finite()
        && l.lower.params.c0.is_finite()
        && l.diagonal.sup.is_finite()
        && l.diagonal.inf > 0.0
}

pub fn heat(p: &HeatParams, _: &Context) -> Result<Outcome> {
    if !(p.t_min > 0.0 && p.t_max > p.t_min) || p.times < 2 || p.points < 2 {
        return Err(bad("need 0 < t_min < t_max, two times and two points"));
    }
    let times = log_times(p.t_min, p.t_max, p.times);
    let (coarse, _) = heat_level(p.b0, p.b1, p.elements, p.points, &times, p.d)?;
    let mut pass = heat_level_passes(&coarse);
    let mut results = json!({ "times": times, "levels": [coarse] });
    if p.refine {
        let fine_times = log_times(p.t_min, p.t_max, 2 * p.times);
        let (fine, _) = heat_level(p.b0, p.b1, 2 * p.elements, 2 * p.points, &fine_times, p.d)?;
        let change = heat_refinement(&coarse, &fine);
        pass &= heat_level_passes(&fine) && change.upper_c0 < 0.1 && change.lower_c0 < 0.1;
        results["levels"].as_array_mut().unwrap().push(to_json(&fine));
        results["refinement_change"] = to_json(&change);
    }
    let mut table = Table::new("heat_kernel", &["t", "xi", "eta", "p"]);
    for (k, &t) in coarse.grid.times.iter().enumerate() {
        for (xi, eta, v) in coarse.grid.slice_rows(k) {
            table.push(vec![t, xi, eta, v]);
        }
    }
    let mut out = Outcome::new(results, Some(pass));
    out.tables.push(table);
    Ok(out)
}

/// Indicator data 1{x < c} with jumps spread evenly (in the chart) over the
/// ball of radius r about `center`.
pub fn step_family(disc: &DiscreteOperator, g: &LineGeometry, center: f64, r: f64, count: usize) -> Vec<Vec<f64>> {
    let (a, b) = g.ball(center, r);
    let (ca, cb) = (g.chart(a), g.chart(b));
    (1..=count)
        .map(|k| {
            let cut = g.chart_inverse(ca + (cb - ca) * k as f64 / (count + 1) as f64);
            disc.nodes.iter().map(|&x| if x < cut { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

/// Hölder fit on the later cylinder of the window at `r` for step data.
pub fn step_holder(b: f64, elements: usize, center: f64, r: f64) -> Result<HoelderFit> {
    let op = KimuraOperator1D::interval(b, b)?;
    let disc = assemble(&op, &GridSpec::chart(elements))?;
    let g = op.geometry();
    let window = HarnackWindow::from_start(r, center)?;
    let solutions = step_family(&disc, g, center, r, 7)
        .iter()
        .map(|u| solve_for_window(&disc, &window, u))
        .collect::<Result<Vec<_>>>()?;
    holder_exponent(&disc, g, &solutions, &window)
}

/// Norm growth for the continuous, non-Lipschitz data √|x − ½|.
pub fn rough_blowup(b: f64, elements: usize, gamma: f64) -> Result<BlowupFit> {
    let op = KimuraOperator1D::interval(b, b)?;
    let disc = assemble(&op, &GridSpec::chart(elements))?;
    let u: Vec<f64> = disc.nodes.iter().map(|x| (x - 0.5).abs().sqrt()).collect();
    holder_blowup(&disc, op.geometry(), &u, &log_times(1e-3, 0.1, 6), gamma)
}

pub fn scale_stability(
    b: f64,
    elements: usize,
    center: f64,
    radii: &[f64],
    family: &DataFamily,
    factor: f64,
) -> Result<ScaleStability> {
    let op = KimuraOperator1D::interval(b, b)?;
    let disc = assemble(&op, &GridSpec::chart(elements))?;
    harnack_scale_stability(&disc, op.geometry(), center, radii, family, factor)
}

pub fn harnack(p: &HarnackParams, ctx: &Context) -> Result<Outcome> {
    let family = DataFamily::Random {
        seed: ctx.seed,
        count: p.count,
        smoothing: p.smoothing,
    };
    let stab = scale_stability(p.b, p.elements, p.center, &p.radii, &family, p.factor)?;
    let r_mid = p.radii[p.radii.len() / 2];
    let holder = step_holder(p.b, p.elements, p.center, r_mid)?;
    let blowup = rough_blowup(p.b, p.elements, p.gamma)?;
    let pass = stab.pass && stab.per_radius.iter().all(|(_, m)| *m >= 1.0) && blowup.pass;
    let mut table = Table::new("harnack", &["r", "max_ratio"]);
    for &(r, m) in &stab.per_radius {
        table.push(vec![r, m]);
    }
    let mut out = Outcome::new(
        json!({ "data_seed": ctx.seed, "scale": stab, "holder": { "r": r_mid, "fit": holder }, "blowup": blowup }),
        Some(pass),
    );
    out.tables.push(table);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularRow {
    pub elements: usize,
    pub eta: f64,
    pub constant: f64,
}

/// C_η for q = |log x|^k on uniform grids of the interval.
pub fn singular_sweep(b0: f64, b1: f64, k: u32, elements: &[usize], etas: &[f64]) -> Result<Vec<SingularRow>> {
    let op = KimuraOperator1D::interval(b0, b1)?;
    let q = move |x: f64| x.ln().abs().powi(k as i32);
    let mut rows = Vec::new();
    for &n in elements {
        let disc = assemble(&op, &GridSpec::uniform(n))?;
        for &eta in etas {
            rows.push(SingularRow {
                elements: n,
                eta,
                constant: singular_inequality_constant(&disc, &q, eta)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularSummary {
    pub finite: bool,
    pub nonincreasing_in_eta: bool,
    /// Relative change between the two finest grids, per positive η.
    pub refinement_change: Vec<(f64, f64)>,
    /// Successive increments of C₀ under refinement.
    pub eta_zero_growth: Vec<f64>,
}

pub fn summarize_singular(rows: &[SingularRow], elements: &[usize], etas: &[f64]) -> SingularSummary {
    let at = |n: usize, eta: f64| {
        rows.iter()
            .find(|r| r.elements == n && r.eta == eta)
            .map_or(f64::NAN, |r| r.constant)
    };
    let mut sorted = etas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nonincreasing = elements.iter().all(|&n| {
        sorted
            .windows(2)
            .all(|w| at(n, w[1]) <= at(n, w[0]) + 1e-9 * at(n, w[0]).abs().max(1.0))
    });
    let refinement_change = match elements {
        [.., a, b] => sorted
            .iter()
            .filter(|e| **e > 0.0)
            .map(|&e| (e, relative_change(at(*a, e), at(*b, e))))
            .collect(),
        _ => Vec::new(),
    };
    let eta_zero_growth = if sorted.contains(&0.0) {
        elements.windows(2).map(|w| at(w[1], 0.0) - at(w[0], 0.0)).collect()
    } else {
        Vec::new()
    };
    SingularSummary {
        finite: rows.iter().all(|r| r.constant.is_finite()),
        nonincreasing_in_eta: nonincreasing,
        refinement_change,
        eta_zero_growth,
    }
}

pub fn singular(p: &SingularParams, _: &Context) -> Result<Outcome> {
    if p.elements.is_empty() || p.etas.is_empty() {
        return Err(bad("need at least one grid and one eta"));
    }
    let rows = singular_sweep(p.b0, p.b1, p.log_power, &p.elements, &p.etas)?;
    let s = summarize_singular(&rows, &p.elements, &p.etas);
    // η = 0 is expected to diverge and is only reported
    let pass = s.nonincreasing_in_eta
        && rows.iter().filter(|r| r.eta > 0.0).all(|r| r.constant.is_finite())
        && s.refinement_change.iter().all(|(_, c)| *c < 0.1);
    let mut table = Table::new("singular", &["elements", "eta", "constant"]);
    for r in &rows {
        table.push(vec![r.elements as f64, r.eta, r.constant]);
    }
    let mut out = Outcome::new(json!({ "rows": rows, "summary": s }), Some(pass));
    out.tables.push(table);
    Ok(out)
}

pub fn weyl_report(b0: f64, b1: f64, elements: usize) -> Result<WeylReport> {
    let op = KimuraOperator1D::interval(b0, b1)?;
    let disc = assemble(&op, &GridSpec::graded(elements))?;
    let n_dof = disc.dim();
    let lambdas = eigenvalues(&disc, n_dof / 20 + 1)?;
    weyl_fit(&lambdas, n_dof, 1, op.geometry().symbol_length(), Some(disc.total_mass()))
}

pub fn weyl_passes(r: &WeylReport, tolerance: f64) -> bool {
    r.relative_error <= tolerance && (r.ratio_at_top - 1.0).abs() <= tolerance
}

pub fn weyl(p: &WeylParams, _: &Context) -> Result<Outcome> {
    let r = weyl_report(p.b0, p.b1, p.elements)?;
    let mut table = Table::new("weyl_counting", &["lambda", "count", "ratio"]);
    for &(l, n) in &r.counting {
        table.push(vec![l, n as f64, n as f64 / l.sqrt()]);
    }
    let pass = weyl_passes(&r, p.tolerance);
    let mut out = Outcome::new(to_json(&r), Some(pass));
    out.tables.push(table);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryRun {
    pub l1: f64,
    pub mc_error: f64,
    pub projection_rate: f64,
    pub reference_masses: Vec<f64>,
    pub empirical: EmpiricalDensity,
    pub manifest: kimura_core::wright_fisher_mc::RunManifest,
}

/// Terminal law of interval paths against bin masses of the normalized
/// stationary density.
pub fn stationary_run(sde: &SimplexSDE, bins: &Bins) -> Result<StationaryRun> {
    let (b0, b1) = match &sde.drift {
        Drift::MutationWeights(w) if sde.n == 1 => (w[0], w[1]),
        _ => return Err(bad("stationary comparison needs interval mutation weights")),
    };
    let density = stationary_density(&KimuraOperator1D::interval(b0, b1)?, quad())?;
    let reference = bins
        .edges
        .windows(2)
        .map(|e| Ok(density.c0 * density.geometry().mass_between(e[0], e[1], quad())?))
        .collect::<Result<Vec<f64>>>()?;
    let out = simulate(sde)?;
    let empirical = empirical_stationary(&marginal(&out.terminal, 0), bins)?;
    let l1 = empirical.masses.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum();
    Ok(StationaryRun {
        l1,
        mc_error: empirical.mc_error(),
        projection_rate: out.projection_rate(),
        reference_masses: reference,
        empirical,
        manifest: out.manifest,
    })
}

pub fn stationary(p: &StationaryParams, ctx: &Context) -> Result<Outcome> {
    if !(p.dt > 0.0 && p.time >= p.dt) || p.bins == 0 {
        return Err(bad("need dt > 0, time >= dt and at least one bin"));
    }
    let steps = (p.time / p.dt).round() as usize;
    let sde = SimplexSDE::interval(p.b0, p.b1, p.start, p.dt, steps, p.paths, ctx.seed);
    let bins = if p.widen == 1.0 { Bins::uniform(p.bins) } else { Bins::edge_widened(p.bins, p.widen) };
    let run = stationary_run(&sde, &bins)?;
    let mut table = Table::new("stationary", &["lo", "hi", "empirical", "reference"]);
    for (i, e) in bins.edges.windows(2).enumerate() {
        table.push(vec![e[0], e[1], run.empirical.masses[i], run.reference_masses[i]]);
    }
    let pass = run.l1 < p.tolerance;
    let mut out = Outcome::new(to_json(&run), Some(pass));
    out.tables.push(table);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesCheck {
    pub order: u32,
    /// Lowest order left in Lᵗ applied to the solved series (None: all cancel).
    pub residual_order: Option<u32>,
    /// Every correction vanishes when b is constant.
    pub constant_weight_trivial: bool,
    /// Lowest residual order when only the j ≤ 1 block is kept.
    pub first_block_residual_order: Option<u32>,
    pub reference: Vec<CoefficientCheck>,
}

pub fn series_check(order: u32, sample: &[f64]) -> Result<(SeriesCheck, kimura_core::stationary_series::LogSeries)> {
    let sol = solve_expansion(order)?;
    let residual_order = apply_adjoint(&sol, order)?.lowest_order();
    let constant: Vec<f64> = std::iter::once(3.0).chain(std::iter::repeat_n(0.0, 2 * order as usize + 2)).collect();
    let constant_weight_trivial = sol.terms().all(|(&(j, _), c)| j == 0 || c.eval(&constant) == 0.0);
    let order_for_block = order.max(2);
    let first = solve_expansion(1)?;
    let mut padded = kimura_core::stationary_series::LogSeries::zero(order_for_block);
    for (&(j, k), c) in first.terms() {
        padded.set(j, k, c.clone());
    }
    let first_block_residual_order = apply_adjoint(&padded, order_for_block)?.lowest_order();
    Ok((
        SeriesCheck {
            order,
            residual_order,
            constant_weight_trivial,
            first_block_residual_order,
            reference: compare_first_order(&sol, sample),
        },
        sol,
    ))
}

pub fn series(p: &SeriesParams, _: &Context) -> Result<Outcome> {
    if p.order == 0 {
        return Err(bad("order must be at least 1"));
    }
    if p.sample.first().is_none_or(|b| *b <= 0.0) {
        return Err(bad("the first sample value is b and must be positive"));
    }
    let (check, sol) = series_check(p.order, &p.sample)?;
    let rows = coefficient_table(&sol, Some(&p.sample));
    let pass = check.residual_order.is_none() && check.constant_weight_trivial;
    let agrees = check.reference.iter().all(|c| c.identical);
    let mut out = Outcome::new(
        json!({ "check": check, "reference_agrees": agrees, "coefficients": rows }),
        Some(pass),
    );
    out.files.push(("expansion.txt".to_string(), format_table(&rows)));
    Ok(out)
}

pub fn simulate_command(p: &SimulateParams, ctx: &Context) -> Result<Outcome> {
    if p.weights.len() != p.n + 1 {
        return Err(bad(format!("expected {} weights, got {}", p.n + 1, p.weights.len())));
    }
    let sde = SimplexSDE {
        n: p.n,
        drift: Drift::MutationWeights(p.weights.clone()),
        dt: p.dt,
        steps: p.steps,
        paths: p.paths,
        seed: ctx.seed,
        start: p.start.clone(),
        record: None,
        thin: (p.thin_paths > 0).then_some(Thinning {
            paths: p.thin_paths,
            every: p.thin_every,
        }),
    };
    let out = simulate(&sde)?;
    let bins = Bins::uniform(p.bins);
    let mut hist = Table::new("marginals", &["coordinate", "lo", "hi", "mass", "density"]);
    let mut marginals = Vec::new();
    for i in 0..p.n {
        let e = empirical_stationary(&marginal(&out.terminal, i), &bins)?;
        for (k, (edge, dens)) in bins.edges.windows(2).zip(e.densities()).enumerate() {
            hist.push(vec![i as f64, edge[0], edge[1], e.masses[k], dens]);
        }
        marginals.push(e);
    }
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=p.n).map(|i| format!("x{i}")));
    let mut traj = Table {
        name: "trajectories".to_string(),
        header,
        rows: Vec::new(),
    };
    for (k, path) in out.trajectories.iter().enumerate() {
        for (t, x) in path {
            let mut row = vec![k as f64, *t];
            row.extend(x);
            traj.push(row);
        }
    }
    let manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes") + "\n";
    let mut o = Outcome::new(
        json!({
            "manifest": out.manifest,
            "projection_rate": out.projection_rate(),
            "steps_taken": out.steps_taken,
            "marginals": marginals,
        }),
        None,
    );
    o.tables.push(hist);
    if !traj.rows.is_empty() {
        o.tables.push(traj);
    }
    o.files.push(("manifest.json".to_string(), manifest));
    Ok(o)
}

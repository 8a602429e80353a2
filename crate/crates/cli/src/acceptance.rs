//! The primary acceptance suite: ten criteria, each with its own oracles
//! and tolerances, run in order.

use std::f64::consts::PI;
use std::sync::Arc;

use kimura_core::bessel_poincare::{poincare_1d, poincare_product, zeta1, ZETA1_TOL};
use kimura_core::corner_geometry::{
    Ball, DoublingSweep, MetricKind, Point, WeightFn, WeightSpec, WeightedMeasure,
};
use kimura_core::harnack_probe::DataFamily;
use kimura_core::heat_semigroup::log_times;
use kimura_core::kimura_discretization::{stationary_density, KimuraOperator1D};
use kimura_core::quadrature::QuadSpec;
use kimura_core::wright_fisher_mc::{Bins, SimplexSDE};
use kimura_core::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{BaselineCheck, Baselines};
use crate::commands::{
    heat_level, heat_level_passes, heat_refinement, poincare_comparison, rough_blowup, scale_stability,
    series_check, singular_sweep, spectrum_check, stationary_run, step_holder, summarize_singular, weyl_passes,
    weyl_report,
};

/// Seeds declared for the Monte Carlo and random-data criteria.
pub const STATIONARY_SEEDS: [u64; 2] = [20_251, 20_252];
pub const HARNACK_SEED: u64 = 1;

pub const CRITERIA: [(u32, &str); 10] = [
    (1, "Bessel anchors"),
    (2, "Poincare cross-validation"),
    (3, "Exact spectra"),
    (4, "Doubling"),
    (5, "Stationary law"),
    (6, "Heat-kernel properties"),
    (7, "Weyl asymptotics"),
    (8, "Harnack and Hoelder"),
    (9, "Log-series coefficients"),
    (10, "Singular-inequality constants"),
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub metrics: Value,
    pub baselines: Vec<BaselineCheck>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}  {}: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.summary
        )
    }
}

struct Verdict {
    pass: bool,
    summary: String,
    metrics: Value,
    baselines: Vec<BaselineCheck>,
}

impl Verdict {
    fn new(pass: bool, summary: String, metrics: Value) -> Self {
        Self {
            pass,
            summary,
            metrics,
            baselines: Vec::new(),
        }
    }
}

/// Runs the selected criteria (all when `only` is empty), handing each
/// result to `report` as soon as it is available.
pub fn run_suite(only: &[u32], baselines: &Baselines, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for &(id, name) in &CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let r = run_criterion(id, name, baselines);
        report(&r);
        out.push(r);
    }
    out
}

fn run_criterion(id: u32, name: &'static str, baselines: &Baselines) -> CriterionResult {
    let verdict = match id {
        1 => bessel_anchors(),
        2 => poincare_cross_validation(),
        3 => exact_spectra(),
        4 => doubling(),
        5 => stationary(),
        6 => heat(baselines),
        7 => weyl(),
        8 => harnack(baselines),
        9 => log_series(),
        10 => singular(),
        _ => unreachable!("criterion ids are fixed"),
    };
    match verdict {
        Ok(mut v) => {
            let regressed: Vec<&str> = v
                .baselines
                .iter()
                .filter(|c| c.pass == Some(false))
                .map(|c| c.key.as_str())
                .collect();
            if !regressed.is_empty() {
                v.pass = false;
                v.summary = format!("{}; baseline drift in {}", v.summary, regressed.join(", "));
            }
            CriterionResult {
                id,
                name,
                pass: v.pass,
                summary: v.summary,
                metrics: v.metrics,
                baselines: v.baselines,
            }
        }
        Err(e) => CriterionResult {
            id,
            name,
            pass: false,
            summary: format!("error: {e}"),
            metrics: Value::Null,
            baselines: Vec::new(),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// J₁ by its power series; accurate for the first root.
fn bessel_j1(z: f64) -> f64 {
    let h = 0.5 * z;
    let mut term = h;
    let mut sum = term;
    for m in 1..60 {
        term *= -h * h / (m as f64 * (m as f64 + 1.0));
        sum += term;
    }
    sum
}

fn bessel_anchors() -> Result<Verdict> {
    let half = rel(zeta1(0.5, ZETA1_TOL)?, PI * PI / 4.0);
    let tan_root = bisect(|z| z.tan() - z, 4.0, 4.6);
    let three_halves = rel(zeta1(1.5, ZETA1_TOL)?, tan_root * tan_root / 4.0);
    let j11 = bisect(bessel_j1, 3.0, 4.5);
    let one = rel(zeta1(1.0, ZETA1_TOL)?, j11 * j11 / 4.0);
    let mut below = Vec::new();
    let mut min_gap = f64::INFINITY;
    for k in 1..=40 {
        let b = 0.25 * k as f64;
        let gap = zeta1(b, ZETA1_TOL)? - (b + 1.0);
        min_gap = min_gap.min(gap);
        if gap <= 0.0 {
            below.push(b);
        }
    }
    let pass = half <= 1e-10 && three_halves <= 1e-8 && one <= 1e-8 && below.is_empty();
    Ok(Verdict::new(
        pass,
        format!(
            "rel errors b=0.5 {half:.1e}, b=1.5 {three_halves:.1e}, b=1 {one:.1e}; min zeta1-(b+1) on 40 weights {min_gap:.3}"
        ),
        json!({ "b_half": half, "b_three_halves": three_halves, "b_one": one, "min_gap": min_gap, "violations": below }),
    ))
}

fn poincare_cross_validation() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    let mut cases = Vec::new();
    for &b in &[0.5, 1.0, 2.0] {
        for &x in &[0.0, 0.5, 0.9] {
            let c = poincare_comparison(b, x, 400)?;
            worst = worst.max(c.rel_diff.abs());
            cases.push(c);
        }
    }
    let mut product_exact = true;
    for &b in &[0.5, 2.0] {
        for &w in &[0.0, 0.3, 1.5, 4.0] {
            for &r in &[0.5, 1.0, 2.0] {
                let v = poincare_product(&[b], r, &Point::new(vec![w], vec![0.0]))?;
                let w_factor = poincare_1d(b, b, b, w / r)?.lambda_lower / (r * r);
                let y_factor = PI * PI / (4.0 * r * r);
                product_exact &= v == w_factor.min(y_factor);
            }
        }
    }
    Ok(Verdict::new(
        worst <= 5e-3 && product_exact,
        format!("worst relative eigenvalue deviation {worst:.1e} on 9 balls; product rule exact: {product_exact}"),
        json!({ "cases": cases, "worst": worst, "product_exact": product_exact }),
    ))
}

fn exact_spectra() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    let mut cases = Vec::new();
    for (b0, b1) in [(1.0, 1.0), (0.5, 0.5), (2.0, 3.0)] {
        let checks = spectrum_check(b0, b1, 2000, 8)?;
        for c in &checks {
            worst = worst.max(c.rel_error);
            if let Some(o) = c.order {
                min_order = min_order.min(o);
            }
        }
        cases.push(json!({ "b0": b0, "b1": b1, "modes": checks }));
    }
    Ok(Verdict::new(
        worst <= 5e-3 && min_order >= 1.0,
        format!("worst relative error {worst:.1e} over 8 modes x 3 cases; min observed order {min_order:.2}"),
        json!({ "cases": cases, "worst": worst, "min_order": min_order }),
    ))
}

fn doubling() -> Result<Verdict> {
    let quad = QuadSpec::default().with_rel_tol(1e-11);
    // μ([lo, hi]) = (hi^{2b} − lo^{2b})/2b for the weight w^{2b−1}
    let mut worst_mass: f64 = 0.0;
    for &b in &[0.3, 0.5, 1.0, 2.5] {
        let mu = WeightedMeasure::new(WeightSpec::constant(vec![b])?, 0);
        for &w in &[0.0f64, 0.2, 1.0, 3.0] {
            for &r in &[0.05f64, 0.5, 2.0] {
                let lo = (w - r).max(0.0);
                let exact = ((w + r).powf(2.0 * b) - lo.powf(2.0 * b)) / (2.0 * b);
                let q = mu.ball_mass(&Ball::new(Point::new(vec![w], vec![]), r, MetricKind::SupW), quad)?;
                worst_mass = worst_mass.max(rel(q, exact));
            }
        }
    }
    let mut constant = Vec::new();
    let mut all_equal = true;
    for (b, m) in [(vec![0.5], 1usize), (vec![1.0, 2.0], 0), (vec![0.75], 2)] {
        let expected = 2.0 * b.iter().sum::<f64>() + m as f64;
        let n = b.len();
        let mu = WeightedMeasure::new(WeightSpec::constant(b.clone())?, m);
        let est = mu.estimate_doubling_dimension(&DoublingSweep::log_grid(n, m, 2.0, 3, 0.05, 1.0, 3), quad)?;
        all_equal &= rel(est.dimension, expected) <= 1e-9;
        constant.push(json!({ "weights": b, "m": m, "expected": expected, "estimate": est.dimension }));
    }
    let f: WeightFn = Arc::new(|_, p: &Point| 1.0 + 0.5 * (p.w[0] * p.w[0]).min(1.0));
    let mu = WeightedMeasure::new(WeightSpec::variable(1, f, 1.0, 1.5, 0.0, 1.0)?, 1);
    let variable = mu
        .estimate_doubling_dimension(&DoublingSweep::log_grid(1, 1, 2.0, 3, 0.05, 1.0, 3), quad)?
        .dimension;
    // log₂ of 2^{2nB+m+2} with n = 1, B = 1.5, m = 1
    let cap = 2.0 * 1.5 + 1.0 + 2.0;
    let pass = worst_mass <= 1e-8 && all_equal && variable.is_finite() && variable < cap;
    Ok(Verdict::new(
        pass,
        format!(
            "ball masses within {worst_mass:.1e}; constant-weight sweeps hit 2*sum(b)+m: {all_equal}; variable D = {variable:.3} < {cap}"
        ),
        json!({ "mass_error": worst_mass, "constant": constant, "variable_dimension": variable, "cap": cap }),
    ))
}

/// Beta distribution functions in closed form for the weights checked.
fn beta_cdf(b0: f64, b1: f64, x: f64) -> f64 {
    match (b0, b1) {
        (1.0, 1.0) => x,
        (0.5, 0.5) => 2.0 / PI * x.sqrt().asin(),
        (2.0, 3.0) => 12.0 * (x * x / 2.0 - 2.0 * x.powi(3) / 3.0 + x.powi(4) / 4.0),
        (3.0, 3.0) => x.powi(3) * (10.0 - 15.0 * x + 6.0 * x * x),
        _ => unreachable!("no closed form tabulated"),
    }
}

fn stationary() -> Result<Verdict> {
    let quad = QuadSpec::default();
    let mut density_l1: f64 = 0.0;
    for (b0, b1) in [(1.0, 1.0), (0.5, 0.5), (2.0, 3.0), (3.0, 3.0)] {
        let s = stationary_density(&KimuraOperator1D::interval(b0, b1)?, quad)?;
        let mut l1 = 0.0;
        for k in 0..20 {
            let (a, c) = (k as f64 / 20.0, (k + 1) as f64 / 20.0);
            let mass = s.c0 * s.geometry().mass_between(a, c, quad)?;
            l1 += (mass - (beta_cdf(b0, b1, c) - beta_cdf(b0, b1, a))).abs();
        }
        density_l1 = density_l1.max(l1);
    }
    let smooth = stationary_run(
        &SimplexSDE::interval(3.0, 3.0, 0.5, 1e-3, 500, 100_000, STATIONARY_SEEDS[0]),
        &Bins::uniform(50),
    )?;
    let arcsine = stationary_run(
        &SimplexSDE::interval(0.5, 0.5, 0.5, 1e-3, 2000, 100_000, STATIONARY_SEEDS[1]),
        &Bins::edge_widened(40, 1.1),
    )?;
    let pass = density_l1 < 1e-8 && smooth.l1 < 5e-2 && arcsine.l1 < 7e-2;
    Ok(Verdict::new(
        pass,
        format!(
            "density L1 {density_l1:.1e}; Monte Carlo L1 {:.4} for (3,3), {:.4} for (1/2,1/2) at 1e5 paths, seeds {:?}",
            smooth.l1, arcsine.l1, STATIONARY_SEEDS
        ),
        json!({
            "density_l1": density_l1,
            "b3": { "l1": smooth.l1, "mc_error": smooth.mc_error, "manifest": smooth.manifest },
            "b_half": { "l1": arcsine.l1, "mc_error": arcsine.mc_error, "manifest": arcsine.manifest },
        }),
    ))
}

fn key(prefix: &str, b: f64) -> String {
    format!("{prefix}.b{b}")
}

fn heat(baselines: &Baselines) -> Result<Verdict> {
    let mut pass = true;
    let mut metrics = Vec::new();
    let mut checks = Vec::new();
    let mut worst_change: f64 = 0.0;
    for (b, t_max) in [(1.0, 1.0), (0.5, 0.5)] {
        // refinement doubles elements, sample points and times together
        let (coarse, _) = heat_level(b, b, 300, 20, &log_times(1e-3, t_max, 12), 2.0)?;
        let (fine, _) = heat_level(b, b, 600, 40, &log_times(1e-3, t_max, 24), 2.0)?;
        let change = heat_refinement(&coarse, &fine);
        worst_change = worst_change.max(change.upper_c0).max(change.lower_c0);
        pass &= heat_level_passes(&coarse) && heat_level_passes(&fine);
        pass &= change.upper_c0 < 0.1 && change.lower_c0 < 0.1;
        let k = key("heat", b);
        checks.push(baselines.check(&format!("{k}.upper_c0"), fine.upper.params.c0));
        checks.push(baselines.check(&format!("{k}.lower_c0"), fine.lower.params.c0));
        checks.push(baselines.check(&format!("{k}.diagonal_sup"), fine.diagonal.sup));
        checks.push(baselines.check(&format!("{k}.diagonal_inf"), fine.diagonal.inf));
        metrics.push(json!({ "b": b, "levels": [coarse, fine], "refinement_change": change }));
    }
    let defect = metrics
        .iter()
        .flat_map(|m| m["levels"].as_array().unwrap().iter())
        .flat_map(|l| l["defects"].as_array().unwrap().iter())
        .map(|d| d[1].as_f64().unwrap().max(d[2].as_f64().unwrap()))
        .fold(0.0, f64::max);
    let mut v = Verdict::new(
        pass,
        format!(
            "conservation/semigroup defects <= {defect:.1e}, kernels positive, envelope constants change <= {:.1}% under refinement",
            100.0 * worst_change
        ),
        json!({ "cases": metrics, "max_defect": defect }),
    );
    v.baselines = checks;
    Ok(v)
}

fn weyl() -> Result<Verdict> {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut cases = Vec::new();
    let mut implied = Vec::new();
    for (b0, b1) in [(1.0, 1.0), (0.5, 0.5), (2.0, 3.0)] {
        let r = weyl_report(b0, b1, 1200)?;
        pass &= weyl_passes(&r, 0.05);
        worst = worst.max(r.relative_error).max((r.ratio_at_top - 1.0).abs());
        implied.push(format!("{:.3}", r.implied_dimensional_constant.unwrap_or(f64::NAN)));
        cases.push(json!({ "b0": b0, "b1": b1, "report": r }));
    }
    // a constant times the total weighted mass cannot match all three cases
    Ok(Verdict::new(
        pass,
        format!(
            "N(lambda)/sqrt(lambda) within {:.2}% of the symbol-metric constant 1 for 3 cases; a mass-normalized constant would have to be {}",
            100.0 * worst,
            implied.join(", ")
        ),
        json!({ "cases": cases, "worst": worst }),
    ))
}

fn harnack(baselines: &Baselines) -> Result<Verdict> {
    let radii = [0.05, 0.1, 0.2];
    let mut pass = true;
    let mut checks = Vec::new();
    let mut spreads = Vec::new();
    let mut stability = Vec::new();
    for &b in &[0.5, 3.0] {
        let s = scale_stability(b, 300, 0.0, &radii, &DataFamily::random(HARNACK_SEED, 20), 3.0)?;
        pass &= s.pass && s.per_radius.iter().all(|(_, m)| *m >= 1.0);
        for &(r, m) in &s.per_radius {
            checks.push(baselines.check(&format!("{}.r{r}", key("harnack", b)), m));
        }
        spreads.push(s.spread);
        stability.push(json!({ "b": b, "result": s }));
    }
    let coarse = step_holder(0.5, 300, 0.0, 0.1)?;
    let fine = step_holder(0.5, 600, 0.0, 0.1)?;
    let gamma_shift = (coarse.gamma - fine.gamma).abs();
    pass &= gamma_shift <= 0.05;
    checks.push(baselines.check("holder.b0.5.gamma", fine.gamma));
    let mut rates = Vec::new();
    for &b in &[0.5, 3.0] {
        let f = rough_blowup(b, 300, 1.0)?;
        pass &= f.rate <= 0.6;
        rates.push(f.rate);
    }
    let mut v = Verdict::new(
        pass,
        format!(
            "family maxima >= 1, spreads {:.3} (b=1/2) and {:.3} (b=3) < 3; gamma {:.3} moves {gamma_shift:.3} under refinement; blow-up rates {:.3}, {:.3} <= 0.6",
            spreads[0], spreads[1], fine.gamma, rates[0], rates[1]
        ),
        json!({
            "data_seed": HARNACK_SEED,
            "scale": stability,
            "holder": { "coarse": coarse, "fine": fine, "shift": gamma_shift },
            "blowup_rates": rates,
        }),
    );
    v.baselines = checks;
    Ok(v)
}

fn log_series() -> Result<Verdict> {
    let (check, _) = series_check(2, &[2.0, 1.0, 0.0])?;
    let mismatched: Vec<String> = check
        .reference
        .iter()
        .filter(|c| !c.identical)
        .map(|c| format!("phi_1{} solved {} vs reference {} at b=2+y", c.k, c.solved_value, c.reference_value))
        .collect();
    let structural = check.residual_order.is_none()
        && check.constant_weight_trivial
        && check.first_block_residual_order == Some(2);
    let summary = if mismatched.is_empty() {
        "all three first-order coefficients identical to the reference closed forms".to_string()
    } else {
        format!("reference mismatch: {}", mismatched.join("; "))
    };
    Ok(Verdict::new(
        mismatched.is_empty() && structural,
        format!(
            "{summary}; solver residual vanishes: {}, constant b trivial: {}, first block leaves order {:?}",
            check.residual_order.is_none(),
            check.constant_weight_trivial,
            check.first_block_residual_order
        ),
        json!({ "check": check, "structural": structural }),
    ))
}

fn singular() -> Result<Verdict> {
    let elements = [100, 200, 400, 800];
    let etas = [0.0, 0.1, 1.0];
    let rows = singular_sweep(1.0, 1.0, 1, &elements, &etas)?;
    let s = summarize_singular(&rows, &elements, &etas);
    let finite = rows.iter().filter(|r| r.eta > 0.0).all(|r| r.constant.is_finite());
    let stable = s.refinement_change.iter().all(|(_, c)| *c < 0.1);
    let diverges = s.eta_zero_growth.iter().all(|g| *g > 0.3);
    let worst = s.refinement_change.iter().map(|(_, c)| *c).fold(0.0, f64::max);
    Ok(Verdict::new(
        finite && s.nonincreasing_in_eta && stable && diverges,
        format!(
            "C_eta finite and nonincreasing in eta: {}; eta>0 change {:.1}% at the finest refinement; eta=0 grows by {:?}",
            finite && s.nonincreasing_in_eta,
            100.0 * worst,
            s.eta_zero_growth.iter().map(|g| (g * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
        json!({ "rows": rows, "summary": s }),
    ))
}

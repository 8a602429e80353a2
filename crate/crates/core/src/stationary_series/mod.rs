//! Formal log-series Σ φ_{jk}(y) xʲ logᵏx correcting the stationary density
//! x^{b(y)−1} of L = x∂²ₓ + ∂²_y + b(y)∂ₓ when the weight varies along the
//! boundary.

pub mod ratfn;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{KimuraError, Result};
pub use ratfn::{Poly, RatFn};

/// Σ φ_{jk} x^{j + x_shift} logᵏx · x^{weight_power·b(y)}, truncated at
/// order index j ≤ max_order. Every term satisfies k ≤ 2j + log_slack; a
/// plain correction factor has zero shift, weight power and slack.
#[derive(Debug, Clone)]
pub struct LogSeries {
    terms: BTreeMap<(u32, u32), RatFn>,
    max_order: u32,
    x_shift: i32,
    weight_power: i32,
    log_slack: i32,
}

impl PartialEq for LogSeries {
    fn eq(&self, other: &Self) -> bool {
        if self.x_shift != other.x_shift || self.weight_power != other.weight_power {
            return false;
        }
        let keys: std::collections::BTreeSet<_> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter().all(|key| self.coefficient(key.0, key.1) == other.coefficient(key.0, key.1))
    }
}

impl LogSeries {
    pub fn zero(max_order: u32) -> Self {
        Self {
            terms: BTreeMap::new(),
            max_order,
            x_shift: 0,
            weight_power: 0,
            log_slack: 0,
        }
    }

    pub fn one(max_order: u32) -> Self {
        let mut s = Self::zero(max_order);
        s.set(0, 0, RatFn::one());
        s
    }

    /// x^{m·b(y)}.
    pub fn weight(m: i32, max_order: u32) -> Self {
        let mut s = Self::one(max_order);
        s.weight_power = m;
        s
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn x_shift(&self) -> i32 {
        self.x_shift
    }

    pub fn weight_power(&self) -> i32 {
        self.weight_power
    }

    pub fn log_slack(&self) -> i32 {
        self.log_slack
    }

    pub fn coefficient(&self, j: u32, k: u32) -> RatFn {
        self.terms.get(&(j, k)).cloned().unwrap_or_else(RatFn::zero)
    }

    /// Nonzero terms keyed by (j, k).
    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &RatFn)> {
        self.terms.iter()
    }

    /// Sets φ_{jk}; terms beyond the truncation order are dropped.
    pub fn set(&mut self, j: u32, k: u32, c: RatFn) {
        if j > self.max_order || c.is_zero() {
            self.terms.remove(&(j, k));
        } else {
            self.terms.insert((j, k), c);
        }
    }

    fn accumulate(&mut self, j: u32, k: u32, c: RatFn) {
        if j > self.max_order || c.is_zero() {
            return;
        }
        let sum = self.coefficient(j, k) + c;
        self.set(j, k, sum);
    }

    /// Smallest order index carrying a nonzero term.
    pub fn lowest_order(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.0).min()
    }

    /// Terms of one order index as (k, φ_{jk}).
    pub fn order(&self, j: u32) -> Vec<(u32, RatFn)> {
        self.terms
            .range((j, 0)..=(j, u32::MAX))
            .map(|((_, k), c)| (*k, c.clone()))
            .collect()
    }

    pub fn check_shape(&self) -> Result<()> {
        for &(j, k) in self.terms.keys() {
            if k as i64 > 2 * j as i64 + self.log_slack as i64 {
                return Err(KimuraError::Consistency(format!(
                    "term x^{j} log^{k} breaks the triangular shape (slack {})",
                    self.log_slack
                )));
            }
        }
        Ok(())
    }

    /// Multiplies by x^m.
    pub fn times_x(mut self, m: i32) -> Self {
        self.x_shift += m;
        self
    }

    /// Re-expresses the series with a smaller shift; order indices grow by
    /// the difference.
    fn reindexed(&self, shift: i32) -> Self {
        assert!(shift <= self.x_shift, "reindex only lowers the shift");
        let d = (self.x_shift - shift) as u32;
        let mut out = Self {
            terms: BTreeMap::new(),
            max_order: self.max_order + d,
            x_shift: shift,
            weight_power: self.weight_power,
            log_slack: self.log_slack - 2 * d as i32,
        };
        for (&(j, k), c) in &self.terms {
            out.terms.insert((j + d, k), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &RatFn) -> Self {
        let mut out = Self {
            terms: BTreeMap::new(),
            ..self.clone()
        };
        for (&(j, k), v) in &self.terms {
            out.set(j, k, v.clone() * c.clone());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.weight_power != other.weight_power {
            return Err(KimuraError::Consistency("adding series with different weight prefactors".into()));
        }
        let shift = self.x_shift.min(other.x_shift);
        let (a, b) = (self.reindexed(shift), other.reindexed(shift));
        let mut out = Self {
            terms: a.terms.clone(),
            max_order: a.max_order.min(b.max_order),
            x_shift: shift,
            weight_power: self.weight_power,
            log_slack: a.log_slack.max(b.log_slack),
        };
        out.terms.retain(|key, _| key.0 <= out.max_order);
        for (&(j, k), c) in &b.terms {
            out.accumulate(j, k, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&RatFn::integer(-1)))
    }

    pub fn truncate(mut self, max_order: u32) -> Self {
        self.max_order = self.max_order.min(max_order);
        let m = self.max_order;
        self.terms.retain(|key, _| key.0 <= m);
        self
    }
}

fn checked(s: LogSeries) -> Result<LogSeries> {
    s.check_shape()?;
    Ok(s)
}

/// Product truncated at order index `max_order`.
pub fn series_mul(a: &LogSeries, b: &LogSeries, max_order: u32) -> Result<LogSeries> {
    let mut out = LogSeries {
        terms: BTreeMap::new(),
        max_order: max_order.min(a.max_order).min(b.max_order),
        x_shift: a.x_shift + b.x_shift,
        weight_power: a.weight_power + b.weight_power,
        log_slack: a.log_slack + b.log_slack,
    };
    for (&(j1, k1), c1) in &a.terms {
        for (&(j2, k2), c2) in &b.terms {
            out.accumulate(j1 + j2, k1 + k2, c1.clone() * c2.clone());
        }
    }
    checked(out)
}

/// ∂ₓ: x^{mb+p} logᵏx ↦ (mb + p) x^{mb+p−1} logᵏx + k x^{mb+p−1} logᵏ⁻¹x.
pub fn series_diff_x(a: &LogSeries) -> Result<LogSeries> {
    let mut out = LogSeries {
        terms: BTreeMap::new(),
        x_shift: a.x_shift - 1,
        ..a.clone()
    };
    let weight = RatFn::symbol(0) * RatFn::integer(a.weight_power as i64);
    for (&(j, k), c) in &a.terms {
        let p = RatFn::integer(j as i64 + a.x_shift as i64);
        out.accumulate(j, k, c.clone() * (weight.clone() + p));
        if k > 0 {
            out.accumulate(j, k - 1, c.clone() * RatFn::integer(k as i64));
        }
    }
    checked(out)
}

/// ∂_y, differentiating coefficients and the prefactor x^{mb(y)}, which
/// raises the log power by one.
pub fn series_diff_y(a: &LogSeries) -> Result<LogSeries> {
    let mut out = LogSeries {
        terms: BTreeMap::new(),
        log_slack: a.log_slack + i32::from(a.weight_power != 0),
        ..a.clone()
    };
    let raise = RatFn::symbol(1) * RatFn::integer(a.weight_power as i64);
    for (&(j, k), c) in &a.terms {
        out.accumulate(j, k, c.derivative());
        if a.weight_power != 0 {
            out.accumulate(j, k + 1, c.clone() * raise.clone());
        }
    }
    checked(out)
}

/// Residual R with Lᵗ(F·x^{b−1}) = R·x^{b−1}, as a series whose order index
/// j carries the power x^{j−1}. Orders above `max_order` are not complete
/// and are dropped.
pub fn apply_adjoint(correction: &LogSeries, max_order: u32) -> Result<LogSeries> {
    if max_order < 1 {
        return Err(crate::error::domain("truncation order must be at least 1"));
    }
    if correction.x_shift != 0 || correction.weight_power != 0 || correction.log_slack > 0 {
        return Err(KimuraError::Consistency("correction factor must be a plain triangular series".into()));
    }
    correction.check_shape()?;
    let f = correction.clone().truncate(max_order);
    let nu = series_mul(&f, &LogSeries::weight(1, max_order), max_order)?.times_x(-1);
    // Lᵗν = ∂²ₓ(xν) + ∂²_y ν − ∂ₓ(bν)
    let second_x = series_diff_x(&series_diff_x(&nu.clone().times_x(1))?)?;
    let second_y = series_diff_y(&series_diff_y(&nu)?)?;
    let transport = series_diff_x(&nu.scale(&RatFn::symbol(0)))?;
    let total = second_x.add(&second_y)?.sub(&transport)?;
    // divide out x^{b−1}
    let mut residual = LogSeries {
        weight_power: 0,
        x_shift: total.x_shift + 1,
        ..total
    }
    .truncate(max_order);
    residual.log_slack = residual.log_slack.max(0);
    residual.check_shape()?;
    if !residual.order(0).is_empty() {
        return Err(KimuraError::Model(
            "the weight does not annihilate the leading order of the adjoint".into(),
        ));
    }
    Ok(residual)
}

/// Correction series with φ₀₀ = 1 whose residual vanishes through x^{J−1}.
pub fn solve_expansion(max_order: u32) -> Result<LogSeries> {
    solve_from(&LogSeries::one(max_order), max_order)
}

/// Re-solves every order j ≥ 1 from the anchor of `seed`.
pub fn solve_from(seed: &LogSeries, max_order: u32) -> Result<LogSeries> {
    if max_order < 1 {
        return Err(crate::error::domain("truncation order must be at least 1"));
    }
    if seed.order(0) != vec![(0, RatFn::one())] {
        return Err(KimuraError::Consistency("the expansion is anchored by φ₀₀ = 1".into()));
    }
    let mut f = LogSeries::one(max_order);
    for j in 1..=max_order {
        let forcing: BTreeMap<u32, RatFn> = apply_adjoint(&f, j)?.order(j).into_iter().collect();
        // A_j[xʲ logᵏx] = x^{j−1}[j(j−1+b) logᵏ + k(2j−1+b) logᵏ⁻¹ + k(k−1) logᵏ⁻²]
        let ji = j as i64;
        let mid = RatFn::integer(2 * ji - 1) + RatFn::symbol(0);
        let mut phi: BTreeMap<u32, RatFn> = BTreeMap::new();
        for k in (0..=2 * j).rev() {
            let mut rhs = -forcing.get(&k).cloned().unwrap_or_else(RatFn::zero);
            if let Some(p) = phi.get(&(k + 1)) {
                rhs = rhs - p.clone() * mid.clone() * RatFn::integer(k as i64 + 1);
            }
            if let Some(p) = phi.get(&(k + 2)) {
                rhs = rhs - p.clone() * RatFn::integer((k as i64 + 2) * (k as i64 + 1));
            }
            let value = rhs.over_shifted(ji - 1, 1) * RatFn::rational(1, ji);
            phi.insert(k, value);
        }
        for (k, c) in phi {
            f.set(j, k, c);
        }
    }
    let check = apply_adjoint(&f, max_order)?;
    if let Some(j) = check.lowest_order() {
        return Err(KimuraError::Consistency(format!(
            "order {j} residual survived the solve"
        )));
    }
    Ok(f)
}

/// Closed forms for the first-order block that solved coefficients are
/// compared against, keyed by log power.
pub fn reference_first_order() -> Vec<(u32, RatFn)> {
    let b1 = RatFn::symbol(1);
    let b2 = RatFn::symbol(2);
    let b1sq = b1.clone() * b1;
    vec![
        (2, (-b1sq.clone()).over_shifted(0, 1)),
        (
            1,
            b2.clone().over_shifted(0, 1) - (RatFn::integer(2) * b1sq.clone()).over_shifted(0, 2),
        ),
        (
            0,
            ((RatFn::one() + RatFn::symbol(0)) * b2).over_shifted(0, 2)
                - (RatFn::integer(2) * (RatFn::integer(2) + RatFn::symbol(0)) * b1sq).over_shifted(0, 3),
        ),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientCheck {
    pub j: u32,
    pub k: u32,
    pub solved: String,
    pub reference: String,
    pub identical: bool,
    pub solved_value: f64,
    pub reference_value: f64,
}

/// Compares the solved first-order block with the reference closed forms,
/// also evaluating both at `sample` = (b, b′, b″, …).
pub fn compare_first_order(solution: &LogSeries, sample: &[f64]) -> Vec<CoefficientCheck> {
    reference_first_order()
        .into_iter()
        .map(|(k, reference)| {
            let solved = solution.coefficient(1, k);
            CoefficientCheck {
                j: 1,
                k,
                identical: solved == reference,
                solved_value: solved.eval(sample),
                reference_value: reference.eval(sample),
                solved: solved.to_string(),
                reference: reference.to_string(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub j: u32,
    pub k: u32,
    pub expression: String,
    pub value: Option<f64>,
}

/// Coefficient table, optionally evaluated at (b, b′, b″, …).
pub fn coefficient_table(series: &LogSeries, sample: Option<&[f64]>) -> Vec<CoefficientRow> {
    series
        .terms()
        .map(|(&(j, k), c)| CoefficientRow {
            j,
            k,
            expression: c.to_string(),
            value: sample.map(|s| c.eval(s)),
        })
        .collect()
}

pub fn format_table(rows: &[CoefficientRow]) -> String {
    let mut out = String::from("j  k  coefficient\n");
    for r in rows {
        out.push_str(&format!("{:<2} {:<2} {}", r.j, r.k, r.expression));
        if let Some(v) = r.value {
            out.push_str(&format!("  = {v}"));
        }
        out.push('\n');
    }
    out
}

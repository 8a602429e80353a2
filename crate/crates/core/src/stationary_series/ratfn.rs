//! Exact rational functions in the derivative symbols b, b′, b″, … of a
//! weight b(y). Denominators are products of shifted factors (s + b), which
//! is all the order-by-order solve ever divides by.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exponent vector: entry i is the power of the i-th derivative b^{(i)}.
type Monomial = Vec<u32>;

fn trim(mut m: Monomial) -> Monomial {
    while m.last() == Some(&0) {
        m.pop();
    }
    m
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let n = a.len().max(b.len());
    trim((0..n).map(|i| a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0)).collect())
}

/// Polynomial in the derivative symbols with rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    /// The symbol b^{(order)}.
    pub fn symbol(order: usize) -> Self {
        let mut m = vec![0; order + 1];
        m[order] = 1;
        let mut p = Self::zero();
        p.add_term(m, BigRational::one());
        p
    }

    /// s + b.
    pub fn shifted(s: i64) -> Self {
        Self::symbol(0) + Self::constant(BigRational::from_integer(s.into()))
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let m = trim(m);
        let entry = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    /// d/dy, using d/dy b^{(i)} = b^{(i+1)}.
    pub fn derivative(&self) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            for (i, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut n = m.clone();
                n[i] -= 1;
                if n.len() <= i + 1 {
                    n.resize(i + 2, 0);
                }
                n[i + 1] += 1;
                out.add_term(n, c * BigRational::from_integer(e.into()));
            }
        }
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = c.to_f64().unwrap_or(f64::NAN);
                for (i, &e) in m.iter().enumerate() {
                    if e > 0 {
                        v *= values.get(i).copied().unwrap_or(0.0).powi(e as i32);
                    }
                }
                v
            })
            .sum()
    }

    pub fn eval_exact(&self, values: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (i, &e) in m.iter().enumerate() {
                if e > 0 {
                    let x = values.get(i).cloned().unwrap_or_else(BigRational::zero);
                    v *= num_traits::pow(x, e as usize);
                }
            }
            acc += v;
        }
        acc
    }

    /// Exact quotient by (s + b) if the division leaves no remainder.
    fn div_shifted(&self, s: i64) -> Option<Self> {
        // write the polynomial as Σ_e b^e C_e and divide by (b + s)
        let mut by_degree: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.first().copied().unwrap_or(0);
            let mut rest = m.clone();
            if !rest.is_empty() {
                rest[0] = 0;
            }
            by_degree.entry(e).or_default().add_term(rest, c.clone());
        }
        let top = *by_degree.keys().next_back()?;
        if top == 0 {
            return None;
        }
        let s = BigRational::from_integer(s.into());
        let mut quotient = vec![Poly::zero(); top as usize];
        let mut carry = Poly::zero();
        for e in (0..=top).rev() {
            let c = by_degree.get(&e).cloned().unwrap_or_default() - carry.scale(&s);
            if e == 0 {
                if !c.is_zero() {
                    return None;
                }
            } else {
                quotient[(e - 1) as usize] = c.clone();
                carry = c;
            }
        }
        let mut out = Poly::zero();
        for (e, q) in quotient.into_iter().enumerate() {
            out = out + q * Poly::symbol(0).pow(e as u32);
        }
        Some(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |acc, _| acc * self.clone())
    }

    fn fmt_symbol(i: usize) -> String {
        match i {
            0 => "b".into(),
            1..=3 => format!("b{}", "'".repeat(i)),
            _ => format!("b^({i})"),
        }
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (m, c) in rhs.terms {
            self.add_term(m, c);
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Self {
            terms: self.terms.into_iter().map(|(m, c)| (m, -c)).collect(),
        }
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut out = Poly::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term(mono_mul(a, b), ca * cb);
            }
        }
        out
    }
}

fn fmt_rational(c: &BigRational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // higher total degree first reads more naturally
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (n, (m, c)) in terms.into_iter().enumerate() {
            let factors: Vec<String> = m
                .iter()
                .enumerate()
                .filter(|(_, e)| **e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        Poly::fmt_symbol(i)
                    } else {
                        format!("{}^{}", Poly::fmt_symbol(i), e)
                    }
                })
                .collect();
            let negative = c.is_negative();
            let mag = c.abs();
            let body = if factors.is_empty() {
                fmt_rational(&mag)
            } else if mag.is_one() {
                factors.join("*")
            } else {
                format!("{}*{}", fmt_rational(&mag), factors.join("*"))
            };
            match (n, negative) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, " - {body}")?,
                (_, false) => write!(f, " + {body}")?,
            }
        }
        Ok(())
    }
}

/// N / Π (s + b)^{p_s}.
#[derive(Debug, Clone)]
pub struct RatFn {
    num: Poly,
    den: BTreeMap<i64, u32>,
}

impl RatFn {
    pub fn zero() -> Self {
        Self::from_poly(Poly::zero())
    }

    pub fn one() -> Self {
        Self::from_poly(Poly::one())
    }

    pub fn from_poly(num: Poly) -> Self {
        Self { num, den: BTreeMap::new() }
    }

    pub fn integer(n: i64) -> Self {
        Self::from_poly(Poly::constant(BigRational::from_integer(n.into())))
    }

    pub fn rational(n: i64, d: i64) -> Self {
        Self::from_poly(Poly::constant(BigRational::new(BigInt::from(n), BigInt::from(d))))
    }

    /// b^{(order)}.
    pub fn symbol(order: usize) -> Self {
        Self::from_poly(Poly::symbol(order))
    }

    /// Divides by (s + b)^power.
    pub fn over_shifted(mut self, s: i64, power: u32) -> Self {
        if power > 0 {
            *self.den.entry(s).or_insert(0) += power;
        }
        self.reduce()
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator_factors(&self) -> &BTreeMap<i64, u32> {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn reduce(mut self) -> Self {
        if self.num.is_zero() {
            self.den.clear();
            return self;
        }
        let shifts: Vec<i64> = self.den.keys().copied().collect();
        for s in shifts {
            while self.den.get(&s).copied().unwrap_or(0) > 0 {
                match self.num.div_shifted(s) {
                    Some(q) => {
                        self.num = q;
                        let p = self.den.get_mut(&s).expect("factor present");
                        *p -= 1;
                        if *p == 0 {
                            self.den.remove(&s);
                        }
                    }
                    None => break,
                }
            }
        }
        self
    }

    fn lift(&self, den: &BTreeMap<i64, u32>) -> Poly {
        let mut num = self.num.clone();
        for (s, &p) in den {
            let have = self.den.get(s).copied().unwrap_or(0);
            num = num * Poly::shifted(*s).pow(p - have);
        }
        num
    }

    fn common(&self, other: &RatFn) -> BTreeMap<i64, u32> {
        let mut den = self.den.clone();
        for (s, &p) in &other.den {
            let e = den.entry(*s).or_insert(0);
            *e = (*e).max(p);
        }
        den
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
        .reduce()
    }

    /// d/dy.
    pub fn derivative(&self) -> Self {
        let mut out = RatFn {
            num: self.num.derivative(),
            den: self.den.clone(),
        };
        for (s, &p) in &self.den {
            let mut den = self.den.clone();
            *den.get_mut(s).expect("factor present") += 1;
            let term = RatFn {
                num: self.num.clone() * Poly::symbol(1).scale(&BigRational::from_integer((-(p as i64)).into())),
                den,
            };
            out = out + term;
        }
        out.reduce()
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let b = values.first().copied().unwrap_or(0.0);
        let den: f64 = self.den.iter().map(|(s, p)| (*s as f64 + b).powi(*p as i32)).product();
        self.num.eval(values) / den
    }

    pub fn eval_exact(&self, values: &[BigRational]) -> Option<BigRational> {
        let b = values.first().cloned().unwrap_or_else(BigRational::zero);
        let mut den = BigRational::one();
        for (s, p) in &self.den {
            den *= num_traits::pow(BigRational::from_integer((*s).into()) + &b, *p as usize);
        }
        if den.is_zero() {
            return None;
        }
        Some(self.num.eval_exact(values) / den)
    }
}

impl PartialEq for RatFn {
    fn eq(&self, other: &Self) -> bool {
        let den = self.common(other);
        self.lift(&den) == other.lift(&den)
    }
}

impl Add for RatFn {
    type Output = RatFn;
    fn add(self, rhs: RatFn) -> RatFn {
        let den = self.common(&rhs);
        RatFn {
            num: self.lift(&den) + rhs.lift(&den),
            den,
        }
        .reduce()
    }
}

impl Sub for RatFn {
    type Output = RatFn;
    fn sub(self, rhs: RatFn) -> RatFn {
        self + (-rhs)
    }
}

impl Neg for RatFn {
    type Output = RatFn;
    fn neg(self) -> RatFn {
        RatFn {
            num: -self.num,
            den: self.den,
        }
    }
}

impl Mul for RatFn {
    type Output = RatFn;
    fn mul(self, rhs: RatFn) -> RatFn {
        let mut den = self.den;
        for (s, p) in rhs.den {
            *den.entry(s).or_insert(0) += p;
        }
        RatFn {
            num: self.num * rhs.num,
            den,
        }
        .reduce()
    }
}

impl fmt::Display for RatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_empty() {
            return write!(f, "{}", self.num);
        }
        let factors: Vec<String> = self
            .den
            .iter()
            .map(|(s, p)| {
                let base = if *s == 0 {
                    "b".to_string()
                } else {
                    format!("({s} + b)")
                };
                if *p == 1 {
                    base
                } else {
                    format!("{base}^{p}")
                }
            })
            .collect();
        write!(f, "({}) / ({})", self.num, factors.join("*"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> RatFn {
        RatFn::symbol(0)
    }
    fn bp() -> RatFn {
        RatFn::symbol(1)
    }

    #[test]
    fn arithmetic_and_cancellation() {
        // (b² + b)/b = b + 1
        let x = (b() * b() + b()).over_shifted(0, 1);
        assert_eq!(x, b() + RatFn::one());
        assert!(x.denominator_factors().is_empty());
        // (b+1)/(1+b)² = 1/(1+b)
        let y = (b() + RatFn::one()).over_shifted(1, 2);
        assert_eq!(y.denominator_factors().get(&1), Some(&1));
        assert_eq!(RatFn::rational(1, 2) + RatFn::rational(1, 2), RatFn::one());
        assert!((b() - b()).is_zero());
    }

    #[test]
    fn derivatives() {
        // d/dy (b′²/b) = 2b′b″/b − b′³/b²
        let f = (bp() * bp()).over_shifted(0, 1);
        let expect = (RatFn::integer(2) * bp() * RatFn::symbol(2)).over_shifted(0, 1)
            - (bp() * bp() * bp()).over_shifted(0, 2);
        assert_eq!(f.derivative(), expect);
        assert_eq!(RatFn::integer(7).derivative(), RatFn::zero());
    }

    #[test]
    fn evaluation() {
        let f = (bp() * bp()).over_shifted(0, 1).over_shifted(1, 1);
        let v = f.eval(&[2.0, 3.0]);
        assert!((v - 9.0 / 6.0).abs() < 1e-15);
        let q = |n: i64| BigRational::from_integer(n.into());
        assert_eq!(f.eval_exact(&[q(2), q(3)]), Some(BigRational::new(3.into(), 2.into())));
        assert_eq!(format!("{}", (RatFn::integer(-1) * bp() * bp()).over_shifted(0, 1)), "(-b'^2) / (b)");
    }
}

//! Multivariate polynomials with exact rational coefficients.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Power product of variables, e.g. `x^2 y`. Exponents are always positive.
pub type Monomial = BTreeMap<String, u32>;

/// A polynomial term. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Closest rational to `x` with denominator at most `max_den` (continued fractions).
pub fn rat_approx(x: f64, max_den: i64) -> BigRational {
    let neg = x < 0.0;
    let mut v = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    for _ in 0..64 {
        let a = v.floor();
        let ai = a as i128;
        let p2 = ai * p1 + p0;
        let q2 = ai * q1 + q0;
        if q2 > max_den as i128 {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = v - a;
        if frac < 1e-15 {
            break;
        }
        v = 1.0 / frac;
    }
    let r = BigRational::new(BigInt::from(p1), BigInt::from(q1.max(1)));
    if neg {
        -r
    } else {
        r
    }
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::new(), c);
        }
        Poly { terms }
    }

    pub fn int(c: i64) -> Self {
        Poly::constant(BigRational::from_integer(BigInt::from(c)))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Poly::constant(rat(n, d))
    }

    pub fn var(name: &str) -> Self {
        assert!(!name.is_empty(), "variable names must be nonempty");
        let mut m = Monomial::new();
        m.insert(name.to_string(), 1);
        let mut terms = BTreeMap::new();
        terms.insert(m, BigRational::one());
        Poly { terms }
    }

    pub fn from_terms(it: impl IntoIterator<Item = (Monomial, BigRational)>) -> Self {
        let mut p = Poly::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let m: Monomial = m.into_iter().filter(|(_, e)| *e > 0).collect();
        let entry = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant value, if the polynomial has no variables.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Monomial::new()).cloned(),
            _ => None,
        }
    }

    pub fn constant_term(&self) -> BigRational {
        self.terms.get(&Monomial::new()).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    /// If this polynomial is exactly a single variable with coefficient one.
    pub fn as_var(&self) -> Option<&str> {
        if self.terms.len() != 1 {
            return None;
        }
        let (m, c) = self.terms.iter().next()?;
        if !c.is_one() || m.len() != 1 {
            return None;
        }
        let (v, e) = m.iter().next()?;
        (*e == 1).then_some(v.as_str())
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.terms.keys().flat_map(|m| m.keys().cloned()).collect()
    }

    pub fn mentions(&self, v: &str) -> bool {
        self.terms.keys().any(|m| m.contains_key(v))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.values().sum()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: &str) -> u32 {
        self.terms.keys().map(|m| m.get(v).copied().unwrap_or(0)).max().unwrap_or(0)
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::int(1);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect() }
    }

    /// Replace variable `v` with the polynomial `s`.
    pub fn substitute(&self, v: &str, s: &Poly) -> Poly {
        if !self.mentions(v) {
            return self.clone();
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut rest = m.clone();
            let e = rest.remove(v).unwrap_or(0);
            let base = Poly::from_terms([(rest, c.clone())]);
            out = &out + &(&base * &s.pow(e));
        }
        out
    }

    /// Simultaneous substitution.
    pub fn substitute_all(&self, map: &BTreeMap<String, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(c.clone());
            for (v, e) in m {
                let factor = match map.get(v) {
                    Some(s) => s.pow(*e),
                    None => Poly::var(v).pow(*e),
                };
                acc = &acc * &factor;
            }
            out = &out + &acc;
        }
        out
    }

    /// Partial derivative in `v`.
    pub fn derivative(&self, v: &str) -> Poly {
        Poly::from_terms(self.terms.iter().filter_map(|(m, c)| {
            let e = *m.get(v)?;
            let mut rest = m.clone();
            if e == 1 {
                rest.remove(v);
            } else {
                rest.insert(v.to_string(), e - 1);
            }
            Some((rest, c * BigRational::from_integer(BigInt::from(e))))
        }))
    }

    pub fn rename(&self, from: &str, to: &str) -> Poly {
        self.substitute(from, &Poly::var(to))
    }

    /// Exact evaluation. Returns `None` if some variable is unassigned.
    pub fn eval_rational(&self, env: &BTreeMap<String, BigRational>) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in m {
                let x = env.get(v)?;
                for _ in 0..*e {
                    t *= x;
                }
            }
            acc += t;
        }
        Some(acc)
    }

    pub fn eval_f64(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = rat_to_f64(c);
            for (v, e) in m {
                t *= lookup(v)?.powi(*e as i32);
            }
            acc += t;
        }
        Some(acc)
    }

    /// Compile to a fast evaluator over a fixed variable ordering.
    pub fn compile(&self, order: &[String]) -> Option<CompiledPoly> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            let mut powers = Vec::with_capacity(m.len());
            for (v, e) in m {
                let idx = order.iter().position(|o| o == v)?;
                powers.push((idx, *e as i32));
            }
            terms.push((rat_to_f64(c), powers));
        }
        Some(CompiledPoly { terms })
    }

    /// Coefficients when read as a polynomial of degree <= 1 in the given variables:
    /// returns (per-variable coefficients, constant). `None` if non-affine in them or
    /// if any other variable occurs.
    pub fn affine_coefficients(&self, order: &[String]) -> Option<(Vec<BigRational>, BigRational)> {
        let mut lin = vec![BigRational::zero(); order.len()];
        let mut cst = BigRational::zero();
        for (m, c) in &self.terms {
            match m.len() {
                0 => cst = c.clone(),
                1 => {
                    let (v, e) = m.iter().next()?;
                    if *e != 1 {
                        return None;
                    }
                    let idx = order.iter().position(|o| o == v)?;
                    lin[idx] = c.clone();
                }
                _ => return None,
            }
        }
        Some((lin, cst))
    }
}

#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, pw) in &self.terms {
            let mut t = *c;
            for &(i, e) in pw {
                t *= if e == 1 { x[i] } else { x[i].powi(e) };
            }
            acc += t;
        }
        acc
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                let mut m = m1.clone();
                for (v, e) in m2 {
                    *m.entry(v.clone()).or_insert(0) += e;
                }
                out.add_term(m, c1 * c2);
            }
        }
        out
    }
}

macro_rules! owned_ops {
    ($tr:ident, $f:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, rhs: Poly) -> Poly {
                (&self).$f(&rhs)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -(&self)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::emit::poly_infix(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_drops_zero_coefficients() {
        let x = Poly::var("x");
        let p = &x - &x;
        assert!(p.is_zero());
        assert_eq!(p.num_terms(), 0);
    }

    #[test]
    fn substitution_expands() {
        let x = Poly::var("x");
        let y = Poly::var("y");
        let p = &(&x * &x) + &y;
        let q = p.substitute("x", &(&y + &Poly::int(1)));
        // (y+1)^2 + y = y^2 + 3y + 1
        let expected = &(&(&y * &y) + &y.scale(&rat(3, 1))) + &Poly::int(1);
        assert_eq!(q, expected);
    }

    #[test]
    fn rational_approximation() {
        let r = rat_approx(1.0 / 3.0, 1000);
        assert_eq!(r, rat(1, 3));
        let r = rat_approx(-0.86, 1000);
        assert_eq!(r, rat(-43, 50));
    }
}

//! Per-location dynamics.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{rat_to_f64, Poly};

/// Vector fields that are not polynomial and are integrated numerically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum NamedField {
    /// `x' = -x/tau + tanh(l x) - tanh(l y)`, `y' = -y/tau + tanh(l x) + tanh(l y)`.
    Tanh { tau: f64, lambda: f64 },
}

impl NamedField {
    pub fn dim(&self) -> usize {
        match self {
            NamedField::Tanh { .. } => 2,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            NamedField::Tanh { tau, lambda } => {
                let (te, ti) = ((lambda * x[0]).tanh(), (lambda * x[1]).tanh());
                out[0] = -x[0] / tau + te - ti;
                out[1] = -x[1] / tau + te + ti;
            }
        }
    }
}

/// Dynamics of a location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowSpec {
    /// Exact solution of `x' = A x + b`.
    Affine {
        #[serde(with = "rat_matrix")]
        a: Vec<Vec<BigRational>>,
        #[serde(with = "rat_vector")]
        b: Vec<BigRational>,
    },
    /// `x(T) = x0 + (A x0 + b) T`: the direction is frozen at the entry point.
    FrozenTaylor {
        #[serde(with = "rat_matrix")]
        a: Vec<Vec<BigRational>>,
        #[serde(with = "rat_vector")]
        b: Vec<BigRational>,
    },
    Nonlinear {
        field: NamedField,
        /// Largest RK4 step.
        #[serde(default = "default_rk4_step")]
        step: f64,
    },
}

fn default_rk4_step() -> f64 {
    1e-3
}

impl FlowSpec {
    pub fn affine_int(a: [[i64; 2]; 2], b: [i64; 2], den: i64) -> FlowSpec {
        let r = |n: i64| BigRational::new(n.into(), den.into());
        FlowSpec::Affine { a: a.iter().map(|row| row.iter().map(|v| r(*v)).collect()).collect(), b: b.iter().map(|v| r(*v)).collect() }
    }

    pub fn dim(&self) -> usize {
        match self {
            FlowSpec::Affine { b, .. } | FlowSpec::FrozenTaylor { b, .. } => b.len(),
            FlowSpec::Nonlinear { field, .. } => field.dim(),
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        match self {
            FlowSpec::Affine { a, b } | FlowSpec::FrozenTaylor { a, b } => {
                if b.len() != n || a.len() != n || a.iter().any(|r| r.len() != n) {
                    return Err(Error::Malformed(format!("flow matrices must be {n}x{n} and {n}")));
                }
            }
            FlowSpec::Nonlinear { field, step } => {
                if field.dim() != n {
                    return Err(Error::Malformed(format!("field dimension {} differs from {n}", field.dim())));
                }
                if !(*step > 0.0) {
                    return Err(Error::Malformed("integration step must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Affine data `(A, b)` for the affine and frozen variants.
    pub fn affine_parts(&self) -> Option<(&Vec<Vec<BigRational>>, &Vec<BigRational>)> {
        match self {
            FlowSpec::Affine { a, b } | FlowSpec::FrozenTaylor { a, b } => Some((a, b)),
            FlowSpec::Nonlinear { .. } => None,
        }
    }

    pub fn compile(&self) -> CompiledFlow {
        let f = |a: &Vec<Vec<BigRational>>, b: &Vec<BigRational>| {
            (
                a.iter().map(|r| r.iter().map(rat_to_f64).collect()).collect::<Vec<Vec<f64>>>(),
                b.iter().map(rat_to_f64).collect::<Vec<f64>>(),
            )
        };
        match self {
            FlowSpec::Affine { a, b } => {
                let (a, b) = f(a, b);
                CompiledFlow::Affine { a, b }
            }
            FlowSpec::FrozenTaylor { a, b } => {
                let (a, b) = f(a, b);
                CompiledFlow::Frozen { a, b }
            }
            FlowSpec::Nonlinear { field, step } => CompiledFlow::Nonlinear { field: field.clone(), step: *step },
        }
    }

    /// Polynomial parameterization of the flow in the start point `x0` and time `t`,
    /// when one exists: frozen flows and affine flows with nilpotent `A`.
    pub fn flow_poly(&self, x0: &[Poly], t: &Poly) -> Option<Vec<Poly>> {
        match self {
            FlowSpec::FrozenTaylor { a, b } => {
                let dir = mat_vec_poly(a, x0, b);
                Some(x0.iter().zip(dir).map(|(x, d)| x + &(&d * t)).collect())
            }
            FlowSpec::Affine { a, b } => {
                let n = b.len();
                // nilpotent iff A^n = 0
                let mut pw = identity(n);
                for _ in 0..n {
                    pw = mat_mul(&pw, a);
                }
                if pw.iter().flatten().any(|c| !c.is_zero()) {
                    return None;
                }
                // x(t) = sum_k A^k x0 t^k / k! + sum_k A^k b t^(k+1) / (k+1)!
                let mut out: Vec<Poly> = x0.to_vec();
                let zero = vec![BigRational::zero(); n];
                let mut ak = identity(n);
                let mut fact = BigRational::one();
                let mut tk = Poly::int(1);
                let bp: Vec<Poly> = b.iter().map(|c| Poly::constant(c.clone())).collect();
                for k in 0..=n {
                    let tk1 = &tk * t;
                    let fact1 = &fact * BigRational::from_integer((k as i64 + 1).into());
                    let bx = mat_vec_poly(&ak, &bp, &zero);
                    for i in 0..n {
                        if k > 0 {
                            let ax = mat_vec_poly(&ak, x0, &zero);
                            out[i] = &out[i] + &(&ax[i] * &tk).scale(&(BigRational::one() / &fact));
                        }
                        out[i] = &out[i] + &(&bx[i] * &tk1).scale(&(BigRational::one() / &fact1));
                    }
                    ak = mat_mul(&ak, a);
                    fact = fact1;
                    tk = tk1;
                }
                Some(out)
            }
            FlowSpec::Nonlinear { .. } => None,
        }
    }
}

fn identity(n: usize) -> Vec<Vec<BigRational>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect()).collect()
}

fn mat_mul(a: &[Vec<BigRational>], b: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).fold(BigRational::zero(), |acc, k| acc + &a[i][k] * &b[k][j])).collect())
        .collect()
}

/// `A x + b` over polynomials.
pub fn mat_vec_poly(a: &[Vec<BigRational>], x: &[Poly], b: &[BigRational]) -> Vec<Poly> {
    a.iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(x).fold(Poly::constant(bi.clone()), |acc, (c, xi)| &acc + &xi.scale(c)))
        .collect()
}

/// Floating-point form of a [`FlowSpec`].
#[derive(Clone, Debug)]
pub enum CompiledFlow {
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
    Frozen { a: Vec<Vec<f64>>, b: Vec<f64> },
    Nonlinear { field: NamedField, step: f64 },
}

impl CompiledFlow {
    /// Vector field at `x` (for frozen flows, the direction taken from `x`).
    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CompiledFlow::Affine { a, b } | CompiledFlow::Frozen { a, b } => affine_apply(a, b, x),
            CompiledFlow::Nonlinear { field, .. } => {
                let mut out = vec![0.0; x.len()];
                field.eval(x, &mut out);
                out
            }
        }
    }

    /// State reached from `x0` after time `t`.
    pub fn flow(&self, x0: &[f64], t: f64) -> Vec<f64> {
        if t == 0.0 {
            return x0.to_vec();
        }
        match self {
            CompiledFlow::Frozen { a, b } => {
                let d = affine_apply(a, b, x0);
                x0.iter().zip(d).map(|(x, v)| x + v * t).collect()
            }
            CompiledFlow::Affine { a, b } if a.len() == 2 => affine2_flow(a, b, x0, t),
            CompiledFlow::Affine { a, b } => affine_flow_expm(a, b, x0, t),
            CompiledFlow::Nonlinear { field, step } => {
                let n = (t.abs() / step).ceil().max(1.0) as usize;
                let h = t / n as f64;
                let mut x = x0.to_vec();
                for _ in 0..n {
                    x = rk4_step(field, &x, h);
                }
                x
            }
        }
    }
}

fn affine_apply(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(row, bi)| row.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + bi).collect()
}

pub fn rk4_step(field: &NamedField, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    field.eval(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    field.eval(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    field.eval(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    field.eval(&tmp, &mut k4);
    (0..n).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// `exp(A t)` of a 2x2 matrix through `A = s I + M` with `M^2 = d I`.
pub fn expm2(a: &[Vec<f64>], t: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (a[0][0] + a[1][1]);
    let m = [[a[0][0] - s, a[0][1]], [a[1][0], a[1][1] - s]];
    let d = -(m[0][0] * m[1][1] - m[0][1] * m[1][0]);
    let (c, k) = if d > 0.0 {
        let w = d.sqrt();
        ((w * t).cosh(), (w * t).sinh() / w)
    } else if d < 0.0 {
        let w = (-d).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    let e = (s * t).exp();
    [[e * (c + k * m[0][0]), e * k * m[0][1]], [e * k * m[1][0], e * (c + k * m[1][1])]]
}

fn affine2_flow(a: &[Vec<f64>], b: &[f64], x0: &[f64], t: f64) -> Vec<f64> {
    let e = expm2(a, t);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let app = |v: [f64; 2]| [e[0][0] * v[0] + e[0][1] * v[1], e[1][0] * v[0] + e[1][1] * v[1]];
    if det.abs() > 1e-12 * scale * scale {
        // equilibrium shift: x(t) = e^{At} (x0 - p) + p with A p + b = 0
        let p = [(-b[0] * a[1][1] + b[1] * a[0][1]) / det, (-a[0][0] * b[1] + a[1][0] * b[0]) / det];
        let y = app([x0[0] - p[0], x0[1] - p[1]]);
        vec![y[0] + p[0], y[1] + p[1]]
    } else {
        // A^2 = tr(A) A, so the forcing integral is t b + g(t) A b
        let tr = a[0][0] + a[1][1];
        let g = if tr.abs() * t.abs() < 1e-8 {
            t * t / 2.0 + tr * t * t * t / 6.0
        } else {
            ((tr * t).exp() - 1.0 - tr * t) / (tr * tr)
        };
        let ab = [a[0][0] * b[0] + a[0][1] * b[1], a[1][0] * b[0] + a[1][1] * b[1]];
        let y = app([x0[0], x0[1]]);
        vec![y[0] + t * b[0] + g * ab[0], y[1] + t * b[1] + g * ab[1]]
    }
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let norm = m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut sq = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        sq += 1;
    }
    let a: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect()).collect()
    };
    let mut result: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..=20 {
        term = mul(&term, &a);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..sq {
        result = mul(&result, &result);
    }
    result
}

/// Affine flow through the augmented matrix `[[A, b], [0, 0]]`.
pub fn affine_flow_expm(a: &[Vec<f64>], b: &[f64], x0: &[f64], t: f64) -> Vec<f64> {
    let n = a.len();
    let mut m = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = a[i][j] * t;
        }
        m[i][n] = b[i] * t;
    }
    let e = expm(&m);
    (0..n).map(|i| (0..n).map(|j| e[i][j] * x0[j]).sum::<f64>() + e[i][n]).collect()
}

mod rat_vector {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let raw: Vec<super::RatRepr> = Vec::deserialize(d)?;
        raw.into_iter().map(|r| r.into_rational().map_err(serde::de::Error::custom)).collect()
    }
}

mod rat_matrix {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<BigRational>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|row| row.iter().map(|r| r.to_string()).collect::<Vec<_>>()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<BigRational>>, D::Error> {
        let raw: Vec<Vec<super::RatRepr>> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|row| row.into_iter().map(|r| r.into_rational().map_err(serde::de::Error::custom)).collect())
            .collect()
    }
}

/// A rational written as `"p/q"`, an integer, or a decimal number.
#[derive(Deserialize)]
#[serde(untagged)]
enum RatRepr {
    Text(String),
    Int(i64),
    Float(f64),
}

impl RatRepr {
    fn into_rational(self) -> std::result::Result<BigRational, String> {
        match self {
            RatRepr::Int(i) => Ok(BigRational::from_integer(i.into())),
            RatRepr::Float(f) => BigRational::from_float(f).ok_or_else(|| format!("not a finite number: {f}")),
            RatRepr::Text(s) => parse_rational(&s),
        }
    }
}

pub fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: num_bigint::BigInt = n.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
        let d: num_bigint::BigInt = d.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Ok(i) = s.parse::<num_bigint::BigInt>() {
        return Ok(BigRational::from_integer(i));
    }
    // exact decimal
    let (neg, body) = s.strip_prefix('-').map(|b| (true, b)).unwrap_or((false, s));
    let (int, frac) = body.split_once('.').ok_or_else(|| format!("not a rational: `{s}`"))?;
    let digits: num_bigint::BigInt = format!("{int}{frac}").parse().map_err(|_| format!("not a rational: `{s}`"))?;
    let den = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
    let r = BigRational::new(digits, den);
    Ok(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::rat;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn closed_form_matches_expm() {
        let cases: [[[f64; 2]; 2]; 5] = [
            [[1.0 / 6.0, -0.5], [0.5, 1.0 / 6.0]],
            [[-1.0 / 3.0, 0.0], [0.0, -1.0 / 3.0]],
            [[0.0, 1.0], [0.0, 0.0]],
            [[2.0, 1.0], [1.0, -1.0]],
            [[1.0, 2.0], [0.5, 1.0]],
        ];
        for a in cases {
            let a: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
            let b = vec![0.3, -9.8];
            for t in [0.1, 0.7, 2.0] {
                let x = affine2_flow(&a, &b, &[1.5, -0.25], t);
                let y = affine_flow_expm(&a, &b, &[1.5, -0.25], t);
                assert!(close(&x, &y, 1e-10), "{a:?} t={t}: {x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn nilpotent_flow_is_polynomial() {
        let f = FlowSpec::Affine { a: vec![vec![rat(0, 1), rat(1, 1)], vec![rat(0, 1), rat(0, 1)]], b: vec![rat(0, 1), rat(-49, 5)] };
        let x0 = [Poly::var("p"), Poly::var("v")];
        let xs = f.flow_poly(&x0, &Poly::var("t")).unwrap();
        // p + v t - 4.9 t^2
        let expected = &(&Poly::var("p") + &(&Poly::var("v") * &Poly::var("t"))) - &(&Poly::var("t") * &Poly::var("t")).scale(&rat(49, 10));
        assert_eq!(xs[0], expected);
        let rot = FlowSpec::affine_int([[0, 1], [-1, 0]], [0, 0], 1);
        assert!(rot.flow_poly(&x0, &Poly::var("t")).is_none());
    }

    #[test]
    fn rational_text_forms() {
        assert_eq!(parse_rational("-43/50").unwrap(), rat(-43, 50));
        assert_eq!(parse_rational("-0.86").unwrap(), rat(-43, 50));
        assert_eq!(parse_rational("7").unwrap(), rat(7, 1));
        assert!(parse_rational("1/0").is_err());
    }
}

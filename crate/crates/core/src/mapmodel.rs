//! Piecewise-smooth continuous maps `x -> mu b + A_J x + g^J(x)` with the
//! switching manifold `s = x_1 = 0`, and the two-dimensional example family.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::symbolic::Symbol;

/// A monomial `coef * prod x_k^exp_k` added to one output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub coef: f64,
    pub exp: Vec<u32>,
    pub component: usize,
}

impl PolyTerm {
    pub fn new(coef: f64, exp: Vec<u32>, component: usize) -> Self {
        Self { coef, exp, component }
    }

    pub fn degree(&self) -> u32 {
        self.exp.iter().sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exp.iter().zip(x).fold(self.coef, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
    }

    /// Partial derivative with respect to `x_k`.
    pub fn partial(&self, x: &[f64], k: usize) -> f64 {
        let ek = self.exp[k];
        if ek == 0 {
            return 0.0;
        }
        let mut v = self.coef * ek as f64;
        for (i, (&e, &xi)) in self.exp.iter().zip(x).enumerate() {
            let p = if i == k { e - 1 } else { e };
            if p > 0 {
                v *= xi.powi(p as i32);
            }
        }
        v
    }
}

/// Outcome of the continuity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityResidual {
    /// max over probe points with `s = 0` of `|f^L(x) - f^R(x)|_max`
    pub value: f64,
    /// max entry of `A_L - A_R` outside the first column
    pub structural: f64,
}

/// Continuous piecewise-smooth map on `R^N`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PwsMap {
    dim: usize,
    b: Vector,
    a_l: Mat,
    a_r: Mat,
    g_l: Vec<PolyTerm>,
    g_r: Vec<PolyTerm>,
    mu: f64,
}

fn term_table(terms: &[PolyTerm]) -> BTreeMap<(usize, Vec<u32>), f64> {
    let mut table = BTreeMap::new();
    for t in terms {
        *table.entry((t.component, t.exp.clone())).or_insert(0.0) += t.coef;
    }
    table
}

impl PwsMap {
    /// Builds a map after checking shapes and continuity across `s = 0`.
    ///
    /// `A_L` and `A_R` must agree outside their first column, and every
    /// monomial whose coefficient differs between the halves must contain `s`.
    pub fn new(b: Vector, a_l: Mat, a_r: Mat, g_l: Vec<PolyTerm>, g_r: Vec<PolyTerm>, mu: f64) -> Result<Self> {
        let map = Self::new_unchecked(b, a_l, a_r, g_l, g_r, mu)?;
        let n = map.dim;
        for i in 0..n {
            for j in 1..n {
                let (l, r) = (map.a_l[(i, j)], map.a_r[(i, j)]);
                if (l - r).abs() > 1e-12 * (1.0 + l.abs().max(r.abs())) {
                    return Err(Error::Discontinuous(format!("A_L[{i}][{j}] = {l} differs from A_R[{i}][{j}] = {r}")));
                }
            }
        }
        let (tl, tr) = (term_table(&map.g_l), term_table(&map.g_r));
        for key in tl.keys().chain(tr.keys()) {
            let cl = tl.get(key).copied().unwrap_or(0.0);
            let cr = tr.get(key).copied().unwrap_or(0.0);
            if cl != cr && key.1[0] == 0 {
                return Err(Error::Discontinuous(format!(
                    "term with exponents {:?} in component {} differs between halves but has no factor of s",
                    key.1, key.0
                )));
            }
        }
        Ok(map)
    }

    /// Shape checks only; continuity is not enforced.
    pub fn new_unchecked(b: Vector, a_l: Mat, a_r: Mat, g_l: Vec<PolyTerm>, g_r: Vec<PolyTerm>, mu: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::Dimension("dimension must be at least 1".into()));
        }
        for (name, a) in [("A_L", &a_l), ("A_R", &a_r)] {
            if a.shape() != (n, n) {
                return Err(Error::Dimension(format!("{name} is {:?}, expected {n}x{n}", a.shape())));
            }
        }
        for t in g_l.iter().chain(&g_r) {
            if t.exp.len() != n {
                return Err(Error::Dimension(format!("term exponent vector has length {}, expected {n}", t.exp.len())));
            }
            if t.component >= n {
                return Err(Error::Dimension(format!("term targets component {} of {n}", t.component)));
            }
            if t.degree() < 2 {
                return Err(Error::InvalidParameter(format!("term {:?} has degree < 2", t.exp)));
            }
        }
        if !mu.is_finite() || b.iter().chain(a_l.iter()).chain(a_r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite map coefficient".into()));
        }
        Ok(Self { dim: n, b, a_l, a_r, g_l, g_r, mu })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn a(&self, side: Symbol) -> &Mat {
        match side {
            Symbol::L => &self.a_l,
            Symbol::R => &self.a_r,
        }
    }

    pub fn g(&self, side: Symbol) -> &[PolyTerm] {
        match side {
            Symbol::L => &self.g_l,
            Symbol::R => &self.g_r,
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.g_l.iter().chain(&self.g_r).all(|t| t.coef == 0.0)
    }

    /// The same map with all nonlinear terms dropped.
    pub fn linear_part(&self) -> Self {
        Self { g_l: Vec::new(), g_r: Vec::new(), ..self.clone() }
    }

    /// Side used by `evaluate`: `L` for `s < 0`, otherwise `R`.
    pub fn side_of(x: &[f64]) -> Symbol {
        if x[0] < 0.0 {
            Symbol::L
        } else {
            Symbol::R
        }
    }

    pub fn evaluate(&self, x: &Vector) -> Vector {
        self.half_evaluate(Self::side_of(x.as_slice()), x)
    }

    pub fn half_evaluate(&self, side: Symbol, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        self.half_evaluate_into(side, x.as_slice(), out.as_mut_slice());
        out
    }

    /// Allocation-free evaluation of one half-map.
    pub fn half_evaluate_into(&self, side: Symbol, x: &[f64], out: &mut [f64]) {
        let a = self.a(side);
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.mu * self.b[i];
            for (j, xj) in x.iter().enumerate() {
                v += a[(i, j)] * xj;
            }
            *o = v;
        }
        for t in self.g(side) {
            out[t.component] += t.eval(x);
        }
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        self.half_evaluate_into(Self::side_of(x), x, out)
    }

    pub fn half_jacobian(&self, side: Symbol, x: &Vector) -> Mat {
        let mut jac = self.a(side).clone();
        for t in self.g(side) {
            for k in 0..self.dim {
                jac[(t.component, k)] += t.partial(x.as_slice(), k);
            }
        }
        jac
    }

    pub fn continuity_residual(&self) -> ContinuityResidual {
        let n = self.dim;
        let mut structural = 0.0_f64;
        for i in 0..n {
            for j in 1..n {
                structural = structural.max((self.a_l[(i, j)] - self.a_r[(i, j)]).abs());
            }
        }
        let mut value = 0.0_f64;
        for x in continuity_probes(n) {
            let d = self.half_evaluate(Symbol::L, &x) - self.half_evaluate(Symbol::R, &x);
            value = value.max(d.amax());
        }
        ContinuityResidual { value, structural }
    }

    /// The map in coordinates `z = x / mu`: `h(z) = b + A_J z + g^J(mu z) / mu`.
    ///
    /// A degree-`k` monomial picks up a factor `mu^(k-1)`, so at `mu = 0` the
    /// result is the piecewise-linear part with unit constant term.
    pub fn renormalized(&self) -> Self {
        let scale = |terms: &[PolyTerm]| {
            terms.iter().map(|t| PolyTerm { coef: t.coef * self.mu.powi(t.degree() as i32 - 1), ..t.clone() }).collect()
        };
        Self { g_l: scale(&self.g_l), g_r: scale(&self.g_r), mu: 1.0, ..self.clone() }
    }
}

/// Points on `s = 0` used by `continuity_residual`.
fn continuity_probes(n: usize) -> Vec<Vector> {
    let mut probes = Vec::new();
    if n == 1 {
        probes.push(Vector::zeros(1));
        return probes;
    }
    for j in 1..n {
        for v in [1.0, -1.0, 0.5, -2.0] {
            let mut x = Vector::zeros(n);
            x[j] = v;
            probes.push(x);
        }
    }
    for k in 0..4 {
        probes.push(Vector::from_fn(n, |i, _| if i == 0 { 0.0 } else { ((i + k) as f64 * 0.7).sin() * 1.5 }));
    }
    probes
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawMap {
    N: usize,
    b: Vec<f64>,
    A_L: Vec<Vec<f64>>,
    A_R: Vec<Vec<f64>>,
    #[serde(default)]
    g_L: Vec<PolyTerm>,
    #[serde(default)]
    g_R: Vec<PolyTerm>,
    #[serde(default)]
    mu: f64,
}

fn rows_to_mat(rows: &[Vec<f64>], n: usize, name: &str) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

fn mat_to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

impl Serialize for PwsMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawMap {
            N: self.dim,
            b: self.b.iter().copied().collect(),
            A_L: mat_to_rows(&self.a_l),
            A_R: mat_to_rows(&self.a_r),
            g_L: self.g_l.clone(),
            g_R: self.g_r.clone(),
            mu: self.mu,
        }
        .serialize(serializer)
    }
}

impl TryFrom<RawMap> for PwsMap {
    type Error = Error;

    fn try_from(raw: RawMap) -> Result<Self> {
        if raw.b.len() != raw.N {
            return Err(Error::Dimension(format!("b has length {}, expected N = {}", raw.b.len(), raw.N)));
        }
        PwsMap::new(
            Vector::from_vec(raw.b),
            rows_to_mat(&raw.A_L, raw.N, "A_L")?,
            rows_to_mat(&raw.A_R, raw.N, "A_R")?,
            raw.g_L,
            raw.g_R,
            raw.mu,
        )
    }
}

impl<'de> Deserialize<'de> for PwsMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMap::deserialize(deserializer)?;
        PwsMap::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Parameters of the two-dimensional example family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    #[serde(rename = "r_L")]
    pub r_l: f64,
    #[serde(rename = "s_R")]
    pub s_r: f64,
    #[serde(rename = "omega_L")]
    pub omega_l: f64,
    #[serde(rename = "omega_R")]
    pub omega_r: f64,
    pub mu: f64,
    #[serde(default)]
    pub c: f64,
}

impl ExampleParams {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64, hi: f64| {
            if v > 0.0 && v < hi {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, {hi})")))
            }
        };
        open("r_L", self.r_l, 1.0)?;
        open("s_R", self.s_r, 1.0)?;
        open("omega_L", self.omega_l, 0.5)?;
        open("omega_R", self.omega_r, 0.5)?;
        if !self.mu.is_finite() || !self.c.is_finite() {
            return Err(Error::InvalidParameter("mu and c must be finite".into()));
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::RL => self.r_l,
            ParamName::SR => self.s_r,
            ParamName::OmegaL => self.omega_l,
            ParamName::OmegaR | ParamName::Omega => self.omega_r,
            ParamName::Mu => self.mu,
            ParamName::C => self.c,
        }
    }

    pub fn with(mut self, name: ParamName, v: f64) -> Self {
        match name {
            ParamName::RL => self.r_l = v,
            ParamName::SR => self.s_r = v,
            ParamName::OmegaL => self.omega_l = v,
            ParamName::OmegaR => self.omega_r = v,
            ParamName::Omega => {
                self.omega_l = v;
                self.omega_r = v;
            }
            ParamName::Mu => self.mu = v,
            ParamName::C => self.c = v,
        }
        self
    }
}

/// The companion-form family with `g^L = (c s^2, 0)` and `g^R = 0`.
pub fn build_example(p: &ExampleParams) -> Result<PwsMap> {
    p.validate()?;
    Ok(build_example_unchecked(p))
}

/// `build_example` without range checks, for continuation steps that may
/// briefly leave the nominal parameter box.
pub fn build_example_unchecked(p: &ExampleParams) -> PwsMap {
    let a_l = Mat::from_row_slice(2, 2, &[2.0 * p.r_l * (2.0 * PI * p.omega_l).cos(), 1.0, -p.r_l * p.r_l, 0.0]);
    let a_r = Mat::from_row_slice(2, 2, &[2.0 / p.s_r * (2.0 * PI * p.omega_r).cos(), 1.0, -1.0 / (p.s_r * p.s_r), 0.0]);
    let g_l = if p.c != 0.0 { vec![PolyTerm::new(p.c, vec![2, 0], 0)] } else { Vec::new() };
    PwsMap { dim: 2, b: Vector::from_vec(vec![1.0, 0.0]), a_l, a_r, g_l, g_r: Vec::new(), mu: p.mu }
}

/// Names of scannable family parameters. `Omega` sets `omega_L = omega_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "r_L")]
    RL,
    #[serde(rename = "s_R")]
    SR,
    #[serde(rename = "omega_L")]
    OmegaL,
    #[serde(rename = "omega_R")]
    OmegaR,
    #[serde(rename = "omega")]
    Omega,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "c")]
    C,
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// A two-parameter slice of the example family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPlane {
    pub base: ExampleParams,
    pub x: ParamName,
    pub y: ParamName,
}

impl ParamPlane {
    pub fn new(base: ExampleParams, x: ParamName, y: ParamName) -> Self {
        Self { base, x, y }
    }

    pub fn params_at(&self, px: f64, py: f64, mu: f64) -> ExampleParams {
        self.base.with(ParamName::Mu, mu).with(self.x, px).with(self.y, py)
    }

    pub fn map_at(&self, px: f64, py: f64, mu: f64) -> PwsMap {
        build_example_unchecked(&self.params_at(px, py, mu))
    }
}

/// A map given either by the example family shorthand or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MapSpec {
    Family(FamilySpec),
    Raw(PwsMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: FamilyName,
    #[serde(flatten)]
    pub params: ExampleParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyName {
    #[serde(rename = "dns")]
    Dns,
}

impl MapSpec {
    /// Parses a JSON map description; the `family` key selects the shorthand.
    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::Serde("map description must be a JSON object".into()))?;
        if obj.contains_key("family") {
            let mut obj = obj.clone();
            let family: FamilyName = serde_json::from_value(obj.remove("family").unwrap_or_default())?;
            let params: ExampleParams = serde_json::from_value(serde_json::Value::Object(obj))?;
            params.validate()?;
            Ok(MapSpec::Family(FamilySpec { family, params }))
        } else {
            let raw: RawMap = serde_json::from_value(v.clone())?;
            Ok(MapSpec::Raw(PwsMap::try_from(raw)?))
        }
    }

    pub fn build(&self) -> Result<PwsMap> {
        match self {
            MapSpec::Family(f) => build_example(&f.params),
            MapSpec::Raw(m) => Ok(m.clone()),
        }
    }

    pub fn example_params(&self) -> Option<ExampleParams> {
        match self {
            MapSpec::Family(f) => Some(f.params),
            MapSpec::Raw(_) => None,
        }
    }

    pub fn set_mu(&mut self, mu: f64) {
        match self {
            MapSpec::Family(f) => f.params.mu = mu,
            MapSpec::Raw(m) => *m = m.with_mu(mu),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn base(c: f64) -> ExampleParams {
        ExampleParams { r_l: 0.2, s_r: 0.95, omega_l: 0.287, omega_r: 0.287, mu: 1.0, c }
    }

    #[test]
    fn example_matrices() {
        let p = base(0.0);
        let m = build_example(&p).unwrap();
        let th = 2.0 * PI * 0.287;
        assert_relative_eq!(m.a(Symbol::L)[(0, 0)], 0.4 * th.cos());
        assert_relative_eq!(m.a(Symbol::L)[(1, 0)], -0.04);
        assert_relative_eq!(m.a(Symbol::R)[(0, 0)], 2.0 / 0.95 * th.cos());
        assert_relative_eq!(m.a(Symbol::R)[(1, 0)], -1.0 / (0.95 * 0.95));
        assert!(m.is_piecewise_linear());
        let ev = crate::linalg::eigenvalues(m.a(Symbol::L));
        assert_relative_eq!(ev[0].norm(), 0.2, epsilon = 1e-12);
        assert_relative_eq!(ev[0].arg().abs(), th, epsilon = 1e-12);
        assert_eq!(m.continuity_residual(), ContinuityResidual { value: 0.0, structural: 0.0 });
    }

    #[test]
    fn example_rejects_out_of_range() {
        assert!(build_example(&ExampleParams { s_r: 1.0, ..base(0.0) }).is_err());
        assert!(build_example(&ExampleParams { omega_l: 0.5, ..base(0.0) }).is_err());
        assert!(build_example(&ExampleParams { r_l: 0.0, ..base(0.0) }).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let p = ExampleParams { mu: 0.0, ..base(1.0) };
        let m = build_example(&p).unwrap();
        let x = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(m.evaluate(&x), m.a(Symbol::R) * &x);
        let virt = m.half_evaluate(Symbol::L, &x);
        assert_relative_eq!(virt[0], 0.4 * (2.0 * PI * 0.287).cos() + 1.0, epsilon = 1e-15);
        assert_relative_eq!(virt[1], -0.04, epsilon = 1e-15);
        let m1 = m.with_mu(1.0);
        assert_eq!(m1.evaluate(&Vector::zeros(2)), Vector::from_vec(vec![1.0, 0.0]));
        let xs = Vector::from_vec(vec![0.0, 0.7]);
        assert_eq!(m1.half_evaluate(Symbol::L, &xs), m1.half_evaluate(Symbol::R, &xs));
        let xl = Vector::from_vec(vec![-0.3, 0.2]);
        let lin = m1.linear_part();
        assert_relative_eq!(lin.evaluate(&xl), lin.a(Symbol::L) * &xl + lin.b());
    }

    #[test]
    fn jacobian_examples() {
        let m = build_example(&base(1.0)).unwrap();
        let x = Vector::from_vec(vec![-0.4, 1.3]);
        let mut expected = m.a(Symbol::L).clone();
        expected[(0, 0)] += 2.0 * -0.4;
        assert_relative_eq!(m.half_jacobian(Symbol::L, &x), expected, epsilon = 1e-15);
        let lin = build_example(&base(0.0)).unwrap();
        assert_eq!(&lin.half_jacobian(Symbol::R, &x), lin.a(Symbol::R));
    }

    #[test]
    fn perturbed_column_breaks_continuity() {
        let m = build_example(&base(0.0)).unwrap();
        let mut a_r = m.a(Symbol::R).clone();
        a_r[(0, 1)] += 1e-3;
        assert!(PwsMap::new(m.b().clone(), m.a(Symbol::L).clone(), a_r.clone(), vec![], vec![], 1.0).is_err());
        let bad = PwsMap::new_unchecked(m.b().clone(), m.a(Symbol::L).clone(), a_r, vec![], vec![], 1.0).unwrap();
        let res = bad.continuity_residual();
        let max_x2 = continuity_probes(2).iter().map(|x| x[1].abs()).fold(0.0, f64::max);
        assert!(res.value >= 1e-3 * max_x2 * (1.0 - 1e-9));
        assert_relative_eq!(res.structural, 1e-3, epsilon = 1e-12);

        let a = Mat::from_row_slice(2, 2, &[0.3, 1.0, -0.2, 0.1]);
        let smooth = PwsMap::new(Vector::from_vec(vec![1.0, 0.0]), a.clone(), a, vec![], vec![], 1.0).unwrap();
        assert_eq!(smooth.continuity_residual().value, 0.0);
    }

    #[test]
    fn nonlinear_terms_without_s_factor_rejected() {
        let a = Mat::identity(2, 2) * 0.5;
        let t = PolyTerm::new(1.0, vec![0, 2], 1);
        let err = PwsMap::new(Vector::from_vec(vec![1.0, 0.0]), a.clone(), a.clone(), vec![t.clone()], vec![], 0.0);
        assert!(matches!(err, Err(Error::Discontinuous(_))));
        assert!(PwsMap::new(Vector::from_vec(vec![1.0, 0.0]), a.clone(), a, vec![t.clone()], vec![t], 0.0).is_ok());
    }

    #[test]
    fn renormalization_scales_terms() {
        let m = build_example(&ExampleParams { mu: 0.5, ..base(1.0) }).unwrap();
        let h = m.renormalized();
        let z = Vector::from_vec(vec![-0.8, 0.3]);
        let direct = m.evaluate(&(&z * 0.5)) / 0.5;
        assert_relative_eq!(h.evaluate(&z), direct, epsilon = 1e-14);
        let h0 = m.with_mu(0.0).renormalized();
        assert!(h0.is_piecewise_linear());
    }

    #[test]
    fn json_round_trip() {
        let v = serde_json::json!({"N":2,"b":[1,0],"A_L":[[0.1,1],[-0.04,0]],"A_R":[[1.2,1],[-1.1,0]],
            "g_L":[{"coef":1.0,"exp":[2,0],"component":0}],"g_R":[],"mu":1.0});
        let spec = MapSpec::from_value(&v).unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.g(Symbol::L).len(), 1);
        let back = serde_json::to_value(&m).unwrap();
        assert_eq!(MapSpec::from_value(&back).unwrap().build().unwrap(), m);

        let fam = serde_json::json!({"family":"dns","r_L":0.2,"s_R":0.95,"omega_L":0.287,"omega_R":0.287,"mu":1.0,"c":0.0});
        let spec = MapSpec::from_value(&fam).unwrap();
        assert_eq!(spec.example_params().unwrap(), base(0.0));
        assert_eq!(MapSpec::from_value(&serde_json::to_value(&spec).unwrap()).unwrap(), spec);

        let bad = serde_json::json!({"family":"dns","r_L":0.2,"s_R":0.95,"omega_L":0.287,"omega_R":0.287,"mu":1.0,"cc":0.0});
        let err = MapSpec::from_value(&bad).unwrap_err().to_string();
        assert!(err.contains("cc"), "{err}");
        let bad_raw = serde_json::json!({"N":1,"b":[1],"A_L":[[0.5]],"A_R":[[0.5]],"extra":1});
        assert!(MapSpec::from_value(&bad_raw).unwrap_err().to_string().contains("extra"));
    }

    fn random_map(n: usize, e: &[f64], mu: f64) -> PwsMap {
        let a_l = Mat::from_fn(n, n, |i, j| e[i * 4 + j]);
        let mut a_r = a_l.clone();
        for i in 0..n {
            a_r[(i, 0)] = e[16 + i];
        }
        let g_l = vec![
            PolyTerm::new(e[20], vec![1; n], 0),
            PolyTerm::new(
                e[21],
                {
                    let mut v = vec![0; n];
                    v[0] = 2;
                    v[n - 1] += 1;
                    v
                },
                n - 1,
            ),
        ];
        let g_r = vec![PolyTerm::new(
            e[22],
            {
                let mut v = vec![0; n];
                v[0] = 3;
                v
            },
            0,
        )];
        PwsMap::new(Vector::from_fn(n, |i, _| e[24 + i]), a_l, a_r, g_l, g_r, mu).unwrap()
    }

    proptest! {
        #[test]
        fn piecewise_linear_scaling(lambda in 0.1f64..5.0, mu0 in -2.0f64..2.0, e in prop::collection::vec(-1.0f64..1.0, 28), x in prop::collection::vec(-3.0f64..3.0, 4), n in 2usize..5) {
            let m = random_map(n, &e, mu0).linear_part();
            let x = Vector::from_fn(n, |i, _| x[i]);
            let lhs = m.with_mu(lambda * mu0).evaluate(&(&x * lambda));
            let rhs = m.evaluate(&x) * lambda;
            prop_assert!((lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
        }

        #[test]
        fn jacobian_matches_differences(e in prop::collection::vec(-1.0f64..1.0, 28), x in prop::collection::vec(-2.0f64..2.0, 4), n in 2usize..5, left in any::<bool>()) {
            let m = random_map(n, &e, 0.7);
            let side = if left { Symbol::L } else { Symbol::R };
            let x = Vector::from_fn(n, |i, _| x[i]);
            let jac = m.half_jacobian(side, &x);
            let h = 1e-5;
            for k in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let col = (m.half_evaluate(side, &xp) - m.half_evaluate(side, &xm)) / (2.0 * h);
                for i in 0..n {
                    let scale = jac[(i, k)].abs().max(1.0);
                    prop_assert!((col[i] - jac[(i, k)]).abs() <= 1e-6 * scale);
                }
            }
        }

        #[test]
        fn evaluate_picks_side(e in prop::collection::vec(-1.0f64..1.0, 28), x in prop::collection::vec(-2.0f64..2.0, 4), n in 2usize..5) {
            let m = random_map(n, &e, -0.3);
            let x = Vector::from_fn(n, |i, _| x[i]);
            let side = if x[0] < 0.0 { Symbol::L } else { Symbol::R };
            prop_assert_eq!(m.evaluate(&x), m.half_evaluate(side, &x));
            prop_assert!(m.continuity_residual().value <= 1e-12);
        }
    }
}

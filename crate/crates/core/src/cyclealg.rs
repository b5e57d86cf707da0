//! Cycle matrices, closed-form and Newton-refined periodic orbits,
//! admissibility and stability.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, adjugate_first_row, det, det_scale, eigenvalues, is_singular, Mat, Vector};
use crate::mapmodel::PwsMap;
use crate::symbolic::{Symbol, SymbolWord};

/// Points with `|s| <= DEFAULT_TOL_ZERO` are treated as lying on the switching manifold.
pub const DEFAULT_TOL_ZERO: f64 = 1e-9;
/// Relative threshold for treating a determinant as zero.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Margin used to classify multipliers relative to the unit circle.
pub const HYPERBOLIC_MARGIN: f64 = 1e-9;

/// `e_1^T adj(I - A_L)`; errors when it differs from `e_1^T adj(I - A_R)`.
pub fn varrho_row(map: &PwsMap) -> Result<Vector> {
    let n = map.dim();
    let id = Mat::identity(n, n);
    let rl = adjugate_first_row(&(&id - map.a(Symbol::L)));
    let rr = adjugate_first_row(&(&id - map.a(Symbol::R)));
    let scale = rl.amax().max(1.0);
    if (&rl - &rr).amax() > 1e-10 * scale {
        return Err(Error::Discontinuous(format!(
            "first rows of adj(I - A_L) and adj(I - A_R) differ by {:.3e}",
            (&rl - &rr).amax()
        )));
    }
    Ok(rl)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointInfo {
    pub x_star: Vec<f64>,
    pub s_star: f64,
    pub side: Symbol,
    pub admissible: bool,
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(match self {
            Symbol::L => "L",
            Symbol::R => "R",
        })
    }
}

/// Fixed point of the affine part of one half-map.
pub fn half_fixed_point(map: &PwsMap, side: Symbol) -> Result<FixedPointInfo> {
    let n = map.dim();
    let i_minus_a = Mat::identity(n, n) - map.a(side);
    let d = det(&i_minus_a);
    if d.abs() < SINGULAR_TOL {
        return Err(Error::Singular { what: format!("I - A_{}", side.as_char()), det: d });
    }
    let rhs = map.b() * map.mu();
    let x = linalg::solve(&i_minus_a, &rhs).ok_or(Error::Singular { what: "I - A".into(), det: d })?;
    let s_adj = adjugate_first_row(&i_minus_a).dot(map.b()) * map.mu() / d;
    if (s_adj - x[0]).abs() > 1e-9 * (1.0 + x.amax()) {
        return Err(Error::CrossCheck(format!("fixed point s = {} but adjugate formula gives {}", x[0], s_adj)));
    }
    let s = x[0];
    let admissible = match side {
        Symbol::L => s <= 0.0,
        Symbol::R => s >= 0.0,
    };
    Ok(FixedPointInfo { x_star: x.iter().copied().collect(), s_star: s, side, admissible })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleMatrices {
    pub m: Mat,
    pub p: Mat,
    pub det_i_minus_m: f64,
    pub det_p: f64,
    pub varrho_s: Vector,
}

/// `M_S = A_{S_{n-1}} ... A_{S_0}` and `P_S = I + A_{S_{n-1}} + ... + A_{S_{n-1}} ... A_{S_1}`.
pub fn cycle_matrices(map: &PwsMap, word: &SymbolWord) -> CycleMatrices {
    let n = map.dim();
    let id = Mat::identity(n, n);
    let syms = word.symbols();
    let mut p = id.clone();
    let mut tail = id.clone();
    for &s in syms[1..].iter().rev() {
        tail *= map.a(s);
        p += &tail;
    }
    let m = &tail * map.a(syms[0]);
    let i_minus_m = &id - &m;
    CycleMatrices { det_i_minus_m: det(&i_minus_m), det_p: det(&p), varrho_s: adjugate_first_row(&i_minus_m), m, p }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attracting,
    Saddle,
    Repelling,
    Nonhyperbolic,
}

pub fn classify_stability(multipliers: &[Complex64]) -> Stability {
    let inside = multipliers.iter().filter(|z| z.norm() < 1.0 - HYPERBOLIC_MARGIN).count();
    let outside = multipliers.iter().filter(|z| z.norm() > 1.0 + HYPERBOLIC_MARGIN).count();
    let k = multipliers.len();
    if inside == k {
        Stability::Attracting
    } else if outside == k {
        Stability::Repelling
    } else if inside + outside == k {
        Stability::Saddle
    } else {
        Stability::Nonhyperbolic
    }
}

/// An `S`-cycle: points generated by applying the half-maps in word order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub word: SymbolWord,
    pub points: Vec<Vector>,
    pub s_values: Vec<f64>,
    pub admissible: bool,
    pub violations: Vec<usize>,
    pub multipliers: Vec<Complex64>,
    pub stability: Stability,
    /// `D f^S` at `x_0`
    pub jacobian: Mat,
    /// `det(I - D f^S)`
    pub det_i_minus_df: f64,
    /// `|f^S(x_0) - x_0|_max`
    pub residual: f64,
}

#[derive(Serialize)]
struct CycleJson<'a> {
    word: &'a SymbolWord,
    points: Vec<Vec<f64>>,
    s_values: &'a [f64],
    admissible: bool,
    violations: &'a [usize],
    multipliers: Vec<[f64; 2]>,
    stability: Stability,
    det_i_minus_df: f64,
    residual: f64,
}

impl Serialize for Cycle {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CycleJson {
            word: &self.word,
            points: self.points.iter().map(|p| p.iter().copied().collect()).collect(),
            s_values: &self.s_values,
            admissible: self.admissible,
            violations: &self.violations,
            multipliers: self.multipliers.iter().map(|z| [z.re, z.im]).collect(),
            stability: self.stability,
            det_i_minus_df: self.det_i_minus_df,
            residual: self.residual,
        }
        .serialize(serializer)
    }
}

/// Orbit of `x0` under the half-maps in word order. Returns the `n` cycle
/// points, the image after one full word, and `D f^S(x0)`.
pub fn compose(map: &PwsMap, word: &SymbolWord, x0: &Vector) -> (Vec<Vector>, Vector, Mat) {
    let n = map.dim();
    let mut points = Vec::with_capacity(word.len());
    let mut x = x0.clone();
    let mut jac = Mat::identity(n, n);
    for &s in word.symbols() {
        let dj = map.half_jacobian(s, &x);
        let next = map.half_evaluate(s, &x);
        jac = dj * jac;
        points.push(std::mem::replace(&mut x, next));
    }
    (points, x, jac)
}

/// Sign check: `S_i = L` needs `s_i <= 0`, `S_i = R` needs `s_i >= 0`;
/// points with `|s_i| <= tol_zero` impose no restriction.
pub fn admissibility(word: &SymbolWord, s_values: &[f64], tol_zero: f64) -> (bool, Vec<usize>) {
    let violations: Vec<usize> = word
        .symbols()
        .iter()
        .zip(s_values)
        .enumerate()
        .filter(|(_, (&sym, &s))| {
            s.abs() > tol_zero
                && match sym {
                    Symbol::L => s > 0.0,
                    Symbol::R => s < 0.0,
                }
        })
        .map(|(i, _)| i)
        .collect();
    (violations.is_empty(), violations)
}

/// Builds the cycle record for a given `x_0`.
pub fn cycle_from_point(map: &PwsMap, word: &SymbolWord, x0: &Vector, tol_zero: f64) -> Cycle {
    let (points, end, jacobian) = compose(map, word, x0);
    let residual = (&end - x0).amax();
    let s_values: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let (admissible, violations) = admissibility(word, &s_values, tol_zero);
    let multipliers = eigenvalues(&jacobian);
    let stability = classify_stability(&multipliers);
    let n = map.dim();
    let det_i_minus_df = det(&(Mat::identity(n, n) - &jacobian));
    Cycle {
        word: word.clone(),
        points,
        s_values,
        admissible,
        violations,
        multipliers,
        stability,
        jacobian,
        det_i_minus_df,
        residual,
    }
}

/// Closed-form cycle of a piecewise-linear map:
/// `x_0 = (I - M_S)^{-1} P_S b mu`, cross-checked against
/// `s_0 = det(P_S) / det(I - M_S) * varrho^T b * mu`.
pub fn linear_cycle(map: &PwsMap, word: &SymbolWord) -> Result<Cycle> {
    if !map.is_piecewise_linear() {
        return Err(Error::NotPiecewiseLinear);
    }
    let n = map.dim();
    let cm = cycle_matrices(map, word);
    let i_minus_m = Mat::identity(n, n) - &cm.m;
    if is_singular(&i_minus_m, SINGULAR_TOL) {
        return Err(Error::Singular { what: "I - M_S".into(), det: cm.det_i_minus_m });
    }
    let rhs = &cm.p * map.b() * map.mu();
    let x0 = linalg::solve(&i_minus_m, &rhs).ok_or(Error::Singular { what: "I - M_S".into(), det: cm.det_i_minus_m })?;
    let varrho = varrho_row(map)?;
    let s_closed = cm.det_p / cm.det_i_minus_m * varrho.dot(map.b()) * map.mu();
    let scale = s_closed.abs().max(x0.amax()).max(f64::MIN_POSITIVE);
    if (s_closed - x0[0]).abs() > 1e-9 * scale {
        return Err(Error::CrossCheck(format!(
            "s_0 = {} from the linear solve but {} from the determinant formula",
            x0[0], s_closed
        )));
    }
    Ok(cycle_from_point(map, word, &x0, DEFAULT_TOL_ZERO))
}

/// Newton iteration on `f^S(x) - x = 0`.
pub fn newton_cycle(map: &PwsMap, word: &SymbolWord, x0_guess: &Vector, tol: f64, max_iter: usize) -> Result<Cycle> {
    let n = map.dim();
    let id = Mat::identity(n, n);
    let mut x = x0_guess.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        let (_, end, jac) = compose(map, word, &x);
        let f = &end - &x;
        residual = f.amax();
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(cycle_from_point(map, word, &x, DEFAULT_TOL_ZERO));
        }
        let j = jac - &id;
        let d = det(&j);
        if d.abs() < SINGULAR_TOL * det_scale(&j) {
            return Err(Error::RankDeficient { det: d });
        }
        match linalg::solve(&j, &f) {
            Some(dx) => x -= dx,
            None => return Err(Error::RankDeficient { det: d }),
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeiginClass {
    Fold,
    Persistence,
    Degenerate,
}

/// Border-collision type of the fixed points from the signs of `det(I - A_J)`.
pub fn feigin_classify(map: &PwsMap) -> FeiginClass {
    let n = map.dim();
    let id = Mat::identity(n, n);
    let il = &id - map.a(Symbol::L);
    let ir = &id - map.a(Symbol::R);
    let rb = adjugate_first_row(&il).dot(map.b());
    if rb.abs() < SINGULAR_TOL * det_scale(&il) {
        return FeiginClass::Degenerate;
    }
    if det(&il) * det(&ir) < 0.0 {
        FeiginClass::Fold
    } else {
        FeiginClass::Persistence
    }
}

/// `max_j |det(I - D f^{S^(j)}(x_j)) - det(I - D f^S(x_0))|`.
pub fn cyclic_det_check(map: &PwsMap, cycle: &Cycle) -> f64 {
    let n = map.dim();
    let id = Mat::identity(n, n);
    let base = det(&(&id - &cycle.jacobian));
    (1..cycle.word.len())
        .map(|j| {
            let shifted = cycle.word.cyclic_shift(j as i64);
            let (_, _, jac) = compose(map, &shifted, &cycle.points[j]);
            (det(&(&id - jac)) - base).abs()
        })
        .fold(0.0, f64::max)
}

/// Bisection in `mu` for the point where a cycle of `word` stops being
/// admissible. The cycle is followed by Newton from `mu_start` (where it must
/// be admissible) in steps of `step`, then the bracket is bisected to `tol`.
pub fn admissibility_loss_mu(
    map_at: impl Fn(f64) -> PwsMap,
    word: &SymbolWord,
    seed: &Vector,
    mu_start: f64,
    mu_max: f64,
    step: f64,
    tol: f64,
) -> Result<f64> {
    let solve = |mu: f64, guess: &Vector| newton_cycle(&map_at(mu), word, guess, 1e-12, 50);
    let mut cyc = solve(mu_start, seed)?;
    if !cyc.admissible {
        return Err(Error::Hypothesis(format!("cycle {} is not admissible at mu = {mu_start}", word)));
    }
    let mut lo = mu_start;
    let mut hi = None;
    let mut h = step;
    while lo < mu_max {
        let mu = (lo + h).min(mu_max);
        let guess = &cyc.points[0] * (mu / lo);
        match solve(mu, &guess) {
            Ok(next) if !next.admissible => {
                hi = Some(mu);
                break;
            }
            Ok(next) => {
                cyc = next;
                lo = mu;
            }
            // overshot a fold of the cycle; shorten the step
            Err(_) if h > tol => h *= 0.5,
            Err(e) => return Err(e),
        }
    }
    let mut hi = hi.ok_or_else(|| Error::NoRoot(format!("cycle stays admissible up to mu = {mu_max}")))?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let next = solve(mid, &(&cyc.points[0] * (mid / lo)))?;
        if next.admissible {
            cyc = next;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

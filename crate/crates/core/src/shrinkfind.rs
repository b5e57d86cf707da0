//! Shrinking points of rotational tongues: location, cycle structure at the
//! point, and the derivative `k0` that controls the nonlinear unfolding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::continuation::newton_fd;
use crate::cyclealg::{admissibility, compose, cycle_matrices, linear_cycle, newton_cycle};
use crate::error::{Error, Result};
use crate::linalg::{det, det_scale, eigenvalues, Mat, Vector};
use crate::mapmodel::{ParamName, ParamPlane, PwsMap};
use crate::symbolic::{RotationalParams, Symbol, SymbolWord};

/// Threshold below which `det(I - M)` of the flipped words counts as singular.
pub const DELTA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl SearchBox {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x[0] && px <= self.x[1] && py >= self.y[0] && py <= self.y[1]
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkSettings {
    /// candidate seeds per axis for the multistart fallback
    pub grid: usize,
    pub newton_max_iter: usize,
    /// accept a root when both normalized determinants are below this
    pub root_tol: f64,
    /// centered difference step in `mu` for `k0`
    pub k0_step: f64,
}

impl ShrinkSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.root_tol > 0.0) || !(self.k0_step > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("root_tol and k0_step must be positive and newton_max_iter nonzero".into()));
        }
        Ok(())
    }
}

impl Default for ShrinkSettings {
    fn default() -> Self {
        Self { grid: 12, newton_max_iter: 60, root_tol: 1e-12, k0_step: 1e-4 }
    }
}

/// `det P_S` and `det P_{S^((l-1)d)}` of the piecewise-linear part, each
/// divided by `max(1, |P|_max)^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShrinkResidual {
    pub det_p: f64,
    pub det_p_shifted: f64,
    /// a half-map has a multiplier on the unit circle (tongue endpoint)
    pub terminating: bool,
}

fn rotational(word: &SymbolWord) -> Result<RotationalParams> {
    let rp = word.rotational_params().ok_or_else(|| Error::InvalidWord(format!("{word} carries no rotational parameters")))?;
    if rp.l < 2 || rp.l + 2 > rp.n {
        return Err(Error::InvalidWord(format!("shrinking points need 2 <= l <= n - 2, got l = {}, n = {}", rp.l, rp.n)));
    }
    Ok(rp)
}

fn normalized_det(p: &Mat) -> f64 {
    det(p) / det_scale(p)
}

fn near_unit_circle(a: &Mat) -> bool {
    eigenvalues(a).iter().any(|z| (z.norm() - 1.0).abs() < 1e-6)
}

pub fn shrink_residual(plane: &ParamPlane, px: f64, py: f64, word: &SymbolWord) -> Result<ShrinkResidual> {
    let rp = rotational(word)?;
    let map = plane.map_at(px, py, 0.0).linear_part();
    let shifted = word.cyclic_shift(((rp.l - 1) * rp.d) as i64);
    Ok(ShrinkResidual {
        det_p: normalized_det(&cycle_matrices(&map, word).p),
        det_p_shifted: normalized_det(&cycle_matrices(&map, &shifted).p),
        terminating: near_unit_circle(map.a(Symbol::L)) || near_unit_circle(map.a(Symbol::R)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkResiduals {
    pub det_p: f64,
    pub det_p_shifted: f64,
    pub t0: f64,
    pub t_ld: f64,
    pub det_i_minus_m: f64,
    /// normalized `det P_{S^(i)}` for `i = 0..n`
    pub cyclic_det_p: Vec<f64>,
}

impl ShrinkResiduals {
    pub fn max_abs(&self) -> f64 {
        [self.det_p, self.det_p_shifted, self.t0, self.t_ld, self.det_i_minus_m]
            .iter()
            .chain(&self.cyclic_det_p)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkingPointReport {
    pub word: SymbolWord,
    pub rotational: RotationalParams,
    pub plane: ParamPlane,
    pub location: [f64; 2],
    pub check_word: SymbolWord,
    pub hat_word: SymbolWord,
    /// points of the renormalized cycle at `mu = 0`
    pub y_points: Vec<Vec<f64>>,
    /// `t_i = e_1 . y_i` for every `i`
    pub t_values: Vec<f64>,
    /// `t` at the indices `0, d, (l-1)d, ld, (l+1)d, -d`
    pub t_named: BTreeMap<String, f64>,
    pub delta_check: f64,
    pub delta_hat: f64,
    /// kernel direction of `I - M_S`, `(y_d - y_0) / t_d`
    pub kernel_v: Vec<f64>,
    /// mu-derivative of `det(I - D f^S)` at the check-cycle, following the
    /// common boundary point
    pub k0: f64,
    /// same derivative with the two plane parameters held at `location`
    pub k0_pinned: f64,
    /// relative change of `k0` between step `h` and `h / 2`
    pub k0_richardson: f64,
    /// whether `sgn(k0) = sgn(delta_check)`
    pub mu_sign_condition_holds: bool,
    pub residuals: ShrinkResiduals,
    pub min_pairwise_distance: f64,
    pub checks: Vec<Check>,
}

impl ShrinkingPointReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn t(&self, k: i64) -> f64 {
        let n = self.rotational.n;
        self.t_values[self.rotational.index(k) % n]
    }

    pub fn y(&self, k: i64) -> Vector {
        Vector::from_vec(self.y_points[self.rotational.index(k)].clone())
    }
}

/// Point where the check-cycle has `s_0 = s_{ld} = 0` at a given `mu`, in
/// renormalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonPoint {
    pub px: f64,
    pub py: f64,
    pub z0: Vector,
}

impl CommonPoint {
    fn pack(&self) -> Vector {
        let mut u = Vector::zeros(self.z0.len() + 2);
        u[0] = self.px;
        u[1] = self.py;
        u.rows_mut(2, self.z0.len()).copy_from(&self.z0);
        u
    }

    fn unpack(u: &Vector) -> Self {
        Self { px: u[0], py: u[1], z0: u.rows(2, u.len() - 2).into_owned() }
    }
}

/// Solves `h^{S'}(z) = z, e_1 . z_0 = 0, e_1 . z_{ld} = 0` with `S' = flip(S, 0)`
/// for the plane parameters and `z`.
pub fn common_point(plane: &ParamPlane, word: &SymbolWord, mu: f64, guess: &CommonPoint) -> Result<CommonPoint> {
    let rp = rotational(word)?;
    let check = word.flip(0);
    let ld = rp.index(rp.l as i64);
    let n = guess.z0.len();
    let f = |u: &Vector| {
        let cp = CommonPoint::unpack(u);
        let map = plane.map_at(cp.px, cp.py, mu).renormalized();
        let (pts, end, _) = compose(&map, &check, &cp.z0);
        let mut r = Vector::zeros(n + 2);
        r.rows_mut(0, n).copy_from(&(end - &cp.z0));
        r[n] = cp.z0[0];
        r[n + 1] = pts[ld][0];
        Some(r)
    };
    newton_fd(&f, &guess.pack(), 1e-13, 40).map(|u| CommonPoint::unpack(&u))
}

/// `det(I - D h^S(z_0))` of the renormalized map.
pub fn saddle_node_function(map: &PwsMap, word: &SymbolWord, z0: &Vector) -> f64 {
    let n = map.dim();
    let (_, _, jac) = compose(map, word, z0);
    det(&(Mat::identity(n, n) - jac))
}

fn k0_along_axis(plane: &ParamPlane, word: &SymbolWord, start: &CommonPoint, h: f64) -> Result<f64> {
    let eval = |mu: f64| -> Result<f64> {
        let cp = common_point(plane, word, mu, start)?;
        Ok(saddle_node_function(&plane.map_at(cp.px, cp.py, mu).renormalized(), word, &cp.z0))
    };
    Ok((eval(h)? - eval(-h)?) / (2.0 * h))
}

fn k0_pinned(plane: &ParamPlane, word: &SymbolWord, start: &CommonPoint, h: f64) -> Result<f64> {
    let check = word.flip(0);
    let eval = |mu: f64| -> Result<f64> {
        let map = plane.map_at(start.px, start.py, mu).renormalized();
        let c = newton_cycle(&map, &check, &start.z0, 1e-14, 40)?;
        Ok(saddle_node_function(&map, word, &c.points[0]))
    };
    Ok((eval(h)? - eval(-h)?) / (2.0 * h))
}

/// Cycle data and checks at given plane coordinates, without root finding.
pub fn build_report(
    plane: &ParamPlane,
    word: &SymbolWord,
    px: f64,
    py: f64,
    settings: &ShrinkSettings,
) -> Result<ShrinkingPointReport> {
    let rp = rotational(word)?;
    let n = rp.n;
    let res = shrink_residual(plane, px, py, word)?;
    let lin = plane.map_at(px, py, 0.0).linear_part().with_mu(1.0);
    let check_word = word.flip(0);
    let hat_word = word.flip(rp.index(rp.l as i64) as i64);
    let dim = lin.dim();
    let id = Mat::identity(dim, dim);
    let delta_check = det(&(&id - cycle_matrices(&lin, &check_word).m));
    let delta_hat = det(&(&id - cycle_matrices(&lin, &hat_word).m));
    if delta_check.abs() < DELTA_TOL || delta_hat.abs() < DELTA_TOL {
        return Err(Error::Hypothesis(format!(
            "det(I - M) of the flipped words must be nonzero (got {delta_check:.3e} and {delta_hat:.3e})"
        )));
    }
    let ycyc = linear_cycle(&lin, &check_word)?;
    let t_values: Vec<f64> = ycyc.s_values.clone();
    let t = |k: i64| t_values[rp.index(k)];
    let l = rp.l as i64;
    let mut t_named = BTreeMap::new();
    for (name, k) in [("0", 0), ("d", 1), ("(l-1)d", l - 1), ("ld", l), ("(l+1)d", l + 1), ("-d", -1)] {
        t_named.insert(name.to_string(), t(k));
    }
    let y0 = &ycyc.points[0];
    let yd = &ycyc.points[rp.index(1)];
    let kernel_v: Vec<f64> = ((yd - y0) / t(1)).iter().copied().collect();

    let cyclic_det_p: Vec<f64> = (0..n).map(|i| normalized_det(&cycle_matrices(&lin, &word.cyclic_shift(i as i64)).p)).collect();
    let i_minus_m = &id - cycle_matrices(&lin, word).m;
    let residuals = ShrinkResiduals {
        det_p: res.det_p,
        det_p_shifted: res.det_p_shifted,
        t0: t(0),
        t_ld: t(l),
        det_i_minus_m: normalized_det(&i_minus_m),
        cyclic_det_p,
    };

    let mut min_dist = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            min_dist = min_dist.min((&ycyc.points[i] - &ycyc.points[j]).norm());
        }
    }

    let start = CommonPoint { px, py, z0: y0.clone() };
    let h = settings.k0_step;
    let (k0, k0_half, k0_pin) = match (
        k0_along_axis(plane, word, &start, h),
        k0_along_axis(plane, word, &start, 0.5 * h),
        k0_pinned(plane, word, &start, h),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        _ => (f64::NAN, f64::NAN, f64::NAN),
    };
    let k0_richardson = ((k0 - k0_half) / k0_half).abs();

    let (adm, _) = admissibility(word, &t_values, 1e-8);
    let tol = 1e-8;
    let checks = vec![
        Check { name: "t0_zero".into(), passed: t(0).abs() <= tol, value: t(0) },
        Check { name: "t_ld_zero".into(), passed: t(l).abs() <= tol, value: t(l) },
        Check { name: "det_p_singular".into(), passed: res.det_p.abs() <= tol, value: res.det_p },
        Check { name: "det_p_shifted_singular".into(), passed: res.det_p_shifted.abs() <= tol, value: res.det_p_shifted },
        Check {
            name: "det_i_minus_m_singular".into(),
            passed: residuals.det_i_minus_m.abs() <= tol,
            value: residuals.det_i_minus_m,
        },
        Check {
            name: "all_cyclic_det_p_singular".into(),
            passed: residuals.cyclic_det_p.iter().all(|v| v.abs() <= tol),
            value: residuals.cyclic_det_p.iter().fold(0.0, |m, v| m.max(v.abs())),
        },
        Check { name: "non_terminating".into(), passed: !res.terminating, value: if res.terminating { 1.0 } else { 0.0 } },
        Check { name: "cycle_admissible".into(), passed: adm, value: if adm { 1.0 } else { 0.0 } },
        Check { name: "minimal_period".into(), passed: min_dist > 1e-6, value: min_dist },
        Check { name: "t_d_negative".into(), passed: t(1) < 0.0, value: t(1) },
        Check { name: "t_(l-1)d_negative".into(), passed: t(l - 1) < 0.0, value: t(l - 1) },
        Check { name: "t_-d_positive".into(), passed: t(-1) > 0.0, value: t(-1) },
        Check { name: "t_(l+1)d_positive".into(), passed: t(l + 1) > 0.0, value: t(l + 1) },
    ];

    Ok(ShrinkingPointReport {
        word: word.clone(),
        rotational: rp,
        plane: *plane,
        location: [px, py],
        check_word,
        hat_word,
        y_points: ycyc.points.iter().map(|p| p.iter().copied().collect()).collect(),
        t_values,
        t_named,
        delta_check,
        delta_hat,
        kernel_v,
        k0,
        k0_pinned: k0_pin,
        k0_richardson,
        mu_sign_condition_holds: k0.signum() == delta_check.signum(),
        residuals,
        min_pairwise_distance: min_dist,
        checks,
    })
}

fn newton_root(
    plane: &ParamPlane,
    word: &SymbolWord,
    start: (f64, f64),
    bx: &SearchBox,
    settings: &ShrinkSettings,
) -> Option<(f64, f64)> {
    let f = |u: &Vector| {
        let r = shrink_residual(plane, u[0], u[1], word).ok()?;
        Some(Vector::from_vec(vec![r.det_p, r.det_p_shifted]))
    };
    let u = newton_fd(&f, &Vector::from_vec(vec![start.0, start.1]), settings.root_tol, settings.newton_max_iter).ok()?;
    bx.contains(u[0], u[1]).then_some((u[0], u[1]))
}

/// Locates a shrinking point of `word` inside `bx`.
///
/// Newton from the box center first; if that fails or leaves the box,
/// Newton from the best points of a `grid x grid` sample. Roots that fail the
/// nondegeneracy or admissibility conditions are skipped in favour of later
/// candidates.
pub fn find_shrinking_point(
    plane: &ParamPlane,
    word: &SymbolWord,
    bx: &SearchBox,
    settings: &ShrinkSettings,
) -> Result<ShrinkingPointReport> {
    rotational(word)?;
    settings.validate()?;
    if !(bx.x[0] < bx.x[1] && bx.y[0] < bx.y[1]) {
        return Err(Error::InvalidParameter(format!("empty search box {bx:?}")));
    }
    let g = settings.grid.max(2);
    let mut seeds = vec![bx.center()];
    let mut samples = Vec::new();
    for i in 0..g {
        for j in 0..g {
            let px = bx.x[0] + (bx.x[1] - bx.x[0]) * (i as f64 + 0.5) / g as f64;
            let py = bx.y[0] + (bx.y[1] - bx.y[0]) * (j as f64 + 0.5) / g as f64;
            if let Ok(r) = shrink_residual(plane, px, py, word) {
                samples.push((r.det_p.abs() + r.det_p_shifted.abs(), px, py));
            }
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds.extend(samples.iter().map(|s| (s.1, s.2)));

    let mut tried: Vec<(f64, f64)> = Vec::new();
    let mut first_err = None;
    for seed in seeds {
        let Some(root) = newton_root(plane, word, seed, bx, settings) else { continue };
        if tried.iter().any(|r| (r.0 - root.0).abs() < 1e-9 && (r.1 - root.1).abs() < 1e-9) {
            continue;
        }
        tried.push(root);
        let res = shrink_residual(plane, root.0, root.1, word)?;
        if res.terminating {
            first_err.get_or_insert(Error::Hypothesis(format!("root at {root:?} is a terminating point")));
            continue;
        }
        match build_report(plane, word, root.0, root.1, settings) {
            Ok(rep) if rep.checks.iter().any(|c| c.name == "cycle_admissible" && !c.passed) => {
                first_err.get_or_insert(Error::Hypothesis(format!("cycle at {root:?} is not admissible")));
            }
            Ok(rep) => return Ok(rep),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| Error::NoRoot(format!("no common zero of det P_S and det P_S^((l-1)d) in {bx:?}"))))
}

/// `|d/d' + t_d t_{(l-1)d} / (t_{-d} t_{(l+1)d})| / |d/d'|` with `d`, `d'`
/// the determinants of the two flipped words.
pub fn delta_ratio_residual(report: &ShrinkingPointReport) -> Result<f64> {
    let l = report.rotational.l as i64;
    let ts = [report.t(1), report.t(l - 1), report.t(-1), report.t(l + 1)];
    if ts.iter().any(|v| v.abs() < 1e-12) {
        return Err(Error::Hypothesis(format!("t-values too small for the ratio: {ts:?}")));
    }
    let ratio = report.delta_check / report.delta_hat;
    Ok((ratio + ts[0] * ts[1] / (ts[2] * ts[3])).abs() / ratio.abs())
}

/// Plane of the example family used throughout: coupled `omega` against `s_R`.
pub fn default_plane(base: crate::mapmodel::ExampleParams) -> ParamPlane {
    ParamPlane::new(base, ParamName::Omega, ParamName::SR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapmodel::ExampleParams;
    use approx::assert_relative_eq;

    fn plane(c: f64) -> ParamPlane {
        default_plane(ExampleParams { r_l: 0.2, s_r: 0.9, omega_l: 0.28, omega_r: 0.28, mu: 0.0, c })
    }

    fn first_point(c: f64) -> ShrinkingPointReport {
        let word = SymbolWord::rotational(2, 2, 7).unwrap();
        let bx = SearchBox { x: [0.28, 0.295], y: [0.86, 0.90] };
        find_shrinking_point(&plane(c), &word, &bx, &ShrinkSettings::default()).unwrap()
    }

    #[test]
    fn locates_first_point() {
        let rep = first_point(1.0);
        assert_relative_eq!(rep.location[0], 0.28796434, epsilon = 1e-7);
        assert_relative_eq!(rep.location[1], 0.88218691, epsilon = 1e-7);
        assert!(rep.hypotheses_hold(), "{:?}", rep.checks);
        assert!(rep.residuals.max_abs() <= 1e-8);
        assert_eq!(rep.check_word.to_string(), "RRRRLRR");
        assert_eq!(rep.hat_word.to_string(), "LLRRLRR");
        assert_relative_eq!(rep.t(1), -0.5336555, epsilon = 1e-6);
        assert_relative_eq!(rep.t(-1), 0.4643283, epsilon = 1e-6);
        assert_relative_eq!(rep.t(3), 0.4538087, epsilon = 1e-6);
        assert_relative_eq!(rep.delta_check, -1.32667, epsilon = 1e-4);
        assert_relative_eq!(rep.delta_hat, 0.98161, epsilon = 1e-4);
        assert!(delta_ratio_residual(&rep).unwrap() <= 1e-6);
        assert!(rep.k0_richardson <= 1e-4);
    }

    #[test]
    fn kernel_direction_spans_null_space() {
        let rep = first_point(0.0);
        let map = rep.plane.map_at(rep.location[0], rep.location[1], 0.0).linear_part();
        let m = cycle_matrices(&map, &rep.word).m;
        let v = Vector::from_vec(rep.kernel_v.clone());
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-10);
        assert!((&m * &v - &v).amax() < 1e-8);
    }

    #[test]
    fn common_point_at_zero_mu_is_the_shrinking_point() {
        let rep = first_point(1.0);
        let start = CommonPoint { px: rep.location[0], py: rep.location[1], z0: rep.y(0) };
        let cp = common_point(&rep.plane, &rep.word, 0.0, &start).unwrap();
        assert!((cp.px - rep.location[0]).abs() < 1e-10);
        assert!((cp.py - rep.location[1]).abs() < 1e-10);
        let cp = common_point(&rep.plane, &rep.word, 0.125, &start).unwrap();
        assert_relative_eq!(cp.px, 0.286694, epsilon = 2e-6);
        assert_relative_eq!(cp.py, 0.883457, epsilon = 2e-6);
    }

    #[test]
    fn locates_second_point() {
        let word = SymbolWord::rotational(3, 2, 7).unwrap();
        let bx = SearchBox { x: [0.26, 0.29], y: [0.35, 0.45] };
        let rep = find_shrinking_point(&plane(1.0), &word, &bx, &ShrinkSettings::default()).unwrap();
        assert_relative_eq!(rep.location[0], 0.27326778, epsilon = 1e-7);
        assert_relative_eq!(rep.location[1], 0.39188731, epsilon = 1e-7);
        assert!(rep.hypotheses_hold(), "{:?}", rep.checks);
        assert!(delta_ratio_residual(&rep).unwrap() <= 1e-6);
    }

    #[test]
    fn residual_examples() {
        let word = SymbolWord::rotational(2, 2, 7).unwrap();
        let r = shrink_residual(&plane(0.0), 0.287, 0.95, &word).unwrap();
        assert!(r.det_p.abs() > 1e-4 && r.det_p_shifted.abs() > 1e-4);
        assert!(!r.terminating);
        let end = shrink_residual(&plane(0.0), 2.0 / 7.0, 1.0, &word).unwrap();
        assert!(end.terminating);
        assert!(shrink_residual(&plane(0.0), 0.28, 0.9, &SymbolWord::rotational(1, 2, 7).unwrap()).is_err());
    }

    #[test]
    fn off_point_ratio_residual_grows_linearly() {
        let rep = first_point(0.0);
        let s = ShrinkSettings::default();
        let at = |e: f64| {
            delta_ratio_residual(&build_report(&rep.plane, &rep.word, rep.location[0] + e, rep.location[1], &s).unwrap()).unwrap()
        };
        let (a, b, c) = (at(1e-6), at(2e-6), at(4e-6));
        assert!(a > 1e-8);
        assert!((b / a - 2.0).abs() < 0.1, "{a} {b} {c}");
        assert!((c / b - 2.0).abs() < 0.1, "{a} {b} {c}");
    }

    #[test]
    fn empty_box_has_no_root() {
        let word = SymbolWord::rotational(2, 2, 7).unwrap();
        let bx = SearchBox { x: [0.20, 0.21], y: [0.50, 0.52] };
        assert!(matches!(find_shrinking_point(&plane(0.0), &word, &bx, &ShrinkSettings::default()), Err(Error::NoRoot(_))));
    }
}

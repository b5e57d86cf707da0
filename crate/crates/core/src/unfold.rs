//! Border-collision and saddle-node curves near a shrinking point for small
//! `mu > 0`, and checks of the resulting region structure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{continue_curve, newton_fd, null_direction, ContinuationSettings, StopReason};
use crate::cyclealg::{admissibility, compose, newton_cycle, Cycle};
use crate::error::{Error, Result};
use crate::linalg::{det, eigenvalues, Mat, Vector};
use crate::mapmodel::{ParamPlane, PwsMap};
use crate::shrinkfind::{common_point, CommonPoint, ShrinkingPointReport};
use crate::symbolic::SymbolWord;

const TOL_ZERO: f64 = 1e-9;

/// The four border-collision curves through the common point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveId {
    /// check-word cycle, point `0` on the switching manifold
    CheckZero,
    /// check-word cycle, point `ld`
    CheckLd,
    /// hat-word cycle, point `ld`
    HatLd,
    /// hat-word cycle, point `0`
    HatZero,
}

impl CurveId {
    pub const ALL: [CurveId; 4] = [CurveId::CheckZero, CurveId::CheckLd, CurveId::HatLd, CurveId::HatZero];

    pub fn label(self) -> &'static str {
        match self {
            CurveId::CheckZero => "check_0",
            CurveId::CheckLd => "check_ld",
            CurveId::HatLd => "hat_ld",
            CurveId::HatZero => "hat_0",
        }
    }

    pub fn is_check(self) -> bool {
        matches!(self, CurveId::CheckZero | CurveId::CheckLd)
    }

    /// Word whose cycle is traced and the index of the point held on `s = 0`.
    pub fn word_and_index(self, rep: &ShrinkingPointReport) -> (SymbolWord, usize) {
        let ld = rep.rotational.index(rep.rotational.l as i64);
        match self {
            CurveId::CheckZero => (rep.check_word.clone(), 0),
            CurveId::CheckLd => (rep.check_word.clone(), ld),
            CurveId::HatLd => (rep.hat_word.clone(), ld),
            CurveId::HatZero => (rep.hat_word.clone(), 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnfoldSettings {
    pub continuation: ContinuationSettings,
    /// parameter-space radius of the boundary traces; `None` gives `0.25 mu + 0.01`
    pub trace_radius: Option<f64>,
    pub tangency_tol: f64,
    pub intersection_tol: f64,
    /// parameter offset used to probe either side of saddle-node samples
    pub sn_probe_offset: f64,
    /// number of saddle-node samples that are probed
    pub sn_probe_count: usize,
}

impl Default for UnfoldSettings {
    fn default() -> Self {
        Self {
            continuation: ContinuationSettings::default(),
            trace_radius: None,
            tangency_tol: 1e-3,
            intersection_tol: 1e-6,
            sn_probe_offset: 1e-5,
            sn_probe_count: 5,
        }
    }
}

impl UnfoldSettings {
    pub fn validate(&self) -> Result<()> {
        self.continuation.validate()?;
        let pos = [self.tangency_tol, self.intersection_tol, self.sn_probe_offset];
        if pos.iter().any(|v| !(*v > 0.0)) || self.trace_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::InvalidParameter("unfolding tolerances and radius must be positive".into()));
        }
        Ok(())
    }

    pub fn radius(&self, mu: f64) -> f64 {
        self.trace_radius.unwrap_or(0.25 * mu.abs() + 0.01)
    }
}

fn pack(p: [f64; 2], z: &Vector) -> Vector {
    let mut u = Vector::zeros(z.len() + 2);
    u[0] = p[0];
    u[1] = p[1];
    u.rows_mut(2, z.len()).copy_from(z);
    u
}

fn params(u: &Vector) -> [f64; 2] {
    [u[0], u[1]]
}

fn state(u: &Vector) -> Vector {
    u.rows(2, u.len() - 2).into_owned()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Renormalized map at plane coordinates `p`.
fn rmap(plane: &ParamPlane, p: [f64; 2], mu: f64) -> PwsMap {
    plane.map_at(p[0], p[1], mu).renormalized()
}

fn i_minus(jac: &Mat) -> Mat {
    Mat::identity(jac.nrows(), jac.ncols()) - jac
}

/// `[h^W(z) - z; e_1 . z_j]`
pub fn boundary_residual(plane: &ParamPlane, mu: f64, word: &SymbolWord, j: usize, u: &Vector) -> Vector {
    let z = state(u);
    let n = z.len();
    let (pts, end, _) = compose(&rmap(plane, params(u), mu), word, &z);
    let mut r = Vector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(&(end - &z));
    r[n] = pts[j][0];
    r
}

/// `[h^W(z) - z; det(I - D h^W(z))]`
pub fn saddle_node_residual(plane: &ParamPlane, mu: f64, word: &SymbolWord, u: &Vector) -> Vector {
    let z = state(u);
    let n = z.len();
    let (_, end, jac) = compose(&rmap(plane, params(u), mu), word, &z);
    let mut r = Vector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(&(end - &z));
    r[n] = det(&i_minus(&jac));
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub p: [f64; 2],
    pub z: Vec<f64>,
    /// max of the fixed-point residual and `|s_j|`
    pub residual: f64,
    /// all points other than `j` satisfy the sign rule
    pub admissible: bool,
    /// `det(I - D h)` for the word flipped at `j` (the primary word up to a shift)
    pub sn_function: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ray {
    pub points: Vec<CurvePoint>,
    /// the ray leaves the common point on the admissible side
    pub admissible: bool,
    pub stop: StopReason,
}

impl Ray {
    /// Point at parameter distance `r` from the start, by linear interpolation.
    pub fn at_distance(&self, r: f64) -> Option<([f64; 2], Vector)> {
        let o = self.points[0].p;
        for w in self.points.windows(2) {
            let (d0, d1) = (dist(w[0].p, o), dist(w[1].p, o));
            if d0 <= r && r <= d1 && d1 > d0 {
                let s = (r - d0) / (d1 - d0);
                let p = [w[0].p[0] + s * (w[1].p[0] - w[0].p[0]), w[0].p[1] + s * (w[1].p[1] - w[0].p[1])];
                let z0 = Vector::from_vec(w[0].z.clone());
                let z1 = Vector::from_vec(w[1].z.clone());
                return Some((p, &z0 + (z1 - &z0) * s));
            }
        }
        None
    }

    /// Outward least-squares direction of the `k` points nearest the start.
    pub fn direction(&self, k: usize) -> [f64; 2] {
        let o = self.points[0].p;
        let (mut sxx, mut sxy, mut syy, mut mx, mut my) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for q in self.points.iter().skip(1).take(k) {
            let (dx, dy) = (q.p[0] - o[0], q.p[1] - o[1]);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
            mx += dx;
            my += dy;
        }
        // principal axis of the 2x2 scatter matrix
        let th = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (c, s) = (th.cos(), th.sin());
        if c * mx + s * my < 0.0 {
            [-c, -s]
        } else {
            [c, s]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve {
    pub id: CurveId,
    pub word: SymbolWord,
    pub index: usize,
    pub rays: [Ray; 2],
}

impl BoundaryCurve {
    /// Both rays joined into one polyline through the common point.
    pub fn polyline(&self) -> Vec<&CurvePoint> {
        self.rays[0].points.iter().rev().chain(self.rays[1].points.iter().skip(1)).collect()
    }

    pub fn admissible_ray(&self) -> Option<&Ray> {
        self.rays.iter().find(|r| r.admissible)
    }

    pub fn max_residual(&self) -> f64 {
        self.polyline().iter().fold(0.0, |m, q| m.max(q.residual))
    }
}

fn curve_point(plane: &ParamPlane, mu: f64, word: &SymbolWord, j: usize, u: &Vector) -> CurvePoint {
    let p = params(u);
    let z = state(u);
    let map = rmap(plane, p, mu);
    let (pts, end, _) = compose(&map, word, &z);
    let s: Vec<f64> = pts.iter().map(|q| q[0]).collect();
    let residual = (end - &z).amax().max(s[j].abs());
    let mut masked = s.clone();
    masked[j] = 0.0;
    let (admissible, _) = admissibility(word, &masked, TOL_ZERO);
    let (_, _, jac) = compose(&map, &word.flip(j as i64), &z);
    CurvePoint { p, z: z.iter().copied().collect(), residual, admissible, sn_function: det(&i_minus(&jac)) }
}

/// Traces one boundary curve from the common point in both directions out to `radius`.
pub fn border_collision_trace(
    rep: &ShrinkingPointReport,
    id: CurveId,
    mu: f64,
    o: &CommonPoint,
    radius: f64,
    settings: &ContinuationSettings,
) -> Result<BoundaryCurve> {
    let plane = rep.plane;
    let (word, j) = id.word_and_index(rep);
    let f = |u: &Vector| Some(boundary_residual(&plane, mu, &word, j, u));
    let u0 = pack([o.px, o.py], &o.z0);
    let mut hint = Vector::zeros(u0.len());
    hint[1] = 1.0;
    let d = null_direction(&f, &u0, &hint).ok_or_else(|| Error::Continuation("boundary system not evaluable".into()))?;
    let settings = ContinuationSettings { h_max: settings.h_max.min(radius / 50.0), ..*settings };
    let trace_dir = |dir: Vector| -> Result<Ray> {
        let o_p = [o.px, o.py];
        let mut stop = |u: &Vector| dist(params(u), o_p) > radius;
        let tr = continue_curve(&f, &u0, &dir, &settings, &mut stop)?;
        let points: Vec<CurvePoint> = tr.points.iter().map(|u| curve_point(&plane, mu, &word, j, u)).collect();
        Ok(Ray { points, admissible: false, stop: tr.stop })
    };
    let mut rays = [trace_dir(d.clone())?, trace_dir(-d)?];
    for ray in rays.iter_mut() {
        ray.admissible =
            ray.points.iter().find(|q| dist(q.p, [o.px, o.py]) >= 0.1 * radius).map(|q| q.admissible).unwrap_or(false);
    }
    Ok(BoundaryCurve { id, word, index: j, rays })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangencyPoint {
    pub label: String,
    pub curve: CurveId,
    pub p: [f64; 2],
    pub z: Vec<f64>,
    /// angle in radians between the boundary curve and the saddle-node locus
    pub angle: f64,
    pub residual: f64,
}

fn refine_tangency(plane: &ParamPlane, mu: f64, word: &SymbolWord, j: usize, guess: &Vector) -> Result<Vector> {
    let flipped = word.flip(j as i64);
    let n = guess.len() - 2;
    let f = |u: &Vector| {
        let b = boundary_residual(plane, mu, word, j, u);
        let (_, _, jac) = compose(&rmap(plane, params(u), mu), &flipped, &state(u));
        let mut r = Vector::zeros(n + 2);
        r.rows_mut(0, n + 1).copy_from(&b);
        r[n + 1] = det(&i_minus(&jac));
        Some(r)
    };
    newton_fd(&f, guess, 1e-12, 40)
}

fn line_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    let c = ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).abs().min(1.0);
    let s = ((a[0] * b[1] - a[1] * b[0]) / (na * nb)).abs();
    s.atan2(c)
}

/// Finds the first sign change of the saddle-node function on the admissible
/// ray of `curve` and refines it to a tangency point.
fn find_tangency(rep: &ShrinkingPointReport, mu: f64, curve: &BoundaryCurve) -> Option<(TangencyPoint, Vector)> {
    let ray = curve.admissible_ray()?;
    let pts = &ray.points;
    let k = (2..pts.len()).find(|&k| {
        pts[k - 1].admissible && pts[k].admissible && pts[k - 1].sn_function.signum() != pts[k].sn_function.signum()
    })?;
    let (a, b) = (&pts[k - 1], &pts[k]);
    let s = a.sn_function / (a.sn_function - b.sn_function);
    let p = [a.p[0] + s * (b.p[0] - a.p[0]), a.p[1] + s * (b.p[1] - a.p[1])];
    let za = Vector::from_vec(a.z.clone());
    let z = &za + (Vector::from_vec(b.z.clone()) - &za) * s;
    let u = refine_tangency(&rep.plane, mu, &curve.word, curve.index, &pack(p, &z)).ok()?;
    let plane = rep.plane;
    let bsys = |v: &Vector| Some(boundary_residual(&plane, mu, &curve.word, curve.index, v));
    let flipped = curve.word.flip(curve.index as i64);
    let ssys = |v: &Vector| Some(saddle_node_residual(&plane, mu, &flipped, v));
    let hint = Vector::from_element(u.len(), 1.0);
    let tb = null_direction(&bsys, &u, &hint)?;
    let ts = null_direction(&ssys, &u, &hint)?;
    let angle = line_angle([tb[0], tb[1]], [ts[0], ts[1]]);
    let residual = bsys(&u)?.amax().max(ssys(&u)?.amax());
    Some((
        TangencyPoint {
            label: String::new(),
            curve: curve.id,
            p: params(&u),
            z: state(&u).iter().copied().collect(),
            angle,
            residual,
        },
        u,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnPoint {
    pub p: [f64; 2],
    pub z: Vec<f64>,
    pub det_i_minus_dh: f64,
    pub residual: f64,
    /// one multiplier within 1e-6 of 1, the rest at least 1e-3 from the unit circle
    pub simple_unit_multiplier: bool,
}

fn sn_point(plane: &ParamPlane, mu: f64, word: &SymbolWord, u: &Vector) -> SnPoint {
    let z = state(u);
    let (_, end, jac) = compose(&rmap(plane, params(u), mu), word, &z);
    let ev = eigenvalues(&jac);
    let near_one = ev.iter().filter(|l| (*l - 1.0).norm() <= 1e-6).count();
    let others_ok = ev.iter().filter(|l| (*l - 1.0).norm() > 1e-6).all(|l| (l.norm() - 1.0).abs() >= 1e-3);
    SnPoint {
        p: params(u),
        z: z.iter().copied().collect(),
        det_i_minus_dh: det(&i_minus(&jac)),
        residual: (end - &z).amax(),
        simple_unit_multiplier: near_one == 1 && others_ok,
    }
}

/// Continues the saddle-node locus `{h^S(z) = z, det(I - D h^S(z)) = 0}` from
/// `start` in the parameter direction `toward`, until it has passed its
/// closest approach to `target`.
pub fn saddle_node_trace(
    plane: &ParamPlane,
    mu: f64,
    word: &SymbolWord,
    start: &Vector,
    target: [f64; 2],
    settings: &ContinuationSettings,
) -> Result<(Vec<SnPoint>, f64)> {
    let f = |u: &Vector| Some(saddle_node_residual(plane, mu, word, u));
    let a = params(start);
    let span = dist(a, target);
    if span == 0.0 {
        return Err(Error::NoLocus("tangency points coincide".into()));
    }
    let mut hint = Vector::zeros(start.len());
    hint[0] = target[0] - a[0];
    hint[1] = target[1] - a[1];
    let settings =
        ContinuationSettings { h_max: settings.h_max.min(span / 100.0), h_init: settings.h_init.min(span / 100.0), ..*settings };
    let mut best = f64::INFINITY;
    let mut travelled = 0.0;
    let mut last = a;
    let mut stop = |u: &Vector| {
        let p = params(u);
        travelled += dist(p, last);
        last = p;
        let d = dist(p, target);
        best = best.min(d);
        (best < 0.2 * span && d > best + 0.05 * span) || travelled > 4.0 * span
    };
    let tr = continue_curve(&f, start, &hint, &settings, &mut stop)?;
    let pts: Vec<SnPoint> = tr.points.iter().map(|u| sn_point(plane, mu, word, u)).collect();
    // keep the locus up to the closest approach
    let (kmin, dmin) =
        pts.iter().enumerate().map(|(k, q)| (k, dist(q.p, target))).min_by(|x, y| x.1.total_cmp(&y.1)).expect("non-empty trace");
    let mut kept = pts[..=kmin].to_vec();
    // project onto the locus point whose tangent is normal to the offset from `target`
    let prev = &tr.points[kmin.saturating_sub(1)];
    let next = &tr.points[(kmin + 1).min(tr.points.len() - 1)];
    let tan = [next[0] - prev[0], next[1] - prev[1]];
    let n = start.len() - 2;
    let g = |u: &Vector| {
        let mut r = Vector::zeros(n + 2);
        r.rows_mut(0, n + 1).copy_from(&saddle_node_residual(plane, mu, word, u));
        r[n + 1] = tan[0] * (u[0] - target[0]) + tan[1] * (u[1] - target[1]);
        Some(r)
    };
    let mut closest = dmin;
    if let Ok(u) = newton_fd(&g, &tr.points[kmin], 1e-13, 30) {
        let q = sn_point(plane, mu, word, &u);
        if dist(q.p, target) < dmin {
            closest = dist(q.p, target);
            kept.push(q);
        }
    }
    Ok((kept, closest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    #[serde(rename = "Psi1")]
    Psi1,
    #[serde(rename = "Psi2")]
    Psi2,
    #[serde(rename = "Psi3")]
    Psi3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSummary {
    pub z0: Vec<f64>,
    pub admissible: bool,
    pub det_i_minus_dh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionProbe {
    pub region: Region,
    pub p: [f64; 2],
    /// distinct cycles of the primary word found near the common point
    pub primary_cycles: Vec<CycleSummary>,
    pub check_admissible: bool,
    pub hat_admissible: bool,
    pub matches: bool,
}

impl RegionProbe {
    pub fn admissible_primary(&self) -> usize {
        self.primary_cycles.iter().filter(|c| c.admissible).count()
    }
}

fn summarize(c: &Cycle) -> CycleSummary {
    CycleSummary { z0: c.points[0].iter().copied().collect(), admissible: c.admissible, det_i_minus_dh: c.det_i_minus_df }
}

fn push_distinct(found: &mut Vec<Cycle>, c: Cycle) {
    if found.iter().all(|q| (&q.points[0] - &c.points[0]).amax() > 1e-7) {
        found.push(c);
    }
}

/// Cycles of `word` near `center`, from seeds along `dir`, with deflation of
/// the known roots when fewer than `want` are found.
pub fn find_cycles(map: &PwsMap, word: &SymbolWord, center: &Vector, dir: &Vector, scales: &[f64], want: usize) -> Vec<Cycle> {
    let mut found: Vec<Cycle> = Vec::new();
    for &t in scales {
        for sign in [1.0, -1.0] {
            if let Ok(c) = newton_cycle(map, word, &(center + dir * (sign * t)), 1e-12, 60) {
                push_distinct(&mut found, c);
            }
        }
    }
    if found.len() < want && !found.is_empty() {
        let n = center.len();
        let roots: Vec<Vector> = found.iter().map(|c| c.points[0].clone()).collect();
        let f = |z: &Vector| {
            let (_, end, _) = compose(map, word, z);
            let factor: f64 = roots.iter().map(|r| 1.0 / (z - r).norm_squared() + 1.0).product();
            Some((end - z) * factor)
        };
        for &t in scales {
            for sign in [1.0, -1.0] {
                let seed = center + dir * (sign * t);
                if let Ok(z) = newton_fd(&f, &seed, 1e-12, 60) {
                    if let Ok(c) = newton_cycle(map, word, &z, 1e-12, 20) {
                        push_distinct(&mut found, c);
                    }
                }
                if found.len() >= want {
                    break;
                }
            }
        }
        let _ = n;
    }
    found
}

fn probe(rep: &ShrinkingPointReport, mu: f64, o: &CommonPoint, region: Region, p: [f64; 2]) -> RegionProbe {
    let map = rmap(&rep.plane, p, mu);
    let v = Vector::from_vec(rep.kernel_v.clone());
    let scales = [0.003, 0.01, 0.03, 0.1, 0.3];
    let primary = find_cycles(&map, &rep.word, &o.z0, &v, &scales, 2);
    let adm_of = |w: &SymbolWord| newton_cycle(&map, w, &o.z0, 1e-12, 60).map(|c| c.admissible).unwrap_or(false);
    let check_admissible = adm_of(&rep.check_word);
    let hat_admissible = adm_of(&rep.hat_word);
    let n_adm = primary.iter().filter(|c| c.admissible).count();
    let matches = match region {
        Region::Psi1 => n_adm == 1 && check_admissible && !hat_admissible,
        Region::Psi2 => n_adm == 1 && hat_admissible && !check_admissible,
        Region::Psi3 => {
            let adm: Vec<&Cycle> = primary.iter().filter(|c| c.admissible).collect();
            n_adm == 2 && adm[0].det_i_minus_df * adm[1].det_i_minus_df < 0.0 && !check_admissible && !hat_admissible
        }
    };
    RegionProbe { region, p, primary_cycles: primary.iter().map(summarize).collect(), check_admissible, hat_admissible, matches }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnSideCheck {
    pub p: [f64; 2],
    pub cycles_plus: usize,
    pub cycles_minus: usize,
    pub passed: bool,
}

fn sn_side_check(plane: &ParamPlane, mu: f64, word: &SymbolWord, q: &SnPoint, tangent: [f64; 2], eps: f64) -> SnSideCheck {
    let nrm = tangent[0].hypot(tangent[1]);
    let normal = [-tangent[1] / nrm, tangent[0] / nrm];
    let z = Vector::from_vec(q.z.clone());
    let (_, _, jac) = compose(&rmap(plane, q.p, mu), word, &z);
    let kernel = crate::linalg::null_vector(&i_minus(&jac).remove_row(0));
    let radius = 100.0 * eps.sqrt();
    let count = |sign: f64| {
        let p = [q.p[0] + sign * eps * normal[0], q.p[1] + sign * eps * normal[1]];
        let map = rmap(plane, p, mu);
        let scales: Vec<f64> = [0.3, 1.0, 3.0].iter().map(|s| s * eps.sqrt()).collect();
        find_cycles(&map, word, &z, &kernel, &scales, 2).iter().filter(|c| (&c.points[0] - &z).norm() < radius).count()
    };
    let (plus, minus) = (count(1.0), count(-1.0));
    SnSideCheck { p: q.p, cycles_plus: plus, cycles_minus: minus, passed: (plus == 2 && minus == 0) || (plus == 0 && minus == 2) }
}

/// Crossing the segment from the common point to a tangency point: on one
/// side the flipped-word cycle and one primary cycle are admissible, on the
/// other two primary cycles, and the flipped-word cycle continues into one of
/// them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceCheck {
    pub curve: CurveId,
    pub p: [f64; 2],
    pub offset: f64,
    /// orbit distance from the flipped-word cycle to the nearest primary cycle across the segment
    pub matched_distance: f64,
    /// orbit distance to the other primary cycle
    pub other_distance: f64,
    pub passed: bool,
}

/// Smallest max-distance between two cycles over cyclic alignments.
pub fn orbit_distance(a: &[Vector], b: &[Vector]) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return f64::INFINITY;
    }
    let n = a.len();
    (0..n).map(|k| (0..n).map(|i| (&a[i] - &b[(i + k) % n]).amax()).fold(0.0, f64::max)).fold(f64::INFINITY, f64::min)
}

fn persistence_check(
    rep: &ShrinkingPointReport,
    mu: f64,
    o: &CommonPoint,
    ray: &Ray,
    curve: CurveId,
    r: f64,
) -> Option<PersistenceCheck> {
    let (p, z) = ray.at_distance(r)?;
    let (pn, _) = ray.at_distance(r * 1.01)?;
    let t = [pn[0] - p[0], pn[1] - p[1]];
    let nt = t[0].hypot(t[1]);
    let normal = [-t[1] / nt, t[0] / nt];
    let offset = 1e-3 * r;
    let flipped_word = if curve.is_check() { &rep.check_word } else { &rep.hat_word };
    let v = Vector::from_vec(rep.kernel_v.clone());
    let scales = [0.003, 0.01, 0.03, 0.1, 0.3];
    let side = |sign: f64| {
        let q = [p[0] + sign * offset * normal[0], p[1] + sign * offset * normal[1]];
        let map = rmap(&rep.plane, q, mu);
        let primary: Vec<Cycle> =
            find_cycles(&map, &rep.word, &o.z0, &v, &scales, 2).into_iter().filter(|c| c.admissible).collect();
        let flipped = newton_cycle(&map, flipped_word, &z, 1e-12, 60).ok().filter(|c| c.admissible);
        (primary, flipped)
    };
    let (plus, minus) = (side(1.0), side(-1.0));
    let (one, two) = if plus.0.len() == 1 && plus.1.is_some() && minus.0.len() == 2 && minus.1.is_none() {
        (plus, minus)
    } else if minus.0.len() == 1 && minus.1.is_some() && plus.0.len() == 2 && plus.1.is_none() {
        (minus, plus)
    } else {
        return Some(PersistenceCheck { curve, p, offset, matched_distance: f64::NAN, other_distance: f64::NAN, passed: false });
    };
    let fl = one.1.expect("checked");
    let d: Vec<f64> = two.0.iter().map(|c| orbit_distance(&fl.points, &c.points)).collect();
    let (matched, other) = if d[0] <= d[1] { (d[0], d[1]) } else { (d[1], d[0]) };
    Some(PersistenceCheck { curve, p, offset, matched_distance: matched, other_distance: other, passed: matched < 0.1 * other })
}

/// Least-squares fit `y = a x + b x^2` of one boundary curve in the local
/// coordinates given by the check-cycle points `0` and `ld`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFit {
    pub curve: CurveId,
    pub a: f64,
    pub b: f64,
    pub predicted_a: f64,
    pub predicted_b: f64,
    pub signs_match: bool,
}

fn check_coordinates(rep: &ShrinkingPointReport, mu: f64, q: &CurvePoint) -> Option<(f64, f64)> {
    let map = rmap(&rep.plane, q.p, mu);
    let c = newton_cycle(&map, &rep.check_word, &Vector::from_vec(q.z.clone()), 1e-13, 40).ok()?;
    let ld = rep.rotational.index(rep.rotational.l as i64);
    Some((c.s_values[0], c.s_values[ld]))
}

fn boundary_fit(rep: &ShrinkingPointReport, mu: f64, curve: &BoundaryCurve, k: usize) -> Option<BoundaryFit> {
    let l = rep.rotational.l as i64;
    let (td, tl1, tm, tl2) = (rep.t(1), rep.t(l - 1), rep.t(-1), rep.t(l + 1));
    let (k0, dc) = (rep.k0, rep.delta_check);
    let (swap, pa, pb) = match curve.id {
        // eta = phi1(nu): fit eta against nu
        CurveId::HatLd => (true, -k0 * td / (dc * tl2) * mu, -td / (tl1 * tl2)),
        // nu = phi2(eta)
        CurveId::HatZero => (false, k0 * tl1 / (dc * tm) * mu, -tl1 / (td * tm)),
        _ => return None,
    };
    let mut rows = Vec::new();
    for ray in &curve.rays {
        for q in ray.points.iter().skip(1).take(k) {
            let (eta, nu) = check_coordinates(rep, mu, q)?;
            rows.push(if swap { (nu, eta) } else { (eta, nu) });
        }
    }
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in &rows {
        let (x2, x3, x4) = (x * x, x * x * x, x * x * x * x);
        s11 += x2;
        s12 += x3;
        s22 += x4;
        r1 += x * y;
        r2 += x2 * y;
    }
    let dd = s11 * s22 - s12 * s12;
    let a = (r1 * s22 - r2 * s12) / dd;
    let b = (s11 * r2 - s12 * r1) / dd;
    Some(BoundaryFit {
        curve: curve.id,
        a,
        b,
        predicted_a: pa,
        predicted_b: pb,
        signs_match: a.signum() == pa.signum() && b.signum() == pb.signum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonPointReport {
    pub p: [f64; 2],
    pub z: Vec<f64>,
    /// largest distance between the six pairwise curve intersections and `p`
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnfoldingReport {
    pub mu: f64,
    pub trace_radius: f64,
    pub intersection_o: CommonPointReport,
    pub boundary_curves: Vec<BoundaryCurve>,
    pub sn_curve: Vec<SnPoint>,
    pub sn_closest_to_b: f64,
    pub sn_diameter: f64,
    pub tangency_points: Vec<TangencyPoint>,
    pub theta1: f64,
    pub theta2: f64,
    pub region_samples: Vec<RegionProbe>,
    pub sn_side_checks: Vec<SnSideCheck>,
    pub persistence_checks: Vec<PersistenceCheck>,
    pub boundary_fits: Vec<BoundaryFit>,
    pub settings: UnfoldSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl UnfoldingReport {
    pub fn curve(&self, id: CurveId) -> &BoundaryCurve {
        self.boundary_curves.iter().find(|c| c.id == id).expect("all four curves are traced")
    }

    /// Pass/fail of each structural claim.
    pub fn verdicts(&self) -> Vec<Verdict> {
        let s = &self.settings;
        let v = |name: &str, passed: bool, detail: String| Verdict { name: name.into(), passed, detail };
        let max_angle = self.tangency_points.iter().fold(0.0, |m: f64, t| m.max(t.angle));
        let bres = self.boundary_curves.iter().fold(0.0, |m: f64, c| m.max(c.max_residual()));
        let sn_det = self.sn_curve.iter().fold(0.0, |m: f64, q| m.max(q.det_i_minus_dh.abs()));
        let sn_res = self.sn_curve.iter().fold(0.0, |m: f64, q| m.max(q.residual));
        let probes_ok = self.region_samples.iter().all(|p| p.matches);
        let per_region = [Region::Psi1, Region::Psi2, Region::Psi3]
            .iter()
            .all(|r| self.region_samples.iter().filter(|p| p.region == *r).count() >= 3);
        vec![
            v(
                "common_point",
                self.intersection_o.spread <= s.intersection_tol,
                format!("spread {:.3e}", self.intersection_o.spread),
            ),
            v("boundary_residuals", bres <= 1e-10, format!("max {bres:.3e}")),
            v(
                "tangency",
                self.tangency_points.len() == 2 && max_angle <= s.tangency_tol,
                format!("max angle {max_angle:.3e} rad"),
            ),
            v("sn_reaches_b", self.sn_closest_to_b <= 1e-6, format!("closest approach {:.3e}", self.sn_closest_to_b)),
            v("sn_residuals", sn_det <= 1e-8 && sn_res <= 1e-10, format!("det {sn_det:.3e}, residual {sn_res:.3e}")),
            v(
                "sn_simple_multiplier",
                self.sn_curve.iter().all(|q| q.simple_unit_multiplier),
                format!("{} samples", self.sn_curve.len()),
            ),
            v("sn_sides", self.sn_side_checks.iter().all(|c| c.passed), format!("{} probes", self.sn_side_checks.len())),
            v(
                "persistence",
                self.persistence_checks.len() == 2 && self.persistence_checks.iter().all(|c| c.passed),
                format!("{} segments", self.persistence_checks.len()),
            ),
            v("theta1_lt_theta2", self.theta1 < self.theta2, format!("theta1 {:.6}, theta2 {:.6}", self.theta1, self.theta2)),
            v("region_table", probes_ok && per_region, format!("{} probes", self.region_samples.len())),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts().iter().all(|v| v.passed)
    }

    /// `curve_id,param_x,param_y,residual` rows for all traced curves.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("curve_id,param_x,param_y,residual\n");
        for c in &self.boundary_curves {
            for q in c.polyline() {
                out.push_str(&format!("{},{},{},{}\n", c.id.label(), q.p[0], q.p[1], q.residual));
            }
        }
        for q in &self.sn_curve {
            out.push_str(&format!("saddle_node,{},{},{}\n", q.p[0], q.p[1], q.residual.max(q.det_i_minus_dh.abs())));
        }
        out
    }
}

fn intersect_pair(
    rep: &ShrinkingPointReport,
    mu: f64,
    a: &BoundaryCurve,
    b: &BoundaryCurve,
    seed_p: [f64; 2],
    za: &Vector,
    zb: &Vector,
) -> Option<[f64; 2]> {
    let plane = rep.plane;
    let n = za.len();
    let f = |u: &Vector| {
        let p = [u[0], u[1]];
        let ua = pack(p, &u.rows(2, n).into_owned());
        let ub = pack(p, &u.rows(2 + n, n).into_owned());
        let ra = boundary_residual(&plane, mu, &a.word, a.index, &ua);
        let rb = boundary_residual(&plane, mu, &b.word, b.index, &ub);
        let mut r = Vector::zeros(2 * n + 2);
        r.rows_mut(0, n + 1).copy_from(&ra);
        r.rows_mut(n + 1, n + 1).copy_from(&rb);
        Some(r)
    };
    let mut u0 = Vector::zeros(2 * n + 2);
    u0[0] = seed_p[0];
    u0[1] = seed_p[1];
    u0.rows_mut(2, n).copy_from(za);
    u0.rows_mut(2 + n, n).copy_from(zb);
    newton_fd(&f, &u0, 1e-13, 50).ok().map(|u| [u[0], u[1]])
}

/// Ccw angle from direction `a` to direction `b`, in `[0, 2 pi)`.
fn ccw(a: [f64; 2], b: [f64; 2]) -> f64 {
    let t = b[1].atan2(b[0]) - a[1].atan2(a[0]);
    t.rem_euclid(2.0 * std::f64::consts::PI)
}

/// Angle of the sector from `a` to `b` that contains neither `c` nor `d`.
fn free_sector(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> Option<f64> {
    let ab = ccw(a, b);
    let inside = |x: [f64; 2]| ccw(a, x) < ab;
    if !inside(c) && !inside(d) {
        return Some(ab);
    }
    let ba = ccw(b, a);
    let inside = |x: [f64; 2]| ccw(b, x) < ba;
    (!inside(c) && !inside(d)).then_some(ba)
}

/// Traces the four boundary curves and the saddle-node locus at `mu` and
/// checks the region structure around the broken shrinking point.
pub fn unfold_verify(rep: &ShrinkingPointReport, mu: f64, settings: &UnfoldSettings) -> Result<UnfoldingReport> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("unfolding needs mu > 0, got {mu}")));
    }
    settings.validate()?;
    let start = CommonPoint { px: rep.location[0], py: rep.location[1], z0: rep.y(0) };
    let o = common_point(&rep.plane, &rep.word, mu, &start)?;
    let op = [o.px, o.py];
    let radius = settings.radius(mu);

    let curves: Vec<BoundaryCurve> = CurveId::ALL
        .par_iter()
        .map(|&id| border_collision_trace(rep, id, mu, &o, radius, &settings.continuation))
        .collect::<Result<_>>()?;
    for c in &curves {
        if c.admissible_ray().is_none() {
            return Err(Error::Unfolding(format!("no admissible half found on curve {}", c.id.label())));
        }
    }

    // common point from the six pairwise intersections
    let mut spread: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let (a, b) = (&curves[i], &curves[j]);
            let ra = a.admissible_ray().expect("checked");
            let rb = b.admissible_ray().expect("checked");
            let k = 3.min(ra.points.len() - 1).min(rb.points.len() - 1);
            let (pa, pb) = (ra.points[k].p, rb.points[k].p);
            let seed = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let za = Vector::from_vec(ra.points[k].z.clone());
            let zb = Vector::from_vec(rb.points[k].z.clone());
            match intersect_pair(rep, mu, a, b, seed, &za, &zb) {
                Some(p) => spread = spread.max(dist(p, op)),
                None => spread = f64::INFINITY,
            }
        }
    }

    // tangency points: one on a check-word ray, one on a hat-word ray
    let mut a_pt = None;
    let mut b_pt = None;
    for c in &curves {
        if let Some((mut t, u)) = find_tangency(rep, mu, c) {
            if c.id.is_check() && a_pt.is_none() {
                t.label = "A".into();
                a_pt = Some((t, u));
            } else if !c.id.is_check() && b_pt.is_none() {
                t.label = "B".into();
                b_pt = Some((t, u));
            }
        }
    }
    let (Some((ta, ua)), Some((tb, _))) = (a_pt, b_pt) else {
        return Err(Error::NoLocus(format!("no saddle-node tangency on the admissible boundary rays at mu = {mu}")));
    };

    let curve_a = curves.iter().find(|c| c.id == ta.curve).expect("traced");
    let sn_word = curve_a.word.flip(curve_a.index as i64);
    let (sn_curve, closest) = saddle_node_trace(&rep.plane, mu, &sn_word, &ua, tb.p, &settings.continuation)?;
    let mut sn_diameter: f64 = 0.0;
    for x in &sn_curve {
        for y in &sn_curve {
            sn_diameter = sn_diameter.max(dist(x.p, y.p));
        }
    }
    sn_diameter = sn_diameter.max(sn_curve.iter().fold(0.0, |m, q| m.max(dist(q.p, tb.p))));

    // angles at O
    let ray_of = |id: CurveId| curves.iter().find(|c| c.id == id).and_then(|c| c.admissible_ray()).expect("checked");
    let other_check = if ta.curve == CurveId::CheckZero { CurveId::CheckLd } else { CurveId::CheckZero };
    let other_hat = if tb.curve == CurveId::HatZero { CurveId::HatLd } else { CurveId::HatZero };
    let (da, db) = (ray_of(ta.curve).direction(10), ray_of(tb.curve).direction(10));
    let (dc, dh) = (ray_of(other_check).direction(10), ray_of(other_hat).direction(10));
    let theta1 = free_sector(da, db, dc, dh).unwrap_or(f64::NAN);
    let theta2 = free_sector(dc, dh, da, db).unwrap_or(f64::NAN);

    // region probes
    let oa = dist(ta.p, op);
    let ob = dist(tb.p, op);
    let chord = |r1: &Ray, d1: f64, r2: &Ray, d2: f64| -> Option<[f64; 2]> {
        let (p1, _) = r1.at_distance(d1)?;
        let (p2, _) = r2.at_distance(d2)?;
        Some([0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])])
    };
    let mut probe_points = Vec::new();
    for alpha in [0.3, 0.6, 0.9] {
        if let Some(p) = chord(ray_of(CurveId::CheckZero), alpha * oa, ray_of(CurveId::CheckLd), alpha * oa) {
            probe_points.push((Region::Psi1, p));
        }
        if let Some(p) = chord(ray_of(CurveId::HatZero), alpha * ob, ray_of(CurveId::HatLd), alpha * ob) {
            probe_points.push((Region::Psi2, p));
        }
    }
    for alpha in [0.15, 0.25, 0.35] {
        if let Some(p) = chord(ray_of(ta.curve), alpha * oa, ray_of(tb.curve), alpha * ob) {
            probe_points.push((Region::Psi3, p));
        }
    }
    let region_samples: Vec<RegionProbe> = probe_points.par_iter().map(|&(r, p)| probe(rep, mu, &o, r, p)).collect();

    // two cycles on one side of the saddle-node locus, none on the other
    let m = sn_curve.len();
    let picks: Vec<usize> = if m < 3 {
        Vec::new()
    } else {
        let k = settings.sn_probe_count.max(1);
        (1..=k).map(|i| (i * (m - 1)) / (k + 1)).collect()
    };
    let sn_side_checks: Vec<SnSideCheck> = picks
        .par_iter()
        .map(|&i| {
            let q = &sn_curve[i];
            let (prev, next) = (&sn_curve[i.saturating_sub(1)], &sn_curve[(i + 1).min(m - 1)]);
            let tangent = [next.p[0] - prev.p[0], next.p[1] - prev.p[1]];
            sn_side_check(&rep.plane, mu, &sn_word, q, tangent, settings.sn_probe_offset)
        })
        .collect();

    let persistence_checks: Vec<PersistenceCheck> = [(ta.curve, oa), (tb.curve, ob)]
        .par_iter()
        .filter_map(|&(id, len)| persistence_check(rep, mu, &o, ray_of(id), id, 0.5 * len))
        .collect();

    let boundary_fits = curves.iter().filter_map(|c| boundary_fit(rep, mu, c, 10)).collect();

    Ok(UnfoldingReport {
        mu,
        trace_radius: radius,
        intersection_o: CommonPointReport { p: op, z: o.z0.iter().copied().collect(), spread },
        boundary_curves: curves,
        sn_curve,
        sn_closest_to_b: closest,
        sn_diameter,
        tangency_points: vec![ta, tb],
        theta1,
        theta2,
        region_samples,
        sn_side_checks,
        persistence_checks,
        boundary_fits,
        settings: *settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cyclealg::cycle_matrices;
    use crate::mapmodel::ExampleParams;
    use crate::shrinkfind::{default_plane, find_shrinking_point, SearchBox, ShrinkSettings};
    use std::sync::OnceLock;

    fn report(c: f64) -> ShrinkingPointReport {
        let plane = default_plane(ExampleParams { r_l: 0.2, s_r: 0.9, omega_l: 0.28, omega_r: 0.28, mu: 0.0, c });
        let word = SymbolWord::rotational(2, 2, 7).unwrap();
        let bx = SearchBox { x: [0.28, 0.295], y: [0.86, 0.90] };
        find_shrinking_point(&plane, &word, &bx, &ShrinkSettings::default()).unwrap()
    }

    fn nonlinear() -> &'static ShrinkingPointReport {
        static REP: OnceLock<ShrinkingPointReport> = OnceLock::new();
        REP.get_or_init(|| report(1.0))
    }

    #[test]
    fn structure_holds_and_locus_shrinks() {
        let rep = nonlinear();
        let mut diam = Vec::new();
        for mu in [0.5, 0.25, 0.125] {
            let u = unfold_verify(rep, mu, &UnfoldSettings::default()).unwrap();
            for v in u.verdicts() {
                assert!(v.passed, "mu {mu}: {} failed ({})", v.name, v.detail);
            }
            assert_eq!(u.tangency_points[0].label, "A");
            assert!(u.tangency_points[0].curve.is_check());
            assert!(!u.tangency_points[1].curve.is_check());
            diam.push(u.sn_diameter);
        }
        assert!(diam[0] > diam[1] && diam[1] > diam[2], "{diam:?}");
    }

    #[test]
    fn boundary_fit_signs() {
        let u = unfold_verify(nonlinear(), 0.125, &UnfoldSettings::default()).unwrap();
        assert_eq!(u.boundary_fits.len(), 2);
        for f in &u.boundary_fits {
            assert!(f.signs_match, "{f:?}");
            // the linear coefficient is within 15% of its leading-order value
            assert!((f.a / f.predicted_a - 1.0).abs() < 0.15, "{f:?}");
        }
    }

    #[test]
    fn piecewise_linear_has_no_locus() {
        let rep = report(0.0);
        match unfold_verify(&rep, 0.25, &UnfoldSettings::default()) {
            Err(Error::NoLocus(_)) => {}
            other => panic!("expected NoLocus, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_mu() {
        assert!(unfold_verify(nonlinear(), 0.0, &UnfoldSettings::default()).is_err());
        assert!(unfold_verify(nonlinear(), -0.1, &UnfoldSettings::default()).is_err());
    }

    fn traces_at_zero(rep: &ShrinkingPointReport) -> Vec<BoundaryCurve> {
        let o = CommonPoint { px: rep.location[0], py: rep.location[1], z0: rep.y(0) };
        CurveId::ALL
            .iter()
            .map(|&id| border_collision_trace(rep, id, 0.0, &o, 0.02, &ContinuationSettings::default()).unwrap())
            .collect()
    }

    #[test]
    fn zero_mu_traces_follow_singular_det_p() {
        let rep = nonlinear();
        for c in traces_at_zero(rep) {
            let w = c.word.cyclic_shift(c.index as i64);
            for q in c.polyline() {
                let map = rep.plane.map_at(q.p[0], q.p[1], 0.0);
                let cm = cycle_matrices(&map, &w);
                assert!(cm.det_p.abs() < 1e-9, "{:?} at {:?}: det P = {}", c.id, q.p, cm.det_p);
            }
        }
    }

    #[test]
    fn zero_mu_opposite_curves_are_tangent() {
        let rep = nonlinear();
        let curves = traces_at_zero(rep);
        let o = [rep.location[0], rep.location[1]];
        let tangent = |id: CurveId| {
            let c = curves.iter().find(|c| c.id == id).unwrap();
            let q = &c.rays[1].points[1];
            [q.p[0] - o[0], q.p[1] - o[1]]
        };
        assert!(line_angle(tangent(CurveId::CheckZero), tangent(CurveId::HatLd)) < 1e-3);
        assert!(line_angle(tangent(CurveId::CheckLd), tangent(CurveId::HatZero)) < 1e-3);
        assert!(line_angle(tangent(CurveId::CheckZero), tangent(CurveId::CheckLd)) > 1e-2);
    }

    #[test]
    fn sector_angles() {
        let r = |deg: f64| [deg.to_radians().cos(), deg.to_radians().sin()];
        let t = free_sector(r(10.0), r(100.0), r(200.0), r(300.0)).unwrap();
        assert!((t - 90f64.to_radians()).abs() < 1e-12);
        let t = free_sector(r(100.0), r(10.0), r(200.0), r(300.0)).unwrap();
        assert!((t - 90f64.to_radians()).abs() < 1e-12);
        assert!(free_sector(r(10.0), r(200.0), r(100.0), r(300.0)).is_none());
    }

    #[test]
    fn csv_header_and_rows() {
        let u = unfold_verify(nonlinear(), 0.25, &UnfoldSettings::default()).unwrap();
        let csv = u.curves_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("curve_id,param_x,param_y,residual"));
        let rows: Vec<&str> = lines.collect();
        for id in CurveId::ALL {
            assert!(rows.iter().any(|l| l.starts_with(id.label())));
        }
        assert!(rows.iter().any(|l| l.starts_with("saddle_node,")));
        assert!(rows.iter().all(|l| l.split(',').count() == 4));
    }
}

//! Finite-difference Newton solvers and pseudo-arclength continuation for
//! underdetermined systems `F: R^{k+1} -> R^k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, null_vector, Mat, Vector};

/// Central-difference Jacobian of `f` at `u`.
pub fn fd_jacobian(f: &dyn Fn(&Vector) -> Option<Vector>, u: &Vector, rel_step: f64) -> Option<Mat> {
    let f0 = f(u)?;
    let mut jac = Mat::zeros(f0.len(), u.len());
    for k in 0..u.len() {
        let h = rel_step * (1.0 + u[k].abs());
        let mut up = u.clone();
        let mut um = u.clone();
        up[k] += h;
        um[k] -= h;
        let col = (f(&up)? - f(&um)?) / (2.0 * h);
        jac.set_column(k, &col);
    }
    Some(jac)
}

/// Newton's method for a square system with a finite-difference Jacobian.
pub fn newton_fd(f: &dyn Fn(&Vector) -> Option<Vector>, u0: &Vector, tol: f64, max_iter: usize) -> Result<Vector> {
    let mut u = u0.clone();
    let mut res = f64::INFINITY;
    for _ in 0..=max_iter {
        let r = f(&u).ok_or(Error::NoConvergence { iterations: 0, residual: f64::NAN })?;
        res = r.amax();
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(u);
        }
        let jac = fd_jacobian(f, &u, 1e-7).ok_or(Error::NoConvergence { iterations: 0, residual: res })?;
        let du = linalg::solve(&jac, &r).ok_or(Error::RankDeficient { det: linalg::det(&jac) })?;
        u -= du;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSettings {
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// step multiplier after a quickly converged corrector
    pub growth: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self { h_init: 1e-4, h_min: 1e-10, h_max: 1e-3, max_steps: 2000, newton_tol: 1e-11, newton_max_iter: 10, growth: 1.5 }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.h_init, self.h_min, self.h_max, self.newton_tol, self.growth];
        if pos.iter().any(|v| !(*v > 0.0)) || self.h_min > self.h_max || self.growth < 1.0 {
            return Err(Error::InvalidParameter(
                "continuation settings must be positive with h_min <= h_max and growth >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why a trace ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Callback,
    MaxSteps,
    StepTooSmall,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub points: Vec<Vector>,
    pub tangents: Vec<Vector>,
    pub stop: StopReason,
}

/// Solves `F(u) = 0, t . (u - u_pred) = 0` from `u_pred`. Returns the
/// solution and the number of iterations.
fn correct(
    f: &dyn Fn(&Vector) -> Option<Vector>,
    u_pred: &Vector,
    t: &Vector,
    tol: f64,
    max_iter: usize,
) -> Option<(Vector, usize)> {
    let k = u_pred.len();
    let mut u = u_pred.clone();
    for it in 0..=max_iter {
        let r = f(&u)?;
        let mut full = Vector::zeros(k);
        full.rows_mut(0, k - 1).copy_from(&r);
        full[k - 1] = t.dot(&(&u - u_pred));
        if !full.iter().all(|v| v.is_finite()) {
            return None;
        }
        if r.amax() <= tol && full[k - 1].abs() <= tol {
            return Some((u, it));
        }
        if it == max_iter {
            break;
        }
        let jac = fd_jacobian(f, &u, 1e-7)?;
        let mut a = Mat::zeros(k, k);
        a.rows_mut(0, k - 1).copy_from(&jac);
        a.row_mut(k - 1).copy_from(&t.transpose());
        u -= linalg::solve(&a, &full)?;
    }
    None
}

/// Tangent at `u`: solves `[J; t_prev^T] t = [0; 1]`, or takes the SVD null
/// vector oriented along `t_prev` when no previous tangent is trusted.
fn tangent(f: &dyn Fn(&Vector) -> Option<Vector>, u: &Vector, t_prev: &Vector) -> Option<Vector> {
    let k = u.len();
    let jac = fd_jacobian(f, u, 1e-7)?;
    let mut a = Mat::zeros(k, k);
    a.rows_mut(0, k - 1).copy_from(&jac);
    a.row_mut(k - 1).copy_from(&t_prev.transpose());
    let mut rhs = Vector::zeros(k);
    rhs[k - 1] = 1.0;
    let t = linalg::solve(&a, &rhs).unwrap_or_else(|| null_vector(&jac));
    let t = t.normalize();
    Some(if t.dot(t_prev) < 0.0 { -t } else { t })
}

/// Null direction of the Jacobian of `f` at `u`, oriented along `hint`.
pub fn null_direction(f: &dyn Fn(&Vector) -> Option<Vector>, u: &Vector, hint: &Vector) -> Option<Vector> {
    let jac = fd_jacobian(f, u, 1e-7)?;
    let t = null_vector(&jac);
    Some(if t.dot(hint) < 0.0 { -t } else { t })
}

/// Pseudo-arclength continuation of `F(u) = 0` from a point `u0` on the curve.
///
/// The first tangent is the null vector of `DF(u0)` oriented along
/// `direction`. Steps halve on corrector failure and grow by
/// `settings.growth` after fast convergence. `stop` is called on every
/// accepted point and ends the trace when it returns `true`.
pub fn continue_curve(
    f: &dyn Fn(&Vector) -> Option<Vector>,
    u0: &Vector,
    direction: &Vector,
    settings: &ContinuationSettings,
    stop: &mut dyn FnMut(&Vector) -> bool,
) -> Result<Trace> {
    settings.validate()?;
    let t0 = null_direction(f, u0, direction).ok_or_else(|| Error::Continuation("cannot evaluate system at start".into()))?;
    let mut points = vec![u0.clone()];
    let mut tangents = vec![t0];
    let mut h = settings.h_init;
    for _ in 0..settings.max_steps {
        let u = points.last().expect("non-empty");
        let t = tangents.last().expect("non-empty");
        let pred = u + t * h;
        match correct(f, &pred, t, settings.newton_tol, settings.newton_max_iter) {
            Some((next, iters)) if (&next - u).norm() <= 2.0 * h => {
                let t_next = tangent(f, &next, t).ok_or_else(|| Error::Continuation("tangent evaluation failed".into()))?;
                let done = stop(&next);
                points.push(next);
                tangents.push(t_next);
                if done {
                    return Ok(Trace { points, tangents, stop: StopReason::Callback });
                }
                if iters <= 3 {
                    h = (h * settings.growth).min(settings.h_max);
                }
            }
            _ => {
                h *= 0.5;
                if h < settings.h_min {
                    return Ok(Trace { points, tangents, stop: StopReason::StepTooSmall });
                }
            }
        }
    }
    Ok(Trace { points, tangents, stop: StopReason::MaxSteps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn circle(u: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(vec![u[0] * u[0] + u[1] * u[1] - 1.0]))
    }

    #[test]
    fn traces_unit_circle() {
        let settings = ContinuationSettings { h_max: 0.05, ..Default::default() };
        let start = Vector::from_vec(vec![1.0, 0.0]);
        let mut angle_travelled = 0.0;
        let mut last = start.clone();
        let mut stop = |u: &Vector| {
            angle_travelled += (u - &last).norm();
            last = u.clone();
            angle_travelled > std::f64::consts::PI
        };
        let trace = continue_curve(&circle, &start, &Vector::from_vec(vec![0.0, 1.0]), &settings, &mut stop).unwrap();
        assert_eq!(trace.stop, StopReason::Callback);
        for p in &trace.points {
            assert!((p.norm() - 1.0).abs() < 1e-10);
        }
        assert!(trace.points[1][1] > 0.0);
        let end = trace.points.last().unwrap();
        assert!(end[0] < -0.99);
        for (p, t) in trace.points.iter().zip(&trace.tangents) {
            assert!(p.dot(t).abs() < 1e-6);
        }
    }

    #[test]
    fn respects_step_budget() {
        let settings = ContinuationSettings { max_steps: 5, ..Default::default() };
        let trace =
            continue_curve(&circle, &Vector::from_vec(vec![0.0, 1.0]), &Vector::from_vec(vec![1.0, 0.0]), &settings, &mut |_| {
                false
            })
            .unwrap();
        assert_eq!(trace.stop, StopReason::MaxSteps);
        assert_eq!(trace.points.len(), 6);
        assert!(trace.points[1][0] > 0.0);
    }

    #[test]
    fn square_newton() {
        let f = |u: &Vector| Some(Vector::from_vec(vec![u[0] * u[0] - 2.0, u[0] * u[1] - 1.0]));
        let r = newton_fd(&f, &Vector::from_vec(vec![1.0, 1.0]), 1e-13, 30).unwrap();
        assert_relative_eq!(r[0], 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r[1], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        let none = |u: &Vector| Some(Vector::from_vec(vec![u[0] * u[0] + 1.0]));
        assert!(newton_fd(&none, &Vector::from_vec(vec![0.3]), 1e-12, 20).is_err());
    }
}

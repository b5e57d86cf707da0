//! Attractor period detection by forward iteration over a parameter grid.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapmodel::{build_example_unchecked, ExampleParams, ParamName, PwsMap};

/// Period code for an orbit that left the escape ball.
pub const ESCAPED: i32 = 0;
/// Period code for a bounded orbit with no period up to `max_period`.
pub const NO_PERIOD: i32 = -1;

/// Eventual period of the forward orbit of `x0`.
///
/// After `transient` steps, returns the least `p <= max_period` with
/// `|x_{t+p+k} - x_{t+k}|_max <= tol` for `k = 0..=p`. Returns [`ESCAPED`] if
/// `|x|_max` exceeds `escape_radius` (or becomes non-finite) and
/// [`NO_PERIOD`] otherwise.
pub fn forward_period(map: &PwsMap, x0: &[f64], transient: usize, max_period: usize, tol: f64, escape_radius: f64) -> i32 {
    let n = map.dim();
    let escaped = |x: &[f64]| x.iter().any(|v| !(v.abs() <= escape_radius));
    let mut x = x0.to_vec();
    let mut y = vec![0.0; n];
    if escaped(&x) {
        return ESCAPED;
    }
    for _ in 0..transient {
        map.evaluate_into(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
        if escaped(&x) {
            return ESCAPED;
        }
    }
    let len = 2 * max_period + 1;
    let mut hist = vec![0.0; len * n];
    hist[..n].copy_from_slice(&x);
    for t in 1..len {
        let (done, rest) = hist.split_at_mut(t * n);
        map.evaluate_into(&done[(t - 1) * n..], &mut rest[..n]);
        if escaped(&rest[..n]) {
            return ESCAPED;
        }
    }
    let pt = |t: usize| &hist[t * n..(t + 1) * n];
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol);
    for p in 1..=max_period {
        if (0..=p).all(|k| close(pt(k + p), pt(k))) {
            return p as i32;
        }
    }
    NO_PERIOD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSettings {
    pub transient: usize,
    pub max_period: usize,
    pub tol: f64,
    /// escape radius is `escape_factor * max(1, |mu|)`
    pub escape_factor: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { transient: 10_000, max_period: 30, tol: 1e-8, escape_factor: 1e6 }
    }
}

impl ScanSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_period < 1 {
            return Err(Error::InvalidParameter("max_period must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.escape_factor > 0.0) {
            return Err(Error::InvalidParameter("tol and escape_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn escape_radius(&self, mu: f64) -> f64 {
        self.escape_factor * mu.abs().max(1.0)
    }
}

/// A rectangular grid over two family parameters. A single-point axis is
/// given by `n = 1` with `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub param_x: ParamName,
    pub param_y: ParamName,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub fixed: ExampleParams,
}

fn axis(range: [f64; 2], n: usize, i: usize) -> f64 {
    if n == 1 {
        range[0]
    } else if i + 1 == n {
        range[1]
    } else {
        range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r, n) in [("x", self.x_range, self.nx), ("y", self.y_range, self.ny)] {
            let ok = match n {
                0 => false,
                1 => r[0] == r[1],
                _ => r[0] < r[1],
            };
            if !ok || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} axis: need lo < hi with n >= 2, or lo == hi with n == 1 (got {r:?}, n = {n})"
                )));
            }
        }
        if self.param_x == self.param_y {
            return Err(Error::InvalidParameter("param_x and param_y must differ".into()));
        }
        for i in [0, self.nx - 1] {
            for j in [0, self.ny - 1] {
                self.params_at(i, j).validate()?;
            }
        }
        Ok(())
    }

    pub fn x(&self, i: usize) -> f64 {
        axis(self.x_range, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        axis(self.y_range, self.ny, j)
    }

    pub fn params_at(&self, i: usize, j: usize) -> ExampleParams {
        self.fixed.with(self.param_x, self.x(i)).with(self.param_y, self.y(j))
    }

    /// Nearest grid index to a coordinate value on each axis.
    pub fn cell_of(&self, px: f64, py: f64) -> (usize, usize) {
        let near = |range: [f64; 2], n: usize, v: f64| {
            if n == 1 {
                0
            } else {
                let t = (v - range[0]) / (range[1] - range[0]) * (n - 1) as f64;
                t.round().clamp(0.0, (n - 1) as f64) as usize
            }
        };
        (near(self.x_range, self.nx, px), near(self.y_range, self.ny, py))
    }
}

/// Detected periods, stored row-major with `y` as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TongueGrid {
    pub spec: GridSpec,
    pub settings: ScanSettings,
    pub period: Vec<i32>,
}

impl TongueGrid {
    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.period[j * self.spec.nx + i]
    }

    /// `param_x,param_y,period` rows in storage order, with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param_x,param_y,period\n");
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                out.push_str(&format!("{},{},{}\n", self.spec.x(i), self.spec.y(j), self.get(i, j)));
            }
        }
        out
    }

    /// 4-connected component of cells equal to `self.get(seed)`.
    pub fn component(&self, seed: (usize, usize)) -> Vec<bool> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let value = self.get(seed.0, seed.1);
        let mut mask = vec![false; nx * ny];
        let mut queue = VecDeque::from([seed]);
        mask[seed.1 * nx + seed.0] = true;
        while let Some((i, j)) = queue.pop_front() {
            let mut visit = |a: usize, b: usize| {
                let k = b * nx + a;
                if !mask[k] && self.period[k] == value {
                    mask[k] = true;
                    queue.push_back((a, b));
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < nx {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < ny {
                visit(i, j + 1);
            }
        }
        mask
    }

    /// Number of cells of a component mask in row `j`.
    pub fn row_width(&self, mask: &[bool], j: usize) -> usize {
        let nx = self.spec.nx;
        mask[j * nx..(j + 1) * nx].iter().filter(|&&b| b).count()
    }

    /// Column of the cell in row `j` with the given period that is closest to column `i0`.
    pub fn nearest_in_row(&self, j: usize, i0: usize, value: i32) -> Option<usize> {
        (0..self.spec.nx).filter(|&i| self.get(i, j) == value).min_by_key(|&i| i.abs_diff(i0))
    }
}

/// Period of the forward orbit of the origin at every grid cell.
///
/// Cells are computed in parallel and written to fixed slots, so the result
/// does not depend on scheduling.
pub fn scan(spec: &GridSpec, settings: &ScanSettings) -> Result<TongueGrid> {
    spec.validate()?;
    settings.validate()?;
    let period = (0..spec.nx * spec.ny)
        .into_par_iter()
        .map(|k| {
            let p = spec.params_at(k % spec.nx, k / spec.nx);
            let map = build_example_unchecked(&p);
            let x0 = vec![0.0; map.dim()];
            forward_period(&map, &x0, settings.transient, settings.max_period, settings.tol, settings.escape_radius(p.mu))
        })
        .collect();
    Ok(TongueGrid { spec: *spec, settings: *settings, period })
}

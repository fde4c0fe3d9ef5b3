//! Discrete Legendre–Fenchel transforms, upper concave hulls, supporting
//! slopes and the supporting-line membership tests on sampled 1-D curves.
//!
//! Values of `−∞` mark grid points outside the effective domain; they are
//! skipped by the hull and never minimize a transform.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A function sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::shape(
                format!("{} values", grid.len()),
                format!("{} values", values.len()),
            ));
        }
        if grid.is_empty() {
            return Err(Error::Argument(
                "a curve needs at least one grid point".into(),
            ));
        }
        if grid.iter().any(|u| !u.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "grid must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Argument("curve values must be finite or −∞".into()));
        }
        if !values.iter().any(|v| v.is_finite()) {
            return Err(Error::Argument("curve has no finite value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Indices of finite values.
    pub fn finite_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.values[i].is_finite())
            .collect()
    }

    /// Spread of the finite values (0 for a single finite value).
    pub fn finite_range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    /// Grid index of `u`, allowing for round-off in the caller's value.
    pub fn index_of(&self, u: f64) -> Result<usize> {
        grid_index(&self.grid, u)
    }
}

pub(crate) fn grid_index(grid: &[f64], u: f64) -> Result<usize> {
    let scale = grid.iter().fold(1.0f64, |a, g| a.max(g.abs()));
    let i = grid
        .partition_point(|&g| g < u)
        .min(grid.len().saturating_sub(1));
    [i.saturating_sub(1), i]
        .into_iter()
        .find(|&j| j < grid.len() && (grid[j] - u).abs() <= 1e-12 * scale)
        .ok_or_else(|| Error::Argument(format!("u = {u} is not a grid point")))
}

/// `min_k (β·u_k − f(u_k))` over the finite samples, for each β.
///
/// Applied to `s` this gives `φ`; applied to `φ` sampled over β it gives
/// the concave hull of `s` back on the requested u values.
pub fn legendre_transform(curve: &SampledCurve, betas: &[f64]) -> Result<SampledCurve> {
    if betas.is_empty() {
        return Err(Error::Argument("empty β grid".into()));
    }
    let pts: Vec<(f64, f64)> = curve
        .finite_indices()
        .into_iter()
        .map(|i| (curve.grid[i], curve.values[i]))
        .collect();
    let values = betas
        .iter()
        .map(|&b| {
            pts.iter()
                .map(|&(u, f)| b * u - f)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    SampledCurve::new(betas.to_vec(), values)
}

/// Upper concave hull of a sampled curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullResult {
    pub grid: Vec<f64>,
    pub hull: Vec<f64>,
    /// Grid indices lying on the hull as vertices.
    pub vertices: Vec<usize>,
    /// Left supporting slope (upper end of the superdifferential); NaN off the domain.
    pub beta_minus: Vec<f64>,
    /// Right supporting slope (lower end of the superdifferential); NaN off the domain.
    pub beta_plus: Vec<f64>,
}

/// Closed interval of supporting slopes `[lo, hi]`, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Superdifferential {
    Empty,
    Interval { lo: f64, hi: f64 },
}

impl Superdifferential {
    pub fn contains(&self, beta: f64, tol: f64) -> bool {
        match *self {
            Superdifferential::Empty => false,
            Superdifferential::Interval { lo, hi } => beta >= lo - tol && beta <= hi + tol,
        }
    }

    /// Probe slopes: the midpoint first, then the finite endpoints.
    ///
    /// A half-line `[b, ∞)` or `(−∞, b]` is probed at `b ± |b|`, i.e. one
    /// `|b|` into the half-line (at `b` itself when `b = 0`).
    pub fn probes(&self) -> Vec<f64> {
        let Superdifferential::Interval { lo, hi } = *self else {
            return Vec::new();
        };
        let mid = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + lo.abs(),
            (false, true) => hi - hi.abs(),
            (false, false) => 0.0,
        };
        let mut out = vec![mid];
        for b in [lo, hi] {
            if b.is_finite() && !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain upper hull of the finite samples. Collinear points are
/// dropped from the vertex set.
pub fn concave_hull(curve: &SampledCurve) -> HullResult {
    let n = curve.len();
    let mut chain: Vec<usize> = Vec::new();
    for i in curve.finite_indices() {
        let p = (curve.grid[i], curve.values[i]);
        while chain.len() >= 2 {
            let a = chain[chain.len() - 2];
            let b = chain[chain.len() - 1];
            let pa = (curve.grid[a], curve.values[a]);
            let pb = (curve.grid[b], curve.values[b]);
            // Pop b unless it lies strictly above the chord a→p.
            if cross(pa, pb, p) >= 0.0 {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(i);
    }

    let mut hull = vec![f64::NEG_INFINITY; n];
    let mut beta_minus = vec![f64::NAN; n];
    let mut beta_plus = vec![f64::NAN; n];
    let slope =
        |a: usize, b: usize| (curve.values[b] - curve.values[a]) / (curve.grid[b] - curve.grid[a]);

    if chain.len() == 1 {
        let v = chain[0];
        hull[v] = curve.values[v];
        beta_minus[v] = f64::INFINITY;
        beta_plus[v] = f64::NEG_INFINITY;
    }
    for (k, seg) in chain.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let m = slope(a, b);
        for i in a..=b {
            hull[i] = if i == a {
                curve.values[a]
            } else if i == b {
                curve.values[b]
            } else {
                let t = (curve.grid[i] - curve.grid[a]) / (curve.grid[b] - curve.grid[a]);
                curve.values[a] + t * (curve.values[b] - curve.values[a])
            };
            if i > a && i < b {
                beta_minus[i] = m;
                beta_plus[i] = m;
            }
        }
        beta_plus[a] = m;
        beta_minus[b] = m;
        if k == 0 {
            beta_minus[a] = f64::INFINITY;
        }
        if k + 2 == chain.len() {
            beta_plus[b] = f64::NEG_INFINITY;
        }
    }

    HullResult {
        grid: curve.grid.clone(),
        hull,
        vertices: chain,
        beta_minus,
        beta_plus,
    }
}

impl HullResult {
    pub fn as_curve(&self) -> SampledCurve {
        SampledCurve {
            grid: self.grid.clone(),
            values: self.hull.clone(),
        }
    }

    pub fn superdifferential(&self, i: usize) -> Superdifferential {
        if !self.hull[i].is_finite() {
            return Superdifferential::Empty;
        }
        Superdifferential::Interval {
            lo: self.beta_plus[i],
            hi: self.beta_minus[i],
        }
    }

    /// Largest finite |slope| among hull segments (0 for a single vertex).
    pub fn max_abs_slope(&self) -> f64 {
        self.beta_minus
            .iter()
            .chain(&self.beta_plus)
            .filter(|b| b.is_finite())
            .fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Grid indices of the u-arginf of `β·u − s**(u)` within `tol`.
    pub fn conjugate_arginf(&self, beta: f64, tol: f64) -> Vec<usize> {
        let vals: Vec<f64> = (0..self.grid.len())
            .map(|i| {
                if self.hull[i].is_finite() {
                    beta * self.grid[i] - self.hull[i]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        (0..vals.len()).filter(|&i| vals[i] <= best + tol).collect()
    }
}

/// Superdifferential of the hull at grid value `u`.
pub fn superdifferential_at(hull: &HullResult, u: f64) -> Result<Superdifferential> {
    Ok(hull.superdifferential(grid_index(&hull.grid, u)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportTolerances {
    /// Allowed gap `s** − s` for membership in C.
    pub eps_c: f64,
    /// Required strict gap below a supporting line for membership in T.
    pub delta_t: f64,
}

impl SupportTolerances {
    /// `max(1e-9, 1e-6·range)` for both tolerances.
    pub fn for_curve(curve: &SampledCurve) -> Self {
        let t = (1e-6 * curve.finite_range()).max(1e-9);
        Self {
            eps_c: t,
            delta_t: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    pub in_c: bool,
    pub in_t: bool,
    /// Strictly supporting slope when in T, the midpoint probe when only in C.
    pub witness: Option<f64>,
    pub superdifferential: Superdifferential,
}

/// True when the line through `(u_i, f_i)` with slope `beta` lies above every
/// other finite sample by more than `delta`.
pub fn strictly_supports(curve: &SampledCurve, i: usize, beta: f64, delta: f64) -> bool {
    let (ui, fi) = (curve.grid[i], curve.values[i]);
    curve
        .finite_indices()
        .into_iter()
        .filter(|&w| w != i)
        .all(|w| curve.values[w] < fi + beta * (curve.grid[w] - ui) - delta)
}

pub fn support_tests(
    curve: &SampledCurve,
    hull: &HullResult,
    i: usize,
    tol: SupportTolerances,
) -> SupportResult {
    let sd = hull.superdifferential(i);
    let f = curve.values[i];
    let in_c =
        f.is_finite() && sd != Superdifferential::Empty && (hull.hull[i] - f).abs() <= tol.eps_c;
    if !in_c {
        return SupportResult {
            in_c,
            in_t: false,
            witness: None,
            superdifferential: sd,
        };
    }
    let probes = sd.probes();
    let strict = probes
        .iter()
        .copied()
        .find(|&b| strictly_supports(curve, i, b, tol.delta_t));
    SupportResult {
        in_c,
        in_t: strict.is_some(),
        witness: strict.or(probes.first().copied()),
        superdifferential: sd,
    }
}

/// One CSV row of a classified curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub u: f64,
    #[serde(with = "crate::floats")]
    pub s: f64,
    #[serde(with = "crate::floats")]
    pub s_hull: f64,
    #[serde(with = "crate::floats")]
    pub beta_minus: f64,
    #[serde(with = "crate::floats")]
    pub beta_plus: f64,
    #[serde(rename = "in_C")]
    pub in_c: bool,
    #[serde(rename = "in_T")]
    pub in_t: bool,
}

pub fn curve_rows(
    curve: &SampledCurve,
    hull: &HullResult,
    tol: SupportTolerances,
) -> Vec<CurveRow> {
    (0..curve.len())
        .map(|i| {
            let st = support_tests(curve, hull, i, tol);
            CurveRow {
                u: curve.grid[i],
                s: curve.values[i],
                s_hull: hull.hull[i],
                beta_minus: hull.beta_minus[i],
                beta_plus: hull.beta_plus[i],
                in_c: st.in_c,
                in_t: st.in_t,
            }
        })
        .collect()
}

pub fn write_rows<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<CurveRow>, _>>()?;
    Ok(rows)
}

//! Thermodynamic functions: free energies `φ`, entropies `s = −J`, and their
//! mixed-ensemble variants.
//!
//! All one-dimensional sweeps go through a [`Frame`]: a base problem (tilt
//! and constraints on the components that are held fixed) plus one free
//! component that the sweep varies, either as a constraint value (entropy)
//! or as a multiplier (free energy).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lft::SampledCurve;
use crate::model::{HiddenSpace, Model, Representation};
use crate::solver::{Engine, Outcome};

pub use crate::solver::{RangeInfo, SolverOptions, Task};

/// Which one-dimensional slice of the problem a sweep works on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// σ = 1: sweep `u` (entropy) or `β` (free energy) directly.
    Pure,
    /// First component tilted by `β¹`, sweep over the second.
    FixedBeta1(f64),
    /// Second component pinned at `u²`, sweep over the first.
    FixedU2(f64),
}

impl Frame {
    /// Component that the sweep varies.
    pub fn free_component(self) -> usize {
        match self {
            Frame::Pure | Frame::FixedU2(_) => 0,
            Frame::FixedBeta1(_) => 1,
        }
    }

    fn base(self) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        match self {
            Frame::Pure => (vec![], vec![]),
            Frame::FixedBeta1(b) => (vec![(0, b)], vec![]),
            Frame::FixedU2(v) => (vec![], vec![(1, v)]),
        }
    }

    /// Problem whose minimizers form the microcanonical-type set at `v`.
    pub fn micro_task(self, v: f64) -> Task {
        let (tilt, mut constraints) = self.base();
        constraints.push((self.free_component(), v));
        Task { tilt, constraints }
    }

    /// Problem whose minimizers form the canonical-type set at `b`.
    pub fn canonical_task(self, b: f64) -> Task {
        let (mut tilt, constraints) = self.base();
        tilt.push((self.free_component(), b));
        Task { tilt, constraints }
    }

    /// Problem whose value is subtracted so the frame's entropy peaks at 0.
    fn offset_task(self) -> Option<Task> {
        match self {
            Frame::Pure => None,
            _ => {
                let (tilt, constraints) = self.base();
                Some(Task { tilt, constraints })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub converged: bool,
    #[serde(with = "crate::floats")]
    pub residual: f64,
    pub restarts: usize,
    pub certified: bool,
    pub infeasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl PointDiagnostics {
    fn from_outcome(o: &Outcome) -> Self {
        Self {
            converged: o.converged,
            residual: o.residual,
            restarts: o.starts,
            certified: o.certified,
            infeasible: o.infeasible,
            message: None,
        }
    }

    fn failed(e: &Error) -> Self {
        Self {
            converged: false,
            residual: match e {
                Error::Feasibility { residual, .. } => *residual,
                _ => f64::NAN,
            },
            restarts: 0,
            certified: false,
            infeasible: false,
            message: Some(e.to_string()),
        }
    }
}

/// Values of `s` over a u-grid or of `φ` over a β-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoCurve {
    pub frame: Frame,
    pub grid: Vec<f64>,
    #[serde(with = "crate::floats::vec")]
    pub values: Vec<f64>,
    pub diagnostics: Vec<PointDiagnostics>,
}

impl ThermoCurve {
    pub fn sampled(&self) -> Result<SampledCurve> {
        SampledCurve::new(self.grid.clone(), self.values.clone())
    }

    /// True when every point solved without a diagnostic.
    pub fn all_converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.converged)
    }

    /// True when every point is exact.
    pub fn certified(&self) -> bool {
        self.diagnostics.iter().all(|d| d.certified)
    }
}

/// Thermodynamic functions of one model.
pub struct Thermo<'m> {
    engine: Engine<'m>,
}

impl<'m> Thermo<'m> {
    pub fn new(model: &'m Model, opts: SolverOptions) -> Self {
        Self {
            engine: Engine::new(model, opts),
        }
    }

    pub fn model(&self) -> &'m Model {
        self.engine.model()
    }

    pub fn options(&self) -> &SolverOptions {
        self.engine.options()
    }

    pub fn engine(&self) -> &Engine<'m> {
        &self.engine
    }

    /// Raw multi-start solve; unconverged answers come back flagged.
    pub fn solve_raw(&self, task: &Task, stream: u64) -> Result<Outcome> {
        self.engine.solve(task, stream)
    }

    /// Multi-start solve that turns an unconverged answer into an error.
    pub fn solve(&self, task: &Task, stream: u64) -> Result<Outcome> {
        let out = self.engine.solve(task, stream)?;
        if !out.converged {
            return Err(Error::NotConverged {
                best: out.value,
                message: format!(
                    "no start settled within {} iterations",
                    self.options().max_iterations
                ),
            });
        }
        Ok(out)
    }

    fn check_frame(&self, frame: Frame) -> Result<()> {
        let sigma = self.model().sigma();
        match frame {
            Frame::Pure if sigma != 1 => Err(Error::Argument(format!(
                "one-dimensional sweeps need σ = 1, model has σ = {sigma}"
            ))),
            Frame::FixedBeta1(_) | Frame::FixedU2(_) if sigma != 2 => Err(Error::Argument(
                format!("mixed ensembles need σ = 2, model has σ = {sigma}"),
            )),
            Frame::FixedBeta1(_) | Frame::FixedU2(_)
                if self.model().tau.is_some_and(|t| t != 1) =>
            {
                Err(Error::Argument("mixed ensembles need τ = 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// `[min, max]` of component `j` over the hidden space.
    pub fn component_range(&self, j: usize) -> Result<(f64, f64)> {
        let model = self.model();
        if j >= model.sigma() {
            return Err(Error::Argument(format!("no component {j}")));
        }
        match (&model.space, &model.components[j]) {
            (HiddenSpace::Table { .. }, Representation::Table(v)) => Ok((
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )),
            _ => {
                let r = self.engine.range(j);
                Ok((r.min, r.max))
            }
        }
    }

    /// Distinct attained values of a tabular component, ascending.
    pub fn table_values(&self, j: usize) -> Option<Vec<f64>> {
        match self.model().components.get(j)? {
            Representation::Table(v) => {
                let mut out = v.clone();
                out.sort_by(f64::total_cmp);
                out.dedup();
                Some(out)
            }
            Representation::Field { .. } => None,
        }
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        let sigma = self.model().sigma();
        if v.len() != sigma {
            return Err(Error::shape(
                format!("{what} with {sigma} entries"),
                format!("{} entries", v.len()),
            ));
        }
        Ok(())
    }

    /// `φ(β) = inf (I + ⟨β, H̃⟩)`.
    pub fn free_energy(&self, beta: &[f64]) -> Result<f64> {
        self.check_len(beta, "multiplier")?;
        let task = Task::unconstrained(beta.iter().copied().enumerate().collect());
        Ok(self.solve(&task, 0)?.value)
    }

    /// `s(u) = −inf{I : H̃ = u}`, `−∞` off the attainable range.
    pub fn entropy_point(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u, "conserved value")?;
        let task = Task {
            tilt: vec![],
            constraints: u.iter().copied().enumerate().collect(),
        };
        Ok(-self.solve(&task, 0)?.value)
    }

    /// Value subtracted inside `frame` (`φ¹(β¹)` or `J²(u²)`).
    pub fn frame_offset(&self, frame: Frame) -> Result<f64> {
        self.check_frame(frame)?;
        let Some(task) = frame.offset_task() else {
            return Ok(0.0);
        };
        let out = self.solve(&task, u64::MAX)?;
        if out.infeasible {
            return Err(Error::Domain(format!(
                "{frame:?} pins an unattainable value"
            )));
        }
        Ok(out.value)
    }

    fn sweep<F>(&self, frame: Frame, grid: &[f64], task_at: F, sign: f64) -> Result<ThermoCurve>
    where
        F: Fn(f64) -> Task + Sync,
    {
        if grid.is_empty() {
            return Err(Error::Argument("empty grid".into()));
        }
        let offset = self.frame_offset(frame)?;
        let results: Vec<Result<(f64, PointDiagnostics)>> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &v)| match self.solve(&task_at(v), i as u64) {
                Ok(o) => {
                    let value = if o.infeasible {
                        f64::NEG_INFINITY
                    } else {
                        sign * (o.value - offset)
                    };
                    Ok((value, PointDiagnostics::from_outcome(&o)))
                }
                Err(e) if e.is_diagnostic() => {
                    let value = match e {
                        Error::NotConverged { best, .. } => sign * (best - offset),
                        _ => f64::NEG_INFINITY,
                    };
                    Ok((value, PointDiagnostics::failed(&e)))
                }
                Err(e) => Err(e),
            })
            .collect();
        let mut values = Vec::with_capacity(grid.len());
        let mut diagnostics = Vec::with_capacity(grid.len());
        for r in results {
            let (v, d) = r?;
            values.push(v);
            diagnostics.push(d);
        }
        Ok(ThermoCurve {
            frame,
            grid: grid.to_vec(),
            values,
            diagnostics,
        })
    }

    /// Frame entropy over a grid of the free component.
    pub fn frame_entropy_curve(&self, frame: Frame, grid: &[f64]) -> Result<ThermoCurve> {
        self.check_frame(frame)?;
        self.sweep(frame, grid, |v| frame.micro_task(v), -1.0)
    }

    /// Frame free energy over a grid of multipliers of the free component.
    pub fn frame_free_energy_curve(&self, frame: Frame, betas: &[f64]) -> Result<ThermoCurve> {
        self.check_frame(frame)?;
        self.sweep(frame, betas, |b| frame.canonical_task(b), 1.0)
    }

    pub fn entropy_curve(&self, grid: &[f64]) -> Result<ThermoCurve> {
        self.frame_entropy_curve(Frame::Pure, grid)
    }

    pub fn free_energy_curve(&self, betas: &[f64]) -> Result<ThermoCurve> {
        self.frame_free_energy_curve(Frame::Pure, betas)
    }

    /// `s_{β¹}(u²) = −inf{I + β¹H̃¹ : H̃² = u²} + φ¹(β¹)`.
    pub fn mixed_entropy_fixed_beta1(&self, beta1: f64, u2_grid: &[f64]) -> Result<ThermoCurve> {
        self.frame_entropy_curve(Frame::FixedBeta1(beta1), u2_grid)
    }

    /// `s^{u²}(u¹) = −J(u¹, u²) + J²(u²)`.
    pub fn mixed_entropy_fixed_u2(&self, u2: f64, u1_grid: &[f64]) -> Result<ThermoCurve> {
        self.frame_entropy_curve(Frame::FixedU2(u2), u1_grid)
    }

    /// `φ_{β¹}(β²) = inf{I + β¹H̃¹ + β²H̃²} − φ¹(β¹)`.
    pub fn mixed_free_energy(&self, beta1: f64, beta2: f64) -> Result<f64> {
        let frame = Frame::FixedBeta1(beta1);
        let offset = self.frame_offset(frame)?;
        Ok(self.solve(&frame.canonical_task(beta2), 0)?.value - offset)
    }

    /// `φ^{u²}(β¹) = inf{I + β¹H̃¹ : H̃² = u²} − J²(u²)`.
    pub fn mixed_free_energy_fixed_u2(&self, u2: f64, beta1: f64) -> Result<f64> {
        let frame = Frame::FixedU2(u2);
        let offset = self.frame_offset(frame)?;
        Ok(self.solve(&frame.canonical_task(beta1), 0)?.value - offset)
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Closed-form Curie–Weiss entropy for `u ∈ [−½, 0]`, `−∞` elsewhere.
pub fn curie_weiss_entropy(u: f64) -> f64 {
    if !(-0.5..=0.0).contains(&u) {
        return f64::NEG_INFINITY;
    }
    let p = 0.5 * (1.0 + (-2.0 * u).sqrt());
    let xlogx = |t: f64| if t > 0.0 { t * t.ln() } else { 0.0 };
    -(std::f64::consts::LN_2 + xlogx(p) + xlogx(1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lft::legendre_transform;
    use crate::models::{build_builtin, BuiltinSpec};

    fn cw() -> Model {
        build_builtin(&BuiltinSpec::curie_weiss()).unwrap()
    }

    fn table3() -> Model {
        build_builtin(&BuiltinSpec::three_point_table()).unwrap()
    }

    fn mixed4() -> Model {
        build_builtin(&BuiltinSpec::four_point_mixed()).unwrap()
    }

    /// Independent check: minimize over the magnetization on a fine grid
    /// plus golden-section refinement.
    fn cw_free_energy_oracle(beta: f64) -> f64 {
        let f = |m: f64| {
            let p = 0.5 * (1.0 + m);
            let xl = |t: f64| if t > 0.0 { t * (2.0 * t).ln() } else { 0.0 };
            xl(p) + xl(1.0 - p) - beta * m * m / 2.0
        };
        let (mut best_m, mut best) = (0.0, f64::INFINITY);
        for i in 0..=2000 {
            let m = -1.0 + i as f64 / 1000.0;
            if f(m) < best {
                best = f(m);
                best_m = m;
            }
        }
        let (mut a, mut b) = ((best_m - 1e-3f64).max(-1.0), (best_m + 1e-3f64).min(1.0));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b)).min(best)
    }

    #[test]
    fn zero_multiplier() {
        for m in [cw(), table3()] {
            let t = Thermo::new(&m, SolverOptions::default());
            assert!(t.free_energy(&[0.0]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn curie_weiss_free_energy() {
        let m = cw();
        let t = Thermo::new(&m, SolverOptions::default());
        assert!(t.free_energy(&[1.0]).unwrap().abs() < 1e-9);
        for beta in [-1.0, 0.5, 1.5, 2.0, 3.0] {
            let got = t.free_energy(&[beta]).unwrap();
            let want = cw_free_energy_oracle(beta);
            assert!((got - want).abs() < 1e-9, "β = {beta}: {got} vs {want}");
        }
        // Frozen from the oracle above.
        assert!((t.free_energy(&[2.0]).unwrap() + 0.326_5).abs() < 1e-4);
    }

    #[test]
    fn table_free_energy() {
        let m = table3();
        let t = Thermo::new(&m, SolverOptions::default());
        assert!((t.free_energy(&[-0.2]).unwrap() + 0.2).abs() < 1e-15);
    }

    #[test]
    fn curie_weiss_entropy_points() {
        let m = cw();
        let t = Thermo::new(&m, SolverOptions::default());
        let s = t.entropy_point(&[-0.125]).unwrap();
        assert!((s - curie_weiss_entropy(-0.125)).abs() < 1e-9);
        assert!((s + 0.1308).abs() < 1e-4);
        assert_eq!(t.entropy_point(&[0.1]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn table_entropy_points() {
        let m = table3();
        let t = Thermo::new(&m, SolverOptions::default());
        assert_eq!(t.entropy_point(&[1.0]).unwrap(), -0.5);
        let c = t.entropy_curve(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values, vec![0.0, -0.5, -0.2]);
        assert!(c.certified());
    }

    #[test]
    fn curie_weiss_curve_matches_closed_form() {
        let m = cw();
        let t = Thermo::new(&m, SolverOptions::default());
        let grid = linspace(-0.5, 0.0, 101);
        let c = t.entropy_curve(&grid).unwrap();
        assert!(c.all_converged());
        let err = grid
            .iter()
            .zip(&c.values)
            .map(|(u, s)| (s - curie_weiss_entropy(*u)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn duality_on_table() {
        let m = table3();
        let t = Thermo::new(&m, SolverOptions::default());
        let s = t
            .entropy_curve(&[0.0, 1.0, 2.0])
            .unwrap()
            .sampled()
            .unwrap();
        let betas = linspace(-2.0, 2.0, 41);
        let phi = t.free_energy_curve(&betas).unwrap();
        let star = legendre_transform(&s, &betas).unwrap();
        for (a, b) in phi.values.iter().zip(&star.values) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixed_examples() {
        let m = mixed4();
        let t = Thermo::new(&m, SolverOptions::default());
        let c = t.mixed_entropy_fixed_beta1(0.0, &[0.0, 1.0]).unwrap();
        assert_eq!(c.values[0], 0.0);
        assert!((c.values[1] + 0.1).abs() < 1e-15);
        assert!((t.frame_offset(Frame::FixedU2(1.0)).unwrap() - 0.1).abs() < 1e-15);
        let c = t.mixed_entropy_fixed_u2(1.0, &[0.0, 1.0]).unwrap();
        assert!((c.values[0] + 0.2).abs() < 1e-15);
        assert_eq!(c.values[1], 0.0);
        assert_eq!(t.mixed_free_energy(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(t.mixed_free_energy(0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            t.frame_offset(Frame::FixedU2(0.5)),
            Err(Error::Domain(_))
        ));
        let c = t.mixed_entropy_fixed_u2(1.0, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values[2], f64::NEG_INFINITY);
    }

    #[test]
    fn zero_tilt_reduces_to_marginal() {
        let m = mixed4();
        let t = Thermo::new(&m, SolverOptions::default());
        let reduced = build_builtin(&BuiltinSpec::Tabular {
            rate: vec![0.0, 0.4, 0.3, 0.1],
            repr: vec![vec![0.0, 0.0, 1.0, 1.0]],
        })
        .unwrap();
        let tr = Thermo::new(&reduced, SolverOptions::default());
        let a = t.mixed_entropy_fixed_beta1(0.0, &[0.0, 1.0]).unwrap();
        let b = tr.entropy_curve(&[0.0, 1.0]).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn pure_frame_needs_one_component() {
        let m = mixed4();
        let t = Thermo::new(&m, SolverOptions::default());
        assert!(matches!(
            t.entropy_curve(&[0.0, 1.0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(t.free_energy(&[0.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn closed_form_oracle() {
        assert_eq!(curie_weiss_entropy(0.0), 0.0);
        assert!((curie_weiss_entropy(-0.5) + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(curie_weiss_entropy(0.1), f64::NEG_INFINITY);
    }
}

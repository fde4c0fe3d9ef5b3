//! Per-value equivalence labels and their machine checks against computed
//! equilibrium sets.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{compare_members, equilibrium_set, Ensemble, EquilibriumSet, Relation};
use crate::error::{Error, Result};
use crate::lft::{concave_hull, support_tests, HullResult, SampledCurve, SupportTolerances};
use crate::model::{repr_value, HiddenSpace, Macrostate, Model, Representation};
use crate::thermo::{linspace, Frame, Thermo};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// Strictly supported: the microcanonical set equals a canonical set.
    Full,
    /// On the hull without strict support: a proper subset of canonical sets.
    Partial,
    /// Below the hull: disjoint from every canonical set.
    Nonequivalent,
    /// First or last finite grid point of the domain.
    Boundary,
    /// Value not attained.
    Infeasible,
}

/// Sampled frame entropy with its hull and support tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct HullContext {
    pub frame: Frame,
    pub curve: SampledCurve,
    pub hull: HullResult,
    pub tolerances: SupportTolerances,
    /// Every sample came from exact enumeration.
    pub certified: bool,
    pub converged: bool,
}

impl HullContext {
    pub fn from_curve(frame: Frame, curve: SampledCurve, certified: bool, converged: bool) -> Self {
        let hull = concave_hull(&curve);
        let tolerances = SupportTolerances::for_curve(&curve);
        Self {
            frame,
            curve,
            hull,
            tolerances,
            certified,
            converged,
        }
    }

    pub fn build(thermo: &Thermo, frame: Frame, grid: &[f64]) -> Result<Self> {
        let tc = thermo.frame_entropy_curve(frame, grid)?;
        let curve = tc
            .sampled()
            .map_err(|_| Error::Domain("no grid value is attainable".into()))?;
        Ok(Self::from_curve(
            frame,
            curve,
            tc.certified(),
            tc.all_converged(),
        ))
    }

    /// `count` multipliers on `±10·max|hull slope|`, the half-width floored at 1.
    pub fn default_beta_grid(&self, count: usize) -> Vec<f64> {
        let b = (10.0 * self.hull.max_abs_slope()).max(1.0);
        linspace(-b, b, count)
    }

    /// Grid indices of the u-arginf of `β·u − s**(u)`.
    pub fn conjugate_arginf(&self, beta: f64) -> Vec<usize> {
        self.hull.conjugate_arginf(beta, self.tolerances.eps_c)
    }
}

/// Grid of the frame's free component: the attained values for tables,
/// otherwise `count` points across the attainable range.
pub fn default_grid(thermo: &Thermo, frame: Frame, count: usize) -> Result<Vec<f64>> {
    let j = frame.free_component();
    if let Some(v) = thermo.table_values(j) {
        return Ok(v);
    }
    let (lo, hi) = thermo.component_range(j)?;
    Ok(linspace(lo, hi, count))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Some set involved is heuristic, so the outcome is informative only.
    pub advisory: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub u: f64,
    #[serde(with = "crate::floats")]
    pub s: f64,
    #[serde(with = "crate::floats")]
    pub s_hull: f64,
    #[serde(with = "crate::floats")]
    pub beta_minus: f64,
    #[serde(with = "crate::floats")]
    pub beta_plus: f64,
    pub in_c: bool,
    pub in_t: bool,
    pub label: Label,
    #[serde(with = "crate::floats::option")]
    pub witness: Option<f64>,
    pub checks: Vec<Check>,
}

impl PointRecord {
    /// True when no binding check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.advisory)
    }
}

/// Label of the grid value `u` from the support tests alone.
pub fn classify_point(ctx: &HullContext, u: f64) -> Result<PointRecord> {
    let i = ctx.curve.index_of(u)?;
    let st = support_tests(&ctx.curve, &ctx.hull, i, ctx.tolerances);
    let s = ctx.curve.values[i];
    let label = if !s.is_finite() {
        Label::Infeasible
    } else if st.in_t {
        Label::Full
    } else if st.in_c {
        Label::Partial
    } else {
        Label::Nonequivalent
    };
    Ok(PointRecord {
        u: ctx.curve.grid[i],
        s,
        s_hull: ctx.hull.hull[i],
        beta_minus: ctx.hull.beta_minus[i],
        beta_plus: ctx.hull.beta_plus[i],
        in_c: st.in_c,
        in_t: st.in_t,
        label,
        witness: st.witness,
        checks: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Multipliers for the disjointness test; derived from the hull when absent.
    pub beta_grid: Option<Vec<f64>>,
    pub beta_count: usize,
    /// Max-norm distance identifying macrostates of non-tabular models.
    pub set_tol: f64,
    pub verify: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            beta_grid: None,
            beta_count: 1000,
            set_tol: 1e-6,
            verify: true,
        }
    }
}

/// Equilibrium sets for one hull context, with the β-grid canonical sets
/// computed once on first use.
pub struct Verifier<'a, 'm> {
    thermo: &'a Thermo<'m>,
    ctx: &'a HullContext,
    betas: Vec<f64>,
    set_tol: f64,
    grid_sets: OnceLock<Result<Vec<EquilibriumSet>>>,
}

fn is_exact(set: &EquilibriumSet) -> bool {
    set.is_exact() && set.converged
}

fn stream_of(x: f64) -> u64 {
    x.to_bits()
}

impl<'a, 'm> Verifier<'a, 'm> {
    pub fn new(thermo: &'a Thermo<'m>, ctx: &'a HullContext, opts: &ClassifyOptions) -> Self {
        let betas = opts
            .beta_grid
            .clone()
            .unwrap_or_else(|| ctx.default_beta_grid(opts.beta_count));
        Self {
            thermo,
            ctx,
            betas,
            set_tol: opts.set_tol,
            grid_sets: OnceLock::new(),
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn micro(&self, u: f64) -> Result<EquilibriumSet> {
        equilibrium_set(
            self.thermo,
            Ensemble::micro_in(self.ctx.frame, u),
            stream_of(u),
        )
    }

    pub fn canonical(&self, beta: f64) -> Result<EquilibriumSet> {
        equilibrium_set(
            self.thermo,
            Ensemble::canonical_in(self.ctx.frame, beta),
            stream_of(beta),
        )
    }

    fn grid_sets(&self) -> Result<&[EquilibriumSet]> {
        let sets = self
            .grid_sets
            .get_or_init(|| self.betas.par_iter().map(|&b| self.canonical(b)).collect());
        match sets {
            Ok(v) => Ok(v),
            Err(e) => Err(Error::Model(format!("canonical sets on the β grid: {e}"))),
        }
    }

    fn relation(&self, a: &EquilibriumSet, b: &EquilibriumSet) -> Relation {
        compare_members(&a.members, &b.members, self.set_tol).relation
    }

    /// Checks matching the record's label. Boundary and infeasible points
    /// carry none.
    pub fn verify(&self, record: &PointRecord) -> Result<Vec<Check>> {
        let mut checks = Vec::new();
        if matches!(record.label, Label::Boundary | Label::Infeasible) {
            return Ok(checks);
        }
        let micro = self.micro(record.u)?;
        let i = self.ctx.curve.index_of(record.u)?;
        let probes = self.ctx.hull.superdifferential(i).probes();
        match record.label {
            Label::Full => {
                let beta = record.witness.ok_or_else(|| {
                    Error::Model(format!(
                        "u = {} is labelled Full without a witness",
                        record.u
                    ))
                })?;
                let canon = self.canonical(beta)?;
                let rel = self.relation(&micro, &canon);
                checks.push(Check {
                    name: "equal_at_witness".into(),
                    passed: rel == Relation::Equal,
                    advisory: !(is_exact(&micro) && is_exact(&canon)),
                    evidence: format!("β = {beta}: {rel:?}"),
                });
            }
            Label::Partial => {
                for beta in probes {
                    let canon = self.canonical(beta)?;
                    let rel = self.relation(&micro, &canon);
                    checks.push(Check {
                        name: "proper_subset_at_probe".into(),
                        passed: rel == Relation::ProperSubsetAB,
                        advisory: !(is_exact(&micro) && is_exact(&canon)),
                        evidence: format!("β = {beta}: {rel:?}"),
                    });
                }
            }
            Label::Nonequivalent => {
                let sets = self.grid_sets()?;
                let bad: Vec<f64> = self
                    .betas
                    .iter()
                    .zip(sets)
                    .filter(|(_, c)| self.relation(&micro, c) != Relation::Disjoint)
                    .map(|(&b, _)| b)
                    .collect();
                checks.push(Check {
                    name: "disjoint_on_beta_grid".into(),
                    passed: bad.is_empty(),
                    advisory: !(is_exact(&micro) && sets.iter().all(is_exact)),
                    evidence: {
                        let n = self.betas.len();
                        match bad.first() {
                            None => format!("{n}/{n} disjoint"),
                            Some(b) => format!(
                                "{}/{n} disjoint, first intersection at β = {b}",
                                n - bad.len()
                            ),
                        }
                    },
                });
                let mut bad = Vec::new();
                let mut exact = is_exact(&micro);
                for &beta in &probes {
                    let canon = self.canonical(beta)?;
                    exact &= is_exact(&canon);
                    if self.relation(&micro, &canon) != Relation::Disjoint {
                        bad.push(beta);
                    }
                }
                checks.push(Check {
                    name: "disjoint_on_superdifferential".into(),
                    passed: bad.is_empty(),
                    advisory: !exact,
                    evidence: format!("probes {probes:?}, intersecting {bad:?}"),
                });
            }
            Label::Boundary | Label::Infeasible => {}
        }
        Ok(checks)
    }
}

/// Checks for one record; see [`Verifier::verify`].
pub fn verify_point(verifier: &Verifier, record: &PointRecord) -> Result<Vec<Check>> {
    verifier.verify(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub frame: Frame,
    pub model_hash: String,
    pub grid: Vec<f64>,
    /// Multipliers of the disjointness test.
    pub betas: Vec<f64>,
    pub tolerances: SupportTolerances,
    pub set_tol: f64,
    pub certified: bool,
    pub converged: bool,
    /// Equality of the domains of `s` and its hull cannot be seen on a grid.
    pub domain_hypothesis: String,
    pub records: Vec<PointRecord>,
}

impl ClassificationReport {
    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn record_at(&self, u: f64) -> Option<&PointRecord> {
        crate::lft::grid_index(&self.grid, u)
            .ok()
            .map(|i| &self.records[i])
    }

    /// `(u, check name)` for each binding failure at a non-boundary point.
    pub fn failures(&self) -> Vec<(f64, String)> {
        self.records
            .iter()
            .filter(|r| r.label != Label::Boundary)
            .flat_map(|r| {
                r.checks
                    .iter()
                    .filter(|c| !c.passed && !c.advisory)
                    .map(move |c| (r.u, c.name.clone()))
            })
            .collect()
    }

    /// Labels agree with the support flags, and Boundary sits only at the
    /// extreme finite points.
    pub fn coherent(&self) -> bool {
        let finite: Vec<usize> = (0..self.records.len())
            .filter(|&i| self.records[i].s.is_finite())
            .collect();
        let ends = [finite.first().copied(), finite.last().copied()];
        self.records.iter().enumerate().all(|(i, r)| match r.label {
            Label::Full => r.in_t,
            Label::Partial => r.in_c && !r.in_t,
            Label::Nonequivalent => !r.in_c,
            Label::Boundary => ends.contains(&Some(i)),
            Label::Infeasible => !r.s.is_finite(),
        })
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// One row per grid value with the curve columns plus label and witness.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "u",
            "s",
            "s_hull",
            "beta_minus",
            "beta_plus",
            "in_C",
            "in_T",
            "label",
            "witness",
        ])?;
        for r in &self.records {
            let label = serde_json::to_value(r.label)?;
            w.write_record([
                r.u.to_string(),
                r.s.to_string(),
                r.s_hull.to_string(),
                r.beta_minus.to_string(),
                r.beta_plus.to_string(),
                r.in_c.to_string(),
                r.in_t.to_string(),
                label.as_str().unwrap_or_default().to_string(),
                r.witness.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// FNV-1a of the model's JSON form.
pub fn model_hash(model: &Model) -> String {
    let text = serde_json::to_string(model).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Labels (and, if requested, checks) every value of `grid` in `frame`.
pub fn classify_sweep(
    thermo: &Thermo,
    frame: Frame,
    grid: &[f64],
    opts: &ClassifyOptions,
) -> Result<ClassificationReport> {
    if thermo.model().sigma() > 2 {
        return Err(Error::Argument("classification needs σ ≤ 2".into()));
    }
    if frame == Frame::Pure && thermo.model().sigma() != 1 {
        return Err(Error::Argument(
            "σ = 2 models are classified in a mixed frame".into(),
        ));
    }
    let ctx = HullContext::build(thermo, frame, grid)?;
    let mut records: Vec<PointRecord> = ctx
        .curve
        .grid
        .iter()
        .map(|&u| classify_point(&ctx, u))
        .collect::<Result<_>>()?;
    let finite = ctx.curve.finite_indices();
    for i in [finite.first(), finite.last()].into_iter().flatten() {
        records[*i].label = Label::Boundary;
    }
    let verifier = Verifier::new(thermo, &ctx, opts);
    if opts.verify {
        let checks: Vec<Result<Vec<Check>>> =
            records.par_iter().map(|r| verifier.verify(r)).collect();
        for (r, c) in records.iter_mut().zip(checks) {
            r.checks = c?;
        }
    }
    Ok(ClassificationReport {
        schema_version: SCHEMA_VERSION,
        frame,
        model_hash: model_hash(thermo.model()),
        grid: ctx.curve.grid.clone(),
        betas: verifier.betas().to_vec(),
        tolerances: ctx.tolerances,
        set_tol: opts.set_tol,
        certified: ctx.certified,
        converged: ctx.converged,
        domain_hypothesis: "assumed at grid resolution".into(),
        records,
    })
}

pub fn classify(
    thermo: &Thermo,
    grid: &[f64],
    opts: &ClassifyOptions,
) -> Result<ClassificationReport> {
    classify_sweep(thermo, Frame::Pure, grid, opts)
}

/// Classification inside a mixed frame (`σ = 2`, `τ = 1`).
pub fn classify_mixed(
    thermo: &Thermo,
    frame: Frame,
    grid: &[f64],
    opts: &ClassifyOptions,
) -> Result<ClassificationReport> {
    if frame == Frame::Pure {
        return Err(Error::Argument(
            "mixed classification needs a mixed frame".into(),
        ));
    }
    classify_sweep(thermo, frame, grid, opts)
}

/// Members of a canonical set sharing one value of the free component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub u: f64,
    pub members: Vec<Macrostate>,
    /// The microcanonical-type set at `u`.
    pub micro: EquilibriumSet,
    /// `members` equals `micro`.
    pub matches: bool,
    /// The line of slope β through `(u, s(u))` supports the entropy.
    pub supports: bool,
    /// `u` lies in the hull's conjugate arginf at β (widened by one grid cell);
    /// absent without a hull context.
    pub in_superdifferential: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub beta: f64,
    pub set: EquilibriumSet,
    pub parts: Vec<Part>,
}

impl Decomposition {
    pub fn consistent(&self) -> bool {
        !self.set.is_empty()
            && self
                .parts
                .iter()
                .all(|p| p.matches && p.supports && p.in_superdifferential != Some(false))
    }
}

fn free_value(model: &Model, frame: Frame, x: &Macrostate) -> Result<f64> {
    Ok(repr_value(model, x)?[frame.free_component()])
}

/// Splits the canonical-type set at β by the value of the free component and
/// checks each group against the microcanonical-type set there.
pub fn decompose_canonical(
    thermo: &Thermo,
    frame: Frame,
    beta: f64,
    ctx: Option<&HullContext>,
    set_tol: f64,
) -> Result<Decomposition> {
    let model = thermo.model();
    let set = equilibrium_set(thermo, Ensemble::canonical_in(frame, beta), stream_of(beta))?;
    let tol = thermo.options().tol_feas;
    let mut tagged: Vec<(f64, Macrostate)> = set
        .members
        .iter()
        .map(|x| Ok((free_value(model, frame, x)?, x.clone())))
        .collect::<Result<_>>()?;
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut buckets: Vec<Vec<(f64, Macrostate)>> = Vec::new();
    for (u, x) in tagged {
        match buckets.last_mut() {
            Some(b) if u - b[0].0 <= tol => b.push((u, x)),
            Some(b) if u - b.last().map_or(u, |l| l.0) <= tol => {
                return Err(Error::Resolution(format!(
                    "values {} and {u} are within {tol:e} but do not share a bucket; use a finer tolerance",
                    b[0].0
                )))
            }
            _ => buckets.push(vec![(u, x)]),
        }
    }

    let window = ctx.map(|c| {
        let idx = c.conjugate_arginf(beta);
        let g = &c.curve.grid;
        let (lo, hi) = (idx[0], idx[idx.len() - 1]);
        let below = g[lo] - if lo > 0 { g[lo] - g[lo - 1] } else { 0.0 };
        let above = g[hi]
            + if hi + 1 < g.len() {
                g[hi + 1] - g[hi]
            } else {
                0.0
            };
        (below, above)
    });

    let mut parts = Vec::with_capacity(buckets.len());
    for b in buckets {
        let u = b.iter().map(|p| p.0).sum::<f64>() / b.len() as f64;
        let members: Vec<Macrostate> = b.into_iter().map(|p| p.1).collect();
        let micro = equilibrium_set(thermo, Ensemble::micro_in(frame, u), stream_of(u))?;
        let matches =
            compare_members(&members, &micro.members, set_tol).relation == Relation::Equal;
        let gap = (set.objective - (micro.objective + beta * u)).abs();
        let supports = gap <= 10.0 * thermo.options().tol_deg.max(tol) * (1.0 + beta.abs());
        parts.push(Part {
            u,
            members,
            micro,
            matches,
            supports,
            in_superdifferential: window.map(|(lo, hi)| u >= lo - tol && u <= hi + tol),
        });
    }
    Ok(Decomposition { beta, set, parts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Differentiability {
    pub beta: f64,
    /// Grid values of the conjugate arginf.
    pub arginf: Vec<f64>,
    /// The arginf spans at most one grid cell.
    pub differentiable: bool,
    /// The canonical set is a single microcanonical set and the arginf lies
    /// where the entropy touches its hull.
    pub single_set: bool,
    pub consistent: bool,
}

pub fn differentiability_check(
    thermo: &Thermo,
    beta: f64,
    ctx: &HullContext,
    set_tol: f64,
) -> Result<Differentiability> {
    let idx = ctx.conjugate_arginf(beta);
    let differentiable = idx.last().unwrap_or(&0) - idx.first().unwrap_or(&0) <= 1;
    let on_hull = idx.iter().all(|&i| {
        let s = ctx.curve.values[i];
        s.is_finite() && (ctx.hull.hull[i] - s).abs() <= ctx.tolerances.eps_c
    });
    let dec = decompose_canonical(thermo, ctx.frame, beta, Some(ctx), set_tol)?;
    let single_set = dec.parts.len() == 1 && dec.parts[0].matches && on_hull;
    Ok(Differentiability {
        beta,
        arginf: idx.iter().map(|&i| ctx.curve.grid[i]).collect(),
        differentiable,
        single_set,
        consistent: differentiable == single_set,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedEquality {
    pub beta1: f64,
    pub u2: f64,
    /// Minimizers of `I + β¹H̃¹` on `{H̃² = u²}`.
    pub direct: Vec<Macrostate>,
    /// Minimizers of the conditioned rate function plus `β¹H̃¹`.
    pub via_rate: Vec<Macrostate>,
    pub equal: bool,
    pub exact: bool,
}

/// Computes the mixed set by tilting then conditioning and by conditioning
/// the rate function then tilting, and compares them.
pub fn verify_mixed_equality(thermo: &Thermo, beta1: f64, u2: f64) -> Result<MixedEquality> {
    let model = thermo.model();
    if model.sigma() != 2 || model.tau.is_some_and(|t| t != 1) {
        return Err(Error::Argument(
            "mixed equality needs σ = 2 and τ = 1".into(),
        ));
    }
    let direct = equilibrium_set(thermo, Ensemble::Mixed { beta1, u2 }, 0)?;
    let (via_rate, exact, tol) = match (&model.space, &model.components[..]) {
        (HiddenSpace::Table { rate }, [Representation::Table(h1), Representation::Table(h2)]) => {
            let slice: Vec<usize> = (0..rate.len()).filter(|&k| h2[k] == u2).collect();
            let floor = slice.iter().map(|&k| rate[k]).fold(f64::INFINITY, f64::min);
            let conditioned = |k: usize| rate[k] - floor;
            let obj: Vec<(usize, f64)> = slice
                .iter()
                .map(|&k| (k, conditioned(k) + beta1 * h1[k]))
                .collect();
            let best = obj.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let tie = thermo.options().tol_deg;
            let members = obj
                .iter()
                .filter(|p| p.1 <= best + tie)
                .map(|p| Macrostate::Index(p.0))
                .collect();
            (members, direct.is_exact(), 0.0)
        }
        _ => {
            let bf = crate::equilibria::brute_force_set(model, Ensemble::Mixed { beta1, u2 })?;
            let tol = 2.0 / crate::equilibria::BRUTE_FORCE_STEPS as f64;
            (bf.members, false, tol)
        }
    };
    let equal = compare_members(&direct.members, &via_rate, tol).relation == Relation::Equal;
    Ok(MixedEquality {
        beta1,
        u2,
        direct: direct.members,
        via_rate,
        equal,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_builtin, BuiltinSpec};
    use crate::thermo::SolverOptions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build(spec: BuiltinSpec) -> Model {
        build_builtin(&spec).unwrap()
    }

    fn table(rate: Vec<f64>, h: Vec<f64>) -> Model {
        build(BuiltinSpec::Tabular {
            rate,
            repr: vec![h],
        })
    }

    fn pure_ctx(t: &Thermo) -> HullContext {
        let grid = default_grid(t, Frame::Pure, 0).unwrap();
        HullContext::build(t, Frame::Pure, &grid).unwrap()
    }

    #[test]
    fn point_labels() {
        let m = build(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        let ctx = pure_ctx(&t);
        assert_eq!(
            classify_point(&ctx, 1.0).unwrap().label,
            Label::Nonequivalent
        );
        let r = classify_point(&ctx, 2.0).unwrap();
        assert_eq!(r.label, Label::Full);
        assert!((r.witness.unwrap() + 0.2).abs() < 1e-12);
        assert!(matches!(classify_point(&ctx, 0.5), Err(Error::Argument(_))));

        let m = table(vec![0.0, 0.0], vec![0.0, 1.0]);
        let t = Thermo::new(&m, SolverOptions::default());
        let ctx = pure_ctx(&t);
        let r = classify_point(&ctx, 0.0).unwrap();
        assert_eq!(r.label, Label::Partial);
        assert_eq!(r.witness, Some(0.0));
        let v = Verifier::new(&t, &ctx, &ClassifyOptions::default());
        let checks = v.verify(&r).unwrap();
        assert!(!checks.is_empty() && checks.iter().all(|c| c.passed && !c.advisory));
    }

    #[test]
    fn three_point_sweep() {
        let m = build(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        let grid = default_grid(&t, Frame::Pure, 0).unwrap();
        let rep = classify(&t, &grid, &ClassifyOptions::default()).unwrap();
        assert_eq!(
            rep.labels(),
            vec![Label::Boundary, Label::Nonequivalent, Label::Boundary]
        );
        assert!(rep.coherent());
        assert!(rep.failures().is_empty());
        assert_eq!(rep.betas.len(), 1000);
        let mid = rep.record_at(1.0).unwrap();
        assert_eq!(mid.checks.len(), 2);
        assert!(mid.passed());

        // Full at u = 2 when checked directly.
        let ctx = pure_ctx(&t);
        let v = Verifier::new(&t, &ctx, &ClassifyOptions::default());
        let r = classify_point(&ctx, 2.0).unwrap();
        let checks = v.verify(&r).unwrap();
        assert_eq!(checks[0].name, "equal_at_witness");
        assert!(checks[0].passed);
    }

    #[test]
    fn report_serializes() {
        let m = build(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        let rep = classify(&t, &[0.0, 1.0, 2.0], &ClassifyOptions::default()).unwrap();
        let mut buf = Vec::new();
        rep.write_json(&mut buf).unwrap();
        let back: ClassificationReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rep);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("u,s,s_hull,beta_minus,beta_plus,in_C,in_T,label,witness"));
        assert!(text.contains("nonequivalent"));
    }

    #[test]
    fn decompositions() {
        let m = table(vec![0.0, 0.0], vec![0.0, 1.0]);
        let t = Thermo::new(&m, SolverOptions::default());
        let d = decompose_canonical(&t, Frame::Pure, 0.0, None, 0.0).unwrap();
        assert_eq!(d.parts.len(), 2);
        assert_eq!(d.parts[0].u, 0.0);
        assert_eq!(d.parts[0].members, vec![Macrostate::Index(0)]);
        assert_eq!(d.parts[1].members, vec![Macrostate::Index(1)]);
        assert!(d.consistent());

        let m = build(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        let ctx = pure_ctx(&t);
        let d = decompose_canonical(&t, Frame::Pure, -0.1, Some(&ctx), 0.0).unwrap();
        assert_eq!(
            d.set.members,
            vec![Macrostate::Index(0), Macrostate::Index(2)]
        );
        let us: Vec<f64> = d.parts.iter().map(|p| p.u).collect();
        assert_eq!(us, vec![0.0, 2.0]);
        assert!(d.consistent());

        let cw = build(BuiltinSpec::curie_weiss());
        let t = Thermo::new(&cw, SolverOptions::default());
        let d = decompose_canonical(&t, Frame::Pure, 2.0, None, 1e-6).unwrap();
        assert_eq!(d.set.len(), 2);
        assert_eq!(d.parts.len(), 1);
        assert_eq!(d.parts[0].micro.len(), 2);
        let mstar: f64 = 0.957_504_4;
        assert!((d.parts[0].u + 0.5 * mstar * mstar).abs() < 1e-6);
        assert!(d.consistent());
    }

    #[test]
    fn differentiability() {
        let m = build(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        let ctx = pure_ctx(&t);
        let d = differentiability_check(&t, -0.2, &ctx, 0.0).unwrap();
        assert!(d.differentiable && d.consistent);
        let d = differentiability_check(&t, -0.1, &ctx, 0.0).unwrap();
        assert!(!d.differentiable && d.consistent);

        let m = table(vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 2.0]);
        let t = Thermo::new(&m, SolverOptions::default());
        let ctx = pure_ctx(&t);
        let d = differentiability_check(&t, 0.0, &ctx, 0.0).unwrap();
        assert!(!d.differentiable && d.consistent);
        for b in [-1.0, 1.0] {
            assert!(
                differentiability_check(&t, b, &ctx, 0.0)
                    .unwrap()
                    .consistent
            );
        }
    }

    #[test]
    fn random_tables_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(2..=8);
            let mut rate: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            rate[rng.random_range(0..n)] = 0.0;
            let h: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let m = table(rate, h);
            let t = Thermo::new(&m, SolverOptions::default());
            let grid = default_grid(&t, Frame::Pure, 0).unwrap();
            let rep = classify(&t, &grid, &ClassifyOptions::default()).unwrap();
            assert!(rep.coherent());
            assert!(rep.failures().is_empty(), "{:?}", rep.failures());
        }
    }

    #[test]
    fn concave_tables_have_no_nonequivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(3..=8);
            let h: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let c = rng.random_range(0.0..n as f64);
            let curv = rng.random_range(0.01..1.0);
            let mut rate: Vec<f64> = h.iter().map(|u| curv * (u - c) * (u - c)).collect();
            let min = rate.iter().copied().fold(f64::INFINITY, f64::min);
            rate.iter_mut().for_each(|r| *r -= min);
            let m = table(rate, h.clone());
            let t = Thermo::new(&m, SolverOptions::default());
            let rep = classify(&t, &h, &ClassifyOptions::default()).unwrap();
            assert!(!rep.labels().contains(&Label::Nonequivalent));
        }
    }

    #[test]
    fn mixed_frames() {
        let m = build(BuiltinSpec::four_point_mixed());
        let t = Thermo::new(&m, SolverOptions::default());
        let rep = classify_mixed(
            &t,
            Frame::FixedBeta1(0.0),
            &[0.0, 1.0],
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!(rep.records.iter().all(|r| r.in_c));
        let rep = classify_mixed(
            &t,
            Frame::FixedU2(1.0),
            &[0.0, 1.0],
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!(rep.coherent() && rep.failures().is_empty());
        assert!(classify_mixed(&t, Frame::Pure, &[0.0], &ClassifyOptions::default()).is_err());

        let m = build(BuiltinSpec::dented_mixed());
        let t = Thermo::new(&m, SolverOptions::default());
        let rep = classify_mixed(
            &t,
            Frame::FixedBeta1(0.0),
            &[0.0, 1.0, 2.0],
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.record_at(1.0).unwrap().label, Label::Nonequivalent);
        assert!(rep.failures().is_empty());

        let m = build(BuiltinSpec::flat_mixed());
        let t = Thermo::new(&m, SolverOptions::default());
        let rep = classify_mixed(
            &t,
            Frame::FixedBeta1(0.0),
            &[0.0, 1.0, 2.0],
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.record_at(1.0).unwrap().label, Label::Partial);
        assert!(rep.failures().is_empty());
    }

    #[test]
    fn mixed_equality() {
        let m = build(BuiltinSpec::four_point_mixed());
        let t = Thermo::new(&m, SolverOptions::default());
        let r = verify_mixed_equality(&t, 0.0, 1.0).unwrap();
        assert!(r.equal && r.exact);
        assert_eq!(r.direct, vec![Macrostate::Index(3)]);
        let r = verify_mixed_equality(&t, 1e3, 1.0).unwrap();
        assert!(r.equal);
        assert_eq!(r.direct, vec![Macrostate::Index(2)]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..=8);
            let mut rate: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            rate[rng.random_range(0..n)] = 0.0;
            let h1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let h2: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
            let m = build(BuiltinSpec::TabularMixed {
                rate,
                repr: vec![h1, h2],
            });
            let t = Thermo::new(&m, SolverOptions::default());
            for u2 in [0.0, 1.0, 2.0] {
                let b1 = rng.random_range(-3.0..3.0);
                assert!(verify_mixed_equality(&t, b1, u2).unwrap().equal);
            }
        }
    }

    #[test]
    fn hash_is_stable_per_model() {
        let a = build(BuiltinSpec::three_point_table());
        let b = build(BuiltinSpec::four_point_mixed());
        assert_eq!(model_hash(&a), model_hash(&a.clone()));
        assert_ne!(model_hash(&a), model_hash(&b));
        assert_eq!(model_hash(&a).len(), 16);
    }
}

//! Equilibrium macrostate sets and set comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rate_value, repr_value, HiddenSpace, Macrostate, Model, Representation};
use crate::solver::Outcome;
use crate::thermo::{Frame, Task, Thermo};

/// Which variational problem produced a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "ensemble")]
pub enum Ensemble {
    /// Minimizers of `I + ⟨β, H̃⟩`.
    Canonical { beta: Vec<f64> },
    /// Minimizers of `I` on `{H̃ = u}`.
    Microcanonical { u: Vec<f64> },
    /// Minimizers of `I + β¹H̃¹ + β²H̃²`.
    MixedCanonical { beta1: f64, beta2: f64 },
    /// Minimizers of `I + β¹H̃¹` on `{H̃² = u²}`.
    Mixed { beta1: f64, u2: f64 },
    /// Minimizers of `I` on `{H̃¹ = u¹, H̃² = u²}`.
    MicroPair { u1: f64, u2: f64 },
}

impl Ensemble {
    pub fn task(&self) -> Task {
        match self {
            Ensemble::Canonical { beta } => {
                Task::unconstrained(beta.iter().copied().enumerate().collect())
            }
            Ensemble::Microcanonical { u } => Task {
                tilt: vec![],
                constraints: u.iter().copied().enumerate().collect(),
            },
            Ensemble::MixedCanonical { beta1, beta2 } => {
                Task::unconstrained(vec![(0, *beta1), (1, *beta2)])
            }
            Ensemble::Mixed { beta1, u2 } => Task {
                tilt: vec![(0, *beta1)],
                constraints: vec![(1, *u2)],
            },
            Ensemble::MicroPair { u1, u2 } => Task {
                tilt: vec![],
                constraints: vec![(0, *u1), (1, *u2)],
            },
        }
    }

    /// The canonical-type set of a frame at multiplier `b`.
    pub fn canonical_in(frame: Frame, b: f64) -> Self {
        match frame {
            Frame::Pure => Ensemble::Canonical { beta: vec![b] },
            Frame::FixedBeta1(b1) => Ensemble::MixedCanonical {
                beta1: b1,
                beta2: b,
            },
            Frame::FixedU2(u2) => Ensemble::Mixed { beta1: b, u2 },
        }
    }

    /// The microcanonical-type set of a frame at value `v`.
    pub fn micro_in(frame: Frame, v: f64) -> Self {
        match frame {
            Frame::Pure => Ensemble::Microcanonical { u: vec![v] },
            Frame::FixedBeta1(b1) => Ensemble::Mixed { beta1: b1, u2: v },
            Frame::FixedU2(u2) => Ensemble::MicroPair { u1: v, u2 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub ensemble: Ensemble,
    pub members: Vec<Macrostate>,
    /// Shared minimal objective (`+∞` when infeasible).
    #[serde(with = "crate::floats")]
    pub objective: f64,
    pub certification: Certification,
    pub infeasible: bool,
    /// Largest constraint residual among the members.
    #[serde(with = "crate::floats")]
    pub residual: f64,
    /// False when the solver stopped without meeting its convergence test.
    pub converged: bool,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.certification == Certification::Exact
    }
}

fn to_macrostate(model: &Model, point: &[f64]) -> Macrostate {
    match &model.space {
        HiddenSpace::Table { .. } => Macrostate::Index(point[0] as usize),
        space => space.macrostate(point.to_vec()),
    }
}

fn from_outcome(model: &Model, ensemble: Ensemble, out: Outcome) -> EquilibriumSet {
    EquilibriumSet {
        ensemble,
        members: out.points.iter().map(|p| to_macrostate(model, p)).collect(),
        objective: out.value,
        certification: if out.certified {
            Certification::Exact
        } else {
            Certification::Heuristic
        },
        infeasible: out.infeasible,
        residual: if out.infeasible { 0.0 } else { out.residual },
        converged: out.converged,
    }
}

/// Minimizers of the problem described by `ensemble`.
pub fn equilibrium_set(thermo: &Thermo, ensemble: Ensemble, stream: u64) -> Result<EquilibriumSet> {
    let model = thermo.model();
    match &ensemble {
        Ensemble::Canonical { beta } if beta.len() != model.sigma() => {
            return Err(Error::shape(
                format!("{} multipliers", model.sigma()),
                format!("{}", beta.len()),
            ))
        }
        Ensemble::Microcanonical { u } if u.len() != model.sigma() => {
            return Err(Error::shape(
                format!("{} values", model.sigma()),
                format!("{}", u.len()),
            ))
        }
        Ensemble::MixedCanonical { .. } | Ensemble::Mixed { .. } | Ensemble::MicroPair { .. }
            if model.sigma() != 2 =>
        {
            return Err(Error::Argument("mixed sets need σ = 2".into()))
        }
        _ => {}
    }
    let out = thermo.solve_raw(&ensemble.task(), stream)?;
    Ok(from_outcome(model, ensemble, out))
}

pub fn canonical_set(thermo: &Thermo, beta: &[f64]) -> Result<EquilibriumSet> {
    equilibrium_set(
        thermo,
        Ensemble::Canonical {
            beta: beta.to_vec(),
        },
        0,
    )
}

/// Empty with the infeasible marker when `u` is not attained.
pub fn microcanonical_set(thermo: &Thermo, u: &[f64]) -> Result<EquilibriumSet> {
    equilibrium_set(thermo, Ensemble::Microcanonical { u: u.to_vec() }, 0)
}

pub fn mixed_set(thermo: &Thermo, beta1: f64, u2: f64) -> Result<EquilibriumSet> {
    equilibrium_set(thermo, Ensemble::Mixed { beta1, u2 }, 0)
}

pub fn mixed_canonical_set(thermo: &Thermo, beta1: f64, beta2: f64) -> Result<EquilibriumSet> {
    equilibrium_set(thermo, Ensemble::MixedCanonical { beta1, beta2 }, 0)
}

pub fn micro_pair_set(thermo: &Thermo, u1: f64, u2: f64) -> Result<EquilibriumSet> {
    equilibrium_set(thermo, Ensemble::MicroPair { u1, u2 }, 0)
}

/// Grid resolution of the simplex brute force.
pub const BRUTE_FORCE_STEPS: usize = 200;
const BRUTE_FORCE_TIE: f64 = 1e-6;

/// Exhaustive oracle: exact enumeration for tables; for a single simplex over
/// at most three letters, a `1/200` composition grid (unconstrained) or exact
/// roots of the constraint along grid lines (one constraint).
pub fn brute_force_set(model: &Model, ensemble: Ensemble) -> Result<EquilibriumSet> {
    let task = ensemble.task();
    match &model.space {
        HiddenSpace::Table { rate } => Ok(brute_table(model, rate, &task, ensemble)),
        HiddenSpace::Simplex { prior, .. } if prior.len() <= 3 => {
            if task.constraints.len() > 1 {
                return Err(Error::Capacity(
                    "simplex brute force handles at most one constraint".into(),
                ));
            }
            Ok(brute_simplex(model, &task, ensemble))
        }
        _ => Err(Error::Capacity(
            "brute force needs a table or a single simplex over at most three letters".into(),
        )),
    }
}

fn brute_table(model: &Model, rate: &[f64], task: &Task, ensemble: Ensemble) -> EquilibriumSet {
    let column = |j: usize| match &model.components[j] {
        Representation::Table(v) => v.clone(),
        Representation::Field { .. } => Vec::new(),
    };
    let mut objective = vec![f64::INFINITY; rate.len()];
    for (k, slot) in objective.iter_mut().enumerate() {
        let feasible = task.constraints.iter().all(|&(j, v)| column(j)[k] == v);
        if feasible {
            *slot = rate[k]
                + task
                    .tilt
                    .iter()
                    .map(|&(j, t)| t * column(j)[k])
                    .sum::<f64>();
        }
    }
    let best = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let members: Vec<Macrostate> = if best.is_finite() {
        (0..rate.len())
            .filter(|&k| objective[k] <= best + 1e-8)
            .map(Macrostate::Index)
            .collect()
    } else {
        Vec::new()
    };
    EquilibriumSet {
        ensemble,
        infeasible: members.is_empty(),
        members,
        objective: best,
        certification: Certification::Exact,
        residual: 0.0,
        converged: true,
    }
}

fn brute_simplex(model: &Model, task: &Task, ensemble: Ensemble) -> EquilibriumSet {
    let m = model.dim();
    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let state = Macrostate::Simplex(x.to_vec());
        let i = rate_value(model, &state).unwrap_or(f64::INFINITY);
        let h = repr_value(model, &state).unwrap_or_default();
        let obj = i + task.tilt.iter().map(|&(j, t)| t * h[j]).sum::<f64>();
        (obj, h)
    };
    let steps = BRUTE_FORCE_STEPS;
    let h = 1.0 / steps as f64;

    // Points of interest with objective values.
    let mut cands: Vec<(f64, Vec<f64>)> = Vec::new();
    match task.constraints.first() {
        None => {
            // Grid local minima.
            let grid: Vec<Vec<usize>> = compositions(steps, m);
            let value = |c: &[usize]| eval(&c.iter().map(|&k| k as f64 * h).collect::<Vec<_>>()).0;
            let vals: Vec<f64> = grid.iter().map(|c| value(c)).collect();
            let index = |c: &[usize]| grid.iter().position(|g| g == c);
            for (c, &v) in grid.iter().zip(&vals) {
                let mut is_min = true;
                for a in 0..m {
                    for b in 0..m {
                        if a == b || c[a] == 0 {
                            continue;
                        }
                        let mut nb = c.clone();
                        nb[a] -= 1;
                        nb[b] += 1;
                        if let Some(k) = index(&nb) {
                            if vals[k] < v {
                                is_min = false;
                            }
                        }
                    }
                }
                if is_min {
                    cands.push((v, c.iter().map(|&k| k as f64 * h).collect()));
                }
            }
        }
        Some(&(j, target)) => {
            // Roots of H_j = target along lines with the first coordinate on
            // the grid (all of the simplex when m = 2).
            let lines: Vec<f64> = if m == 2 {
                vec![0.0]
            } else {
                (0..=steps).map(|k| k as f64 * h).collect()
            };
            for first in lines {
                let point = |t: f64| -> Vec<f64> {
                    if m == 2 {
                        vec![1.0 - t, t]
                    } else {
                        let rest = 1.0 - first;
                        vec![first, rest * (1.0 - t), rest * t]
                    }
                };
                if m == 3 && first >= 1.0 {
                    let x = point(0.0);
                    let (o, hv) = eval(&x);
                    if hv[j] == target {
                        cands.push((o, x));
                    }
                    continue;
                }
                let f = |t: f64| eval(&point(t)).1[j] - target;
                for k in 0..steps {
                    let (mut a, mut b) = (k as f64 * h, (k + 1) as f64 * h);
                    let (fa, fb) = (f(a), f(b));
                    if fa == 0.0 {
                        cands.push((eval(&point(a)).0, point(a)));
                    }
                    if k + 1 == steps && fb == 0.0 {
                        cands.push((eval(&point(b)).0, point(b)));
                    }
                    if fa * fb < 0.0 {
                        let mut fa = fa;
                        for _ in 0..200 {
                            let c = 0.5 * (a + b);
                            let fc = f(c);
                            if fc == 0.0 {
                                a = c;
                                b = c;
                                break;
                            }
                            if (fc < 0.0) == (fa < 0.0) {
                                a = c;
                                fa = fc;
                            } else {
                                b = c;
                            }
                        }
                        let t = 0.5 * (a + b);
                        cands.push((eval(&point(t)).0, point(t)));
                    }
                }
            }
        }
    }

    let best = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let mut members: Vec<Vec<f64>> = Vec::new();
    let mut sorted = cands;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (v, x) in sorted {
        if v > best + BRUTE_FORCE_TIE {
            break;
        }
        let close = members.iter().any(|p| {
            p.iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                <= 2.0 * h
        });
        if !close {
            members.push(x);
        }
    }
    EquilibriumSet {
        ensemble,
        infeasible: members.is_empty(),
        members: members.into_iter().map(Macrostate::Simplex).collect(),
        objective: best,
        certification: Certification::Heuristic,
        residual: 0.0,
        converged: true,
    }
}

/// All `m`-part compositions of `total`.
fn compositions(total: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for k in 0..=total {
        for mut rest in compositions(total - k, m - 1) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    /// First set strictly inside the second.
    ProperSubsetAB,
    /// Second set strictly inside the first.
    ProperSubsetBA,
    Disjoint,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    pub hausdorff: f64,
    pub relation: Relation,
}

/// Compares two sets with members identified at max-norm distance `tol`.
pub fn set_distance(a: &EquilibriumSet, b: &EquilibriumSet, tol: f64) -> SetComparison {
    compare_members(&a.members, &b.members, tol)
}

pub fn compare_members(a: &[Macrostate], b: &[Macrostate], tol: f64) -> SetComparison {
    let nearest = |x: &Macrostate, set: &[Macrostate]| {
        set.iter()
            .map(|y| x.distance(y))
            .fold(f64::INFINITY, f64::min)
    };
    let da: Vec<f64> = a.iter().map(|x| nearest(x, b)).collect();
    let db: Vec<f64> = b.iter().map(|y| nearest(y, a)).collect();
    let hausdorff = match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => da.iter().chain(&db).copied().fold(0.0, f64::max),
    };
    let a_in_b = da.iter().all(|&d| d <= tol);
    let b_in_a = db.iter().all(|&d| d <= tol);
    let shared = da.iter().any(|&d| d <= tol);
    let relation = if a.is_empty() && b.is_empty() {
        Relation::Equal
    } else if !shared {
        Relation::Disjoint
    } else if a_in_b && b_in_a {
        Relation::Equal
    } else if a_in_b {
        Relation::ProperSubsetAB
    } else if b_in_a {
        Relation::ProperSubsetBA
    } else {
        Relation::Overlap
    };
    SetComparison {
        hausdorff,
        relation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_builtin, BuiltinSpec};
    use crate::thermo::SolverOptions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(spec: BuiltinSpec) -> Model {
        build_builtin(&spec).unwrap()
    }

    fn pair() -> Model {
        model(BuiltinSpec::Tabular {
            rate: vec![0.0, 0.0],
            repr: vec![vec![0.0, 1.0]],
        })
    }

    fn idx(v: &[usize]) -> Vec<Macrostate> {
        v.iter().map(|&i| Macrostate::Index(i)).collect()
    }

    #[test]
    fn zero_multiplier_sets() {
        let cw = model(BuiltinSpec::curie_weiss());
        let t = Thermo::new(&cw, SolverOptions::default());
        let e = canonical_set(&t, &[0.0]).unwrap();
        assert_eq!(e.members, vec![Macrostate::Simplex(vec![0.5, 0.5])]);

        let p = pair();
        let t = Thermo::new(&p, SolverOptions::default());
        assert_eq!(canonical_set(&t, &[0.0]).unwrap().members, idx(&[0, 1]));
    }

    #[test]
    fn table_sets() {
        let m = model(BuiltinSpec::three_point_table());
        let t = Thermo::new(&m, SolverOptions::default());
        assert_eq!(canonical_set(&t, &[-0.2]).unwrap().members, idx(&[2]));
        assert_eq!(microcanonical_set(&t, &[1.0]).unwrap().members, idx(&[1]));
        let e = microcanonical_set(&t, &[0.5]).unwrap();
        assert!(e.infeasible && e.is_empty());
        let bf = brute_force_set(&m, Ensemble::Microcanonical { u: vec![0.0] }).unwrap();
        assert_eq!(bf.members, idx(&[0]));
        assert!(bf.is_exact());
    }

    #[test]
    fn curie_weiss_micro_pair() {
        let m = model(BuiltinSpec::curie_weiss());
        let t = Thermo::new(&m, SolverOptions::default());
        let e = microcanonical_set(&t, &[-0.125]).unwrap();
        assert_eq!(e.len(), 2);
        let mags: Vec<f64> = e
            .members
            .iter()
            .map(|x| x.mean_moment(&[-1.0, 1.0]).unwrap())
            .collect();
        assert!(mags.iter().any(|m| (m - 0.5).abs() < 1e-9));
        assert!(mags.iter().any(|m| (m + 0.5).abs() < 1e-9));
        let e = microcanonical_set(&t, &[0.2]).unwrap();
        assert!(e.infeasible && e.is_empty());
    }

    #[test]
    fn curie_weiss_brute_force_agrees() {
        let m = model(BuiltinSpec::curie_weiss());
        let t = Thermo::new(&m, SolverOptions::default());
        let ens = Ensemble::Canonical { beta: vec![2.0] };
        let bf = brute_force_set(&m, ens.clone()).unwrap();
        let solved = equilibrium_set(&t, ens, 0).unwrap();
        assert_eq!(bf.len(), 2);
        assert_eq!(solved.len(), 2);
        for x in bf.members.iter().chain(&solved.members) {
            let mag = x.mean_moment(&[-1.0, 1.0]).unwrap().abs();
            assert!((mag - 0.9575).abs() <= 2.0 / BRUTE_FORCE_STEPS as f64);
        }
        let cmp = set_distance(&bf, &solved, 2.0 / BRUTE_FORCE_STEPS as f64);
        assert_eq!(cmp.relation, Relation::Equal);
    }

    #[test]
    fn brute_force_capacity() {
        let m = model(BuiltinSpec::PointVortex {
            cells: 4,
            cutoff: 1,
            sites: None,
        });
        assert!(matches!(
            brute_force_set(&m, Ensemble::Canonical { beta: vec![1.0] }),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn random_tables_agree_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let mut rate: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            rate[rng.random_range(0..n)] = 0.0;
            let h: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let m = model(BuiltinSpec::Tabular {
                rate,
                repr: vec![h],
            });
            let t = Thermo::new(&m, SolverOptions::default());
            for k in 0..21 {
                let beta = -5.0 + 0.5 * k as f64;
                let ens = Ensemble::Canonical { beta: vec![beta] };
                let a = equilibrium_set(&t, ens.clone(), 0).unwrap();
                let b = brute_force_set(&m, ens).unwrap();
                assert_eq!(a.members, b.members);
            }
        }
    }

    #[test]
    fn mixed_table_sets() {
        let m = model(BuiltinSpec::four_point_mixed());
        let t = Thermo::new(&m, SolverOptions::default());
        assert_eq!(mixed_set(&t, 0.0, 1.0).unwrap().members, idx(&[3]));
        assert_eq!(micro_pair_set(&t, 1.0, 1.0).unwrap().members, idx(&[3]));
        let reduced = model(BuiltinSpec::Tabular {
            rate: vec![0.0, 0.4, 0.3, 0.1],
            repr: vec![vec![0.0, 0.0, 1.0, 1.0]],
        });
        let tr = Thermo::new(&reduced, SolverOptions::default());
        for u2 in [0.0, 1.0] {
            assert_eq!(
                mixed_set(&t, 0.0, u2).unwrap().members,
                microcanonical_set(&tr, &[u2]).unwrap().members
            );
        }
    }

    #[test]
    fn relations() {
        let a = idx(&[1]);
        let b = idx(&[0, 2]);
        assert_eq!(compare_members(&a, &a, 1e-6).relation, Relation::Equal);
        assert_eq!(compare_members(&a, &a, 1e-6).hausdorff, 0.0);
        assert_eq!(compare_members(&a, &b, 1e-6).relation, Relation::Disjoint);
        assert_eq!(
            compare_members(&idx(&[0]), &idx(&[0, 1]), 1e-6).relation,
            Relation::ProperSubsetAB
        );
        assert_eq!(
            compare_members(&idx(&[0, 1]), &idx(&[1, 2]), 1e-6).relation,
            Relation::Overlap
        );
    }
}

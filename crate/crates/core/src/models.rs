//! Builtin model constructors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_model, HiddenSpace, MicroLayer, Model, ModelKind, Representation, SiteCoupling,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BuiltinSpec {
    /// Finite table: `rate[k] = I(k)`, `repr[i][k] = H̃_i(k)`.
    Tabular { rate: Vec<f64>, repr: Vec<Vec<f64>> },
    /// Two-component table whose first component is treated canonically.
    TabularMixed { rate: Vec<f64>, repr: Vec<Vec<f64>> },
    /// Spins ±1, uniform prior, `H̃ = −coupling·m²/2`.
    CurieWeiss { coupling: f64, sites: Option<usize> },
    /// `H̃ = Σ_y field(y)·x(y) − quadratic·m²/2` on three letters;
    /// `field` defaults to `y²`.
    ThreeStateSkew {
        alphabet: Vec<f64>,
        prior: Vec<f64>,
        quadratic: f64,
        field: Option<Vec<f64>>,
        sites: Option<usize>,
    },
    /// Vortex positions discretized to `cells` torus cells, uniform prior.
    PointVortex {
        cells: usize,
        cutoff: usize,
        sites: Option<usize>,
    },
    /// Vorticity levels on `cells` macrocells; energy plus, for `sigma = 2`,
    /// the generalized enstrophy `Σ a(y)·x(c, y) / q` (`a` defaults to `y²`).
    MillerRobert {
        cells: usize,
        alphabet: Vec<f64>,
        prior: Vec<f64>,
        cutoff: usize,
        enstrophy: Option<Vec<f64>>,
        sigma: usize,
        sites: Option<usize>,
    },
}

impl BuiltinSpec {
    pub fn curie_weiss() -> Self {
        BuiltinSpec::CurieWeiss {
            coupling: 1.0,
            sites: None,
        }
    }

    /// Parameters with a nonconcave entropy found by [`search_nonconcave`].
    pub fn three_state_default() -> Self {
        BuiltinSpec::ThreeStateSkew {
            alphabet: vec![-1.0, 0.0, 1.0],
            prior: vec![0.3, 0.45, 0.25],
            quadratic: 2.1,
            field: None,
            sites: None,
        }
    }

    /// The three-point nonequivalence table.
    pub fn three_point_table() -> Self {
        BuiltinSpec::Tabular {
            rate: vec![0.0, 0.5, 0.2],
            repr: vec![vec![0.0, 1.0, 2.0]],
        }
    }

    /// The four-point two-component table.
    pub fn four_point_mixed() -> Self {
        BuiltinSpec::TabularMixed {
            rate: vec![0.0, 0.4, 0.3, 0.1],
            repr: vec![vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0, 1.0]],
        }
    }

    /// Six points on `u² ∈ {0, 1, 2}` whose `β¹ = 0` slice entropy has a dent
    /// at `u² = 1`.
    pub fn dented_mixed() -> Self {
        BuiltinSpec::TabularMixed {
            rate: vec![0.0, 0.3, 0.5, 0.6, 0.2, 0.4],
            repr: vec![
                vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
            ],
        }
    }

    /// Like [`BuiltinSpec::dented_mixed`] but the slice entropy is affine.
    pub fn flat_mixed() -> Self {
        BuiltinSpec::TabularMixed {
            rate: vec![0.0, 0.3, 0.1, 0.4, 0.2, 0.5],
            repr: vec![
                vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
            ],
        }
    }
}

fn outer(a: &[f64], scale: f64) -> Vec<f64> {
    a.iter()
        .flat_map(|&x| a.iter().map(move |&y| scale * x * y))
        .collect()
}

fn micro(sites: Option<usize>, site_coupling: Option<SiteCoupling>) -> Option<MicroLayer> {
    Some(MicroLayer {
        sites,
        site_coupling,
    })
}

fn check_letters(alphabet: &[f64], prior: &[f64]) -> Result<()> {
    if alphabet.len() < 2 {
        return Err(Error::Config("alphabet needs at least two letters".into()));
    }
    if prior.len() != alphabet.len() {
        return Err(Error::Config(format!(
            "prior has {} weights for {} letters",
            prior.len(),
            alphabet.len()
        )));
    }
    Ok(())
}

/// Builds the model from its parameters without checking model invariants.
pub fn assemble(spec: &BuiltinSpec) -> Result<Model> {
    Ok(match spec {
        BuiltinSpec::Tabular { rate, repr } | BuiltinSpec::TabularMixed { rate, repr } => {
            if repr.is_empty() {
                return Err(Error::Config("need at least one table of H̃ values".into()));
            }
            let mixed = matches!(spec, BuiltinSpec::TabularMixed { .. });
            Model {
                kind: if mixed {
                    ModelKind::TabularMixed
                } else {
                    ModelKind::Tabular
                },
                space: HiddenSpace::Table { rate: rate.clone() },
                components: repr.iter().cloned().map(Representation::Table).collect(),
                tau: mixed.then_some(1),
                micro: None,
            }
        }
        BuiltinSpec::CurieWeiss { coupling, sites } => {
            if !coupling.is_finite() {
                return Err(Error::Config("coupling must be finite".into()));
            }
            let alphabet = vec![-1.0, 1.0];
            Model {
                kind: ModelKind::CurieWeiss,
                components: vec![Representation::quadratic(outer(&alphabet, -coupling))],
                space: HiddenSpace::Simplex {
                    alphabet,
                    prior: vec![0.5, 0.5],
                },
                tau: None,
                micro: micro(*sites, None),
            }
        }
        BuiltinSpec::ThreeStateSkew {
            alphabet,
            prior,
            quadratic,
            field,
            sites,
        } => {
            if alphabet.len() != 3 {
                return Err(Error::Config(
                    "the three-state model needs three letters".into(),
                ));
            }
            check_letters(alphabet, prior)?;
            let linear = match field {
                Some(f) if f.len() != 3 => {
                    return Err(Error::Config(
                        "field needs one coefficient per letter".into(),
                    ))
                }
                Some(f) => f.clone(),
                None => alphabet.iter().map(|y| y * y).collect(),
            };
            Model {
                kind: ModelKind::ThreeStateSkew,
                components: vec![Representation::Field {
                    kernel: Some(outer(alphabet, -quadratic)),
                    linear: Some(linear),
                }],
                space: HiddenSpace::Simplex {
                    alphabet: alphabet.clone(),
                    prior: prior.clone(),
                },
                tau: None,
                micro: micro(*sites, None),
            }
        }
        BuiltinSpec::PointVortex {
            cells,
            cutoff,
            sites,
        } => {
            if *cells < 2 {
                return Err(Error::Config(
                    "point vortex model needs at least two cells".into(),
                ));
            }
            if *cutoff < 1 {
                return Err(Error::Config("Fourier cutoff must be at least 1".into()));
            }
            let green = cell_green_matrix(*cells, *cutoff);
            Model {
                kind: ModelKind::PointVortex,
                components: vec![Representation::quadratic(green)],
                space: HiddenSpace::Simplex {
                    alphabet: (0..*cells).map(|c| c as f64).collect(),
                    prior: vec![1.0 / *cells as f64; *cells],
                },
                tau: None,
                micro: micro(*sites, None),
            }
        }
        BuiltinSpec::MillerRobert {
            cells,
            alphabet,
            prior,
            cutoff,
            enstrophy,
            sigma,
            sites,
        } => {
            if *cells < 1 {
                return Err(Error::Config("need at least one macrocell".into()));
            }
            if *cutoff < 1 {
                return Err(Error::Config("Fourier cutoff must be at least 1".into()));
            }
            if !(1..=2).contains(sigma) {
                return Err(Error::Config(format!("sigma = {sigma} must be 1 or 2")));
            }
            check_letters(alphabet, prior)?;
            let (q, m) = (*cells, alphabet.len());
            let green = cell_green_matrix(q, *cutoff);
            let scale = 1.0 / (q * q) as f64;
            let mut kernel = vec![0.0; q * m * q * m];
            for c in 0..q {
                for y in 0..m {
                    for c2 in 0..q {
                        for y2 in 0..m {
                            kernel[(c * m + y) * q * m + c2 * m + y2] =
                                green[c * q + c2] * alphabet[y] * alphabet[y2] * scale;
                        }
                    }
                }
            }
            let mut components = vec![Representation::quadratic(kernel)];
            if *sigma == 2 {
                let a = match enstrophy {
                    Some(a) if a.len() != m => {
                        return Err(Error::Config("enstrophy needs one value per letter".into()))
                    }
                    Some(a) => a.clone(),
                    None => alphabet.iter().map(|y| y * y).collect(),
                };
                let lin = (0..q)
                    .flat_map(|_| a.iter().map(|v| v / q as f64))
                    .collect();
                components.push(Representation::linear(lin));
            }
            Model {
                kind: ModelKind::MillerRobert,
                space: HiddenSpace::Cells {
                    cells: q,
                    alphabet: alphabet.clone(),
                    prior: prior.clone(),
                },
                components,
                tau: (*sigma == 2).then_some(1),
                micro: micro(
                    *sites,
                    Some(SiteCoupling::FourierVorticity { cutoff: *cutoff }),
                ),
            }
        }
    })
}

/// Builds and validates a builtin model.
pub fn build_builtin(spec: &BuiltinSpec) -> Result<Model> {
    let model = assemble(spec)?;
    let violations = validate_model(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(Error::Config(list.join("; ")))
    }
}

/// `(rows, cols)` of the torus cell layout: rows is the largest divisor of
/// `q` not exceeding `√q`.
pub fn cell_layout(q: usize) -> (usize, usize) {
    let rows = (1..=q)
        .take_while(|r| r * r <= q)
        .filter(|r| q.is_multiple_of(*r))
        .last()
        .unwrap_or(1);
    (rows, q / rows)
}

/// Nonzero Fourier modes `ξ` with `|ξ|∞ ≤ cutoff` and their weights `|2πξ|⁻²`.
fn modes(cutoff: usize) -> Vec<([f64; 2], f64)> {
    let k = cutoff as i64;
    let mut out = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            if a == 0 && b == 0 {
                continue;
            }
            let (a, b) = (a as f64, b as f64);
            out.push(([a, b], 1.0 / (4.0 * PI * PI * (a * a + b * b))));
        }
    }
    out
}

/// Average of `e^{2πi k t}` over `[start, start + width]`.
fn interval_average(k: f64, start: f64, width: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let phase = |t: f64| Complex64::from_polar(1.0, 2.0 * PI * k * t);
    phase(start) * (phase(width) - 1.0) / Complex64::new(0.0, 2.0 * PI * k * width)
}

/// Cell-pair averages of the truncated torus Green's function,
/// `G[c][c'] = Σ_ξ |2πξ|⁻² Re(A_c(ξ) conj A_c'(ξ))` with `A_c` the cell
/// average of `e^{2πi⟨ξ,x⟩}`. Row-major `q × q`.
pub fn cell_green_matrix(q: usize, cutoff: usize) -> Vec<f64> {
    let (rows, cols) = cell_layout(q);
    let (w, h) = (1.0 / cols as f64, 1.0 / rows as f64);
    let modes = modes(cutoff);
    let averages: Vec<Vec<Complex64>> = (0..q)
        .map(|c| {
            let (i, j) = (c / cols, c % cols);
            modes
                .iter()
                .map(|(xi, _)| {
                    interval_average(xi[0], j as f64 * w, w)
                        * interval_average(xi[1], i as f64 * h, h)
                })
                .collect()
        })
        .collect();
    let mut g = vec![0.0; q * q];
    for c in 0..q {
        for c2 in c..q {
            let v: f64 = modes
                .iter()
                .enumerate()
                .map(|(k, (_, wt))| wt * (averages[c][k] * averages[c2][k].conj()).re)
                .sum();
            g[c * q + c2] = v;
            g[c2 * q + c] = v;
        }
    }
    g
}

/// Site-level Fourier representation of the vorticity energy
/// `(1 / 2a_n²) Σ_ξ |2πξ|⁻² |Σ_s ζ_s e^{2πi⟨ξ, p_s⟩}|²`, with sites placed at
/// microcell centres inside their macrocell (contiguous blocks per cell).
#[derive(Debug, Clone)]
pub struct SiteFourier {
    sites: usize,
    weights: Vec<f64>,
    /// `phases[s * modes + k] = e^{2πi⟨ξ_k, p_s⟩}`.
    phases: Vec<Complex64>,
}

impl SiteFourier {
    pub fn new(cells: usize, sites: usize, cutoff: usize) -> Result<Self> {
        if cells == 0 || !sites.is_multiple_of(cells) || sites == 0 {
            return Err(Error::Config(format!(
                "{sites} sites do not split evenly over {cells} cells"
            )));
        }
        let (rows, cols) = cell_layout(cells);
        let block = sites / cells;
        let (sub_rows, sub_cols) = cell_layout(block);
        let modes = modes(cutoff);
        let mut phases = Vec::with_capacity(sites * modes.len());
        for s in 0..sites {
            let (c, k) = (s / block, s % block);
            let (i, j) = (c / cols, c % cols);
            let (ki, kj) = (k / sub_cols, k % sub_cols);
            let x = (j as f64 + (kj as f64 + 0.5) / sub_cols as f64) / cols as f64;
            let y = (i as f64 + (ki as f64 + 0.5) / sub_rows as f64) / rows as f64;
            for (xi, _) in &modes {
                phases.push(Complex64::from_polar(
                    1.0,
                    2.0 * PI * (xi[0] * x + xi[1] * y),
                ));
            }
        }
        Ok(Self {
            sites,
            weights: modes.iter().map(|m| m.1).collect(),
            phases,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.weights.len()
    }

    /// Structure factors `S(ξ) = Σ_s ζ_s e^{2πi⟨ξ, p_s⟩}`.
    pub fn structure(&self, values: &[f64]) -> Vec<Complex64> {
        let m = self.mode_count();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        for (s, v) in values.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.phases[s * m + k] * v;
            }
        }
        out
    }

    pub fn energy(&self, structure: &[Complex64]) -> f64 {
        let n = self.sites as f64;
        self.weights
            .iter()
            .zip(structure)
            .map(|(w, z)| w * z.norm_sqr())
            .sum::<f64>()
            / (2.0 * n * n)
    }

    /// Energy change when site `s` changes value by `delta`.
    pub fn delta(&self, structure: &[Complex64], s: usize, delta: f64) -> f64 {
        let m = self.mode_count();
        let n = self.sites as f64;
        let mut acc = 0.0;
        for k in 0..m {
            let e = self.phases[s * m + k];
            acc += self.weights[k] * (2.0 * delta * (structure[k].conj() * e).re + delta * delta);
        }
        acc / (2.0 * n * n)
    }

    pub fn apply(&self, structure: &mut [Complex64], s: usize, delta: f64) {
        let m = self.mode_count();
        for (k, z) in structure.iter_mut().enumerate() {
            *z += self.phases[s * m + k] * delta;
        }
    }
}

/// Outcome of the nonconcavity search over the three-state family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconcaveHit {
    pub spec: BuiltinSpec,
    /// Largest `s** − s` over the sampled grid.
    pub max_gap: f64,
    /// Grid value where the gap is largest.
    pub u_at_gap: f64,
}

/// Scans `quadratic × prior` candidates of the three-state family and
/// returns the one whose sampled entropy has the largest gap below its
/// concave hull, or `None` when every sampled entropy is concave to `min_gap`.
pub fn search_nonconcave(
    quadratics: &[f64],
    priors: &[Vec<f64>],
    grid_points: usize,
    min_gap: f64,
) -> Result<Option<NonconcaveHit>> {
    let mut best: Option<NonconcaveHit> = None;
    for &k in quadratics {
        for prior in priors {
            let spec = BuiltinSpec::ThreeStateSkew {
                alphabet: vec![-1.0, 0.0, 1.0],
                prior: prior.clone(),
                quadratic: k,
                field: None,
                sites: None,
            };
            let model = build_builtin(&spec)?;
            let solver =
                crate::thermo::Thermo::new(&model, crate::thermo::SolverOptions::default());
            let (lo, hi) = solver.component_range(0)?;
            let grid: Vec<f64> = (0..grid_points)
                .map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64)
                .collect();
            let curve = solver.entropy_curve(&grid)?;
            let sampled = curve.sampled()?;
            let hull = crate::lft::concave_hull(&sampled);
            let (i, gap) = (0..grid.len())
                .filter(|&i| sampled.values[i].is_finite())
                .map(|i| (i, hull.hull[i] - sampled.values[i]))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            if gap > min_gap && best.as_ref().is_none_or(|b| gap > b.max_gap) {
                best = Some(NonconcaveHit {
                    spec,
                    max_gap: gap,
                    u_at_gap: grid[i],
                });
            }
        }
    }
    Ok(best)
}

//! The abstract model: a finite hidden space carrying a rate function `I`,
//! representation functions `H̃ = (H̃_1, …, H̃_σ)`, and optionally a
//! microstate layer that coarse-grains site configurations into macrostates.
//!
//! Three finite hidden spaces are supported:
//!
//! * a table of points with tabulated `I` and `H̃`;
//! * the probability simplex over an alphabet, with `I` the relative entropy
//!   against a strictly positive prior;
//! * `q` macrocells each carrying a probability vector over the alphabet, with
//!   `I` the cell-averaged relative entropy.
//!
//! Non-tabular representation functions are quadratic forms plus a linear
//! term on the flattened macrostate vector.

mod description;

pub use description::{ModelDescription, TableRows};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIMPLEX_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tabular,
    CurieWeiss,
    ThreeStateSkew,
    PointVortex,
    MillerRobert,
    TabularMixed,
}

impl ModelKind {
    pub fn is_tabular(self) -> bool {
        matches!(self, ModelKind::Tabular | ModelKind::TabularMixed)
    }
}

/// Row-major `cells × letters` matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct CellMatrix {
    cells: usize,
    letters: usize,
    data: Vec<f64>,
}

impl CellMatrix {
    pub fn new(cells: usize, letters: usize, data: Vec<f64>) -> Result<Self> {
        if cells == 0 || letters == 0 {
            return Err(Error::shape(
                "at least one cell and one letter",
                "empty matrix",
            ));
        }
        if data.len() != cells * letters {
            return Err(Error::shape(
                format!("{} entries", cells * letters),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self {
            cells,
            letters,
            data,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cells = rows.len();
        let letters = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != letters) {
            return Err(Error::shape("rows of equal length", "ragged rows"));
        }
        Self::new(cells, letters, rows.into_iter().flatten().collect())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.letters..(c + 1) * self.letters]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.letters)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

impl From<CellMatrix> for Vec<Vec<f64>> {
    fn from(m: CellMatrix) -> Self {
        m.rows().map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CellMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CellMatrix::from_rows(rows)
    }
}

/// A point of the hidden space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Macrostate {
    Index(usize),
    Simplex(Vec<f64>),
    Cells(CellMatrix),
}

impl Macrostate {
    /// Flattened probability entries; `None` for table indices.
    pub fn entries(&self) -> Option<&[f64]> {
        match self {
            Macrostate::Index(_) => None,
            Macrostate::Simplex(v) => Some(v),
            Macrostate::Cells(m) => Some(m.as_slice()),
        }
    }

    /// Max-norm distance; table indices are at distance 0 or +∞.
    pub fn distance(&self, other: &Macrostate) -> f64 {
        match (self, other) {
            (Macrostate::Index(a), Macrostate::Index(b)) => {
                if a == b {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => match (self.entries(), other.entries()) {
                (Some(a), Some(b)) if a.len() == b.len() => a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
                _ => f64::INFINITY,
            },
        }
    }

    /// Cell-averaged first moment `Σ_y y·x(y)` against an alphabet.
    pub fn mean_moment(&self, alphabet: &[f64]) -> Option<f64> {
        match self {
            Macrostate::Index(_) => None,
            Macrostate::Simplex(v) => Some(dot(v, alphabet)),
            Macrostate::Cells(m) => {
                Some(m.rows().map(|r| dot(r, alphabet)).sum::<f64>() / m.cells() as f64)
            }
        }
    }
}

/// The hidden space together with the data defining `I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenSpace {
    Table {
        rate: Vec<f64>,
    },
    Simplex {
        alphabet: Vec<f64>,
        prior: Vec<f64>,
    },
    Cells {
        cells: usize,
        alphabet: Vec<f64>,
        prior: Vec<f64>,
    },
}

impl HiddenSpace {
    /// Length of the flattened macrostate vector (table size for tables).
    pub fn dim(&self) -> usize {
        match self {
            HiddenSpace::Table { rate } => rate.len(),
            HiddenSpace::Simplex { prior, .. } => prior.len(),
            HiddenSpace::Cells { cells, prior, .. } => cells * prior.len(),
        }
    }

    pub fn cell_count(&self) -> usize {
        match self {
            HiddenSpace::Cells { cells, .. } => *cells,
            _ => 1,
        }
    }

    pub fn alphabet(&self) -> Option<&[f64]> {
        match self {
            HiddenSpace::Table { .. } => None,
            HiddenSpace::Simplex { alphabet, .. } | HiddenSpace::Cells { alphabet, .. } => {
                Some(alphabet)
            }
        }
    }

    pub fn prior(&self) -> Option<&[f64]> {
        match self {
            HiddenSpace::Table { .. } => None,
            HiddenSpace::Simplex { prior, .. } | HiddenSpace::Cells { prior, .. } => Some(prior),
        }
    }

    /// Wraps a flattened entry vector as a macrostate of this space.
    pub fn macrostate(&self, flat: Vec<f64>) -> Macrostate {
        match self {
            HiddenSpace::Table { .. } => panic!("table spaces have no flattened macrostates"),
            HiddenSpace::Simplex { .. } => Macrostate::Simplex(flat),
            HiddenSpace::Cells { cells, prior, .. } => {
                Macrostate::Cells(CellMatrix::new(*cells, prior.len(), flat).expect("dimension"))
            }
        }
    }

    /// The prior as a macrostate (every cell at the prior).
    pub fn prior_state(&self) -> Option<Macrostate> {
        let prior = self.prior()?;
        let flat = prior.repeat(self.cell_count());
        Some(self.macrostate(flat))
    }
}

/// One representation function `H̃_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Tabulated values, one per table point.
    Table(Vec<f64>),
    /// `½ xᵀ K x + ⟨a, x⟩` on the flattened macrostate; `kernel` is row-major.
    Field {
        kernel: Option<Vec<f64>>,
        linear: Option<Vec<f64>>,
    },
}

impl Representation {
    pub fn quadratic(kernel: Vec<f64>) -> Self {
        Representation::Field {
            kernel: Some(kernel),
            linear: None,
        }
    }

    pub fn linear(coefficients: Vec<f64>) -> Self {
        Representation::Field {
            kernel: None,
            linear: Some(coefficients),
        }
    }

    pub(crate) fn kernel(&self) -> Option<&[f64]> {
        match self {
            Representation::Field { kernel, .. } => kernel.as_deref(),
            Representation::Table(_) => None,
        }
    }

    pub(crate) fn linear_part(&self) -> Option<&[f64]> {
        match self {
            Representation::Field { linear, .. } => linear.as_deref(),
            Representation::Table(_) => None,
        }
    }

    /// Value on a flattened vector (field kinds only).
    pub(crate) fn eval_flat(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        if let Some(k) = self.kernel() {
            v += 0.5 * quadratic_form(k, x);
        }
        if let Some(a) = self.linear_part() {
            v += dot(a, x);
        }
        v
    }
}

/// Site-level coupling used when the microstate Hamiltonian is not simply
/// `H̃` of the coarse-grained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteCoupling {
    /// `H_{n,1}(ζ) = (1 / 2a_n²) Σ_{s,s'} g_K(s − s') ζ(s) ζ(s')` with the
    /// Fourier-truncated torus Green's function; sites sit at microcell
    /// centres inside their macrocell.
    FourierVorticity { cutoff: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroLayer {
    /// Default site count `a_n`; chains may override it.
    pub sites: Option<usize>,
    pub site_coupling: Option<SiteCoupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub space: HiddenSpace,
    pub components: Vec<Representation>,
    /// Number of leading components treated canonically in mixed ensembles.
    pub tau: Option<usize>,
    pub micro: Option<MicroLayer>,
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl Model {
    pub fn sigma(&self) -> usize {
        self.components.len()
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.space, HiddenSpace::Table { .. })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Parses a JSON model description. Only structural problems are errors;
    /// invariant violations are left for [`validate_model`].
    pub fn from_json(text: &str) -> Result<Model> {
        let desc: ModelDescription = serde_json::from_str(text)
            .map_err(|e| Error::structure(json_field_hint(&e), e.to_string()))?;
        desc.into_model()
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        Model::from_json(&text)
    }

    fn check_state(&self, x: &Macrostate) -> Result<()> {
        match (&self.space, x) {
            (HiddenSpace::Table { rate }, Macrostate::Index(i)) => {
                if *i < rate.len() {
                    Ok(())
                } else {
                    Err(Error::shape(
                        format!("index below {}", rate.len()),
                        format!("index {i}"),
                    ))
                }
            }
            (HiddenSpace::Simplex { prior, .. }, Macrostate::Simplex(v)) => {
                if v.len() == prior.len() {
                    Ok(())
                } else {
                    Err(Error::shape(
                        format!("simplex vector of length {}", prior.len()),
                        format!("length {}", v.len()),
                    ))
                }
            }
            (HiddenSpace::Cells { cells, prior, .. }, Macrostate::Cells(m)) => {
                if m.cells() == *cells && m.letters() == prior.len() {
                    Ok(())
                } else {
                    Err(Error::shape(
                        format!("{cells}×{} cell matrix", prior.len()),
                        format!("{}×{}", m.cells(), m.letters()),
                    ))
                }
            }
            (space, x) => Err(Error::shape(space_name(space), state_name(x))),
        }
    }
}

fn space_name(space: &HiddenSpace) -> &'static str {
    match space {
        HiddenSpace::Table { .. } => "table index",
        HiddenSpace::Simplex { .. } => "simplex vector",
        HiddenSpace::Cells { .. } => "cell matrix",
    }
}

fn state_name(x: &Macrostate) -> &'static str {
    match x {
        Macrostate::Index(_) => "table index",
        Macrostate::Simplex(_) => "simplex vector",
        Macrostate::Cells(_) => "cell matrix",
    }
}

fn json_field_hint(e: &serde_json::Error) -> String {
    // serde reports unknown/missing fields inside the message; surface the
    // backticked name when present.
    let msg = e.to_string();
    msg.split('`').nth(1).unwrap_or("<document>").to_string()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn quadratic_form(k: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| x[i] * dot(&k[i * n..(i + 1) * n], x)).sum()
}

/// `Σ p log(p / prior)` with `0 log 0 = 0`; +∞ when `p` charges a null letter.
pub fn relative_entropy(p: &[f64], prior: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &ri) in p.iter().zip(prior) {
        if pi <= 0.0 {
            continue;
        }
        if ri <= 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / ri).ln();
    }
    acc
}

/// `I(x)`.
pub fn rate_value(model: &Model, x: &Macrostate) -> Result<f64> {
    model.check_state(x)?;
    Ok(match (&model.space, x) {
        (HiddenSpace::Table { rate }, Macrostate::Index(i)) => rate[*i],
        (HiddenSpace::Simplex { prior, .. }, Macrostate::Simplex(v)) => relative_entropy(v, prior),
        (HiddenSpace::Cells { prior, .. }, Macrostate::Cells(m)) => {
            m.rows().map(|r| relative_entropy(r, prior)).sum::<f64>() / m.cells() as f64
        }
        _ => unreachable!("checked above"),
    })
}

/// `H̃(x)`, one value per component.
pub fn repr_value(model: &Model, x: &Macrostate) -> Result<Vec<f64>> {
    model.check_state(x)?;
    model
        .components
        .iter()
        .enumerate()
        .map(|(i, comp)| match (comp, x) {
            (Representation::Table(values), Macrostate::Index(k)) => {
                values.get(*k).copied().ok_or_else(|| {
                    Error::shape(
                        format!("table of component {i} covering index {k}"),
                        "short table",
                    )
                })
            }
            (Representation::Field { .. }, _) => {
                let flat = x
                    .entries()
                    .ok_or_else(|| Error::shape("probability entries", "table index"))?;
                if !field_fits(comp, flat.len()) {
                    return Err(Error::shape(
                        format!("component {i} sized for dimension {}", flat.len()),
                        "mismatched kernel or linear part",
                    ));
                }
                Ok(comp.eval_flat(flat))
            }
            (Representation::Table(_), _) => Err(Error::shape("table index", state_name(x))),
        })
        .collect()
}

fn field_fits(comp: &Representation, dim: usize) -> bool {
    comp.kernel().is_none_or(|k| k.len() == dim * dim)
        && comp.linear_part().is_none_or(|a| a.len() == dim)
}

/// Every violated invariant of `model`; empty when the model is valid.
pub fn validate_model(model: &Model) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: &str, message: String| {
        out.push(Violation {
            location: location.to_string(),
            message,
        })
    };

    if model.components.is_empty() {
        push(
            "components",
            "at least one representation function is required".into(),
        );
    }
    if let Some(tau) = model.tau {
        if tau == 0 || tau >= model.sigma() {
            push(
                "tau",
                format!(
                    "tau = {tau} must satisfy 1 ≤ tau < sigma = {}",
                    model.sigma()
                ),
            );
        }
    }

    match &model.space {
        HiddenSpace::Table { rate } => {
            if rate.is_empty() {
                push("table_I", "table is empty".into());
            }
            if rate.iter().any(|v| !v.is_finite() || *v < 0.0) {
                push(
                    "table_I",
                    "rate values must be finite and nonnegative".into(),
                );
            }
            let min = rate.iter().copied().fold(f64::INFINITY, f64::min);
            if !rate.is_empty() && min != 0.0 {
                push("table_I", format!("inf I ≠ 0 (minimum is {min})"));
            }
            for (i, comp) in model.components.iter().enumerate() {
                let loc = format!("table_H[{i}]");
                match comp {
                    Representation::Table(v) if v.len() == rate.len() => {
                        if v.iter().any(|x| !x.is_finite()) {
                            push(&loc, "values must be finite".into());
                        }
                    }
                    Representation::Table(v) => push(
                        &loc,
                        format!("has {} entries, table has {}", v.len(), rate.len()),
                    ),
                    Representation::Field { .. } => {
                        push(&loc, "tabular models need tabulated components".into())
                    }
                }
            }
            if model.micro.is_some() {
                push("a_n", "tabular models have no microstate layer".into());
            }
        }
        HiddenSpace::Simplex { alphabet, prior }
        | HiddenSpace::Cells {
            alphabet, prior, ..
        } => {
            if let HiddenSpace::Cells { cells, .. } = &model.space {
                if *cells == 0 {
                    push("q", "need at least one macrocell".into());
                }
            }
            if alphabet.len() < 2 {
                push("alphabet", "need at least two letters".into());
            }
            if alphabet.iter().any(|v| !v.is_finite()) {
                push("alphabet", "letters must be finite".into());
            }
            if prior.len() != alphabet.len() {
                push(
                    "prior",
                    format!("has {} weights for {} letters", prior.len(), alphabet.len()),
                );
            }
            if prior.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                push("prior", "weights must be strictly positive".into());
            }
            let sum: f64 = prior.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                push("prior", format!("prior does not sum to 1 (sum = {sum})"));
            }
            let dim = model.space.dim();
            for (i, comp) in model.components.iter().enumerate() {
                match comp {
                    Representation::Table(_) => push(
                        &format!("components[{i}]"),
                        "tabulated component on a non-tabular space".into(),
                    ),
                    Representation::Field { kernel, linear } => {
                        if let Some(k) = kernel {
                            let loc = format!("kernel[{i}]");
                            if k.len() != dim * dim {
                                push(
                                    &loc,
                                    format!("expected {dim}×{dim} entries, found {}", k.len()),
                                );
                            } else {
                                if k.iter().any(|v| !v.is_finite()) {
                                    push(&loc, "entries must be finite".into());
                                }
                                let asym = (0..dim)
                                    .flat_map(|r| (0..dim).map(move |c| (r, c)))
                                    .map(|(r, c)| (k[r * dim + c] - k[c * dim + r]).abs())
                                    .fold(0.0, f64::max);
                                if asym > SYMMETRY_TOL {
                                    push(
                                        &loc,
                                        format!("kernel is not symmetric (max defect {asym:.3e})"),
                                    );
                                }
                            }
                        }
                        if let Some(a) = linear {
                            let loc = format!("linear[{i}]");
                            if a.len() != dim {
                                push(
                                    &loc,
                                    format!("expected {dim} coefficients, found {}", a.len()),
                                );
                            } else if a.iter().any(|v| !v.is_finite()) {
                                push(&loc, "coefficients must be finite".into());
                            }
                        }
                    }
                }
            }
            if let Some(micro) = &model.micro {
                if let Some(n) = micro.sites {
                    let q = model.space.cell_count();
                    if n < 2 || n % q != 0 {
                        push(
                            "a_n",
                            format!("a_n = {n} must be ≥ 2 and divisible by q = {q}"),
                        );
                    }
                }
                if micro.site_coupling.is_some()
                    && !matches!(model.space, HiddenSpace::Cells { .. })
                {
                    push(
                        "site_coupling",
                        "site-level coupling needs a macrocell space".into(),
                    );
                }
            }
        }
    }
    out
}

/// Letter index of every site value; values must belong to the alphabet.
pub fn letters_of(alphabet: &[f64], values: &[f64]) -> Result<Vec<usize>> {
    values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            alphabet
                .iter()
                .position(|a| (a - v).abs() <= 1e-12 * a.abs().max(1.0))
                .ok_or_else(|| {
                    Error::Argument(format!("site {s} carries {v}, not in the alphabet"))
                })
        })
        .collect()
}

/// Coarse-grains a site configuration given as letter indices. Sites are
/// split into `q` contiguous equal blocks; row `c` is the empirical measure
/// of block `c`.
pub fn coarse_grain_letters(model: &Model, letters: &[usize]) -> Result<Macrostate> {
    let (q, m) = match &model.space {
        HiddenSpace::Table { .. } => {
            return Err(Error::Config(
                "tabular models have no microstate layer".into(),
            ))
        }
        HiddenSpace::Simplex { prior, .. } => (1, prior.len()),
        HiddenSpace::Cells { cells, prior, .. } => (*cells, prior.len()),
    };
    let n = letters.len();
    if n == 0 || !n.is_multiple_of(q) {
        return Err(Error::Config(format!(
            "site count {n} is not a positive multiple of the macrocell count {q}"
        )));
    }
    let block = n / q;
    let mut flat = vec![0.0; q * m];
    for (s, &y) in letters.iter().enumerate() {
        if y >= m {
            return Err(Error::Argument(format!("site {s} has letter {y} ≥ {m}")));
        }
        flat[(s / block) * m + y] += 1.0;
    }
    let w = 1.0 / block as f64;
    flat.iter_mut().for_each(|v| *v *= w);
    Ok(model.space.macrostate(flat))
}

/// Coarse-grains a microstate given as alphabet values.
pub fn coarse_grain(model: &Model, microstate: &[f64]) -> Result<Macrostate> {
    if model.micro.is_none() {
        return Err(Error::Config("model has no microstate layer".into()));
    }
    let alphabet = model
        .space
        .alphabet()
        .ok_or_else(|| Error::Config("tabular models have no microstate layer".into()))?;
    let letters = letters_of(alphabet, microstate)?;
    coarse_grain_letters(model, &letters)
}

//! Site configurations with incrementally maintained energies.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{HiddenSpace, Macrostate, Model, Representation, SiteCoupling};
use crate::models::SiteFourier;

/// How one component of `H_n` is evaluated on site configurations.
#[derive(Debug, Clone)]
enum Term {
    /// `H̃` of the coarse-grained state; `kernel` and `linear` act on the
    /// flattened cell-by-letter vector.
    MeanField {
        kernel: Option<Vec<f64>>,
        linear: Option<Vec<f64>>,
    },
    /// Site-level Fourier energy of the site values.
    Fourier(SiteFourier),
}

/// Per-component running data for a [`Term`].
#[derive(Debug, Clone)]
enum Cache {
    /// `K·x` for the current coarse-grained `x`.
    Field(Vec<f64>),
    Structure(Vec<Complex64>),
}

/// Static description of `H_n` for a given site count.
#[derive(Debug, Clone)]
pub struct MicroModel {
    sites: usize,
    cells: usize,
    letters: usize,
    alphabet: Vec<f64>,
    prior: Vec<f64>,
    terms: Vec<Term>,
}

impl MicroModel {
    pub fn new(model: &Model, sites: usize) -> Result<Self> {
        let (cells, alphabet, prior) = match &model.space {
            HiddenSpace::Table { .. } => {
                return Err(Error::Config(
                    "tabular models have no microstate layer".into(),
                ))
            }
            HiddenSpace::Simplex { alphabet, prior } => (1, alphabet.clone(), prior.clone()),
            HiddenSpace::Cells {
                cells,
                alphabet,
                prior,
            } => (*cells, alphabet.clone(), prior.clone()),
        };
        if sites < 2 || !sites.is_multiple_of(cells) {
            return Err(Error::Config(format!(
                "site count {sites} must be at least 2 and a multiple of {cells}"
            )));
        }
        let coupling = model.micro.as_ref().and_then(|m| m.site_coupling.clone());
        let terms = model
            .components
            .iter()
            .enumerate()
            .map(|(j, comp)| match (j, &coupling, comp) {
                (0, Some(SiteCoupling::FourierVorticity { cutoff }), _) => {
                    Ok(Term::Fourier(SiteFourier::new(cells, sites, *cutoff)?))
                }
                (_, _, Representation::Field { .. }) => Ok(Term::MeanField {
                    kernel: comp.kernel().map(<[f64]>::to_vec),
                    linear: comp.linear_part().map(<[f64]>::to_vec),
                }),
                (_, _, Representation::Table(_)) => Err(Error::Config(
                    "tabular components have no microstate energy".into(),
                )),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sites,
            cells,
            letters: alphabet.len(),
            alphabet,
            prior,
            terms,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    pub fn sigma(&self) -> usize {
        self.terms.len()
    }

    fn block(&self) -> usize {
        self.sites / self.cells
    }

    fn dim(&self) -> usize {
        self.cells * self.letters
    }

    /// Flat coordinate of letter `y` at site `s`.
    fn slot(&self, s: usize, y: usize) -> usize {
        (s / self.block()) * self.letters + y
    }

    /// Coarse-grained flat vector of a configuration.
    fn flat(&self, letters: &[usize]) -> Vec<f64> {
        let w = 1.0 / self.block() as f64;
        let mut x = vec![0.0; self.dim()];
        for (s, &y) in letters.iter().enumerate() {
            x[self.slot(s, y)] += w;
        }
        x
    }

    /// `H_n` evaluated from scratch.
    pub fn energy(&self, letters: &[usize]) -> Vec<f64> {
        let x = self.flat(letters);
        let values: Vec<f64> = letters.iter().map(|&y| self.alphabet[y]).collect();
        self.terms
            .iter()
            .map(|t| match t {
                Term::MeanField { kernel, linear } => mean_field_value(kernel, linear, &x),
                Term::Fourier(f) => f.energy(&f.structure(&values)),
            })
            .collect()
    }

    pub fn state(&self, letters: Vec<usize>) -> Result<MicroState> {
        if letters.len() != self.sites {
            return Err(Error::shape(
                format!("{} sites", self.sites),
                format!("{}", letters.len()),
            ));
        }
        if let Some(s) = letters.iter().position(|&y| y >= self.letters) {
            return Err(Error::Argument(format!(
                "site {s} has no letter {}",
                letters[s]
            )));
        }
        let mut st = MicroState {
            letters,
            flat: Vec::new(),
            caches: Vec::new(),
            energy: Vec::new(),
        };
        self.refresh(&mut st);
        Ok(st)
    }

    /// Recomputes every cache of `st` from its letters.
    pub fn refresh(&self, st: &mut MicroState) {
        st.flat = self.flat(&st.letters);
        let values: Vec<f64> = st.letters.iter().map(|&y| self.alphabet[y]).collect();
        st.caches = self
            .terms
            .iter()
            .map(|t| match t {
                Term::MeanField { kernel, .. } => Cache::Field(match kernel {
                    Some(k) => {
                        let d = st.flat.len();
                        (0..d)
                            .map(|a| (0..d).map(|b| k[a * d + b] * st.flat[b]).sum())
                            .collect()
                    }
                    None => Vec::new(),
                }),
                Term::Fourier(f) => Cache::Structure(f.structure(&values)),
            })
            .collect();
        st.energy = self.energy(&st.letters);
    }

    /// Change of every component when site `s` takes letter `y`.
    pub fn delta(&self, st: &MicroState, s: usize, y: usize) -> Vec<f64> {
        let old = st.letters[s];
        if old == y {
            return vec![0.0; self.terms.len()];
        }
        let w = 1.0 / self.block() as f64;
        let (a, b) = (self.slot(s, old), self.slot(s, y));
        let d = self.dim();
        self.terms
            .iter()
            .zip(&st.caches)
            .map(|(t, c)| match (t, c) {
                (Term::MeanField { kernel, linear }, Cache::Field(kx)) => {
                    let mut dh = 0.0;
                    if let Some(k) = kernel {
                        dh += w * (kx[b] - kx[a])
                            + 0.5 * w * w * (k[b * d + b] + k[a * d + a] - 2.0 * k[a * d + b]);
                    }
                    if let Some(l) = linear {
                        dh += w * (l[b] - l[a]);
                    }
                    dh
                }
                (Term::Fourier(f), Cache::Structure(sf)) => {
                    f.delta(sf, s, self.alphabet[y] - self.alphabet[old])
                }
                _ => unreachable!("caches follow terms"),
            })
            .collect()
    }

    /// Moves site `s` to letter `y`; `dh` must come from [`MicroModel::delta`].
    pub fn apply(&self, st: &mut MicroState, s: usize, y: usize, dh: &[f64]) {
        let old = st.letters[s];
        if old == y {
            return;
        }
        let w = 1.0 / self.block() as f64;
        let (a, b) = (self.slot(s, old), self.slot(s, y));
        let d = self.dim();
        for (t, c) in self.terms.iter().zip(st.caches.iter_mut()) {
            match (t, c) {
                (
                    Term::MeanField {
                        kernel: Some(k), ..
                    },
                    Cache::Field(kx),
                ) => {
                    for (r, v) in kx.iter_mut().enumerate() {
                        *v += w * (k[r * d + b] - k[r * d + a]);
                    }
                }
                (Term::Fourier(f), Cache::Structure(sf)) => {
                    f.apply(sf, s, self.alphabet[y] - self.alphabet[old])
                }
                _ => {}
            }
        }
        st.flat[a] -= w;
        st.flat[b] += w;
        st.letters[s] = y;
        for (e, d) in st.energy.iter_mut().zip(dh) {
            *e += d;
        }
    }

    pub fn macrostate(&self, model: &Model, st: &MicroState) -> Macrostate {
        model.space.macrostate(st.flat.clone())
    }

    /// Average site value.
    pub fn site_mean(&self, st: &MicroState) -> f64 {
        st.letters.iter().map(|&y| self.alphabet[y]).sum::<f64>() / self.sites as f64
    }

    /// Largest `|ΔH_j|` over all single-site moves from `st`.
    pub fn max_step(&self, st: &MicroState, j: usize) -> f64 {
        let mut best: f64 = 0.0;
        for s in 0..self.sites {
            for y in 0..self.letters {
                best = best.max(self.delta(st, s, y)[j].abs());
            }
        }
        best
    }

    /// For a single-cell mean-field model, `ΔH_j` for moving one site from
    /// letter `a` to `b` when the letter counts are `counts`.
    pub(crate) fn type_step(&self, counts: &[usize], a: usize, b: usize, j: usize) -> Option<f64> {
        if self.cells != 1 || counts[a] == 0 || a == b {
            return None;
        }
        let Term::MeanField { kernel, linear } = &self.terms[j] else {
            return None;
        };
        let n = self.sites as f64;
        let x: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let mut x2 = x.clone();
        x2[a] -= 1.0 / n;
        x2[b] += 1.0 / n;
        Some(mean_field_value(kernel, linear, &x2) - mean_field_value(kernel, linear, &x))
    }

    pub(crate) fn is_single_cell_mean_field(&self) -> bool {
        self.cells == 1
            && self
                .terms
                .iter()
                .all(|t| matches!(t, Term::MeanField { .. }))
    }

    /// `H̃` of letter counts in a single-cell model.
    pub(crate) fn type_energy(&self, counts: &[usize]) -> Vec<f64> {
        let n = self.sites as f64;
        let x: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        self.terms
            .iter()
            .map(|t| match t {
                Term::MeanField { kernel, linear } => mean_field_value(kernel, linear, &x),
                Term::Fourier(_) => f64::NAN,
            })
            .collect()
    }
}

fn mean_field_value(kernel: &Option<Vec<f64>>, linear: &Option<Vec<f64>>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut v = 0.0;
    if let Some(k) = kernel {
        for a in 0..d {
            for b in 0..d {
                v += 0.5 * x[a] * k[a * d + b] * x[b];
            }
        }
    }
    if let Some(l) = linear {
        v += l.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
    v
}

/// Letters of every site plus cached energy data.
#[derive(Debug, Clone)]
pub struct MicroState {
    pub letters: Vec<usize>,
    flat: Vec<f64>,
    caches: Vec<Cache>,
    pub energy: Vec<f64>,
}

impl MicroState {
    pub fn flat(&self) -> &[f64] {
        &self.flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::repr_value;
    use crate::models::{build_builtin, BuiltinSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_incremental(model: &Model, sites: usize, seed: u64) {
        let mm = MicroModel::new(model, sites).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let letters: Vec<usize> = (0..sites)
            .map(|_| rng.random_range(0..mm.letters()))
            .collect();
        let mut st = mm.state(letters).unwrap();
        for _ in 0..500 {
            let s = rng.random_range(0..sites);
            let y = rng.random_range(0..mm.letters());
            let dh = mm.delta(&st, s, y);
            mm.apply(&mut st, s, y, &dh);
        }
        let fresh = mm.energy(&st.letters);
        for (a, b) in st.energy.iter().zip(&fresh) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn incremental_matches_fresh() {
        check_incremental(&build_builtin(&BuiltinSpec::curie_weiss()).unwrap(), 32, 1);
        check_incremental(
            &build_builtin(&BuiltinSpec::three_state_default()).unwrap(),
            30,
            2,
        );
        let mr = build_builtin(&BuiltinSpec::MillerRobert {
            cells: 4,
            alphabet: vec![-1.0, 0.0, 1.0],
            prior: vec![0.3, 0.4, 0.3],
            cutoff: 2,
            enstrophy: None,
            sigma: 2,
            sites: None,
        })
        .unwrap();
        check_incremental(&mr, 16, 3);
        let pv = build_builtin(&BuiltinSpec::PointVortex {
            cells: 4,
            cutoff: 1,
            sites: None,
        })
        .unwrap();
        check_incremental(&pv, 12, 4);
    }

    #[test]
    fn mean_field_energy_is_coarse_grained() {
        let m = build_builtin(&BuiltinSpec::curie_weiss()).unwrap();
        let mm = MicroModel::new(&m, 4).unwrap();
        let st = mm.state(vec![0, 1, 1, 1]).unwrap();
        let x = mm.macrostate(&m, &st);
        assert_eq!(x, Macrostate::Simplex(vec![0.25, 0.75]));
        assert!((st.energy[0] - repr_value(&m, &x).unwrap()[0]).abs() < 1e-15);
        assert!((st.energy[0] + 0.125).abs() < 1e-15);
        assert!((mm.site_mean(&st) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bad_site_counts() {
        let m = build_builtin(&BuiltinSpec::curie_weiss()).unwrap();
        assert!(MicroModel::new(&m, 1).is_err());
        let t = build_builtin(&BuiltinSpec::three_point_table()).unwrap();
        assert!(MicroModel::new(&t, 4).is_err());
    }
}

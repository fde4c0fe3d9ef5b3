use ensemblekit::classify::{
    classify, decompose_canonical, default_grid, ClassifyOptions, HullContext, Label,
};
use ensemblekit::equilibria::{brute_force_set, canonical_set, microcanonical_set, Ensemble};
use ensemblekit::model::{coarse_grain_letters, rate_value, relative_entropy, repr_value};
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::sampler::MicroModel;
use ensemblekit::thermo::{Frame, SolverOptions, Thermo};
use ensemblekit::{Macrostate, Model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_map(|w| {
        let t: f64 = w.iter().sum::<f64>() + 1e-9;
        w.iter().map(|v| (v + 1e-9 / w.len() as f64) / t).collect()
    })
}

fn positive_simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.iter().map(|v| v / t).collect()
    })
}

fn three_state(prior: &[f64], quadratic: f64) -> Model {
    build_builtin(&BuiltinSpec::ThreeStateSkew {
        alphabet: vec![-1.0, 0.0, 1.0],
        prior: prior.to_vec(),
        quadratic,
        field: None,
        sites: None,
    })
    .unwrap()
}

proptest! {
    #[test]
    fn relative_entropy_is_convex(
        (prior, p, q) in (2usize..6).prop_flat_map(|m| (positive_simplex(m), simplex(m), simplex(m)))
    ) {
        let (ip, iq) = (relative_entropy(&p, &prior), relative_entropy(&q, &prior));
        prop_assert!(ip >= -1e-15 && iq >= -1e-15);
        for lambda in [0.25, 0.5, 0.75] {
            let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            prop_assert!(relative_entropy(&mix, &prior) <= lambda * ip + (1.0 - lambda) * iq + 1e-10);
        }
    }

    #[test]
    fn kernel_symmetrization_is_invisible(
        k in prop::collection::vec(-2.0f64..2.0, 9),
        x in simplex(3),
    ) {
        let rows = |f: &dyn Fn(usize, usize) -> f64| -> String {
            let r: Vec<String> = (0..3)
                .map(|i| format!("[{}]", (0..3).map(|j| f(i, j).to_string()).collect::<Vec<_>>().join(",")))
                .collect();
            r.join(",")
        };
        let raw = rows(&|i, j| k[3 * i + j]);
        let sym = rows(&|i, j| 0.5 * (k[3 * i + j] + k[3 * j + i]));
        let model = |kernel: &str| {
            Model::from_json(&format!(
                r#"{{"kind":"three_state_skew","alphabet":[-1,0,1],"prior":[0.3,0.45,0.25],"quadratic":1,"kernel":[[{kernel}]]}}"#
            ))
            .unwrap()
        };
        let state = Macrostate::Simplex(x);
        let a = repr_value(&model(&raw), &state).unwrap()[0];
        let b = repr_value(&model(&sym), &state).unwrap()[0];
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn rate_is_nonnegative_and_vanishes_at_prior(prior in positive_simplex(3), x in simplex(3)) {
        let m = three_state(&prior, 1.0);
        prop_assert!(rate_value(&m, &Macrostate::Simplex(x)).unwrap() >= 0.0);
        prop_assert!(rate_value(&m, &Macrostate::Simplex(prior)).unwrap().abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn entropy_is_nonpositive_and_free_energy_vanishes_at_zero(
        prior in positive_simplex(3),
        quadratic in 0.0f64..3.0,
        t in 0.05f64..0.95,
    ) {
        let m = three_state(&prior, quadratic);
        let th = Thermo::new(&m, SolverOptions::default());
        prop_assert!(th.free_energy(&[0.0]).unwrap().abs() <= 1e-12);
        let (lo, hi) = th.component_range(0).unwrap();
        let s = th.entropy_point(&[lo + t * (hi - lo)]).unwrap();
        prop_assert!(s <= 1e-12, "s = {s}");
    }

    #[test]
    fn solver_is_sound(
        prior in positive_simplex(3),
        quadratic in 0.0f64..3.0,
        t in 0.05f64..0.95,
        beta in -4.0f64..4.0,
    ) {
        let m = three_state(&prior, quadratic);
        let th = Thermo::new(&m, SolverOptions::default());
        let (lo, hi) = th.component_range(0).unwrap();
        let u = lo + t * (hi - lo);
        let s = th.entropy_point(&[u]).unwrap();
        let micro = microcanonical_set(&th, &[u]).unwrap();
        prop_assert!(!micro.is_empty());
        for x in &micro.members {
            prop_assert!((repr_value(&m, x).unwrap()[0] - u).abs() <= 1e-8);
            prop_assert!((rate_value(&m, x).unwrap() + s).abs() <= 1e-9);
        }
        let brute = brute_force_set(&m, Ensemble::Microcanonical { u: vec![u] }).unwrap();
        prop_assert!(brute.objective >= micro.objective - 1e-4, "{} < {}", brute.objective, micro.objective);

        let phi = th.free_energy(&[beta]).unwrap();
        let canon = canonical_set(&th, &[beta]).unwrap();
        prop_assert!(!canon.is_empty());
        for x in &canon.members {
            let value = rate_value(&m, x).unwrap() + beta * repr_value(&m, x).unwrap()[0];
            prop_assert!((value - phi).abs() <= 1e-9, "{value} vs {phi}");
        }
    }
}

fn random_table(rng: &mut ChaCha8Rng, concave: bool) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(3..=8);
    if concave {
        let h: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let c = rng.random_range(0.0..n as f64);
        let mut rate: Vec<f64> = h.iter().map(|u| 0.3 * (u - c) * (u - c)).collect();
        let min = rate.iter().copied().fold(f64::INFINITY, f64::min);
        rate.iter_mut().for_each(|r| *r -= min);
        return (rate, h);
    }
    let mut rate: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    rate[rng.random_range(0..n)] = 0.0;
    let h: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
    (rate, h)
}

/// When every canonical decomposition covers the whole superdifferential
/// the entropy is concave, so no interior point is nonequivalent.
#[test]
fn full_decompositions_force_concavity() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut full, mut partial) = (0, 0);
    for k in 0..60 {
        let (rate, h) = random_table(&mut rng, k % 3 == 0);
        let m = build_builtin(&BuiltinSpec::Tabular {
            rate,
            repr: vec![h],
        })
        .unwrap();
        let t = Thermo::new(&m, SolverOptions::default());
        let grid = default_grid(&t, Frame::Pure, 0).unwrap();
        let ctx = HullContext::build(&t, Frame::Pure, &grid).unwrap();
        let mut covers = true;
        for i in 0..grid.len() {
            for beta in [ctx.hull.beta_minus[i], ctx.hull.beta_plus[i]] {
                if !beta.is_finite() {
                    continue;
                }
                let d = decompose_canonical(&t, Frame::Pure, beta, Some(&ctx), 0.0).unwrap();
                let us: Vec<f64> = d.parts.iter().map(|p| p.u).collect();
                for w in us.windows(2) {
                    assert!(w[0] < w[1], "parts share a value");
                }
                let arg = ctx.conjugate_arginf(beta);
                let (lo, hi) = (grid[arg[0]], grid[arg[arg.len() - 1]]);
                covers &= grid
                    .iter()
                    .filter(|&&u| u >= lo && u <= hi)
                    .all(|u| us.contains(u));
            }
        }
        let rep = classify(&t, &grid, &ClassifyOptions::default()).unwrap();
        let nonequivalent = rep.labels().contains(&Label::Nonequivalent);
        if covers {
            assert!(!nonequivalent, "model {k}");
            full += 1;
        } else {
            partial += 1;
        }
    }
    assert!(full > 0 && partial > 0, "{full} covering, {partial} not");
}

/// Site energies approach the coarse-grained energy as cells fill up.
#[test]
fn coarse_graining_converges() {
    let m = build_builtin(&BuiltinSpec::MillerRobert {
        cells: 4,
        alphabet: vec![-1.0, 0.0, 1.0],
        prior: vec![0.25, 0.5, 0.25],
        cutoff: 3,
        enstrophy: None,
        sigma: 1,
        sites: None,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gap = |per_cell: usize, rng: &mut ChaCha8Rng| {
        let sites = 4 * per_cell;
        let micro = MicroModel::new(&m, sites).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            // Smooth cell profiles so that the coarse-grained field is resolved.
            let levels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let letters: Vec<usize> = (0..sites)
                .map(|s| {
                    if rng.random::<f64>() < 0.7 {
                        levels[s / per_cell]
                    } else {
                        rng.random_range(0..3)
                    }
                })
                .collect();
            let h_site = micro.energy(&letters)[0];
            let x = coarse_grain_letters(&m, &letters).unwrap();
            let h_cell = repr_value(&m, &x).unwrap()[0];
            worst = worst.max((h_site - h_cell).abs());
        }
        worst
    };
    let coarse = gap(4, &mut rng);
    let fine = gap(64, &mut rng);
    assert!(fine < coarse, "{fine} ≥ {coarse}");
}

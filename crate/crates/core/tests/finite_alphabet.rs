use nardf::finite::{
    causal_solve, directed_information, oracle_minimize, OracleOptions, fixed_point_solve, rd_curve, self_consistency_residual, JointLaw,
    SolverOptions,
};
use nardf::model::{DistortionSpec, FiniteMarkovSource, ReproductionPolicy, Transition};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pmf(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn random_source(rng: &mut ChaCha8Rng, k: usize, n: usize) -> FiniteMarkovSource {
    let init = random_pmf(rng, k);
    let table = (0..k).map(|_| random_pmf(rng, k)).collect();
    FiniteMarkovSource::new(init, Transition::Stationary(table), n).unwrap()
}

fn random_policy(rng: &mut ChaCha8Rng, nx: usize, ny: usize, n: usize) -> ReproductionPolicy {
    ReproductionPolicy::from_fn(nx, ny, n, |_, _, _| (0..ny).map(|_| rng.random::<f64>() + 0.01).collect()).unwrap()
}

/// Brute-force `sum_i I(X^i; Y_i | Y^{i-1})` from the full-sequence joint law.
fn brute_directed_information(src: &FiniteMarkovSource, pol: &ReproductionPolicy) -> f64 {
    let (nx, ny, n) = (pol.x_size(), pol.y_size(), pol.horizon());
    let len = n + 1;
    let decode = |mut idx: usize, radix: usize| {
        let mut v = vec![0; len];
        for slot in v.iter_mut().rev() {
            *slot = idx % radix;
            idx /= radix;
        }
        v
    };
    let mut joint = Vec::new();
    for xi in 0..nx.pow(len as u32) {
        let x = decode(xi, nx);
        for yi in 0..ny.pow(len as u32) {
            let y = decode(yi, ny);
            joint.push((x.clone(), y.clone(), src.prefix_prob(&x) * pol.sequence_prob(&y, &x)));
        }
    }
    // marginal of (x^i, y^i) and (y^{i-1}), (x^i, y^{i-1}), (y^i) by prefix keys
    use std::collections::HashMap;
    let mut total = 0.0;
    for i in 0..len {
        let mut pxy: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
        let mut px_yprev: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
        let mut py: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut pyprev: HashMap<Vec<usize>, f64> = HashMap::new();
        for (x, y, p) in &joint {
            *pxy.entry((x[..=i].to_vec(), y[..=i].to_vec())).or_default() += p;
            *px_yprev.entry((x[..=i].to_vec(), y[..i].to_vec())).or_default() += p;
            *py.entry(y[..=i].to_vec()).or_default() += p;
            *pyprev.entry(y[..i].to_vec()).or_default() += p;
        }
        for ((x, y), p) in &pxy {
            if *p > 0.0 {
                let num = p * pyprev[&y[..i].to_vec()];
                let den = px_yprev[&(x.clone(), y[..i].to_vec())] * py[y];
                total += p * (num / den).ln();
            }
        }
    }
    total
}

#[test]
fn directed_information_forms_agree_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let k = 2 + trial % 2;
        let ny = 2 + (trial / 2) % 2;
        let n = trial % 3;
        let src = random_source(&mut rng, k, n);
        let pol = random_policy(&mut rng, k, ny, n);
        let di = directed_information(&src, &pol).unwrap();
        let brute = brute_directed_information(&src, &pol);
        assert!(di.discrepancy() < 1e-10, "trial {trial}: {di:?}");
        assert!((di.value() - brute).abs() < 1e-10, "trial {trial}: {} vs {brute}", di.value());
    }
}

#[test]
fn future_symbols_never_change_kernel_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let src = random_source(&mut rng, 3, 3);
    let rho = DistortionSpec::hamming(3);
    let solved = fixed_point_solve(&src, &rho, -1.7, &SolverOptions::default()).unwrap();
    let policies = [solved.policy, random_policy(&mut rng, 3, 3, 3)];
    for pol in &policies {
        for _ in 0..500 {
            let step = rng.random_range(0..=3);
            let x: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let y_hist: Vec<usize> = (0..step).map(|_| rng.random_range(0..3)).collect();
            let mut shuffled = x.clone();
            shuffled[step + 1..].shuffle(&mut rng);
            for v in shuffled[step + 1..].iter_mut() {
                if rng.random::<bool>() {
                    *v = rng.random_range(0..3);
                }
            }
            assert_eq!(pol.conditional(step, &y_hist, &x), pol.conditional(step, &y_hist, &shuffled));
        }
    }
}

/// Textbook Blahut-Arimoto for a single-letter source.
fn classical_ba(px: &[f64], d: &[Vec<f64>], s: f64) -> (f64, f64) {
    let ny = d[0].len();
    let mut q = vec![1.0 / ny as f64; ny];
    for _ in 0..100_000 {
        let mut next = vec![0.0; ny];
        for (x, p) in px.iter().enumerate() {
            let z: f64 = (0..ny).map(|y| q[y] * (s * d[x][y]).exp()).sum();
            for y in 0..ny {
                next[y] += p * q[y] * (s * d[x][y]).exp() / z;
            }
        }
        let change = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if change < 1e-15 {
            break;
        }
    }
    let mut rate = 0.0;
    let mut dist = 0.0;
    for (x, p) in px.iter().enumerate() {
        let z: f64 = (0..ny).map(|y| q[y] * (s * d[x][y]).exp()).sum();
        for y in 0..ny {
            let w = q[y] * (s * d[x][y]).exp() / z;
            if w > 0.0 {
                rate += p * w * (w / q[y]).ln();
                dist += p * w * d[x][y];
            }
        }
    }
    (rate, dist)
}

#[test]
fn horizon_zero_matches_classical_blahut_arimoto() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let px = random_pmf(&mut rng, 3);
        let table: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random::<f64>() * 2.0).collect()).collect();
        let rho = DistortionSpec::table(table.clone()).unwrap();
        let src = FiniteMarkovSource::iid(px.clone(), 0).unwrap();
        for s in [-0.5, -2.0, -5.0] {
            let sol = fixed_point_solve(&src, &rho, s, &SolverOptions { tol: 1e-13, ..Default::default() }).unwrap();
            let (r, d) = classical_ba(&px, &table, s);
            assert!((sol.point.rate - r).abs() < 1e-8, "s={s}: {} vs {r}", sol.point.rate);
            assert!((sol.point.distortion - d).abs() < 1e-8);
        }
    }
}

#[test]
fn iid_source_rate_is_single_letter_rate_at_every_horizon() {
    let src0 = FiniteMarkovSource::iid(vec![0.3, 0.7], 0).unwrap();
    let rho = DistortionSpec::hamming(2);
    let base = fixed_point_solve(&src0, &rho, -2.0, &SolverOptions::default()).unwrap();
    for n in 1..=3 {
        let sol = fixed_point_solve(&src0.with_horizon(n).unwrap(), &rho, -2.0, &SolverOptions::default()).unwrap();
        assert!((sol.point.rate - base.point.rate).abs() < 1e-9);
        assert!((sol.point.distortion - base.point.distortion).abs() < 1e-9);
    }
}

#[test]
fn solved_policies_are_self_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 0..=2 {
        let src = random_source(&mut rng, 2, n);
        let rho = DistortionSpec::hamming(2);
        let sol = fixed_point_solve(&src, &rho, -2.5, &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert!(self_consistency_residual(&src, &rho, -2.5, &sol.policy).unwrap() < 1e-8);
    }
}

#[test]
fn binary_curve_traces_classical_rdf() {
    let src = FiniteMarkovSource::iid(vec![0.5, 0.5], 0).unwrap();
    let grid: Vec<f64> = (0..40).map(|i| -0.1 * i as f64).collect();
    let curve = rd_curve(&src, &DistortionSpec::hamming(2), &grid, &SolverOptions::default()).unwrap();
    for sol in &curve {
        let d = sol.point.distortion;
        let hb = -d * d.ln() - (1.0 - d) * (1.0 - d).ln();
        assert!((sol.point.rate - (std::f64::consts::LN_2 - hb)).abs() < 1e-8);
    }
}

#[test]
fn causal_recursion_matches_convex_oracle_on_markov_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rho = DistortionSpec::hamming(2);
    for n in 1..=2 {
        for _ in 0..4 {
            let src = random_source(&mut rng, 2, n);
            for s in [-0.8, -2.5] {
                let sol = causal_solve(&src, &rho, s, &SolverOptions { tol: 1e-12, max_iter: 200_000, ..Default::default() }).unwrap();
                let or = oracle_minimize(&src, &rho, s, &OracleOptions { restarts: 4, ..Default::default() }).unwrap();
                assert!(sol.report.converged);
                assert!((sol.point.rate - or.point.rate).abs() < 1e-6, "n={n} s={s}: {} vs {}", sol.point.rate, or.point.rate);
                assert!((sol.point.distortion - or.point.distortion).abs() < 1e-6);
                assert!((sol.report.parametric_rate - sol.point.rate).abs() < 1e-8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn joint_law_is_a_probability_law(seed in 0u64..1000, n in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_source(&mut rng, 2, n);
        let pol = random_policy(&mut rng, 2, 3, n);
        let joint = JointLaw::new(&src, &pol).unwrap();
        prop_assert!((joint.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(joint.full().iter().all(|p| *p >= 0.0));
        let di = directed_information(&src, &pol).unwrap();
        prop_assert!(di.value() >= -1e-12);
    }
}

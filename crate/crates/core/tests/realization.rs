use nalgebra::{DMatrix, DVector};
use nardf::gauss::{
    design_schedule, kalman_update, matching_check, perfect_schedule, riccati_infinite, simulate,
    DecoderGain, Design, FilterState, GainSet, RiccatiOptions, SimulationOptions,
};
use nardf::model::StateSpaceModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn scalar() -> StateSpaceModel {
    StateSpaceModel::scalar(0.5, 1.0, 1.0, 1.0)
}

fn two_dim() -> StateSpaceModel {
    StateSpaceModel::from_system(
        DMatrix::from_row_slice(2, 2, &[0.8, 0.2, -0.1, 0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.4, 0.6]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.2, 0.5]),
    )
    .unwrap()
}

/// Predictor form of the standard Kalman filter.
fn textbook_kalman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    g: &DMatrix<f64>,
    x_hat: &DVector<f64>,
    p: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = c * p * c.transpose() + g * g.transpose();
    let s_inv = s.try_inverse().unwrap();
    let k = a * p * c.transpose() * &s_inv;
    let x_next = a * x_hat + &k * (y - c * x_hat);
    let p_next = a * p * a.transpose() - &k * c * p * a.transpose() + b * b.transpose();
    (x_next, (&p_next + p_next.transpose()) * 0.5)
}

#[test]
fn identity_gains_reduce_to_textbook_kalman() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = two_dim()
        .with_initial(DVector::from_vec(vec![0.3, -0.2]), DMatrix::identity(2, 2) * 2.0)
        .unwrap();
    let mut f = FilterState::initial(&model);
    let (mut xr, mut pr) = (f.x_hat.clone(), f.sigma.clone());
    let mut x = DVector::from_vec(vec![1.0, 0.0]);
    for _ in 0..100 {
        let v = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = model.c() * &x + model.g() * v;
        let lam = model.c() * &f.sigma * model.c().transpose() + model.observation_noise_cov();
        f = kalman_update(&model, &f, &GainSet::perfect(&lam), &y).unwrap();
        (xr, pr) = textbook_kalman(model.a(), model.b(), model.c(), model.g(), &xr, &pr, &y);
        assert!((&f.x_hat - &xr).amax() < 1e-8);
        assert!((&f.sigma - &pr).amax() < 1e-8);
        let w = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        x = model.a() * &x + model.b() * w;
    }
    assert_eq!(perfect_schedule(&model, 5).unwrap().len(), 5);
}

#[test]
fn finite_horizon_steps_meet_the_budget() {
    let model = two_dim()
        .with_initial(DVector::zeros(2), DMatrix::identity(2, 2))
        .unwrap();
    let sched = design_schedule(&model, 0.6, 0.5, 50, DecoderGain::Mmse).unwrap();
    for (t, st) in sched.iter().enumerate() {
        assert!((st.distortion_identity() - 0.6).abs() < 1e-8, "step {t}");
        let e = st.gains.e();
        assert!((e.transpose() * e - DMatrix::identity(2, 2)).amax() < 1e-10);
        let d = e * st.gains.lambda() * e.transpose();
        assert!(d[(0, 1)].abs() < 1e-10 && d[(1, 0)].abs() < 1e-10);
        assert!(st.sigma.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
    }
}

#[test]
fn steady_state_monte_carlo_scalar() {
    let opts = SimulationOptions {
        distortion: 0.5,
        q: 1.0,
        horizon: 10_000,
        trials: 100,
        seed: 2024,
        ..Default::default()
    };
    let r = simulate(&scalar(), &opts).unwrap();
    assert!((r.mean_distortion - 0.5).abs() < 3.0 * r.std_error, "{} ± {}", r.mean_distortion, r.std_error);
    assert!((r.mean_distortion / 0.5 - 1.0).abs() < 0.02);
    for v in &r.decoded_lag1 {
        assert!(v.abs() < r.whiteness_bound, "{v} vs {}", r.whiteness_bound);
    }
    // the encoder innovation carries a known lag-1 correlation a σ (1 - h) / λ
    let s = riccati_infinite(&scalar(), 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
    let lam = s.lambda[(0, 0)];
    let expect = 0.5 * s.sigma[(0, 0)] * (0.5 / lam) / lam;
    assert!((r.encoder_lag1[0] - expect).abs() < r.whiteness_bound);
}

#[test]
fn steady_state_monte_carlo_two_dimensional() {
    let model = two_dim();
    let ss = riccati_infinite(&model, 0.9, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
    assert!(matching_check(&ss).matched);
    let opts = SimulationOptions {
        distortion: 0.9,
        q: 1.0,
        horizon: 10_000,
        trials: 100,
        seed: 99,
        threads: 4,
        ..Default::default()
    };
    let r = simulate(&model, &opts).unwrap();
    assert!((r.mean_distortion - 0.9).abs() < 3.0 * r.std_error, "{} ± {}", r.mean_distortion, r.std_error);
    assert!((r.mean_distortion / 0.9 - 1.0).abs() < 0.02);
}

#[test]
fn finite_horizon_monte_carlo_tracks_budget() {
    let model = scalar()
        .with_initial(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 3.0))
        .unwrap();
    let opts = SimulationOptions {
        design: Design::FiniteHorizon,
        distortion: 0.4,
        q: 2.0,
        horizon: 20,
        trials: 20_000,
        seed: 5,
        ..Default::default()
    };
    let r = simulate(&model, &opts).unwrap();
    assert!((r.mean_distortion - 0.4).abs() < 3.0 * r.std_error);
}

/// Ỹ given (Y, C X̂) should be Gaussian with mean h Y + (1 - h) C X̂ and
/// variance decoder^2 Q.
#[test]
fn reproduction_law_is_affine_gaussian() {
    let ss = riccati_infinite(&scalar(), 0.5, 1.0, &RiccatiOptions::default(), DecoderGain::Mmse).unwrap();
    let h = ss.gains.h_diag()[0];
    let noise_var = ss.gains.noise_cov()[(0, 0)];
    let opts = SimulationOptions {
        distortion: 0.5,
        q: 1.0,
        horizon: 200_000,
        trials: 1,
        seed: 17,
        record_trace: true,
        ..Default::default()
    };
    let r = simulate(&scalar(), &opts).unwrap();
    let tr = r.trace.unwrap();
    // least squares of ỹ on (y, y - k) = (Y, C X̂)
    let n = tr.steps.len();
    let x = DMatrix::from_fn(n, 2, |i, j| {
        let s = &tr.steps[i];
        if j == 0 { s.y[0] } else { s.y[0] - s.k[0] }
    });
    let target = DVector::from_fn(n, |i, _| tr.steps[i].y_tilde[0]);
    let xtx = x.transpose() * &x;
    let coef = xtx.clone().cholesky().unwrap().solve(&(x.transpose() * &target));
    let resid = &target - &x * &coef;
    let var = resid.norm_squared() / n as f64;
    let m4 = resid.iter().map(|r| r.powi(4)).sum::<f64>() / n as f64;
    let kurtosis = m4 / (var * var);
    let cov = xtx.try_inverse().unwrap() * noise_var;
    assert!((coef[0] - h).abs() < 4.0 * cov[(0, 0)].sqrt(), "{} vs {h}", coef[0]);
    assert!((coef[1] - (1.0 - h)).abs() < 4.0 * cov[(1, 1)].sqrt(), "{} vs {}", coef[1], 1.0 - h);
    assert!((var / noise_var - 1.0).abs() < 0.02);
    // sampling sd of the kurtosis is about sqrt(24 / n)
    assert!((kurtosis - 3.0).abs() < 4.0 * (24.0 / n as f64).sqrt());
}

use super::*;
use crate::rng::seeded;
use proptest::prelude::*;

fn dims() -> Dims {
    Dims::new(10, 8, 20)
}

fn noisy(x: &ComplexTensor, level: f64, seed: u64) -> ComplexTensor {
    let mut rng = seeded(seed);
    let d = x.dims();
    let noise = random_complex(d.channels * d.freqs * d.trials, 1, &mut rng);
    let scale = level * (x.norm_squared() / noise.norm_squared()).sqrt();
    let data = x.data().iter().zip(noise.iter()).map(|(v, n)| v + n * scale).collect();
    ComplexTensor::new(d, data).unwrap()
}

/// Entry-by-entry reconstruction of a PARAFAC model.
fn brute_force_entry(m: &ParafacModel, c: usize, f: usize, k: usize) -> C64 {
    (0..m.rank()).map(|r| m.spectral[(f, r)] * m.trial[(k, r)] * m.spatial[(c, r)]).sum()
}

fn assert_monotone(losses: &[f64]) {
    let slack = 1e-9 * losses[0];
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + slack, "loss increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn parafac_recovers_noiseless_model() {
    let truth = ParafacModel::random(dims(), 3, &mut seeded(11));
    let x = FactorModel::Parafac(truth.clone()).to_tensor().unwrap();
    let (model, report) = fit_parafac(&x, 3, &FitOptions::default()).unwrap();
    assert!(report.explained_variance >= 0.9999, "ev {}", report.explained_variance);
    let al = align_components(&model.spatial, &truth.spatial).unwrap();
    for c in &al.congruences {
        assert!(*c >= 0.99, "congruences {:?}", al.congruences);
    }
}

#[test]
fn parafac_rank_one_up_to_scale() {
    let truth = ParafacModel::random(dims(), 1, &mut seeded(5));
    let x = FactorModel::Parafac(truth.clone()).to_tensor().unwrap();
    let (model, _) = fit_parafac(&x, 1, &FitOptions::default()).unwrap();
    assert!(congruence(model.spatial.as_slice(), truth.spatial.as_slice()) > 1.0 - 1e-10);
    // p ⊗ y must agree with the truth up to one complex scalar.
    let outer = |m: &ParafacModel| &m.spectral * m.trial.transpose();
    let (est, tru) = (outer(&model), outer(&truth));
    let ratio = est[(0, 0)] / tru[(0, 0)];
    let diff = (&est - &tru * ratio).norm();
    assert!(diff <= 1e-8 * est.norm(), "diff {diff}");
}

#[test]
fn zero_tensor_converges_immediately() {
    let x = ComplexTensor::zeros(dims()).unwrap();
    let (pm, pr) = fit_parafac(&x, 2, &FitOptions::default()).unwrap();
    assert_eq!(pr.losses, vec![0.0]);
    assert!(pr.converged);
    assert_eq!(pr.explained_variance, 0.0);
    assert!(pm.spectral.iter().all(|z| z.norm() == 0.0));
    let (_, r2) = fit_parafac2(&x, 2, &FitOptions::default()).unwrap();
    assert_eq!(r2.losses, vec![0.0]);
    assert!(r2.converged);
    assert_eq!(r2.explained_variance, 0.0);
}

#[test]
fn rank_outside_range_is_invalid() {
    let x = ComplexTensor::zeros(Dims::new(10, 4, 20)).unwrap();
    for r in [0, 5] {
        assert!(matches!(fit_parafac(&x, r, &FitOptions::default()), Err(Error::InvalidInput(_))));
        assert!(matches!(fit_parafac2(&x, r, &FitOptions::default()), Err(Error::InvalidInput(_))));
    }
}

#[test]
fn parafac2_recovers_noiseless_model() {
    let truth = Parafac2Model::random(dims(), 3, &mut seeded(21));
    let x = FactorModel::Parafac2(truth.clone()).to_tensor().unwrap();
    let (model, report) = fit_parafac2(&x, 3, &FitOptions::default()).unwrap();
    assert!(report.explained_variance >= 0.999, "ev {}", report.explained_variance);
    assert!(model.cross_product_deviation() < 1e-6);
    assert!(model.orthonormality_deviation() < 1e-8);
    let al = align_components(&model.spatial, &truth.spatial).unwrap();
    for c in &al.congruences {
        assert!(*c >= 0.99, "congruences {:?}", al.congruences);
    }
}

#[test]
fn parafac2_nests_parafac() {
    for seed in 0..3 {
        let truth = ParafacModel::random(dims(), 3, &mut seeded(100 + seed));
        let x = noisy(&FactorModel::Parafac(truth).to_tensor().unwrap(), 0.3, seed);
        let opts = FitOptions { max_iters: 2000, tol: 1e-12, seed, ..Default::default() };
        let (pf, pr) = fit_parafac(&x, 3, &opts).unwrap();
        let (p2, r2) = fit_parafac2_from(&x, Parafac2Model::from_parafac(&pf), &opts).unwrap();
        assert!(r2.losses[0] <= pr.losses.last().unwrap() * (1.0 + 1e-9));
        assert!(
            r2.explained_variance >= pr.explained_variance - 1e-6,
            "{} < {}",
            r2.explained_variance,
            pr.explained_variance
        );
        assert!(p2.cross_product_deviation() < 1e-6);
    }
}

#[test]
fn from_parafac_is_exact() {
    let m = ParafacModel::random(dims(), 3, &mut seeded(3));
    let a = FactorModel::Parafac(m.clone()).to_tensor().unwrap();
    let b = FactorModel::Parafac2(Parafac2Model::from_parafac(&m)).to_tensor().unwrap();
    let diff: f64 = a.data().iter().zip(b.data()).map(|(u, v)| (u - v).norm_sqr()).sum();
    assert!(diff.sqrt() < 1e-12 * a.norm_squared().sqrt());
}

#[test]
fn procrustes_step_never_increases_loss() {
    let mut rng = seeded(9);
    for _ in 0..10 {
        let x = FactorModel::Parafac2(Parafac2Model::random(dims(), 3, &mut rng)).to_tensor().unwrap();
        let mut model = Parafac2Model::random(dims(), 3, &mut rng);
        let before = squared_error(&x, &model.clone().into()).unwrap();
        procrustes_update(&x, &mut model).unwrap();
        let after = squared_error(&x, &model.clone().into()).unwrap();
        assert!(after <= before * (1.0 + 1e-12), "{before} -> {after}");
        assert!(model.orthonormality_deviation() < 1e-10);
    }
}

#[test]
fn procrustes_update_is_optimal_against_rotations() {
    let mut rng = seeded(10);
    let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 2, &mut rng)).to_tensor().unwrap(), 0.5, 1);
    let mut model = Parafac2Model::random(dims(), 2, &mut rng);
    procrustes_update(&x, &mut model).unwrap();
    let best = squared_error(&x, &model.clone().into()).unwrap();
    for _ in 0..20 {
        let mut other = model.clone();
        for q in other.q.iter_mut() {
            *q = random_orthonormal(dims().trials, 2, &mut rng);
        }
        assert!(squared_error(&x, &other.into()).unwrap() >= best);
    }
}

#[test]
fn als_is_monotone_on_random_problems() {
    let mut rng = seeded(77);
    for i in 0..20u64 {
        let rank = 1 + (i as usize % 4);
        let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 3, &mut rng)).to_tensor().unwrap(), 0.5, i);
        let opts = FitOptions { max_iters: 60, tol: 0.0, seed: i, ..Default::default() };
        let (_, r1) = fit_parafac(&x, rank, &opts).unwrap();
        assert_monotone(&r1.losses);
        let (_, r2) = fit_parafac2(&x, rank, &opts).unwrap();
        assert_monotone(&r2.losses);
    }
}

#[test]
fn recorded_loss_matches_direct_error() {
    let x = noisy(&FactorModel::Parafac(ParafacModel::random(dims(), 2, &mut seeded(4))).to_tensor().unwrap(), 0.2, 4);
    let opts = FitOptions { max_iters: 15, tol: 0.0, seed: 1, ..Default::default() };
    let (m1, r1) = fit_parafac(&x, 2, &opts).unwrap();
    let e1 = squared_error(&x, &m1.into()).unwrap();
    assert!((r1.losses.last().unwrap() - e1).abs() <= 1e-9 * x.norm_squared());
    let (m2, r2) = fit_parafac2(&x, 2, &opts).unwrap();
    let e2 = squared_error(&x, &m2.into()).unwrap();
    assert!((r2.losses.last().unwrap() - e2).abs() <= 1e-9 * x.norm_squared());
}

#[test]
fn fitted_factors_are_normalized() {
    let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 3, &mut seeded(8))).to_tensor().unwrap(), 0.1, 8);
    let (m1, _) = fit_parafac(&x, 3, &FitOptions::default()).unwrap();
    for (a, y) in m1.spatial.column_iter().zip(m1.trial.column_iter()) {
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!((y.norm() - 1.0).abs() < 1e-12);
    }
    let (m2, _) = fit_parafac2(&x, 3, &FitOptions::default()).unwrap();
    for a in m2.spatial.column_iter() {
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reconstruction_is_invariant_to_normalization() {
    let mut rng = seeded(31);
    let model = ParafacModel::random(dims(), 3, &mut rng);
    let mut scaled = model.clone();
    for c in 0..3 {
        let (sa, sy) = (0.5 + c as f64, C64::new(0.3, -1.2 * c as f64 + 0.1));
        scaled.spatial.column_mut(c).scale_mut(sa);
        scaled.trial.column_mut(c).apply(|z| *z *= sy);
        scaled.spectral.column_mut(c).apply(|z| *z /= sy * sa);
    }
    let mut renorm = scaled.clone();
    normalize_spatial(&mut renorm.spatial, &mut renorm.spectral);
    let a = FactorModel::Parafac(scaled).to_tensor().unwrap();
    let b = FactorModel::Parafac(renorm).to_tensor().unwrap();
    let c = FactorModel::Parafac(model).to_tensor().unwrap();
    let dist = |u: &ComplexTensor, v: &ComplexTensor| {
        u.data().iter().zip(v.data()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
    };
    assert!(dist(&a, &b) < 1e-10);
    assert!(dist(&a, &c) < 1e-10);
}

#[test]
fn spatial_factor_is_exactly_real() {
    let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 2, &mut seeded(2))).to_tensor().unwrap(), 0.2, 2);
    let (m, _) = fit_parafac2(&x, 2, &FitOptions::default()).unwrap();
    assert!(complexify(&m.spatial).iter().all(|z| z.im == 0.0));
}

#[test]
fn explained_variance_cases() {
    let mut rng = seeded(12);
    let model = ParafacModel::random(dims(), 3, &mut rng);
    let fm = FactorModel::Parafac(model.clone());
    let x = fm.to_tensor().unwrap();
    assert!((explained_variance(&x, &fm).unwrap() - 1.0).abs() < 1e-10);

    let mut zero = model.clone();
    zero.spectral.fill(C64::new(0.0, 0.0));
    assert_eq!(explained_variance(&x, &zero.into()).unwrap(), 0.0);
    assert_eq!(explained_variance(&ComplexTensor::zeros(dims()).unwrap(), &fm).unwrap(), 0.0);

    let other = ParafacModel::random(dims(), 2, &mut rng);
    let d = dims();
    let mut fitted = 0.0;
    for c in 0..d.channels {
        for f in 0..d.freqs {
            for k in 0..d.trials {
                fitted += brute_force_entry(&other, c, f, k).norm_sqr();
            }
        }
    }
    let expected = fitted / x.norm_squared();
    let ev = explained_variance(&x, &other.into()).unwrap();
    assert!((ev - expected).abs() < 1e-12 * expected.max(1.0));

    let small = ParafacModel::random(Dims::new(10, 8, 5), 2, &mut rng);
    assert!(matches!(explained_variance(&x, &small.into()), Err(Error::InvalidInput(_))));
}

#[test]
fn alignment_handles_permutation_and_sign() {
    let truth = ParafacModel::random(dims(), 4, &mut seeded(13)).spatial;
    let perm = [2, 0, 3, 1];
    let mut est = RMatrix::zeros(10, 4);
    for (t, &e) in perm.iter().enumerate() {
        est.set_column(e, &truth.column(t));
    }
    est.column_mut(3).neg_mut();
    let al = align_components(&est, &truth).unwrap();
    assert_eq!(al.permutation, perm.to_vec());
    for c in al.congruences {
        assert!((c - 1.0).abs() < 1e-12);
    }
}

#[test]
fn alignment_of_unrelated_factors_is_low() {
    let mut rng = seeded(14);
    let trials = 200;
    let mean: f64 = (0..trials)
        .map(|_| {
            let a = random_unit_columns(100, 3, &mut rng);
            let b = random_unit_columns(100, 3, &mut rng);
            align_components(&a, &b).unwrap().mean_congruence()
        })
        .sum::<f64>()
        / trials as f64;
    assert!(mean < 0.3, "mean {mean}");
}

fn max_abs_spectral(m: &FactorModel) -> f64 {
    m.spectral().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn multi_init_is_deterministic() {
    let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 2, &mut seeded(15))).to_tensor().unwrap(), 0.3, 15);
    let opts = MultiInitOptions { n_runs: 3, n_inits: 2, burn_in: 5, fit: FitOptions { max_iters: 50, ..Default::default() } };
    for algo in [Algorithm::Parafac, Algorithm::Parafac2] {
        let a = multi_init_fit(&x, 2, algo, &opts, max_abs_spectral).unwrap();
        let b = multi_init_fit(&x, 2, algo, &opts, max_abs_spectral).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.couplings, b.couplings);
        assert_eq!(a.selected_run, b.selected_run);
        let best = a.couplings.iter().flatten().cloned().fold(f64::MIN, f64::max);
        assert_eq!(a.couplings[a.selected_run], Some(best));
    }
}

#[test]
fn multi_init_single_run_equals_single_fit() {
    let x = noisy(&FactorModel::Parafac(ParafacModel::random(dims(), 2, &mut seeded(16))).to_tensor().unwrap(), 0.3, 16);
    let fit = FitOptions { seed: 42, ..Default::default() };
    let opts = MultiInitOptions { n_runs: 1, n_inits: 1, burn_in: BURN_IN_ITERS, fit: fit.clone() };
    let multi = multi_init_fit(&x, 2, Algorithm::Parafac, &opts, |_| 0.0).unwrap();
    let (single, report) = fit_parafac(&x, 2, &fit).unwrap();
    assert_eq!(multi.model, FactorModel::Parafac(single));
    assert_eq!(multi.report.losses, report.losses);

    let multi2 = multi_init_fit(&x, 2, Algorithm::Parafac2, &opts, |_| 0.0).unwrap();
    let (single2, _) = fit_parafac2(&x, 2, &fit).unwrap();
    assert_eq!(multi2.model, FactorModel::Parafac2(single2));
}

#[test]
fn multi_init_ties_pick_lowest_run() {
    let x = noisy(&FactorModel::Parafac(ParafacModel::random(dims(), 2, &mut seeded(17))).to_tensor().unwrap(), 0.3, 17);
    let opts = MultiInitOptions { n_runs: 4, n_inits: 1, burn_in: 2, fit: FitOptions { max_iters: 5, ..Default::default() } };
    let res = multi_init_fit(&x, 2, Algorithm::Parafac, &opts, |_| 1.0).unwrap();
    assert_eq!(res.selected_run, 0);
}

#[test]
fn algorithm_names_round_trip() {
    for a in [Algorithm::Parafac, Algorithm::Parafac2] {
        assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
    }
    assert!("tucker".parse::<Algorithm>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn parafac2_fit_keeps_constraints(seed in 0u64..1000, rank in 1usize..4) {
        let x = noisy(&FactorModel::Parafac2(Parafac2Model::random(dims(), 3, &mut seeded(seed))).to_tensor().unwrap(), 0.5, seed);
        let (m, r) = fit_parafac2(&x, rank, &FitOptions { max_iters: 30, tol: 1e-8, seed, ..Default::default() }).unwrap();
        prop_assert!(m.cross_product_deviation() < 1e-6);
        prop_assert!(m.orthonormality_deviation() < 1e-8);
        prop_assert!(r.explained_variance >= 0.0 && r.explained_variance <= 1.0 + 1e-9);
    }

    #[test]
    fn congruence_is_bounded_and_sign_blind(v in prop::collection::vec(-5.0f64..5.0, 6), w in prop::collection::vec(-5.0f64..5.0, 6)) {
        let c = congruence(&v, &w);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        let neg: Vec<f64> = w.iter().map(|x| -x).collect();
        prop_assert!((congruence(&v, &neg) - c).abs() < 1e-12);
    }
}

#[test]
fn zero_starts_are_rejected() {
    let x = FactorModel::Parafac(ParafacModel::random(dims(), 2, &mut seeded(4))).to_tensor().unwrap();
    let opts = FitOptions { starts: 0, ..Default::default() };
    assert!(fit_parafac(&x, 2, &opts).is_err());
    assert!(fit_parafac2(&x, 2, &opts).is_err());
}

#[test]
fn extra_starts_never_raise_the_final_loss() {
    for seed in 0..4 {
        let truth = Parafac2Model::random(dims(), 3, &mut seeded(1000 + seed));
        let x = noisy(&FactorModel::Parafac2(truth).to_tensor().unwrap(), 0.1, seed);
        let one = FitOptions { seed, max_iters: 100, ..Default::default() };
        let many = FitOptions { starts: 4, ..one.clone() };
        let last = |r: &FitReport| *r.losses.last().unwrap();
        let (_, single) = fit_parafac2(&x, 3, &one).unwrap();
        let (_, best) = fit_parafac2(&x, 3, &many).unwrap();
        assert!(last(&best) <= last(&single));
        let (_, single) = fit_parafac(&x, 3, &one).unwrap();
        let (_, best) = fit_parafac(&x, 3, &many).unwrap();
        assert!(last(&best) <= last(&single));
    }
}

#[test]
fn extra_starts_recover_a_model_the_warm_start_misses() {
    let truth = Parafac2Model::random(dims(), 3, &mut seeded(1006));
    let x = FactorModel::Parafac2(truth.clone()).to_tensor().unwrap();
    let congruence = |starts| {
        let (m, r) = fit_parafac2(&x, 3, &FitOptions { seed: 6, starts, ..Default::default() }).unwrap();
        (r.explained_variance, align_components(&m.spatial, &truth.spatial).unwrap().mean_congruence())
    };
    let (ev, cong) = congruence(10);
    assert!(ev >= 0.999 && cong >= 0.99, "ev {ev}, congruence {cong}");
    assert!(congruence(1).1 < 0.99);
}

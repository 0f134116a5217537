use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use semeq::codebook::InfoTransferMatrix;
use semeq::equalizer::{risk, select_transformation, Equalizer};
use semeq::fixtures;
use semeq::rng;
use semeq::semlang::Message;

fn random_instance(seed: u64, n: usize) -> (InfoTransferMatrix, Vec<f64>) {
    let mut r = rng::stream(seed, &[rng::tag("rho-u")]);
    let rho = Array2::from_shape_fn((n, n), |_| r.random_range(0.0..=1.0));
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let s: f64 = raw.iter().sum();
    (
        InfoTransferMatrix::new(rho, 1).unwrap(),
        raw.into_iter().map(|v| v / s).collect(),
    )
}

#[test]
fn bayes_selection_minimizes_risk_by_exhaustive_scan() {
    for seed in 0..1000u64 {
        let n = 2 + (seed % 9) as usize;
        let (rho, u) = random_instance(seed, n);
        let k = select_transformation(&rho, &u).unwrap();
        let chosen = risk(&rho, k, &u).unwrap();
        for j in 0..n {
            let r = risk(&rho, j, &u).unwrap();
            assert!((0.0..=1.0).contains(&r));
            assert!(
                chosen <= r + 1e-15,
                "seed {seed}: T_{k} risk {chosen} > T_{j} risk {r}"
            );
        }
    }
}

proptest! {
    #[test]
    fn risk_is_one_minus_expected_transfer(seed in 0u64..100_000, n in 1usize..8) {
        let (rho, u) = random_instance(seed, n);
        for k in 0..n {
            let direct: f64 = (0..n).map(|i| u[i] * rho.get(i, k)).sum();
            let r = risk(&rho, k, &u).unwrap();
            prop_assert!((r - (1.0 - direct).clamp(0.0, 1.0)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn calibrated_pre_equalization_has_unit_power() {
    let sc = fixtures::digit_parity();
    let (src, tgt) = sc.languages(0).unwrap();
    let mut cb = semeq::codebook::Codebook::identity(2, sc.kmap.clone());
    // Ten hand-made maps: scale by k+1 and shift.
    cb.maps = (0..10)
        .map(|k| {
            let s = 0.5 + k as f64 * 0.1;
            semeq::ot::LinearMap::new(
                Array2::from_diag(&ndarray::arr1(&[
                    semeq::Complex64::new(s, 0.1),
                    semeq::Complex64::new(1.0, -s),
                ])),
                ndarray::arr1(&[
                    semeq::Complex64::new(0.0, 0.2),
                    semeq::Complex64::new(0.3 * k as f64, 0.0),
                ]),
            )
            .unwrap()
        })
        .collect();
    let samples: Vec<_> = (0..10)
        .map(|i| src.sample_points(i, 200, 5).unwrap())
        .collect();
    cb.rho = Some(semeq::codebook::estimate_rho_from_samples(&cb, &tgt, &samples).unwrap());
    let mut eq = Equalizer::bayes(cb).unwrap();
    eq.calibrate_power(&src).unwrap();
    let count = 40_000;
    let mut energy = 0.0;
    for id in 0..count {
        let m = Message::new(id as usize % 10, id);
        let x = src.generate(&m, 3).unwrap();
        let (y, k) = eq.pre_equalize(&src, &m, &x).unwrap();
        assert_eq!(
            k,
            eq.policy.choose(&src.atom_posterior(&m).unwrap()).unwrap()
        );
        energy += y.power();
    }
    let power = energy / (count as f64 * 2.0);
    assert!((power - 1.0).abs() < 0.02, "{power}");
}

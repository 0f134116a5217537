use num_complex::Complex64;
use proptest::prelude::*;
use semeq::fixtures;
use semeq::semlang::{
    load_embeddings, make_synthetic_language, write_embeddings, AtomModel, LabelMap, Language,
    LanguageSpec, Message, SemanticSymbol,
};

fn two_atom(spread: f64) -> Language {
    let atoms = vec![
        AtomModel {
            label: 0,
            centroid: SemanticSymbol::new(vec![Complex64::new(1.0, 0.0)]).unwrap(),
            spread,
        },
        AtomModel {
            label: 1,
            centroid: SemanticSymbol::new(vec![Complex64::new(-1.0, 0.0)]).unwrap(),
            spread,
        },
    ];
    Language::new(1, atoms, 1.0, Vec::new()).unwrap()
}

#[test]
fn equal_spread_posterior_matches_logistic_oracle() {
    // Two 1-d complex Gaussians at ±1 with equal spread s: the log-odds at
    // x is ((x+1)² − (x−1)²)/(2s²) = 2x/s² along the real axis.
    let s = 0.7;
    let lang = two_atom(s);
    for x in [-2.0, -0.3, 0.0, 0.4, 1.5] {
        let u = lang.posterior_at(&[Complex64::new(x, 0.25)]);
        let oracle = 1.0 / (1.0 + (-2.0 * x / (s * s)).exp());
        assert!(
            (u[0] - oracle).abs() < 1e-12,
            "x = {x}: {} vs {oracle}",
            u[0]
        );
    }
}

#[test]
fn synthetic_language_is_seeded_and_unit_power() {
    let mut spec = LanguageSpec::circle(3, 6, 0.2);
    spec.unit_power = true;
    spec.random_rotation = true;
    spec.shear = 0.3;
    let a = make_synthetic_language(&spec, 9).unwrap();
    let b = make_synthetic_language(&spec, 9).unwrap();
    assert_eq!(a, b);
    assert!((a.average_power() - 1.0).abs() < 1e-12);
    // Monte-Carlo power of generated symbols agrees with the analytic value.
    let mut energy = 0.0;
    let count = 4000;
    for atom in 0..6 {
        let pts = a.sample_points(atom, count, 5).unwrap();
        energy += pts.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let power = energy / (6 * count * 3) as f64;
    assert!((power - 1.0).abs() < 0.03, "{power}");
}

#[test]
fn generate_is_deterministic_per_message() {
    let (src, _) = fixtures::digit_parity().languages(0).unwrap();
    let m = Message::new(3, 17);
    assert_eq!(src.generate(&m, 1).unwrap(), src.generate(&m, 1).unwrap());
    assert_ne!(src.generate(&m, 1).unwrap(), src.generate(&m, 2).unwrap());
    assert!(src.generate(&Message::new(10, 0), 1).is_err());
}

#[test]
fn label_map_validation() {
    assert!(LabelMap::new(vec![0, 1, 2], 2).is_err());
    let sc = fixtures::digit_parity();
    let (src, tgt) = sc.languages(0).unwrap();
    assert!(sc.kmap.check_languages(&src, &tgt).is_ok());
    assert!(LabelMap::identity(10).check_languages(&src, &tgt).is_err());
}

#[test]
fn embeddings_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    let (src, _) = fixtures::digit_parity().languages(3).unwrap();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut symbols = Vec::new();
    for atom in 0..10 {
        for row in src.sample_points(atom, 20, 1).unwrap().outer_iter() {
            ids.push(ids.len() as u64);
            labels.push(atom);
            symbols.push(SemanticSymbol::new(row.to_vec()).unwrap());
        }
    }
    write_embeddings(&path, &ids, &labels, &symbols).unwrap();
    let set = load_embeddings(&path, 2).unwrap();
    assert_eq!(set.ids, ids);
    assert_eq!(set.labels, labels);
    assert_eq!(set.symbols, symbols);
    assert_eq!(set.language.atom_count(), 10);
    assert!(load_embeddings(&path, 3).is_err());
}

proptest! {
    #[test]
    fn posterior_is_a_distribution_and_argmax_matches_interpreter(
        seed in 0u64..1000,
        re in -3.0f64..3.0,
        im in -3.0f64..3.0,
    ) {
        let spec = LanguageSpec::circle(2, 5, 0.4);
        let lang = make_synthetic_language(&spec, seed).unwrap();
        let x = [Complex64::new(re, im), Complex64::new(im * 0.5, -re * 0.2)];
        let u = lang.posterior_at(&x);
        let total: f64 = u.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(u.iter().all(|&p| (0.0..=1.0).contains(&p)));
        // Equal spreads: the MAP atom is the nearest centroid.
        let best = (0..5).max_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap()).unwrap();
        prop_assert!((u[best] - u[lang.interpret(&x)]).abs() < 1e-12);
    }
}

use ndarray::array;
use semeq::channel::Snr;
use semeq::codebook::InfoTransferMatrix;
use semeq::equalizer::{SelectionMode, SelectionPolicy};
use semeq::fixtures;
use semeq::harness::{
    average_risk, identity_rho, run_experiment_to, ExperimentConfig, Method, ResultRow,
    ResultWriter, CSV_HEADER,
};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::digit_parity();
    cfg.messages = 300;
    cfg.snr_db = vec![Snr::Db(0.0), Snr::Noiseless];
    cfg.radii = vec![1.0, 0.1];
    cfg.source_samples = 30;
    cfg.target_samples = 60;
    cfg.rho_samples = 300;
    cfg.train.epochs = 3;
    cfg.p1.max_outer_iters = 3;
    cfg.p1.max_fw_iters = 2;
    cfg
}

fn run_to_bytes(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<ResultRow>) {
    let mut buf = Vec::new();
    let rows = {
        let mut w = ResultWriter::new(&mut buf).unwrap();
        run_experiment_to(cfg, &mut w).unwrap()
    };
    (buf, rows)
}

#[test]
fn csv_header_is_stable() {
    let mut buf = Vec::new();
    ResultWriter::new(&mut buf).unwrap().flush().unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "method,snr_db,radius,accuracy,avg_risk,entropy,symbols_per_message,seed,error\n"
    );
    assert_eq!(CSV_HEADER.len(), 9);
}

#[test]
fn sweep_is_byte_identical_and_keyed_uniquely() {
    let cfg = small_config();
    let (a, rows) = run_to_bytes(&cfg);
    let (b, _) = run_to_bytes(&cfg);
    assert_eq!(a, b);
    // 5 radius-free methods × 2 SNRs + 2 codebook methods × 2 SNRs × 2 radii.
    assert_eq!(rows.len(), 5 * 2 + 2 * 2 * 2);
    let mut keys: Vec<String> = rows
        .iter()
        .map(|r| format!("{}|{}|{:?}|{}", r.method, r.snr, r.radius, r.seed))
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), rows.len());
    for r in &rows {
        assert!(r.error.is_none(), "{r:?}");
        let acc = r.accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        if let Some(risk) = r.avg_risk {
            assert!((0.0..=1.0).contains(&risk));
        }
    }
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert!(text.contains("classcom_a,inf,,"));
}

#[test]
fn noiseless_codebook_beats_noeq_on_mismatched_fixture() {
    let (_, rows) = run_to_bytes(&small_config());
    let get = |m: Method| {
        rows.iter()
            .find(|r| r.method == m && r.snr == Snr::Noiseless && r.radius.unwrap_or(1.0) == 1.0)
            .unwrap()
            .accuracy
            .unwrap()
    };
    assert!(get(Method::CodebookEq) > get(Method::SemcomNoeq));
}

#[test]
fn failing_grid_points_are_isolated() {
    let mut cfg = small_config();
    // Too few source samples for the joint solver: codebook points fail.
    cfg.source_samples = 2;
    let (_, rows) = run_to_bytes(&cfg);
    for r in &rows {
        if r.method.uses_codebook() {
            assert!(r.error.is_some() && r.accuracy.is_none(), "{r:?}");
        } else {
            assert!(r.error.is_none(), "{r:?}");
        }
    }
}

#[test]
fn average_risk_examples() {
    let eye = InfoTransferMatrix::new(array![[1.0, 0.0], [0.0, 1.0]], 1).unwrap();
    let p = SelectionPolicy::new(SelectionMode::BayesArgmax, eye).unwrap();
    let us = [vec![1.0, 0.0], vec![0.0, 1.0]];
    assert_eq!(average_risk(&p, us.iter().map(Vec::as_slice)).unwrap(), 0.0);

    let sc = fixtures::matched(4, 0.05);
    let (src, tgt) = sc.languages(0).unwrap();
    let col = identity_rho(&src, &tgt, &sc.kmap, 2000, 0).unwrap();
    assert!(col.values().iter().all(|&v| v == 1.0));
    let p = SelectionPolicy::new(SelectionMode::Identity, col).unwrap();
    let posts: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            src.atom_posterior(&semeq::semlang::Message::new(i, 0))
                .unwrap()
        })
        .collect();
    assert_eq!(
        average_risk(&p, posts.iter().map(Vec::as_slice)).unwrap(),
        0.0
    );
}

#[test]
fn accuracy_is_monotone_in_snr_over_seeds() {
    let mut cfg = small_config();
    cfg.methods = vec![Method::ClasscomB, Method::SemcomNoeq, Method::CodebookEq];
    cfg.radii = vec![1.0];
    cfg.snr_db = vec![
        Snr::Db(-5.0),
        Snr::Db(0.0),
        Snr::Db(5.0),
        Snr::Db(10.0),
        Snr::Db(20.0),
    ];
    cfg.messages = 1000;
    cfg.repeats = 5;
    let (_, rows) = run_to_bytes(&cfg);
    for m in &cfg.methods {
        let means: Vec<f64> = cfg
            .snr_db
            .iter()
            .map(|s| {
                let accs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == *m && r.snr == *s)
                    .map(|r| r.accuracy.unwrap())
                    .collect();
                assert_eq!(accs.len(), 5);
                accs.iter().sum::<f64>() / 5.0
            })
            .collect();
        for w in means.windows(2) {
            let p = w[0].max(w[1]).min(1.0);
            let se = (p * (1.0 - p) / 5000.0).sqrt();
            assert!(
                w[1] >= w[0] - 2.0 * se * 2f64.sqrt() - 1e-12,
                "{m}: {means:?}"
            );
        }
    }
}

#[test]
fn config_json_round_trips_and_rejects_unknown_methods() {
    let cfg = small_config();
    let back: ExperimentConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
    let bad = cfg
        .to_json()
        .unwrap()
        .replace("\"classcom_a\"", "\"classcom_z\"");
    assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
}

//! Experiment runner: SNR and radius sweeps over all methods with paired,
//! seeded message and noise streams, written as CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    run_classcom, run_semcom_noeq, train_linear_eq, ClassComReceiver, ClassComVariant, TrainConfig,
    TrainedEq,
};
use crate::channel::{self, ChannelConfig, ModemConfig, Snr};
use crate::codebook::{
    build_codebook, codebook_entropy, estimate_rho_matrix, Codebook, InfoTransferMatrix,
    DEFAULT_RHO_SAMPLES,
};
use crate::equalizer::{Equalizer, SelectionPolicy};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::ot::P1Config;
use crate::rng;
use crate::semlang::{
    make_synthetic_language, LabelMap, Language, LanguageSpec, Message, ObservationModel,
};

pub const CSV_HEADER: [&str; 9] = [
    "method",
    "snr_db",
    "radius",
    "accuracy",
    "avg_risk",
    "entropy",
    "symbols_per_message",
    "seed",
    "error",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClasscomA,
    ClasscomB,
    SemcomNoeq,
    CodebookEq,
    CodebookPostEq,
    LearnedLinearEq,
    LearnedMlpEq,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::ClasscomA,
        Method::ClasscomB,
        Method::SemcomNoeq,
        Method::CodebookEq,
        Method::CodebookPostEq,
        Method::LearnedLinearEq,
        Method::LearnedMlpEq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ClasscomA => "classcom_a",
            Method::ClasscomB => "classcom_b",
            Method::SemcomNoeq => "semcom_noeq",
            Method::CodebookEq => "codebook_eq",
            Method::CodebookPostEq => "codebook_post_eq",
            Method::LearnedLinearEq => "learned_linear_eq",
            Method::LearnedMlpEq => "learned_mlp_eq",
        }
    }

    /// Whether results depend on the ball-contraction radius.
    pub fn uses_codebook(self) -> bool {
        matches!(self, Method::CodebookEq | Method::CodebookPostEq)
    }

    /// Parses a comma-separated list; `all` expands to every method.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Method::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("empty method list"));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: LanguageSpec,
    pub target: LanguageSpec,
    pub kmap: LabelMap,
    pub observations: ObservationModel,
    #[serde(default = "desk_p1")]
    pub p1: P1Config,
    pub snr_db: Vec<Snr>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_messages")]
    pub messages: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    /// Number of message/noise seeds per grid point: seed, seed+1, ...
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "default_source_samples")]
    pub source_samples: usize,
    #[serde(default = "default_target_samples")]
    pub target_samples: usize,
    #[serde(default = "default_rho_samples")]
    pub rho_samples: usize,
    #[serde(default)]
    pub modem: ModemConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_hidden_factor")]
    pub mlp_hidden_factor: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Desk-scale solver budget used by experiments.
pub fn desk_p1() -> P1Config {
    P1Config {
        max_outer_iters: 10,
        max_fw_iters: 4,
        ..P1Config::default()
    }
}
fn default_radii() -> Vec<f64> {
    vec![1.0]
}
fn default_messages() -> usize {
    10_000
}
fn one() -> usize {
    1
}
fn default_source_samples() -> usize {
    200
}
fn default_target_samples() -> usize {
    1000
}
fn default_rho_samples() -> usize {
    DEFAULT_RHO_SAMPLES
}
fn default_hidden_factor() -> usize {
    4
}

impl ExperimentConfig {
    /// Digit/parity scenario with desk-scale defaults and every method.
    pub fn digit_parity() -> Self {
        Self::from_scenario(fixtures::digit_parity())
    }

    pub fn from_scenario(sc: fixtures::Scenario) -> Self {
        Self {
            source: sc.source,
            target: sc.target,
            kmap: sc.kmap,
            observations: sc.observations,
            p1: desk_p1(),
            snr_db: vec![
                Snr::Db(-5.0),
                Snr::Db(0.0),
                Snr::Db(5.0),
                Snr::Db(10.0),
                Snr::Db(20.0),
                Snr::Noiseless,
            ],
            radii: default_radii(),
            messages: default_messages(),
            methods: Method::ALL.to_vec(),
            seed: 0,
            repeats: 1,
            source_samples: default_source_samples(),
            target_samples: default_target_samples(),
            rho_samples: default_rho_samples(),
            modem: ModemConfig::default(),
            train: TrainConfig::default(),
            mlp_hidden_factor: default_hidden_factor(),
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages < 1 {
            return Err(Error::invalid("message count must be >= 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid("SNR grid is empty"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("method list is empty"));
        }
        if self.repeats < 1 {
            return Err(Error::invalid("repeats must be >= 1"));
        }
        if self.methods.iter().any(|m| m.uses_codebook()) && self.radii.is_empty() {
            return Err(Error::invalid("radius grid is empty"));
        }
        for &r in &self.radii {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid(format!("radius {r} outside (0, 1]")));
            }
        }
        if self.observations.classes() != self.kmap.source_atoms() {
            return Err(Error::invalid(
                "observation classes do not match the label map",
            ));
        }
        if self.mlp_hidden_factor < 1 {
            return Err(Error::invalid("mlp hidden factor must be >= 1"));
        }
        self.p1.validate()?;
        self.modem.validate()?;
        self.train.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn languages(&self) -> Result<(Language, Language)> {
        let source = make_synthetic_language(&self.source, rng::derive_seed(self.seed, &[1]))?;
        let target = make_synthetic_language(&self.target, rng::derive_seed(self.seed, &[2]))?;
        self.kmap.check_languages(&source, &target)?;
        Ok((source, target))
    }

    pub fn p1_at(&self, radius: f64) -> P1Config {
        P1Config {
            radius,
            ..self.p1.clone()
        }
    }

    /// Builds the codebook for `radius` and attaches its ρ matrix.
    pub fn codebook(&self, source: &Language, target: &Language, radius: f64) -> Result<Codebook> {
        let mut cb = build_codebook(
            source,
            target,
            &self.kmap,
            &self.p1_at(radius),
            self.source_samples,
            self.target_samples,
            self.seed,
        )?;
        cb.rho = Some(estimate_rho_matrix(
            &cb,
            source,
            target,
            self.rho_samples,
            self.seed,
        )?);
        Ok(cb)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub snr: Snr,
    pub radius: Option<f64>,
    pub accuracy: Option<f64>,
    pub avg_risk: Option<f64>,
    pub entropy: Option<f64>,
    pub symbols_per_message: Option<usize>,
    pub seed: u64,
    pub error: Option<String>,
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.method.to_string(),
            self.snr.to_string(),
            opt(self.radius),
            opt(self.accuracy),
            opt(self.avg_risk),
            opt(self.entropy),
            self.symbols_per_message
                .map(|s| s.to_string())
                .unwrap_or_default(),
            self.seed.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Serialized CSV writer for result rows.
pub struct ResultWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(CSV_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.inner.write_record(row.record())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Mean per-message risk of `policy` over a stream of atom posteriors.
pub fn average_risk<'a>(
    policy: &SelectionPolicy,
    posteriors: impl IntoIterator<Item = &'a [f64]>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for u in posteriors {
        total += policy.risk(u)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySamples(
            "risk needs at least one message".into(),
        ));
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

/// Message stream shared by every method for one seed.
pub fn message_stream(obs: &ObservationModel, count: usize, seed: u64) -> Result<Vec<Message>> {
    let mut labels = rng::stream(seed, &[rng::tag("labels")]);
    (0..count)
        .map(|i| obs.message(labels.random_range(0..obs.classes()), i as u64, seed))
        .collect()
}

/// Noise realization for message `i` at `snr`; independent of method and radius.
pub fn channel_for(seed: u64, snr: Snr, i: usize) -> ChannelConfig {
    ChannelConfig {
        snr,
        seed: rng::derive_seed(seed, &[rng::tag("noise"), snr.seed_tag(), i as u64]),
    }
}

pub fn generator_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, &[rng::tag("generator")])
}

/// Per-experiment state shared by all grid points.
pub struct Prepared {
    pub source: Language,
    pub target: Language,
    receiver: Option<ClassComReceiver>,
    identity: Option<Equalizer>,
    codebooks: BTreeMap<u64, Result<Equalizer, String>>,
    learned: BTreeMap<Method, Result<(TrainedEq, f64), String>>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (source, target) = cfg.languages()?;
        let wants = |m: Method| cfg.methods.contains(&m);
        let receiver = if wants(Method::ClasscomA) || wants(Method::ClasscomB) {
            Some(ClassComReceiver::new(
                cfg.observations.clone(),
                cfg.kmap.clone(),
                cfg.modem,
            )?)
        } else {
            None
        };
        let identity = if wants(Method::SemcomNoeq) {
            let cb = Codebook::identity(source.dimension(), cfg.kmap.clone());
            let col = estimate_rho_matrix(&cb, &source, &target, cfg.rho_samples, cfg.seed)?;
            Some(Equalizer::identity(cb, col)?)
        } else {
            None
        };
        let mut codebooks = BTreeMap::new();
        if cfg.methods.iter().any(|m| m.uses_codebook()) {
            for &r in &cfg.radii {
                let eq = cfg.codebook(&source, &target, r).and_then(|cb| {
                    let mut eq = Equalizer::bayes(cb)?;
                    eq.calibrate_power(&source)?;
                    Ok(eq)
                });
                if let Err(e) = &eq {
                    log::warn!("codebook at radius {r}: {e}");
                }
                codebooks.insert(r.to_bits(), eq.map_err(|e| e.to_string()));
            }
        }
        let mut learned = BTreeMap::new();
        for (m, hidden) in [
            (Method::LearnedLinearEq, None),
            (Method::LearnedMlpEq, Some(cfg.mlp_hidden_factor)),
        ] {
            if wants(m) {
                let r = train_learned(cfg, &source, &target, hidden);
                learned.insert(m, r.map_err(|e| e.to_string()));
            }
        }
        Ok(Self {
            source,
            target,
            receiver,
            identity,
            codebooks,
            learned,
        })
    }

    pub fn codebook_equalizer(&self, radius: f64) -> Option<&Equalizer> {
        self.codebooks
            .get(&radius.to_bits())
            .and_then(|r| r.as_ref().ok())
    }

    pub fn learned(&self, method: Method) -> Option<&TrainedEq> {
        self.learned
            .get(&method)
            .and_then(|r| r.as_ref().ok())
            .map(|(t, _)| t)
    }
}

fn train_learned(
    cfg: &ExperimentConfig,
    source: &Language,
    target: &Language,
    hidden: Option<usize>,
) -> Result<(TrainedEq, f64)> {
    let seed = rng::derive_seed(cfg.seed, &[rng::tag("train-samples")]);
    let samples = (0..source.atom_count())
        .map(|i| source.sample_points(i, cfg.source_samples, seed))
        .collect::<Result<Vec<Array2<Complex64>>>>()?;
    let tc = TrainConfig {
        hidden_factor: hidden,
        ..cfg.train.clone()
    };
    let trained = train_linear_eq(source, target, &cfg.kmap, &samples, &tc)?;
    let scale = trained.power_scale(&samples);
    Ok((trained, scale))
}

#[derive(Clone, Copy, Debug)]
struct GridPoint {
    method: Method,
    snr: Snr,
    radius: Option<f64>,
}

fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for &method in &methods {
        for &snr in &cfg.snr_db {
            if method.uses_codebook() {
                for &r in &cfg.radii {
                    out.push(GridPoint {
                        method,
                        snr,
                        radius: Some(r),
                    });
                }
            } else {
                out.push(GridPoint {
                    method,
                    snr,
                    radius: None,
                });
            }
        }
    }
    out
}

struct Outcome {
    accuracy: f64,
    avg_risk: Option<f64>,
    entropy: Option<f64>,
    symbols: usize,
}

fn evaluate(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    p: GridPoint,
    seed: u64,
    messages: &[Message],
) -> Result<Outcome> {
    let (src, tgt) = (&prep.source, &prep.target);
    let gen = generator_seed(seed);
    let n = src.dimension();
    let mut correct = 0usize;
    let score = |pred: usize, m: &Message| usize::from(pred == cfg.kmap.get(m.class_label));
    let outcome = match p.method {
        Method::ClasscomA | Method::ClasscomB => {
            let rx = prep
                .receiver
                .as_ref()
                .ok_or_else(|| Error::invalid("no ClassCom receiver"))?;
            let variant = if p.method == Method::ClasscomA {
                ClassComVariant::A
            } else {
                ClassComVariant::B
            };
            for (i, m) in messages.iter().enumerate() {
                correct += score(
                    run_classcom(variant, m, &channel_for(seed, p.snr, i), rx)?,
                    m,
                );
            }
            Outcome {
                accuracy: 0.0,
                avg_risk: None,
                entropy: None,
                symbols: rx.symbols_per_message(),
            }
        }
        Method::SemcomNoeq => {
            let eq = prep
                .identity
                .as_ref()
                .ok_or_else(|| Error::invalid("no identity equalizer"))?;
            let mut posts = Vec::with_capacity(messages.len());
            for (i, m) in messages.iter().enumerate() {
                correct += score(
                    run_semcom_noeq(m, src, tgt, gen, &channel_for(seed, p.snr, i))?,
                    m,
                );
                posts.push(src.atom_posterior(m)?);
            }
            let risk = average_risk(&eq.policy, posts.iter().map(Vec::as_slice))?;
            Outcome {
                accuracy: 0.0,
                avg_risk: Some(risk),
                entropy: None,
                symbols: n,
            }
        }
        Method::CodebookEq | Method::CodebookPostEq => {
            let r = p.radius.expect("codebook methods carry a radius");
            let eq = match prep.codebooks.get(&r.to_bits()) {
                Some(Ok(eq)) => eq,
                Some(Err(e)) => return Err(Error::NotConverged(e.clone())),
                None => return Err(Error::invalid(format!("no codebook for radius {r}"))),
            };
            let scale = eq.power_scale();
            let src_scale = 1.0 / src.average_power().sqrt();
            let mut posts = Vec::with_capacity(messages.len());
            for (i, m) in messages.iter().enumerate() {
                let x = src.generate(m, gen)?;
                let ch = channel_for(seed, p.snr, i);
                let pred = if p.method == Method::CodebookEq {
                    let (y, _) = eq.pre_equalize(src, m, &x)?;
                    let rx = channel::awgn(&y, &ch).scaled(1.0 / scale);
                    tgt.interpret(rx.values())
                } else {
                    let rx = channel::awgn(&x.scaled(src_scale), &ch).scaled(1.0 / src_scale);
                    let (z, _) = eq.post_equalize(src, &rx)?;
                    tgt.interpret(z.values())
                };
                correct += score(pred, m);
                posts.push(src.atom_posterior(m)?);
            }
            let rho = eq.policy.rho.clone();
            let risk = average_risk(&eq.policy, posts.iter().map(Vec::as_slice))?;
            Outcome {
                accuracy: 0.0,
                avg_risk: Some(risk),
                entropy: Some(codebook_entropy(&rho)),
                symbols: n,
            }
        }
        Method::LearnedLinearEq | Method::LearnedMlpEq => {
            let (trained, scale) = match prep.learned.get(&p.method) {
                Some(Ok(t)) => t,
                Some(Err(e)) => return Err(Error::NotConverged(e.clone())),
                None => return Err(Error::invalid("equalizer was not trained")),
            };
            for (i, m) in messages.iter().enumerate() {
                let x = src.generate(m, gen)?;
                let y = trained.model.apply(x.values()).scaled(*scale);
                let rx = channel::awgn(&y, &channel_for(seed, p.snr, i)).scaled(1.0 / scale);
                correct += score(tgt.interpret(rx.values()), m);
            }
            Outcome {
                accuracy: 0.0,
                avg_risk: None,
                entropy: None,
                symbols: n,
            }
        }
    };
    Ok(Outcome {
        accuracy: correct as f64 / messages.len() as f64,
        ..outcome
    })
}

/// Runs every grid point for every repeat seed, writing rows to `sink` as
/// each seed completes. Grid-point failures are recorded in the error
/// column and do not stop the sweep.
pub fn run_experiment_to<W: Write>(
    cfg: &ExperimentConfig,
    sink: &mut ResultWriter<W>,
) -> Result<Vec<ResultRow>> {
    let prep = Prepared::new(cfg)?;
    run_prepared(cfg, &prep, sink)
}

pub fn run_prepared<W: Write>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    sink: &mut ResultWriter<W>,
) -> Result<Vec<ResultRow>> {
    let points = grid(cfg);
    let mut rows = Vec::new();
    for rep in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let messages = message_stream(&cfg.observations, cfg.messages, seed)?;
        let batch: Vec<ResultRow> = points
            .par_iter()
            .map(|&p| {
                let base = ResultRow {
                    method: p.method,
                    snr: p.snr,
                    radius: p.radius,
                    accuracy: None,
                    avg_risk: None,
                    entropy: None,
                    symbols_per_message: None,
                    seed,
                    error: None,
                };
                match evaluate(cfg, prep, p, seed, &messages) {
                    Ok(o) => ResultRow {
                        accuracy: Some(o.accuracy),
                        avg_risk: o.avg_risk,
                        entropy: o.entropy,
                        symbols_per_message: Some(o.symbols),
                        ..base
                    },
                    Err(e) => ResultRow {
                        error: Some(e.to_string()),
                        ..base
                    },
                }
            })
            .collect();
        for row in &batch {
            sink.write(row)?;
        }
        sink.flush()?;
        rows.extend(batch);
    }
    Ok(rows)
}

/// Runs the experiment; when `out_dir` is set, rows go to `results.csv` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let file = std::fs::File::create(dir.join("results.csv"))?;
            run_experiment_to(cfg, &mut ResultWriter::new(std::io::BufWriter::new(file))?)
        }
        None => run_experiment_to(cfg, &mut ResultWriter::new(std::io::sink())?),
    }
}

/// Column ρ_i(I) of an identity "codebook", as used by the no-EQ policy.
pub fn identity_rho(
    source: &Language,
    target: &Language,
    kmap: &LabelMap,
    samples: usize,
    seed: u64,
) -> Result<InfoTransferMatrix> {
    estimate_rho_matrix(
        &Codebook::identity(source.dimension(), kmap.clone()),
        source,
        target,
        samples,
        seed,
    )
}

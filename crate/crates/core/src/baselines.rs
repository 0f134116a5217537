//! Comparison systems: classical bit-level transmission (ClassCom A/B),
//! semantic transmission without equalization, and equalizers trained by
//! gradient descent on the target interpreter's cross-entropy.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, dequantize_features, quantize_features, ChannelConfig, ModemConfig, Qam,
};
use crate::error::{Error, Result};
use crate::ot::LinearMap;
use crate::rng;
use crate::semlang::{LabelMap, Language, Message, ObservationModel, SemanticSymbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassComVariant {
    /// Classify the source class, then map it through κ.
    A,
    /// Classify the target label directly.
    B,
}

/// Receiver-side classifiers for the classical pipeline, derived from the
/// class-conditional observation model.
#[derive(Clone, Debug)]
pub struct ClassComReceiver {
    pub observations: ObservationModel,
    pub kmap: LabelMap,
    pub modem: ModemConfig,
    qam: Qam,
}

impl ClassComReceiver {
    pub fn new(observations: ObservationModel, kmap: LabelMap, modem: ModemConfig) -> Result<Self> {
        modem.validate()?;
        if observations.classes() != kmap.source_atoms() {
            return Err(Error::invalid(format!(
                "{} observation classes for a label map over {} atoms",
                observations.classes(),
                kmap.source_atoms()
            )));
        }
        let qam = Qam::new(modem.qam_order)?;
        Ok(Self {
            observations,
            kmap,
            modem,
            qam,
        })
    }

    /// Log-likelihood of each class at `feature` (up to a shared constant).
    fn class_log_likelihoods(&self, feature: &[f64]) -> Vec<f64> {
        let var = self.observations.noise.powi(2).max(1e-12);
        self.observations
            .prototypes
            .iter()
            .map(|p| {
                -p.iter()
                    .zip(feature)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / (2.0 * var)
            })
            .collect()
    }

    /// Nearest-prototype class decision.
    pub fn classify_source(&self, feature: &[f64]) -> usize {
        argmax(&self.class_log_likelihoods(feature))
    }

    /// Target label maximizing the summed class posterior.
    pub fn classify_target(&self, feature: &[f64]) -> usize {
        let ll = self.class_log_likelihoods(feature);
        let max = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut mass = vec![0.0; self.kmap.target_atoms()];
        for (i, l) in ll.iter().enumerate() {
            mass[self.kmap.get(i)] += (l - max).exp();
        }
        argmax(&mass)
    }

    pub fn symbols_per_message(&self) -> usize {
        self.modem.symbols_per_message(self.observations.dim())
    }

    /// Features as seen by the receiver after quantization, QAM and the channel.
    pub fn transmit(&self, m: &Message, channel: &ChannelConfig) -> Result<Vec<f64>> {
        let bits = quantize_features(&m.feature, &self.modem);
        let (mut symbols, _pad) = self.qam.modulate(&bits);
        let mut rng = rng::stream(channel.seed, &[rng::tag("awgn")]);
        channel::add_noise(&mut symbols, channel.snr, &mut rng);
        let received = self.qam.demodulate(&symbols);
        dequantize_features(&received, m.feature.len(), &self.modem)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted target label for message `m` through the classical pipeline.
pub fn run_classcom(
    variant: ClassComVariant,
    m: &Message,
    channel: &ChannelConfig,
    receiver: &ClassComReceiver,
) -> Result<usize> {
    let feature = receiver.transmit(m, channel)?;
    Ok(match variant {
        ClassComVariant::A => receiver.kmap.get(receiver.classify_source(&feature)),
        ClassComVariant::B => receiver.classify_target(&feature),
    })
}

/// Source classifier with uniform confusion: the true class with
/// probability `accuracy`, otherwise any other class with equal probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfusionClassifier {
    pub classes: usize,
    pub accuracy: f64,
}

impl ConfusionClassifier {
    pub fn new(classes: usize, accuracy: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid("confusion needs at least two classes"));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::invalid(format!(
                "accuracy {accuracy} outside [0, 1]"
            )));
        }
        Ok(Self { classes, accuracy })
    }

    pub fn classify<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.accuracy {
            return label;
        }
        let other = rng.random_range(0..self.classes - 1);
        if other >= label {
            other + 1
        } else {
            other
        }
    }
}

/// generate → normalize → AWGN → target interpreter, with no transformation.
/// `generator_seed` drives λ(m), `channel.seed` the noise.
pub fn run_semcom_noeq(
    m: &Message,
    source: &Language,
    target: &Language,
    generator_seed: u64,
    channel: &ChannelConfig,
) -> Result<usize> {
    let x = source.generate(m, generator_seed)?;
    let tx = x.scaled(1.0 / source.average_power().sqrt());
    let rx = channel::awgn(&tx, channel);
    Ok(target.interpret(rx.values()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Width multiplier τ for the two-layer variant; `None` trains a single
    /// affine map.
    #[serde(default)]
    pub hidden_factor: Option<usize>,
}

fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    64
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            hidden_factor: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::invalid("epochs and batch size must be >= 1"));
        }
        if self.hidden_factor == Some(0) {
            return Err(Error::invalid("hidden factor must be >= 1"));
        }
        Ok(())
    }
}

/// Two-layer real network on the 2n real coordinates with a rectifier.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayer {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl TwoLayer {
    fn forward(&self, x: &[Complex64]) -> (Array1<f64>, Array1<f64>, Vec<Complex64>) {
        let xr = to_real(x);
        let pre = self.w1.dot(&xr) + &self.b1;
        let h = pre.mapv(|v| v.max(0.0));
        let out = self.w2.dot(&h) + &self.b2;
        (pre, h, from_real(&out))
    }
}

fn to_real(x: &[Complex64]) -> Array1<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn from_real(v: &Array1<f64>) -> Vec<Complex64> {
    v.as_slice()
        .expect("contiguous")
        .chunks(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum LearnedEq {
    Linear(LinearMap),
    TwoLayer(TwoLayer),
}

impl LearnedEq {
    pub fn apply(&self, x: &[Complex64]) -> SemanticSymbol {
        match self {
            LearnedEq::Linear(t) => t.apply(x),
            LearnedEq::TwoLayer(net) => {
                SemanticSymbol::new(net.forward(x).2).expect("finite network output")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEq {
    pub model: LearnedEq,
    /// Mini-batch loss after every step.
    pub trace: Vec<f64>,
    pub initial_loss: f64,
}

impl TrainedEq {
    /// Moving average of the loss trace over `window` steps.
    pub fn smoothed_trace(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        self.trace
            .windows(w.min(self.trace.len()).max(1))
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect()
    }

    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss"])?;
        for (i, l) in self.trace.iter().enumerate() {
            out.write_record([i.to_string(), format!("{l:e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Empirical transmit scale giving unit average power on `samples`.
    pub fn power_scale(&self, samples: &[Array2<Complex64>]) -> f64 {
        let mut energy = 0.0;
        let mut coords = 0usize;
        for s in samples {
            for row in s.outer_iter() {
                let y = self.model.apply(row.as_slice().expect("row-major"));
                energy += y.values().iter().map(|z| z.norm_sqr()).sum::<f64>();
                coords += y.dim();
            }
        }
        if energy > 0.0 {
            (coords as f64 / energy).sqrt()
        } else {
            1.0
        }
    }
}

/// Softmax over −‖y − c_j‖²: returns (−log p_t, ∂L/∂y) with the complex
/// gradient convention ∂/∂Re + i ∂/∂Im.
fn ce_at(y: &[Complex64], centroids: &[Vec<Complex64>], t: usize) -> (f64, Vec<Complex64>) {
    let logits: Vec<f64> = centroids
        .iter()
        .map(|c| {
            -c.iter()
                .zip(y)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + z.ln();
    let p: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    let mut g = vec![Complex64::new(0.0, 0.0); y.len()];
    for (j, c) in centroids.iter().enumerate() {
        for (gd, cd) in g.iter_mut().zip(c) {
            *gd += cd * p[j];
        }
    }
    for (gd, cd) in g.iter_mut().zip(&centroids[t]) {
        *gd = (*gd - cd) * 2.0;
    }
    (lse - logits[t], g)
}

/// Mean cross-entropy of a linear map over `(x, label)` rows and its
/// gradient (∇_A, ∇_b).
pub fn linear_eq_loss_grad(
    map: &LinearMap,
    xs: &Array2<Complex64>,
    labels: &[usize],
    centroids: &[Vec<Complex64>],
) -> (f64, Array2<Complex64>, Array1<Complex64>) {
    let n = map.dim();
    let mut ga = Array2::<Complex64>::zeros((n, n));
    let mut gb = Array1::<Complex64>::zeros(n);
    let mut loss = 0.0;
    let rows = xs.nrows().max(1) as f64;
    for (row, &t) in xs.outer_iter().zip(labels) {
        let x = row.as_slice().expect("row-major");
        let y = map.apply(x);
        let (l, g) = ce_at(y.values(), centroids, t);
        loss += l;
        for i in 0..n {
            gb[i] += g[i];
            for j in 0..n {
                ga[[i, j]] += g[i] * x[j].conj();
            }
        }
    }
    (
        loss / rows,
        ga / Complex64::new(rows, 0.0),
        gb / Complex64::new(rows, 0.0),
    )
}

struct NetGrad {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

/// Mean cross-entropy of the two-layer network and its gradient.
fn net_loss_grad(
    net: &TwoLayer,
    xs: &Array2<Complex64>,
    labels: &[usize],
    centroids: &[Vec<Complex64>],
) -> (f64, NetGrad) {
    let mut g = NetGrad {
        w1: Array2::zeros(net.w1.raw_dim()),
        b1: Array1::zeros(net.b1.len()),
        w2: Array2::zeros(net.w2.raw_dim()),
        b2: Array1::zeros(net.b2.len()),
    };
    let mut loss = 0.0;
    for (row, &t) in xs.outer_iter().zip(labels) {
        let x = row.as_slice().expect("row-major");
        let (pre, h, y) = net.forward(x);
        let (l, gy) = ce_at(&y, centroids, t);
        loss += l;
        let go = to_real(&gy);
        for (i, &gi) in go.iter().enumerate() {
            g.b2[i] += gi;
            for (k, &hk) in h.iter().enumerate() {
                g.w2[[i, k]] += gi * hk;
            }
        }
        let gh = net.w2.t().dot(&go);
        let xr = to_real(x);
        for k in 0..h.len() {
            if pre[k] > 0.0 {
                g.b1[k] += gh[k];
                for (j, &xj) in xr.iter().enumerate() {
                    g.w1[[k, j]] += gh[k] * xj;
                }
            }
        }
    }
    let r = xs.nrows().max(1) as f64;
    g.w1 /= r;
    g.b1 /= r;
    g.w2 /= r;
    g.b2 /= r;
    (loss / r, g)
}

/// Trains a single equalizing transformation on labelled source samples;
/// `samples[i]` holds draws from source atom i, whose label is κ(i).
pub fn train_linear_eq(
    source: &Language,
    target: &Language,
    kmap: &LabelMap,
    samples: &[Array2<Complex64>],
    cfg: &TrainConfig,
) -> Result<TrainedEq> {
    cfg.validate()?;
    kmap.check_languages(source, target)?;
    if samples.len() != source.atom_count() || samples.iter().any(|s| s.nrows() == 0) {
        return Err(Error::EmptySamples(
            "training needs samples from every source atom".into(),
        ));
    }
    let n = source.dimension();
    let total: usize = samples.iter().map(|s| s.nrows()).sum();
    let mut xs = Array2::<Complex64>::zeros((total, n));
    let mut labels = Vec::with_capacity(total);
    let mut r = 0;
    for (i, s) in samples.iter().enumerate() {
        for row in s.outer_iter() {
            xs.row_mut(r).assign(&row);
            labels.push(kmap.get(i));
            r += 1;
        }
    }
    let centroids: Vec<Vec<Complex64>> = target
        .atoms()
        .iter()
        .map(|a| a.centroid.values().to_vec())
        .collect();
    let mut rng = rng::stream(cfg.seed, &[rng::tag("train")]);
    let lr = cfg.learning_rate;

    let mut model = match cfg.hidden_factor {
        None => LearnedEq::Linear(LinearMap::identity(n)),
        Some(tau) => {
            let width = tau * 2 * n;
            let scale = (2.0 / (2 * n) as f64).sqrt();
            let w1 = Array2::from_shape_fn((width, 2 * n), |_| {
                scale * rng.sample::<f64, _>(StandardNormal)
            });
            let w2 = Array2::from_shape_fn((2 * n, width), |_| {
                (1.0 / width as f64).sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            LearnedEq::TwoLayer(TwoLayer {
                w1,
                b1: Array1::from_elem(width, 0.1),
                w2,
                b2: Array1::zeros(2 * n),
            })
        }
    };
    let full_loss = |m: &LearnedEq| match m {
        LearnedEq::Linear(t) => linear_eq_loss_grad(t, &xs, &labels, &centroids).0,
        LearnedEq::TwoLayer(net) => net_loss_grad(net, &xs, &labels, &centroids).0,
    };
    let initial_loss = full_loss(&model);
    let mut order: Vec<usize> = (0..total).collect();
    let mut trace = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = xs.select(ndarray::Axis(0), chunk);
            let bl: Vec<usize> = chunk.iter().map(|&k| labels[k]).collect();
            let loss = match &mut model {
                LearnedEq::Linear(t) => {
                    let (l, ga, gb) = linear_eq_loss_grad(t, &bx, &bl, &centroids);
                    t.a.scaled_add(Complex64::new(-lr, 0.0), &ga);
                    t.b.scaled_add(Complex64::new(-lr, 0.0), &gb);
                    l
                }
                LearnedEq::TwoLayer(net) => {
                    let (l, g) = net_loss_grad(net, &bx, &bl, &centroids);
                    net.w1.scaled_add(-lr, &g.w1);
                    net.b1.scaled_add(-lr, &g.b1);
                    net.w2.scaled_add(-lr, &g.w2);
                    net.b2.scaled_add(-lr, &g.b2);
                    l
                }
            };
            trace.push(loss);
        }
        let loss = full_loss(&model);
        if !loss.is_finite() || loss > 10.0 * initial_loss {
            return Err(Error::Diverged {
                epoch,
                loss,
                initial: initial_loss,
            });
        }
    }
    Ok(TrainedEq {
        model,
        trace,
        initial_loss,
    })
}

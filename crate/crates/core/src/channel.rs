//! Syntactic channel: power normalization, complex AWGN, square QAM with
//! Gray labelling and a fixed-point feature quantizer.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::semlang::SemanticSymbol;

/// Channel signal-to-noise ratio per complex symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnrRepr", into = "SnrRepr")]
pub enum Snr {
    Noiseless,
    Db(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<SnrRepr> for Snr {
    type Error = String;

    fn try_from(r: SnrRepr) -> std::result::Result<Self, String> {
        match r {
            SnrRepr::Num(v) => Ok(Snr::Db(v)),
            SnrRepr::Text(t) => t.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<Snr> for SnrRepr {
    fn from(s: Snr) -> Self {
        match s {
            Snr::Noiseless => SnrRepr::Text("inf".into()),
            Snr::Db(v) => SnrRepr::Num(v),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(
            t.to_ascii_lowercase().as_str(),
            "inf" | "+inf" | "noiseless"
        ) {
            return Ok(Snr::Noiseless);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::invalid(format!("bad SNR value {t:?}")))?;
        if v.is_nan() {
            return Err(Error::invalid("SNR must not be NaN"));
        }
        Ok(if v == f64::INFINITY {
            Snr::Noiseless
        } else {
            Snr::Db(v)
        })
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Noiseless => f.write_str("inf"),
            Snr::Db(v) => write!(f, "{v}"),
        }
    }
}

impl Snr {
    /// Total complex noise variance σ² = 10^(−snr/10) for unit signal power.
    pub fn noise_variance(self) -> f64 {
        match self {
            Snr::Noiseless => 0.0,
            Snr::Db(db) => 10f64.powf(-db / 10.0),
        }
    }

    /// Stable key for seeding, independent of formatting.
    pub fn seed_tag(self) -> u64 {
        match self {
            Snr::Noiseless => u64::MAX,
            Snr::Db(db) => db.to_bits(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub snr: Snr,
    pub seed: u64,
}

/// Scales the batch to unit mean power per complex coordinate; returns the
/// scaled batch and the factor applied.
pub fn normalize_power(symbols: &[SemanticSymbol]) -> Result<(Vec<SemanticSymbol>, f64)> {
    if symbols.is_empty() {
        return Err(Error::EmptySamples(
            "cannot normalize an empty batch".into(),
        ));
    }
    let coords: usize = symbols.iter().map(SemanticSymbol::dim).sum();
    let energy: f64 = symbols
        .iter()
        .map(|s| s.values().iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    if energy == 0.0 {
        return Err(Error::invalid("cannot normalize an all-zero batch"));
    }
    let scale = (coords as f64 / energy).sqrt();
    Ok((symbols.iter().map(|s| s.scaled(scale)).collect(), scale))
}

/// Adds circularly-symmetric complex Gaussian noise of variance σ² per
/// coordinate (σ²/2 on each real component).
pub fn add_noise(values: &mut [Complex64], snr: Snr, rng: &mut StreamRng) {
    let var = snr.noise_variance();
    if var == 0.0 {
        return;
    }
    let s = (var / 2.0).sqrt();
    for v in values {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re, im) * s;
    }
}

pub fn awgn(x: &SemanticSymbol, cfg: &ChannelConfig) -> SemanticSymbol {
    let mut values = x.values().to_vec();
    let mut rng = rng::stream(cfg.seed, &[rng::tag("awgn")]);
    add_noise(&mut values, cfg.snr, &mut rng);
    SemanticSymbol::new(values).expect("finite input plus finite noise")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModemConfig {
    #[serde(default = "default_order")]
    pub qam_order: usize,
    #[serde(default = "default_bits")]
    pub bits_per_value: u32,
    /// Features are clipped to [−clip, clip] before quantization.
    #[serde(default = "default_clip")]
    pub clip: f64,
}

fn default_order() -> usize {
    256
}
fn default_bits() -> u32 {
    8
}
fn default_clip() -> f64 {
    4.0
}

impl Default for ModemConfig {
    fn default() -> Self {
        Self {
            qam_order: default_order(),
            bits_per_value: default_bits(),
            clip: default_clip(),
        }
    }
}

impl ModemConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.qam_order;
        if m < 4 || !m.is_power_of_two() || m.trailing_zeros() % 2 != 0 {
            return Err(Error::invalid(format!(
                "QAM order must be a power of 4, got {m}"
            )));
        }
        if !(1..=16).contains(&self.bits_per_value) {
            return Err(Error::invalid(format!(
                "bits_per_value must lie in [1, 16], got {}",
                self.bits_per_value
            )));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::invalid("clip must be > 0"));
        }
        Ok(())
    }

    /// Channel uses needed to send a `dim`-dimensional feature vector.
    pub fn symbols_per_message(&self, dim: usize) -> usize {
        let bits = dim * self.bits_per_value as usize;
        bits.div_ceil(self.qam_order.trailing_zeros() as usize)
    }
}

/// Square QAM with per-axis Gray labels and unit average power.
#[derive(Clone, Debug)]
pub struct Qam {
    bits_per_axis: u32,
    side: usize,
    norm: f64,
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        ModemConfig {
            qam_order: order,
            ..ModemConfig::default()
        }
        .validate()?;
        let bits_per_axis = order.trailing_zeros() / 2;
        let side = 1usize << bits_per_axis;
        // Mean of (2k − side + 1)² over k, times two axes.
        let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        Ok(Self {
            bits_per_axis,
            side,
            norm,
        })
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis as usize
    }

    pub fn order(&self) -> usize {
        self.side * self.side
    }

    fn level(&self, k: usize) -> f64 {
        (2.0 * k as f64 - (self.side as f64 - 1.0)) / self.norm
    }

    fn axis_bits(&self, bits: &[u8]) -> usize {
        let g = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        gray_decode(g)
    }

    fn push_axis_bits(&self, k: usize, out: &mut Vec<u8>) {
        let g = k ^ (k >> 1);
        for i in (0..self.bits_per_axis).rev() {
            out.push(((g >> i) & 1) as u8);
        }
    }

    fn nearest(&self, v: f64) -> usize {
        let k = ((v * self.norm + self.side as f64 - 1.0) / 2.0).round();
        k.clamp(0.0, self.side as f64 - 1.0) as usize
    }

    /// Constellation point for one symbol's worth of bits (I bits first).
    pub fn point(&self, bits: &[u8]) -> Complex64 {
        let b = self.bits_per_axis as usize;
        Complex64::new(
            self.level(self.axis_bits(&bits[..b])),
            self.level(self.axis_bits(&bits[b..2 * b])),
        )
    }

    /// Maps bits to symbols, zero-padding the tail; returns the pad length.
    pub fn modulate(&self, bits: &[u8]) -> (Vec<Complex64>, usize) {
        let k = self.bits_per_symbol();
        let pad = (k - bits.len() % k) % k;
        let mut padded = bits.to_vec();
        padded.resize(bits.len() + pad, 0);
        (padded.chunks(k).map(|c| self.point(c)).collect(), pad)
    }

    /// Minimum-distance demapping; for a square grid this decouples per axis.
    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for z in symbols {
            self.push_axis_bits(self.nearest(z.re), &mut out);
            self.push_axis_bits(self.nearest(z.im), &mut out);
        }
        out
    }

    /// All constellation points indexed by their bit label.
    pub fn constellation(&self) -> Vec<Complex64> {
        let k = self.bits_per_symbol();
        (0..self.order())
            .map(|label| {
                let bits: Vec<u8> = (0..k).rev().map(|i| ((label >> i) & 1) as u8).collect();
                self.point(&bits)
            })
            .collect()
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut k = g;
    while g > 0 {
        g >>= 1;
        k ^= g;
    }
    k
}

/// Uniform mid-rise quantizer on [−clip, clip]; returns MSB-first bits.
pub fn quantize_features(values: &[f64], cfg: &ModemConfig) -> Vec<u8> {
    let levels = 1u64 << cfg.bits_per_value;
    let step = 2.0 * cfg.clip / levels as f64;
    let mut out = Vec::with_capacity(values.len() * cfg.bits_per_value as usize);
    for &v in values {
        let c = v.clamp(-cfg.clip, cfg.clip);
        let k = (((c + cfg.clip) / step).floor() as u64).min(levels - 1);
        for i in (0..cfg.bits_per_value).rev() {
            out.push(((k >> i) & 1) as u8);
        }
    }
    out
}

/// Reconstructs `count` values at their cell centres.
pub fn dequantize_features(bits: &[u8], count: usize, cfg: &ModemConfig) -> Result<Vec<f64>> {
    let b = cfg.bits_per_value as usize;
    if bits.len() < count * b {
        return Err(Error::invalid(format!(
            "need {} bits for {count} values, got {}",
            count * b,
            bits.len()
        )));
    }
    let step = 2.0 * cfg.clip / (1u64 << b) as f64;
    Ok(bits
        .chunks(b)
        .take(count)
        .map(|chunk| {
            let k = chunk
                .iter()
                .fold(0u64, |acc, &x| (acc << 1) | (x & 1) as u64);
            -cfg.clip + (k as f64 + 0.5) * step
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_parsing_and_variance() {
        assert_eq!("inf".parse::<Snr>().unwrap(), Snr::Noiseless);
        assert_eq!("-5".parse::<Snr>().unwrap(), Snr::Db(-5.0));
        assert!("abc".parse::<Snr>().is_err());
        assert_eq!(Snr::Db(0.0).noise_variance(), 1.0);
        assert!((Snr::Db(10.0).noise_variance() - 0.1).abs() < 1e-15);
        assert_eq!(Snr::Noiseless.noise_variance(), 0.0);
        let json = serde_json::to_string(&vec![Snr::Noiseless, Snr::Db(3.0)]).unwrap();
        assert_eq!(json, r#"["inf",3.0]"#);
        let back: Vec<Snr> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Snr::Noiseless, Snr::Db(3.0)]);
    }

    #[test]
    fn normalize_power_cases() {
        let x = SemanticSymbol::new(vec![Complex64::new(2.0, 0.0)]).unwrap();
        let (y, s) = normalize_power(&[x]).unwrap();
        assert_eq!(s, 0.5);
        assert_eq!(y[0].values()[0], Complex64::new(1.0, 0.0));
        let unit = SemanticSymbol::new(vec![Complex64::new(0.6, 0.8)]).unwrap();
        assert_eq!(normalize_power(&[unit]).unwrap().1, 1.0);
        assert!(normalize_power(&[SemanticSymbol::zeros(2)]).is_err());
        assert!(normalize_power(&[]).is_err());
    }

    #[test]
    fn noiseless_awgn_is_identity_and_seeded() {
        let x =
            SemanticSymbol::new(vec![Complex64::new(0.3, -0.2), Complex64::new(1.0, 1.0)]).unwrap();
        assert_eq!(
            awgn(
                &x,
                &ChannelConfig {
                    snr: Snr::Noiseless,
                    seed: 1
                }
            ),
            x
        );
        let cfg = ChannelConfig {
            snr: Snr::Db(3.0),
            seed: 9,
        };
        assert_eq!(awgn(&x, &cfg), awgn(&x, &cfg));
        assert_ne!(awgn(&x, &cfg), x);
    }

    #[test]
    fn gray_labels_of_neighbours_differ_in_one_bit() {
        for order in [4, 16, 64, 256] {
            let q = Qam::new(order).unwrap();
            let pts = q.constellation();
            let spacing = 2.0 / q.norm;
            for (a, pa) in pts.iter().enumerate() {
                for (b, pb) in pts.iter().enumerate().skip(a + 1) {
                    if ((pa - pb).norm() - spacing).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "order {order}: {a:b} vs {b:b}");
                    }
                }
            }
            let power: f64 = pts.iter().map(|z| z.norm_sqr()).sum::<f64>() / order as f64;
            assert!((power - 1.0).abs() < 1e-12);
        }
        assert_eq!(Qam::new(256).unwrap().bits_per_symbol(), 8);
        assert!(Qam::new(32).is_err());
        assert!(Qam::new(8).is_err());
    }

    #[test]
    fn quantizer_contracts() {
        let cfg = ModemConfig {
            bits_per_value: 8,
            clip: 4.0,
            ..ModemConfig::default()
        };
        let step = 8.0 / 256.0;
        let centres: Vec<f64> = (0..256).map(|k| -4.0 + (k as f64 + 0.5) * step).collect();
        let back = dequantize_features(&quantize_features(&centres, &cfg), 256, &cfg).unwrap();
        assert_eq!(back, centres);
        let sat = dequantize_features(&quantize_features(&[100.0, -100.0], &cfg), 2, &cfg).unwrap();
        assert_eq!(sat, vec![4.0 - step / 2.0, -4.0 + step / 2.0]);
        assert_eq!(cfg.symbols_per_message(8), 8);
        assert_eq!(
            ModemConfig {
                bits_per_value: 5,
                ..cfg
            }
            .symbols_per_message(3),
            2
        );
    }

    #[test]
    fn modem_config_validation() {
        assert!(ModemConfig::default().validate().is_ok());
        assert!(ModemConfig {
            bits_per_value: 0,
            ..ModemConfig::default()
        }
        .validate()
        .is_err());
        assert!(ModemConfig {
            bits_per_value: 17,
            ..ModemConfig::default()
        }
        .validate()
        .is_err());
        assert!(ModemConfig {
            qam_order: 128,
            ..ModemConfig::default()
        }
        .validate()
        .is_err());
    }
}

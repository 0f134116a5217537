//! Codebook of per-atom affine maps, information transfer estimates and
//! codebook I/O.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{solve_p1, LinearMap, P1Config, SampleSet};
use crate::rng;
use crate::semlang::{LabelMap, Language};

pub const FORMAT_VERSION: u32 = 1;

/// Default number of held-out samples per atom used to estimate ρ.
pub const DEFAULT_RHO_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub p1: P1Config,
    /// Resolved α per source atom.
    pub alpha: Vec<f64>,
    /// Resolved β per source atom.
    pub beta: Vec<f64>,
    pub source_samples: usize,
    pub target_samples: usize,
    pub seed: u64,
    /// Atoms whose conditional-gradient loop hit its step cap at least once.
    #[serde(default)]
    pub fw_capped: Vec<usize>,
}

/// ρ[i][k] = ρ_i(T_k): fraction of atom i's mass that map k lands in κ(i).
/// A full codebook gives an N_P × N_P matrix; a single map gives one column.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoTransferMatrix {
    values: Array2<f64>,
    /// Monte-Carlo samples per source atom behind each entry.
    pub samples_per_atom: usize,
}

impl InfoTransferMatrix {
    pub fn new(values: Array2<f64>, samples_per_atom: usize) -> Result<Self> {
        let (r, c) = values.dim();
        if r == 0 || c == 0 {
            return Err(Error::invalid("rho must be non-empty"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("rho entry {v} outside [0, 1]")));
        }
        Ok(Self {
            values,
            samples_per_atom,
        })
    }

    /// Number of source atoms (rows).
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Number of transformations (columns).
    pub fn maps(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[[i, k]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diag().to_vec()
    }

    /// Binomial standard error of entry (i, k).
    pub fn std_error(&self, i: usize, k: usize) -> f64 {
        let p = self.get(i, k);
        (p * (1.0 - p) / self.samples_per_atom.max(1) as f64).sqrt()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = std::iter::once("source_atom".to_string())
            .chain((0..self.maps()).map(|k| format!("T{k}")))
            .collect();
        out.write_record(&header)?;
        for (i, row) in self.values.outer_iter().enumerate() {
            let rec: Vec<String> = std::iter::once(i.to_string())
                .chain(row.iter().map(|v| v.to_string()))
                .collect();
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub n: usize,
    pub maps: Vec<LinearMap>,
    pub kmap: LabelMap,
    pub metadata: BuildMetadata,
    pub rho: Option<InfoTransferMatrix>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// A codebook holding only the identity map, i.e. no equalization.
    pub fn identity(n: usize, kmap: LabelMap) -> Self {
        Self {
            n,
            maps: vec![LinearMap::identity(n)],
            kmap,
            metadata: BuildMetadata {
                p1: P1Config::default(),
                alpha: Vec::new(),
                beta: Vec::new(),
                source_samples: 0,
                target_samples: 0,
                seed: 0,
                fw_capped: Vec::new(),
            },
            rho: None,
        }
    }
}

/// Fraction of `samples` (rows) that `t` sends into target atom `j`.
pub fn info_transfer(
    t: &LinearMap,
    samples: &Array2<Complex64>,
    target: &Language,
    j: usize,
) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::EmptySamples(
            "info_transfer needs at least one sample".into(),
        ));
    }
    if samples.ncols() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: samples.ncols(),
        });
    }
    let mapped = t.apply_rows(samples);
    let hits = mapped
        .outer_iter()
        .filter(|row| target.interpret(row.as_slice().expect("row-major")) == j)
        .count();
    Ok(hits as f64 / samples.nrows() as f64)
}

/// ρ_0(T) = Σ_i ρ_{P_i→Q_κ(i)}(T); `samples[i]` holds draws from source atom i.
pub fn language_mismatch(
    t: &LinearMap,
    source: &Language,
    target: &Language,
    kmap: &LabelMap,
    samples: &[Array2<Complex64>],
) -> Result<f64> {
    kmap.check_languages(source, target)?;
    if samples.len() != source.atom_count() {
        return Err(Error::invalid(format!(
            "need samples for {} atoms, got {}",
            source.atom_count(),
            samples.len()
        )));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.nrows() == 0 {
            return Err(Error::EmptySamples(format!(
                "source atom {i} has no samples"
            )));
        }
        total += info_transfer(t, s, target, kmap.get(i))?;
    }
    Ok(total)
}

/// Draws `n_x` source and `n_y` target samples per atom and solves one
/// joint map problem per (i, κ(i)).
pub fn build_codebook(
    source: &Language,
    target: &Language,
    kmap: &LabelMap,
    cfg: &P1Config,
    n_x: usize,
    n_y: usize,
    seed: u64,
) -> Result<Codebook> {
    kmap.check_languages(source, target)?;
    let src_seed = rng::derive_seed(seed, &[rng::tag("codebook-source")]);
    let tgt_seed = rng::derive_seed(seed, &[rng::tag("codebook-target")]);
    let xs = (0..source.atom_count())
        .map(|i| source.sample_points(i, n_x, src_seed))
        .collect::<Result<Vec<_>>>()?;
    let ys = (0..target.atom_count())
        .map(|j| target.sample_points(j, n_y, tgt_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut cb = build_codebook_from_samples(&xs, &ys, kmap, cfg)?;
    cb.metadata.seed = seed;
    Ok(cb)
}

/// Builds a codebook from explicit per-atom sample matrices (e.g. loaded
/// embeddings). `source[i]` and `target[j]` are `count × n`.
pub fn build_codebook_from_samples(
    source: &[Array2<Complex64>],
    target: &[Array2<Complex64>],
    kmap: &LabelMap,
    cfg: &P1Config,
) -> Result<Codebook> {
    cfg.validate()?;
    if source.len() != kmap.source_atoms() || target.len() != kmap.target_atoms() {
        return Err(Error::invalid(format!(
            "label map is {}->{}, samples cover {}->{} atoms",
            kmap.source_atoms(),
            kmap.target_atoms(),
            source.len(),
            target.len()
        )));
    }
    let n = source[0].ncols();
    for (i, s) in source.iter().enumerate() {
        check_samples(s, n, i, "source")?;
    }
    for (j, s) in target.iter().enumerate() {
        check_samples(s, n, j, "target")?;
    }

    let solved: Vec<Result<_>> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            let j = kmap.get(i);
            let pair_err = |e| Error::AtomPair {
                source_atom: i,
                target_atom: j,
                inner: Box::new(e),
            };
            let x = SampleSet::uniform(source[i].clone()).map_err(pair_err)?;
            let y = SampleSet::uniform(target[j].clone()).map_err(pair_err)?;
            solve_p1(&x, &y, cfg).map_err(pair_err)
        })
        .collect();

    let mut maps = Vec::with_capacity(source.len());
    let mut alpha = Vec::with_capacity(source.len());
    let mut beta = Vec::with_capacity(source.len());
    let mut fw_capped = Vec::new();
    for (i, r) in solved.into_iter().enumerate() {
        let r = r?;
        if !r.map.is_finite() {
            return Err(Error::AtomPair {
                source_atom: i,
                target_atom: kmap.get(i),
                inner: Box::new(Error::NotConverged("non-finite map".into())),
            });
        }
        if r.fw_warning {
            fw_capped.push(i);
        }
        alpha.push(r.alpha);
        beta.push(r.beta);
        maps.push(r.map);
    }
    Ok(Codebook {
        n,
        maps,
        kmap: kmap.clone(),
        metadata: BuildMetadata {
            p1: cfg.clone(),
            alpha,
            beta,
            source_samples: source[0].nrows(),
            target_samples: target[0].nrows(),
            seed: 0,
            fw_capped,
        },
        rho: None,
    })
}

fn check_samples(s: &Array2<Complex64>, n: usize, atom: usize, side: &str) -> Result<()> {
    if s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.ncols(),
        });
    }
    if s.nrows() < n + 1 {
        return Err(Error::EmptySamples(format!(
            "{side} atom {atom} has {} samples, need at least {}",
            s.nrows(),
            n + 1
        )));
    }
    Ok(())
}

/// Estimates ρ from `samples_per_atom` fresh draws per source atom. The
/// draws come from a stream disjoint from the one used by [`build_codebook`].
pub fn estimate_rho_matrix(
    cb: &Codebook,
    source: &Language,
    target: &Language,
    samples_per_atom: usize,
    seed: u64,
) -> Result<InfoTransferMatrix> {
    if samples_per_atom == 0 {
        return Err(Error::EmptySamples(
            "rho estimation needs at least one sample per atom".into(),
        ));
    }
    let eval_seed = rng::derive_seed(seed, &[rng::tag("rho-eval")]);
    let samples = (0..source.atom_count())
        .map(|i| source.sample_points(i, samples_per_atom, eval_seed))
        .collect::<Result<Vec<_>>>()?;
    estimate_rho_from_samples(cb, target, &samples)
}

pub fn estimate_rho_from_samples(
    cb: &Codebook,
    target: &Language,
    samples: &[Array2<Complex64>],
) -> Result<InfoTransferMatrix> {
    let np = cb.kmap.source_atoms();
    if samples.len() != np {
        return Err(Error::invalid(format!(
            "need samples for {np} atoms, got {}",
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|s| s.nrows() == 0) {
        return Err(Error::EmptySamples(format!(
            "source atom {i} has no evaluation samples"
        )));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..np)
        .into_par_iter()
        .map(|i| {
            let j = cb.kmap.get(i);
            cb.maps
                .iter()
                .map(|t| info_transfer(t, &samples[i], target, j))
                .collect()
        })
        .collect();
    let k = cb.maps.len();
    let mut values = Array2::zeros((np, k));
    for (i, r) in rows.into_iter().enumerate() {
        for (c, v) in r?.into_iter().enumerate() {
            values[[i, c]] = v;
        }
    }
    let min_rows = samples.iter().map(|s| s.nrows()).min().unwrap_or(0);
    Ok(InfoTransferMatrix {
        values,
        samples_per_atom: min_rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBase {
    Nat,
    Bits,
}

/// H = −(1/N_P) Σ_i [ρ_ii ln ρ_ii + (1−ρ_ii) ln(1−ρ_ii)], with 0·ln 0 = 0.
pub fn codebook_entropy(rho: &InfoTransferMatrix) -> f64 {
    codebook_entropy_in(rho, LogBase::Nat)
}

pub fn codebook_entropy_in(rho: &InfoTransferMatrix, base: LogBase) -> f64 {
    let diag = rho.diagonal();
    if diag.is_empty() {
        return 0.0;
    }
    let h: f64 = diag.iter().map(|&p| binary_entropy(p)).sum::<f64>() / diag.len() as f64;
    match base {
        LogBase::Nat => h,
        LogBase::Bits => h / std::f64::consts::LN_2,
    }
}

fn binary_entropy(p: f64) -> f64 {
    let xlogx = |v: f64| if v <= 0.0 { 0.0 } else { v * v.ln() };
    0.0 - (xlogx(p) + xlogx(1.0 - p))
}

#[derive(Serialize, Deserialize)]
struct MapRecord {
    source_atom: usize,
    target_atom: usize,
    #[serde(rename = "A")]
    a: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    version: u32,
    n: usize,
    #[serde(rename = "N_P")]
    n_p: usize,
    kmap: LabelMap,
    build_metadata: BuildMetadata,
    maps: Vec<MapRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_samples_per_atom: Option<usize>,
}

fn pairs(values: impl Iterator<Item = Complex64>) -> Vec<[f64; 2]> {
    values.map(|z| [z.re, z.im]).collect()
}

fn unpairs(values: &[[f64; 2]]) -> Vec<Complex64> {
    values
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect()
}

/// JSON text of `cb`. Floats use the shortest representation that parses
/// back to the same bits.
pub fn codebook_to_json(cb: &Codebook) -> Result<String> {
    let file = CodebookFile {
        version: FORMAT_VERSION,
        n: cb.n,
        n_p: cb.kmap.source_atoms(),
        kmap: cb.kmap.clone(),
        build_metadata: cb.metadata.clone(),
        maps: cb
            .maps
            .iter()
            .enumerate()
            .map(|(i, m)| MapRecord {
                source_atom: i,
                target_atom: cb.kmap.get(i.min(cb.kmap.source_atoms() - 1)),
                a: pairs(m.a.iter().cloned()),
                b: pairs(m.b.iter().cloned()),
            })
            .collect(),
        rho: cb
            .rho
            .as_ref()
            .map(|r| r.values.outer_iter().map(|row| row.to_vec()).collect()),
        rho_samples_per_atom: cb.rho.as_ref().map(|r| r.samples_per_atom),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn codebook_from_json(text: &str) -> Result<Codebook> {
    let file: CodebookFile = serde_json::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Version(file.version));
    }
    let kmap = file.kmap.validated()?;
    let n = file.n;
    if n == 0 {
        return Err(Error::Malformed("n must be >= 1".into()));
    }
    if kmap.source_atoms() != file.n_p {
        return Err(Error::Malformed(format!(
            "kmap covers {} atoms, header declares N_P = {}",
            kmap.source_atoms(),
            file.n_p
        )));
    }
    if file.maps.len() != file.n_p {
        return Err(Error::Malformed(format!(
            "{} maps for N_P = {}",
            file.maps.len(),
            file.n_p
        )));
    }
    let mut maps = Vec::with_capacity(file.maps.len());
    for (i, rec) in file.maps.iter().enumerate() {
        if rec.source_atom != i {
            return Err(Error::Malformed(format!(
                "map {i} declares source atom {}",
                rec.source_atom
            )));
        }
        if rec.target_atom != kmap.get(i) {
            return Err(Error::Malformed(format!(
                "map {i} targets atom {}, kmap says {}",
                rec.target_atom,
                kmap.get(i)
            )));
        }
        if rec.a.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: rec.a.len(),
            });
        }
        if rec.b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rec.b.len(),
            });
        }
        let a = Array2::from_shape_vec((n, n), unpairs(&rec.a))
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let b = Array1::from(unpairs(&rec.b));
        maps.push(LinearMap::new(a, b).map_err(|e| Error::Malformed(format!("map {i}: {e}")))?);
    }
    let rho = match file.rho {
        None => None,
        Some(rows) => {
            let np = file.n_p;
            if rows.len() != np || rows.iter().any(|r| r.len() != np) {
                return Err(Error::Malformed(format!("rho must be {np}x{np}")));
            }
            let values = Array2::from_shape_vec((np, np), rows.into_iter().flatten().collect())
                .map_err(|e| Error::Malformed(e.to_string()))?;
            Some(
                InfoTransferMatrix::new(values, file.rho_samples_per_atom.unwrap_or(0))
                    .map_err(|e| Error::Malformed(e.to_string()))?,
            )
        }
    };
    Ok(Codebook {
        n,
        maps,
        kmap,
        metadata: file.build_metadata,
        rho,
    })
}

pub fn save_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, codebook_to_json(cb)?)?;
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    codebook_from_json(&fs::read_to_string(path)?)
}

/// Loads a codebook and checks it lives in dimension `n`.
pub fn load_codebook_for(path: impl AsRef<Path>, n: usize) -> Result<Codebook> {
    let cb = load_codebook(path)?;
    if cb.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cb.n,
        });
    }
    Ok(cb)
}

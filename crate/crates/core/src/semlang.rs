//! Semantic spaces and languages.
//!
//! A [`Language`] partitions ℂⁿ into atoms, each modeled as an isotropic
//! Gaussian cluster around a centroid. The generator draws a symbol from the
//! atom of a message's class; the interpreter is the nearest-centroid rule,
//! whose Voronoi cells are the partition.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// A point of the complex semantic space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticSymbol(Vec<Complex64>);

impl SemanticSymbol {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("semantic symbol must have dimension >= 1"));
        }
        if values
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid("semantic symbol has non-finite component"));
        }
        Ok(Self(values))
    }

    /// Builds a symbol without the finiteness check; callers guarantee it.
    pub(crate) fn from_vec_unchecked(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    /// ‖x‖² over the 2n real coordinates.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn dist2(&self, other: &[Complex64]) -> f64 {
        dist2(&self.0, other)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }
}

impl AsRef<[Complex64]> for SemanticSymbol {
    fn as_ref(&self) -> &[Complex64] {
        &self.0
    }
}

pub(crate) fn dist2(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub class_label: usize,
    #[serde(default)]
    pub feature: Vec<f64>,
    pub id: u64,
}

impl Message {
    pub fn new(class_label: usize, id: u64) -> Self {
        Self {
            class_label,
            feature: Vec::new(),
            id,
        }
    }
}

/// Class-conditional source observations: each class has a prototype
/// feature vector and observations add isotropic Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub prototypes: Vec<Vec<f64>>,
    pub noise: f64,
}

impl ObservationModel {
    /// `classes` prototypes with i.i.d. standard normal coordinates.
    pub fn random(classes: usize, dim: usize, noise: f64, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[rng::tag("prototypes")]);
        let prototypes = (0..classes)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self { prototypes, noise }
    }

    /// Maps every prototype coordinate v to `offset + scale·v`.
    pub fn affine(mut self, offset: f64, scale: f64) -> Self {
        for v in self.prototypes.iter_mut().flatten() {
            *v = offset + scale * *v;
        }
        self
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    /// Message `id` of class `label` with a seeded observation.
    pub fn message(&self, label: usize, id: u64, seed: u64) -> Result<Message> {
        let proto = self.prototypes.get(label).ok_or(Error::LabelOutOfRange {
            label,
            atoms: self.prototypes.len(),
        })?;
        let mut rng = rng::stream(seed, &[rng::tag("observation"), id]);
        let feature = proto
            .iter()
            .map(|p| p + self.noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Message {
            class_label: label,
            feature,
            id,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomModel {
    pub label: usize,
    pub centroid: SemanticSymbol,
    /// Gaussian std per real coordinate; zero means a deterministic atom.
    pub spread: f64,
}

/// Generator, interpreter and partition of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Language {
    dimension: usize,
    atoms: Vec<AtomModel>,
    generator_noise_scale: f64,
    #[serde(default)]
    label_names: Vec<String>,
}

impl Language {
    /// Atom labels must be a permutation of `0..atoms.len()`; atoms are stored
    /// sorted by label so that labels double as atom indices.
    pub fn new(
        dimension: usize,
        mut atoms: Vec<AtomModel>,
        generator_noise_scale: f64,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("language dimension must be >= 1"));
        }
        if atoms.is_empty() {
            return Err(Error::invalid("language needs at least one atom"));
        }
        if !(generator_noise_scale >= 0.0 && generator_noise_scale.is_finite()) {
            return Err(Error::invalid(
                "generator noise scale must be finite and >= 0",
            ));
        }
        atoms.sort_by_key(|a| a.label);
        for (i, a) in atoms.iter().enumerate() {
            if a.label != i {
                return Err(Error::invalid(format!(
                    "atom labels must be distinct and cover 0..{}; found label {}",
                    atoms.len(),
                    a.label
                )));
            }
            if a.centroid.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: a.centroid.dim(),
                });
            }
            if a.centroid
                .values()
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
            {
                return Err(Error::invalid(format!("atom {i} centroid is not finite")));
            }
            if !(a.spread >= 0.0 && a.spread.is_finite()) {
                return Err(Error::invalid(format!(
                    "atom {i} spread must be finite and >= 0"
                )));
            }
        }
        if !label_names.is_empty() && label_names.len() != atoms.len() {
            return Err(Error::invalid("label_names must be empty or one per atom"));
        }
        Ok(Self {
            dimension,
            atoms,
            generator_noise_scale,
            label_names,
        })
    }

    /// Re-checks invariants after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(
            self.dimension,
            self.atoms,
            self.generator_noise_scale,
            self.label_names,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn atoms(&self) -> &[AtomModel] {
        &self.atoms
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn generator_noise_scale(&self) -> f64 {
        self.generator_noise_scale
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn centroid(&self, atom: usize) -> &SemanticSymbol {
        &self.atoms[atom].centroid
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.atoms.len() {
            return Err(Error::LabelOutOfRange {
                label,
                atoms: self.atoms.len(),
            });
        }
        Ok(())
    }

    /// Draws one symbol of `atom` using `rng`.
    pub fn sample_atom(&self, atom: usize, rng: &mut StreamRng) -> Result<SemanticSymbol> {
        self.check_label(atom)?;
        let a = &self.atoms[atom];
        let s = a.spread * self.generator_noise_scale;
        let values = a
            .centroid
            .values()
            .iter()
            .map(|c| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c + Complex64::new(re, im) * s
            })
            .collect();
        Ok(SemanticSymbol(values))
    }

    /// `count × n` matrix of symbols drawn from `atom`.
    pub fn sample_points(&self, atom: usize, count: usize, seed: u64) -> Result<Array2<Complex64>> {
        self.check_label(atom)?;
        let mut rng = rng::stream(seed, &[rng::tag("atom-samples"), atom as u64]);
        let mut out = Array2::zeros((count, self.dimension));
        for k in 0..count {
            let x = self.sample_atom(atom, &mut rng)?;
            for (d, v) in x.0.into_iter().enumerate() {
                out[[k, d]] = v;
            }
        }
        Ok(out)
    }

    /// λ(m): a realization of the generator for message `m`.
    pub fn generate(&self, m: &Message, seed: u64) -> Result<SemanticSymbol> {
        let mut rng = rng::stream(seed, &[rng::tag("generate"), m.id]);
        self.sample_atom(m.class_label, &mut rng)
    }

    /// Nearest-centroid interpreter; ties go to the lowest label.
    pub fn interpret(&self, x: &[Complex64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.atoms.iter().enumerate() {
            let d = dist2(a.centroid.values(), x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Posterior over atoms at point `x` under the equal-prior Gaussian
    /// mixture of the atom models.
    ///
    /// Zero-spread atoms act as point masses: if `x` sits on one or more of
    /// them they share all the mass, otherwise they get none. With no
    /// positive-spread atom left the result is one-hot at `interpret(x)`.
    pub fn posterior_at(&self, x: &[Complex64]) -> Vec<f64> {
        let k = self.atoms.len();
        let mut u = vec![0.0; k];
        let on_point: Vec<usize> = (0..k)
            .filter(|&i| {
                self.atoms[i].spread == 0.0 && dist2(self.atoms[i].centroid.values(), x) == 0.0
            })
            .collect();
        if !on_point.is_empty() {
            let w = 1.0 / on_point.len() as f64;
            for i in on_point {
                u[i] = w;
            }
            return u;
        }
        let real_dims = 2.0 * self.dimension as f64;
        let logs: Vec<Option<f64>> = self
            .atoms
            .iter()
            .map(|a| {
                (a.spread > 0.0).then(|| {
                    let d2 = dist2(a.centroid.values(), x);
                    -d2 / (2.0 * a.spread * a.spread) - real_dims * a.spread.ln()
                })
            })
            .collect();
        let max = logs
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            u[self.interpret(x)] = 1.0;
            return u;
        }
        let mut total = 0.0;
        for (ui, l) in u.iter_mut().zip(&logs) {
            if let Some(l) = l {
                *ui = (l - max).exp();
                total += *ui;
            }
        }
        for ui in &mut u {
            *ui /= total;
        }
        u
    }

    /// μ(P_i | m), evaluated at the generator's mean output for `m`.
    pub fn atom_posterior(&self, m: &Message) -> Result<Vec<f64>> {
        self.check_label(m.class_label)?;
        Ok(self.posterior_at(self.atoms[m.class_label].centroid.values()))
    }

    /// Mean of ‖x‖²/n over the generator output with uniform labels.
    pub fn average_power(&self) -> f64 {
        let n = self.dimension as f64;
        let g = self.generator_noise_scale;
        let total: f64 = self
            .atoms
            .iter()
            .map(|a| a.centroid.power() + 2.0 * n * (a.spread * g).powi(2))
            .sum();
        total / (self.atoms.len() as f64 * n)
    }

    /// Scales centroids and spreads by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| AtomModel {
                label: a.label,
                centroid: a.centroid.scaled(s),
                spread: a.spread * s,
            })
            .collect();
        Self {
            atoms,
            ..self.clone()
        }
    }
}

/// Source-atom → target-atom correspondence κ (one-to-one or many-to-one).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    table: Vec<usize>,
    target_atoms: usize,
}

impl LabelMap {
    pub fn new(table: Vec<usize>, target_atoms: usize) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid(
                "label map must cover at least one source atom",
            ));
        }
        if let Some((i, &j)) = table.iter().enumerate().find(|(_, &j)| j >= target_atoms) {
            return Err(Error::invalid(format!(
                "kappa({i}) = {j} is not a target atom (N_Q = {target_atoms})"
            )));
        }
        Ok(Self {
            table,
            target_atoms,
        })
    }

    pub fn identity(atoms: usize) -> Self {
        Self {
            table: (0..atoms).collect(),
            target_atoms: atoms,
        }
    }

    /// i ↦ i mod 2.
    pub fn parity(source_atoms: usize) -> Self {
        Self {
            table: (0..source_atoms).map(|i| i % 2).collect(),
            target_atoms: 2,
        }
    }

    pub fn validated(self) -> Result<Self> {
        Self::new(self.table, self.target_atoms)
    }

    pub fn get(&self, source_atom: usize) -> usize {
        self.table[source_atom]
    }

    pub fn source_atoms(&self) -> usize {
        self.table.len()
    }

    pub fn target_atoms(&self) -> usize {
        self.target_atoms
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn check_languages(&self, source: &Language, target: &Language) -> Result<()> {
        if self.table.len() != source.atom_count() {
            return Err(Error::invalid(format!(
                "label map covers {} source atoms, language has {}",
                self.table.len(),
                source.atom_count()
            )));
        }
        if self.target_atoms != target.atom_count() {
            return Err(Error::invalid(format!(
                "label map targets {} atoms, language has {}",
                self.target_atoms,
                target.atom_count()
            )));
        }
        if source.dimension() != target.dimension() {
            return Err(Error::DimensionMismatch {
                expected: source.dimension(),
                got: target.dimension(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Evenly spaced points on a circle in the first complex coordinate.
    Circle {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    /// One centroid per atom, each a list of `[re, im]` pairs.
    Explicit { centroids: Vec<Vec<Complex64>> },
}

fn default_radius() -> f64 {
    1.0
}

fn default_one() -> f64 {
    1.0
}

/// Parameters of a synthetic language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub n: usize,
    pub atoms: usize,
    pub layout: Layout,
    pub spread: f64,
    #[serde(default = "default_one")]
    pub generator_noise_scale: f64,
    /// Apply a seeded random unitary to the centroid layout.
    #[serde(default)]
    pub random_rotation: bool,
    /// Strength of a seeded random upper-triangular shear of the layout.
    #[serde(default)]
    pub shear: f64,
    /// Rescale so that generated symbols have unit average power.
    #[serde(default)]
    pub unit_power: bool,
    #[serde(default)]
    pub label_names: Vec<String>,
}

impl LanguageSpec {
    pub fn circle(n: usize, atoms: usize, spread: f64) -> Self {
        Self {
            n,
            atoms,
            layout: Layout::Circle { radius: 1.0 },
            spread,
            generator_noise_scale: 1.0,
            random_rotation: false,
            shear: 0.0,
            unit_power: false,
            label_names: Vec::new(),
        }
    }
}

pub fn make_synthetic_language(spec: &LanguageSpec, seed: u64) -> Result<Language> {
    if spec.n == 0 {
        return Err(Error::invalid("dimension n must be >= 1"));
    }
    if spec.atoms < 1 {
        return Err(Error::invalid("atom count must be >= 1"));
    }
    if !(spec.spread > 0.0) || !spec.spread.is_finite() {
        return Err(Error::invalid(format!(
            "spread must be > 0, got {}",
            spec.spread
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut centroids: Vec<Vec<Complex64>> = match &spec.layout {
        Layout::Circle { radius } => (0..spec.atoms)
            .map(|k| {
                let mut c = vec![zero; spec.n];
                c[0] = Complex64::from_polar(*radius, 2.0 * PI * k as f64 / spec.atoms as f64);
                c
            })
            .collect(),
        Layout::Explicit { centroids } => {
            if centroids.len() != spec.atoms {
                return Err(Error::invalid(format!(
                    "explicit layout lists {} centroids for {} atoms",
                    centroids.len(),
                    spec.atoms
                )));
            }
            for c in centroids {
                if c.len() != spec.n {
                    return Err(Error::DimensionMismatch {
                        expected: spec.n,
                        got: c.len(),
                    });
                }
            }
            centroids.clone()
        }
    };

    let mut rng = rng::stream(seed, &[rng::tag("language-layout")]);
    if spec.random_rotation {
        let u = random_unitary(spec.n, &mut rng);
        for c in &mut centroids {
            *c = matvec(&u, c);
        }
    }
    if spec.shear != 0.0 {
        let mut s = crate::linalg::identity(spec.n);
        for i in 0..spec.n {
            for j in (i + 1)..spec.n {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                s[[i, j]] = Complex64::new(re, im) * spec.shear;
            }
        }
        for c in &mut centroids {
            *c = matvec(&s, c);
        }
    }

    let atoms = centroids
        .into_iter()
        .enumerate()
        .map(|(label, c)| {
            Ok(AtomModel {
                label,
                centroid: SemanticSymbol::new(c)?,
                spread: spec.spread,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lang = Language::new(
        spec.n,
        atoms,
        spec.generator_noise_scale,
        spec.label_names.clone(),
    )?;
    if spec.unit_power {
        let p = lang.average_power();
        if !(p > 0.0) {
            return Err(Error::invalid("cannot normalize a zero-power language"));
        }
        return Ok(lang.scaled(p.sqrt().recip()));
    }
    Ok(lang)
}

fn matvec(m: &Array2<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[[i, j]] * v[j]).sum())
        .collect()
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
fn random_unitary(n: usize, rng: &mut StreamRng) -> Array2<Complex64> {
    loop {
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            for q in &cols {
                let proj: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|z| *z /= norm);
            cols.push(v);
        }
        if ok {
            return Array2::from_shape_fn((n, n), |(i, j)| cols[j][i]);
        }
    }
}

/// Labeled symbols read from an embedding CSV, plus the language fitted to
/// them.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    pub ids: Vec<u64>,
    pub labels: Vec<usize>,
    pub symbols: Vec<SemanticSymbol>,
    pub language: Language,
}

impl EmbeddingSet {
    /// Symbols of one atom as a `count × n` matrix.
    pub fn atom_points(&self, atom: usize) -> Array2<Complex64> {
        let n = self.language.dimension();
        let rows: Vec<&SemanticSymbol> = self
            .labels
            .iter()
            .zip(&self.symbols)
            .filter(|(l, _)| **l == atom)
            .map(|(_, s)| s)
            .collect();
        Array2::from_shape_fn((rows.len(), n), |(k, d)| rows[k].values()[d])
    }
}

/// Reads `id,label,re_0,im_0,...` rows; atoms are `0..=max(label)` and each
/// must be present.
pub fn load_embeddings(path: impl AsRef<Path>, expected_n: usize) -> Result<EmbeddingSet> {
    read_embeddings(path.as_ref(), expected_n, None)
}

/// Like [`load_embeddings`] but rejects labels outside `0..atoms`.
pub fn load_embeddings_with_atoms(
    path: impl AsRef<Path>,
    expected_n: usize,
    atoms: usize,
) -> Result<EmbeddingSet> {
    read_embeddings(path.as_ref(), expected_n, Some(atoms))
}

fn read_embeddings(path: &Path, n: usize, atoms: Option<usize>) -> Result<EmbeddingSet> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let expected_cols = 2 + 2 * n;
    if header.len() != expected_cols {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: header.len().saturating_sub(2) / 2,
        });
    }
    let mut want = vec!["id".to_string(), "label".to_string()];
    for d in 0..n {
        want.push(format!("re_{d}"));
        want.push(format!("im_{d}"));
    }
    for (got, want) in header.iter().zip(&want) {
        if got.trim() != want {
            return Err(parse_err(
                1,
                format!("expected column `{want}`, found `{got}`"),
            ));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut symbols = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record?;
        if record.len() != expected_cols {
            if record.len() > 2 && (record.len() - 2) % 2 == 0 {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: (record.len() - 2) / 2,
                });
            }
            return Err(parse_err(
                line,
                format!("expected {expected_cols} fields, found {}", record.len()),
            ));
        }
        let id: u64 = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("bad id: {e}")))?;
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("bad label: {e}")))?;
        if let Some(k) = atoms {
            if label >= k {
                return Err(parse_err(
                    line,
                    format!("unknown label {label} (expected < {k})"),
                ));
            }
        }
        let mut values = Vec::with_capacity(n);
        for d in 0..n {
            let re: f64 = record[2 + 2 * d]
                .trim()
                .parse()
                .map_err(|e| parse_err(line, format!("bad re_{d}: {e}")))?;
            let im: f64 = record[3 + 2 * d]
                .trim()
                .parse()
                .map_err(|e| parse_err(line, format!("bad im_{d}: {e}")))?;
            values.push(Complex64::new(re, im));
        }
        let sym = SemanticSymbol::new(values).map_err(|e| parse_err(line, e.to_string()))?;
        ids.push(id);
        labels.push(label);
        symbols.push(sym);
    }
    if symbols.is_empty() {
        return Err(Error::EmptySamples(format!(
            "{} has no rows",
            path.display()
        )));
    }

    let k = atoms.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let language = fit_language(n, k, &labels, &symbols)?;
    Ok(EmbeddingSet {
        ids,
        labels,
        symbols,
        language,
    })
}

/// Per-atom sample mean and pooled per-coordinate standard deviation.
pub fn fit_language(
    n: usize,
    atoms: usize,
    labels: &[usize],
    symbols: &[SemanticSymbol],
) -> Result<Language> {
    let zero = Complex64::new(0.0, 0.0);
    let mut sums = vec![vec![zero; n]; atoms];
    let mut counts = vec![0usize; atoms];
    for (&l, s) in labels.iter().zip(symbols) {
        counts[l] += 1;
        for (acc, v) in sums[l].iter_mut().zip(s.values()) {
            *acc += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "unknown label: atom {empty} has no samples"
        )));
    }
    let centroids: Vec<Vec<Complex64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let mut sq = vec![0.0; atoms];
    for (&l, s) in labels.iter().zip(symbols) {
        sq[l] += dist2(&centroids[l], s.values());
    }
    let models = centroids
        .into_iter()
        .enumerate()
        .map(|(label, c)| {
            let spread = (sq[label] / (2.0 * n as f64 * counts[label] as f64)).sqrt();
            Ok(AtomModel {
                label,
                centroid: SemanticSymbol::new(c)?,
                spread,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Language::new(n, models, 1.0, Vec::new())
}

pub fn write_embeddings(
    path: impl AsRef<Path>,
    ids: &[u64],
    labels: &[usize],
    symbols: &[SemanticSymbol],
) -> Result<()> {
    let n = symbols.first().map_or(0, SemanticSymbol::dim);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    for d in 0..n {
        header.push(format!("re_{d}"));
        header.push(format!("im_{d}"));
    }
    w.write_record(&header)?;
    for ((id, l), s) in ids.iter().zip(labels).zip(symbols) {
        let mut rec = vec![id.to_string(), l.to_string()];
        for z in s.values() {
            rec.push(format!("{:e}", z.re));
            rec.push(format!("{:e}", z.im));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

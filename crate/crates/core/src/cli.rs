//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::Snr;
use crate::codebook::{codebook_entropy_in, load_codebook, save_codebook, LogBase};
use crate::error::{Error, Result};
use crate::harness::{run_experiment_to, ExperimentConfig, Method, ResultWriter};
use crate::linalg;
use crate::semlang::write_embeddings;

#[derive(Debug, Parser)]
#[command(
    name = "semeq",
    version,
    about = "Semantic channel equalization simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON); defaults to the digit/parity scenario.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated SNR grid in dB; `inf` means noiseless.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Vec<Snr>,
    /// Comma-separated ball-contraction radii.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radius: Vec<f64>,
    /// Comma-separated methods, or `all`.
    #[arg(long, global = true)]
    pub methods: Option<String>,
    /// Overrides the per-point message count.
    #[arg(long, global = true)]
    pub messages: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write both languages and per-atom samples.
    GenLang,
    /// Solve the codebook and write its JSON, ρ CSV and entropy.
    BuildCodebook,
    /// Evaluate one grid point.
    Eval,
    /// Run the full grid and write the results CSV.
    Sweep,
    /// Print ρ, entropy and per-atom diagnostics of a codebook file.
    Inspect { codebook: PathBuf },
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::digit_parity(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.snr_db.is_empty() {
            cfg.snr_db = self.snr_db.clone();
        }
        if !self.radius.is_empty() {
            cfg.radii = self.radius.clone();
        }
        if let Some(m) = &self.methods {
            cfg.methods = Method::parse_list(m)?;
        }
        if let Some(m) = self.messages {
            cfg.messages = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::GenLang => gen_lang(
            &c.config()?,
            c.out.as_deref().unwrap_or(Path::new("languages")),
        ),
        Command::BuildCodebook => build(
            &c.config()?,
            c.out.as_deref().unwrap_or(Path::new("codebook.json")),
        ),
        Command::Eval => {
            let mut cfg = c.config()?;
            if cfg.snr_db.len() != 1 || cfg.radii.len() != 1 {
                if c.snr_db.len() > 1 || c.radius.len() > 1 {
                    return Err(Error::invalid("eval takes a single --snr-db and --radius"));
                }
                cfg.snr_db.truncate(1);
                cfg.radii.truncate(1);
            }
            sweep(&cfg, c.out.as_deref())
        }
        Command::Sweep => {
            let cfg = c.config()?;
            let out = c
                .out
                .clone()
                .or_else(|| cfg.out_dir.as_ref().map(|d| d.join("results.csv")));
            sweep(&cfg, out.as_deref())
        }
        Command::Inspect { codebook } => inspect(codebook),
    }
}

fn gen_lang(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (source, target) = cfg.languages()?;
    for (name, lang, count) in [
        ("source", &source, cfg.source_samples),
        ("target", &target, cfg.target_samples),
    ] {
        std::fs::write(
            dir.join(format!("{name}_language.json")),
            serde_json::to_string_pretty(lang)?,
        )?;
        let seed = crate::rng::derive_seed(cfg.seed, &[crate::rng::tag(name)]);
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut symbols = Vec::new();
        for atom in 0..lang.atom_count() {
            let pts = lang.sample_points(atom, count, seed)?;
            for row in pts.outer_iter() {
                ids.push(ids.len() as u64);
                labels.push(atom);
                symbols.push(crate::semlang::SemanticSymbol::new(row.to_vec())?);
            }
        }
        write_embeddings(
            dir.join(format!("{name}_samples.csv")),
            &ids,
            &labels,
            &symbols,
        )?;
    }
    println!("wrote languages and samples to {}", dir.display());
    Ok(())
}

fn build(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (source, target) = cfg.languages()?;
    let radius = cfg.radii.first().copied().unwrap_or(1.0);
    let cb = cfg.codebook(&source, &target, radius)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_codebook(&cb, out)?;
    let rho = cb.rho.as_ref().expect("codebook carries rho");
    let rho_path = out.with_file_name("rho.csv");
    rho.write_csv(BufWriter::new(File::create(&rho_path)?))?;
    println!("codebook: {}", out.display());
    println!("rho: {}", rho_path.display());
    println!(
        "entropy: {:.6} nats ({:.6} bits)",
        codebook_entropy_in(rho, LogBase::Nat),
        codebook_entropy_in(rho, LogBase::Bits)
    );
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = ResultWriter::new(BufWriter::new(File::create(path)?))?;
            let rows = run_experiment_to(cfg, &mut w)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "wrote {} rows to {} ({failed} with errors)",
                rows.len(),
                path.display()
            );
        }
        None => {
            let mut w = ResultWriter::new(std::io::stdout().lock())?;
            run_experiment_to(cfg, &mut w)?;
        }
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let cb = load_codebook(path)?;
    let rho = cb
        .rho
        .as_ref()
        .ok_or_else(|| Error::Malformed("codebook has no rho matrix".into()))?;
    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    writeln!(
        o,
        "n = {}, N_P = {}, rho samples per atom = {}",
        cb.n,
        cb.len(),
        rho.samples_per_atom
    )?;
    writeln!(o, "rho (row i = source atom, column k = map T_k):")?;
    for row in rho.values().outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(o, "  {}", cells.join(" "))?;
    }
    writeln!(
        o,
        "entropy: {:.6} nats ({:.6} bits)",
        codebook_entropy_in(rho, LogBase::Nat),
        codebook_entropy_in(rho, LogBase::Bits)
    )?;
    writeln!(o, "atom  target  rho_ii  stderr  |A-I|_F  |b|")?;
    let eye = linalg::identity(cb.n);
    for (i, t) in cb.maps.iter().enumerate() {
        let b = t.b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        writeln!(
            o,
            "{i:>4}  {:>6}  {:.4}  {:.4}  {:.4}  {:.4}",
            cb.kmap.get(i),
            rho.get(i, i),
            rho.std_error(i, i),
            linalg::fro2(&(&t.a - &eye)).sqrt(),
            b
        )?;
    }
    Ok(())
}

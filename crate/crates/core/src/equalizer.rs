//! Online transformation selection and pre-/post-equalization.
//!
//! A message with atom posterior u is sent through T_k with
//! k = argmax_k (ρᵀu)_k, which minimizes the misinterpretation risk
//! R = 1 − Σ_i u_i ρ_i(T_k) over deterministic policies.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, InfoTransferMatrix};
use crate::error::{Error, Result};
use crate::ot::LinearMap;
use crate::semlang::{Language, Message, SemanticSymbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    BayesArgmax,
    Fixed(usize),
    Identity,
}

/// Deterministic selection policy over the columns of ρ. For `Identity`,
/// `rho` is the single column ρ_i(I).
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionPolicy {
    pub mode: SelectionMode,
    pub rho: InfoTransferMatrix,
}

impl SelectionPolicy {
    pub fn new(mode: SelectionMode, rho: InfoTransferMatrix) -> Result<Self> {
        match mode {
            SelectionMode::BayesArgmax if rho.size() != rho.maps() => {
                return Err(Error::invalid(format!(
                    "Bayes selection needs a square rho, got {}x{}",
                    rho.size(),
                    rho.maps()
                )))
            }
            SelectionMode::Fixed(k) if k >= rho.maps() => {
                return Err(Error::LabelOutOfRange {
                    label: k,
                    atoms: rho.maps(),
                })
            }
            SelectionMode::Identity if rho.maps() != 1 => {
                return Err(Error::invalid(
                    "identity policy takes the single identity column of rho",
                ))
            }
            _ => {}
        }
        Ok(Self { mode, rho })
    }

    /// Column of ρ used for posterior `u`.
    pub fn choose(&self, u: &[f64]) -> Result<usize> {
        check_posterior(&self.rho, u)?;
        Ok(match self.mode {
            SelectionMode::BayesArgmax => select_transformation(&self.rho, u)?,
            SelectionMode::Fixed(k) => k,
            SelectionMode::Identity => 0,
        })
    }

    pub fn risk(&self, u: &[f64]) -> Result<f64> {
        risk(&self.rho, self.choose(u)?, u)
    }
}

fn check_posterior(rho: &InfoTransferMatrix, u: &[f64]) -> Result<()> {
    if u.len() != rho.size() {
        return Err(Error::DimensionMismatch {
            expected: rho.size(),
            got: u.len(),
        });
    }
    Ok(())
}

/// R = 1 − Σ_i u_i ρ[i][k], clamped to [0, 1] against rounding.
pub fn risk(rho: &InfoTransferMatrix, k: usize, u: &[f64]) -> Result<f64> {
    check_posterior(rho, u)?;
    if k >= rho.maps() {
        return Err(Error::LabelOutOfRange {
            label: k,
            atoms: rho.maps(),
        });
    }
    let transfer: f64 = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| ui * rho.get(i, k))
        .sum();
    Ok((1.0 - transfer).clamp(0.0, 1.0))
}

/// argmax_k Σ_i ρ[i][k] u_i; ties go to the lowest index.
pub fn select_transformation(rho: &InfoTransferMatrix, u: &[f64]) -> Result<usize> {
    check_posterior(rho, u)?;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..rho.maps() {
        let score: f64 = u
            .iter()
            .enumerate()
            .map(|(i, &ui)| rho.get(i, k) * ui)
            .sum();
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    Ok(best)
}

/// Codebook plus policy, with optional renormalization of the transmitted
/// symbols to unit average power.
#[derive(Clone, Debug)]
pub struct Equalizer {
    pub codebook: Codebook,
    pub policy: SelectionPolicy,
    pub renormalize: bool,
    power_scale: f64,
}

impl Equalizer {
    /// Bayes selection over a codebook that carries its ρ.
    pub fn bayes(codebook: Codebook) -> Result<Self> {
        let rho = codebook
            .rho
            .clone()
            .ok_or_else(|| Error::invalid("codebook has no rho matrix"))?;
        if rho.maps() != codebook.len() {
            return Err(Error::invalid(format!(
                "rho has {} columns for {} maps",
                rho.maps(),
                codebook.len()
            )));
        }
        let policy = SelectionPolicy::new(SelectionMode::BayesArgmax, rho)?;
        Ok(Self {
            codebook,
            policy,
            renormalize: true,
            power_scale: 1.0,
        })
    }

    /// No equalization; `identity_rho` is the column ρ_i(I).
    pub fn identity(codebook: Codebook, identity_rho: InfoTransferMatrix) -> Result<Self> {
        let policy = SelectionPolicy::new(SelectionMode::Identity, identity_rho)?;
        Ok(Self {
            codebook,
            policy,
            renormalize: true,
            power_scale: 1.0,
        })
    }

    pub fn with_policy(codebook: Codebook, policy: SelectionPolicy) -> Self {
        Self {
            codebook,
            policy,
            renormalize: true,
            power_scale: 1.0,
        }
    }

    pub fn power_scale(&self) -> f64 {
        if self.renormalize {
            self.power_scale
        } else {
            1.0
        }
    }

    fn map(&self, k: usize) -> Option<&LinearMap> {
        match self.policy.mode {
            SelectionMode::Identity => None,
            _ => Some(&self.codebook.maps[k]),
        }
    }

    /// Sets the transmit scale so that equalized symbols have unit average
    /// power under `source` with uniform message labels. For a Gaussian
    /// atom x ~ c + s·CN(0, 2I), E‖Ax + b‖² = ‖Ac + b‖² + 2s²‖A‖²_F.
    pub fn calibrate_power(&mut self, source: &Language) -> Result<f64> {
        let n = source.dimension() as f64;
        let g = source.generator_noise_scale();
        let mut total = 0.0;
        for (i, atom) in source.atoms().iter().enumerate() {
            let u = source.atom_posterior(&Message::new(i, 0))?;
            let k = self.policy.choose(&u)?;
            let s2 = (atom.spread * g).powi(2);
            total += match self.map(k) {
                None => atom.centroid.power() + 2.0 * n * s2,
                Some(t) => {
                    t.apply(atom.centroid.values()).power()
                        + 2.0 * s2 * t.a.iter().map(|z| z.norm_sqr()).sum::<f64>()
                }
            };
        }
        let power = total / (source.atom_count() as f64 * n);
        if !(power > 0.0) {
            return Err(Error::invalid("equalized symbols have zero power"));
        }
        self.power_scale = 1.0 / power.sqrt();
        Ok(self.power_scale)
    }

    /// Transmit-side equalization: picks T_k from the atom posterior of `m`
    /// and returns (scale · T_k(x), k).
    pub fn pre_equalize(
        &self,
        source: &Language,
        m: &Message,
        x: &SemanticSymbol,
    ) -> Result<(SemanticSymbol, usize)> {
        let u = source.atom_posterior(m)?;
        let k = self.policy.choose(&u)?;
        let y = match self.map(k) {
            None => x.clone(),
            Some(t) => t.apply(x.values()),
        };
        let s = self.power_scale();
        Ok((if s == 1.0 { y } else { y.scaled(s) }, k))
    }

    /// Receive-side equalization: estimates the source atom posterior at the
    /// received point and applies the selected map there.
    pub fn post_equalize(
        &self,
        source: &Language,
        received: &SemanticSymbol,
    ) -> Result<(SemanticSymbol, usize)> {
        let u = source.posterior_at(received.values());
        let k = self.policy.choose(&u)?;
        Ok(match self.map(k) {
            None => (received.clone(), k),
            Some(t) => (t.apply(received.values()), k),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rho2() -> InfoTransferMatrix {
        InfoTransferMatrix::new(array![[0.9, 0.2], [0.1, 0.8]], 1).unwrap()
    }

    #[test]
    fn hand_evaluated_risk_and_selection() {
        let r = rho2();
        assert!((risk(&r, 1, &[0.3, 0.7]).unwrap() - 0.38).abs() < 1e-15);
        assert!((risk(&r, 0, &[1.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(select_transformation(&r, &[0.3, 0.7]).unwrap(), 1);
        assert_eq!(select_transformation(&r, &[1.0, 0.0]).unwrap(), 0);
        let perfect = InfoTransferMatrix::new(array![[1.0, 1.0], [1.0, 1.0]], 1).unwrap();
        assert_eq!(risk(&perfect, 1, &[0.4, 0.6]).unwrap(), 0.0);
        // Tie goes to the lowest index.
        assert_eq!(select_transformation(&perfect, &[0.4, 0.6]).unwrap(), 0);
        assert!(risk(&r, 0, &[1.0]).is_err());
        assert!(risk(&r, 2, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(SelectionPolicy::new(SelectionMode::Fixed(2), rho2()).is_err());
        assert!(SelectionPolicy::new(SelectionMode::Identity, rho2()).is_err());
        let col = InfoTransferMatrix::new(array![[0.5], [0.25]], 1).unwrap();
        assert!(SelectionPolicy::new(SelectionMode::BayesArgmax, col.clone()).is_err());
        let id = SelectionPolicy::new(SelectionMode::Identity, col).unwrap();
        assert!((id.risk(&[0.5, 0.5]).unwrap() - 0.625).abs() < 1e-15);
        let fixed = SelectionPolicy::new(SelectionMode::Fixed(1), rho2()).unwrap();
        assert_eq!(fixed.choose(&[1.0, 0.0]).unwrap(), 1);
    }
}

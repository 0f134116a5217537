//! Canonical synthetic scenarios.
//!
//! [`digit_parity`] is the reference setup: a 10-atom "digit" source
//! language talking to a 2-atom "parity" target language in ℂ². Source
//! centroids sit on a circle in the first coordinate with parity alternating
//! around it, so no single affine map separates even from odd digits. A small
//! offset in the second coordinate pushes six of the ten digits onto the
//! wrong side of the target's decision boundary, which puts unequalized
//! accuracy below a coin flip.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::semlang::{
    make_synthetic_language, LabelMap, Language, LanguageSpec, Layout, ObservationModel,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub source: LanguageSpec,
    pub target: LanguageSpec,
    pub kmap: LabelMap,
    pub observations: ObservationModel,
}

impl Scenario {
    pub fn languages(&self, seed: u64) -> Result<(Language, Language)> {
        let source = make_synthetic_language(&self.source, crate::rng::derive_seed(seed, &[1]))?;
        let target = make_synthetic_language(&self.target, crate::rng::derive_seed(seed, &[2]))?;
        self.kmap.check_languages(&source, &target)?;
        Ok((source, target))
    }
}

const DIGIT_RADIUS: f64 = 1.3;
const DIGIT_OFFSET: f64 = 0.15;
const DIGIT_SPREAD: f64 = 0.2;
const PARITY_SPREAD: f64 = 0.5;
/// Digits whose offset points at the wrong parity atom.
const MISALIGNED: [usize; 6] = [0, 1, 3, 4, 6, 9];

pub fn digit_names() -> Vec<String> {
    (0..10).map(|d| d.to_string()).collect()
}

pub fn digit_parity() -> Scenario {
    let centroids = (0..10)
        .map(|d| {
            let even = d % 2 == 0;
            let toward_own = if even { 1.0 } else { -1.0 };
            let sign = if MISALIGNED.contains(&d) {
                -toward_own
            } else {
                toward_own
            };
            vec![
                Complex64::from_polar(DIGIT_RADIUS, 2.0 * PI * d as f64 / 10.0),
                Complex64::new(sign * DIGIT_OFFSET, 0.0),
            ]
        })
        .collect();
    let source = LanguageSpec {
        n: 2,
        atoms: 10,
        layout: Layout::Explicit { centroids },
        spread: DIGIT_SPREAD,
        generator_noise_scale: 1.0,
        random_rotation: false,
        shear: 0.0,
        unit_power: true,
        label_names: digit_names(),
    };
    // ‖c‖² + 2n·s² = 1 + 4·0.25 = 2 = n: already unit power.
    let target = LanguageSpec {
        n: 2,
        atoms: 2,
        layout: Layout::Explicit {
            centroids: vec![
                vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
                vec![Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
            ],
        },
        spread: PARITY_SPREAD,
        generator_noise_scale: 1.0,
        random_rotation: false,
        shear: 0.0,
        unit_power: true,
        label_names: vec!["even".into(), "odd".into()],
    };
    Scenario {
        source,
        target,
        kmap: LabelMap::parity(10),
        // Class information sits below the most significant quantizer bits, so
        // it does not survive a low-SNR 256-QAM link.
        observations: ObservationModel::random(10, 8, 0.45, 0x5eed).affine(1.5, 0.5),
    }
}

/// Source and target share the same layout and κ is the identity.
pub fn matched(atoms: usize, spread: f64) -> Scenario {
    let mut spec = LanguageSpec::circle(2, atoms, spread);
    spec.unit_power = true;
    Scenario {
        source: spec.clone(),
        target: spec,
        kmap: LabelMap::identity(atoms),
        observations: ObservationModel::random(atoms, 8, 0.3, 0x5eed),
    }
}

//! Sampling of evaluation subsets and training scenes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_scene, derive_seed, Corpus, EchoPathChange, RirKind, Scene, SceneConfig};
use crate::error::{AecError, Result};
use crate::signal::SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Subset {
    #[serde(rename = "FST")]
    Fst,
    #[serde(rename = "FST-EPC")]
    FstEpc,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "DT-EPC")]
    DtEpc,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::Fst, Subset::FstEpc, Subset::Dt, Subset::DtEpc];

    pub fn name(self) -> &'static str {
        match self {
            Subset::Fst => "FST",
            Subset::FstEpc => "FST-EPC",
            Subset::Dt => "DT",
            Subset::DtEpc => "DT-EPC",
        }
    }

    pub fn double_talk(self) -> bool {
        matches!(self, Subset::Dt | Subset::DtEpc)
    }

    pub fn echo_path_change(self) -> bool {
        matches!(self, Subset::FstEpc | Subset::DtEpc)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = AecError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "FST" => Ok(Subset::Fst),
            "FST-EPC" => Ok(Subset::FstEpc),
            "DT" => Ok(Subset::Dt),
            "DT-EPC" => Ok(Subset::DtEpc),
            other => Err(AecError::Config(format!("unknown subset {other:?}"))),
        }
    }
}

/// Evaluation-set parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetConfig {
    pub duration: f64,
    pub ser_range: (f64, f64),
    pub switch_range: (f64, f64),
    pub rir_kind: RirKind,
    pub rir_len: usize,
}

impl Default for EvalSetConfig {
    fn default() -> Self {
        EvalSetConfig {
            duration: 8.0,
            ser_range: (-10.0, 10.0),
            switch_range: (3.5, 4.5),
            rir_kind: RirKind::Decaying { t60: 0.1 },
            rir_len: 1024,
        }
    }
}

/// A scene config plus the corpus draws it is built from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenePlan {
    pub subset: Subset,
    pub far_source: u64,
    pub near_source: u64,
    pub config: SceneConfig,
}

impl ScenePlan {
    /// Draws the plan for clip `index` of `subset` from a master seed.
    pub fn evaluation(subset: Subset, index: u64, master_seed: u64, set: &EvalSetConfig) -> Self {
        let seed = derive_seed(derive_seed(master_seed, subset as u64 + 1), index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ser_db = rng.gen_range(set.ser_range.0..=set.ser_range.1);
        let switch_time = rng.gen_range(set.switch_range.0..=set.switch_range.1);
        let (near_len, near_offset) = if subset.double_talk() {
            (set.duration, 0.0)
        } else {
            (0.0, 0.0)
        };
        ScenePlan {
            subset,
            far_source: derive_seed(seed, 10),
            near_source: derive_seed(seed, 11),
            config: SceneConfig {
                ser_db,
                far_len: set.duration,
                near_len,
                near_offset,
                epc: subset
                    .echo_path_change()
                    .then_some(EchoPathChange { switch_time }),
                rir_seed: derive_seed(seed, 12),
                mix_seed: derive_seed(seed, 13),
                rir_kind: set.rir_kind,
                rir_len: set.rir_len,
            },
        }
    }

    /// Training scene: 1 s far-end, 0.5-1 s near-end at a random offset,
    /// SER uniform in `ser_range`, white-noise RIR.
    pub fn training(seed: u64, ser_range: (f64, f64), rir_len: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let far_len = 1.0;
        let near_len = (rng.gen_range(0.5..=1.0) * SAMPLE_RATE as f64).round() / SAMPLE_RATE as f64;
        let slack = ((far_len - near_len) * SAMPLE_RATE as f64).round() as u64;
        let near_offset = rng.gen_range(0..=slack) as f64 / SAMPLE_RATE as f64;
        let ser_db = rng.gen_range(ser_range.0..=ser_range.1);
        ScenePlan {
            subset: Subset::Dt,
            far_source: derive_seed(seed, 20),
            near_source: derive_seed(seed, 21),
            config: SceneConfig {
                ser_db,
                far_len,
                near_len,
                near_offset,
                epc: None,
                rir_seed: derive_seed(seed, 22),
                mix_seed: derive_seed(seed, 23),
                rir_kind: RirKind::WhiteNoise,
                rir_len,
            },
        }
    }

    pub fn build(&self, corpus: &Corpus) -> Result<Scene> {
        let far_n = (self.config.far_len * SAMPLE_RATE as f64).round() as usize;
        let near_n = (self.config.near_len * SAMPLE_RATE as f64).round() as usize;
        let far = corpus.draw(self.far_source, far_n)?;
        let near = if near_n > 0 {
            corpus.draw(self.near_source, near_n)?
        } else {
            far.clone()
        };
        build_scene(&far, &near, &self.config)
    }
}

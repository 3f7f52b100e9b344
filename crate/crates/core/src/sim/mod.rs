//! Scene synthesis (RIRs, echoes, SER mixing, echo-path changes), the
//! built-in speech-like corpus, and evaluation metrics.

mod corpus;
pub mod dataset;
pub mod manifest;
pub mod metrics;
mod rir;
mod scene;

pub use corpus::{speech_like, Corpus};
pub use dataset::{EvalSetConfig, ScenePlan, Subset};
pub use metrics::{cap_db, erle, erle_curve, sdr, CurvePoint, REPORT_CAP_DB};
pub use rir::{generate_rir, Rir, RirKind};
pub use scene::{
    apply_echo_path_change, build_scene, convolve_echo, ctf_echo, mix_at_ser, EchoPathChange, Scene,
    SceneConfig,
};

/// Derives an independent seed from a base seed and a stream tag (SplitMix64).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

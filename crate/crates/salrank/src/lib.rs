//! Rank-conditioned diffusion saliency for synthetic video.
//!
//! `salrank` turns gaze recordings into object-level saliency supervision and
//! decodes saliency maps with a small denoising-diffusion model conditioned
//! on object ranking maps. The pieces:
//!
//! - fixation-derived object ranking and ground-truth ranking maps
//!   ([`curation`]),
//! - predicted/random ranking-map rasterization ([`rankmap`]),
//! - a diffusion decoder with a closed-form noise schedule, analytic
//!   gradients, and deterministic sampling ([`diffusion`]),
//! - the standard saliency metrics plus rank correlation ([`metrics`]),
//! - a synthetic moving-disk dataset generator ([`synth`]),
//! - clients for the caption→rank→ground pipeline with offline oracles and a
//!   bundled stub server ([`pipeline`]),
//! - the `salrank` command-line interface ([`cli`]).
//!
//! All numerics are `f64`, all randomness flows from explicit seeds, and all
//! artifacts (PNG, CSV, JSONL, checkpoints) are byte-reproducible.

pub mod cli;
pub mod curation;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod map;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod rankmap;
pub mod seedutil;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use map::{BoundingBox, FixationMap, Frame, GrayscaleMap, VideoClip};

/// Compiles every example in the user guide (`book/`) as a doctest, so the
/// prose can never drift from the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(ranking, "../../../book/src/ranking.md");
    chapter!(ranking_maps, "../../../book/src/ranking-maps.md");
    chapter!(diffusion, "../../../book/src/diffusion.md");
    chapter!(training, "../../../book/src/training.md");
    chapter!(metrics, "../../../book/src/metrics.md");
    chapter!(synthetic_data, "../../../book/src/synthetic-data.md");
    chapter!(pipeline, "../../../book/src/pipeline.md");
    chapter!(cli, "../../../book/src/cli.md");
}

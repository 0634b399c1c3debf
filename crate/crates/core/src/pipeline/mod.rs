//! Dataset manifests, configuration and batch orchestration:
//! preprocess, extract, verify and search.

mod batch;
mod config;
mod manifest;
mod search;
mod synth;
mod verify;

pub use batch::{build_templates, extract_one, load_entry_image, preprocess_one, BatchResult, FailureRecord, Preprocessed};
pub use config::{PipelineConfig, WarpSource};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use search::{run_search, run_search_on, SearchOutput, SearchReport, SearchTiming, RANKS};
pub use synth::{finger_rng, synth_dataset, SynthSpec};
pub use verify::{run_verification, run_verification_on, VerificationCounts, VerificationOutput, VerificationReport, VerificationTiming};

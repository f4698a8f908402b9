//! Detection, tracking and species labeling of atom columns in stacks of
//! atomically resolved microscopy frames.
//!
//! The processing chain is
//!
//! 1. [`stack_io`]: load a frame stack and min-max normalize it over the whole stack,
//! 2. [`preprocess`]: isotropic Gaussian denoising,
//! 3. [`blob_detect`]: multi-scale determinant-of-Hessian blob detection,
//! 4. [`tracker`]: greedy frame-to-frame linking into full-length tracks,
//! 5. [`species`]: annulus-neighbor intensity voting (Mo / Se / Unknown).
//!
//! [`neighbor`] holds the distance machinery shared by the later stages and
//! [`synth`] generates honeycomb lattice stacks with known ground truth.

pub mod blob_detect;
mod blend;
pub mod error;
pub mod neighbor;
pub mod preprocess;
pub mod species;
pub mod stack_io;
pub mod synth;
pub mod tracker;

pub use blob_detect::{detect_atoms, detect_stack, AtomCenter, CentroidMode, DetMap, ScaleSelection, DetectionParams};
pub use error::{Error, Result};
pub use neighbor::{DistanceHistogram, NeighborSet, Position, Rect};
pub use preprocess::{gaussian_blur, BlurParams};
pub use species::{label_tracks, ClassifyParams, LabeledTrack, SpeciesLabel};
pub use stack_io::{Frame, ImageStack, StackFormat};
pub use synth::{GroundTruth, SynthParams};
pub use tracker::{build_tracks, Track, TrackParams};

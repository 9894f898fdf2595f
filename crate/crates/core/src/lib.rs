//! Two-layer scalable video coding with compressively sampled residual
//! super-frames.
//!
//! The encoder sends a box-downsampled base layer plus, per frame, Gaussian
//! measurements of the thresholded residual between the original and the
//! up-sampled base. The decoder recovers each residual block by sparse
//! reconstruction and adds it back onto the up-sampled base.

pub mod clip;
pub mod codec;
pub mod container;
pub mod frame_io;
pub mod layers;
pub mod sensing;
pub mod solvers;

pub use codec::{decode, encode, CodecConfig, DecodeOptions};
pub use container::{CompressedStream, StreamHeader};
pub use frame_io::{ChromaFormat, VideoFrame, VideoSequence};
pub use layers::{ResidualFrame, ScaleFactor};
pub use sensing::{SensingMatrix, SparseBlockVector};
pub use solvers::{ReconstructionResult, SolverConfig, SolverKind};

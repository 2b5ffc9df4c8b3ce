//! Multi-manifold Gaussian process localization with conformal prediction intervals.
//!
//! Pipeline: [`sim`] renders multichannel recordings in a shoebox room,
//! [`features`] turns them into per-node relative transfer functions,
//! [`kernel`] and [`gpr`] build the manifold-regularized GP, and
//! [`conformal`] wraps it in exact transductive prediction intervals.
//! [`harness`] runs the coverage experiments.

pub mod conformal;
pub mod error;
pub mod features;
pub mod gpr;
pub mod harness;
pub mod interval;
pub mod kernel;
pub mod serde_float;
pub mod sim;
pub mod wav;

pub use conformal::{
    build_profile, jackknife_plus_interval, localize_with_pi, p_value, predict_interval, JackknifePlus,
    Localization, NonconformityProfile, PValue,
};
pub use error::{Error, Result};
pub use features::{estimate_rtf, stft, AggregatedRtf, BandSelection, StftConfig};
pub use gpr::{fit, Axis, MmgpModel};
pub use interval::{Piece, PredictionInterval};
pub use kernel::{combined_kernel_matrix, KernelConfig, ManifoldKernel, ReferenceSet, ScaleRule};
pub use sim::{generate_rir, simulate_recording, RoomSpec, Scene};

//! Progressive modality cooperation for multi-modality domain adaptation.
//!
//! Each modality gets its own adversarially aligned branch. Confident
//! pseudo-labeled target samples are fed back progressively, picked either
//! per modality or from the fused prediction. When a modality is missing on
//! the targets, a conditional generator trained on source pairs fills it in.
//!
//! Layout: [`nncore`] holds the dense networks and optimizer,
//! [`synthdata`] the synthetic benchmark and dataset files,
//! [`branches`] the per-modality networks, [`selection`] pseudo-label
//! selection, [`mmg`] the missing-modality generator and [`trainers`] the
//! training loops and evaluation.

pub mod branches;
pub mod error;
pub mod mmg;
pub mod nncore;
pub mod selection;
pub mod synthdata;
pub mod trainers;

pub use error::{PmcError, Result};

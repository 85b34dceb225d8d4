//! Self-paced pseudo-label selection.
//!
//! Every epoch the target samples are re-scored by the current branches.
//! Modality-specific selection (MSS) keeps, per modality, the most confident
//! fraction `r^m` of that modality's own pseudo labels; modality-integrated
//! selection (MIS) keeps the most confident fraction `alpha * r^0` under the
//! mean of all modalities' probability vectors. The fractions follow the
//! source-accuracy schedule in [`ProportionSchedule`]. Sets are rebuilt from
//! scratch each epoch.
//!
//! The detection variant ([`select_boxes`]) applies the same two rules to
//! NMS-filtered bounding boxes.

mod boxes;
mod records;
mod schedule;
mod select;

pub use boxes::{nms, select_boxes, BoxProposal, BoxSelectMode, Rect, ScoredBox};
pub use records::{make_pseudo_records, FusedWeightRule, PseudoRecord};
pub use schedule::{CurriculumState, ProportionSchedule, Stream};
pub use select::{mis_select, mss_select, selection_count, Origin, SelectionEntry, SelectionSet, AUDIT_HEADER};

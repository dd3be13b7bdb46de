//! U-Net and the FANet family.
//!
//! The backbone is a depth-4 U-Net with classic channel doubling. FANet
//! variants attach excitations inside each Merge-Conv: the FIAM excitation
//! after the first conv stage and the FSAM (or SE) excitation after the
//! second.

mod checkpoint;
mod model;
mod spec;

pub use checkpoint::{Checkpoint, Entry, EntryKind, MAGIC, VERSION};
pub use model::{argmax_classes, Model, SiteId, SiteKind, SiteRecord};
pub use spec::{ArchitectureSpec, Variant};

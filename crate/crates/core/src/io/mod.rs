//! File formats, bundled networks and exporters.

pub mod datasets;
pub mod export;
pub mod format;
pub mod inp;

pub use datasets::{bundled_text, load_bundled, BUNDLED};
pub use export::{export, Artifact, ExportError, Format, GridDocument, SequenceDocument};
pub use format::{parse_network, serialize_network, FormatError, Location, NetworkFile, SirSettings};
pub use inp::{parse_inp, InpError, InpImport, InpOptions};

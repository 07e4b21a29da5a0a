//! Dataset plumbing: the EEGB binary container, a CSV import shim, JSON
//! dataset manifests and the synthetic shifted-domain generator.

mod container;
mod csv;
mod manifest;
mod synth;

pub use container::{decode_container, encode_container, read_container, write_container, EEGB_MAGIC, EEGB_VERSION, HEADER_LEN};
pub use csv::{read_csv_domain, read_csv_trial, write_csv_trial};
pub use manifest::{read_manifest, write_manifest, DatasetManifest, SubjectEntry};
pub use synth::{synth_domains, SynthConfig};

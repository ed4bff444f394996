//! Persistence: mesh parsing (OBJ/OFF subset), the depth-map container,
//! identity-code banks, ASCII PLY point clouds, dataset manifests, and
//! class-embedding export. All binary formats are little-endian and
//! versioned; layouts are documented in `docs/formats.md`.

mod bank;
mod depthmap_io;
mod embeddings;
mod manifest;
mod mesh_io;
mod ply;

pub use bank::{decode_identity_bank, encode_identity_bank, read_identity_bank, write_identity_bank};
pub use depthmap_io::{
    decode_depthmap, depthmap_file_size, encode_depthmap, read_depthmap, write_depthmap,
};
pub use embeddings::{read_embeddings_csv, write_embeddings_csv};
pub use manifest::{
    append_manifest_rows, parse_manifest, read_manifest, write_manifest, Manifest, ManifestObject,
    ManifestRecord, Split,
};
pub use mesh_io::{load_mesh, parse_obj, parse_off};
pub use ply::{parse_pointcloud_ply, read_pointcloud_ply, write_pointcloud_ply};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{format}: bad magic {found:?}")]
    BadMagic { format: &'static str, found: [u8; 4] },
    #[error("{format}: unsupported version {found}")]
    BadVersion { format: &'static str, found: u8 },
    #[error("{format}: truncated, expected {expected} bytes but found {found}")]
    Truncated {
        format: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{format}: invalid header: {reason}")]
    BadHeader { format: &'static str, reason: String },
    #[error("depth code {code} exceeds the {bits}-bit range")]
    CodeOutOfRange { code: u8, bits: u8 },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("file contains no geometry")]
    EmptyGeometry,
    #[error("object `{object_id}` has a duplicate entry for view {view_id}")]
    DuplicateView { object_id: String, view_id: u8 },
    #[error("object `{object_id}` is missing view {view_id}")]
    MissingView { object_id: String, view_id: u8 },
    #[error("class ids are not dense from 0: id {missing} is absent")]
    NonDenseClassIds { missing: usize },
    #[error("cannot infer mesh format from `{0}` (expected .obj or .off)")]
    UnknownMeshFormat(String),
    #[error("point cloud contains a non-finite coordinate")]
    NonFinitePoint,
    #[error("model has no class table (unconditional, n_classes <= 1)")]
    NoClassTable,
}

//! Software depth rendering: per-pixel rays against a BVH of triangles
//! with a watertight intersection rule and z-buffer semantics.

mod bvh;
mod mesh;
mod render;

pub use bvh::Bvh;
pub use mesh::{icosphere, normalize_mesh, MeshError, NormalizedMesh, TriangleMesh};
pub use render::{render_depth, DepthImage, DepthRenderer};

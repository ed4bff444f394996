//! Multi-view depth-map modeling of 3D shapes.
//!
//! The pipeline: render quantized depth maps of a mesh from a fixed
//! 20-view dodecahedral camera rig, learn a view-invariant identity code
//! with a convolutional encoder, regenerate arbitrary views with a
//! style-modulated generator, evaluate reconstructions with Chamfer/EMD,
//! and synthesize novel shapes by fitting an IMLE model over the latent
//! space.

pub mod camrig;

pub mod depthcodec;
pub mod io_store;
pub mod metrics;
pub mod model;
pub mod trainer;




pub mod numcore;
pub mod rasterizer;


/// Caps rayon's global thread pool from the `DEPTHFORGE_THREADS` env var.
/// No-op when the variable is unset or the pool was already built.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("DEPTHFORGE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

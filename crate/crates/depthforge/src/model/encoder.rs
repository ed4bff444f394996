use crate::depthcodec::{one_hot, DepthMap};
use crate::numcore::{
    add, add_channel_bias, conv2d, leaky_relu, matmul, minibatch_stddev, reshape, ParamSet, Tensor,
};

use super::{ModelConfig, ModelError};

const SLOPE: f64 = 0.2;

/// View-invariant identity embedding of one depth map: a 1x1 stem, a
/// stack of stride-2 residual blocks down to 4x4, a batch-stddev
/// channel, and two fully connected layers. Deterministic for fixed
/// input and parameters.
pub fn encode(dm: &DepthMap, params: &ParamSet, cfg: &ModelConfig) -> Result<Tensor, ModelError> {
    if dm.bits != cfg.bits || dm.resolution != cfg.resolution {
        return Err(ModelError::InputMismatch {
            bits: dm.bits,
            resolution: dm.resolution,
        });
    }
    let input = one_hot(dm);
    let x = reshape(
        &input,
        &[1, cfg.depth_bins(), cfg.resolution, cfg.resolution],
    )?;
    let z = encode_tensor(&x, params, cfg)?;
    Ok(reshape(&z, &[cfg.latent_dim])?)
}

/// Graph-tracked encoder over an already one-hot `[B, 2^bits, H, W]`
/// batch; returns `[B, latent_dim]`.
pub fn encode_tensor(
    x: &Tensor,
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    let batch = x.shape()[0];
    let p = |name: &str| params.get(name);

    let mut x = leaky_relu(
        &add_channel_bias(&conv2d(x, p("enc.conv_in.w"), 1, 0)?, p("enc.conv_in.b"))?,
        SLOPE,
    )?;
    for i in 0..cfg.stages() {
        let a = leaky_relu(
            &add_channel_bias(
                &conv2d(&x, p(&format!("enc.block{i}.conv_a.w")), 1, 1)?,
                p(&format!("enc.block{i}.conv_a.b")),
            )?,
            SLOPE,
        )?;
        let b = leaky_relu(
            &add_channel_bias(
                &conv2d(&a, p(&format!("enc.block{i}.conv_b.w")), 2, 1)?,
                p(&format!("enc.block{i}.conv_b.b")),
            )?,
            SLOPE,
        )?;
        let skip = conv2d(&x, p(&format!("enc.block{i}.skip.w")), 2, 0)?;
        x = add(&b, &skip)?;
    }

    let x = minibatch_stddev(&x)?;
    let x = leaky_relu(
        &add_channel_bias(&conv2d(&x, p("enc.final.conv.w"), 1, 1)?, p("enc.final.conv.b"))?,
        SLOPE,
    )?;
    let flat = reshape(&x, &[batch, 2 * cfg.base_channels * 16])?;
    let h = add(&matmul(&flat, p("enc.final.fc1.w"))?, p("enc.final.fc1.b"))?;
    let z = add(&matmul(&h, p("enc.final.fc2.w"))?, p("enc.final.fc2.b"))?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camrig::ProjectionKind;
    use crate::model::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_map(cfg: &ModelConfig, seed: u64) -> DepthMap {
        let mut state = seed;
        DepthMap {
            resolution: cfg.resolution,
            bits: cfg.bits,
            near: 2.0,
            far: 3.0,
            view_id: 4,
            projection: ProjectionKind::Perspective,
            codes: (0..cfg.resolution * cfg.resolution)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 33) % cfg.depth_bins() as u64) as u8
                })
                .collect(),
        }
    }

    #[test]
    fn toy_encoder_outputs_latent_dim_deterministically() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = init_params(&cfg, &mut rng).unwrap();
        let dm = toy_map(&cfg, 1);
        let a = encode(&dm, &params, &cfg).unwrap();
        let b = encode(&dm, &params, &cfg).unwrap();
        assert_eq!(a.shape(), &[cfg.latent_dim]);
        assert_eq!(a.data(), b.data(), "encode must be bitwise deterministic");
        assert!(a.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encoder_rejects_mismatched_inputs() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = init_params(&cfg, &mut rng).unwrap();
        let mut dm = toy_map(&cfg, 1);
        dm.bits = 6;
        dm.codes.iter_mut().for_each(|c| *c &= 31);
        assert!(matches!(
            encode(&dm, &params, &cfg),
            Err(ModelError::InputMismatch { .. })
        ));
    }
}

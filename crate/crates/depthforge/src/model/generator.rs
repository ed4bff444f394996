use crate::numcore::{
    add, add_channel_bias, concat, embedding_lookup, leaky_relu, matmul, modulated_conv2d,
    pixel_norm, reshape, upsample2x_bilinear, ParamSet, Tensor,
};

use super::{ModelConfig, ModelError};

const SLOPE: f64 = 0.2;

/// Depth-map logits for an identity code seen from one of the rig
/// views: the style MLP maps the normalized code to a style vector,
/// class and view embeddings form the constant 4x4 input, and a stack
/// of modulated convolutions with bilinear upsampling grows it to full
/// resolution while to-rgb taps accumulate the `2^bits`-channel output.
pub fn generate(
    z: &Tensor,
    class_id: usize,
    view_id: usize,
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    if z.shape() != [cfg.latent_dim] {
        return Err(ModelError::Num(crate::numcore::NumError::BadShape {
            op: "generate",
            expected: format!("[{}] identity code", cfg.latent_dim),
            got: z.shape().to_vec(),
        }));
    }
    if class_id >= cfg.n_classes {
        return Err(ModelError::IndexOutOfRange {
            what: "class_id",
            index: class_id,
            len: cfg.n_classes,
        });
    }
    if view_id >= cfg.n_views {
        return Err(ModelError::IndexOutOfRange {
            what: "view_id",
            index: view_id,
            len: cfg.n_views,
        });
    }
    let p = |name: &str| params.get(name);
    let c = cfg.base_channels;

    // Style vector: pixel-normalized code through 8 linear layers.
    let mut w = pixel_norm(z)?;
    for i in 0..8 {
        w = add(
            &matmul(&w, p(&format!("gen.style{i}.w")))?,
            p(&format!("gen.style{i}.b")),
        )?;
        if i < 7 {
            w = leaky_relu(&w, SLOPE)?;
        }
    }
    let style_for = |layer: &str, w: &Tensor| -> Result<Tensor, ModelError> {
        Ok(add(
            &matmul(w, p(&format!("{layer}.aff.w")))?,
            p(&format!("{layer}.aff.b")),
        )?)
    };

    // Constant input: class embedding stacked on view embedding.
    let class_e = reshape(&embedding_lookup(p("gen.class_emb"), class_id)?, &[c, 4, 4])?;
    let view_e = reshape(&embedding_lookup(p("gen.view_emb"), view_id)?, &[c, 4, 4])?;
    let mut x = reshape(&concat(&class_e, &view_e, 0)?, &[1, 2 * c, 4, 4])?;

    let styled = |x: &Tensor, layer: &str, w: &Tensor, pad: usize| -> Result<Tensor, ModelError> {
        let s = style_for(layer, w)?;
        let y = modulated_conv2d(x, p(&format!("{layer}.w")), &s, true, pad)?;
        Ok(leaky_relu(&add_channel_bias(&y, p(&format!("{layer}.b")))?, SLOPE)?)
    };
    // To-rgb taps modulate without demodulation and skip the activation.
    let to_rgb = |x: &Tensor, layer: &str, w: &Tensor| -> Result<Tensor, ModelError> {
        let s = style_for(layer, w)?;
        let y = modulated_conv2d(x, p(&format!("{layer}.w")), &s, false, 0)?;
        Ok(add_channel_bias(&y, p(&format!("{layer}.b")))?)
    };

    x = styled(&x, "gen.conv1", &w, 1)?;
    let mut rgb = to_rgb(&x, "gen.to_rgb0", &w)?;
    for s in 0..cfg.stages() {
        x = styled(&upsample2x_bilinear(&x)?, &format!("gen.stage{s}.up"), &w, 1)?;
        x = styled(&x, &format!("gen.stage{s}.conv"), &w, 1)?;
        rgb = add(
            &upsample2x_bilinear(&rgb)?,
            &to_rgb(&x, &format!("gen.to_rgb{}", s + 1), &w)?,
        )?;
    }
    Ok(reshape(&rgb, &[cfg.depth_bins(), cfg.resolution, cfg.resolution])?)
}

//! The identity encoder, the style-modulated viewpoint generator with
//! class/view embeddings, latent averaging, and the label-smoothing KL
//! loss. Widths and resolutions scale from one config; the canonical
//! setting is a 64x64, 8-bit, 512-dim model with 256 base channels.

mod encoder;
mod generator;

pub use encoder::encode;
pub use generator::generate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camrig::ProjectionKind;
use crate::depthcodec::{argmax_codes, DepthMap};
use crate::numcore::{
    add_scalar, average, log_softmax_channels, mul, scale, sum, NumError, ParamSet, Tensor,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("depth map ({bits} bits, {resolution} px) does not match the model config")]
    InputMismatch { bits: u8, resolution: usize },
    #[error("{what} {index} out of range 0..{len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Architecture hyperparameters. `resolution` must be `4 * 2^k`; the
/// encoder halves down to 4x4 and the generator doubles back up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub resolution: usize,
    pub bits: u8,
    pub latent_dim: usize,
    pub base_channels: usize,
    pub n_classes: usize,
    pub n_views: usize,
    pub eps_smooth: f64,
}

impl ModelConfig {
    pub fn canonical() -> ModelConfig {
        ModelConfig {
            resolution: 64,
            bits: 8,
            latent_dim: 512,
            base_channels: 256,
            n_classes: 55,
            n_views: 20,
            eps_smooth: 0.2,
        }
    }

    /// Small setting for tests and smoke experiments.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            resolution: 16,
            bits: 5,
            latent_dim: 32,
            base_channels: 16,
            n_classes: 2,
            n_views: 20,
            eps_smooth: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.resolution < 8 || !self.resolution.is_power_of_two() {
            return bad(format!("resolution {} is not 4*2^k with k>=1", self.resolution));
        }
        if !(5..=8).contains(&self.bits) {
            return bad(format!("bits {} outside 5..=8", self.bits));
        }
        if self.latent_dim < 8 {
            return bad(format!("latent_dim {} < 8", self.latent_dim));
        }
        if self.base_channels < 2 {
            return bad("base_channels < 2".into());
        }
        if self.n_classes == 0 {
            return bad("n_classes must be >= 1".into());
        }
        if self.n_views == 0 || self.n_views > 32 {
            return bad(format!("n_views {} outside 1..=32", self.n_views));
        }
        if !(self.eps_smooth > 0.0 && self.eps_smooth < 1.0) {
            return bad(format!("eps_smooth {} outside (0,1)", self.eps_smooth));
        }
        Ok(())
    }

    /// Number of halving/doubling stages between `resolution` and 4x4.
    pub fn stages(&self) -> usize {
        (self.resolution / 4).trailing_zeros() as usize
    }

    pub fn depth_bins(&self) -> usize {
        1usize << self.bits
    }

    /// Width of one constant embedding row (a base_channels x 4 x 4 map).
    pub fn embedding_width(&self) -> usize {
        self.base_channels * 16
    }
}

/// View-invariant latent vector of a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCode(pub Vec<f64>);

impl IdentityCode {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.0.len()], self.0.clone()).expect("identity code tensor")
    }

    pub fn from_tensor(t: &Tensor) -> IdentityCode {
        IdentityCode(t.data().to_vec())
    }
}

enum Init {
    /// Zero-mean normal, std 1/sqrt(fan_in).
    FanIn(usize),
    /// Zero-mean normal, unit std (embedding tables).
    Unit,
    Zeros,
    Ones,
}

/// Single source of truth for parameter names, shapes and initializers,
/// in deterministic order.
fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let c = cfg.base_channels;
    let c2 = 2 * c;
    let bins = cfg.depth_bins();
    let l = cfg.latent_dim;
    let stages = cfg.stages();
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let conv = |name: String, cout: usize, cin: usize, k: usize, out: &mut Vec<_>| {
        out.push((format!("{name}.w"), vec![cout, cin, k, k], Init::FanIn(cin * k * k)));
        out.push((format!("{name}.b"), vec![cout], Init::Zeros));
    };

    // Identity encoder.
    conv("enc.conv_in".into(), c, bins, 1, &mut out);
    for i in 0..stages {
        let cin = if i == 0 { c } else { c2 };
        conv(format!("enc.block{i}.conv_a"), cin, cin, 3, &mut out);
        conv(format!("enc.block{i}.conv_b"), c2, cin, 3, &mut out);
        out.push((
            format!("enc.block{i}.skip.w"),
            vec![c2, cin, 1, 1],
            Init::FanIn(cin),
        ));
    }
    conv("enc.final.conv".into(), c2, c2 + 1, 3, &mut out);
    out.push(("enc.final.fc1.w".into(), vec![c2 * 16, l], Init::FanIn(c2 * 16)));
    out.push(("enc.final.fc1.b".into(), vec![l], Init::Zeros));
    out.push(("enc.final.fc2.w".into(), vec![l, l], Init::FanIn(l)));
    out.push(("enc.final.fc2.b".into(), vec![l], Init::Zeros));

    // Style network and constant embeddings.
    for i in 0..8 {
        out.push((format!("gen.style{i}.w"), vec![l, l], Init::FanIn(l)));
        out.push((format!("gen.style{i}.b"), vec![l], Init::Zeros));
    }
    out.push(("gen.class_emb".into(), vec![cfg.n_classes, cfg.embedding_width()], Init::Unit));
    out.push(("gen.view_emb".into(), vec![cfg.n_views, cfg.embedding_width()], Init::Unit));

    // Generator trunk: a styled conv at 4x4, then per stage an
    // upsampling styled conv and a plain styled conv, with a skip
    // to-rgb tap after each stage.
    let styled = |name: String, cout: usize, cin: usize, k: usize, out: &mut Vec<_>| {
        out.push((format!("{name}.w"), vec![cout, cin, k, k], Init::FanIn(cin * k * k)));
        out.push((format!("{name}.b"), vec![cout], Init::Zeros));
        out.push((format!("{name}.aff.w"), vec![l, cin], Init::FanIn(l)));
        out.push((format!("{name}.aff.b"), vec![cin], Init::Ones));
    };
    styled("gen.conv1".into(), c2, c2, 3, &mut out);
    styled("gen.to_rgb0".into(), bins, c2, 1, &mut out);
    for s in 0..stages {
        let cin = c2;
        let cout = if s + 1 == stages { c } else { c2 };
        styled(format!("gen.stage{s}.up"), cout, cin, 3, &mut out);
        styled(format!("gen.stage{s}.conv"), cout, cout, 3, &mut out);
        styled(format!("gen.to_rgb{}", s + 1), bins, cout, 1, &mut out);
    }
    out
}

/// Fresh parameters for the given config, deterministically drawn from
/// the RNG in layout order.
pub fn init_params<R: rand::Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<ParamSet, ModelError> {
    cfg.validate()?;
    let mut params = ParamSet::new();
    for (name, shape, init) in param_layout(cfg) {
        let t = match init {
            Init::FanIn(fan_in) => Tensor::randn_param(&shape, 1.0 / (fan_in as f64).sqrt(), rng),
            Init::Unit => Tensor::randn_param(&shape, 1.0, rng),
            Init::Zeros => {
                Tensor::param(&shape, vec![0.0; shape.iter().product()]).expect("zeros")
            }
            Init::Ones => Tensor::param(&shape, vec![1.0; shape.iter().product()]).expect("ones"),
        };
        params.insert(&name, t);
    }
    Ok(params)
}

/// Total scalar parameter count of the architecture at this config.
pub fn param_count(cfg: &ModelConfig) -> usize {
    param_layout(cfg)
        .iter()
        .map(|(_, shape, _)| shape.iter().product::<usize>())
        .sum()
}

/// Arithmetic mean of identity codes, bitwise invariant to input order.
pub fn average_identity(codes: &[Tensor]) -> Result<Tensor, ModelError> {
    Ok(average(codes)?)
}

/// Non-graph variant over stored codes.
pub fn average_identity_codes(codes: &[IdentityCode]) -> Result<IdentityCode, ModelError> {
    let tensors: Vec<Tensor> = codes.iter().map(|c| c.to_tensor()).collect();
    Ok(IdentityCode::from_tensor(&average(&tensors)?))
}

/// Label-smoothed target distribution: weight `1 - eps` on the true
/// code's channel, `eps` spread uniformly over the other `2^bits - 1`.
pub fn smoothed_target(dm: &DepthMap, eps: f64) -> Result<Tensor, ModelError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ModelError::BadConfig(format!("eps {eps} outside (0,1)")));
    }
    let bins = dm.max_code() as usize + 1;
    let hw = dm.resolution * dm.resolution;
    let off = eps / (bins as f64 - 1.0);
    let mut data = vec![0.0; bins * hw];
    for (pix, &c) in dm.codes.iter().enumerate() {
        for ch in 0..bins {
            data[ch * hw + pix] = if ch == c as usize { 1.0 - eps } else { off };
        }
    }
    Ok(Tensor::new(&[bins, dm.resolution, dm.resolution], data)?)
}

/// Mean-over-pixels KL divergence `KL[target || softmax(logits)]`,
/// differentiable in the logits.
pub fn kl_loss(target: &Tensor, logits: &Tensor) -> Result<Tensor, ModelError> {
    if target.shape() != logits.shape() {
        return Err(ModelError::Num(NumError::ShapeMismatch {
            op: "kl_loss",
            lhs: target.shape().to_vec(),
            rhs: logits.shape().to_vec(),
        }));
    }
    let pixels: usize = match target.shape() {
        [_, h, w] => h * w,
        [b, _, h, w] => b * h * w,
        [_] => 1,
        s => {
            return Err(ModelError::Num(NumError::BadShape {
                op: "kl_loss",
                expected: "[C], [C,H,W] or [B,C,H,W]".into(),
                got: s.to_vec(),
            }))
        }
    };
    // KL = sum(t log t)/N - sum(t * log_softmax(logits))/N; the first
    // term is constant in the logits (0 log 0 reads as 0).
    let entropy: f64 = target
        .data()
        .iter()
        .map(|&t| if t > 0.0 { t * t.ln() } else { 0.0 })
        .sum();
    let lsm = log_softmax_channels(logits)?;
    let cross = scale(&sum(&mul(target, &lsm)?)?, -1.0 / pixels as f64)?;
    Ok(add_scalar(&cross, entropy / pixels as f64)?)
}

/// Collapses a logit map to the discrete depth map it predicts
/// (per-pixel argmax; ties go to the lower code).
pub fn predict_depthmap(
    logits: &Tensor,
    cfg: &ModelConfig,
    view_id: u8,
    projection: ProjectionKind,
) -> Result<DepthMap, ModelError> {
    let expect = [cfg.depth_bins(), cfg.resolution, cfg.resolution];
    if logits.shape() != expect {
        return Err(ModelError::Num(NumError::BadShape {
            op: "predict_depthmap",
            expected: format!("{expect:?}"),
            got: logits.shape().to_vec(),
        }));
    }
    Ok(DepthMap {
        resolution: cfg.resolution,
        bits: cfg.bits,
        near: crate::depthcodec::DEPTH_NEAR,
        far: crate::depthcodec::DEPTH_FAR,
        view_id,
        projection,
        codes: argmax_codes(logits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camrig::ProjectionKind;
    use crate::numcore::softmax_channels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_map(seed: u64, cfg: &ModelConfig) -> DepthMap {
        let mut state = seed;
        let max = cfg.depth_bins() as u64;
        DepthMap {
            resolution: cfg.resolution,
            bits: cfg.bits,
            near: 2.0,
            far: 3.0,
            view_id: 0,
            projection: ProjectionKind::Perspective,
            codes: (0..cfg.resolution * cfg.resolution)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 33) % max) as u8
                })
                .collect(),
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = ModelConfig::toy();
        cfg.resolution = 12;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::toy();
        cfg.eps_smooth = 1.0;
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::canonical().validate().is_ok());
        assert_eq!(ModelConfig::canonical().stages(), 4);
        assert_eq!(ModelConfig::toy().stages(), 2);
    }

    #[test]
    fn smoothed_target_puts_point_eight_on_the_truth() {
        let cfg = ModelConfig {
            bits: 8,
            ..ModelConfig::toy()
        };
        let mut dm = toy_map(3, &cfg);
        dm.codes[0] = 37;
        let t = smoothed_target(&dm, 0.2).unwrap();
        let hw = cfg.resolution * cfg.resolution;
        assert_eq!(t.data()[37 * hw], 0.8);
        assert!((t.data()[hw] - 0.2 / 255.0).abs() < 1e-15);
        // Channel sums are exactly one per pixel.
        for pix in 0..hw {
            let s: f64 = (0..256).map(|c| t.data()[c * hw + pix]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothed_target_approaches_one_hot_as_eps_vanishes() {
        let cfg = ModelConfig::toy();
        let dm = toy_map(5, &cfg);
        let t = smoothed_target(&dm, 1e-12).unwrap();
        let oh = crate::depthcodec::one_hot(&dm);
        for (a, b) in t.data().iter().zip(oh.data()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn kl_is_zero_at_exact_match_and_nonnegative_elsewhere() {
        let cfg = ModelConfig::toy();
        let dm = toy_map(7, &cfg);
        let target = smoothed_target(&dm, 0.2).unwrap();
        // Logits = log target reproduce the target through softmax.
        let logits = Tensor::new(
            target.shape(),
            target.data().iter().map(|t| t.ln()).collect(),
        )
        .unwrap();
        let zero = kl_loss(&target, &logits).unwrap().item();
        assert!(zero.abs() < 1e-12, "{zero}");

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let logits = Tensor::randn(target.shape(), 2.0, &mut rng);
            let v = kl_loss(&target, &logits).unwrap().item();
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bins = 16;
        let target_raw = {
            let t = Tensor::randn(&[bins, 2, 2], 1.0, &mut rng);
            softmax_channels(&t).unwrap().detach()
        };
        let mut params = ParamSet::new();
        params.insert("logits", Tensor::randn_param(&[bins, 2, 2], 1.0, &mut rng));
        let err = crate::numcore::gradient_check(
            |p| match kl_loss(&target_raw, p.get("logits")) {
                Ok(t) => Ok(t),
                Err(ModelError::Num(e)) => Err(e),
                Err(e) => panic!("unexpected error: {e}"),
            },
            &params,
            100,
            1e-5,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-6, "kl fd error {err}");
    }

    #[test]
    fn predict_depthmap_inverts_one_hot_logits() {
        let cfg = ModelConfig::toy();
        let dm = toy_map(11, &cfg);
        let logits = crate::depthcodec::one_hot(&dm);
        let back = predict_depthmap(&logits, &cfg, 0, ProjectionKind::Perspective).unwrap();
        assert_eq!(back.codes, dm.codes);
        // Dominant channel 0 everywhere -> all background.
        let mut data = vec![0.0; cfg.depth_bins() * 256];
        for pix in 0..256 {
            data[pix] = 5.0;
        }
        let logits = Tensor::new(&[cfg.depth_bins(), 16, 16], data).unwrap();
        let bg = predict_depthmap(&logits, &cfg, 0, ProjectionKind::Perspective).unwrap();
        assert!(bg.codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn parameter_count_is_stable_and_matches_init() {
        let cfg = ModelConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = init_params(&cfg, &mut rng).unwrap();
        assert_eq!(params.num_values(), param_count(&cfg));
        // Same seed, same draw.
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let params2 = init_params(&cfg, &mut rng2).unwrap();
        for ((_, a), (_, b)) in params.iter().zip(params2.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }
}

//! The training loop: per-iteration view sampling, latent averaging,
//! multi-view generation, the label-smoothed KL objective, Adam, and
//! bitwise-resumable checkpoints. Also the reconstruction inference
//! path (any number of input views, 20 predicted maps, fused cloud).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camrig::{CameraRig, ProjectionKind, NUM_VIEWS};
use crate::depthcodec::{fuse, DepthMap, PointCloud};
use crate::io_store::{read_depthmap, IoError, Manifest};
use crate::model::{
    self, encode, generate, kl_loss, predict_depthmap, smoothed_target, IdentityCode, ModelConfig,
    ModelError,
};
use crate::numcore::{adam_step, average, AdamState, NumError, ParamSet, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    File(#[from] std::io::Error),
}

/// Optimization hyperparameters; the defaults are the published
/// training settings (100k iterations, batch 24, two views in and out,
/// Adam at 4e-3 with betas 0 and 0.99).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub v_in: usize,
    pub v_out: usize,
    pub iterations: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 24,
            v_in: 2,
            v_out: 2,
            iterations: 100_000,
            lr: 4e-3,
            beta1: 0.0,
            beta2: 0.99,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.v_in != self.v_out {
            return Err(TrainError::BadConfig(format!(
                "v_in ({}) must equal v_out ({})",
                self.v_in, self.v_out
            )));
        }
        if self.v_in == 0 || self.v_in > NUM_VIEWS {
            return Err(TrainError::BadConfig(format!(
                "v_in {} outside 1..={NUM_VIEWS}",
                self.v_in
            )));
        }
        if self.batch_size * self.v_in < 2 {
            return Err(TrainError::BadConfig(
                "batch_size * v_in must be at least 2".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(TrainError::BadConfig("iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One object with its complete 20-view map set.
#[derive(Debug, Clone)]
pub struct TrainObject {
    pub object_id: String,
    pub class_id: usize,
    pub maps: Vec<DepthMap>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub objects: Vec<TrainObject>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub bits: u8,
    pub resolution: usize,
    pub projection: ProjectionKind,
}

impl Dataset {
    /// Loads every referenced depth map; relative paths resolve against
    /// the manifest's directory. The whole dataset must agree on bits,
    /// resolution and projection.
    pub fn load(manifest: &Manifest, manifest_dir: &Path) -> Result<Dataset, TrainError> {
        let mut objects = Vec::with_capacity(manifest.objects.len());
        let mut meta: Option<(u8, usize, ProjectionKind)> = None;
        for obj in &manifest.objects {
            let mut maps = Vec::with_capacity(NUM_VIEWS);
            for (view, rel) in obj.view_paths.iter().enumerate() {
                let path: PathBuf = if rel.is_absolute() {
                    rel.clone()
                } else {
                    manifest_dir.join(rel)
                };
                let dm = read_depthmap(&path).map_err(|e| {
                    TrainError::Dataset(format!(
                        "object `{}` view {view}: {e} ({})",
                        obj.object_id,
                        path.display()
                    ))
                })?;
                if dm.view_id as usize != view {
                    return Err(TrainError::Dataset(format!(
                        "object `{}`: file {} stores view {} but the manifest row says {view}",
                        obj.object_id,
                        path.display(),
                        dm.view_id
                    )));
                }
                match meta {
                    None => meta = Some((dm.bits, dm.resolution, dm.projection)),
                    Some((b, r, p)) => {
                        if dm.bits != b || dm.resolution != r || dm.projection != p {
                            return Err(TrainError::Dataset(format!(
                                "object `{}` view {view}: inconsistent bits/resolution/projection",
                                obj.object_id
                            )));
                        }
                    }
                }
                maps.push(dm);
            }
            objects.push(TrainObject {
                object_id: obj.object_id.clone(),
                class_id: obj.class_id,
                maps,
            });
        }
        let (bits, resolution, projection) =
            meta.ok_or_else(|| TrainError::Dataset("empty dataset".into()))?;
        Ok(Dataset {
            objects,
            n_classes: manifest.n_classes,
            class_names: manifest.class_names(),
            bits,
            resolution,
            projection,
        })
    }

    pub fn from_objects(
        objects: Vec<TrainObject>,
        n_classes: usize,
        projection: ProjectionKind,
    ) -> Result<Dataset, TrainError> {
        let first = objects
            .first()
            .ok_or_else(|| TrainError::Dataset("empty dataset".into()))?;
        let bits = first.maps[0].bits;
        let resolution = first.maps[0].resolution;
        let class_names = (0..n_classes).map(|c| format!("class{c}")).collect();
        Ok(Dataset {
            objects,
            n_classes,
            class_names,
            bits,
            resolution,
            projection,
        })
    }
}

/// The sampled work for one iteration: which objects, which views feed
/// the encoder, which views the generator must reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub items: Vec<StepItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepItem {
    pub object_index: usize,
    pub input_views: Vec<u8>,
    pub output_views: Vec<u8>,
}

fn sample_distinct_views<R: Rng>(k: usize, rng: &mut R) -> Vec<u8> {
    // Partial Fisher-Yates over the 20 view ids.
    let mut ids: Vec<u8> = (0..NUM_VIEWS as u8).collect();
    for i in 0..k {
        let j = rng.random_range(i..NUM_VIEWS);
        ids.swap(i, j);
    }
    ids.truncate(k);
    ids
}

/// Draws the batch for one iteration from the run RNG: B distinct
/// objects when the dataset has at least B (with replacement
/// otherwise), then input and output views without replacement per
/// object, independently across objects.
pub fn plan_step<R: Rng>(dataset: &Dataset, cfg: &TrainConfig, rng: &mut R) -> StepPlan {
    let n = dataset.objects.len();
    let object_indices: Vec<usize> = if n >= cfg.batch_size {
        let mut ids: Vec<usize> = (0..n).collect();
        for i in 0..cfg.batch_size {
            let j = rng.random_range(i..n);
            ids.swap(i, j);
        }
        ids.truncate(cfg.batch_size);
        ids
    } else {
        (0..cfg.batch_size).map(|_| rng.random_range(0..n)).collect()
    };
    let items = object_indices
        .into_iter()
        .map(|object_index| StepItem {
            object_index,
            input_views: sample_distinct_views(cfg.v_in, rng),
            output_views: sample_distinct_views(cfg.v_out, rng),
        })
        .collect();
    StepPlan { items }
}

/// Builds the loss graph for a plan: encode the input views of each
/// object, average into its identity code, generate every requested
/// output view, and take the mean KL against the smoothed true maps.
pub fn execute_step(
    dataset: &Dataset,
    plan: &StepPlan,
    params: &ParamSet,
    model_cfg: &ModelConfig,
) -> Result<Tensor, TrainError> {
    let mut losses: Vec<Tensor> = Vec::new();
    for item in &plan.items {
        let obj = &dataset.objects[item.object_index];
        let class_id = if model_cfg.n_classes == 1 { 0 } else { obj.class_id };
        let codes: Vec<Tensor> = item
            .input_views
            .iter()
            .map(|&v| encode(&obj.maps[v as usize], params, model_cfg))
            .collect::<Result<_, _>>()?;
        let z = average(&codes)?;
        for &v in &item.output_views {
            let logits = generate(&z, class_id, v as usize, params, model_cfg)?;
            let target = smoothed_target(&obj.maps[v as usize], model_cfg.eps_smooth)?;
            losses.push(kl_loss(&target, &logits)?);
        }
    }
    // Mean of the per-view losses in plan order (fixed reduction order).
    let mut total = losses[0].clone();
    for l in &losses[1..] {
        total = crate::numcore::add(&total, l)?;
    }
    Ok(crate::numcore::scale(&total, 1.0 / losses.len() as f64)?)
}

/// One optimization step over a planned batch; returns the loss value.
pub fn train_step(
    dataset: &Dataset,
    plan: &StepPlan,
    params: &mut ParamSet,
    opt: &mut AdamState,
    model_cfg: &ModelConfig,
    iteration: u64,
) -> Result<f64, TrainError> {
    let loss = execute_step(dataset, plan, params, model_cfg)?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(TrainError::NonFiniteLoss { iteration });
    }
    params.zero_grads();
    loss.backward()?;
    adam_step(params, opt)?;
    Ok(value)
}

/// Deterministic full-dataset objective: every object encoded from all
/// 20 views, every view generated and scored. Used for before/after
/// comparisons, not for training.
pub fn full_loss(
    dataset: &Dataset,
    params: &ParamSet,
    model_cfg: &ModelConfig,
) -> Result<f64, TrainError> {
    let plan = StepPlan {
        items: (0..dataset.objects.len())
            .map(|i| StepItem {
                object_index: i,
                input_views: (0..NUM_VIEWS as u8).collect(),
                output_views: (0..NUM_VIEWS as u8).collect(),
            })
            .collect(),
    };
    Ok(execute_step(dataset, &plan, params, model_cfg)?.item())
}

pub struct TrainOutcome {
    pub params: ParamSet,
    pub opt: AdamState,
    pub loss_trace: Vec<f64>,
    pub final_checkpoint: Checkpoint,
}

/// Runs (or resumes) training. Deterministic per seed: the run RNG
/// drives parameter init and all sampling, and checkpoints capture its
/// exact position. Emits `loss_log.csv` and periodic checkpoints when
/// `out_dir` is given.
pub fn run_training(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(u64, f64),
) -> Result<TrainOutcome, TrainError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if dataset.bits != model_cfg.bits || dataset.resolution != model_cfg.resolution {
        return Err(TrainError::Dataset(format!(
            "dataset is {} bits at {} px but the model wants {} bits at {} px",
            dataset.bits, dataset.resolution, model_cfg.bits, model_cfg.resolution
        )));
    }
    for obj in &dataset.objects {
        if model_cfg.n_classes > 1 && obj.class_id >= model_cfg.n_classes {
            return Err(TrainError::Dataset(format!(
                "object `{}` has class {} but the model has {} classes",
                obj.object_id, obj.class_id, model_cfg.n_classes
            )));
        }
    }

    let (mut params, mut opt, mut rng, start_iter) = match resume {
        Some(ck) => {
            if ck.model_cfg != *model_cfg || ck.train_cfg != *train_cfg {
                return Err(TrainError::Checkpoint(
                    "checkpoint config does not match the requested run".into(),
                ));
            }
            let (params, opt) = ck.restore()?;
            let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
            rng.set_word_pos(ck.rng_word_pos);
            (params, opt, rng, ck.iteration)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
            let params = model::init_params(model_cfg, &mut rng)?;
            let opt = AdamState::new(train_cfg.lr, train_cfg.beta1, train_cfg.beta2, &params);
            (params, opt, rng, 0)
        }
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut log = match out_dir {
        Some(dir) => {
            let fresh = start_iter == 0;
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("loss_log.csv"))?;
            let mut w = std::io::BufWriter::new(file);
            if fresh {
                writeln!(w, "iteration,loss,wall_ms")?;
            }
            Some(w)
        }
        None => None,
    };

    let mut loss_trace = Vec::with_capacity((train_cfg.iterations - start_iter) as usize);
    for iter in start_iter..train_cfg.iterations {
        let started = Instant::now();
        let plan = plan_step(dataset, train_cfg, &mut rng);
        let loss = train_step(dataset, &plan, &mut params, &mut opt, model_cfg, iter)?;
        loss_trace.push(loss);
        if let Some(w) = log.as_mut() {
            writeln!(w, "{},{:.12e},{}", iter + 1, loss, started.elapsed().as_millis())?;
        }
        progress(iter + 1, loss);
        let done = iter + 1;
        if let Some(dir) = out_dir {
            if done % train_cfg.checkpoint_every == 0 && done != train_cfg.iterations {
                let ck = Checkpoint::capture(model_cfg, train_cfg, done, &rng, &params, &opt);
                ck.save(&dir.join(format!("checkpoint_{done:08}.dfck")))?;
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }

    let final_checkpoint = Checkpoint::capture(
        model_cfg,
        train_cfg,
        train_cfg.iterations,
        &rng,
        &params,
        &opt,
    );
    if let Some(dir) = out_dir {
        final_checkpoint.save(&dir.join("checkpoint_final.dfck"))?;
    }
    Ok(TrainOutcome {
        params,
        opt,
        loss_trace,
        final_checkpoint,
    })
}

/// Encodes the given maps, averages their codes, regenerates all 20
/// views, and fuses the predictions into a point cloud. A single input
/// map is the single-view-reconstruction mode.
pub fn reconstruct(
    maps: &[DepthMap],
    class_id: usize,
    params: &ParamSet,
    model_cfg: &ModelConfig,
    rig: &CameraRig,
) -> Result<(Vec<DepthMap>, PointCloud), TrainError> {
    if maps.is_empty() {
        return Err(TrainError::Dataset("reconstruct needs at least one input map".into()));
    }
    let codes: Vec<Tensor> = maps
        .iter()
        .map(|m| encode(m, params, model_cfg))
        .collect::<Result<_, _>>()?;
    let z = average(&codes)?;
    reconstruct_from_tensor(&z, class_id, params, model_cfg, rig)
}

/// The generation half of `reconstruct`, reusable for sampled or
/// interpolated identity codes.
pub fn reconstruct_from_code(
    code: &IdentityCode,
    class_id: usize,
    params: &ParamSet,
    model_cfg: &ModelConfig,
    rig: &CameraRig,
) -> Result<(Vec<DepthMap>, PointCloud), TrainError> {
    reconstruct_from_tensor(&code.to_tensor(), class_id, params, model_cfg, rig)
}

fn reconstruct_from_tensor(
    z: &Tensor,
    class_id: usize,
    params: &ParamSet,
    model_cfg: &ModelConfig,
    rig: &CameraRig,
) -> Result<(Vec<DepthMap>, PointCloud), TrainError> {
    let projection = rig.views[0].projection.kind();
    let mut maps = Vec::with_capacity(NUM_VIEWS);
    for view in 0..NUM_VIEWS {
        let logits = generate(z, class_id, view, params, model_cfg)?;
        maps.push(predict_depthmap(&logits, model_cfg, view as u8, projection)?);
    }
    let pairs: Vec<(&DepthMap, &crate::camrig::ViewSpec)> =
        maps.iter().zip(rig.views.iter()).collect();
    let cloud = match fuse(&pairs, false) {
        Ok(c) => c,
        Err(crate::depthcodec::CodecError::EmptyFuse) => PointCloud::default(),
        Err(e) => {
            return Err(TrainError::Dataset(format!("fusing predictions failed: {e}")))
        }
    };
    Ok((maps, cloud))
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

const CK_MAGIC: [u8; 4] = *b"DFCK";
const CK_VERSION: u32 = 1;

/// Everything needed to resume a run bitwise: configs, parameters,
/// optimizer moments, iteration counter, and the exact RNG position.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub iteration: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub adam_step_count: u64,
}

impl Checkpoint {
    pub fn capture(
        model_cfg: &ModelConfig,
        train_cfg: &TrainConfig,
        iteration: u64,
        rng: &ChaCha8Rng,
        params: &ParamSet,
        opt: &AdamState,
    ) -> Checkpoint {
        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        for (name, t) in params.iter() {
            tensors.push((name.to_string(), t.shape().to_vec(), t.data().to_vec()));
        }
        let (m, v) = opt.moments();
        for ((name, t), buf) in params.iter().zip(m) {
            tensors.push((format!("adam.m.{name}"), t.shape().to_vec(), buf.clone()));
        }
        for ((name, t), buf) in params.iter().zip(v) {
            tensors.push((format!("adam.v.{name}"), t.shape().to_vec(), buf.clone()));
        }
        Checkpoint {
            model_cfg: model_cfg.clone(),
            train_cfg: train_cfg.clone(),
            iteration,
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            tensors,
            adam_step_count: opt.step_count,
        }
    }

    /// Rebuilds the parameter set and optimizer state.
    pub fn restore(&self) -> Result<(ParamSet, AdamState), TrainError> {
        let n = self.tensors.len();
        if n % 3 != 0 {
            return Err(TrainError::Checkpoint(format!(
                "expected params plus two moment sets, got {n} tensors"
            )));
        }
        let count = n / 3;
        let mut params = ParamSet::new();
        for (name, shape, data) in &self.tensors[..count] {
            let t = Tensor::param(shape, data.clone())
                .map_err(|e| TrainError::Checkpoint(format!("tensor `{name}`: {e}")))?;
            params.insert(name, t);
        }
        let mut opt = AdamState::new(
            self.train_cfg.lr,
            self.train_cfg.beta1,
            self.train_cfg.beta2,
            &params,
        );
        opt.step_count = self.adam_step_count;
        let mut m = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for i in 0..count {
            let (pname, _, _) = &self.tensors[i];
            let (mname, _, mdata) = &self.tensors[count + i];
            let (vname, _, vdata) = &self.tensors[2 * count + i];
            if mname != &format!("adam.m.{pname}") || vname != &format!("adam.v.{pname}") {
                return Err(TrainError::Checkpoint(format!(
                    "moment tensors misaligned at `{pname}`"
                )));
            }
            m.push(mdata.clone());
            v.push(vdata.clone());
        }
        opt.restore_moments(m, v);
        Ok((params, opt))
    }

    /// `DFCK` container: magic, version u32, length-prefixed JSON
    /// config snapshot, counters, RNG state, then length-prefixed
    /// named tensors as little-endian f64.
    pub fn encode(&self) -> Result<Vec<u8>, TrainError> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            model: &'a ModelConfig,
            train: &'a TrainConfig,
        }
        let json = serde_json::to_vec(&Snapshot {
            model: &self.model_cfg,
            train: &self.train_cfg,
        })
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(&CK_MAGIC);
        out.extend_from_slice(&CK_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&self.adam_step_count.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, TrainError> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CK_MAGIC {
            return Err(TrainError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != CK_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let json_len = r.u32()? as usize;
        let json = r.take(json_len)?;
        #[derive(Deserialize)]
        struct Snapshot {
            model: ModelConfig,
            train: TrainConfig,
        }
        let snap: Snapshot = serde_json::from_slice(json)
            .map_err(|e| TrainError::Checkpoint(format!("config snapshot: {e}")))?;
        let iteration = r.u64()?;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_word_pos = u128::from_le_bytes(
            r.take(16)?
                .try_into()
                .map_err(|_| TrainError::Checkpoint("rng state truncated".into()))?,
        );
        let adam_step_count = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            if name_len > 1 << 16 {
                return Err(TrainError::Checkpoint("tensor name too long".into()));
            }
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| TrainError::Checkpoint("tensor name not utf-8".into()))?;
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(TrainError::Checkpoint(format!("rank {ndim} too large")));
            }
            let mut shape = Vec::with_capacity(ndim);
            let mut numel: u64 = 1;
            for _ in 0..ndim {
                let d = r.u32()? as usize;
                numel = numel.saturating_mul(d as u64);
                shape.push(d);
            }
            if numel > (1 << 32) {
                return Err(TrainError::Checkpoint("tensor too large".into()));
            }
            let raw = r.take(numel as usize * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, shape, data));
        }
        Ok(Checkpoint {
            model_cfg: snap.model,
            train_cfg: snap.train,
            iteration,
            rng_seed,
            rng_word_pos,
            tensors,
            adam_step_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.bytes.len() {
            return Err(TrainError::Checkpoint(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

//! Model assembly: configuration, parameter groups, training state, and
//! checkpoints.
//!
//! Every learnable (or stateful) array in the model belongs to exactly one
//! named parameter group. Trainers declare which groups they update; all
//! other groups are frozen, and the freezing contract is checkable by
//! hashing a group's bytes before and after training. Checkpoints store
//! parameters as raw f64 little-endian payloads so that save/load restores
//! bit-identical state.

use crate::counter::{DensityDecoder, InteractionModule};
use crate::encoders::tokenizer::Tokenizer;
use crate::encoders::{AdapterHead, FfnHead, ToyBackbone};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, seeded_rng, SgdState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Shape and initialization parameters of the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width d shared by every component.
    pub embed_dim: usize,
    /// Side length of the square visual patches.
    pub patch_size: usize,
    /// Images are resized to this square resolution before encoding.
    pub input_resolution: usize,
    /// Dense layers in the visual head.
    pub ffn_depth: usize,
    /// Bottleneck blocks in the text adapter.
    pub adapter_depth: usize,
    /// Cross-attention heads in the interaction module.
    pub heads: usize,
    /// Cross-attention layers (keys/values projections are shared).
    pub fusion_layers: usize,
    /// Hidden width of the per-token density decoder.
    pub decoder_hidden: usize,
    /// Ground-truth Gaussian kernel width, in pixels.
    pub sigma: f64,
    /// Seed from which all component initializations derive.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 512,
            patch_size: 16,
            input_resolution: 224,
            ffn_depth: 5,
            adapter_depth: 5,
            heads: 4,
            fusion_layers: 2,
            decoder_hidden: 64,
            sigma: 2.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// A small configuration for tests and desk-scale runs.
    pub fn toy(embed_dim: usize, input_resolution: usize, seed: u64) -> Self {
        ModelConfig {
            embed_dim,
            input_resolution,
            init_seed: seed,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".to_string()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.input_resolution % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "input_resolution {} not divisible by patch_size {}",
                self.input_resolution, self.patch_size
            )));
        }
        if self.ffn_depth == 0 || self.adapter_depth == 0 || self.fusion_layers == 0 {
            return Err(Error::Config("component depths must be >= 1".to_string()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// The six parameter groups. Backbone groups are permanently frozen;
/// trainers thaw exactly the group(s) their phase owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    BackboneVisual,
    BackboneText,
    Ffn,
    Adapter,
    Fusion,
    Decoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::BackboneVisual,
        ParamGroup::BackboneText,
        ParamGroup::Ffn,
        ParamGroup::Adapter,
        ParamGroup::Fusion,
        ParamGroup::Decoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::BackboneVisual => "backbone_visual",
            ParamGroup::BackboneText => "backbone_text",
            ParamGroup::Ffn => "ffn",
            ParamGroup::Adapter => "adapter",
            ParamGroup::Fusion => "fusion",
            ParamGroup::Decoder => "decoder",
        }
    }
}

impl std::fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The assembled two-stage model.
#[derive(Debug, Clone)]
pub struct CountingModel {
    pub config: ModelConfig,
    pub backbone: ToyBackbone,
    pub ffn: FfnHead,
    pub adapter: AdapterHead,
    pub fusion: InteractionModule,
    pub decoder: DensityDecoder,
    pub tokenizer: Tokenizer,
}

impl CountingModel {
    /// Builds and initializes every component from the config seed.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let backbone = ToyBackbone::new(d, config.patch_size, derive_seed(config.init_seed, "backbone"));
        let ffn = FfnHead::new(d, config.ffn_depth, &mut seeded_rng(derive_seed(config.init_seed, "ffn")));
        let adapter = AdapterHead::new(
            d,
            config.adapter_depth,
            &mut seeded_rng(derive_seed(config.init_seed, "adapter")),
        );
        let fusion = InteractionModule::new(
            d,
            config.heads,
            config.fusion_layers,
            &mut seeded_rng(derive_seed(config.init_seed, "fusion")),
        );
        let decoder = DensityDecoder::new(
            d,
            config.decoder_hidden,
            &mut seeded_rng(derive_seed(config.init_seed, "decoder")),
        );
        Ok(CountingModel {
            config,
            backbone,
            ffn,
            adapter,
            fusion,
            decoder,
            tokenizer: Tokenizer::default(),
        })
    }

    /// Every stateful array, as `(group, name, values)` in a fixed order.
    ///
    /// Batch-norm running statistics are included (they must round-trip
    /// through checkpoints) even though no optimizer ever steps them.
    pub fn param_entries(&self) -> Vec<(ParamGroup, String, Vec<f64>)> {
        let mut out = Vec::new();
        let (w_patch, b_patch, w_text) = self.backbone.param_views();
        out.push((
            ParamGroup::BackboneVisual,
            "backbone.visual.w".to_string(),
            w_patch.to_vec(),
        ));
        out.push((
            ParamGroup::BackboneVisual,
            "backbone.visual.b".to_string(),
            b_patch.to_vec(),
        ));
        out.push((
            ParamGroup::BackboneText,
            "backbone.text".to_string(),
            w_text.to_vec(),
        ));
        for (i, layer) in self.ffn.layers.iter().enumerate() {
            out.push((ParamGroup::Ffn, format!("ffn.layers.{i}.w"), layer.w.iter().copied().collect()));
            out.push((ParamGroup::Ffn, format!("ffn.layers.{i}.b"), layer.b.to_vec()));
        }
        for (i, norm) in self.ffn.norms.iter().enumerate() {
            out.push((ParamGroup::Ffn, format!("ffn.norms.{i}.gamma"), norm.gamma.to_vec()));
            out.push((ParamGroup::Ffn, format!("ffn.norms.{i}.beta"), norm.beta.to_vec()));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.running_mean"),
                norm.running_mean.to_vec(),
            ));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.running_var"),
                norm.running_var.to_vec(),
            ));
        }
        for (i, block) in self.adapter.blocks.iter().enumerate() {
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.down.w"),
                block.down.w.iter().copied().collect(),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.down.b"),
                block.down.b.to_vec(),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.up.w"),
                block.up.w.iter().copied().collect(),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.up.b"),
                block.up.b.to_vec(),
            ));
        }
        out.push((
            ParamGroup::Fusion,
            "fusion.w_k".to_string(),
            self.fusion.w_k.iter().copied().collect(),
        ));
        out.push((
            ParamGroup::Fusion,
            "fusion.w_v".to_string(),
            self.fusion.w_v.iter().copied().collect(),
        ));
        out.push((
            ParamGroup::Decoder,
            "decoder.l1.w".to_string(),
            self.decoder.l1.w.iter().copied().collect(),
        ));
        out.push((ParamGroup::Decoder, "decoder.l1.b".to_string(), self.decoder.l1.b.to_vec()));
        out.push((
            ParamGroup::Decoder,
            "decoder.l2.w".to_string(),
            self.decoder.l2.w.iter().copied().collect(),
        ));
        out.push((ParamGroup::Decoder, "decoder.l2.b".to_string(), self.decoder.l2.b.to_vec()));
        out
    }

    /// Mutable slices over the same entries, same order, same names.
    pub fn param_entries_mut(&mut self) -> Vec<(ParamGroup, String, &mut [f64])> {
        let mut out: Vec<(ParamGroup, String, &mut [f64])> = Vec::new();
        // backbone arrays are reconstructed from seed at build time; their
        // mutable views exist solely so checkpoints can restore them
        let (w_patch, b_patch, w_text) = self.backbone.param_views_mut();
        out.push((ParamGroup::BackboneVisual, "backbone.visual.w".to_string(), w_patch));
        out.push((ParamGroup::BackboneVisual, "backbone.visual.b".to_string(), b_patch));
        out.push((ParamGroup::BackboneText, "backbone.text".to_string(), w_text));
        for (i, layer) in self.ffn.layers.iter_mut().enumerate() {
            out.push((
                ParamGroup::Ffn,
                format!("ffn.layers.{i}.w"),
                layer.w.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.layers.{i}.b"),
                layer.b.as_slice_mut().expect("contiguous"),
            ));
        }
        for (i, norm) in self.ffn.norms.iter_mut().enumerate() {
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.gamma"),
                norm.gamma.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.beta"),
                norm.beta.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.running_mean"),
                norm.running_mean.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Ffn,
                format!("ffn.norms.{i}.running_var"),
                norm.running_var.as_slice_mut().expect("contiguous"),
            ));
        }
        for (i, block) in self.adapter.blocks.iter_mut().enumerate() {
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.down.w"),
                block.down.w.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.down.b"),
                block.down.b.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.up.w"),
                block.up.w.as_slice_mut().expect("contiguous"),
            ));
            out.push((
                ParamGroup::Adapter,
                format!("adapter.blocks.{i}.up.b"),
                block.up.b.as_slice_mut().expect("contiguous"),
            ));
        }
        out.push((
            ParamGroup::Fusion,
            "fusion.w_k".to_string(),
            self.fusion.w_k.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            ParamGroup::Fusion,
            "fusion.w_v".to_string(),
            self.fusion.w_v.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            ParamGroup::Decoder,
            "decoder.l1.w".to_string(),
            self.decoder.l1.w.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            ParamGroup::Decoder,
            "decoder.l1.b".to_string(),
            self.decoder.l1.b.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            ParamGroup::Decoder,
            "decoder.l2.w".to_string(),
            self.decoder.l2.w.as_slice_mut().expect("contiguous"),
        ));
        out.push((
            ParamGroup::Decoder,
            "decoder.l2.b".to_string(),
            self.decoder.l2.b.as_slice_mut().expect("contiguous"),
        ));
        out
    }
}

/// SHA-256 over a group's parameter bytes (f64 LE, name order).
pub fn group_hashes(model: &CountingModel) -> BTreeMap<ParamGroup, String> {
    let mut hashers: BTreeMap<ParamGroup, Sha256> = BTreeMap::new();
    for (group, name, values) in model.param_entries() {
        let h = hashers.entry(group).or_default();
        h.update(name.as_bytes());
        for v in values {
            h.update(v.to_le_bytes());
        }
    }
    hashers
        .into_iter()
        .map(|(g, h)| (g, hex_digest(h)))
        .collect()
}

fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Which trainer produced the current parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPhase {
    Init,
    Ffn,
    Adapter,
    Counter,
}

/// One epoch of a training run, for loss-curve artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: TrainPhase,
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Model, optimizer, freezing set, and training history: everything a
/// trainer mutates and a checkpoint persists.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: CountingModel,
    pub optimizer: SgdState,
    pub frozen: BTreeSet<ParamGroup>,
    pub history: Vec<EpochRecord>,
    pub phase: TrainPhase,
    pub epoch: usize,
    pub seed: u64,
}

impl TrainState {
    /// Fresh state: everything frozen until a trainer thaws its group.
    pub fn new(model: CountingModel, seed: u64) -> Self {
        TrainState {
            model,
            optimizer: SgdState::new(),
            frozen: ParamGroup::ALL.into_iter().collect(),
            history: Vec::new(),
            phase: TrainPhase::Init,
            epoch: 0,
            seed,
        }
    }

    /// Thaws exactly `active`, freezing everything else.
    pub fn set_active_groups(&mut self, active: &[ParamGroup]) {
        self.frozen = ParamGroup::ALL
            .into_iter()
            .filter(|g| !active.contains(g))
            .collect();
    }

    /// Applies one SGD step from a named gradient map.
    ///
    /// Refuses gradients that target frozen groups or unknown names: either
    /// is a trainer bug, not a recoverable condition.
    pub fn apply_gradients(
        &mut self,
        grads: &BTreeMap<String, Vec<f64>>,
        lr: f64,
        momentum: f64,
    ) -> Result<()> {
        let mut remaining: BTreeSet<&String> = grads.keys().collect();
        let frozen = self.frozen.clone();
        for (group, name, slice) in self.model.param_entries_mut() {
            if let Some(g) = grads.get(&name) {
                if frozen.contains(&group) {
                    return Err(Error::Train(format!(
                        "gradient for '{name}' targets frozen group {group}"
                    )));
                }
                if g.len() != slice.len() {
                    return Err(Error::Train(format!(
                        "gradient for '{name}' has {} values, parameter has {}",
                        g.len(),
                        slice.len()
                    )));
                }
                self.optimizer.step(&name, slice, g, lr, momentum);
                remaining.remove(&name);
            }
        }
        if let Some(name) = remaining.into_iter().next() {
            return Err(Error::Train(format!("gradient for unknown parameter '{name}'")));
        }
        Ok(())
    }
}

const CKPT_MAGIC: &[u8; 7] = b"PCCKPT\n";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CkptHeader {
    version: u32,
    phase: TrainPhase,
    epoch: usize,
    seed: u64,
    config: ModelConfig,
    frozen: Vec<ParamGroup>,
    history: Vec<EpochRecord>,
}

/// Writes the full training state.
///
/// Layout: magic, JSON header length (u32 LE) + header, then named f64 LE
/// arrays — first `n` model parameters, then `m` optimizer velocity buffers.
/// f64 payloads (not the f32 of embedding dumps) because checkpoints promise
/// bit-identical restoration.
pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    let header = CkptHeader {
        version: CKPT_VERSION,
        phase: state.phase,
        epoch: state.epoch,
        seed: state.seed,
        config: state.model.config.clone(),
        frozen: state.frozen.iter().copied().collect(),
        history: state.history.clone(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(CKPT_MAGIC).map_err(io_err)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;

    let write_named = |w: &mut BufWriter<std::fs::File>, name: &str, values: &[f64]| -> Result<()> {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(values.len() as u64).to_le_bytes()).map_err(io_err)?;
        for v in values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        Ok(())
    };

    let params = state.model.param_entries();
    w.write_all(&(params.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (_, name, values) in &params {
        write_named(&mut w, name, values)?;
    }
    w.write_all(&(state.optimizer.velocities.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for (name, values) in &state.optimizer.velocities {
        write_named(&mut w, name, values)?;
    }
    w.flush().map_err(io_err)
}

/// Restores a [`TrainState`] saved by [`save_checkpoint`], bit-identically.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r: &[u8] = &bytes;
    let truncated = |what: &str| Error::format("checkpoint", path, format!("truncated {what}"));

    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != CKPT_MAGIC {
        return Err(Error::format("checkpoint", path, "bad magic: not a checkpoint file"));
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4).map_err(|_| truncated("header length"))?;
    let header_len = u32::from_le_bytes(len4) as usize;
    if r.len() < header_len {
        return Err(truncated("header"));
    }
    let header: CkptHeader = serde_json::from_slice(&r[..header_len])
        .map_err(|e| Error::format("checkpoint", path, format!("bad header JSON: {e}")))?;
    r = &r[header_len..];
    if header.version != CKPT_VERSION {
        return Err(Error::format(
            "checkpoint",
            path,
            format!("unsupported version {}", header.version),
        ));
    }

    let read_named = |r: &mut &[u8]| -> Result<(String, Vec<f64>)> {
        let mut len4 = [0u8; 4];
        r.read_exact(&mut len4).map_err(|_| truncated("name length"))?;
        let name_len = u32::from_le_bytes(len4) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| truncated("name"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format("checkpoint", path, "parameter name not UTF-8"))?;
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8).map_err(|_| truncated("value count"))?;
        let count = u64::from_le_bytes(len8) as usize;
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| truncated(&format!("values of '{name}'")))?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok((name, values))
    };

    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8).map_err(|_| truncated("parameter count"))?;
    let n_params = u64::from_le_bytes(len8) as usize;
    let mut params: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for _ in 0..n_params {
        let (name, values) = read_named(&mut r)?;
        params.insert(name, values);
    }
    r.read_exact(&mut len8).map_err(|_| truncated("velocity count"))?;
    let n_vel = u64::from_le_bytes(len8) as usize;
    let mut velocities = BTreeMap::new();
    for _ in 0..n_vel {
        let (name, values) = read_named(&mut r)?;
        velocities.insert(name, values);
    }
    if !r.is_empty() {
        return Err(Error::format(
            "checkpoint",
            path,
            format!("{} trailing bytes", r.len()),
        ));
    }

    let mut model = CountingModel::new(header.config)?;
    for (_, name, slice) in model.param_entries_mut() {
        let values = params.remove(&name).ok_or_else(|| {
            Error::format("checkpoint", path, format!("missing parameter '{name}'"))
        })?;
        if values.len() != slice.len() {
            return Err(Error::format(
                "checkpoint",
                path,
                format!(
                    "parameter '{name}' has {} values, model expects {}",
                    values.len(),
                    slice.len()
                ),
            ));
        }
        slice.copy_from_slice(&values);
    }
    if let Some(name) = params.keys().next() {
        return Err(Error::format(
            "checkpoint",
            path,
            format!("unknown parameter '{name}' in file"),
        ));
    }

    Ok(TrainState {
        model,
        optimizer: SgdState { velocities },
        frozen: header.frozen.into_iter().collect(),
        history: header.history,
        phase: header.phase,
        epoch: header.epoch,
        seed: header.seed,
    })
}

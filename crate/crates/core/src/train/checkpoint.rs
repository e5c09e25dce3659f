//! Checkpoint directories `ckpt_<step>/` holding model parameters, optimizer
//! moments, a config copy and the random-stream state. Directories are
//! written under a temporary name and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::train::config::TrainConfig;
use crate::train::model::Model;

const MODEL_FILE: &str = "model.safetensors";
const OPTIM_FILE: &str = "optimizer.safetensors";
const CONFIG_FILE: &str = "config.json";
const STATE_FILE: &str = "state.json";

const NETS: [&str; 4] = ["g_l", "g_e", "d_l", "d_e"];

/// Position of the training loop within the shuffled pair order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub epoch: usize,
    pub cursor: usize,
    pub order: Vec<usize>,
    pub shuffle_rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    step: u64,
    vocabulary: Vec<String>,
    intensity_levels: Option<usize>,
    noise_rng: ChaCha8Rng,
    optimizer_steps: [u64; 4],
    parameter_hashes: [String; 4],
    embedder_hash: Option<String>,
    loop_state: Option<LoopState>,
}

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt_{step}")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl Model {
    fn param_tensors(&self) -> HashMap<String, Tensor> {
        let mut all = HashMap::new();
        all.extend(self.g_l.params().export("g_l."));
        all.extend(self.g_e.params().export("g_e."));
        all.extend(self.d_l.params().export("d_l."));
        all.extend(self.d_e.params().export("d_e."));
        all
    }

    fn optimizers(&self) -> [&Adam; 4] {
        [&self.opt_gl, &self.opt_ge, &self.opt_dl, &self.opt_de]
    }
}

/// Write `root/ckpt_<step>/` atomically and return its path.
pub fn save_checkpoint(
    model: &Model,
    root: &Path,
    loop_state: Option<&LoopState>,
    embedder_hash: Option<String>,
) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let name = checkpoint_name(model.step);
    let final_dir = root.join(&name);
    let tmp = root.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    candle_core::safetensors::save(&model.param_tensors(), tmp.join(MODEL_FILE))?;
    let mut moments = HashMap::new();
    for (net, opt) in NETS.iter().zip(model.optimizers()) {
        moments.extend(opt.export(&format!("{net}.")));
    }
    if !moments.is_empty() {
        candle_core::safetensors::save(&moments, tmp.join(OPTIM_FILE))?;
    }
    write_json(&tmp.join(CONFIG_FILE), &model.cfg)?;
    let opts = model.optimizers();
    let state = StateFile {
        step: model.step,
        vocabulary: model.vocabulary.labels().to_vec(),
        intensity_levels: model.intensity_levels,
        noise_rng: model.noise_rng.clone(),
        optimizer_steps: [0, 1, 2, 3].map(|i| opts[i].step_count()),
        parameter_hashes: model.parameter_hashes()?,
        embedder_hash,
        loop_state: loop_state.cloned(),
    };
    write_json(&tmp.join(STATE_FILE), &state)?;

    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(final_dir)
}

/// A restored checkpoint.
pub struct Restored {
    pub model: Model,
    pub loop_state: Option<LoopState>,
    pub embedder_hash: Option<String>,
}

/// Restore a model (and loop position) from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<Restored> {
    if !dir.is_dir() {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint directory",
            dir.display()
        )));
    }
    let cfg: TrainConfig = read_json(&dir.join(CONFIG_FILE))?;
    cfg.validate()?;
    let state: StateFile = read_json(&dir.join(STATE_FILE))?;
    let vocabulary = Vocabulary::new(state.vocabulary)?;
    let mut model = Model::new(cfg.clone(), vocabulary, state.intensity_levels)?;

    let device = Device::Cpu;
    let tensors = candle_core::safetensors::load(dir.join(MODEL_FILE), &device)?;
    model.g_l.params().import(&tensors, "g_l.")?;
    model.g_e.params().import(&tensors, "g_e.")?;
    model.d_l.params().import(&tensors, "d_l.")?;
    model.d_e.params().import(&tensors, "d_e.")?;
    if model.parameter_hashes()? != state.parameter_hashes {
        return Err(Error::Checkpoint(format!(
            "parameters in {} do not match the recorded hashes",
            dir.display()
        )));
    }

    let optim_path = dir.join(OPTIM_FILE);
    let moments = if optim_path.exists() {
        candle_core::safetensors::load(&optim_path, &device)?
    } else {
        HashMap::new()
    };
    let adam = AdamConfig::new(cfg.lr, cfg.beta1, cfg.beta2);
    let [s_gl, s_ge, s_dl, s_de] = state.optimizer_steps;
    model.opt_gl = Adam::import(adam, s_gl, &moments, "g_l.")?;
    model.opt_ge = Adam::import(adam, s_ge, &moments, "g_e.")?;
    model.opt_dl = Adam::import(adam, s_dl, &moments, "d_l.")?;
    model.opt_de = Adam::import(adam, s_de, &moments, "d_e.")?;
    model.noise_rng = state.noise_rng;
    model.step = state.step;
    Ok(Restored {
        model,
        loop_state: state.loop_state,
        embedder_hash: state.embedder_hash,
    })
}

/// The checkpoint with the highest step under `root`, if any.
pub fn latest_checkpoint(root: &Path) -> Result<Option<PathBuf>> {
    if !root.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        let Some(step) = name
            .to_str()
            .and_then(|n| n.strip_prefix("ckpt_"))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| step > *b) {
            best = Some((step, entry.path()));
        }
    }
    Ok(best.map(|(_, p)| p))
}

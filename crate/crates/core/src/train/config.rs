use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::sequencing::FrequencyRule;
use std::collections::BTreeMap;
use std::path::Path;

/// Training recipe. Serialised as flat `key=value` lines; see
/// [`TrainConfig::to_kv`] for the key names.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub total_steps: usize,
    /// Ground-truth crop side; 0 trains on full frames.
    pub crop: usize,
    pub flip_h: bool,
    pub flip_v: bool,
    pub rot90: bool,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 8,
            lr_init: 0.01,
            lr_final: 1e-7,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: 300_000,
            crop: 128,
            flip_h: true,
            flip_v: true,
            rot90: true,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad value {v:?} for {key}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.lr_final < self.lr_init) {
            return Err(Error::Config(format!(
                "lr_final {} must be below lr_init {}",
                self.lr_final, self.lr_init
            )));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch_size and total_steps must be positive".into()));
        }
        let m = self.model.lr_multiple() * self.model.scale;
        if !self.crop.is_multiple_of(m) {
            return Err(Error::Config(format!("crop {} not divisible by {m}", self.crop)));
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let n = &self.model.net;
        let rule = match n.spe_rule {
            FrequencyRule::Scaled => "scaled",
            FrequencyRule::Floor => "floor",
        };
        [
            ("batch_size", self.batch_size.to_string()),
            ("lr_init", self.lr_init.to_string()),
            ("lr_final", self.lr_final.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("crop", self.crop.to_string()),
            ("flip_h", self.flip_h.to_string()),
            ("flip_v", self.flip_v.to_string()),
            ("rot90", self.rot90.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("scale", self.model.scale.to_string()),
            ("inputs", self.model.inputs.to_string()),
            ("channels", n.channels.to_string()),
            ("expand", n.expand.to_string()),
            ("state", n.state.to_string()),
            ("pyramid_levels", n.pyramid_levels.to_string()),
            ("res_blocks", n.res_blocks.to_string()),
            ("registers_per_frame", n.registers_per_frame.to_string()),
            ("use_registers", n.use_registers.to_string()),
            ("use_spe", n.use_spe.to_string()),
            ("spe_rule", rule.to_string()),
            ("tie_gfm_branches", n.tie_gfm_branches.to_string()),
            ("zero_init", n.zero_init.to_string()),
            ("attn_hidden", n.attn_hidden.to_string()),
            ("max_frames", n.max_frames.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// All keys, one `key=value` per line, sorted.
    pub fn to_kv(&self) -> String {
        self.to_map().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let n = &mut self.model.net;
        match key {
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr_init" => self.lr_init = parse(key, v)?,
            "lr_final" => self.lr_final = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "total_steps" => self.total_steps = parse(key, v)?,
            "crop" => self.crop = parse(key, v)?,
            "flip_h" => self.flip_h = parse_bool(key, v)?,
            "flip_v" => self.flip_v = parse_bool(key, v)?,
            "rot90" => self.rot90 = parse_bool(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "scale" => self.model.scale = parse(key, v)?,
            "inputs" => self.model.inputs = parse(key, v)?,
            "channels" => n.channels = parse(key, v)?,
            "expand" => n.expand = parse(key, v)?,
            "state" => n.state = parse(key, v)?,
            "pyramid_levels" => n.pyramid_levels = parse(key, v)?,
            "res_blocks" => n.res_blocks = parse(key, v)?,
            "registers_per_frame" => n.registers_per_frame = parse(key, v)?,
            "use_registers" => n.use_registers = parse_bool(key, v)?,
            "use_spe" => n.use_spe = parse_bool(key, v)?,
            "spe_rule" => {
                n.spe_rule = match v {
                    "scaled" => FrequencyRule::Scaled,
                    "floor" => FrequencyRule::Floor,
                    _ => return Err(Error::Config(format!("bad value {v:?} for {key}"))),
                }
            }
            "tie_gfm_branches" => n.tie_gfm_branches = parse_bool(key, v)?,
            "zero_init" => n.zero_init = parse_bool(key, v)?,
            "attn_hidden" => n.attn_hidden = parse(key, v)?,
            "max_frames" => n.max_frames = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Defaults overridden by `key=value` lines; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Like [`TrainConfig::from_kv`] over a map, ignoring keys that are not
    /// settings (such as checkpoint bookkeeping).
    pub fn from_map_lenient(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let known = cfg.to_map();
        for (k, v) in map {
            if known.contains_key(k) {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.model.net.use_spe = false;
        cfg.model.net.spe_rule = FrequencyRule::Floor;
        cfg.lr_init = 2e-3;
        let back = TrainConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::from_kv("nope=1").is_err());
        assert!(TrainConfig::from_kv("batch_size").is_err());
        assert!(TrainConfig::from_kv("use_spe=maybe").is_err());
        let cfg = TrainConfig::from_kv("# comment\nlr_final = 0.1\nlr_init=0.01\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig::from_kv("crop=100").unwrap();
        assert!(cfg.validate().is_err());
    }
}

//! JSON run configuration for training.
//!
//! ```json
//! {
//!   "hsrnet":   {"stages": 3, "irn_features": 64, "ssn_features_wide": 64,
//!                "ssn_features_narrow": 32, "cam_reduction": 4},
//!   "train":    {"lr": 0.001, "batch_size": 8, "max_steps": 1000,
//!                "patch_size": 32, "seed": 0, "eval_every": 100},
//!   "loss":     {"alpha": 0.0001},
//!   "data":     {"hsi": ["a.hsrc", "b.hsrc"], "split": 0.25},
//!   "srf":      {"path": "srf.csv", "tau": 0.01},
//!   "ablation": {"cam": "on", "srf_grouping": "on", "fast_loss": "on"}
//! }
//! ```
//!
//! `data` and `srf.path` are required. `data` takes either `hsi` (the MS
//! inputs are simulated through the SRF) or `pairs` of `{"msi", "hsi"}`
//! paths. The last `round(split · n)` scenes are held out for evaluation.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_cube, read_srf};
use crate::error::{Error, Result};
use crate::net::HsrnetConfig;
use crate::spectral::{group_bands, DegradationOperator, SpectralCube, Srf, DEFAULT_COVERAGE_TAU};
use crate::train::{LossConfig, LossKind, Pair, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    #[default]
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsrnetSection {
    pub stages: usize,
    pub irn_features: usize,
    pub ssn_features_wide: usize,
    pub ssn_features_narrow: usize,
    pub cam_reduction: usize,
}

impl Default for HsrnetSection {
    fn default() -> Self {
        let d = HsrnetConfig::new(2, 2, crate::spectral::BandGrouping::single(2));
        Self {
            stages: d.stages,
            irn_features: d.irn_features,
            ssn_features_wide: d.ssn_features_wide,
            ssn_features_narrow: d.ssn_features_narrow,
            cam_reduction: d.cam_reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub lr: f32,
    pub batch_size: usize,
    pub max_steps: usize,
    pub patch_size: usize,
    /// Seeds both parameter initialization and the shuffle schedule.
    pub seed: u64,
    pub eval_every: usize,
    pub augment: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lr: d.learning_rate,
            batch_size: d.batch_size,
            max_steps: d.max_steps,
            patch_size: d.patch_size,
            seed: d.seed,
            eval_every: d.eval_every,
            augment: d.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    pub alpha: f32,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            alpha: LossConfig::default().alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPaths {
    pub msi: PathBuf,
    pub hsi: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    #[serde(default)]
    pub hsi: Vec<PathBuf>,
    #[serde(default)]
    pub pairs: Vec<PairPaths>,
    #[serde(default)]
    pub split: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrfSection {
    pub path: PathBuf,
    #[serde(default = "default_tau")]
    pub tau: f32,
}

fn default_tau() -> f32 {
    DEFAULT_COVERAGE_TAU
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSection {
    pub cam: Switch,
    pub srf_grouping: Switch,
    /// Off trains on the L1 term alone.
    pub fast_loss: Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub hsrnet: HsrnetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossSection,
    pub data: DataSection,
    pub srf: SrfSection,
    #[serde(default)]
    pub ablation: AblationSection,
}

/// Everything `train` needs, loaded and checked.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub srf: Srf,
    pub phi: DegradationOperator,
    pub hsrnet: HsrnetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub loss_kind: LossKind,
    pub train_pairs: Vec<Pair>,
    pub eval_pairs: Vec<Pair>,
}

impl RunConfig {
    /// Parses the document; unknown keys come back as warnings (dotted paths).
    pub fn from_json(text: &str) -> Result<(Self, Vec<String>)> {
        let mut unknown = Vec::new();
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok((cfg, unknown))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (d.hsi.is_empty(), d.pairs.is_empty()) {
            (true, true) => return Err(Error::Config("data needs `hsi` or `pairs`".into())),
            (false, false) => return Err(Error::Config("data takes `hsi` or `pairs`, not both".into())),
            _ => {}
        }
        if !(0.0..1.0).contains(&d.split) {
            return Err(Error::Config(format!("data.split must be in [0, 1), got {}", d.split)));
        }
        if !(self.loss.alpha >= 0.0) {
            return Err(Error::Config(format!("loss.alpha must be >= 0, got {}", self.loss.alpha)));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.lr,
            batch_size: t.batch_size,
            max_steps: t.max_steps,
            patch_size: t.patch_size,
            seed: t.seed,
            eval_every: t.eval_every,
            augment: t.augment,
            ..TrainConfig::default()
        }
    }

    pub fn loss_config(&self) -> (LossConfig, LossKind) {
        let cfg = LossConfig {
            alpha: self.loss.alpha,
            ..LossConfig::default()
        };
        let kind = if self.ablation.fast_loss.is_on() {
            LossKind::L1Sam
        } else {
            LossKind::L1
        };
        (cfg, kind)
    }

    /// Loads the SRF and scenes, builds Φ and the band grouping, and splits the data.
    pub fn prepare(&self, base_dir: &Path) -> Result<PreparedRun> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let srf = read_srf(&resolve(&self.srf.path))?;
        let (hsis, msis): (Vec<SpectralCube>, Option<Vec<SpectralCube>>) = if self.data.pairs.is_empty() {
            let h = self.data.hsi.iter().map(|p| read_cube(&resolve(p))).collect::<Result<_>>()?;
            (h, None)
        } else {
            let h = self.data.pairs.iter().map(|p| read_cube(&resolve(&p.hsi))).collect::<Result<_>>()?;
            let m = self.data.pairs.iter().map(|p| read_cube(&resolve(&p.msi))).collect::<Result<_>>()?;
            (h, Some(m))
        };
        let wavelengths = hsis[0]
            .wavelengths_nm()
            .ok_or_else(|| Error::Config("HSI cubes must carry band wavelengths".into()))?
            .to_vec();
        if hsis.iter().any(|h| h.wavelengths_nm() != Some(wavelengths.as_slice())) {
            return Err(Error::Config("HSI cubes disagree on band wavelengths".into()));
        }
        let phi = DegradationOperator::from_srf(&srf, &wavelengths)?;
        let msis = match msis {
            Some(m) => {
                if let Some(bad) = m.iter().find(|c| c.channels() != srf.num_bands()) {
                    return Err(Error::shape(format!(
                        "MSI has {} bands, SRF has {}",
                        bad.channels(),
                        srf.num_bands()
                    )));
                }
                m
            }
            None => hsis.iter().map(|h| phi.apply(h)).collect::<Result<_>>()?,
        };
        let mut pairs = hsis
            .into_iter()
            .zip(msis)
            .map(|(h, m)| Pair::new(m, h))
            .collect::<Result<Vec<_>>>()?;
        let n = pairs.len();
        let held_out = ((self.data.split * n as f64).round() as usize).min(n - 1);
        let eval_pairs = pairs.split_off(n - held_out);

        let grouping = group_bands(&phi, self.srf.tau)?;
        let s = &self.hsrnet;
        let mut hsrnet = HsrnetConfig::new(phi.hs_bands(), phi.ms_bands(), grouping);
        hsrnet.stages = s.stages;
        hsrnet.irn_features = s.irn_features;
        hsrnet.ssn_features_wide = s.ssn_features_wide;
        hsrnet.ssn_features_narrow = s.ssn_features_narrow;
        hsrnet.cam_reduction = s.cam_reduction;
        hsrnet.seed = self.train.seed;
        hsrnet.use_cam = self.ablation.cam.is_on();
        hsrnet.use_srf_grouping = self.ablation.srf_grouping.is_on();
        hsrnet.hs_wavelengths_nm = Some(wavelengths);
        hsrnet.validate()?;
        let (loss, loss_kind) = self.loss_config();
        Ok(PreparedRun {
            srf,
            phi,
            hsrnet,
            train: self.train_config(),
            loss,
            loss_kind,
            train_pairs: pairs,
            eval_pairs,
        })
    }
}

//! The unrolled reconstruction network.
//!
//! An SRF-guided initial restoration block produces `x⁰` from the MS input;
//! each of the `K` stages then computes
//!
//! ```text
//! x_k = T(x_{k-1}) + w_ε ⊙ x⁰ + w_εμ ⊙ SSN(x_{k-1})
//! ```
//!
//! where `T` is a `C → C` 3×3 convolution, `SSN` the spatial-spectral prior
//! block, and `w_ε`, `w_εμ` per-channel weights from two channel-attention
//! blocks (or two learnable scalars when attention is disabled).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{PoolMode, Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::{spectral_gradient_cube, BandGrouping, SpectralCube};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsrnetConfig {
    pub stages: usize,
    pub hs_channels: usize,
    pub ms_channels: usize,
    pub irn_features: usize,
    pub ssn_features_wide: usize,
    pub ssn_features_narrow: usize,
    pub cam_reduction: usize,
    pub grouping: BandGrouping,
    pub seed: u64,
    /// Channel attention for the step weights; off means per-stage scalars.
    pub use_cam: bool,
    /// Grouped IRN heads; off means one head for all bands.
    pub use_srf_grouping: bool,
    pub hs_wavelengths_nm: Option<Vec<f32>>,
}

impl HsrnetConfig {
    /// Desk-scale defaults: three stages, 64/64/32 features, reduction 4.
    pub fn new(hs_channels: usize, ms_channels: usize, grouping: BandGrouping) -> Self {
        Self {
            stages: 3,
            hs_channels,
            ms_channels,
            irn_features: 64,
            ssn_features_wide: 64,
            ssn_features_narrow: 32,
            cam_reduction: 4,
            grouping,
            seed: 0,
            use_cam: true,
            use_srf_grouping: true,
            hs_wavelengths_nm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Config("stages must be >= 1".into()));
        }
        if self.irn_features == 0
            || self.ssn_features_wide == 0
            || self.ssn_features_narrow == 0
            || self.cam_reduction == 0
        {
            return Err(Error::Config("feature counts and cam_reduction must be >= 1".into()));
        }
        if self.ms_channels < 2 || self.hs_channels < self.ms_channels {
            return Err(Error::Config(format!(
                "need C >= c >= 2, got C = {}, c = {}",
                self.hs_channels, self.ms_channels
            )));
        }
        self.grouping.validate(self.hs_channels)?;
        if let Some(wl) = &self.hs_wavelengths_nm {
            crate::spectral::check_wavelengths(wl, self.hs_channels)?;
        }
        Ok(())
    }

    pub fn cam_hidden(&self) -> usize {
        self.hs_channels.div_ceil(self.cam_reduction)
    }
}

/// Named learnable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter {name}")));
        }
        self.params.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Checks that the store holds exactly the tensors `cfg` calls for.
    pub fn check_against(&self, cfg: &HsrnetConfig) -> Result<()> {
        let expected = param_shapes(cfg);
        if expected.len() != self.params.len() {
            return Err(Error::shape(format!(
                "architecture has {} tensors, store has {}",
                expected.len(),
                self.params.len()
            )));
        }
        for (name, shape) in &expected {
            match self.params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(format!(
                        "{name}: expected {shape:?}, found {:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::shape(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Glorot,
    Zero,
    NearIdentity,
    Constant(f32),
}

struct Layer {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn conv_layers(out: &mut Vec<Layer>, prefix: &str, out_ch: usize, in_ch: usize, k: usize, kernel_init: Init) {
    out.push(Layer {
        name: format!("{prefix}.kernel"),
        shape: vec![out_ch, in_ch, k, k],
        init: kernel_init,
    });
    out.push(Layer {
        name: format!("{prefix}.bias"),
        shape: vec![out_ch],
        init: Init::Zero,
    });
}

fn architecture(cfg: &HsrnetConfig) -> Vec<Layer> {
    let (c_hs, c_ms) = (cfg.hs_channels, cfg.ms_channels);
    let f = cfg.irn_features;
    let mut layers = Vec::new();
    conv_layers(&mut layers, "irn.conv1", f, 2 * c_ms - 1, 3, Init::Glorot);
    if cfg.use_srf_grouping {
        for (g, group) in cfg.grouping.groups.iter().enumerate() {
            conv_layers(
                &mut layers,
                &format!("irn.group{g}"),
                group.hs_band_indices.len(),
                f,
                3,
                Init::Glorot,
            );
        }
    } else {
        conv_layers(&mut layers, "irn.head", c_hs, f, 3, Init::Glorot);
    }
    let hidden = cfg.cam_hidden();
    for k in 1..=cfg.stages {
        let s = format!("stage{k}");
        conv_layers(&mut layers, &format!("{s}.T"), c_hs, c_hs, 3, Init::NearIdentity);
        conv_layers(&mut layers, &format!("{s}.ssn.conv1"), cfg.ssn_features_wide, c_hs, 3, Init::Glorot);
        conv_layers(
            &mut layers,
            &format!("{s}.ssn.conv2"),
            cfg.ssn_features_narrow,
            cfg.ssn_features_wide,
            3,
            Init::Glorot,
        );
        conv_layers(&mut layers, &format!("{s}.ssn.conv3"), c_hs, cfg.ssn_features_narrow, 1, Init::Glorot);
        if cfg.use_cam {
            for cam in ["cam_eps", "cam_epsmu"] {
                conv_layers(&mut layers, &format!("{s}.{cam}.conv1"), hidden, c_hs, 1, Init::Glorot);
                conv_layers(&mut layers, &format!("{s}.{cam}.conv2"), c_hs, hidden, 1, Init::Glorot);
            }
        } else {
            for w in ["eps", "epsmu"] {
                layers.push(Layer {
                    name: format!("{s}.{w}.scalar"),
                    shape: vec![1],
                    init: Init::Constant(0.5),
                });
            }
        }
    }
    layers
}

/// Every parameter name and shape the configuration calls for, in
/// architecture order.
pub fn param_shapes(cfg: &HsrnetConfig) -> Vec<(String, Vec<usize>)> {
    architecture(cfg).into_iter().map(|l| (l.name, l.shape)).collect()
}

pub const T_INIT_NOISE: f32 = 1e-3;

/// Glorot-uniform kernels, zero biases, near-identity `T`, deterministic in
/// `cfg.seed`.
pub fn init_params(cfg: &HsrnetConfig) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    for layer in architecture(cfg) {
        let mut t = Tensor::zeros(&layer.shape);
        match layer.init {
            Init::Zero => {}
            Init::Constant(v) => t.data_mut().fill(v),
            Init::Glorot => {
                let [o, i, kh, kw] = layer.shape[..] else { unreachable!() };
                let bound = (6.0 / ((i + o) * kh * kw) as f32).sqrt();
                for v in t.data_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
            Init::NearIdentity => {
                let [o, i, k, _] = layer.shape[..] else { unreachable!() };
                let data = t.data_mut();
                for v in data.iter_mut() {
                    *v = rng.random_range(-T_INIT_NOISE..T_INIT_NOISE);
                }
                let center = k / 2;
                for ch in 0..o.min(i) {
                    data[((ch * i + ch) * k + center) * k + center] += 1.0;
                }
            }
        }
        store.insert(layer.name, t)?;
    }
    Ok(store)
}

/// A parameter store bound onto a tape, exposing the network's blocks.
pub struct Hsrnet<'c> {
    cfg: &'c HsrnetConfig,
    vars: BTreeMap<String, Var>,
}

impl<'c> Hsrnet<'c> {
    pub fn bind(tape: &mut Tape, cfg: &'c HsrnetConfig, params: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        params.check_against(cfg)?;
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), tape.param(name.clone(), t.clone())))
            .collect();
        Ok(Self { cfg, vars })
    }

    pub fn config(&self) -> &HsrnetConfig {
        self.cfg
    }

    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    fn conv(&self, tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
        let k = self.var(&format!("{prefix}.kernel"));
        let b = self.var(&format!("{prefix}.bias"));
        tape.conv2d(x, k, b)
    }

    /// Initial restoration `x⁰ = IRN(y)`.
    pub fn irn(&self, tape: &mut Tape, y: &SpectralCube) -> Result<Var> {
        if y.channels() != self.cfg.ms_channels {
            return Err(Error::shape(format!(
                "network expects {} MS bands, input has {}",
                self.cfg.ms_channels,
                y.channels()
            )));
        }
        let grad_cube = spectral_gradient_cube(y)?;
        let input = tape.leaf(grad_cube.to_tensor());
        let features = self.conv(tape, "irn.conv1", input)?;
        let features = tape.relu(features);
        if !self.cfg.use_srf_grouping {
            return self.conv(tape, "irn.head", features);
        }
        let heads = (0..self.cfg.grouping.groups.len())
            .map(|g| self.conv(tape, &format!("irn.group{g}"), features))
            .collect::<Result<Vec<_>>>()?;
        let stacked = tape.concat_channels(&heads)?;
        // scatter the concatenated group outputs back to band order
        let order = self.cfg.grouping.concat_order();
        let mut position = vec![0; order.len()];
        for (k, &band) in order.iter().enumerate() {
            position[band] = k;
        }
        tape.select_channels(stacked, &position)
    }

    /// Spatial-spectral prior block of stage `k`.
    pub fn ssn(&self, tape: &mut Tape, k: usize, x: Var) -> Result<Var> {
        let s = format!("stage{k}.ssn");
        let h = self.conv(tape, &format!("{s}.conv1"), x)?;
        let h = tape.relu(h);
        let h = self.conv(tape, &format!("{s}.conv2"), h)?;
        let h = tape.relu(h);
        let h = self.conv(tape, &format!("{s}.conv3"), h)?;
        tape.add(h, x)
    }

    /// Channel attention weights in (0, 1), shape `[C]`.
    pub fn cam(&self, tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
        let mut branches = Vec::with_capacity(2);
        for mode in [PoolMode::Max, PoolMode::Mean] {
            let p = tape.global_pool(x, mode)?;
            let h = self.conv(tape, &format!("{prefix}.conv1"), p)?;
            let h = tape.relu(h);
            branches.push(self.conv(tape, &format!("{prefix}.conv2"), h)?);
        }
        let logits = tape.add(branches[0], branches[1])?;
        let w = tape.sigmoid(logits);
        tape.reshape(w, &[self.cfg.hs_channels])
    }

    /// Weights `x` by attention computed from `source` (or by a scalar).
    fn weighted(&self, tape: &mut Tape, k: usize, which: &str, source: Var, x: Var) -> Result<Var> {
        if self.cfg.use_cam {
            let w = self.cam(tape, &format!("stage{k}.cam_{which}"), source)?;
            tape.channel_scale(x, w)
        } else {
            let s = self.var(&format!("stage{k}.{which}.scalar"));
            tape.scale_by(x, s)
        }
    }

    /// One unrolled update of stage `k` (1-based).
    pub fn stage(&self, tape: &mut Tape, k: usize, xk: Var, x0: Var) -> Result<Var> {
        if tape.value(xk).shape() != tape.value(x0).shape() {
            return Err(Error::shape(format!(
                "stage input {:?} and x0 {:?} differ",
                tape.value(xk).shape(),
                tape.value(x0).shape()
            )));
        }
        let transformed = self.conv(tape, &format!("stage{k}.T"), xk)?;
        let prior = self.ssn(tape, k, xk)?;
        let init_term = self.weighted(tape, k, "eps", x0, x0)?;
        let prior_term = self.weighted(tape, k, "epsmu", prior, prior)?;
        let s = tape.add(transformed, init_term)?;
        tape.add(s, prior_term)
    }

    pub fn forward(&self, tape: &mut Tape, y: &SpectralCube) -> Result<Var> {
        let x0 = self.irn(tape, y)?;
        let mut x = x0;
        for k in 1..=self.cfg.stages {
            x = self.stage(tape, k, x, x0)?;
        }
        Ok(x)
    }
}

/// Runs the network on `y` without keeping the graph. The output is not clamped.
pub fn hsrnet_forward(y: &SpectralCube, cfg: &HsrnetConfig, params: &ParamStore) -> Result<SpectralCube> {
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, cfg, params)?;
    let out = net.forward(&mut tape, y)?;
    SpectralCube::from_tensor(tape.value(out))?.with_wavelengths(cfg.hs_wavelengths_nm.clone())
}

#[cfg(test)]
mod tests;

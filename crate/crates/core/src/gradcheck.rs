//! Central finite-difference checks of the tape's gradients.
//!
//! Every case builds a graph from a list of input tensors and contracts the
//! output with a fixed random tensor `R`, so the checked scalar is
//! `f = Σ out ⊙ R`. Analytic gradients come from one backward pass; numeric
//! ones from `(f(x + h e_i) − f(x − h e_i)) / 2h` evaluated in `f64` over the
//! `f32` forward values.
//!
//! Coordinates with a kink (relu, max pooling, a clamp) inside the step are
//! skipped; a case fails if more than a quarter of its coordinates have to
//! be skipped.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{BinaryOp, PoolMode, Tape, Var};
use crate::error::Result;
use crate::net::{init_params, param_shapes, Hsrnet, HsrnetConfig, ParamStore};
use crate::spectral::{BandGroup, BandGrouping, SpectralCube};
use crate::tensor::Tensor;
use crate::train::{record_loss, LossConfig, LossKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub step: f64,
    /// Step for the network cases, where a bias nudge moves many relu
    /// inputs at once and a wide step averages over their kinks.
    pub network_step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor, so near-zero gradients are compared absolutely.
    pub magnitude_floor: f64,
    /// Coordinates sampled per input tensor (all of them for smaller tensors).
    pub coords_per_input: usize,
    pub max_skip_fraction: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            step: 1e-2,
            network_step: 3e-3,
            tolerance: 2e-2,
            magnitude_floor: 1e-2,
            coords_per_input: 20,
            max_skip_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Input tensor and flat index of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    #[serde(serialize_with = "as_secs")]
    pub elapsed: Duration,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

/// Builds the graph on `tape` from the given inputs; returns the output and
/// the variables whose gradients are checked, one per input tensor.
pub type Builder<'a> = dyn Fn(&mut Tape, &[Tensor]) -> Result<(Var, Vec<Var>)> + 'a;

fn projected(build: &Builder<'_>, inputs: &[Tensor], r: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let (out, _) = build(&mut tape, inputs)?;
    Ok(tape
        .value(out)
        .data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| *a as f64 * *b as f64)
        .sum())
}

fn evaluate_at(build: &Builder<'_>, inputs: &mut [Tensor], r: &Tensor, t: usize, i: usize, x: f64) -> Result<(f64, f64)> {
    let orig = inputs[t].data()[i];
    inputs[t].data_mut()[i] = x as f32;
    // the coordinate actually used after rounding to f32
    let actual = inputs[t].data()[i] as f64;
    let f = projected(build, inputs, r)?;
    inputs[t].data_mut()[i] = orig;
    Ok((actual, f))
}

/// Finite-difference estimate at one coordinate plus a kink indicator.
///
/// With samples at `x + {−h, −h/2, 0, h/2, h}`, a smooth function has equal
/// slope changes over the left and right halves, and the change from the
/// backward to the forward slope equals their sum. A kink anywhere inside
/// the step breaks at least one of these; the returned indicator is the
/// larger violation, in slope units.
fn differences(
    build: &Builder<'_>,
    inputs: &mut [Tensor],
    r: &Tensor,
    f0: f64,
    t: usize,
    i: usize,
    h: f64,
) -> Result<(f64, f64)> {
    let x0 = inputs[t].data()[i] as f64;
    let mut pts = [(0.0, 0.0); 5];
    for (k, off) in [-h, -h / 2.0, 0.0, h / 2.0, h].into_iter().enumerate() {
        pts[k] = if off == 0.0 {
            (x0, f0)
        } else {
            evaluate_at(build, inputs, r, t, i, x0 + off)?
        };
    }
    let slope = |a: usize, b: usize| (pts[b].1 - pts[a].1) / (pts[b].0 - pts[a].0);
    let central = slope(0, 4);
    let change_left = slope(1, 2) - slope(0, 1);
    let change_right = slope(3, 4) - slope(2, 3);
    let change_whole = slope(2, 4) - slope(0, 2);
    let kink = (change_right - change_left)
        .abs()
        .max((change_whole - change_left - change_right).abs());
    Ok((central, kink))
}

/// Checks one graph against finite differences.
///
/// A coordinate whose kink indicator exceeds the tolerance is skipped. Errors are relative
/// to `max(|analytic|, |numeric|, floor)`, where the floor is the larger of
/// `magnitude_floor` and 1% of the RMS analytic gradient of the case; the
/// `f32` forward pass cannot resolve differences much below that.
pub fn check_case(
    name: &str,
    mut inputs: Vec<Tensor>,
    build: &Builder<'_>,
    cfg: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let mut tape = Tape::new();
    let (out, vars) = build(&mut tape, &inputs)?;
    let r = Tensor::uniform(tape.value(out).shape(), -1.0, 1.0, rng);
    let r_leaf = tape.leaf(r.clone());
    let prod = tape.mul(out, r_leaf)?;
    let f = tape.sum(prod);
    let grads = tape.backward(f)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();
    let f0 = projected(build, &inputs, &r)?;

    let (sq, count) = analytic.iter().fold((0.0f64, 0usize), |(s, n), g| {
        (s + g.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>(), n + g.numel())
    });
    let floor = cfg.magnitude_floor.max(1e-2 * (sq / count.max(1) as f64).sqrt());

    let mut checked = 0;
    let mut skipped = 0;
    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    for t in 0..inputs.len() {
        let n = inputs[t].numel();
        let coords: Vec<usize> = if n <= cfg.coords_per_input {
            (0..n).collect()
        } else {
            let mut c = sample(rng, n, cfg.coords_per_input).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let (fd, kink) = differences(build, &mut inputs, &r, f0, t, i, cfg.step)?;
            if kink > cfg.tolerance * fd.abs().max(floor) {
                skipped += 1;
                continue;
            }
            let a = analytic[t].data()[i] as f64;
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            checked += 1;
            if err > max_rel_err {
                max_rel_err = err;
                worst = Some((t, i));
            }
        }
    }
    let total = checked + skipped;
    let passed = checked > 0
        && max_rel_err < cfg.tolerance
        && (skipped as f64) <= cfg.max_skip_fraction * total as f64;
    Ok(CheckResult {
        name: name.to_string(),
        checked,
        skipped,
        max_rel_err,
        worst,
        passed,
    })
}

fn leaves(tape: &mut Tape, inputs: &[Tensor]) -> Vec<Var> {
    inputs.iter().map(|t| tape.leaf(t.clone())).collect()
}

/// Uniform values with magnitude in `[0.1, 1]`, keeping relu inputs off the kink.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::uniform(shape, 0.1, 1.0, rng);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// The configuration of the network case: two MS bands in, four HS bands
/// out, two band groups, narrow layers.
pub fn small_network_config(stages: usize, ablated: bool) -> HsrnetConfig {
    let grouping = BandGrouping {
        groups: vec![
            BandGroup {
                hs_band_indices: vec![0, 2],
                coverage_signature: vec![0],
            },
            BandGroup {
                hs_band_indices: vec![1, 3],
                coverage_signature: vec![0, 1],
            },
        ],
    };
    let mut cfg = HsrnetConfig::new(4, 2, grouping);
    cfg.stages = stages;
    cfg.irn_features = 4;
    cfg.ssn_features_wide = 5;
    cfg.ssn_features_narrow = 3;
    cfg.cam_reduction = 2;
    cfg.use_cam = !ablated;
    cfg.use_srf_grouping = !ablated;
    cfg
}

fn network_case(
    name: &str,
    cfg: &HsrnetConfig,
    gc: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let mut params = init_params(cfg)?;
    // move off the near-identity start so every block carries signal
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    // a small image keeps the number of relu units, and so of kinks within
    // a step of the sample point, low
    let y = SpectralCube::from_tensor(&Tensor::uniform(&[cfg.ms_channels, 4, 4], 0.0, 1.0, rng))?;
    let names: Vec<String> = param_shapes(cfg).into_iter().map(|(n, _)| n).collect();
    let inputs: Vec<Tensor> = names.iter().map(|n| params.get(n).expect("named param").clone()).collect();
    let build = |tape: &mut Tape, inputs: &[Tensor]| -> Result<(Var, Vec<Var>)> {
        let mut store = ParamStore::new();
        for (n, t) in names.iter().zip(inputs) {
            store.insert(n.clone(), t.clone())?;
        }
        let net = Hsrnet::bind(tape, cfg, &store)?;
        let out = net.forward(tape, &y)?;
        let vars = names.iter().map(|n| net.var(n)).collect();
        Ok((out, vars))
    };
    let gc = GradcheckConfig {
        step: gc.network_step,
        ..*gc
    };
    check_case(name, inputs, &build, &gc, rng)
}

/// Every primitive, the bulk loss, and the full network with two stages.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut results = Vec::new();
    let rng = &mut rng;

    macro_rules! case {
        ($name:expr, $inputs:expr, $build:expr) => {{
            let inputs: Vec<Tensor> = $inputs;
            results.push(check_case($name, inputs, &$build, cfg, rng)?);
        }};
    }

    let x = Tensor::uniform(&[3, 5, 6], -1.0, 1.0, rng);
    let k = Tensor::uniform(&[2, 3, 3, 3], -0.5, 0.5, rng);
    let b = Tensor::uniform(&[2], -0.5, 0.5, rng);
    case!("conv2d_3x3", vec![x.clone(), k, b.clone()], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.conv2d(v[0], v[1], v[2])?, v))
    });
    let k1 = Tensor::uniform(&[2, 3, 1, 1], -0.5, 0.5, rng);
    case!("conv2d_1x1", vec![x, k1, b], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.conv2d(v[0], v[1], v[2])?, v))
    });
    case!("relu", vec![away_from_zero(&[2, 4, 4], rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.relu(v[0]), v))
    });
    case!("sigmoid", vec![Tensor::uniform(&[2, 3, 3], -3.0, 3.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.sigmoid(v[0]), v))
    });
    for (name, mode) in [("global_pool_max", PoolMode::Max), ("global_pool_mean", PoolMode::Mean)] {
        case!(name, vec![Tensor::uniform(&[3, 4, 5], -1.0, 1.0, rng)], move |t: &mut Tape, i: &[Tensor]| {
            let v = leaves(t, i);
            Ok((t.global_pool(v[0], mode)?, v))
        });
    }
    for (name, op) in [("add", BinaryOp::Add), ("mul", BinaryOp::Mul)] {
        let pair = vec![
            Tensor::uniform(&[2, 3, 4], -1.0, 1.0, rng),
            Tensor::uniform(&[2, 3, 4], -1.0, 1.0, rng),
        ];
        case!(name, pair, move |t: &mut Tape, i: &[Tensor]| {
            let v = leaves(t, i);
            Ok((t.elementwise(v[0], v[1], op)?, v))
        });
    }
    case!("scale", vec![Tensor::uniform(&[2, 3, 3], -1.0, 1.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.scale(v[0], -1.7), v))
    });
    case!(
        "scale_by",
        vec![Tensor::uniform(&[2, 3, 3], -1.0, 1.0, rng), Tensor::uniform(&[1], 0.2, 1.0, rng)],
        |t: &mut Tape, i: &[Tensor]| {
            let v = leaves(t, i);
            Ok((t.scale_by(v[0], v[1])?, v))
        }
    );
    case!(
        "channel_scale",
        vec![Tensor::uniform(&[3, 3, 4], -1.0, 1.0, rng), Tensor::uniform(&[3], 0.0, 1.0, rng)],
        |t: &mut Tape, i: &[Tensor]| {
            let v = leaves(t, i);
            Ok((t.channel_scale(v[0], v[1])?, v))
        }
    );
    case!(
        "concat_channels",
        vec![Tensor::uniform(&[1, 3, 3], -1.0, 1.0, rng), Tensor::uniform(&[2, 3, 3], -1.0, 1.0, rng)],
        |t: &mut Tape, i: &[Tensor]| {
            let v = leaves(t, i);
            Ok((t.concat_channels(&v)?, v))
        }
    );
    case!("select_channels", vec![Tensor::uniform(&[3, 2, 3], -1.0, 1.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.select_channels(v[0], &[2, 0, 1, 0])?, v))
    });
    case!("reshape", vec![Tensor::uniform(&[3, 1, 1], -1.0, 1.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.reshape(v[0], &[3])?, v))
    });
    case!("sum", vec![Tensor::uniform(&[2, 3, 3], -1.0, 1.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.sum(v[0]), v))
    });
    case!("mean", vec![Tensor::uniform(&[2, 3, 3], -1.0, 1.0, rng)], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((t.mean(v[0]), v))
    });

    // bulk loss with a visible angle term (alpha = 1); targets are offset so
    // neither the L1 kink nor the arccos clamp is near
    let target = Tensor::uniform(&[5, 4, 4], 0.2, 1.0, rng);
    let mut pred = target.clone();
    for v in pred.data_mut() {
        let d: f32 = rng.random_range(0.05..0.3);
        *v += if rng.random_bool(0.5) { d } else { -d };
    }
    let loss_cfg = LossConfig {
        alpha: 1.0,
        ..LossConfig::default()
    };
    case!("loss_fast", vec![pred], |t: &mut Tape, i: &[Tensor]| {
        let v = leaves(t, i);
        Ok((record_loss(t, v[0], &target, &loss_cfg, LossKind::L1Sam)?, v))
    });

    results.push(network_case("hsrnet_k2", &small_network_config(2, false), cfg, rng)?);
    results.push(network_case("hsrnet_k2_ablated", &small_network_config(2, true), cfg, rng)?);

    Ok(SuiteReport {
        results,
        elapsed: start.elapsed(),
    })
}

use super::*;
use crate::presets::{cave_like_srf, wavelength_grid};
use crate::spectral::{group_bands, BandGroup, DegradationOperator, DEFAULT_COVERAGE_TAU};
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeSet;

fn toy_grouping() -> BandGrouping {
    BandGrouping {
        groups: vec![
            BandGroup { hs_band_indices: vec![0, 2, 5], coverage_signature: vec![0] },
            BandGroup { hs_band_indices: vec![1, 3, 4], coverage_signature: vec![1, 2] },
        ],
    }
}

fn toy_config(stages: usize) -> HsrnetConfig {
    let mut cfg = HsrnetConfig::new(6, 3, toy_grouping());
    cfg.stages = stages;
    cfg.irn_features = 5;
    cfg.ssn_features_wide = 4;
    cfg.ssn_features_narrow = 3;
    cfg.cam_reduction = 2;
    cfg.seed = 17;
    cfg
}

fn rgb_config() -> HsrnetConfig {
    let phi = DegradationOperator::from_srf(&cave_like_srf(), &wavelength_grid(400.0, 700.0, 31)).unwrap();
    HsrnetConfig::new(31, 3, group_bands(&phi, DEFAULT_COVERAGE_TAU).unwrap())
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_msi(seed: u64, w: usize, h: usize, c: usize) -> SpectralCube {
    let mut rng = rng_for(seed);
    SpectralCube::new(w, h, c, (0..w * h * c).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn random_tensor(seed: u64, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, 0.0, 1.0, &mut rng_for(seed))
}

fn close(a: &Tensor, b: &Tensor, tol: f32) {
    assert_eq!(a.shape(), b.shape());
    let d = a.max_abs_diff(b);
    assert!(d < tol, "max difference {d}");
}

fn zero_matching(params: &mut ParamStore, pred: impl Fn(&str) -> bool) {
    for (name, t) in params.iter_mut() {
        if pred(name) {
            t.data_mut().fill(0.0);
        }
    }
}

#[test]
fn parameter_count_matches_hand_enumeration() {
    // C = 31, c = 3, K = 3, widths 64/64/32, CAM hidden ceil(31/4) = 8
    //   irn.conv1            64·5·9 + 64   =   2944
    //   group heads          31·64·9 + 31  =  17887 (any partition)
    //   per stage: T         31·31·9 + 31  =   8680
    //              ssn.conv1 64·31·9 + 64  =  17920
    //              ssn.conv2 32·64·9 + 32  =  18464
    //              ssn.conv3 31·32 + 31    =   1023
    //              2 CAMs    2·(8·31 + 8 + 31·8 + 31) = 1070
    // total 2944 + 17887 + 3·47157 = 162302
    let cfg = rgb_config();
    let params = init_params(&cfg).unwrap();
    assert_eq!(params.num_values(), 162_302);
    let mut no_cam = cfg.clone();
    no_cam.use_cam = false;
    // each stage trades 1070 CAM values for two scalars
    assert_eq!(init_params(&no_cam).unwrap().num_values(), 162_302 - 3 * 1068);
    let mut no_srf = cfg;
    no_srf.use_srf_grouping = false;
    assert_eq!(init_params(&no_srf).unwrap().num_values(), 162_302);
}

#[test]
fn names_and_shapes() {
    let cfg = rgb_config();
    let params = init_params(&cfg).unwrap();
    let shape = |n: &str| params.get(n).unwrap().shape().to_vec();
    assert_eq!(shape("irn.conv1.kernel"), vec![64, 5, 3, 3]);
    assert_eq!(shape("irn.group0.kernel"), vec![6, 64, 3, 3]);
    assert_eq!(shape("irn.group2.bias"), vec![19]);
    assert_eq!(shape("stage3.T.kernel"), vec![31, 31, 3, 3]);
    assert_eq!(shape("stage2.ssn.conv3.kernel"), vec![31, 32, 1, 1]);
    assert_eq!(shape("stage3.cam_eps.conv1.kernel"), vec![8, 31, 1, 1]);
    assert_eq!(shape("stage1.cam_epsmu.conv2.kernel"), vec![31, 8, 1, 1]);
    assert!(params.get("stage4.T.kernel").is_none());
}

#[test]
fn same_seed_same_store() {
    let cfg = toy_config(2);
    assert_eq!(init_params(&cfg).unwrap(), init_params(&cfg).unwrap());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(init_params(&cfg).unwrap(), init_params(&other).unwrap());
}

#[test]
fn init_distributions() {
    let cfg = rgb_config();
    let params = init_params(&cfg).unwrap();
    for (name, t) in params.iter() {
        if name.ends_with(".bias") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        } else if name.ends_with("T.kernel") {
            continue;
        } else {
            let s = t.shape();
            let bound = (6.0 / ((s[0] + s[1]) * s[2] * s[3]) as f32).sqrt();
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
        }
    }
}

#[test]
fn t_starts_near_identity() {
    let cfg = rgb_config();
    let params = init_params(&cfg).unwrap();
    let kernel = params.get("stage1.T.kernel").unwrap();
    for o in 0..31 {
        for i in 0..31 {
            for p in 0..9 {
                let v = kernel.data()[(o * 31 + i) * 9 + p];
                let target = if o == i && p == 4 { 1.0 } else { 0.0 };
                assert!((v - target).abs() <= T_INIT_NOISE);
            }
        }
    }
    let mut tape = Tape::new();
    let x = tape.leaf(random_tensor(3, &[31, 8, 8]));
    let k = tape.leaf(kernel.clone());
    let b = tape.leaf(params.get("stage1.T.bias").unwrap().clone());
    let y = tape.conv2d(x, k, b).unwrap();
    // 279 taps of noise below 1e-3 each; the typical deviation is a few 1e-3
    let (xv, yv) = (tape.value(x).data(), tape.value(y).data());
    let rms = (xv.iter().zip(yv).map(|(a, b)| (a - b).powi(2)).sum::<f32>() / xv.len() as f32).sqrt();
    assert!(rms < 1e-2, "rms deviation {rms}");
}

#[test]
fn config_validation() {
    let mut cfg = toy_config(1);
    assert!(cfg.validate().is_ok());
    cfg.stages = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = toy_config(1);
    cfg.ssn_features_narrow = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = toy_config(1);
    cfg.grouping = BandGrouping::single(5);
    assert!(cfg.validate().is_err());
    let mut cfg = toy_config(1);
    cfg.ms_channels = 7;
    assert!(cfg.validate().is_err());
}

#[test]
fn store_checked_against_config() {
    let cfg = toy_config(2);
    let mut params = init_params(&cfg).unwrap();
    assert!(params.check_against(&toy_config(1)).is_err());
    *params.get_mut("stage1.T.bias").unwrap() = Tensor::zeros(&[5]);
    assert!(params.check_against(&cfg).is_err());
    assert!(params.insert("stage1.T.bias", Tensor::zeros(&[6])).is_err());
}

#[test]
fn zero_input_gives_zero_x0() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
    let x0 = net.irn(&mut tape, &SpectralCube::zeros(4, 3, 3)).unwrap();
    assert_eq!(tape.value(x0).shape(), &[6, 3, 4]);
    assert!(tape.value(x0).data().iter().all(|&v| v == 0.0));
}

#[test]
fn irn_equals_independent_group_branches() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let y = random_msi(1, 5, 4, 3);
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
    let x0 = net.irn(&mut tape, &y).unwrap();
    let got = tape.value(x0).clone();

    // recompute each branch on a fresh tape and scatter by hand
    let mut t = Tape::new();
    let p = |t: &mut Tape, n: &str| t.leaf(params.get(n).unwrap().clone());
    let input = t.leaf(spectral_gradient_cube(&y).unwrap().to_tensor());
    let (k, b) = (p(&mut t, "irn.conv1.kernel"), p(&mut t, "irn.conv1.bias"));
    let f = t.conv2d(input, k, b).unwrap();
    let f = t.relu(f);
    let plane = 20;
    let mut want = vec![f32::NAN; 6 * plane];
    for (g, group) in cfg.grouping.groups.iter().enumerate() {
        let k = p(&mut t, &format!("irn.group{g}.kernel"));
        let b = p(&mut t, &format!("irn.group{g}.bias"));
        let out = t.conv2d(f, k, b).unwrap();
        for (slot, &band) in group.hs_band_indices.iter().enumerate() {
            want[band * plane..(band + 1) * plane]
                .copy_from_slice(&t.value(out).data()[slot * plane..(slot + 1) * plane]);
        }
    }
    // every band written exactly once
    assert!(want.iter().all(|v| v.is_finite()));
    close(&got, &Tensor::new(vec![6, 4, 5], want).unwrap(), 1e-6);
}

#[test]
fn irn_rejects_wrong_band_count() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    assert!(matches!(
        hsrnet_forward(&SpectralCube::zeros(4, 4, 4), &cfg, &params),
        Err(Error::InvalidShape(_))
    ));
}

#[test]
fn ssn_with_zero_kernels_is_the_skip() {
    let cfg = toy_config(1);
    let mut params = init_params(&cfg).unwrap();
    zero_matching(&mut params, |n| n.contains(".ssn."));
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
    let x = tape.leaf(random_tensor(2, &[6, 3, 7]));
    let out = net.ssn(&mut tape, 1, x).unwrap();
    assert_eq!(tape.value(out), tape.value(x));
}

#[test]
fn one_by_one_layer_commutes_with_pixel_permutation() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let narrow = random_tensor(4, &[3, 4, 4]);
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..16).collect();
        p.reverse();
        p.swap(2, 9);
        p
    };
    let permute = |t: &Tensor, inverse: bool| {
        let (c, n) = (t.shape()[0], 16);
        let mut out = vec![0.0; c * n];
        for ch in 0..c {
            for (dst, &src) in perm.iter().enumerate() {
                let (d, s) = if inverse { (src, dst) } else { (dst, src) };
                out[ch * n + d] = t.data()[ch * n + s];
            }
        }
        Tensor::new(t.shape().to_vec(), out).unwrap()
    };
    let conv3 = |x: Tensor| {
        let mut tape = Tape::new();
        let x = tape.leaf(x);
        let k = tape.leaf(params.get("stage1.ssn.conv3.kernel").unwrap().clone());
        let b = tape.leaf(params.get("stage1.ssn.conv3.bias").unwrap().clone());
        let y = tape.conv2d(x, k, b).unwrap();
        tape.value(y).clone()
    };
    let direct = conv3(narrow.clone());
    let roundabout = permute(&conv3(permute(&narrow, false)), true);
    close(&direct, &roundabout, 1e-6);
}

#[test]
fn cam_properties() {
    let cfg = toy_config(1);
    let mut params = init_params(&cfg).unwrap();
    let x = random_tensor(5, &[6, 4, 4]);
    let cam_of = |params: &ParamStore, x: Tensor| {
        let mut tape = Tape::new();
        let net = Hsrnet::bind(&mut tape, &cfg, params).unwrap();
        let x = tape.leaf(x);
        let w = net.cam(&mut tape, "stage1.cam_eps", x).unwrap();
        tape.value(w).clone()
    };
    let w = cam_of(&params, x.clone());
    assert_eq!(w.shape(), &[6]);
    assert!(w.data().iter().all(|&v| v > 0.0 && v < 1.0));

    // reversing the pixel order leaves global pools unchanged
    let mut flipped = x.data().to_vec();
    for ch in flipped.chunks_mut(16) {
        ch.reverse();
    }
    assert_eq!(cam_of(&params, Tensor::new(vec![6, 4, 4], flipped).unwrap()), w);

    zero_matching(&mut params, |n| n.starts_with("stage1.cam_eps"));
    assert!(cam_of(&params, x).data().iter().all(|&v| v == 0.5));
}

/// Identity `T`, SSN reduced to its skip, both attention vectors driven to 0.
fn degenerate_stage_params(cfg: &HsrnetConfig) -> ParamStore {
    let mut params = init_params(cfg).unwrap();
    zero_matching(&mut params, |n| n.contains(".ssn.") || n.contains(".T."));
    let t = params.get_mut("stage1.T.kernel").unwrap();
    for ch in 0..6 {
        t.data_mut()[(ch * 6 + ch) * 9 + 4] = 1.0;
    }
    for cam in ["cam_eps", "cam_epsmu"] {
        params.get_mut(&format!("stage1.{cam}.conv2.bias")).unwrap().data_mut().fill(-50.0);
    }
    params
}

#[test]
fn degenerate_stage_passes_x_through() {
    let cfg = toy_config(1);
    let params = degenerate_stage_params(&cfg);
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
    let xk = tape.leaf(random_tensor(6, &[6, 4, 4]));
    let x0 = tape.leaf(random_tensor(7, &[6, 4, 4]));
    let out = net.stage(&mut tape, 1, xk, x0).unwrap();
    close(tape.value(out), tape.value(xk), 1e-3);
}

/// `T(x_k)`, `w_ε ⊙ x0` and `w_εμ ⊙ SSN(x_k)` computed one at a time.
fn stage_terms(cfg: &HsrnetConfig, params: &ParamStore, xk: &Tensor, x0: &Tensor) -> [Tensor; 3] {
    let term = |f: &dyn Fn(&mut Tape, &Hsrnet, Var, Var) -> Var| {
        let mut tape = Tape::new();
        let net = Hsrnet::bind(&mut tape, cfg, params).unwrap();
        let (a, b) = (tape.leaf(xk.clone()), tape.leaf(x0.clone()));
        let v = f(&mut tape, &net, a, b);
        tape.value(v).clone()
    };
    let t = term(&|tape, _, a, _| {
        let k = tape.leaf(params.get("stage1.T.kernel").unwrap().clone());
        let b = tape.leaf(params.get("stage1.T.bias").unwrap().clone());
        tape.conv2d(a, k, b).unwrap()
    });
    let init = term(&|tape, net, _, b| {
        let w = net.cam(tape, "stage1.cam_eps", b).unwrap();
        tape.channel_scale(b, w).unwrap()
    });
    let prior = term(&|tape, net, a, _| {
        let s = net.ssn(tape, 1, a).unwrap();
        let w = net.cam(tape, "stage1.cam_epsmu", s).unwrap();
        tape.channel_scale(s, w).unwrap()
    });
    [t, init, prior]
}

fn stage_output(cfg: &HsrnetConfig, params: &ParamStore, xk: &Tensor, x0: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, cfg, params).unwrap();
    let (a, b) = (tape.leaf(xk.clone()), tape.leaf(x0.clone()));
    let out = net.stage(&mut tape, 1, a, b).unwrap();
    tape.value(out).clone()
}

#[test]
fn stage_is_the_sum_of_three_terms() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let (xk, x0) = (random_tensor(8, &[6, 5, 3]), random_tensor(9, &[6, 5, 3]));
    let [t, init, prior] = stage_terms(&cfg, &params, &xk, &x0);
    let sum: Vec<f32> = (0..t.numel())
        .map(|i| t.data()[i] + init.data()[i] + prior.data()[i])
        .collect();
    close(&stage_output(&cfg, &params, &xk, &x0), &Tensor::new(vec![6, 5, 3], sum).unwrap(), 1e-6);
}

#[test]
fn x0_only_feeds_the_initial_term() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let xk = random_tensor(10, &[6, 4, 4]);
    let x0 = random_tensor(11, &[6, 4, 4]);
    let doubled = Tensor::new(x0.shape().to_vec(), x0.data().iter().map(|v| 2.0 * v).collect()).unwrap();
    let [t1, i1, p1] = stage_terms(&cfg, &params, &xk, &x0);
    let [t2, i2, p2] = stage_terms(&cfg, &params, &xk, &doubled);
    assert_eq!(t1, t2);
    assert_eq!(p1, p2);
    assert!(i1.max_abs_diff(&i2) > 1e-3);
}

#[test]
fn stage_rejects_mismatched_inputs() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
    let a = tape.leaf(Tensor::zeros(&[6, 4, 4]));
    let b = tape.leaf(Tensor::zeros(&[6, 4, 5]));
    assert!(net.stage(&mut tape, 1, a, b).is_err());
}

fn irn_output(cfg: &HsrnetConfig, params: &ParamStore, y: &SpectralCube) -> Tensor {
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, cfg, params).unwrap();
    let x0 = net.irn(&mut tape, y).unwrap();
    tape.value(x0).clone()
}

#[test]
fn one_stage_network_is_one_stage_on_x0() {
    let cfg = toy_config(1);
    let params = init_params(&cfg).unwrap();
    let y = random_msi(12, 6, 5, 3);
    let x0 = irn_output(&cfg, &params, &y);
    let want = stage_output(&cfg, &params, &x0, &x0);
    let got = hsrnet_forward(&y, &cfg, &params).unwrap();
    close(&got.to_tensor(), &want, 1e-6);
}

#[test]
fn two_stages_chain() {
    let cfg = toy_config(2);
    let params = init_params(&cfg).unwrap();
    let y = random_msi(13, 5, 5, 3);
    let x0 = irn_output(&cfg, &params, &y);
    // stage 2 under the name stage1 in a one-stage store
    let cfg1 = toy_config(1);
    let mut second = ParamStore::new();
    for (name, t) in params.iter() {
        if let Some(rest) = name.strip_prefix("stage2.") {
            second.insert(format!("stage1.{rest}"), t.clone()).unwrap();
        } else if !name.starts_with("stage1.") {
            second.insert(name.clone(), t.clone()).unwrap();
        }
    }
    let first: ParamStore = {
        let mut s = ParamStore::new();
        for (name, t) in params.iter().filter(|(n, _)| !n.starts_with("stage2.")) {
            s.insert(name.clone(), t.clone()).unwrap();
        }
        s
    };
    let x1 = stage_output(&cfg1, &first, &x0, &x0);
    let x2 = stage_output(&cfg1, &second, &x1, &x0);
    close(&hsrnet_forward(&y, &cfg, &params).unwrap().to_tensor(), &x2, 1e-5);
}

#[test]
fn output_carries_configured_wavelengths() {
    let mut cfg = toy_config(1);
    cfg.hs_wavelengths_nm = Some(wavelength_grid(400.0, 650.0, 6));
    let params = init_params(&cfg).unwrap();
    let out = hsrnet_forward(&random_msi(14, 3, 4, 3), &cfg, &params).unwrap();
    assert_eq!(out.wavelengths_nm(), cfg.hs_wavelengths_nm.as_deref());
}

fn namespaces(params: &ParamStore) -> BTreeSet<String> {
    params
        .names()
        .map(|n| {
            let parts: Vec<&str> = n.split('.').collect();
            parts[..parts.len() - 1].join(".")
        })
        .collect()
}

#[test]
fn stage_namespaces_are_disjoint() {
    let cfg = toy_config(3);
    let params = init_params(&cfg).unwrap();
    let tops: BTreeSet<&str> = params.names().map(|n| n.split('.').next().unwrap()).collect();
    assert_eq!(tops, BTreeSet::from(["irn", "stage1", "stage2", "stage3"]));
    let per_stage = |k: usize| {
        params
            .names()
            .filter_map(|n| n.strip_prefix(&format!("stage{k}.")).map(str::to_string))
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(per_stage(1), per_stage(2));
    assert_eq!(per_stage(2), per_stage(3));
}

#[test]
fn ablations_change_only_their_subgraphs() {
    let cfg = toy_config(2);
    let full = namespaces(&init_params(&cfg).unwrap());

    let mut no_cam = cfg.clone();
    no_cam.use_cam = false;
    let ns = namespaces(&init_params(&no_cam).unwrap());
    let removed: BTreeSet<String> = full.difference(&ns).cloned().collect();
    let added: BTreeSet<String> = ns.difference(&full).cloned().collect();
    let want_removed: BTreeSet<String> = (1..=2)
        .flat_map(|k| {
            ["cam_eps.conv1", "cam_eps.conv2", "cam_epsmu.conv1", "cam_epsmu.conv2"]
                .map(|s| format!("stage{k}.{s}"))
        })
        .collect();
    let want_added: BTreeSet<String> = (1..=2)
        .flat_map(|k| ["eps", "epsmu"].map(|s| format!("stage{k}.{s}")))
        .collect();
    assert_eq!(removed, want_removed);
    assert_eq!(added, want_added);

    let mut no_srf = cfg;
    no_srf.use_srf_grouping = false;
    let ns = namespaces(&init_params(&no_srf).unwrap());
    assert_eq!(
        full.difference(&ns).cloned().collect::<BTreeSet<_>>(),
        BTreeSet::from(["irn.group0".to_string(), "irn.group1".to_string()])
    );
    assert_eq!(
        ns.difference(&full).cloned().collect::<BTreeSet<_>>(),
        BTreeSet::from(["irn.head".to_string()])
    );
}

fn every_layer_gets_gradient(cfg: &HsrnetConfig) {
    let params = init_params(cfg).unwrap();
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, cfg, &params).unwrap();
    let out = net.forward(&mut tape, &random_msi(15, 6, 6, 3)).unwrap();
    let target = tape.leaf(random_tensor(16, &[6, 6, 6]));
    let d = tape.elementwise(out, target, crate::autodiff::BinaryOp::Mul).unwrap();
    let loss = tape.sum(d);
    let grads = tape.backward(loss).unwrap();
    let mut layer_has_grad: BTreeMap<String, bool> = BTreeMap::new();
    for (name, g) in grads.named() {
        let layer = name.rsplit_once('.').unwrap().0.to_string();
        *layer_has_grad.entry(layer).or_default() |= g.data().iter().any(|&v| v != 0.0);
    }
    let dead: Vec<_> = layer_has_grad.iter().filter(|(_, &ok)| !ok).map(|(n, _)| n).collect();
    assert!(dead.is_empty(), "no gradient reaches {dead:?}");
}

#[test]
fn no_dead_subgraphs_at_init() {
    let cfg = toy_config(2);
    every_layer_gets_gradient(&cfg);
    let mut no_cam = cfg.clone();
    no_cam.use_cam = false;
    every_layer_gets_gradient(&no_cam);
    let mut no_srf = cfg;
    no_srf.use_srf_grouping = false;
    every_layer_gets_gradient(&no_srf);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_shape_and_attention_range(w in 3usize..9, h in 3usize..9, seed in any::<u64>()) {
        let mut cfg = toy_config(1);
        cfg.seed = seed;
        let params = init_params(&cfg).unwrap();
        let y = random_msi(seed, w, h, 3);
        let out = hsrnet_forward(&y, &cfg, &params).unwrap();
        prop_assert_eq!((out.width(), out.height(), out.channels()), (w, h, 6));

        let mut tape = Tape::new();
        let net = Hsrnet::bind(&mut tape, &cfg, &params).unwrap();
        let x = tape.leaf(Tensor::randn(&[6, h, w], &mut rng_for(seed ^ 1)));
        let s = net.ssn(&mut tape, 1, x).unwrap();
        prop_assert_eq!(tape.value(s).shape(), &[6, h, w]);
        for prefix in ["stage1.cam_eps", "stage1.cam_epsmu"] {
            let a = net.cam(&mut tape, prefix, x).unwrap();
            prop_assert!(tape.value(a).data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

//! Executable invariant suite.
//!
//! [`run_all`] exercises every numeric component against oracles that are
//! implemented *here*, independently of the library code under test: naive
//! sliding-window convolution, explicit-exponential attention, brute-force
//! metric counting, and central finite differences. The command-line
//! `selftest` subcommand prints one line per check; the suite is also run
//! from the integration tests, so a fresh checkout fails loudly if any
//! numeric contract drifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::{giou, iou, BoundingBox};
use crate::freq::{frequency_select, FreqSelectorParams};
use crate::fusion::{inject, mfm, MfmParams};
use crate::kernel::{
    avg_pool2d, batch_norm_infer, conv2d, gelu, global_avg_pool, linear, sigmoid, softmax_slice,
    BatchNormParams, ConvParams, FeatureMap, LinearParams, Modality, Tensor,
};
use crate::memory::{attn_update, CueToken, FilterParams, MemoryBank, MemoryPool, MemoryPoolConfig};
use crate::metrics::{
    precision_rate, precision_recall_f, success_auc, success_rate, GroundTruth, TrackResult,
};
use crate::pipeline::loss::{focal_loss, loss_gradients, regression_loss, LossConfig};
use crate::pipeline::{
    AdapterParams, EncoderParams, Frame, HeadParams, SessionConfig, Template, TrackerSession,
};
use crate::synth::{generate, MotionPath, SceneConfig};
use crate::tokens::TokenSequence;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type CheckOutcome = std::result::Result<String, String>;

fn run_check(name: &str, body: impl FnOnce() -> CheckOutcome) -> CheckResult {
    match body() {
        Ok(detail) => CheckResult {
            name: name.to_string(),
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name: name.to_string(),
            passed: false,
            detail,
        },
    }
}

fn expect_close(what: &str, got: f64, want: f64, tol: f64) -> std::result::Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want} (tol {tol})"))
    }
}

fn map_err(e: crate::error::Error) -> String {
    e.to_string()
}

/// Runs every check and returns the results in a stable order.
pub fn run_all() -> Vec<CheckResult> {
    let checks: Vec<(&str, fn() -> CheckOutcome)> = vec![
        ("softmax_two_point_oracle", softmax_two_point_oracle),
        ("softmax_normalization", softmax_normalization),
        ("softmax_shift_invariance", softmax_shift_invariance),
        ("conv_identity_kernel", conv_identity_kernel),
        ("conv_matches_naive_sliding_window", conv_matches_naive_sliding_window),
        ("avg_pool_window_mean", avg_pool_window_mean),
        ("global_avg_pool_mean", global_avg_pool_mean_check),
        ("linear_matvec_oracle", linear_matvec_oracle),
        ("sigmoid_log_odds_oracle", sigmoid_log_odds_oracle),
        ("gelu_gaussian_cdf_oracle", gelu_gaussian_cdf_oracle),
        ("batch_norm_affine_formula", batch_norm_affine_formula),
        ("frequency_split_reconstructs", frequency_split_reconstructs),
        ("frequency_gates_bounded", frequency_gates_bounded),
        ("fusion_constant_map_oracle", fusion_constant_map_oracle),
        ("fusion_injection_arithmetic", fusion_injection_arithmetic),
        ("attention_matches_dense_oracle", attention_matches_dense_oracle),
        ("memory_fifo_eviction_order", memory_fifo_eviction_order),
        ("memory_tier_sizes_bounded", memory_tier_sizes_bounded),
        ("retrieval_weight_oracle", retrieval_weight_oracle),
        ("retrieval_combines_tier_reads", retrieval_combines_tier_reads),
        ("filter_bottleneck_oracle", filter_bottleneck_oracle),
        ("focal_loss_oracle", focal_loss_oracle),
        ("regression_loss_oracle", regression_loss_oracle),
        ("gradients_match_finite_differences", gradients_match_finite_differences),
        ("iou_area_arithmetic_oracle", iou_area_arithmetic_oracle),
        ("precision_rate_count_oracle", precision_rate_count_oracle),
        ("success_rate_count_oracle", success_rate_count_oracle),
        ("precision_recall_f_hand_case", precision_recall_f_hand_case),
        ("success_rate_monotone_in_threshold", success_rate_monotone_in_threshold),
        ("scene_generation_deterministic", scene_generation_deterministic),
        ("scene_linear_path_closed_form", scene_linear_path_closed_form),
        ("box_file_roundtrip", box_file_roundtrip),
        ("snapshot_roundtrip", snapshot_roundtrip),
        ("config_rejects_bad_filter_ratio", config_rejects_bad_filter_ratio),
        ("tracking_run_deterministic", tracking_run_deterministic),
        ("zero_adapters_match_surrogate", zero_adapters_match_surrogate),
    ];
    checks
        .into_iter()
        .map(|(name, body)| run_check(name, body))
        .collect()
}

/// True when every check passed.
pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn softmax_two_point_oracle() -> CheckOutcome {
    let out = softmax_slice(&[0.0, std::f64::consts::LN_2]).map_err(map_err)?;
    expect_close("softmax[0]", out[0], 1.0 / 3.0, 1e-15)?;
    expect_close("softmax[1]", out[1], 2.0 / 3.0, 1e-15)?;
    Ok("softmax([0, ln 2]) = [1/3, 2/3]".into())
}

fn softmax_normalization() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..50 {
        let n = rng.random_range(1..=9);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..=50.0)).collect();
        let out = softmax_slice(&x).map_err(map_err)?;
        let sum: f64 = out.iter().sum();
        expect_close("softmax sum", sum, 1.0, 1e-12)?;
        if out.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err("softmax value outside [0,1]".into());
        }
    }
    Ok("sums to 1 +/- 1e-12 over 50 random inputs in [-50, 50]".into())
}

fn softmax_shift_invariance() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let c = rng.random_range(-100.0..=100.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let a = softmax_slice(&x).map_err(map_err)?;
        let b = softmax_slice(&shifted).map_err(map_err)?;
        for (p, q) in a.iter().zip(&b) {
            expect_close("shifted softmax", *q, *p, 1e-12)?;
        }
    }
    Ok("softmax(x + c) == softmax(x) within 1e-12".into())
}

fn conv_identity_kernel() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let x = FeatureMap::from_fn(Modality::Rgb, 3, 5, 4, |_| rng.random_range(-2.0..=2.0))
        .map_err(map_err)?;
    let p = ConvParams::identity(3).map_err(map_err)?;
    let y = conv2d(&x, &p).map_err(map_err)?;
    if y.data() != x.data() {
        return Err("identity convolution changed values".into());
    }
    Ok("1x1 identity kernel is bit-exact".into())
}

fn conv_matches_naive_sliding_window() -> CheckOutcome {
    // Independent implementation: quadruple loop with explicit bounds
    // arithmetic, no shared helpers.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (in_ch, out_ch, h, w, k, pad) = (2usize, 3usize, 6usize, 5usize, 3usize, 1usize);
    let x = FeatureMap::from_fn(Modality::Rgb, in_ch, h, w, |_| rng.random_range(-1.0..=1.0))
        .map_err(map_err)?;
    let kernel = Tensor::from_fn(&[out_ch, in_ch, k, k], |_| rng.random_range(-1.0..=1.0))
        .map_err(map_err)?;
    let bias: Vec<f64> = (0..out_ch).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let p = ConvParams::new(kernel.clone(), bias.clone(), 1, pad).map_err(map_err)?;
    let y = conv2d(&x, &p).map_err(map_err)?;

    for oc in 0..out_ch {
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = bias[oc];
                for ic in 0..in_ch {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let kv = kernel.data()[((oc * in_ch + ic) * k + ky) * k + kx];
                            acc += kv * x.at(ic, iy as usize, ix as usize);
                        }
                    }
                }
                expect_close("conv cell", y.at(oc, oy, ox), acc, 1e-12)?;
            }
        }
    }
    Ok("3x3 padded conv equals a naive sliding-window oracle".into())
}

fn avg_pool_window_mean() -> CheckOutcome {
    let x = FeatureMap::new(
        Modality::Rgb,
        Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).map_err(map_err)?,
    )
    .map_err(map_err)?;
    let y = avg_pool2d(&x, 2, 2).map_err(map_err)?;
    expect_close("2x2 mean", y.at(0, 0, 0), 2.5, 0.0)?;
    Ok("2x2 window over [[1,2],[3,4]] pools to 2.5".into())
}

fn global_avg_pool_mean_check() -> CheckOutcome {
    let x = FeatureMap::new(
        Modality::Aux,
        Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).map_err(map_err)?,
    )
    .map_err(map_err)?;
    let g = global_avg_pool(&x);
    expect_close("gap", g[0], 2.5, 0.0)?;
    Ok("channel {1,2,3,4} averages to 2.5".into())
}

fn linear_matvec_oracle() -> CheckOutcome {
    let w = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).map_err(map_err)?;
    let y = linear(&[1.0, 1.0], &w, &[0.0, 0.0]).map_err(map_err)?;
    expect_close("row 0", y[0], 3.0, 0.0)?;
    expect_close("row 1", y[1], 7.0, 0.0)?;
    Ok("[[1,2],[3,4]] . [1,1] = [3,7]".into())
}

fn sigmoid_log_odds_oracle() -> CheckOutcome {
    expect_close("sigmoid(ln 3)", sigmoid(3.0f64.ln()), 0.75, 1e-15)?;
    expect_close("sigmoid(0)", sigmoid(0.0), 0.5, 0.0)?;
    let x = 1.7;
    expect_close("symmetry", sigmoid(-x), 1.0 - sigmoid(x), 1e-15)?;
    Ok("sigmoid(ln 3) = 3/4 with odd symmetry about 1/2".into())
}

fn gelu_gaussian_cdf_oracle() -> CheckOutcome {
    // x * Phi(x) at x = 1, with Phi from the error function.
    expect_close("gelu(1)", gelu(1.0), 0.8413447460685429, 1e-15)?;
    expect_close("gelu(0)", gelu(0.0), 0.0, 0.0)?;
    expect_close("gelu asymptote", gelu(10.0), 10.0, 1e-9)?;
    Ok("gelu(1) = Phi(1) = 0.841345".into())
}

fn batch_norm_affine_formula() -> CheckOutcome {
    let x = FeatureMap::new(
        Modality::Rgb,
        Tensor::new(&[1, 1, 1], vec![2.0]).map_err(map_err)?,
    )
    .map_err(map_err)?;
    let p = BatchNormParams::new(vec![3.0], vec![1.0], vec![0.5], vec![0.25], 1e-12)
        .map_err(map_err)?;
    // gamma * (x - mean) / sqrt(var + eps) + beta = 3 * 1.5 / 0.5 + 1 = 10.
    let y = batch_norm_infer(&x, &p).map_err(map_err)?;
    expect_close("bn", y.at(0, 0, 0), 10.0, 1e-6)?;
    Ok("normalise-then-affine formula verified by hand".into())
}

fn frequency_split_reconstructs() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let channels = 4;
    let p = FreqSelectorParams::seeded(channels, 3, 2, &mut rng).map_err(map_err)?;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = FeatureMap::from_fn(Modality::Rgb, channels, 8, 8, |_| {
            rng.random_range(-3.0..=3.0)
        })
        .map_err(map_err)?;
        let pair = crate::freq::decompose(&x, &p).map_err(map_err)?;
        for i in 0..x.data().len() {
            let err = (pair.high.data()[i] + pair.low.data()[i] - x.data()[i]).abs();
            worst = worst.max(err);
        }
    }
    if worst > 1e-12 {
        return Err(format!("worst reconstruction error {worst} > 1e-12"));
    }
    Ok(format!("high + low == source, worst error {worst:.2e}"))
}

fn frequency_gates_bounded() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let channels = 4;
    let p = FreqSelectorParams::seeded(channels, 3, 2, &mut rng).map_err(map_err)?;
    let x = FeatureMap::from_fn(Modality::Aux, channels, 8, 8, |_| rng.random_range(-2.0..=2.0))
        .map_err(map_err)?;
    let y = frequency_select(&x, &p).map_err(map_err)?;
    if !y.same_shape(&x) || y.modality() != x.modality() {
        return Err("frequency selection changed shape or modality".into());
    }
    if y.data().iter().any(|v| !v.is_finite()) {
        return Err("non-finite output".into());
    }
    Ok("recombined map keeps shape, modality, and finiteness".into())
}

fn fusion_constant_map_oracle() -> CheckOutcome {
    // Identity entry convs, zero gate, identity closing conv, constant
    // inputs: each spatial branch gives value/HW per cell and the channel
    // branch is sigmoid(0) * 0-gated; worked out in closed form for a
    // 1-channel 2x2 map of 2s and 4s.
    let p = MfmParams {
        conv_rgb: ConvParams::identity(1).map_err(map_err)?,
        conv_x: ConvParams::identity(1).map_err(map_err)?,
        fc_channel: LinearParams::zeros(1, 1).map_err(map_err)?,
        conv_out: ConvParams::identity(1).map_err(map_err)?,
    };
    let rgb = FeatureMap::from_fn(Modality::Rgb, 1, 2, 2, |_| 2.0).map_err(map_err)?;
    let aux = FeatureMap::from_fn(Modality::Aux, 1, 2, 2, |_| 4.0).map_err(map_err)?;
    let out = mfm(&rgb, &aux, &p).map_err(map_err)?;
    // Spatial branches: 2 * (1/4) + 4 * (1/4) = 1.5. Channel branch:
    // g = GAP(2 + 4) = 6 gated by sigmoid(0) = 0.5, contributing 3.
    for i in 0..4 {
        expect_close("fused cell", out.data()[i], 4.5, 1e-12)?;
    }
    Ok("constant-input fusion equals hand-derived 4.5 per cell".into())
}

fn fusion_injection_arithmetic() -> CheckOutcome {
    let dim = 2;
    let seq = TokenSequence::from_parts(
        dim,
        &[1.0, 2.0, 3.0, 4.0],
        &[5.0, 6.0],
        &[7.0, 8.0],
    )
    .map_err(map_err)?;
    // Fused map laid out channel-major over the 3 fusible tokens.
    let fused = FeatureMap::new(
        Modality::Rgb,
        Tensor::new(&[dim, 3, 1], vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]).map_err(map_err)?,
    )
    .map_err(map_err)?;
    let out = inject(&fused, &seq).map_err(map_err)?;
    let want = [11.0, 42.0, 23.0, 54.0, 35.0, 66.0, 7.0, 8.0];
    for (i, (&got, &want)) in out.data().iter().zip(&want).enumerate() {
        expect_close(&format!("token value {i}"), got, want, 0.0)?;
    }
    Ok("per-channel addition hits search and template tokens, cue untouched".into())
}

fn attention_matches_dense_oracle() -> CheckOutcome {
    // Re-derive the scaled dot-product update with explicit exponentials.
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let dim = 4;
    let n_t = 3;
    let n_s = 5;
    let rnd_tokens = |rng: &mut ChaCha8Rng, n: usize| -> Vec<CueToken> {
        (0..n)
            .map(|_| {
                CueToken::new((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap()
            })
            .collect()
    };
    let target_tokens = rnd_tokens(&mut rng, n_t);
    let source_tokens = rnd_tokens(&mut rng, n_s);
    let mut target = MemoryBank::from_tokens(8, target_tokens.clone()).map_err(map_err)?;
    let source = MemoryBank::from_tokens(8, source_tokens.clone()).map_err(map_err)?;
    attn_update(&mut target, &source).map_err(map_err)?;

    let scale = 1.0 / (dim as f64).sqrt();
    for (i, before) in target_tokens.iter().enumerate() {
        let logits: Vec<f64> = source_tokens
            .iter()
            .map(|s| {
                scale
                    * before
                        .values()
                        .iter()
                        .zip(s.values())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for d in 0..dim {
            let delta: f64 = exps
                .iter()
                .zip(&source_tokens)
                .map(|(e, s)| e / z * s.values()[d])
                .sum();
            let want = before.values()[d] + delta;
            expect_close("attended token", target.tokens()[i].values()[d], want, 1e-12)?;
        }
    }
    Ok("refinement equals explicit-exponential attention on random banks".into())
}

fn memory_fifo_eviction_order() -> CheckOutcome {
    let mut bank = MemoryBank::new(3).map_err(map_err)?;
    for i in 0..7 {
        bank.push_fifo(CueToken::new(vec![i as f64]).map_err(map_err)?)
            .map_err(map_err)?;
    }
    let kept: Vec<f64> = bank.tokens().iter().map(|t| t.values()[0]).collect();
    if kept != [4.0, 5.0, 6.0] {
        return Err(format!("expected [4, 5, 6], got {kept:?}"));
    }
    Ok("capacity-3 bank keeps the newest three of seven pushes in order".into())
}

fn memory_tier_sizes_bounded() -> CheckOutcome {
    let mut pool = MemoryPool::new(
        FilterParams::identity_gelu(2).map_err(map_err)?,
        MemoryPoolConfig::default(),
    )
    .map_err(map_err)?;
    pool.init(&CueToken::new(vec![0.1, 0.2]).map_err(map_err)?)
        .map_err(map_err)?;
    for i in 0..200 {
        pool.update(&CueToken::new(vec![0.01 * i as f64, 0.3]).map_err(map_err)?)
            .map_err(map_err)?;
    }
    let sizes = (
        pool.short().len(),
        pool.long().len(),
        pool.permanent().len(),
    );
    if sizes.0 > 8 || sizes.1 > 8 || sizes.2 > 3 {
        return Err(format!("tier sizes {sizes:?} exceed capacities (8, 8, 3)"));
    }
    if sizes != (8, 1, 1) {
        return Err(format!("expected (8, 1, 1) after 200 updates, got {sizes:?}"));
    }
    Ok("200 updates leave tier sizes (8, 1, 1) within capacities (8, 8, 3)".into())
}

fn retrieval_weight_oracle() -> CheckOutcome {
    // Two short-tier tokens with query dot products 2 and 0: weights are
    // softmax(2, 0) = (e^2, 1) / (e^2 + 1).
    let filter = FilterParams::identity_gelu(2).map_err(map_err)?;
    let pool = MemoryPool::from_parts(
        filter,
        MemoryPoolConfig::default(),
        vec![
            CueToken::new(vec![2.0, 0.0]).map_err(map_err)?,
            CueToken::new(vec![0.0, 2.0]).map_err(map_err)?,
        ],
        vec![CueToken::zeros(2).map_err(map_err)?],
        vec![CueToken::zeros(2).map_err(map_err)?],
    )
    .map_err(map_err)?;
    let r = pool
        .retrieve_detailed(&CueToken::new(vec![1.0, 0.0]).map_err(map_err)?)
        .map_err(map_err)?;
    let short = r.short;
    let e2 = 2.0f64.exp();
    expect_close("w0", short.weights[0], e2 / (e2 + 1.0), 1e-15)?;
    expect_close("w1", short.weights[1], 1.0 / (e2 + 1.0), 1e-15)?;
    expect_close("read[0]", short.read.values()[0], 2.0 * e2 / (e2 + 1.0), 1e-14)?;
    Ok("retrieval weights equal softmax(2, 0) = (0.8808, 0.1192)".into())
}

fn retrieval_combines_tier_reads() -> CheckOutcome {
    // Singleton tiers: each read is its only token, so the combined cue is
    // the plain tier sum.
    let filter = FilterParams::identity_gelu(2).map_err(map_err)?;
    let (a, b, c) = ([0.5, 1.0], [2.0, -1.0], [0.25, 0.25]);
    let pool = MemoryPool::from_parts(
        filter,
        MemoryPoolConfig::default(),
        vec![CueToken::new(a.to_vec()).map_err(map_err)?],
        vec![CueToken::new(b.to_vec()).map_err(map_err)?],
        vec![CueToken::new(c.to_vec()).map_err(map_err)?],
    )
    .map_err(map_err)?;
    let out = pool
        .retrieve(&CueToken::new(vec![1.0, 1.0]).map_err(map_err)?)
        .map_err(map_err)?;
    expect_close("combined[0]", out.values()[0], a[0] + b[0] + c[0], 1e-15)?;
    expect_close("combined[1]", out.values()[1], a[1] + b[1] + c[1], 1e-15)?;
    Ok("combined cue is the sum of per-tier attention reads".into())
}

fn filter_bottleneck_oracle() -> CheckOutcome {
    // H = 4, ratio 2: down = ones-row pairs, up = identity-ish expansion,
    // composed by hand for input (1, 0, -1, 2).
    let down = LinearParams::new(
        Tensor::new(&[2, 4], vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).map_err(map_err)?,
        vec![0.0, 0.0],
    )
    .map_err(map_err)?;
    let up = LinearParams::new(
        Tensor::new(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).map_err(map_err)?,
        vec![0.5, 0.5, 0.5, 0.5],
    )
    .map_err(map_err)?;
    let f = FilterParams::new(down, up, 2).map_err(map_err)?;
    let out = f
        .apply(&CueToken::new(vec![1.0, 0.0, -1.0, 2.0]).map_err(map_err)?)
        .map_err(map_err)?;
    // Bottleneck: (1, 1) -> gelu -> (0.8413..., 0.8413...).
    let g = gelu(1.0);
    let want = [g + 0.5, g + 0.5, 2.0 * g + 0.5, 0.5];
    for (i, (&got, &want)) in out.values().iter().zip(&want).enumerate() {
        expect_close(&format!("filter[{i}]"), got, want, 1e-15)?;
    }
    Ok("down/gelu/up composition matches the hand-worked 4->2->4 case".into())
}

fn focal_loss_oracle() -> CheckOutcome {
    let cfg = LossConfig::default();
    let loss = focal_loss(&[0.5], &[true], &cfg).map_err(map_err)?;
    let want = 0.25 * 0.25 * std::f64::consts::LN_2;
    expect_close("focal(0.5)", loss, want, 1e-15)?;
    Ok("alpha (1-p)^gamma ln(1/p) at p = 1/2 equals ln(2)/16".into())
}

fn regression_loss_oracle() -> CheckOutcome {
    let cfg = LossConfig::default();
    let pred = BoundingBox::new(0.0, 0.0, 1.0, 1.0).map_err(map_err)?;
    let target = BoundingBox::new(2.0, 0.0, 1.0, 1.0).map_err(map_err)?;
    let loss = regression_loss(&pred, &target, &cfg).map_err(map_err)?;
    // L1 = 2; union 2 inside enclosure 3 gives GIoU = -1/3, so the loss is
    // 5*2 + 2*(1 + 1/3) = 38/3.
    expect_close("regression", loss, 38.0 / 3.0, 1e-12)?;
    Ok("separated unit boxes score 5*L1 + 2*(1 - GIoU) = 38/3".into())
}

fn gradients_match_finite_differences() -> CheckOutcome {
    let cfg = LossConfig::default();
    let pred = BoundingBox::new(1.0, 2.0, 4.0, 3.0).map_err(map_err)?;
    let target = BoundingBox::new(2.5, 2.5, 3.0, 4.0).map_err(map_err)?;
    let g = loss_gradients(&pred, &target, 0.6, &cfg).map_err(map_err)?;
    let h = 1e-6;
    for i in 0..4 {
        let mut plus = [pred.x, pred.y, pred.w, pred.h];
        let mut minus = plus;
        plus[i] += h;
        minus[i] -= h;
        let lp = regression_loss(
            &BoundingBox::new(plus[0], plus[1], plus[2], plus[3]).map_err(map_err)?,
            &target,
            &cfg,
        )
        .map_err(map_err)?;
        let lm = regression_loss(
            &BoundingBox::new(minus[0], minus[1], minus[2], minus[3]).map_err(map_err)?,
            &target,
            &cfg,
        )
        .map_err(map_err)?;
        let fd = (lp - lm) / (2.0 * h);
        let err = (g.d_box[i] - fd).abs() / g.d_box[i].abs().max(1.0);
        if err > 1e-5 {
            return Err(format!(
                "coordinate {i}: analytic {} vs finite difference {fd} (rel err {err:.2e})",
                g.d_box[i]
            ));
        }
    }
    Ok("analytic box gradient within 1e-5 of central differences".into())
}

fn iou_area_arithmetic_oracle() -> CheckOutcome {
    let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0).map_err(map_err)?;
    let b = BoundingBox::new(1.0, 0.0, 2.0, 2.0).map_err(map_err)?;
    expect_close("iou", iou(&a, &b).map_err(map_err)?, 1.0 / 3.0, 1e-15)?;
    expect_close("giou nested", giou(&a, &a).map_err(map_err)?, 1.0, 0.0)?;
    Ok("overlap 2 over union 6 gives 1/3".into())
}

fn four_frame_case() -> (TrackResult, GroundTruth) {
    let b = |x: f64, w: f64| Some(BoundingBox::new(x, 0.0, w, 1.0).unwrap());
    let gt = GroundTruth::new(vec![b(0.0, 4.0), b(0.0, 4.0), b(0.0, 4.0), None]);
    let res = TrackResult::new(vec![None, b(0.0, 2.0), b(0.0, 4.0), b(50.0, 4.0)]);
    (res, gt)
}

fn precision_rate_count_oracle() -> CheckOutcome {
    let gt = GroundTruth::new(
        (0..4)
            .map(|_| Some(BoundingBox::new(100.0, 100.0, 10.0, 10.0).unwrap()))
            .collect(),
    );
    let res = TrackResult::new(
        [5.0, 25.0, 10.0, 30.0]
            .iter()
            .map(|d| Some(BoundingBox::new(100.0 + d, 100.0, 10.0, 10.0).unwrap()))
            .collect(),
    );
    expect_close(
        "pr",
        precision_rate(&res, &gt, 20.0).map_err(map_err)?,
        0.5,
        0.0,
    )?;
    Ok("centre errors [5, 25, 10, 30] at threshold 20 count 2 of 4".into())
}

fn success_rate_count_oracle() -> CheckOutcome {
    let gt = GroundTruth::new(
        (0..3)
            .map(|_| Some(BoundingBox::new(0.0, 0.0, 5.0, 1.0).unwrap()))
            .collect(),
    );
    let res = TrackResult::new(
        [1.0, 3.0, 4.0]
            .iter()
            .map(|w| Some(BoundingBox::new(0.0, 0.0, *w, 1.0).unwrap()))
            .collect(),
    );
    let sr = success_rate(&res, &gt, 0.5).map_err(map_err)?;
    expect_close("sr", sr, 2.0 / 3.0, 1e-15)?;
    Ok("overlaps [0.2, 0.6, 0.8] at threshold 0.5 count 2 of 3".into())
}

fn precision_recall_f_hand_case() -> CheckOutcome {
    let (res, gt) = four_frame_case();
    let prf = precision_recall_f(&res, &gt).map_err(map_err)?;
    expect_close("precision", prf.precision, 0.5, 1e-15)?;
    expect_close("recall", prf.recall, 0.5, 1e-15)?;
    expect_close("f", prf.f_score, 0.5, 1e-15)?;
    Ok("offset 4-frame case scores 0.5 / 0.5 / 0.5".into())
}

fn success_rate_monotone_in_threshold() -> CheckOutcome {
    let (res, gt) = four_frame_case();
    let mut prev = f64::INFINITY;
    for i in 0..=20 {
        let sr = success_rate(&res, &gt, i as f64 / 20.0).map_err(map_err)?;
        if sr > prev {
            return Err(format!("success rate rose from {prev} at threshold {}", i as f64 / 20.0));
        }
        prev = sr;
    }
    let auc = success_auc(&res, &gt).map_err(map_err)?;
    if !(0.0..=1.0).contains(&auc) {
        return Err(format!("auc {auc} outside [0,1]"));
    }
    Ok("success rate non-increasing over 21 thresholds; AUC in [0,1]".into())
}

fn scene_generation_deterministic() -> CheckOutcome {
    let cfg = SceneConfig {
        num_frames: 6,
        frame_size: 32,
        target_size: 8,
        start: (16.0, 16.0),
        ..SceneConfig::default()
    };
    let (a, gta) = generate(&cfg).map_err(map_err)?;
    let (b, gtb) = generate(&cfg).map_err(map_err)?;
    if gta != gtb {
        return Err("ground truth differs between identical runs".into());
    }
    for (fa, fb) in a.iter().zip(&b) {
        if fa.rgb.data() != fb.rgb.data() || fa.aux.data() != fb.aux.data() {
            return Err("pixel data differs between identical runs".into());
        }
    }
    Ok("same config generates bit-identical frames twice".into())
}

fn scene_linear_path_closed_form() -> CheckOutcome {
    let cfg = SceneConfig {
        num_frames: 10,
        frame_size: 32,
        target_size: 8,
        start: (8.0, 16.0),
        path: MotionPath::Linear { velocity: (1.0, 0.0) },
        occlusions: vec![],
        ..SceneConfig::default()
    };
    let (_, gt) = generate(&cfg).map_err(map_err)?;
    for (t, g) in gt.iter().enumerate() {
        let (cx, _) = g.ok_or("missing ground truth")?.center();
        expect_close(&format!("centre at frame {t}"), cx, 8.0 + t as f64, 0.0)?;
    }
    Ok("1 px/frame path advances ground truth centres exactly".into())
}

fn box_file_roundtrip() -> CheckOutcome {
    let boxes = vec![
        Some(BoundingBox::new(0.125, -3.5, 7.25, 2.0).map_err(map_err)?),
        None,
        Some(BoundingBox::new(1e-3, 1e3, 0.3333333333333333, 1.0).map_err(map_err)?),
    ];
    let parsed = crate::io::boxes_from_str(&crate::io::boxes_to_string(&boxes))
        .map_err(map_err)?;
    if parsed != boxes {
        return Err("roundtrip changed the boxes".into());
    }
    Ok("text render and parse are mutually inverse".into())
}

fn snapshot_roundtrip() -> CheckOutcome {
    let mut pool = MemoryPool::new(
        FilterParams::identity_gelu(3).map_err(map_err)?,
        MemoryPoolConfig::default(),
    )
    .map_err(map_err)?;
    pool.init(&CueToken::new(vec![1.0, -2.0, 0.5]).map_err(map_err)?)
        .map_err(map_err)?;
    for i in 0..4 {
        pool.update(&CueToken::new(vec![i as f64, 0.1, -0.1]).map_err(map_err)?)
            .map_err(map_err)?;
    }
    let snap = crate::io::Snapshot::of_pool(&pool);
    let text = crate::io::snapshot_to_string(&snap);
    let back = crate::io::snapshot_from_str(&text).map_err(map_err)?;
    if back != snap {
        return Err("snapshot text roundtrip changed tier contents".into());
    }
    Ok("header and token lines roundtrip bit-exactly".into())
}

fn config_rejects_bad_filter_ratio() -> CheckOutcome {
    let cfg = SessionConfig {
        dim: 64,
        filter_ratio: 5, // does not divide 64
        ..SessionConfig::default()
    };
    match cfg.validate() {
        Err(e) => Ok(format!("rejected as expected: {e}")),
        Ok(()) => Err("non-divisor filter ratio was accepted".into()),
    }
}

fn tiny_session(adapters_enabled: bool, zero_adapters: bool) -> crate::error::Result<(TrackerSession, Vec<Frame>)> {
    let cfg = SessionConfig {
        layers: 2,
        dim: 8,
        patch: 4,
        frame_size: 16,
        frame_channels: 2,
        template_size: 8,
        template_capacity: 1,
        filter_ratio: 2,
        adapters_enabled,
        ..SessionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let encoder = EncoderParams::seeded(cfg.layers, cfg.dim, cfg.patch, cfg.frame_channels, &mut rng)?;
    let head = HeadParams::seeded(cfg.dim, &mut rng)?;
    let adapters = if zero_adapters {
        AdapterParams::zeros(&cfg)?
    } else {
        AdapterParams::seeded(&cfg, &mut rng)?
    };
    let scene = SceneConfig {
        frame_size: 16,
        channels: 2,
        num_frames: 4,
        target_size: 6,
        start: (8.0, 8.0),
        path: MotionPath::Linear { velocity: (0.5, 0.0) },
        occlusions: vec![],
        rgb_noise: 0.02,
        aux_noise: 0.01,
        seed: 9,
    };
    let (frames, gt) = generate(&scene)?;
    let template = Template::from_frame(&frames[0], &gt[0].unwrap(), cfg.template_size)?;
    let session = TrackerSession::new(cfg, encoder, head, adapters, template)?;
    Ok((session, frames))
}

fn tracking_run_deterministic() -> CheckOutcome {
    let run = || -> crate::error::Result<Vec<BoundingBox>> {
        let (mut session, frames) = tiny_session(true, false)?;
        frames.iter().map(|f| session.track_frame(f)).collect()
    };
    let a = run().map_err(map_err)?;
    let b = run().map_err(map_err)?;
    for (x, y) in a.iter().zip(&b) {
        if x.x.to_bits() != y.x.to_bits()
            || x.y.to_bits() != y.y.to_bits()
            || x.w.to_bits() != y.w.to_bits()
            || x.h.to_bits() != y.h.to_bits()
        {
            return Err("repeated run produced different boxes".into());
        }
    }
    Ok("two identical sessions produce bit-identical box streams".into())
}

fn zero_adapters_match_surrogate() -> CheckOutcome {
    let (mut with_zero, frames) = tiny_session(true, true).map_err(map_err)?;
    let (mut bare, _) = tiny_session(false, true).map_err(map_err)?;
    for f in &frames {
        let a = with_zero.track_frame(f).map_err(map_err)?;
        let b = bare.track_frame(f).map_err(map_err)?;
        if a.x.to_bits() != b.x.to_bits()
            || a.y.to_bits() != b.y.to_bits()
            || a.w.to_bits() != b.w.to_bits()
            || a.h.to_bits() != b.h.to_bits()
        {
            return Err(format!("frame {}: adapted {a:?} vs surrogate {b:?}", f.index));
        }
    }
    Ok("zero-valued adapters reproduce the bare encoder bit for bit".into())
}

//! Independent-oracle integration tests.
//!
//! Every oracle here is a second implementation written from the definition
//! — explicit exponentials for attention, plain counting loops for metrics,
//! central differences for gradients, a straight-line transcript for the
//! memory pool — and the library is required to agree to tight tolerances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualtrack_core::bbox::BoundingBox;
use dualtrack_core::memory::{
    attn_update, CueToken, FilterParams, MemoryBank, MemoryPool, MemoryPoolConfig,
};
use dualtrack_core::metrics::{
    precision_rate, precision_recall_f, success_auc, success_rate, GroundTruth, TrackResult,
};
use dualtrack_core::pipeline::loss::{
    focal_loss, loss_gradients, regression_loss, LossConfig,
};

// ---------------------------------------------------------------------------
// Scaled dot-product attention.

fn softmax_oracle(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn attention_oracle(target: &[Vec<f64>], source: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let scale = 1.0 / (dim as f64).sqrt();
    target
        .iter()
        .map(|q| {
            let logits: Vec<f64> = source
                .iter()
                .map(|k| scale * q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let w = softmax_oracle(&logits);
            (0..dim)
                .map(|d| {
                    q[d] + w
                        .iter()
                        .zip(source)
                        .map(|(wi, v)| wi * v[d])
                        .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

#[test]
fn attention_update_matches_dense_oracle_across_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    for case in 0..50 {
        let dim = rng.random_range(1..=6);
        let n_target = rng.random_range(1..=8);
        let n_source = rng.random_range(1..=8);
        let random_tokens = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..=2.0)).collect())
                .collect()
        };
        let t = random_tokens(&mut rng, n_target);
        let s = random_tokens(&mut rng, n_source);
        let want = attention_oracle(&t, &s, dim);

        let mut target = MemoryBank::from_tokens(
            8,
            t.iter().map(|v| CueToken::new(v.clone()).unwrap()).collect(),
        )
        .unwrap();
        let source = MemoryBank::from_tokens(
            8,
            s.iter().map(|v| CueToken::new(v.clone()).unwrap()).collect(),
        )
        .unwrap();
        attn_update(&mut target, &source).unwrap();

        for (i, row) in want.iter().enumerate() {
            for (d, w) in row.iter().enumerate() {
                let got = target.tokens()[i].values()[d];
                assert!(
                    (got - w).abs() < 1e-12,
                    "case {case}: token {i} component {d}: {got} vs {w}"
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Memory pool transcript.

/// Straight-line reimplementation of init + three updates at H = 2 with unit
/// strides, written against the documented behaviour rather than the code.
fn pool_transcript_oracle(c0: &[f64], updates: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = c0.len();
    let mut short = vec![c0.to_vec()];
    let mut long = vec![c0.to_vec()];
    let mut permanent = vec![c0.to_vec()];
    for c in updates {
        short.push(c.clone());
        if short.len() > 8 {
            short.remove(0);
        }
        let long_before = long.clone();
        long = attention_oracle(&long, &short, dim);
        permanent = attention_oracle(&permanent, &long_before, dim);
    }
    (short, long, permanent)
}

#[test]
fn pool_update_matches_scripted_transcript() {
    let c0 = vec![0.5, -1.0];
    let updates = vec![vec![1.0, 0.25], vec![-0.5, 2.0], vec![0.75, 0.75]];

    let filter = FilterParams::identity_gelu(2).unwrap();
    let mut pool = MemoryPool::new(filter, MemoryPoolConfig::default()).unwrap();
    pool.init(&CueToken::new(c0.clone()).unwrap()).unwrap();
    for u in &updates {
        pool.update(&CueToken::new(u.clone()).unwrap()).unwrap();
    }

    let (short, long, permanent) = pool_transcript_oracle(&c0, &updates);
    let check_tier = |name: &str, got: &MemoryBank, want: &[Vec<f64>]| {
        assert_eq!(got.len(), want.len(), "{name} tier size");
        for (i, row) in want.iter().enumerate() {
            for (d, w) in row.iter().enumerate() {
                let g = got.tokens()[i].values()[d];
                assert!((g - w).abs() < 1e-12, "{name}[{i}][{d}]: {g} vs {w}");
            }
        }
    };
    check_tier("short", pool.short(), &short);
    check_tier("long", pool.long(), &long);
    check_tier("permanent", pool.permanent(), &permanent);
}

#[test]
fn first_update_doubles_every_tier_token() {
    // With all tiers holding exactly c0 and the short tier gaining c0 again,
    // every attention read is a convex combination of copies of c0, so each
    // tier token gains exactly c0.
    let c0 = vec![0.3, -0.7, 1.1];
    let filter = FilterParams::identity_gelu(3).unwrap();
    let mut pool = MemoryPool::new(filter, MemoryPoolConfig::default()).unwrap();
    pool.init(&CueToken::new(c0.clone()).unwrap()).unwrap();
    pool.update(&CueToken::new(c0.clone()).unwrap()).unwrap();
    for bank in [pool.long(), pool.permanent()] {
        assert_eq!(bank.len(), 1);
        for (g, w) in bank.tokens()[0].values().iter().zip(&c0) {
            assert!((g - 2.0 * w).abs() < 1e-12);
        }
    }
}

#[test]
fn strides_follow_the_update_counter() {
    let config = MemoryPoolConfig {
        long_stride: 2,
        permanent_stride: 3,
        ..MemoryPoolConfig::default()
    };
    let c0 = vec![1.0, 0.0];
    let filter = FilterParams::identity_gelu(2).unwrap();
    let mut pool = MemoryPool::new(filter, config).unwrap();
    pool.init(&CueToken::new(c0.clone()).unwrap()).unwrap();

    let long_at = |p: &MemoryPool| p.long().tokens()[0].values().to_vec();
    let perm_at = |p: &MemoryPool| p.permanent().tokens()[0].values().to_vec();

    let l0 = long_at(&pool);
    let p0 = perm_at(&pool);
    pool.update(&CueToken::new(vec![0.5, 0.5]).unwrap()).unwrap();
    // Update 1: 1 % 2 != 0 and 1 % 3 != 0, so neither tier refines.
    assert_eq!(long_at(&pool), l0);
    assert_eq!(perm_at(&pool), p0);
    pool.update(&CueToken::new(vec![0.25, 0.75]).unwrap()).unwrap();
    // Update 2: long refines, permanent still waits.
    assert_ne!(long_at(&pool), l0);
    assert_eq!(perm_at(&pool), p0);
    let l2 = long_at(&pool);
    pool.update(&CueToken::new(vec![0.1, 0.9]).unwrap()).unwrap();
    // Update 3: permanent refines from the long tier as of update 2.
    assert_eq!(long_at(&pool), l2);
    assert_ne!(perm_at(&pool), p0);
}

// ---------------------------------------------------------------------------
// Metrics against plain counting.

#[derive(Clone, Copy, PartialEq, Debug)]
struct OracleBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

fn oracle_iou(a: OracleBox, b: OracleBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn oracle_metrics(
    pairs: &[(Option<OracleBox>, Option<OracleBox>)],
    pr_threshold: f64,
    sr_threshold: f64,
) -> (Option<f64>, Option<f64>, f64, f64, f64) {
    let mut pr_n = 0;
    let mut pr_hit = 0;
    let mut sr_hit = 0;
    let mut np = 0;
    let mut ng = 0;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for &(pred, gt) in pairs {
        let omega = match (pred, gt) {
            (Some(p), Some(g)) => oracle_iou(p, g),
            _ => 0.0,
        };
        if let Some(g) = gt {
            pr_n += 1;
            if let Some(p) = pred {
                let dx = (p.x + p.w / 2.0) - (g.x + g.w / 2.0);
                let dy = (p.y + p.h / 2.0) - (g.y + g.h / 2.0);
                if (dx * dx + dy * dy).sqrt() < pr_threshold {
                    pr_hit += 1;
                }
            }
            if omega >= sr_threshold {
                sr_hit += 1;
            }
        }
        if pred.is_some() {
            np += 1;
            sum_p += omega;
        }
        if gt.is_some() {
            ng += 1;
            sum_g += omega;
        }
    }
    let pr = (pr_n > 0).then(|| pr_hit as f64 / pr_n as f64);
    let sr = (pr_n > 0).then(|| sr_hit as f64 / pr_n as f64);
    let pre = if np > 0 { sum_p / np as f64 } else { 0.0 };
    let re = if ng > 0 { sum_g / ng as f64 } else { 0.0 };
    let f = if pre + re > 0.0 {
        2.0 * pre * re / (pre + re)
    } else {
        0.0
    };
    (pr, sr, pre, re, f)
}

fn to_library(
    pairs: &[(Option<OracleBox>, Option<OracleBox>)],
) -> (TrackResult, GroundTruth) {
    let conv = |b: Option<OracleBox>| b.map(|b| BoundingBox::new(b.x, b.y, b.w, b.h).unwrap());
    (
        TrackResult::new(pairs.iter().map(|&(p, _)| conv(p)).collect()),
        GroundTruth::new(pairs.iter().map(|&(_, g)| conv(g)).collect()),
    )
}

fn compare_case(pairs: &[(Option<OracleBox>, Option<OracleBox>)], label: &str) {
    let (res, gt) = to_library(pairs);
    let (pr, sr, pre, re, f) = oracle_metrics(pairs, 1.5, 0.5);
    match pr {
        Some(want) => {
            let got = precision_rate(&res, &gt, 1.5).unwrap();
            assert!((got - want).abs() < 1e-12, "{label}: pr {got} vs {want}");
        }
        None => assert!(precision_rate(&res, &gt, 1.5).is_err(), "{label}: pr should error"),
    }
    match sr {
        Some(want) => {
            let got = success_rate(&res, &gt, 0.5).unwrap();
            assert!((got - want).abs() < 1e-12, "{label}: sr {got} vs {want}");
        }
        None => assert!(success_rate(&res, &gt, 0.5).is_err(), "{label}: sr should error"),
    }
    let prf = precision_recall_f(&res, &gt).unwrap();
    assert!((prf.precision - pre).abs() < 1e-12, "{label}: pre {} vs {pre}", prf.precision);
    assert!((prf.recall - re).abs() < 1e-12, "{label}: re {} vs {re}", prf.recall);
    assert!((prf.f_score - f).abs() < 1e-12, "{label}: f {} vs {f}", prf.f_score);
}

#[test]
fn metrics_match_counting_oracle_exhaustively() {
    // Every sequence of length 1..=6 over a three-way per-frame alphabet:
    // absent, a fixed box, and a half-overlapping shifted box.
    let a = OracleBox { x: 0.0, y: 0.0, w: 2.0, h: 2.0 };
    let b = OracleBox { x: 1.0, y: 0.0, w: 2.0, h: 2.0 };
    let options = [None, Some(a), Some(b)];
    for len in 1..=6usize {
        let combos = 9usize.pow(len as u32);
        for code in 0..combos {
            let mut c = code;
            let mut pairs = Vec::with_capacity(len);
            for _ in 0..len {
                let pred = options[c % 3];
                let gt = options[(c / 3) % 3];
                c /= 9;
                pairs.push((pred, gt));
            }
            compare_case(&pairs, &format!("len {len} code {code}"));
        }
    }
}

#[test]
fn metrics_match_counting_oracle_on_sampled_grid_boxes() {
    // 10^4 random sequences with boxes drawn from the integer 4x4 grid
    // (positions and sizes in 0..=3 with the box kept inside the grid).
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut grid_boxes = Vec::new();
    for x in 0..4i32 {
        for y in 0..4i32 {
            for w in 1..=(4 - x) {
                for h in 1..=(4 - y) {
                    grid_boxes.push(OracleBox {
                        x: x as f64,
                        y: y as f64,
                        w: w as f64,
                        h: h as f64,
                    });
                }
            }
        }
    }
    assert_eq!(grid_boxes.len(), 100);
    for case in 0..10_000 {
        let len = rng.random_range(1..=6);
        let pairs: Vec<(Option<OracleBox>, Option<OracleBox>)> = (0..len)
            .map(|_| {
                let pick = |rng: &mut ChaCha8Rng| -> Option<OracleBox> {
                    if rng.random_range(0..5) == 0 {
                        None
                    } else {
                        Some(grid_boxes[rng.random_range(0..grid_boxes.len())])
                    }
                };
                (pick(&mut rng), pick(&mut rng))
            })
            .collect();
        compare_case(&pairs, &format!("sampled case {case}"));
    }
}

#[test]
fn success_auc_matches_threshold_sweep_oracle() {
    let a = OracleBox { x: 0.0, y: 0.0, w: 2.0, h: 2.0 };
    let b = OracleBox { x: 1.0, y: 1.0, w: 2.0, h: 2.0 };
    let pairs = vec![(Some(a), Some(a)), (Some(b), Some(a)), (None, Some(a))];
    let (res, gt) = to_library(&pairs);
    let mut want = 0.0;
    for i in 0..=20 {
        let tau = i as f64 / 20.0;
        let mut hits = 0;
        for &(p, g) in &pairs {
            let omega = match (p, g) {
                (Some(p), Some(g)) => oracle_iou(p, g),
                _ => 0.0,
            };
            if omega >= tau {
                hits += 1;
            }
        }
        want += hits as f64 / 3.0;
    }
    want /= 21.0;
    let got = success_auc(&res, &gt).unwrap();
    assert!((got - want).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// Loss gradients against central differences.

#[test]
fn gradients_match_finite_differences_across_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(902);
    let mut checked = 0;
    while checked < 20 {
        let target = BoundingBox::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(1.0..4.0),
            rng.random_range(1.0..4.0),
        )
        .unwrap();
        let pred = BoundingBox::new(
            target.x + rng.random_range(0.1..1.2) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            target.y + rng.random_range(0.1..1.2) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            target.w + rng.random_range(0.1..0.9) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            target.h + rng.random_range(0.1..0.9) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        )
        .unwrap();
        let p_t = rng.random_range(0.1..0.95);
        let cfg = LossConfig::default();
        // Skip configurations too close to a kink for stable differences.
        let Ok(g) = loss_gradients(&pred, &target, p_t, &cfg) else {
            continue;
        };
        checked += 1;

        let h = 1e-6;
        for i in 0..4 {
            let mut plus = [pred.x, pred.y, pred.w, pred.h];
            let mut minus = plus;
            plus[i] += h;
            minus[i] -= h;
            let make = |v: [f64; 4]| BoundingBox::new(v[0], v[1], v[2], v[3]).unwrap();
            let fd = (regression_loss(&make(plus), &target, &cfg).unwrap()
                - regression_loss(&make(minus), &target, &cfg).unwrap())
                / (2.0 * h);
            let rel = (g.d_box[i] - fd).abs() / g.d_box[i].abs().max(1.0);
            assert!(
                rel < 1e-4,
                "coordinate {i}: analytic {} vs fd {fd} (pred {pred:?}, target {target:?})",
                g.d_box[i]
            );
        }
        let fd_prob = (focal_loss(&[p_t + h], &[true], &cfg).unwrap()
            - focal_loss(&[p_t - h], &[true], &cfg).unwrap())
            / (2.0 * h);
        let rel = (g.d_prob - fd_prob).abs() / g.d_prob.abs().max(1.0);
        assert!(rel < 1e-4, "d_prob {} vs fd {fd_prob} at p {p_t}", g.d_prob);
    }
}

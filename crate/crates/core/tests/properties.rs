//! Randomised property tests for the documented invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualtrack_core::bbox::{giou, iou, BoundingBox};
use dualtrack_core::freq::{decompose, select_fuse, FreqSelectorParams};
use dualtrack_core::io;
use dualtrack_core::kernel::{softmax_slice, FeatureMap, Modality, Tensor};
use dualtrack_core::memory::{CueToken, FilterParams, MemoryBank, MemoryPool, MemoryPoolConfig};
use dualtrack_core::metrics::{
    precision_rate, precision_recall_f, success_rate, GroundTruth, TrackResult,
};
use dualtrack_core::pipeline::loss::{focal_loss, regression_loss, LossConfig};
use dualtrack_core::tokens::{map_to_tokens, tokens_to_map};

fn box_strategy() -> impl Strategy<Value = BoundingBox> {
    (
        -10.0..10.0f64,
        -10.0..10.0f64,
        0.1..8.0f64,
        0.1..8.0f64,
    )
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

fn frame_list_strategy(
    min_len: usize,
) -> impl Strategy<Value = Vec<(Option<BoundingBox>, Option<BoundingBox>)>> {
    prop::collection::vec(
        (
            prop::option::weighted(0.8, box_strategy()),
            prop::option::weighted(0.8, box_strategy()),
        ),
        min_len..10,
    )
}

fn split_pairs(
    pairs: &[(Option<BoundingBox>, Option<BoundingBox>)],
) -> (TrackResult, GroundTruth) {
    (
        TrackResult::new(pairs.iter().map(|p| p.0).collect()),
        GroundTruth::new(pairs.iter().map(|p| p.1).collect()),
    )
}

proptest! {
    #[test]
    fn softmax_normalises_and_ignores_shifts(
        values in prop::collection::vec(-50.0..50.0f64, 1..9),
        shift in -100.0..100.0f64,
    ) {
        let out = softmax_slice(&values).unwrap();
        let sum: f64 = out.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for &p in &out {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let out2 = softmax_slice(&shifted).unwrap();
        for (a, b) in out.iter().zip(&out2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn giou_bounded_and_below_iou(a in box_strategy(), b in box_strategy()) {
        let i = iou(&a, &b).unwrap();
        let g = giou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!(g > -1.0 && g <= 1.0);
        prop_assert!(g <= i + 1e-12);
    }

    #[test]
    fn giou_equals_iou_for_nested_boxes(
        x in -5.0..5.0f64,
        y in -5.0..5.0f64,
        w in 1.0..6.0f64,
        h in 1.0..6.0f64,
        fx in 0.1..0.9f64,
        fy in 0.1..0.9f64,
        fw in 0.05..0.5f64,
    ) {
        // Inner box strictly inside the outer: enclosure equals union.
        let outer = BoundingBox::new(x, y, w, h).unwrap();
        let iw = w * fw;
        let ih = h * fw;
        let inner = BoundingBox::new(
            x + fx * (w - iw),
            y + fy * (h - ih),
            iw,
            ih,
        ).unwrap();
        let i = iou(&outer, &inner).unwrap();
        let g = giou(&outer, &inner).unwrap();
        prop_assert!((g - i).abs() < 1e-12);
    }

    #[test]
    fn fifo_keeps_newest_in_order(
        capacity in 1usize..8,
        values in prop::collection::vec(-10.0..10.0f64, 1..20),
    ) {
        let mut bank = MemoryBank::new(capacity).unwrap();
        for &v in &values {
            bank.push_fifo(CueToken::new(vec![v]).unwrap()).unwrap();
        }
        let kept: Vec<f64> = bank.tokens().iter().map(|t| t.values()[0]).collect();
        let start = values.len().saturating_sub(capacity);
        prop_assert_eq!(kept, values[start..].to_vec());
    }

    #[test]
    fn retrieval_weights_normalise_and_reads_stay_in_hull(
        seed in any::<u64>(),
        query in prop::collection::vec(-3.0..3.0f64, 2..5),
        pushes in prop::collection::vec(-3.0..3.0f64, 1..12),
    ) {
        let dim = query.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filter = FilterParams::seeded(dim, 1, &mut rng).unwrap();
        let mut pool = MemoryPool::new(filter, MemoryPoolConfig::default()).unwrap();
        pool.init(&CueToken::new(query.clone()).unwrap()).unwrap();
        for &v in &pushes {
            let token: Vec<f64> = (0..dim).map(|i| v + i as f64 * 0.25).collect();
            pool.update(&CueToken::new(token).unwrap()).unwrap();
        }
        let r = pool.retrieve_detailed(&CueToken::new(query).unwrap()).unwrap();
        for (tier, bank) in [
            (&r.short, pool.short()),
            (&r.long, pool.long()),
            (&r.permanent, pool.permanent()),
        ] {
            let sum: f64 = tier.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert_eq!(tier.weights.len(), bank.len());
            // Convexity: each read component lies within the tier's range.
            for d in 0..dim {
                let lo = bank.tokens().iter().map(|t| t.values()[d]).fold(f64::INFINITY, f64::min);
                let hi = bank.tokens().iter().map(|t| t.values()[d]).fold(f64::NEG_INFINITY, f64::max);
                let v = tier.read.values()[d];
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
        for d in 0..r.combined.dim() {
            let want = r.short.read.values()[d] + r.long.read.values()[d] + r.permanent.read.values()[d];
            prop_assert!((r.combined.values()[d] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn success_rate_monotone_under_threshold(
        pairs in frame_list_strategy(1),
        t1 in 0.0..1.0f64,
        t2 in 0.0..1.0f64,
    ) {
        prop_assume!(pairs.iter().any(|p| p.1.is_some()));
        let (res, gt) = split_pairs(&pairs);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = success_rate(&res, &gt, lo).unwrap();
        let b = success_rate(&res, &gt, hi).unwrap();
        prop_assert!(a >= b);
    }

    #[test]
    fn metrics_survive_frame_permutation(
        pairs in frame_list_strategy(2),
        perm_seed in any::<u64>(),
    ) {
        prop_assume!(pairs.iter().any(|p| p.1.is_some()));
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<_> = order.iter().map(|&i| pairs[i]).collect();

        let (res_a, gt_a) = split_pairs(&pairs);
        let (res_b, gt_b) = split_pairs(&shuffled);
        let pr_a = precision_rate(&res_a, &gt_a, 2.0).unwrap();
        let pr_b = precision_rate(&res_b, &gt_b, 2.0).unwrap();
        prop_assert!((pr_a - pr_b).abs() < 1e-12);
        let sr_a = success_rate(&res_a, &gt_a, 0.5).unwrap();
        let sr_b = success_rate(&res_b, &gt_b, 0.5).unwrap();
        prop_assert!((sr_a - sr_b).abs() < 1e-12);
        let fa = precision_recall_f(&res_a, &gt_a).unwrap();
        let fb = precision_recall_f(&res_b, &gt_b).unwrap();
        prop_assert!((fa.precision - fb.precision).abs() < 1e-12);
        prop_assert!((fa.recall - fb.recall).abs() < 1e-12);
        prop_assert!((fa.f_score - fb.f_score).abs() < 1e-12);
    }

    #[test]
    fn f_score_respects_harmonic_mean_identities(pairs in frame_list_strategy(1)) {
        let (res, gt) = split_pairs(&pairs);
        let m = precision_recall_f(&res, &gt).unwrap();
        for v in [m.precision, m.recall, m.f_score] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f_score <= 2.0 * m.precision + 1e-12);
        prop_assert!(m.f_score <= 2.0 * m.recall + 1e-12);
        if (m.precision - m.recall).abs() < 1e-15 && !m.degenerate {
            prop_assert!((m.f_score - m.precision).abs() < 1e-12);
        }
    }

    #[test]
    fn box_files_roundtrip_bitwise(pairs in frame_list_strategy(1)) {
        let boxes: Vec<Option<BoundingBox>> = pairs.iter().map(|p| p.0).collect();
        let parsed = io::boxes_from_str(&io::boxes_to_string(&boxes)).unwrap();
        prop_assert_eq!(parsed.len(), boxes.len());
        for (a, b) in boxes.iter().zip(&parsed) {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
                    prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
                    prop_assert_eq!(a.w.to_bits(), b.w.to_bits());
                    prop_assert_eq!(a.h.to_bits(), b.h.to_bits());
                }
                _ => prop_assert!(false, "presence flipped"),
            }
        }
    }

    #[test]
    fn snapshots_roundtrip_bitwise(
        dim in 1usize..5,
        pushes in prop::collection::vec(-5.0..5.0f64, 0..12),
    ) {
        let filter = FilterParams::identity_gelu(dim).unwrap();
        let mut pool = MemoryPool::new(filter, MemoryPoolConfig::default()).unwrap();
        pool.init(&CueToken::new(vec![0.5; dim]).unwrap()).unwrap();
        for &v in &pushes {
            let token: Vec<f64> = (0..dim).map(|i| v * (i as f64 + 1.0)).collect();
            pool.update(&CueToken::new(token).unwrap()).unwrap();
        }
        let snap = io::Snapshot::of_pool(&pool);
        let back = io::snapshot_from_str(&io::snapshot_to_string(&snap)).unwrap();
        prop_assert_eq!(back, snap);
    }

    #[test]
    fn losses_are_non_negative(
        p in 0.0..=1.0f64,
        foreground in any::<bool>(),
        a in box_strategy(),
        b in box_strategy(),
    ) {
        let cfg = LossConfig::default();
        prop_assert!(focal_loss(&[p], &[foreground], &cfg).unwrap() >= 0.0);
        prop_assert!(regression_loss(&a, &b, &cfg).unwrap() >= 0.0);
    }

    #[test]
    fn token_map_conversion_roundtrips(
        dim in 1usize..6,
        grid in 1usize..4,
        seed in any::<u64>(),
    ) {
        let count = grid * grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let tokens: Vec<f64> = (0..count * dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let map = tokens_to_map(&tokens, count, dim, Modality::Aux).unwrap();
        prop_assert_eq!(map.channels(), dim);
        prop_assert_eq!(map.height() * map.width(), count);
        let back = map_to_tokens(&map);
        prop_assert_eq!(back, tokens);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frequency_split_reconstructs_and_recombination_is_gated(
        seed in any::<u64>(),
        channels in 1usize..4,
        height in 2usize..7,
        width in 2usize..7,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let params = FreqSelectorParams::seeded(channels, 3, 2, &mut rng).unwrap();
        let x = FeatureMap::from_fn(Modality::Rgb, channels, height, width, |_| {
            rng.random_range(-3.0..=3.0)
        })
        .unwrap();
        let pair = decompose(&x, &params).unwrap();
        for i in 0..x.data().len() {
            let err = (pair.high.data()[i] + pair.low.data()[i] - x.data()[i]).abs();
            prop_assert!(err < 1e-12);
        }
        let fused = select_fuse(&pair, &params).unwrap();
        // Sigmoid gates lie in (0, 1), so the recombination is bounded by
        // the component magnitudes.
        for i in 0..x.data().len() {
            let bound = pair.high.data()[i].abs() + pair.low.data()[i].abs() + 1e-12;
            prop_assert!(fused.data()[i].abs() <= bound);
        }
    }

    #[test]
    fn random_tensor_construction_validates_volume(
        c in 1usize..4,
        h in 1usize..5,
        w in 1usize..5,
    ) {
        let good = Tensor::zeros(&[c, h, w]).unwrap();
        prop_assert_eq!(good.len(), c * h * w);
        let short = vec![0.0; c * h * w + 1];
        prop_assert!(Tensor::new(&[c, h, w], short).is_err());
    }
}

use capgen::augment::{augment_pipeline, flip, image_rng, solve_homography, warp_perspective, AugmentConfig, FlipAxis, Homography, Image};
use capgen::captioner::{CaptionModel, ModelConfig, Variant};
use capgen::features::FeatureSet;
use capgen::tensor::{log_softmax, softmax, Graph, Tensor};
use capgen::text::Vocabulary;
use capgen::train::{decode_checkpoint, encode_checkpoint, Checkpoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_image() -> impl Strategy<Value = Image> {
    (1usize..10, 1usize..10, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(h, w, c)| {
        proptest::collection::vec(any::<u8>(), h * w * c).prop_map(move |p| Image::new(h, w, c, p).unwrap())
    })
}

fn model(variant: Variant, seed: u64) -> CaptionModel<f64> {
    let cfg = ModelConfig {
        variant,
        vocab_size: 7,
        embed_dim: 4,
        feature_dim: 3,
        hidden: 5,
        attention_dim: 4,
        layers: 2,
    };
    CaptionModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn features(rows: usize, seed: u64) -> FeatureSet<f64> {
    FeatureSet::new("f", Tensor::uniform(&[rows, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))).unwrap()
}

fn permuted(f: &FeatureSet<f64>, perm: &[usize]) -> FeatureSet<f64> {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| f.annotations.row(i).to_vec()).collect();
    FeatureSet::new("f", Tensor::from_rows(&rows).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flips_preserve_the_pixel_multiset(img in arb_image()) {
        let mut before: Vec<&[u8]> = (0..img.height()).flat_map(|r| (0..img.width()).map(move |c| (r, c))).map(|(r, c)| img.pixel(r, c)).collect();
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let f = flip(&img, axis);
            let mut after: Vec<&[u8]> = (0..f.height()).flat_map(|r| (0..f.width()).map(move |c| (r, c))).map(|(r, c)| f.pixel(r, c)).collect();
            before.sort();
            after.sort();
            prop_assert_eq!(&before, &after);
        }
    }

    #[test]
    fn identity_warp_is_exact(img in arb_image()) {
        prop_assert_eq!(warp_perspective(&img, &Homography::identity(), 0).unwrap(), img);
    }

    #[test]
    fn pipeline_is_determined_by_seed(img in arb_image(), seed in any::<u64>(), epoch in 0usize..5, index in 0usize..50) {
        let cfg = AugmentConfig::default();
        let a = augment_pipeline(&img, &cfg, &mut image_rng(seed, epoch, index)).unwrap();
        let b = augment_pipeline(&img, &cfg, &mut image_rng(seed, epoch, index)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn homography_reprojects_convex_quads(
        jitter in proptest::collection::vec(0.0f64..0.3, 8),
        scale in 5.0f64..200.0,
    ) {
        let src = [(0.0, 0.0), (scale, 0.0), (scale, scale), (0.0, scale)];
        let sign = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut dst = src;
        for (i, p) in dst.iter_mut().enumerate() {
            *p = (p.0 + sign[i].0 * jitter[2 * i] * scale, p.1 + sign[i].1 * jitter[2 * i + 1] * scale);
        }
        let h = solve_homography(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let (x, y) = h.project(*s).unwrap();
            prop_assert!((x - d.0).abs() < 1e-6 && (y - d.1).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_is_a_distribution(v in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
        let p = softmax(&v).unwrap();
        let lp = log_softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&lp) {
            prop_assert!(*a > 0.0);
            prop_assert!((a.ln() - b).abs() < 1e-9);
        }
    }

    #[test]
    fn reverse_mode_matches_finite_differences(
        a in proptest::collection::vec(-1.0f64..1.0, 6),
        b in proptest::collection::vec(-1.0f64..1.0, 6),
        target in 0usize..3,
    ) {
        let loss_of = |a: &[f64]| -> (f64, Vec<f64>) {
            let mut g = Graph::new();
            let x = g.constant(Tensor::matrix(2, 3, a.to_vec()).unwrap());
            let w = g.constant(Tensor::matrix(3, 2, b.clone()).unwrap());
            let h = g.matmul(x, w).unwrap();
            let h = g.tanh(h);
            let wt = g.transpose(w).unwrap();
            let logits = g.matmul(h, wt).unwrap();
            let loss = g.cross_entropy(logits, &[target, (target + 1) % 3], &[true, true]).unwrap();
            let value = g.value(loss).data()[0];
            let grads = g.backward(loss).unwrap();
            (value, grads.get(x).map(|t| t.data().to_vec()).unwrap_or_default())
        };
        let (_, analytic) = loss_of(&a);
        prop_assert_eq!(analytic.len(), 6);
        let step = 1e-6;
        for i in 0..6 {
            let mut plus = a.clone();
            plus[i] += step;
            let mut minus = a.clone();
            minus[i] -= step;
            let fd = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * step);
            prop_assert!((fd - analytic[i]).abs() / fd.abs().max(1.0) < 1e-6, "{} vs {}", fd, analytic[i]);
        }
    }

    #[test]
    fn attention_weights_stay_on_the_simplex(seed in 0u64..1000, rows in 1usize..7) {
        let m = model(Variant::SoftAttention, seed);
        let d = m.greedy_decode(&features(rows, seed), 6).unwrap();
        prop_assert!(!d.alphas.is_empty());
        for alpha in &d.alphas {
            prop_assert_eq!(alpha.len(), rows);
            prop_assert!(alpha.iter().all(|&x| x > 0.0));
            prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn permuting_annotations_permutes_attention(seed in 0u64..1000, perm in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let m = model(Variant::SoftAttention, seed);
        let f = features(5, seed + 1);
        let g = permuted(&f, &perm);
        let (a, b) = (m.greedy_decode(&f, 5).unwrap(), m.greedy_decode(&g, 5).unwrap());
        prop_assert_eq!(&a.tokens, &b.tokens);
        prop_assert!((a.log_prob - b.log_prob).abs() < 1e-9);
        for (x, y) in a.alphas.iter().zip(&b.alphas) {
            for (j, &i) in perm.iter().enumerate() {
                prop_assert!((y[j] - x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoder_decoder_sees_only_the_mean(seed in 0u64..1000, shift in -0.5f64..0.5) {
        let m = model(Variant::EncoderDecoder, seed);
        let f = features(4, seed);
        // Opposite shifts on two rows keep the mean.
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| f.annotations.row(i).to_vec()).collect();
        for c in 0..3 {
            rows[0][c] += shift;
            rows[3][c] -= shift;
        }
        let g = FeatureSet::new("f", Tensor::from_rows(&rows).unwrap()).unwrap();
        let (a, b) = (m.greedy_decode(&f, 6).unwrap(), m.greedy_decode(&g, 6).unwrap());
        prop_assert_eq!(a.tokens, b.tokens);
        prop_assert!((a.log_prob - b.log_prob).abs() < 1e-9);
    }

    #[test]
    fn vocabulary_round_trips(words in proptest::collection::btree_set("[a-z]{1,6}", 1..20)) {
        let vocab = Vocabulary::from_tokens(words.iter().cloned()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        prop_assert_eq!(back.tokens(), vocab.tokens());
        let sentence: Vec<String> = words.iter().take(5).cloned().collect();
        let encoded = vocab.encode(&sentence, sentence.len() + 2).unwrap();
        prop_assert_eq!(vocab.decode(encoded.tokens()), sentence);
    }

    #[test]
    fn checkpoints_round_trip_bytes(seed in 0u64..1000, attention in any::<bool>()) {
        let variant = if attention { Variant::SoftAttention } else { Variant::EncoderDecoder };
        let ckpt = Checkpoint { model: model(variant, seed), optimizer: None, vocab: None, train_config: None };
        let bytes = encode_checkpoint(&ckpt);
        let back = decode_checkpoint::<f64>(&bytes).unwrap();
        prop_assert_eq!(&back.model, &ckpt.model);
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }
}

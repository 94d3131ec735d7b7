use std::collections::BTreeSet;

use fidel_core::augment::{augment_split, AugmentationSpec, SplitCounts, Transform};
use fidel_core::glyph::{split_by_writer, SplitKind, SplitRatio};
use fidel_core::model::{ConvStage, HeadSizes};
use fidel_core::ops::{conv2d_forward, dropout, softmax};
use fidel_core::train::multitask_loss;
use fidel_core::{AlphabetGrid, GlyphImage, LabelTriple, ModelConfig, MultiHeadOutput, RngStream, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conv_output_shape_law(h in 1usize..12, w in 1usize..12, n in 1usize..8, cin in 1usize..4, cout in 1usize..5) {
        prop_assume!(n <= h && n <= w);
        let x = Tensor::<f32>::full(&[h, w, cin], 0.5);
        let f = Tensor::<f32>::full(&[n, n, cin, cout], 0.1);
        let b = Tensor::<f32>::zeros(&[cout]);
        let y = conv2d_forward(&x, &f, &b).unwrap();
        prop_assert_eq!(y.shape(), &[h - n + 1, w - n + 1, cout]);
    }
}

proptest! {
    #[test]
    fn oversized_filters_are_rejected(h in 1usize..6, extra in 1usize..4) {
        let x = Tensor::<f32>::zeros(&[h, h, 1]);
        let n = h + extra;
        let f = Tensor::<f32>::zeros(&[n, n, 1, 1]);
        prop_assert!(conv2d_forward(&x, &f, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn model_configs_build_exactly_when_integral(canvas in 4usize..40, n1 in 1usize..8, n2 in 1usize..8) {
        let config = ModelConfig {
            canvas,
            conv_stages: vec![ConvStage { filter_size: n1, filters: 2 }, ConvStage { filter_size: n2, filters: 2 }],
            hidden: 4,
            heads: HeadSizes { labels: 6, rows: 3, cols: 2 },
            keep_prob: 0.5,
        };
        // independent recomputation of the spatial trace
        let mut side = canvas as i64;
        let mut ok = true;
        for n in [n1, n2] {
            side -= n as i64 - 1;
            if side <= 0 || side % 2 != 0 {
                ok = false;
                break;
            }
            side /= 2;
        }
        prop_assert_eq!(config.trace().is_ok(), ok);
        if ok {
            prop_assert_eq!(config.trace().unwrap().flatten, (side * side * 2) as usize);
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn eval_dropout_is_identity(values in prop::collection::vec(-10.0f32..10.0, 1..64), keep in 0.05f64..1.0, seed: u64) {
        let x = Tensor::from_vec(values);
        let (y, _) = dropout(&x, keep, &mut RngStream::new(seed, 0), false).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }

    #[test]
    fn writer_splits_are_disjoint(writers in 12usize..40, per_writer in 1usize..4, seed: u64) {
        let samples: Vec<GlyphImage> = (0..writers)
            .flat_map(|w| (0..per_writer).map(move |k| GlyphImage::blank(8, format!("w{w}"), k as u16 + 1)))
            .collect();
        let (splits, partition) = split_by_writer(samples, SplitRatio::DEFAULT, seed).unwrap();
        let sets: Vec<BTreeSet<&str>> = [&splits.train, &splits.val, &splits.test]
            .iter()
            .map(|s| s.iter().map(|g| g.writer.as_str()).collect())
            .collect();
        prop_assert!(sets[0].is_disjoint(&sets[1]));
        prop_assert!(sets[0].is_disjoint(&sets[2]));
        prop_assert!(sets[1].is_disjoint(&sets[2]));
        prop_assert_eq!(sets.iter().map(BTreeSet::len).sum::<usize>(), writers);
        prop_assert_eq!(splits.train.len() + splits.val.len() + splits.test.len(), writers * per_writer);
        prop_assert!(!partition.val.is_empty() && !partition.test.is_empty());
    }

    #[test]
    fn dense_grid_round_trip(rows in 1u16..=34, cols in 1u16..=9) {
        let grid = AlphabetGrid::dense(rows, cols).unwrap();
        for label in 1..=grid.num_labels() {
            let (r, c) = grid.label_to_grid(label).unwrap();
            prop_assert_eq!(label, (r - 1) * cols + c);
            prop_assert_eq!(grid.grid_to_label(r, c).unwrap(), Some(label));
        }
    }

    #[test]
    fn augmentation_counts_bounds_and_labels(
        classes in 1u16..5,
        sources in 1usize..4,
        extra in 0usize..6,
        seed: u64,
    ) {
        let samples: Vec<GlyphImage> = (1..=classes)
            .flat_map(|label| {
                (0..sources).map(move |k| {
                    let mut g = GlyphImage::blank(12, format!("w{k}"), label);
                    g.pixels.set(&[4 + k, 5, 0], 0.0);
                    g
                })
            })
            .collect();
        let target = sources + extra;
        let spec = AugmentationSpec {
            per_class: SplitCounts { train: target, val: target, test: target },
            seed,
            ..AugmentationSpec::default()
        };
        let out = augment_split(&samples, &spec, target, SplitKind::Train).unwrap();
        for label in 1..=classes {
            prop_assert_eq!(out.images.iter().filter(|g| g.label == label).count(), target);
        }
        for (img, log) in out.images.iter().zip(&out.log) {
            prop_assert_eq!(img.label, log.class);
            prop_assert!(img.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
            for t in &log.transforms {
                match *t {
                    Transform::Rotate(d) => prop_assert!((-15.0..=15.0).contains(&d)),
                    Transform::Shrink(f) => prop_assert!((0.70..=0.87).contains(&f)),
                    Transform::Noise(d) => prop_assert_eq!(d, 0.02),
                }
            }
        }
        let generated = out.log.iter().filter(|l| !l.transforms.is_empty()).count();
        prop_assert_eq!(generated, classes as usize * extra);
    }

    #[test]
    fn total_loss_is_affine_in_each_alpha(seed: u64, a2 in 0.0f64..2.0, a3 in 0.0f64..2.0, delta in 0.01f64..1.0) {
        let mut rng = RngStream::new(seed, 0);
        let b = 5;
        let out = MultiHeadOutput {
            label_logits: Tensor::<f64>::from_fn(&[b, 6], |_| rng.uniform_in(-4.0, 4.0)),
            row_logits: Tensor::from_fn(&[b, 3], |_| rng.uniform_in(-4.0, 4.0)),
            col_logits: Tensor::from_fn(&[b, 2], |_| rng.uniform_in(-4.0, 4.0)),
        };
        let targets: Vec<LabelTriple> = (0..b)
            .map(|_| LabelTriple { label: rng.below(6) as u16 + 1, row: rng.below(3) as u16 + 1, col: rng.below(2) as u16 + 1 })
            .collect();
        let base = [1.0, a2, a3];
        let (l0, _) = multitask_loss(&out, &targets, base, &[], 0.0).unwrap();
        let per_task = [l0.label, l0.row, l0.col];
        for i in 0..3 {
            let mut alphas = base;
            alphas[i] += delta;
            let (l1, _) = multitask_loss(&out, &targets, alphas, &[], 0.0).unwrap();
            prop_assert!((l1.total - l0.total - delta * per_task[i]).abs() < 1e-9 * (1.0 + l0.total));
        }
    }
}

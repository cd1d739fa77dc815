//! Augmentation operations and their selective application to the
//! samples picked by a selection mask.

mod batch;
mod ops;

pub use batch::{Image, LabeledBatch, SelectionMask};
pub use ops::{
    apply_plan, apply_selected, apply_transform, cutmix, cutout, erase, mix_images, mix_labels,
    mixup, paste_region, rand_transform, AugOp, AugPlan, AugTag, Region, SampleDraw,
    SelectiveBatch, Transform, TransformMagnitudes, FILL_VALUE,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_hot(c: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; c];
        v[k] = 1.0;
        v
    }

    fn random_batch(b: usize, side: usize, seed: u64) -> LabeledBatch {
        let mut rng = seeded(seed);
        let images = (0..b)
            .map(|_| {
                let px = (0..side * side).map(|_| rng.random::<f64>()).collect();
                Image::new(side, side, 1, px).unwrap()
            })
            .collect();
        let labels = (0..b).map(|i| one_hot(4, i % 4)).collect();
        LabeledBatch::new(images, labels, (100..100 + b as u64).collect()).unwrap()
    }

    fn ops() -> Vec<AugOp> {
        vec![
            AugOp::Mixup { alpha: 1.0 },
            AugOp::CutMix { alpha: 1.0 },
            AugOp::Cutout { hole: 3 },
            AugOp::RandTransform(TransformMagnitudes::default()),
        ]
    }

    fn two_sample(a: f64, b: f64) -> LabeledBatch {
        LabeledBatch::new(
            vec![Image::filled(2, 2, 1, a), Image::filled(2, 2, 1, b)],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn mixup_lambda_one_is_identity() {
        let batch = random_batch(4, 5, 1);
        let plan = AugPlan {
            draws: (0..4)
                .map(|i| SampleDraw::Mix {
                    partner: (i + 1) % 4,
                    lambda: 1.0,
                })
                .collect(),
        };
        let out = apply_plan(&batch, &SelectionMask::all(4), &plan).unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn mixup_formula() {
        let batch = two_sample(1.0, 0.0);
        let plan = AugPlan {
            draws: vec![
                SampleDraw::Mix {
                    partner: 1,
                    lambda: 0.3,
                },
                SampleDraw::Mix {
                    partner: 0,
                    lambda: 0.3,
                },
            ],
        };
        let out = apply_plan(&batch, &SelectionMask::from_indices(2, &[0]), &plan).unwrap();
        assert!(out.images[0]
            .pixels
            .iter()
            .all(|&p| (p - 0.3).abs() < 1e-15));
        assert!((out.labels[0][0] - 0.3).abs() < 1e-15);
        assert!((out.labels[0][1] - 0.7).abs() < 1e-15);
        assert_eq!(out.images[1], batch.images[1]);
    }

    #[test]
    fn all_false_mask_leaves_batch_unchanged() {
        let batch = random_batch(6, 6, 2);
        for op in ops() {
            let s = apply_selected(&batch, &SelectionMask::none(6), &op, &mut seeded(3)).unwrap();
            assert_eq!(s.batch, batch);
            assert!(s.augmented_ids.is_empty());
            assert_eq!(s.original_ids, batch.ids);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let empty = LabeledBatch::new(vec![], vec![], vec![]).unwrap();
        assert!(mixup(&empty, &SelectionMask::none(0), 1.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let batch = random_batch(2, 6, 4);
        let m = SelectionMask::all(2);
        assert!(mixup(&batch, &m, 0.0, &mut seeded(0)).is_err());
        assert!(cutout(&batch, &m, 0, &mut seeded(0)).is_err());
        assert!(cutout(&batch, &m, 7, &mut seeded(0)).is_err());
        let too_far = TransformMagnitudes { shift: 4, erase: 2 };
        assert!(rand_transform(&batch, &m, too_far, &mut seeded(0)).is_err());
    }

    #[test]
    fn cutmix_area_ratio() {
        let batch = LabeledBatch::new(
            vec![Image::filled(8, 8, 1, 0.0), Image::filled(8, 8, 1, 1.0)],
            vec![one_hot(2, 0), one_hot(2, 1)],
            vec![0, 1],
        )
        .unwrap();
        let region = Region::centered(4, 4, 4, 4, 8, 8);
        assert_eq!(region.area(), 16);
        let plan = AugPlan {
            draws: vec![
                SampleDraw::Paste { partner: 1, region },
                SampleDraw::Paste { partner: 0, region },
            ],
        };
        let out = apply_plan(&batch, &SelectionMask::from_indices(2, &[0]), &plan).unwrap();
        assert!((out.labels[0][0] - 0.75).abs() < 1e-15);
        assert_eq!(
            out.images[0].pixels.iter().filter(|&&p| p == 1.0).count(),
            16
        );
    }

    #[test]
    fn cutmix_zero_area_is_identity() {
        let batch = random_batch(2, 8, 5);
        let region = Region::centered(0, 0, 0, 0, 8, 8);
        let plan = AugPlan {
            draws: vec![
                SampleDraw::Paste { partner: 1, region },
                SampleDraw::Paste { partner: 0, region },
            ],
        };
        let out = apply_plan(&batch, &SelectionMask::all(2), &plan).unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn cutmix_effective_lambda_matches_pasted_fraction() {
        // Base all zeros and donor all ones, so pasted pixels are countable.
        let batch = LabeledBatch::new(
            vec![Image::filled(8, 8, 1, 0.0), Image::filled(8, 8, 1, 1.0)],
            vec![one_hot(2, 0), one_hot(2, 1)],
            vec![0, 1],
        )
        .unwrap();
        let mut rng = seeded(6);
        let op = AugOp::CutMix { alpha: 1.0 };
        let mut seen = 0;
        while seen < 1000 {
            let plan = AugPlan::draw(&op, &batch, &mut rng).unwrap();
            let SampleDraw::Paste { partner, .. } = plan.draws[0] else {
                unreachable!()
            };
            if partner != 1 {
                continue;
            }
            seen += 1;
            let out = apply_plan(&batch, &SelectionMask::from_indices(2, &[0]), &plan).unwrap();
            let pasted = out.images[0].pixels.iter().filter(|&&p| p == 1.0).count();
            let lam = out.labels[0][0];
            assert!((0.0..=1.0).contains(&lam));
            assert!((lam - (1.0 - pasted as f64 / 64.0)).abs() < 1e-12);
            assert!((out.labels[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cutout_full_hole_fills_everything() {
        let batch = random_batch(1, 6, 7);
        let plan = AugPlan {
            draws: vec![SampleDraw::Erase(Region::centered(3, 3, 6, 6, 6, 6))],
        };
        let out = apply_plan(&batch, &SelectionMask::all(1), &plan).unwrap();
        assert!(out.images[0].pixels.iter().all(|&p| p == FILL_VALUE));
    }

    #[test]
    fn region_clipping_matches_brute_force() {
        let (h, w) = (7, 9);
        for hole in 1..=7 {
            for cy in 0..h {
                for cx in 0..w {
                    let r = Region::centered(cy, cx, hole, hole, h, w);
                    let start_y = cy as i64 - (hole / 2) as i64;
                    let start_x = cx as i64 - (hole / 2) as i64;
                    let mut count = 0;
                    for y in 0..h as i64 {
                        for x in 0..w as i64 {
                            if y >= start_y
                                && y < start_y + hole as i64
                                && x >= start_x
                                && x < start_x + hole as i64
                            {
                                count += 1;
                            }
                        }
                    }
                    assert_eq!(r.area(), count, "hole {hole} at ({cy},{cx})");
                }
            }
        }
    }

    #[test]
    fn cutout_erased_count_equals_box_area() {
        let batch = LabeledBatch::new(
            vec![Image::filled(8, 8, 1, 1.0)],
            vec![one_hot(2, 0)],
            vec![0],
        )
        .unwrap();
        let mut rng = seeded(8);
        for _ in 0..200 {
            let plan = AugPlan::draw(&AugOp::Cutout { hole: 5 }, &batch, &mut rng).unwrap();
            let SampleDraw::Erase(region) = plan.draws[0] else {
                unreachable!()
            };
            let out = apply_plan(&batch, &SelectionMask::all(1), &plan).unwrap();
            let erased = out.images[0]
                .pixels
                .iter()
                .filter(|&&p| p == FILL_VALUE)
                .count();
            assert_eq!(erased, region.area());
            assert_eq!(out.labels, batch.labels);
        }
    }

    #[test]
    fn hflip_is_an_involution() {
        let batch = random_batch(1, 5, 9);
        let once = apply_transform(&batch.images[0], &Transform::HFlip).unwrap();
        assert_ne!(once, batch.images[0]);
        let twice = apply_transform(&once, &Transform::HFlip).unwrap();
        assert_eq!(twice, batch.images[0]);
    }

    #[test]
    fn rotate90_turns_vertical_bar_horizontal() {
        let n = 6;
        let col = 1;
        let mut img = Image::filled(n, n, 1, 0.0);
        for y in 0..n {
            img.set(y, col, 0, 1.0);
        }
        let rot = apply_transform(&img, &Transform::Rotate90).unwrap();
        for y in 0..n {
            for x in 0..n {
                let expected = if y == n - 1 - col { 1.0 } else { 0.0 };
                assert_eq!(rot.at(y, x, 0), expected);
            }
        }
        let mut r = img.clone();
        for _ in 0..4 {
            r = apply_transform(&r, &Transform::Rotate90).unwrap();
        }
        assert_eq!(r, img);
    }

    #[test]
    fn translate_round_trip_matches_on_interior() {
        let batch = random_batch(1, 8, 10);
        let img = &batch.images[0];
        for (dy, dx) in [(2i64, -1i64), (-2, 2), (0, 1)] {
            let there = apply_transform(img, &Transform::Translate { dy, dx }).unwrap();
            let back = apply_transform(&there, &Transform::Translate { dy: -dy, dx: -dx }).unwrap();
            for y in 0..8i64 {
                for x in 0..8i64 {
                    let moved = (y + dy, x + dx);
                    let interior = (0..8).contains(&moved.0) && (0..8).contains(&moved.1);
                    if interior {
                        assert_eq!(
                            back.at(y as usize, x as usize, 0),
                            img.at(y as usize, x as usize, 0)
                        );
                    } else {
                        assert_eq!(back.at(y as usize, x as usize, 0), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn all_true_mask_transforms_every_sample() {
        let batch = random_batch(5, 6, 11);
        for op in [AugOp::Mixup { alpha: 1.0 }, AugOp::Cutout { hole: 3 }] {
            let s = apply_selected(&batch, &SelectionMask::all(5), &op, &mut seeded(12)).unwrap();
            assert_eq!(s.augmented_ids, batch.ids);
            assert!(s.original_ids.is_empty());
            let changed = (0..5)
                .filter(|&i| s.batch.images[i] != batch.images[i])
                .count();
            assert!(changed >= 4, "only {changed} changed for {op:?}");
        }
    }

    #[test]
    fn id_bookkeeping_over_random_masks() {
        let batch = random_batch(12, 6, 13);
        let mut rng = seeded(14);
        for t in 0..200 {
            let bits: Vec<bool> = (0..12).map(|_| rng.random_bool(0.5)).collect();
            let mask = SelectionMask::new(bits);
            let op = ops()[t % 4];
            let s = apply_selected(&batch, &mask, &op, &mut rng).unwrap();
            assert_eq!(s.augmented_ids.len() + s.original_ids.len(), 12);
            let mut all: Vec<u64> = s
                .augmented_ids
                .iter()
                .chain(&s.original_ids)
                .copied()
                .collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), 12);
            assert_eq!(s.batch.ids, batch.ids);
            for (i, &id) in batch.ids.iter().enumerate() {
                assert_eq!(mask.is_selected(i), s.augmented_ids.contains(&id));
            }
        }
    }

    proptest! {
        #[test]
        fn outputs_keep_invariants(seed in 0u64..10_000, op_idx in 0usize..4, bits in proptest::collection::vec(any::<bool>(), 8)) {
            let batch = random_batch(8, 6, seed);
            let mask = SelectionMask::new(bits);
            let op = ops()[op_idx];
            let s = apply_selected(&batch, &mask, &op, &mut seeded(seed ^ 0xabc)).unwrap();
            for i in 0..8 {
                let sum: f64 = s.batch.labels[i].iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(s.batch.images[i].pixels.iter().all(|p| (0.0..=1.0).contains(p)));
                if !mask.is_selected(i) {
                    prop_assert_eq!(&s.batch.images[i], &batch.images[i]);
                    prop_assert_eq!(&s.batch.labels[i], &batch.labels[i]);
                }
            }
        }

        #[test]
        fn mixing_is_symmetric(lambda in 0.0f64..=1.0, seed in 0u64..1000) {
            let batch = random_batch(2, 4, seed);
            let (a, b) = (&batch.images[0], &batch.images[1]);
            let ab = mix_images(a, b, lambda);
            let ba = mix_images(b, a, 1.0 - lambda);
            for (p, q) in ab.pixels.iter().zip(&ba.pixels) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            let la = mix_labels(&batch.labels[0], &batch.labels[1], lambda);
            let lb = mix_labels(&batch.labels[1], &batch.labels[0], 1.0 - lambda);
            for (p, q) in la.iter().zip(&lb) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

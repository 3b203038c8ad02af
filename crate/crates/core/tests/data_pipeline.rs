mod common;

use proptest::prelude::*;
use vcl_core::data::rng::stream_rng;
use vcl_core::data::*;
use vcl_core::encoder::build_adjacency;
use vcl_core::numerics::Tensor;

fn random_sequence(frames: usize, joints: usize, seed: u64) -> SkeletonSequence {
    let t = common::uniform(&[CHANNELS * frames * joints], -1.0, 1.0, &mut common::rng(seed));
    SkeletonSequence::new(t.into_data(), frames, joints, 1, 0).unwrap()
}

#[test]
fn interpolation_round_trip_on_commensurate_grid() {
    // 7 source intervals divide the 49 target intervals, so every source frame is a grid point
    let s = random_sequence(8, 5, 1);
    let back = interpolate_to_length(&interpolate_to_length(&s, 50).unwrap(), 8).unwrap();
    for (a, b) in s.coords().iter().zip(back.coords()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn bone_vectors_sum_to_leaf_displacement() {
    let topo = SkeletonTopology::default_17();
    let s = random_sequence(6, 17, 2);
    let bones = derive_bone_stream(&s, &topo).unwrap();
    let root = topo.root();
    for leaf in 0..17 {
        for c in 0..CHANNELS {
            for t in 0..6 {
                let (mut j, mut acc) = (leaf, 0.0);
                while j != root {
                    acc += bones.at(c, t, j);
                    j = topo.parent_of(j).unwrap();
                }
                let expected = s.at(c, t, leaf) - s.at(c, t, root);
                assert!((acc - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn motion_prefix_sum_reconstructs_frames() {
    let s = random_sequence(9, 4, 3);
    let m = derive_motion_stream(&s);
    for c in 0..CHANNELS {
        for j in 0..4 {
            let mut acc = s.at(c, 0, j);
            for t in 0..9 {
                assert!((acc - s.at(c, t, j)).abs() < 1e-12);
                acc += m.at(c, t, j);
            }
        }
    }
}

#[test]
fn samples_match_their_own_template() {
    let topo = SkeletonTopology::default_17();
    let spec = SynthSpec::new(8, 40, 24, 5);
    let g = SynthGenerator::new(&topo, spec).unwrap();
    let total = 8 * 40;
    let mut agree = 0;
    for i in 0..total {
        let s = g.sample(i).unwrap();
        let nuisance = g.nuisance(i);
        let best = (0..8)
            .map(|c| {
                let tpl = g.render(c, nuisance).unwrap();
                let d: f64 = tpl.coords().iter().zip(s.coords()).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        agree += usize::from(best == s.label);
    }
    assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
}

#[test]
fn thousand_sample_round_trip() {
    let d = synth_generate(10, 100, &SkeletonTopology::default_17(), 12, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.skl");
    save_dataset(&d, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.len(), 1000);
    for (a, b) in d.samples().iter().zip(back.samples()) {
        assert_eq!(a.coords(), b.coords());
        assert_eq!((a.label, a.subject_id), (b.label, b.subject_id));
    }
    assert_eq!(encode_dataset(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn adjacency_matches_dense_oracle() {
    let topo = SkeletonTopology::default_17();
    let n = 17;
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(p, c) in topo.edges() {
        a[p][c] = 1.0;
        a[c][p] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let adj = build_adjacency(&topo).unwrap();
    for i in 0..n {
        for j in 0..n {
            let expected = a[i][j] / (deg[i].sqrt() * deg[j].sqrt());
            assert!((adj.matrix().data()[i * n + j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn topology_text_round_trip() {
    let topo = SkeletonTopology::ntu_25();
    let text: String = (0..25)
        .map(|j| {
            let p = topo.parent_of(j).map_or(-1, |p| p as i64);
            format!("{} {p}\n", topo.names()[j])
        })
        .collect();
    let back = SkeletonTopology::parse(&text).unwrap();
    assert_eq!(back.edges(), topo.edges());
    assert_eq!(back.depth_first_order().len(), 25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentations_preserve_shape_and_label(
        frames in 2usize..20, joints in 2usize..6, seed in any::<u64>(),
        beta in 0.0f64..1.0, gamma in 1usize..10,
    ) {
        let s = random_sequence(frames, joints, seed);
        let aug = AugmentationConfig { shear_amplitude: beta, crop_padding_ratio: gamma, rng_seed: seed };
        let out = aug.apply(&s, &mut stream_rng(seed, 0, 0, 0)).unwrap();
        prop_assert_eq!((out.frames(), out.joints(), out.label, out.subject_id), (frames, joints, s.label, s.subject_id));
        prop_assert!(out.coords().iter().all(|v| v.is_finite()));
        let again = aug.apply(&s, &mut stream_rng(seed, 0, 0, 0)).unwrap();
        prop_assert_eq!(out, again);
    }

    #[test]
    fn interpolation_is_exact_for_affine_clips(frames in 2usize..12, out in 2usize..40, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let s = SkeletonSequence::from_fn(frames, 3, 0, 0, |c, t, n| a * t as f64 + b * (c + n) as f64).unwrap();
        let r = interpolate_to_length(&s, out).unwrap();
        let scale = (frames - 1) as f64 / (out - 1) as f64;
        for c in 0..CHANNELS {
            for t in 0..out {
                for n in 0..3 {
                    let expected = a * t as f64 * scale + b * (c + n) as f64;
                    prop_assert!((r.at(c, t, n) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
                }
            }
        }
    }

    #[test]
    fn subsets_are_balanced(per_class in 2usize..30, fraction in 0.05f64..1.0, seed in any::<u64>()) {
        let d = synth_generate(4, per_class, &SkeletonTopology::default_17(), 4, 1).unwrap();
        match category_balanced_subset(&d, fraction, &mut stream_rng(seed, 0, 0, 0)) {
            Ok(s) => {
                let h = s.class_histogram();
                let (lo, hi) = (h.iter().min().unwrap(), h.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
            Err(vcl_core::Error::InsufficientLabels(_)) => prop_assert!((fraction * per_class as f64).round() == 0.0),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn standardized_input_is_finite(frames in 2usize..10, seed in any::<u64>()) {
        let s = random_sequence(frames, 17, seed);
        let x: Tensor = vcl_core::encoder::input_tensor(&s);
        prop_assert_eq!(x.shape(), &[frames * 17, 3]);
        prop_assert!(x.all_finite());
    }
}

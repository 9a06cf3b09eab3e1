use focusfuse::dataset::{gaussian_blur, synth, synthetic_composite, CompositePair};
use focusfuse::metrics::{q_cb, q_g, q_mi, q_y, MetricConfig};
use focusfuse::pipeline::fuse;
use focusfuse::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn composites(n: u64, side: usize) -> Vec<CompositePair> {
    (0..n).map(|s| synthetic_composite(side, side, (1.5, 4.0), 100 + s).unwrap()).collect()
}

fn all_four(a: &Image, b: &Image, f: &Image) -> [f64; 4] {
    let cfg = MetricConfig::default();
    [
        q_mi(a, b, f, cfg.bins).unwrap(),
        q_g(a, b, f, &cfg.gradient).unwrap(),
        q_y(a, b, f, &cfg.yang).unwrap(),
        q_cb(a, b, f, &cfg.chen_blum).unwrap(),
    ]
}

#[test]
fn mutual_information_of_a_ramp_with_itself_is_two() {
    let ramp = Image::from_fn(64, 64, |r, c| (r * 64 + c) as f64 / 4095.0);
    let v = q_mi(&ramp, &ramp, &ramp, 256).unwrap();
    assert!((v - 2.0).abs() < 1e-12, "{v}");
}

#[test]
fn independent_noise_carries_almost_no_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut noise = || Image::new(1024, 1024, 1, (0..1024 * 1024).map(|_| rng.random()).collect()).unwrap();
    let (a, b, f) = (noise(), noise(), noise());
    let v = q_mi(&a, &b, &f, 256).unwrap();
    assert!(v >= 0.0 && v < 0.05, "{v}");
}

#[test]
fn blurring_the_fused_image_lowers_gradient_preservation() {
    let a = synth::value_noise(96, 96, 5, &mut ChaCha8Rng::seed_from_u64(1));
    let cfg = MetricConfig::default();
    let sharp = q_g(&a, &a, &a, &cfg.gradient).unwrap();
    let mut last = sharp;
    for sigma in [1.0, 2.0, 4.0] {
        let v = q_g(&a, &a, &gaussian_blur(&a, sigma).unwrap(), &cfg.gradient).unwrap();
        assert!(v < last, "sigma {sigma}: {v} >= {last}");
        last = v;
    }
}

#[test]
fn contrast_metric_peaks_at_identity() {
    let a = synth::value_noise(80, 80, 5, &mut ChaCha8Rng::seed_from_u64(2));
    let cfg = MetricConfig::default().chen_blum;
    let ident = q_cb(&a, &a, &a, &cfg).unwrap();
    assert!((ident - 1.0).abs() < 1e-12);
    assert!(ident >= q_cb(&a, &a, &gaussian_blur(&a, 2.0).unwrap(), &cfg).unwrap());
}

#[test]
fn ground_truth_fusion_beats_inverted_fusion_on_contrast() {
    let cfg = MetricConfig::default().chen_blum;
    for c in composites(4, 128) {
        let good = fuse(&c.img_a, &c.img_b, &c.gt).unwrap();
        let bad = fuse(&c.img_a, &c.img_b, &c.gt.invert()).unwrap();
        assert!(q_cb(&c.img_a, &c.img_b, &good, &cfg).unwrap() >= q_cb(&c.img_a, &c.img_b, &bad, &cfg).unwrap());
    }
}

#[test]
fn structural_metric_prefers_selection_fusion_on_most_composites() {
    // under strong blur nearly every window falls to the max rule, where a
    // verbatim copy of either source scores 1; keep the blur moderate
    let cfg = MetricConfig::default().yang;
    let wins = (0..8)
        .map(|s| synthetic_composite(128, 128, (1.5, 2.5), 200 + s).unwrap())
        .collect::<Vec<_>>()
        .iter()
        .filter(|c| {
            let good = fuse(&c.img_a, &c.img_b, &c.gt).unwrap();
            let v = q_y(&c.img_a, &c.img_b, &good, &cfg).unwrap();
            v > q_y(&c.img_a, &c.img_b, &c.img_a, &cfg).unwrap() && v > q_y(&c.img_a, &c.img_b, &c.img_b, &cfg).unwrap()
        })
        .count();
    assert!(wins >= 5, "{wins}/8");
}

#[test]
fn blurring_the_fused_image_degrades_every_metric() {
    for (i, c) in composites(4, 128).iter().enumerate() {
        let good = fuse(&c.img_a, &c.img_b, &c.gt).unwrap();
        let blurred = gaussian_blur(&good, 3.0).unwrap();
        let before = all_four(&c.img_a, &c.img_b, &good);
        let after = all_four(&c.img_a, &c.img_b, &blurred);
        for k in 0..4 {
            assert!(before[k] > after[k], "composite {i}, metric {k}: {} <= {}", before[k], after[k]);
        }
    }
}

#[test]
fn colour_inputs_are_scored_on_luma() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = synth::color_noise(48, 48, 4, &mut rng);
    let b = synth::color_noise(48, 48, 4, &mut rng);
    let gray = |x: &Image| focusfuse::raster::to_grayscale(x).unwrap();
    assert_eq!(all_four(&a, &b, &a), all_four(&gray(&a), &gray(&b), &gray(&a)));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = Image::filled(16, 16, 1, 0.5).unwrap();
    let b = Image::filled(16, 17, 1, 0.5).unwrap();
    let cfg = MetricConfig::default();
    assert!(q_mi(&a, &b, &a, cfg.bins).is_err());
    assert!(q_g(&a, &a, &b, &cfg.gradient).is_err());
    assert!(q_y(&a, &b, &a, &cfg.yang).is_err());
    assert!(q_cb(&b, &a, &a, &cfg.chen_blum).is_err());
}

/// Smooth texture plus a random amount of pixel grain.
fn random_image(side: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smooth = synth::value_noise(side, side, 3, &mut rng);
    let grain = rng.random_range(0.0..0.3);
    let data = smooth.data().iter().map(|v| (v + grain * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect();
    Image::new(side, side, 1, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_swap_symmetric_and_bounded(sa in 0u64..1000, sb in 0u64..1000, sf in 0u64..1000) {
        let (a, b, f) = (random_image(24, sa), random_image(24, sb), random_image(24, sf));
        let ab = all_four(&a, &b, &f);
        let ba = all_four(&b, &a, &f);
        prop_assert_eq!(ab, ba);
        prop_assert!(ab[0] >= 0.0);
        prop_assert!((0.0..=1.0).contains(&ab[1]));
        prop_assert!((0.0..=1.0).contains(&ab[2]));
        prop_assert!(ab[3] >= 0.0);
    }
}

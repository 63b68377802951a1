use leafvote::augment::{apply_affine, flip, random_augment, resize, AffineParams, AugmentRanges, FlipAxis};
use leafvote::rng::SplitMix64;
use leafvote::Tensor;

fn noise(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn(shape, |_| rng.next_f64() as f32)
}

/// Smooth test pattern: bilinear resampling error on it is second order.
fn smooth(c: usize, size: usize) -> Tensor<f32> {
    Tensor::from_fn(&[c, size, size], |i| {
        let (ch, y, x) = (i / (size * size), (i / size) % size, i % size);
        let (u, v) = (x as f32 / size as f32, y as f32 / size as f32);
        0.5 + 0.25 * (3.0 * u + ch as f32).sin() * (2.0 * v).cos()
    })
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn resize_identities() {
    let img = noise(&[3, 7, 7], 1);
    assert!(resize(&img, 7).unwrap().max_abs_diff(&img).unwrap() < 1e-6);
    let constant = Tensor::full(&[3, 5, 9], 0.37f32);
    for size in [1, 4, 16, 33] {
        let r = resize(&constant, size).unwrap();
        assert_eq!(r.shape(), &[3, size, size]);
        assert!(r.data().iter().all(|&v| v == 0.37));
    }
    assert!(resize(&img, 0).is_err());
}

#[test]
fn resize_round_trip_recovers_corners() {
    let img = Tensor::new(&[1, 2, 2], vec![0.1f32, 0.9, 0.4, 0.6]).unwrap();
    let up = resize(&img, 4).unwrap();
    let back = resize(&up, 2).unwrap();
    assert!(back.max_abs_diff(&img).unwrap() < 1e-3);
}

#[test]
fn flip_cases() {
    let img = Tensor::new(&[1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(flip(&img, FlipAxis::Horizontal).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
    assert_eq!(flip(&img, FlipAxis::Vertical).unwrap().data(), &[3.0, 4.0, 1.0, 2.0]);
    let img = noise(&[3, 6, 5], 2);
    for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
        let twice = flip(&flip(&img, axis).unwrap(), axis).unwrap();
        assert_eq!(bits(&twice), bits(&img));
    }
}

#[test]
fn flip_commutes_with_resize() {
    let img = noise(&[3, 8, 8], 3);
    for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
        for size in [5, 13] {
            let a = resize(&flip(&img, axis).unwrap(), size).unwrap();
            let b = flip(&resize(&img, size).unwrap(), axis).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
        }
    }
}

#[test]
fn identity_affine_is_bit_exact() {
    for (shape, seed) in [([3, 8, 8], 4), ([1, 5, 9], 5), ([2, 16, 3], 6)] {
        let img = noise(&shape, seed);
        assert_eq!(bits(&apply_affine(&img, &AffineParams::IDENTITY).unwrap()), bits(&img));
        let neutral = AffineParams::compose(0.0, 0.0, 1.0, 0.0, 0.0);
        assert_eq!(bits(&apply_affine(&img, &neutral).unwrap()), bits(&img));
    }
}

#[test]
fn shear_moves_point_along_x() {
    let (x, y) = AffineParams::shear(0.5).map_point(2.0, 4.0);
    assert_eq!((x, y), (4.0, 4.0));
    // Pixel at centre offset (2, 4) lands at (4, 4) in the warped image.
    let size = 15;
    let c = 7;
    let mut img = Tensor::<f32>::zeros(&[1, size, size]);
    img.data_mut()[(c + 4) * size + c + 2] = 1.0;
    let out = apply_affine(&img, &AffineParams::shear(0.5)).unwrap();
    assert_eq!(out.data()[(c + 4) * size + c + 4], 1.0);
}

#[test]
fn rotation_round_trip_on_centre_crop() {
    let size = 48;
    let img = smooth(3, size);
    for deg in [10.0, 30.0, -25.0] {
        let there = apply_affine(&img, &AffineParams::rotation(deg)).unwrap();
        let back = apply_affine(&there, &AffineParams::rotation(-deg)).unwrap();
        let (lo, hi) = (size / 4, size - size / 4);
        let mut worst = 0.0f32;
        for ch in 0..3 {
            for y in lo..hi {
                for x in lo..hi {
                    let i = (ch * size + y) * size + x;
                    worst = worst.max((back.data()[i] - img.data()[i]).abs());
                }
            }
        }
        assert!(worst < 2e-2, "{deg} deg: {worst}");
    }
}

#[test]
fn augmentation_stays_in_convex_hull() {
    let ranges = AugmentRanges::default();
    for seed in 0..40u64 {
        let img = noise(&[3, 12, 12], 100 + seed).map(|v| v * 2.0 - 0.5);
        let lo = img.data().iter().fold(0.0f32, |m, &v| m.min(v));
        let hi = img.data().iter().fold(0.0f32, |m, &v| m.max(v));
        let out = random_augment(&img, &ranges, &[seed, 1, 2]).unwrap();
        for &v in out.data() {
            assert!(v >= lo - 1e-6 && v <= hi + 1e-6, "{v} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn random_augment_determinism_and_degenerate_ranges() {
    let img = noise(&[3, 10, 10], 7);
    let ranges = AugmentRanges::default();
    let a = random_augment(&img, &ranges, &[1, 2, 3]).unwrap();
    let b = random_augment(&img, &ranges, &[1, 2, 3]).unwrap();
    assert_eq!(bits(&a), bits(&b));
    let c = random_augment(&img, &ranges, &[1, 2, 4]).unwrap();
    assert_ne!(bits(&a), bits(&c));
    let id = random_augment(&img, &AugmentRanges::none(), &[9]).unwrap();
    assert_eq!(bits(&id), bits(&img));
}

#[test]
fn invalid_ranges_are_rejected() {
    let bad = [
        AugmentRanges { zoom: (1.2, 0.8), ..AugmentRanges::default() },
        AugmentRanges { zoom: (0.0, 1.0), ..AugmentRanges::default() },
        AugmentRanges { hflip_prob: 1.5, ..AugmentRanges::default() },
        AugmentRanges { rotation_deg: -1.0, ..AugmentRanges::default() },
    ];
    for r in bad {
        assert!(r.validate().is_err(), "{r:?}");
    }
    assert!(AugmentRanges::default().validate().is_ok());
}

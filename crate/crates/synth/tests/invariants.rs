#[path = "support/checks.rs"]
mod checks;

use checks::{image, local, modality, SIZE};
use integscan_imaging::morph::{component_count, dilate};
use integscan_imaging::{Image, Mask};
use integscan_synth::texture::pristine;
use integscan_synth::{
    composite_transformed, feather_radius, gen_irregular_mask, gen_irregular_mask_retrying, harmonic_fill, synth_cstd, synth_edd, synth_idd,
    synth_removal, Modality, SynthConfig, Transform,
};

const N: u64 = 1000;

#[test]
fn irregular_masks_over_many_seeds() {
    let mut direct_failures = 0;
    for seed in 0..N {
        if gen_irregular_mask(SIZE, SIZE, seed, (0.02, 0.15)).is_err() {
            direct_failures += 1;
        }
        checks::mask_seed(seed).unwrap();
    }
    assert!(direct_failures < N / 10, "{direct_failures} direct failures");
}

#[test]
fn idd_invariants_over_many_seeds() {
    let cfg = SynthConfig::default();
    let mut exact = 0;
    for seed in 0..N {
        exact += usize::from(checks::idd_seed(seed, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}")));
        if seed % 50 == 0 {
            let img = image(seed);
            let (a, b) = (synth_idd(&img, seed, &cfg).unwrap(), synth_idd(&img, seed, &cfg).unwrap());
            assert_eq!(a.forged, b.forged);
            assert_eq!(a.gt, b.gt);
        }
    }
    assert!(exact as u64 >= N / 8, "only {exact} right-angle samples");
}

#[test]
fn edd_invariants_over_many_seeds() {
    let cfg = SynthConfig::default();
    let mut exact = 0;
    for seed in 0..N {
        exact += usize::from(checks::edd_seed(seed, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}")));
    }
    assert!(exact as u64 >= N / 8, "only {exact} right-angle samples");
}

#[test]
fn edd_identity_hard_paste_copies_the_donor_crop() {
    let host = image(1);
    let donor = pristine(modality(1), SIZE, SIZE, 99).unwrap();
    let m = gen_irregular_mask(SIZE, SIZE, 7, (0.02, 0.15)).unwrap().bitmap;
    let (out, target) = composite_transformed(&host, &donor, &m, &Transform::identity(0.0)).unwrap();
    assert_eq!(target, m);
    for ch in 0..host.channels() {
        for y in 0..SIZE {
            for x in 0..SIZE {
                let want = if m.get(y, x) { donor.get(ch, y, x) } else { host.get(ch, y, x) };
                assert_eq!(out.get(ch, y, x).to_bits(), want.to_bits());
            }
        }
    }
}

#[test]
fn cstd_invariants_over_many_seeds() {
    let cfg = SynthConfig::default();
    let (mut on, mut on_n, mut off, mut off_n) = (0.0, 0usize, 0.0, 0usize);
    for seed in 0..N {
        let (a, b, c, d) = checks::cstd_seed(seed, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        on += a;
        on_n += b;
        off += c;
        off_n += d;
    }
    let (on, off) = (on / on_n as f64, off / off_n as f64);
    assert!(on > off, "seam gradient {on} vs background {off}");
}

#[test]
fn removal_invariants_over_many_seeds() {
    let cfg = SynthConfig::default();
    for seed in 0..N {
        checks::removal_seed(seed, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn removal_of_a_constant_image_is_invisible() {
    for c in [0.0, 0.1, 0.37, 1.0] {
        let img = Image::filled(3, SIZE, SIZE, c).unwrap();
        let out = synth_removal(&img, 4, &SynthConfig::default()).unwrap();
        assert_eq!(out.forged, img);
        assert!(out.noise_sigma.iter().all(|&s| s == 0.0));
    }
}

#[test]
fn harmonic_fill_obeys_the_maximum_principle() {
    for seed in 0..50 {
        let img = image(seed);
        let m = gen_irregular_mask_retrying(SIZE, SIZE, seed, (0.02, 0.15), 20).unwrap().bitmap;
        let ring = dilate(&m, 1).intersection(&m.not()).unwrap();
        let mut plane = img.plane(0).to_vec();
        let vals: Vec<f64> = (0..plane.len()).filter(|&i| ring.bits()[i]).map(|i| plane[i]).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        harmonic_fill(&mut plane, &m).unwrap();
        for (i, &b) in m.bits().iter().enumerate() {
            if b {
                assert!(plane[i] >= lo && plane[i] <= hi);
            }
        }
    }
}

#[test]
fn all_tasks_are_deterministic() {
    let cfg = SynthConfig::default();
    let img = image(12);
    let donor = image(13);
    assert_eq!(synth_cstd(&img, 5, &cfg).unwrap().forged, synth_cstd(&img, 5, &cfg).unwrap().forged);
    assert_eq!(synth_removal(&img, 5, &cfg).unwrap().forged, synth_removal(&img, 5, &cfg).unwrap().forged);
    assert_eq!(synth_edd(&img, &donor, 5, &cfg).unwrap().forged, synth_edd(&img, &donor, 5, &cfg).unwrap().forged);
    assert_ne!(synth_idd(&img, 5, &cfg).unwrap().gt, synth_idd(&img, 6, &cfg).unwrap().gt);
}

#[test]
fn small_images_are_rejected() {
    let img = Image::filled(1, 31, 64, 0.5).unwrap();
    let cfg = SynthConfig::default();
    assert!(synth_idd(&img, 0, &cfg).is_err());
    assert!(synth_cstd(&img, 0, &cfg).is_err());
    assert!(synth_removal(&img, 0, &cfg).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn locality_and_determinism_on_any_size(seed in 0u64..1_000_000, h in 32usize..80, w in 32usize..80, m in 0usize..4) {
            let cfg = SynthConfig::default();
            let img = pristine(Modality::ALL[m], h, w, seed).unwrap();
            let r = feather_radius(cfg.feather_sigma);

            let idd = synth_idd(&img, seed, &cfg).unwrap();
            local(&img, &idd.forged, &dilate(&idd.gt, r), "idd").unwrap();
            prop_assert_eq!(component_count(&idd.gt), 2);
            prop_assert_eq!(synth_idd(&img, seed, &cfg).unwrap().forged, idd.forged);

            let cstd = synth_cstd(&img, seed, &cfg).unwrap();
            let band = Mask::from_fn(h, w, |y, x| cstd.band.contains(y, x)).unwrap();
            local(&img, &cstd.forged, &band, "cstd").unwrap();

            let rem = synth_removal(&img, seed, &cfg).unwrap();
            local(&img, &rem.forged, &rem.gt, "removal").unwrap();
            prop_assert_eq!(synth_removal(&img, seed, &cfg).unwrap().forged, rem.forged);
        }
    }
}

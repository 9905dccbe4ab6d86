use integscan_imaging::io::{load_image, load_mask, save_image, save_mask};
use integscan_imaging::morph::{close, component_count, components, dilate, erode};
use integscan_imaging::{Error, Image, Mask};
use proptest::prelude::*;

#[test]
fn quantized_images_round_trip_through_png() {
    let dir = tempfile::tempdir().unwrap();
    for channels in [1, 3] {
        let img = Image::from_fn(channels, 9, 13, |c, y, x| ((c * 31 + y * 13 + x * 7) % 256) as f64 / 255.0).unwrap();
        let path = dir.path().join(format!("img{channels}.png"));
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.dims(), img.dims());
        assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn masks_round_trip_and_reject_gray_levels() {
    let dir = tempfile::tempdir().unwrap();
    let m = Mask::from_fn(10, 7, |y, x| (y + x) % 3 == 0).unwrap();
    let path = dir.path().join("m.png");
    save_mask(&m, &path).unwrap();
    assert_eq!(load_mask(&path).unwrap(), m);

    let gray = Image::filled(1, 4, 4, 0.5).unwrap();
    let bad = dir.path().join("gray.png");
    save_image(&gray, &bad).unwrap();
    assert!(matches!(load_mask(&bad), Err(Error::InvalidArgument(_))));

    let rgb = Image::filled(3, 4, 4, 1.0).unwrap();
    save_image(&rgb, &bad).unwrap();
    assert!(load_mask(&bad).is_err());
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
}

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (4usize..20, 4usize..20).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::bool::weighted(0.3), h * w).prop_map(move |bits| Mask::new(h, w, bits).unwrap())
    })
}

proptest! {
    #[test]
    fn dilation_and_erosion_bracket_the_mask(m in mask_strategy(), r in 0usize..3) {
        let d = dilate(&m, r);
        let e = erode(&m, r);
        for i in 0..m.len() {
            prop_assert!(!e.bits()[i] || m.bits()[i]);
            prop_assert!(!m.bits()[i] || d.bits()[i]);
        }
        prop_assert_eq!(erode(&d, r).union(&m).unwrap(), erode(&d, r));
        prop_assert_eq!(dilate(&e, r).intersection(&m).unwrap(), dilate(&e, r));
    }

    #[test]
    fn closing_is_idempotent(m in mask_strategy(), r in 1usize..3) {
        let c = close(&m, r);
        prop_assert_eq!(close(&c, r), c);
    }

    #[test]
    fn components_partition_the_foreground(m in mask_strategy()) {
        let c = components(&m);
        prop_assert_eq!(c.sizes.iter().sum::<usize>(), m.count());
        for (i, &b) in m.bits().iter().enumerate() {
            prop_assert_eq!(b, c.labels[i] != 0);
        }
        // Dilating by one merges every 8-adjacent pair, so it can only reduce the count.
        prop_assert!(component_count(&dilate(&m, 1)) <= c.count().max(1) || !m.any());
    }
}

#[test]
fn erosion_is_dual_to_dilation() {
    let m = Mask::from_fn(11, 9, |y, x| (y * 5 + x * x) % 7 < 3).unwrap();
    for r in 1..3 {
        assert_eq!(erode(&m, r), dilate(&m.not(), r).not());
    }
}

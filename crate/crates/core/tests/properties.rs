use panolayout::augment::{flip_layout, rotate_layout, stretch_layout, StretchMode, StretchParams};
use panolayout::eval::evaluate_panorama;
use panolayout::layout::CameraModel;
use panolayout::projection::floor_boundary_to_polygon;
use panolayout::toy_train::{room_layout, RoomShape, SyntheticRoomSpec};
use proptest::prelude::*;

fn area(m: &CameraModel, rows: &[f64]) -> f64 {
    floor_boundary_to_polygon(m, rows).unwrap().area()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stretch_scales_area_by_product(
        hx in 1.0f64..3.0, hz in 1.0f64..3.0,
        kx in 1.0f64..2.0, kz in 1.0f64..2.0,
    ) {
        let spec = SyntheticRoomSpec { shape: RoomShape::Rectangle, half_extents: [hx, hz], ..SyntheticRoomSpec::square(hx, 256, 0) };
        let (m, l) = room_layout(&spec).unwrap();
        let p = StretchParams::for_mode(StretchMode::Refine, 2.0, kx, kz).unwrap();
        let s = stretch_layout(&m, &l, p).unwrap();
        let ratio = area(&m, s.floor_rows()) / area(&m, l.floor_rows());
        prop_assert!((ratio / (kx * kz) - 1.0).abs() < 5e-3, "ratio {} vs {}", ratio, kx * kz);
    }

    #[test]
    fn flip_and_rotation_preserve_area(half in 1.0f64..4.0, shift in -300i64..300) {
        let (m, l) = room_layout(&SyntheticRoomSpec::square(half, 128, 0)).unwrap();
        let base = area(&m, l.floor_rows());
        let f = flip_layout(&m, &l).unwrap();
        let r = rotate_layout(&m, &l, shift).unwrap();
        prop_assert!((area(&m, f.floor_rows()) / base - 1.0).abs() < 1e-9);
        prop_assert!((area(&m, r.floor_rows()) / base - 1.0).abs() < 1e-9);
        let back = rotate_layout(&m, &r, -shift).unwrap();
        prop_assert_eq!(back.floor_rows(), l.floor_rows());
    }

    #[test]
    fn identity_prediction_scores_perfectly(half in 1.0f64..6.0) {
        let (m, l) = room_layout(&SyntheticRoomSpec::square(half, 128, 0)).unwrap();
        let r = evaluate_panorama("x", &m, l.floor_rows(), l.floor_rows(), 0.01).unwrap();
        prop_assert!((r.iou2d - 1.0).abs() < 1e-12);
        prop_assert!(r.bin_errors.iter().all(|&e| e == 0.0));
    }
}

mod common;

use iris_aging::imaging::{
    log_filter, log_kernel_side, median_filter_10x10, unwrap_to_polar, BitMask, GrayImage, PolarGrid,
    SegmentationCircles, Sector,
};
use proptest::prelude::*;

fn arbitrary_image(w: std::ops::Range<usize>, h: std::ops::Range<usize>) -> impl Strategy<Value = GrayImage> {
    (w, h).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

proptest! {
    #[test]
    fn median_matches_exhaustive_oracle(img in arbitrary_image(1..24, 1..24)) {
        let out = median_filter_10x10(&img);
        for y in 0..img.height() {
            for x in 0..img.width() {
                prop_assert_eq!(out.get(x, y) as f64, common::oracle_median(&img, x, y));
            }
        }
    }

    #[test]
    fn log_response_sums_to_zero_with_constant_border(
        inner in arbitrary_image(1..12, 1..12),
        border in any::<u8>(),
    ) {
        // edge replication only preserves the zero sum when the frame is
        // at least a kernel radius wide and constant
        let pad = log_kernel_side(1.4) / 2;
        let (w, h) = (inner.width() + 2 * pad, inner.height() + 2 * pad);
        let img = GrayImage::from_fn(w, h, |x, y| {
            if (pad..pad + inner.width()).contains(&x) && (pad..pad + inner.height()).contains(&y) {
                inner.get(x - pad, y - pad)
            } else {
                border
            }
        });
        let total: f64 = log_filter(&img, 1.4).data.iter().sum();
        prop_assert!(total.abs() < 1e-9, "sum {}", total);
    }

    #[test]
    fn log_is_translation_equivariant(img in arbitrary_image(12..20, 12..20), dx in 0usize..4, dy in 0usize..4) {
        let (w, h) = (img.width(), img.height());
        let shifted = GrayImage::from_fn(w, h, |x, y| img.get(x.saturating_sub(dx), y.saturating_sub(dy)));
        let a = log_filter(&img, 1.4);
        let b = log_filter(&shifted, 1.4);
        let r = log_kernel_side(1.4) / 2;
        // away from the replicated border the response just moves
        for y in (r + dy)..h.saturating_sub(r) {
            for x in (r + dx)..w.saturating_sub(r) {
                prop_assert!((b.get(x, y) - a.get(x - dx, y - dy)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quarter_turn_of_the_eye_shifts_polar_columns(img in arbitrary_image(41..42, 41..42), pr in 4.0f64..8.0) {
        // 41x41 with the centre on pixel (20, 20): a quarter turn maps the
        // pixel grid onto itself
        let c = 20.0;
        let seg = SegmentationCircles::concentric((c, c), pr, 18.0);
        let turned = GrayImage::from_fn(41, 41, |x, y| img.get(40 - y, x));
        let grid = PolarGrid { rows: 8, cols: 64, sectors: vec![Sector::FULL] };
        let a = unwrap_to_polar(&img, &seg, None, &grid).unwrap();
        let b = unwrap_to_polar(&turned, &seg, None, &grid).unwrap();
        for row in 0..8 {
            for col in 0..64 {
                let src = (col + 64 - 16) % 64;
                let (p, q) = (a.texture.get(src, row) as i32, b.texture.get(col, row) as i32);
                prop_assert!((p - q).abs() <= 1, "row {} col {}: {} vs {}", row, col, p, q);
            }
        }
    }
}

#[test]
fn rotationally_symmetric_eye_gives_identical_columns() {
    let (c, pr, ir) = (50.0, 12.0, 40.0);
    let img = GrayImage::from_fn(101, 101, |x, y| {
        let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        (r * 4.0).min(255.0) as u8
    });
    let seg = SegmentationCircles::concentric((c, c), pr, ir);
    let polar = unwrap_to_polar(&img, &seg, None, &PolarGrid::default()).unwrap();
    for row in 0..polar.rows() {
        let first = polar.texture.get(0, row) as i32;
        for col in 0..polar.cols() {
            assert!((polar.texture.get(col, row) as i32 - first).abs() <= 4, "row {row} col {col}");
        }
    }
}

#[test]
fn occluding_mask_propagates_to_polar_mask() {
    let img = GrayImage::filled(100, 100, 80);
    let mask = BitMask::from_fn(100, 100, |_, y| y >= 50);
    let seg = SegmentationCircles::concentric((50.0, 50.0), 10.0, 40.0);
    let polar = unwrap_to_polar(&img, &seg, Some(&mask), &PolarGrid::default()).unwrap();
    // columns for angles in (0°, 180°) look upward into the occluded half
    assert!(!polar.mask.get(128, 10));
    assert!(polar.mask.get(384, 10));
}

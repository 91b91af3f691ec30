use iris_aging::imaging::{BitMask, GrayImage, PolarIris, Sector};
use iris_aging::matcher::{encode, match_codes, BitVec, EncoderConfig, IrisCode};
use proptest::prelude::*;

fn small_config() -> EncoderConfig {
    EncoderConfig {
        grid_rows: 2,
        grid_cols: 16,
        wavelengths: vec![4.0, 8.0],
        sigma_ratio: 0.5,
    }
}

fn code() -> impl Strategy<Value = IrisCode> {
    let len = small_config().code_len();
    (
        proptest::collection::vec(any::<bool>(), len),
        proptest::collection::vec(prop::bool::weighted(0.8), len),
    )
        .prop_map(|(bits, mask)| {
            IrisCode::new(small_config(), BitVec::from_bools(&bits), BitVec::from_bools(&mask)).unwrap()
        })
}

proptest! {
    #[test]
    fn distance_is_symmetric(a in code(), b in code(), rot in 0usize..6) {
        let (ab, ba) = (match_codes(&a, &b, rot), match_codes(&b, &a, rot));
        match (ab, ba) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.hd, y.hd),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn wider_search_never_raises_distance(a in code(), b in code(), rot in 0usize..6) {
        if let (Ok(narrow), Ok(wide)) = (match_codes(&a, &b, rot), match_codes(&a, &b, rot + 1)) {
            prop_assert!(wide.hd <= narrow.hd);
        }
    }

    #[test]
    fn masked_bits_do_not_matter(a in code(), b in code(), noise in proptest::collection::vec(any::<bool>(), 64)) {
        let mut c = b.clone();
        for (i, &n) in noise.iter().enumerate().take(c.len()) {
            if !c.mask.get(i) {
                c.bits.set(i, n);
            }
        }
        prop_assert_eq!(match_codes(&a, &b, 3).ok(), match_codes(&a, &c, 3).ok());
    }

    #[test]
    fn distance_is_a_fraction(a in code(), b in code()) {
        if let Ok(m) = match_codes(&a, &b, 2) {
            prop_assert!((0.0..=1.0).contains(&m.hd));
            prop_assert!(m.compared_bits > 0);
        }
    }
}

#[test]
fn encoding_is_deterministic() {
    let mut s = 5u64;
    let tex = GrayImage::from_fn(512, 64, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 56) as u8
    });
    let polar = PolarIris::new(tex, BitMask::full(512, 64), vec![Sector::FULL]).unwrap();
    let cfg = EncoderConfig::default();
    let a = encode(&polar, &cfg).unwrap();
    let b = encode(&polar, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3072);
}

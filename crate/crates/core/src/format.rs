//! Platform-stable float formatting.

/// Scientific notation with 17 significant digits; parsing the result recovers `x` exactly.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_width() {
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(fmt17(-0.1), "-1.0000000000000001e-1");
        assert_eq!(fmt17(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            prop_assert_eq!(fmt17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}

//! Scalar conversions between storage dtypes and f32.
//!
//! BF16 widening is a pure bit operation: the stored 16 bits become the top
//! half of the f32 pattern. This preserves NaN payloads bitwise, which the
//! `half` crate does not guarantee, so BF16 is handled here directly. F16
//! goes through `half`, whose conversions are correctly rounded.

use half::f16;

/// Widen a BF16 bit pattern to f32 (stored bits become the top 16 bits).
#[inline]
pub fn bf16_bits_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

/// Truncate an f32 to BF16 by dropping the low 16 bits. Inverse of
/// [`bf16_bits_to_f32`] for every 16-bit pattern, including NaNs.
#[inline]
pub fn f32_truncate_to_bf16_bits(v: f32) -> u16 {
    (v.to_bits() >> 16) as u16
}

/// Round an f32 to the nearest BF16 (ties to even). NaN payload top bits are
/// kept and the quiet bit is forced so the result cannot collapse to Inf.
#[inline]
pub fn f32_to_bf16_bits(v: f32) -> u16 {
    let u = v.to_bits();
    if v.is_nan() {
        return ((u >> 16) as u16) | 0x0040;
    }
    let round = 0x7FFF + ((u >> 16) & 1);
    ((u.wrapping_add(round)) >> 16) as u16
}

/// Widen an F16 bit pattern to f32.
#[inline]
pub fn f16_bits_to_f32(bits: u16) -> f32 {
    f16::from_bits(bits).to_f32()
}

/// Round an f32 to the nearest F16 (ties to even).
#[inline]
pub fn f32_to_f16_bits(v: f32) -> u16 {
    f16::from_f32(v).to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bf16_known_patterns() {
        assert_eq!(bf16_bits_to_f32(0x3FC0), 1.5);
        assert_eq!(bf16_bits_to_f32(0x3F80), 1.0);
        assert_eq!(bf16_bits_to_f32(0xBF80), -1.0);
        assert_eq!(bf16_bits_to_f32(0x0000), 0.0);
    }

    #[test]
    fn bf16_widen_truncate_all_patterns() {
        for bits in 0..=u16::MAX {
            let widened = bf16_bits_to_f32(bits);
            assert_eq!(
                f32_truncate_to_bf16_bits(widened),
                bits,
                "pattern {bits:#06x} not reproduced"
            );
        }
    }

    #[test]
    fn bf16_rne_is_identity_on_exact_values() {
        // Values that came from a BF16 widening re-encode without change.
        for bits in [0x3FC0u16, 0x3F80, 0x0001, 0x7F80, 0xFF80, 0x8000] {
            assert_eq!(f32_to_bf16_bits(bf16_bits_to_f32(bits)), bits);
        }
    }

    #[test]
    fn bf16_rne_rounds_to_even() {
        // 1.0 + 2^-9 sits exactly between BF16 1.0 (0x3F80) and the next
        // value up (0x3F81); ties go to the even significand.
        let midpoint = f32::from_bits(0x3F80_8000);
        assert_eq!(f32_to_bf16_bits(midpoint), 0x3F80);
        let above = f32::from_bits(0x3F80_8001);
        assert_eq!(f32_to_bf16_bits(above), 0x3F81);
    }

    #[test]
    fn bf16_nan_never_becomes_inf() {
        let nan = f32::from_bits(0x7F80_0001);
        let bits = f32_to_bf16_bits(nan);
        assert!(bf16_bits_to_f32(bits).is_nan());
    }

    #[test]
    fn f16_roundtrip() {
        assert_eq!(f16_bits_to_f32(0x3C00), 1.0);
        assert_eq!(f32_to_f16_bits(1.0), 0x3C00);
        assert_eq!(f32_to_f16_bits(-2.5), half::f16::from_f32(-2.5).to_bits());
    }
}

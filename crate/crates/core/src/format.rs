//! Round-trip number formatting for CSV output.

/// 17 significant digits in scientific notation; `nan`, `inf`, `-inf` otherwise.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

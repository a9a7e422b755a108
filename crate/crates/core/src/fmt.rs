//! Number formatting for exported files.

/// Magnitudes below this are written as `0`. Ratings live in points per
/// possession, where anything smaller is far under the noise floor.
pub const ZERO_SNAP: f64 = 5e-7;

/// Formats `x` with 6 significant digits, trimming trailing zeros.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_owned();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_owned();
    }
    if x.abs() < ZERO_SNAP {
        return "0".to_owned();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new digit (e.g. 999999.5), which is harmless
    trim_zeros(&s).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

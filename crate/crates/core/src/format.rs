/// Decimal rendering with 10 significant digits, used for every CSV number.
///
/// Values whose magnitude falls outside `[1e-4, 1e15)` switch to scientific
/// notation so tiny p-values keep their digits.
pub fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = x.abs();
    if !(1e-4..1e15).contains(&mag) {
        return format!("{x:.9e}");
    }
    let exponent = mag.log10().floor() as i32;
    let decimals = (9 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

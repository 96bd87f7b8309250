/// `%g`-style rendering with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = trim(format!("{x:.decimals$}"));
        // rounding can carry into a seventh digit (999999.5 → 1000000)
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() <= 6 {
            return s;
        }
    }
    let s = format!("{x:.5e}");
    let (mantissa, e) = s.split_once('e').expect("exponent present");
    format!("{}e{}", trim(mantissa.to_string()), e)
}

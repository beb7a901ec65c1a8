//! Fixed-precision decimal formatting shared by the writers.

/// Formats `v` with at most `digits` significant digits, in the style of C's
/// `%.{digits}g`: plain notation for moderate exponents, scientific otherwise,
/// trailing zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_fraction(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, v)).to_string()
    }
}

/// Rounds `v` to `digits` significant digits.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    format_sig(v, digits).parse().expect("formatted float parses")
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

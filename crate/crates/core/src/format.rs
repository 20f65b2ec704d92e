//! Number formatting shared by the CSV and JSON writers.

/// Round to 15 significant digits.
pub fn round15(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.14e}").parse().expect("formatted float parses")
}

/// Shortest representation of `x` rounded to 15 significant digits;
/// `inf`, `-inf` and `nan` for non-finite values.
pub fn fmt15(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        let r = round15(x);
        if r == 0.0 {
            "0".to_string()
        } else {
            format!("{r}")
        }
    }
}

/// [`fmt15`] for optional values; absent values are empty fields.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt15).unwrap_or_default()
}

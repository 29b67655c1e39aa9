//! Display formatting for report numbers.

/// Rounds to `sig` significant figures and renders without scientific
/// notation. Published energy and carbon figures carry three significant
/// figures, so that is what reports display; raw values stay full precision.
pub fn format_sig(x: f64, sig: u32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(sig as i32 - 1 - magnitude);
    let rounded = (x * factor).round() / factor;
    let magnitude = rounded.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    format!("{rounded:.decimals$}")
}

/// Joules rendered as kilojoules at three significant figures.
pub fn display_kj(joules: f64) -> String {
    format_sig(joules / 1e3, 3)
}

/// Grams at three significant figures.
pub fn display_g(grams: f64) -> String {
    format_sig(grams, 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_significant_figures() {
        assert_eq!(format_sig(152_013.0 / 1e3, 3), "152");
        assert_eq!(format_sig(10.5564, 3), "10.6");
        assert_eq!(format_sig(2_548.68, 3), "2550");
        assert_eq!(format_sig(0.0954747, 3), "0.0955");
        assert_eq!(format_sig(999.6, 3), "1000");
        assert_eq!(format_sig(18.3333, 3), "18.3");
        assert_eq!(format_sig(176.875, 3), "177");
        assert_eq!(format_sig(0.0, 3), "0");
    }

    #[test]
    fn kilojoule_display() {
        assert_eq!(display_kj(152_013.0), "152");
        assert_eq!(display_kj(263_669.0), "264");
        assert_eq!(display_kj(0.0), "0");
    }
}

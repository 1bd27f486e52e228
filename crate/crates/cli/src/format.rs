use std::io::IsTerminal;

use gridstrength::dynamics::Complex64;

/// Six significant digits, fixed notation in the usual range.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..=9).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn percent(ratio: f64) -> String {
    format!("{}%", sig6(100.0 * ratio))
}

pub fn complex(z: Complex64) -> String {
    let sign = if z.im < 0.0 { '-' } else { '+' };
    format!("{} {sign} {}j", sig6(z.re), sig6(z.im.abs()))
}

pub struct Style {
    color: bool,
}

impl Style {
    pub fn detect() -> Self {
        let disabled = std::env::var_os("GRIDSTRENGTH_NO_COLOR").is_some();
        Self {
            color: !disabled && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    pub fn good(&self, text: &str) -> String {
        self.paint("32", text)
    }

    pub fn bad(&self, text: &str) -> String {
        self.paint("31", text)
    }

    pub fn warn(&self, text: &str) -> String {
        self.paint("33", text)
    }

    pub fn bold(&self, text: &str) -> String {
        self.paint("1", text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.2), "1.20000");
        assert_eq!(sig6(12.8), "12.8000");
        assert_eq!(sig6(-129.790360833), "-129.790");
        assert_eq!(sig6(0.0256384), "0.0256384");
        assert_eq!(sig6(1234567.0), "1234567");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(percent(0.128), "12.8000%");
    }

    #[test]
    fn complex_formatting() {
        assert_eq!(complex(Complex64::new(-3.0, -128.0)), "-3.00000 - 128.000j");
    }
}

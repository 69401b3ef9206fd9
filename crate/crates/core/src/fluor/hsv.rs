use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hexcone RGB -> (hue degrees in [0, 360), saturation, value). Achromatic
/// pixels get hue 0 and saturation 0.
///
/// Hue is computed from an integer numerator with a single rounding, so
/// channel permutations move hues by exact multiples of 120 degrees.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(i32::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let value = max as f64 / 255.0;
    if d == 0 {
        return (0.0, 0.0, value);
    }
    let num = if max == r {
        (g - b).rem_euclid(6 * d)
    } else if max == g {
        2 * d + b - r
    } else {
        4 * d + r - g
    };
    let hue = (60 * num) as f64 / d as f64;
    (hue, d as f64 / max as f64, value)
}

/// Hue interval `[hue_lo, hue_hi)` (wrapping when `hue_lo > hue_hi`) plus
/// saturation and value floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsvBand {
    pub hue_lo: f64,
    pub hue_hi: f64,
    pub min_saturation: f64,
    pub min_value: f64,
}

impl HsvBand {
    pub fn new(hue_lo: f64, hue_hi: f64, min_saturation: f64, min_value: f64) -> Result<Self> {
        let band = Self {
            hue_lo,
            hue_hi,
            min_saturation,
            min_value,
        };
        band.validate()?;
        Ok(band)
    }

    /// Calcein-like emission, centered on pure green.
    pub fn green() -> Self {
        Self {
            hue_lo: 90.0,
            hue_hi: 150.0,
            min_saturation: 0.3,
            min_value: 0.25,
        }
    }

    /// Propidium-iodide-like emission, centered on pure red (wraps through 0).
    pub fn red() -> Self {
        Self {
            hue_lo: 330.0,
            hue_hi: 30.0,
            min_saturation: 0.3,
            min_value: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let hue_ok = |h: f64| (0.0..360.0).contains(&h);
        if !hue_ok(self.hue_lo) || !hue_ok(self.hue_hi) {
            return Err(Error::Input(format!(
                "hue bounds must lie in [0, 360), got [{}, {})",
                self.hue_lo, self.hue_hi
            )));
        }
        if !(0.0..=1.0).contains(&self.min_saturation) || !(0.0..=1.0).contains(&self.min_value) {
            return Err(Error::Input(
                "min_saturation and min_value must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn contains_hue(&self, hue: f64) -> bool {
        if self.hue_lo <= self.hue_hi {
            hue >= self.hue_lo && hue < self.hue_hi
        } else {
            hue >= self.hue_lo || hue < self.hue_hi
        }
    }

    pub fn contains(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        s >= self.min_saturation && v >= self.min_value && self.contains_hue(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 255, 0]), (120.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 0, 255]), (240.0, 1.0, 1.0));
        let (h, s, v) = rgb_to_hsv([128, 128, 128]);
        assert_eq!((h, s), (0.0, 0.0));
        assert!((v - 0.502).abs() < 1e-3);
        assert!((rgb_to_hsv([255, 0, 128]).0 - 329.88).abs() < 0.01);
    }

    #[test]
    fn wrapping_band() {
        let red = HsvBand::red();
        assert!(red.contains_hue(0.0));
        assert!(red.contains_hue(350.0));
        assert!(red.contains_hue(29.9));
        assert!(!red.contains_hue(30.0));
        assert!(!red.contains_hue(120.0));
        assert!(red.contains([200, 0, 0]));
        assert!(!red.contains([20, 0, 0]));
        assert!(!red.contains([200, 180, 180]));
    }

    #[test]
    fn validation() {
        assert!(HsvBand::new(360.0, 10.0, 0.0, 0.0).is_err());
        assert!(HsvBand::new(10.0, 20.0, 1.5, 0.0).is_err());
        assert!(HsvBand::new(350.0, 10.0, 0.2, 0.2).is_ok());
    }
}

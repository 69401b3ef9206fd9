//! Analytic shapes used by the scene renderer, with exact area and perimeter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Number of protrusions on a blebbing cell.
pub const BLEB_LOBES: usize = 5;
/// Relative radial height of a fully grown bleb.
pub const BLEB_AMPLITUDE: f64 = 0.5;
const BLEB_SHARPNESS: i32 = 4;
const BLEB_VERTICES: usize = 720;

/// Cell outline relative to the cell's base radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellShape {
    Disk,
    /// Axis-aligned ellipse with semi-axes `a` (x) and `b` (y) in pixels; the
    /// base radius is ignored.
    Ellipse { a: f64, b: f64 },
    /// Star polygon with `points` tips at the base radius and notches at `inner_radius`.
    Star { points: usize, inner_radius: f64 },
    /// Disk growing membrane protrusions; `t` in [0, 1] is the growth stage.
    Bleb { t: f64 },
}

/// A shape placed at a center, able to answer point membership.
#[derive(Debug, Clone)]
pub enum Outline {
    Disk { r: f64 },
    Ellipse { a: f64, b: f64 },
    /// Polygon star-shaped about the origin with vertices at uniform angular
    /// steps starting at `phase`.
    Radial { phase: f64, vertices: Vec<(f64, f64)> },
}

impl CellShape {
    pub fn outline(&self, base_radius: f64) -> Outline {
        match *self {
            CellShape::Disk => Outline::Disk { r: base_radius },
            CellShape::Ellipse { a, b } => Outline::Ellipse { a, b },
            CellShape::Star {
                points,
                inner_radius,
            } => {
                let n = 2 * points;
                let phase = -PI / 2.0;
                let vertices = (0..n)
                    .map(|i| {
                        let r = if i % 2 == 0 { base_radius } else { inner_radius };
                        let th = phase + i as f64 * PI / points as f64;
                        (r * th.cos(), r * th.sin())
                    })
                    .collect();
                Outline::Radial { phase, vertices }
            }
            CellShape::Bleb { t } => {
                let t = t.clamp(0.0, 1.0);
                let vertices = (0..BLEB_VERTICES)
                    .map(|i| {
                        let th = i as f64 * 2.0 * PI / BLEB_VERTICES as f64;
                        let bump = (BLEB_LOBES as f64 * th).cos().max(0.0).powi(BLEB_SHARPNESS);
                        let r = base_radius * (1.0 + BLEB_AMPLITUDE * t * bump);
                        (r * th.cos(), r * th.sin())
                    })
                    .collect();
                Outline::Radial {
                    phase: 0.0,
                    vertices,
                }
            }
        }
    }
}

impl Outline {
    /// Whether the offset `(dx, dy)` from the shape center lies inside.
    pub fn contains(&self, dx: f64, dy: f64) -> bool {
        match self {
            Outline::Disk { r } => dx * dx + dy * dy <= r * r,
            Outline::Ellipse { a, b } => (dx / a).powi(2) + (dy / b).powi(2) <= 1.0,
            Outline::Radial { phase, vertices } => {
                let n = vertices.len();
                let rho2 = dx * dx + dy * dy;
                if rho2 == 0.0 {
                    return true;
                }
                let step = 2.0 * PI / n as f64;
                let th = (dy.atan2(dx) - phase).rem_euclid(2.0 * PI);
                let k = ((th / step) as usize).min(n - 1);
                let p = vertices[k];
                let q = vertices[(k + 1) % n];
                let d = (q.0 - p.0, q.1 - p.1);
                let rho = rho2.sqrt();
                let u = (dx / rho, dy / rho);
                // boundary radius along the ray through (dx, dy)
                let denom = u.0 * d.1 - u.1 * d.0;
                if denom == 0.0 {
                    return true;
                }
                let s = (p.0 * d.1 - p.1 * d.0) / denom;
                rho <= s
            }
        }
    }

    /// Largest distance from the center to the boundary.
    pub fn extent(&self) -> f64 {
        match self {
            Outline::Disk { r } => *r,
            Outline::Ellipse { a, b } => a.max(*b),
            Outline::Radial { vertices, .. } => vertices
                .iter()
                .map(|v| (v.0 * v.0 + v.1 * v.1).sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Outline::Disk { r } => PI * r * r,
            Outline::Ellipse { a, b } => PI * a * b,
            Outline::Radial { vertices, .. } => polygon_area(vertices),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Outline::Disk { r } => 2.0 * PI * r,
            Outline::Ellipse { a, b } => ellipse_perimeter(*a, *b),
            Outline::Radial { vertices, .. } => crate::region::closed_length(vertices),
        }
    }

    pub fn circularity(&self) -> f64 {
        4.0 * PI * self.area() / self.perimeter().powi(2)
    }
}

/// Ramanujan's second approximation of the ellipse circumference.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let h = ((a - b) / (a + b)).powi(2);
    PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// Shoelace area (absolute) of a closed polygon.
pub fn polygon_area(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_perimeter_limits() {
        assert!((ellipse_perimeter(3.0, 3.0) - 6.0 * PI).abs() < 1e-12);
        // the approximation gives 14 pi / 11 for a flat ellipse, close to 4a
        assert!((ellipse_perimeter(1.0, 1e-12) - 14.0 * PI / 11.0).abs() < 1e-9);
    }

    #[test]
    fn star_membership_and_area() {
        let o = CellShape::Star {
            points: 5,
            inner_radius: 12.0,
        }
        .outline(30.0);
        assert!(o.contains(0.0, -29.0));
        assert!(!o.contains(0.0, -31.0));
        // notch between two tips
        let th = -PI / 2.0 + PI / 5.0;
        assert!(o.contains(11.0 * th.cos(), 11.0 * th.sin()));
        assert!(!o.contains(13.0 * th.cos(), 13.0 * th.sin()));
        assert!((o.area() - 1058.0134541264515).abs() < 1e-9);
        assert!(o.circularity() < 0.6);
    }

    #[test]
    fn bleb_circularity_decreases_with_growth() {
        let series: Vec<f64> = (0..=7)
            .map(|i| CellShape::Bleb { t: i as f64 / 7.0 }.outline(30.0).circularity())
            .collect();
        assert!((series[0] - 1.0).abs() < 1e-3);
        assert!(series.windows(2).all(|w| w[1] < w[0]), "{series:?}");
    }
}

//! Annotated overlay images: stroked contours plus bitmap text.

use font8x8::UnicodeFonts;

use crate::raster::RasterImage;

pub const CONTOUR_COLOR: [u8; 3] = [0, 255, 0];
pub const TEXT_COLOR: [u8; 3] = [255, 255, 0];
pub const HEADER_COLOR: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Closed polygon through pixel centers.
    pub contour: Vec<(f64, f64)>,
    /// Where the label text starts.
    pub anchor: (f64, f64),
    pub label: String,
}

fn put(img: &mut RasterImage, x: i64, y: i64, color: [u8; 3]) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
        return;
    }
    for (c, &v) in color.iter().enumerate() {
        img.set_sample(x as usize, y as usize, c, v);
    }
}

pub fn draw_line(img: &mut RasterImage, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn draw_polygon(img: &mut RasterImage, vertices: &[(f64, f64)], color: [u8; 3]) {
    for (i, &a) in vertices.iter().enumerate() {
        draw_line(img, a, vertices[(i + 1) % vertices.len()], color);
    }
}

/// 8x8 bitmap text scaled by `scale`; unknown glyphs are skipped.
pub fn draw_text(img: &mut RasterImage, x: i64, y: i64, text: &str, scale: i64, color: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        let Some(glyph) = font8x8::BASIC_FONTS.get(ch) else {
            continue;
        };
        let ox = x + i as i64 * 8 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 1 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(img, ox + col * scale + sx, y + row as i64 * scale + sy, color);
                        }
                    }
                }
            }
        }
    }
}

/// Per-cell overlay label, `"id: area / circ / class"`.
pub fn cell_label(id: usize, area: f64, circularity: f64, class: &str) -> String {
    format!("{id}: {area:.0} / {circularity:.2} / {class}")
}

pub fn text_scale(image: &RasterImage) -> i64 {
    if image.width() >= 768 {
        2
    } else {
        1
    }
}

/// RGB copy of `frame` with a header line, stroked contours and labels.
pub fn emit_overlay(frame: &RasterImage, header: &str, annotations: &[Annotation]) -> RasterImage {
    let mut out = frame.to_rgb();
    let scale = text_scale(&out);
    for a in annotations {
        draw_polygon(&mut out, &a.contour, CONTOUR_COLOR);
    }
    for a in annotations {
        draw_text(&mut out, a.anchor.0.round() as i64, a.anchor.1.round() as i64, &a.label, scale, TEXT_COLOR);
    }
    draw_text(&mut out, 2 * scale, 2 * scale, header, scale, HEADER_COLOR);
    out
}

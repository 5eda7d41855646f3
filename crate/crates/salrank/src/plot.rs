//! Minimal line-plot rendering to PNG: axes, ticks, a built-in 5x7 pixel
//! font, and one polyline per series. Output is fully deterministic — no
//! anti-aliasing, no system fonts — so plots can be compared byte-for-byte.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// One polyline with a label and color.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

/// A plot: axis labels plus one or more series.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const MARGIN_L: u32 = 52;
const MARGIN_R: u32 = 14;
const MARGIN_T: u32 = 14;
const MARGIN_B: u32 = 34;
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const BG: Rgb<u8> = Rgb([255, 255, 255]);

/// 5x7 glyphs: digits, upper-case letters (lower-case folds up), and the
/// punctuation needed for numeric tick labels.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '/' => [0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F], // fallback box
    }
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..5u32 {
                if row & (0x10 >> dx) != 0 {
                    let (px, py) = (cx + dx, y + dy as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
        cx += 6;
    }
}

fn draw_line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    // Bresenham; endpoints are pre-clamped to the image.
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as u32) < img.width() && (y0 as u32) < img.height() {
            img.put_pixel(x0 as u32, y0 as u32, color);
        }
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

/// Compact tick label: up to three significant decimals, no trailing zeros.
fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 10000.0 || v.abs() < 0.001 {
        return format!("{v:.1e}");
    }
    let mut s = format!("{v:.3}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    s
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders the plot into an RGB image.
pub fn render(plot: &LinePlot, width: u32, height: u32) -> Result<RgbImage> {
    if plot.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyInput("no points to plot".into()));
    }
    if width < MARGIN_L + MARGIN_R + 40 || height < MARGIN_T + MARGIN_B + 40 {
        return Err(Error::Dimension(format!(
            "plot canvas {width}x{height} too small"
        )));
    }
    let (x_lo, x_hi) = data_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = data_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));

    let plot_w = (width - MARGIN_L - MARGIN_R - 1) as f64;
    let plot_h = (height - MARGIN_T - MARGIN_B - 1) as f64;
    let to_px = |x: f64| MARGIN_L as i64 + ((x - x_lo) / (x_hi - x_lo) * plot_w).round() as i64;
    let to_py = |y: f64| {
        (height - MARGIN_B - 1) as i64 - ((y - y_lo) / (y_hi - y_lo) * plot_h).round() as i64
    };

    let mut img = RgbImage::from_pixel(width, height, BG);

    // Axes.
    let x_axis_y = (height - MARGIN_B - 1) as i64;
    let y_axis_x = MARGIN_L as i64;
    draw_line(&mut img, (y_axis_x, MARGIN_T as i64), (y_axis_x, x_axis_y), AXIS);
    draw_line(
        &mut img,
        (y_axis_x, x_axis_y),
        ((width - MARGIN_R - 1) as i64, x_axis_y),
        AXIS,
    );

    // Ticks and labels, five per axis.
    for i in 0..=4u32 {
        let f = f64::from(i) / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let px = to_px(xv);
        draw_line(&mut img, (px, x_axis_y), (px, x_axis_y + 3), AXIS);
        let label = format_tick(xv);
        let lx = (px - 3 * label.chars().count() as i64).max(0) as u32;
        draw_text(&mut img, lx, (x_axis_y + 6) as u32, &label, AXIS);

        let yv = y_lo + f * (y_hi - y_lo);
        let py = to_py(yv);
        draw_line(&mut img, (y_axis_x - 3, py), (y_axis_x, py), AXIS);
        let label = format_tick(yv);
        let lx = (y_axis_x - 5 - 6 * label.chars().count() as i64).max(0) as u32;
        draw_text(&mut img, lx, (py - 3).max(0) as u32, &label, AXIS);
    }

    // Axis labels.
    let xl = &plot.x_label;
    let xl_x = MARGIN_L + ((plot_w as u32).saturating_sub(6 * xl.chars().count() as u32)) / 2;
    draw_text(&mut img, xl_x, height - 11, xl, AXIS);
    draw_text(&mut img, 2, 3, &plot.y_label, AXIS);

    // Series polylines plus small point markers.
    for series in &plot.series {
        let color = Rgb(series.color);
        let px: Vec<(i64, i64)> = series
            .points
            .iter()
            .map(|&(x, y)| (to_px(x), to_py(y)))
            .collect();
        for pair in px.windows(2) {
            draw_line(&mut img, pair[0], pair[1], color);
        }
        for &(x, y) in &px {
            for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (mx, my) = (x + dx, y + dy);
                if mx >= 0 && my >= 0 && (mx as u32) < width && (my as u32) < height {
                    img.put_pixel(mx as u32, my as u32, color);
                }
            }
        }
    }

    // Legend, top-right inside the plot area.
    for (i, series) in plot.series.iter().enumerate() {
        let ly = MARGIN_T + 4 + 11 * i as u32;
        let lx = width - MARGIN_R - 22 - 6 * series.label.chars().count() as u32;
        draw_line(
            &mut img,
            (lx as i64, (ly + 3) as i64),
            ((lx + 14) as i64, (ly + 3) as i64),
            Rgb(series.color),
        );
        draw_text(&mut img, lx + 18, ly, &series.label, AXIS);
    }

    Ok(img)
}

/// Renders and writes the plot as a PNG.
pub fn save_png(plot: &LinePlot, path: &Path, width: u32, height: u32) -> Result<()> {
    render(plot, width, height)?
        .save(path)
        .map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> LinePlot {
        LinePlot {
            x_label: "ratio".into(),
            y_label: "cc".into(),
            series: vec![Series {
                label: "cc".into(),
                points: vec![(0.0, 0.1), (0.25, 0.6), (0.5, 0.5), (1.0, 0.4)],
                color: [200, 40, 40],
            }],
        }
    }

    #[test]
    fn renders_axes_and_series_pixels() {
        let img = render(&demo(), 320, 240).unwrap();
        assert_eq!((img.width(), img.height()), (320, 240));
        assert_eq!(*img.get_pixel(1, 1), BG);
        // Axis pixel.
        assert_eq!(*img.get_pixel(MARGIN_L, MARGIN_T + 5), AXIS);
        // The series color appears somewhere in the plot area.
        let found = img.pixels().any(|p| *p == Rgb([200, 40, 40]));
        assert!(found, "series polyline missing");
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render(&demo(), 320, 240).unwrap();
        let b = render(&demo(), 320, 240).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn single_point_and_flat_series_render() {
        let mut p = demo();
        p.series[0].points = vec![(0.5, 0.5)];
        render(&p, 320, 240).unwrap();
        p.series[0].points = vec![(0.0, 1.0), (1.0, 1.0)];
        render(&p, 320, 240).unwrap();
    }

    #[test]
    fn empty_plot_is_rejected() {
        let mut p = demo();
        p.series[0].points.clear();
        assert!(matches!(render(&p, 320, 240), Err(Error::EmptyInput(_))));
        assert!(matches!(render(&demo(), 40, 40), Err(Error::Dimension(_))));
    }

    #[test]
    fn tick_labels_are_compact() {
        assert_eq!(format_tick(0.0), "0");
        assert_eq!(format_tick(0.25), "0.25");
        assert_eq!(format_tick(1.0), "1");
        assert_eq!(format_tick(-0.5), "-0.5");
        assert_eq!(format_tick(12345.0), "1.2e4");
        assert_eq!(format_tick(0.000_2), "2.0e-4");
    }

    #[test]
    fn saved_png_decodes_with_same_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.png");
        save_png(&demo(), &path, 320, 240).unwrap();
        let back = image::open(&path).unwrap().into_rgb8();
        assert_eq!(back.as_raw(), render(&demo(), 320, 240).unwrap().as_raw());
    }
}

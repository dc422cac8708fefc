//! Visual artifacts: landmark animations and distribution plots.
//!
//! Expression sequences live in normalized coordinates, so the renderer's
//! job is small and deliberately dependency-light: map each frame's 69
//! points into a pixel grid, draw the face-graph edges underneath them
//! (plain Bresenham lines), color the mouth and eyebrow landmarks so
//! sentiment differences are visible at a glance, and pack the frames into
//! an animated GIF or a directory of PNGs. Vertical coordinates follow the
//! image convention (v grows downward), matching the landmark data itself.
//!
//! The histogram plot is written as a self-contained SVG string rather
//! than a raster — evaluation reports embed exact bin edges, and text
//! output keeps them legible at any zoom.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, Rgba, RgbaImage};
use ndarray::{ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::eval::{Histogram, EYEBROWS, MOUTH};

const BACKGROUND: Rgba<u8> = Rgba([255, 255, 255, 255]);
const EDGE_COLOR: Rgba<u8> = Rgba([186, 186, 186, 255]);
const POINT_COLOR: Rgba<u8> = Rgba([40, 60, 90, 255]);
const MOUTH_COLOR: Rgba<u8> = Rgba([198, 44, 58, 255]);
const EYEBROW_COLOR: Rgba<u8> = Rgba([32, 128, 64, 255]);

/// Canvas geometry and animation timing.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Square canvas side in pixels.
    pub size: u32,
    /// Blank border kept around the unit square, in pixels.
    pub margin: u32,
    /// Animation playback rate.
    pub fps: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { size: 256, margin: 16, fps: 25.0 }
    }
}

impl RenderOptions {
    fn validate(&self) -> Result<()> {
        if self.size < 2 * self.margin + 2 {
            return Err(Error::InvalidParameter(format!(
                "canvas of {}px cannot hold two {}px margins",
                self.size, self.margin
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frame rate must be positive, got {}",
                self.fps
            )));
        }
        Ok(())
    }

    /// Normalized coordinate → pixel. Out-of-range values are clamped to
    /// the canvas rather than rejected; conditioned data stays in [0, 1]
    /// but raw or interpolated frames may poke slightly past it.
    fn to_px(&self, x: f64) -> i64 {
        let inner = (self.size - 2 * self.margin - 1) as f64;
        (self.margin as f64 + x.clamp(0.0, 1.0) * inner).round() as i64
    }
}

fn put(img: &mut RgbaImage, x: i64, y: i64, color: Rgba<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Integer Bresenham segment.
fn draw_line(img: &mut RgbaImage, mut x0: i64, mut y0: i64, x1: i64, y1: i64, color: Rgba<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
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

fn draw_dot(img: &mut RgbaImage, x: i64, y: i64, color: Rgba<u8>) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, color);
        }
    }
}

fn vertex_color(v: usize) -> Rgba<u8> {
    if MOUTH.contains(&v) {
        MOUTH_COLOR
    } else if EYEBROWS.contains(&v) {
        EYEBROW_COLOR
    } else {
        POINT_COLOR
    }
}

/// Rasterize one landmark frame: graph edges underneath, colored landmark
/// dots on top.
pub fn frame_image(
    frame: ArrayView2<'_, f64>,
    edges: &[(usize, usize)],
    opts: &RenderOptions,
) -> Result<RgbaImage> {
    opts.validate()?;
    let (v, c) = frame.dim();
    if c != 2 {
        return Err(Error::ShapeMismatch(format!(
            "frames carry 2 coordinates per landmark, got {c}"
        )));
    }
    if frame.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput(
            "frame contains non-finite coordinates".into(),
        ));
    }
    for &(a, b) in edges {
        if a >= v || b >= v {
            return Err(Error::IndexOutOfRange(format!(
                "edge ({a}, {b}) exceeds the {v} landmarks in the frame"
            )));
        }
    }
    let mut img = RgbaImage::from_pixel(opts.size, opts.size, BACKGROUND);
    for &(a, b) in edges {
        draw_line(
            &mut img,
            opts.to_px(frame[[a, 0]]),
            opts.to_px(frame[[a, 1]]),
            opts.to_px(frame[[b, 0]]),
            opts.to_px(frame[[b, 1]]),
            EDGE_COLOR,
        );
    }
    for p in 0..v {
        draw_dot(
            &mut img,
            opts.to_px(frame[[p, 0]]),
            opts.to_px(frame[[p, 1]]),
            vertex_color(p),
        );
    }
    Ok(img)
}

fn image_error(e: image::ImageError) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Write a whole sequence as an endlessly looping animated GIF.
pub fn render_gif(
    seq: ArrayView3<'_, f64>,
    edges: &[(usize, usize)],
    path: &Path,
    opts: &RenderOptions,
) -> Result<()> {
    opts.validate()?;
    if seq.dim().0 == 0 {
        return Err(Error::InvalidParameter("animation of an empty sequence".into()));
    }
    let file = File::create(path)?;
    let mut encoder = GifEncoder::new(BufWriter::new(file));
    encoder.set_repeat(Repeat::Infinite).map_err(image_error)?;
    let delay_ms = (1000.0 / opts.fps).round().max(1.0) as u32;
    for t in 0..seq.dim().0 {
        let img = frame_image(seq.index_axis(ndarray::Axis(0), t), edges, opts)?;
        let frame = Frame::from_parts(img, 0, 0, Delay::from_numer_denom_ms(delay_ms, 1));
        encoder.encode_frame(frame).map_err(image_error)?;
    }
    Ok(())
}

/// Write a sequence as numbered PNG frames (`frame_000.png`, …) for tools
/// that prefer loose files over an animation.
pub fn render_frame_dir(
    seq: ArrayView3<'_, f64>,
    edges: &[(usize, usize)],
    dir: &Path,
    opts: &RenderOptions,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in 0..seq.dim().0 {
        let img = frame_image(seq.index_axis(ndarray::Axis(0), t), edges, opts)?;
        let path = dir.join(format!("frame_{t:03}.png"));
        img.save(&path).map_err(image_error)?;
    }
    Ok(())
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a binned distribution as a self-contained SVG bar chart.
pub fn histogram_svg(hist: &Histogram, title: &str, path: &Path) -> Result<()> {
    if hist.counts.is_empty() || hist.edges.len() != hist.counts.len() + 1 {
        return Err(Error::InvalidParameter(
            "histogram must have counts and counts+1 edges".into(),
        ));
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 24.0, 48.0, 56.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_count = *hist.counts.iter().max().expect("non-empty counts") as f64;
    let y_scale = if max_count > 0.0 { plot_h / max_count } else { 0.0 };
    let bins = hist.counts.len() as f64;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape_xml(title)
    ));
    for (i, &count) in hist.counts.iter().enumerate() {
        let bar_h = count as f64 * y_scale;
        let x = left + plot_w * i as f64 / bins;
        let y = top + plot_h - bar_h;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"#4878a8\" stroke=\"#ffffff\"/>\n",
            x,
            y,
            plot_w / bins,
            bar_h
        ));
    }
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#333333\"/>\n",
        top + plot_h
    ));
    // Edge labels; a degenerate single-value histogram labels both ends
    // with the same number.
    let labels = if hist.edges.len() > 6 {
        // Label every other edge to keep text from colliding.
        hist.edges.iter().enumerate().step_by(2).collect::<Vec<_>>()
    } else {
        hist.edges.iter().enumerate().collect()
    };
    for (i, edge) in labels {
        let x = left + plot_w * i as f64 / bins.max(1.0);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{edge:.3}</text>\n",
            top + plot_h + 16.0
        ));
    }
    // Integer tick labels on the count axis.
    let ticks = (max_count as usize).min(5).max(1);
    for i in 0..=ticks {
        let value = max_count * i as f64 / ticks as f64;
        let y = top + plot_h - value * y_scale;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{:.0}</text>\n",
            left - 8.0,
            y + 3.0,
            value
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">mean landmark distance</text>\n",
        left + plot_w / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">pairs</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    ));
    svg.push_str("</svg>\n");

    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(svg.as_bytes())?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::AnimationDecoder;
    use ndarray::{array, Array3};

    fn small_opts() -> RenderOptions {
        RenderOptions { size: 64, margin: 8, fps: 25.0 }
    }

    #[test]
    fn frame_puts_edges_under_colored_points() {
        let opts = small_opts();
        // Two points on one horizontal line, connected by an edge.
        let frame = array![[0.0, 0.5], [1.0, 0.5]];
        let img = frame_image(frame.view(), &[(0, 1)], &opts).unwrap();
        assert_eq!(img.dimensions(), (64, 64));
        assert_eq!(*img.get_pixel(0, 0), BACKGROUND);
        let y = opts.to_px(0.5) as u32;
        let mid = opts.to_px(0.5) as u32;
        assert_eq!(*img.get_pixel(mid, y), EDGE_COLOR, "midpoint lies on the edge");
        let x0 = opts.to_px(0.0) as u32;
        assert_eq!(*img.get_pixel(x0, y), POINT_COLOR, "endpoint dot covers the line");
    }

    #[test]
    fn mouth_and_eyebrow_landmarks_get_their_own_colors() {
        let opts = small_opts();
        // 69 points spread on a diagonal; no edges.
        let frame = ndarray::Array2::from_shape_fn((69, 2), |(v, c)| {
            if c == 0 {
                v as f64 / 68.0
            } else {
                0.5
            }
        });
        let img = frame_image(frame.view(), &[], &opts).unwrap();
        let y = opts.to_px(0.5) as u32;
        let mouth_x = opts.to_px(50.0 / 68.0) as u32;
        assert_eq!(*img.get_pixel(mouth_x, y), MOUTH_COLOR);
        let brow_x = opts.to_px(20.0 / 68.0) as u32;
        assert_eq!(*img.get_pixel(brow_x, y), EYEBROW_COLOR);
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let opts = small_opts();
        let three = array![[0.1, 0.2, 0.3]];
        assert!(matches!(
            frame_image(three.view(), &[], &opts),
            Err(Error::ShapeMismatch(_))
        ));
        let nan = array![[f64::NAN, 0.0]];
        assert!(matches!(
            frame_image(nan.view(), &[], &opts),
            Err(Error::DegenerateInput(_))
        ));
        let frame = array![[0.1, 0.2]];
        assert!(matches!(
            frame_image(frame.view(), &[(0, 3)], &opts),
            Err(Error::IndexOutOfRange(_))
        ));
        let bad = RenderOptions { size: 10, margin: 8, fps: 25.0 };
        assert!(matches!(
            frame_image(frame.view(), &[], &bad),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn gif_round_trips_with_one_frame_per_time_step() {
        let seq = Array3::from_shape_fn((6, 3, 2), |(t, v, _)| {
            0.2 + 0.1 * (t as f64 / 6.0) + 0.05 * v as f64
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anim.gif");
        render_gif(seq.view(), &[(0, 1), (1, 2)], &path, &small_opts()).unwrap();
        let file = std::fs::File::open(&path).unwrap();
        let decoder = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(file)).unwrap();
        let frames = decoder.into_frames().collect_frames().unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0].buffer().dimensions(), (64, 64));
    }

    #[test]
    fn frame_directory_holds_numbered_pngs() {
        let seq = Array3::from_elem((3, 2, 2), 0.4);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("frames");
        render_frame_dir(seq.view(), &[], &out, &small_opts()).unwrap();
        for t in 0..3 {
            let img = image::open(out.join(format!("frame_{t:03}.png"))).unwrap();
            assert_eq!(img.width(), 64);
        }
    }

    #[test]
    fn histogram_svg_draws_every_bin() {
        let hist = Histogram {
            edges: vec![0.0, 0.1, 0.2, 0.3],
            counts: vec![2, 0, 5],
            values: vec![0.05, 0.05, 0.25, 0.25, 0.25, 0.25, 0.25],
            mean: 0.19285,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.svg");
        histogram_svg(&hist, "distance distribution", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert_eq!(text.matches("<rect").count(), 1 + 3, "background plus one bar per bin");
        assert!(text.contains("distance distribution"));
        assert!(text.contains("mean landmark distance"));

        // Degenerate all-identical histogram still renders.
        let flat = Histogram {
            edges: vec![0.0, 0.0],
            counts: vec![4],
            values: vec![0.0; 4],
            mean: 0.0,
        };
        let flat_path = dir.path().join("flat.svg");
        histogram_svg(&flat, "all zero", &flat_path).unwrap();
        assert!(std::fs::read_to_string(&flat_path).unwrap().contains("<svg"));

        let broken = Histogram {
            edges: vec![0.0],
            counts: vec![1],
            values: vec![0.0],
            mean: 0.0,
        };
        assert!(matches!(
            histogram_svg(&broken, "broken", &dir.path().join("x.svg")),
            Err(Error::InvalidParameter(_))
        ));
    }
}

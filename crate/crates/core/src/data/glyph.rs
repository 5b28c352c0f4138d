//! Procedural seven-segment digits standing in for MNIST.

use rand::Rng as _;

use crate::rng::Rng;
use crate::Scalar;

pub const GLYPH_SIZE: usize = 28;

// Segments: top, top-right, bottom-right, bottom, bottom-left, top-left, middle.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Grayscale `28×28` rendering of `digit` (0–9) with random position, size,
/// stroke width, slant and intensity.
pub fn render_digit(digit: usize, rng: &mut Rng) -> Vec<Scalar> {
    let n = GLYPH_SIZE;
    let segs = SEGMENTS[digit % 10];
    let width: f64 = rng.gen_range(9.0..13.0);
    let height: f64 = rng.gen_range(15.0..20.0);
    let stroke: f64 = rng.gen_range(1.6..2.6);
    let slant: f64 = rng.gen_range(-0.15..0.15);
    let cx = n as f64 / 2.0 + rng.gen_range(-3.0..3.0);
    let cy = n as f64 / 2.0 + rng.gen_range(-2.5..2.5);
    let ink: f64 = rng.gen_range(0.75..1.0);
    let (l, r) = (cx - width / 2.0, cx + width / 2.0);
    let (t, m, b) = (cy - height / 2.0, cy, cy + height / 2.0);

    // endpoints of each segment before slanting
    let lines = [
        ((l, t), (r, t)),
        ((r, t), (r, m)),
        ((r, m), (r, b)),
        ((l, b), (r, b)),
        ((l, m), (l, b)),
        ((l, t), (l, m)),
        ((l, m), (r, m)),
    ];
    let mut img = vec![0.0; n * n];
    for (on, ((x0, y0), (x1, y1))) in segs.iter().zip(lines) {
        if !on {
            continue;
        }
        let shear = |x: f64, y: f64| (x + slant * (cy - y), y);
        let (x0, y0) = shear(x0, y0);
        let (x1, y1) = shear(x1, y1);
        for py in 0..n {
            for px in 0..n {
                let d = segment_distance(px as f64 + 0.5, py as f64 + 0.5, x0, y0, x1, y1);
                // soft edge one pixel wide
                let v = (stroke / 2.0 + 0.5 - d).clamp(0.0, 1.0) * ink;
                let p = &mut img[py * n + px];
                if v as Scalar > *p {
                    *p = v as Scalar;
                }
            }
        }
    }
    img
}

fn segment_distance(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (x0 + t * dx, y0 + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

//! Analytic test phantom: the ten-ellipse head phantom with softened
//! contrast values, rasterized at pixel centers on a unit disc coordinate
//! frame. Used by round-trip reconstruction tests and examples.

use crate::imaging::Image;

/// Ellipse in unit coordinates: intensity is added inside the boundary.
#[derive(Debug, Clone, Copy)]
struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi_deg: f64,
}

/// Softened-contrast variant of the classic head phantom.
const ELLIPSES: [Ellipse; 10] = [
    Ellipse { value: 1.0, a: 0.69, b: 0.92, x0: 0.0, y0: 0.0, phi_deg: 0.0 },
    Ellipse { value: -0.8, a: 0.6624, b: 0.874, x0: 0.0, y0: -0.0184, phi_deg: 0.0 },
    Ellipse { value: -0.2, a: 0.11, b: 0.31, x0: 0.22, y0: 0.0, phi_deg: -18.0 },
    Ellipse { value: -0.2, a: 0.16, b: 0.41, x0: -0.22, y0: 0.0, phi_deg: 18.0 },
    Ellipse { value: 0.1, a: 0.21, b: 0.25, x0: 0.0, y0: 0.35, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: 0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: -0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.023, x0: -0.08, y0: -0.605, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.023, x0: 0.0, y0: -0.606, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.046, x0: 0.06, y0: -0.605, phi_deg: 0.0 },
];

/// Rasterizes the head phantom on a `side x side` grid.
///
/// Pixel `(r, c)` maps to `x = (c - (side-1)/2) / (side/2)`,
/// `y = ((side-1)/2 - r) / (side/2)`; intensities of all ellipses containing
/// the point are summed, landing in `[0, 1]` with content strictly inside
/// the inscribed circle.
pub fn head_phantom(side: usize) -> Image {
    let half = side as f64 / 2.0;
    let center = (side as f64 - 1.0) / 2.0;
    let mut img = Image::zeros(side, side);
    for r in 0..side {
        let y = (center - r as f64) / half;
        for c in 0..side {
            let x = (c as f64 - center) / half;
            let mut v = 0.0;
            for e in &ELLIPSES {
                let (st, ct) = e.phi_deg.to_radians().sin_cos();
                let dx = x - e.x0;
                let dy = y - e.y0;
                let u = (dx * ct + dy * st) / e.a;
                let w = (-dx * st + dy * ct) / e.b;
                if u * u + w * w <= 1.0 {
                    v += e.value;
                }
            }
            img.set(r, c, v);
        }
    }
    img
}

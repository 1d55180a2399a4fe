//! Standalone SVG plots assembled from primitives: ternary diagrams of
//! coefficient rows (optionally with bootstrap confidence ellipses) and a
//! shaded entropy surface over the triangle.
//!
//! All numbers are written with fixed precision, so identical inputs
//! always produce identical bytes.

use scls_core::inference::{ternary_coordinates, ConfidenceEllipse};
use scls_core::scls::CoefficientMatrix;
use scls_core::simplex::{negated_entropy, Composition};
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const SIDE: f64 = WIDTH - 2.0 * MARGIN;

/// Map ternary plane coordinates (u in [0,1], v in [0, sqrt(3)/2]) to SVG
/// pixels; the v axis is flipped because SVG y grows downward.
fn to_pixels(p: [f64; 2]) -> (f64, f64) {
    (MARGIN + p[0] * SIDE, HEIGHT - MARGIN - p[1] * SIDE)
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn svg_header(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
}

fn triangle_outline(out: &mut String, labels: &[String; 3]) {
    let v1 = to_pixels([0.0, 0.0]);
    let v2 = to_pixels([1.0, 0.0]);
    let v3 = to_pixels([0.5, 3f64.sqrt() / 2.0]);
    let _ = writeln!(
        out,
        "<polygon points=\"{},{} {},{} {},{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
        fmt(v1.0),
        fmt(v1.1),
        fmt(v2.0),
        fmt(v2.1),
        fmt(v3.0),
        fmt(v3.1)
    );
    // vertex labels: first component bottom-left, second bottom-right,
    // third on top, matching the coordinate convention
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        fmt(v1.0 - 6.0),
        fmt(v1.1 + 18.0),
        labels[0]
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        fmt(v2.0 + 6.0),
        fmt(v2.1 + 18.0),
        labels[1]
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        fmt(v3.0),
        fmt(v3.1 - 10.0),
        labels[2]
    );
}

/// Eigendecomposition of a symmetric 2x2 matrix, closed form.
fn eigen2(s: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let tr = s[0][0] + s[1][1];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    let v1 = if s[0][1].abs() > 1e-30 {
        [l1 - s[1][1], s[0][1]]
    } else {
        [1.0, 0.0]
    };
    let norm = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
    let v1 = [v1[0] / norm, v1[1] / norm];
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

fn ellipse_element(out: &mut String, e: &ConfidenceEllipse) {
    // (p-c)' S (p-c) = 1 has semi-axes 1/sqrt(lambda_i) along the
    // eigenvectors of S
    let (vals, vecs) = eigen2(e.shape);
    let r1 = SIDE / vals[0].sqrt();
    let r2 = SIDE / vals[1].sqrt();
    let (cx, cy) = to_pixels(e.center);
    // negate: the pixel y axis points down
    let angle = -vecs[0][1].atan2(vecs[0][0]).to_degrees();
    let _ = writeln!(
        out,
        "<ellipse cx=\"0\" cy=\"0\" rx=\"{}\" ry=\"{}\" transform=\"translate({} {}) rotate({})\" \
         fill=\"none\" stroke=\"firebrick\" stroke-width=\"1.2\"/>",
        fmt(r1),
        fmt(r2),
        fmt(cx),
        fmt(cy),
        fmt(angle)
    );
}

/// Ternary diagram of the coefficient rows, with the barycentre marked;
/// rows plotted near it correspond to uninformative predictor components.
pub fn ternary_svg(b: &CoefficientMatrix, ellipses: &[ConfidenceEllipse]) -> String {
    let mut out = String::new();
    svg_header(&mut out);
    let labels: [String; 3] = match b.response_names() {
        Some(n) => [n[0].clone(), n[1].clone(), n[2].clone()],
        None => ["Y1".into(), "Y2".into(), "Y3".into()],
    };
    triangle_outline(&mut out, &labels);

    for e in ellipses {
        ellipse_element(&mut out, e);
    }

    let (bx, by) = to_pixels(ternary_coordinates(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]));
    let _ = writeln!(
        out,
        "<path d=\"M {} {} h 12 M {} {} v 12\" stroke=\"gray\" stroke-width=\"1\"/>",
        fmt(bx - 6.0),
        fmt(by),
        fmt(bx),
        fmt(by - 6.0)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">barycentre</text>",
        fmt(bx + 8.0),
        fmt(by - 8.0)
    );

    for (i, row) in b.as_array().rows().into_iter().enumerate() {
        let p = ternary_coordinates(&[row[0], row[1], row[2]]);
        let (x, y) = to_pixels(p);
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"steelblue\"/>",
            fmt(x),
            fmt(y)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">B{}</text>",
            fmt(x + 6.0),
            fmt(y - 6.0),
            i + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Triangle shaded by the negated entropy of each grid composition:
/// darkest at the vertices (entropy 0 of a point mass is the maximum of
/// the negated entropy), lightest at the barycentre.
pub fn entropy_svg() -> String {
    const STEPS: usize = 60;
    let mut out = String::new();
    svg_header(&mut out);
    let max_neg = 0.0f64;
    let min_neg = -(3f64.ln());
    for i in 0..=STEPS {
        for j in 0..=(STEPS - i) {
            let k = STEPS - i - j;
            let y = [
                i as f64 / STEPS as f64,
                j as f64 / STEPS as f64,
                k as f64 / STEPS as f64,
            ];
            let comp = Composition::new(ndarray::arr1(&y)).expect("grid point is a composition");
            let val = negated_entropy(&comp);
            let t = (val - min_neg) / (max_neg - min_neg);
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let (x, py) = to_pixels(ternary_coordinates(&y));
            let _ = writeln!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"rgb({shade},{shade},255)\"/>",
                fmt(x),
                fmt(py)
            );
        }
    }
    triangle_outline(
        &mut out,
        &["Y1".to_string(), "Y2".to_string(), "Y3".to_string()],
    );
    out.push_str("</svg>\n");
    out
}

//! SVG scatter of embedded nodes inside the unit disc.

use std::fmt::Write as _;

use crate::greedy::{decompose, GreedyError};
use crate::mpn::Embeddings;
use crate::topology::Topology;

const SIZE: f64 = 400.0;
const RADIUS: f64 = 180.0;

/// Planar coordinates of the soft points `rho_i * u_i`. `d = 1` lies on the
/// horizontal axis; `d > 2` is projected onto the two leading principal
/// axes, which keeps every point inside the unit disc.
pub fn planar_points(emb: &Embeddings) -> Result<Vec<(f64, f64)>, GreedyError> {
    let dec = decompose(emb)?;
    let points: Vec<Vec<f64>> = (0..dec.len()).map(|i| dec.point(i)).collect();
    Ok(match emb.dim {
        1 => points.iter().map(|p| (p[0], 0.0)).collect(),
        2 => points.iter().map(|p| (p[0], p[1])).collect(),
        d => {
            let (a, b) = principal_axes(&points, d);
            let dot = |p: &[f64], v: &[f64]| p.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
            points.iter().map(|p| (dot(p, &a), dot(p, &b))).collect()
        }
    })
}

/// Two leading orthonormal eigenvectors of the covariance, by deflated power
/// iteration from fixed starts.
fn principal_axes(points: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len().max(1) as f64;
    let mean: Vec<f64> = (0..d).map(|c| points.iter().map(|p| p[c]).sum::<f64>() / n).collect();
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    let basis = |k: usize| {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        e
    };
    let power = |cov: &[f64], start: Vec<f64>, against: Option<&[f64]>| {
        let mut v = start;
        for _ in 0..200 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum()).collect();
            if let Some(a) = against {
                let proj: f64 = w.iter().zip(a).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(a).for_each(|(x, y)| *x -= proj * y);
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-15 {
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        v
    };
    let start_a: Vec<f64> = (0..d).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let norm = start_a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a = power(&cov, start_a.iter().map(|x| x / norm).collect(), None);
    let mut start_b = basis(1);
    let proj: f64 = start_b.iter().zip(&a).map(|(x, y)| x * y).sum();
    start_b.iter_mut().zip(&a).for_each(|(x, y)| *x -= proj * y);
    let nb = start_b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-15);
    let b = power(&cov, start_b.into_iter().map(|x| x / nb).collect(), Some(&a));
    (a, b)
}

pub fn embeddings_svg(emb: &Embeddings, topo: &Topology) -> Result<String, GreedyError> {
    let pts = planar_points(emb)?;
    let c = SIZE / 2.0;
    let to_px = |(x, y): (f64, f64)| (c + RADIUS * x, c - RADIUS * y);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<circle class="boundary" cx="{c}" cy="{c}" r="{RADIUS}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##
    );
    for l in topo.links().iter().filter(|l| l.src < l.dst) {
        let (x1, y1) = to_px(pts[l.src]);
        let (x2, y2) = to_px(pts[l.dst]);
        let _ = writeln!(
            s,
            r##"<line class="edge" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="#bbb"/>"##
        );
    }
    for (i, &p) in pts.iter().enumerate() {
        let (x, y) = to_px(p);
        let _ = writeln!(
            s,
            r##"<circle class="node" cx="{x:.3}" cy="{y:.3}" r="6" fill="#1f6fb2"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="12">{i}</text>"#,
            x + 8.0,
            y - 8.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(s: &str, pat: &str) -> usize {
        s.matches(pat).count()
    }

    #[test]
    fn mini5_in_two_dimensions() {
        let topo = Topology::mini5();
        let emb = Embeddings::new(5, 2, vec![0.1, 0.2, -1.0, 0.3, 2.0, -2.0, 0.0, 0.0, 0.5, 5.0]);
        let svg = embeddings_svg(&emb, &topo).unwrap();
        assert_eq!(count(&svg, r#"class="node""#), 5);
        assert_eq!(count(&svg, "<text"), 5);
        assert_eq!(count(&svg, r#"class="boundary""#), 1);
        assert_eq!(count(&svg, r#"class="edge""#), 6);
        assert_eq!(svg, embeddings_svg(&emb, &topo).unwrap());
    }

    #[test]
    fn one_dimension_on_axis() {
        let emb = Embeddings::new(3, 1, vec![-3.0, 0.2, 40.0]);
        let pts = planar_points(&emb).unwrap();
        assert!(pts.iter().all(|&(x, y)| y == 0.0 && (-1.0..=1.0).contains(&x)));
        assert!(pts[0].0 < 0.0 && pts[2].0 > 0.0);
    }

    #[test]
    fn projection_stays_in_disc() {
        let data: Vec<f64> = (0..5 * 32).map(|k| ((k * 37 % 11) as f64 - 5.0) / 2.0).collect();
        let emb = Embeddings::new(5, 32, data);
        let pts = planar_points(&emb).unwrap();
        assert!(pts.iter().all(|&(x, y)| x * x + y * y < 1.0));
        assert_eq!(pts, planar_points(&emb).unwrap());
    }
}

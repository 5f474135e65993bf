//! Closed, outward-wound meshes for simple parts, centered on their centroid.

use std::f64::consts::PI;

use nalgebra::Vector2;

use super::TriangleMesh;
use crate::geometry::Vec3;

type P2 = Vector2<f64>;

/// Axis-aligned box with the given edge lengths.
pub fn cuboid(size: Vec3) -> TriangleMesh {
    let h = size * 0.5;
    let poly = [
        P2::new(-h.x, -h.y),
        P2::new(h.x, -h.y),
        P2::new(h.x, h.y),
        P2::new(-h.x, h.y),
    ];
    extrude(&poly, size.z)
}

pub fn cube(side: f64) -> TriangleMesh {
    cuboid(Vec3::repeat(side))
}

/// Hexagonal prism along z; `across_flats` is the wrench size.
pub fn hex_prism(across_flats: f64, height: f64) -> TriangleMesh {
    let r = across_flats / 3f64.sqrt();
    let poly: Vec<P2> = (0..6)
        .map(|k| {
            let a = PI / 3.0 * k as f64;
            P2::new(r * a.cos(), r * a.sin())
        })
        .collect();
    extrude(&poly, height)
}

/// Faceted cylinder along z.
pub fn cylinder(diameter: f64, length: f64, segments: usize) -> TriangleMesh {
    let r = 0.5 * diameter;
    let n = segments.max(3);
    let poly: Vec<P2> = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            P2::new(r * a.cos(), r * a.sin())
        })
        .collect();
    extrude(&poly, length)
}

/// L-shaped section (legs along x and y, both `thickness` wide) extruded
/// along z by `depth`, recentered on its centroid.
pub fn l_bracket(leg_x: f64, leg_y: f64, thickness: f64, depth: f64) -> TriangleMesh {
    let poly = [
        P2::new(0.0, 0.0),
        P2::new(leg_x, 0.0),
        P2::new(leg_x, thickness),
        P2::new(thickness, thickness),
        P2::new(thickness, leg_y),
        P2::new(0.0, leg_y),
    ];
    let c = polygon_centroid(&poly);
    let shifted: Vec<P2> = poly.iter().map(|p| p - c).collect();
    extrude(&shifted, depth)
}

fn polygon_centroid(poly: &[P2]) -> P2 {
    let mut area = 0.0;
    let mut c = P2::zeros();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let cross = p.x * q.y - q.x * p.y;
        area += cross;
        c += (p + q) * cross;
    }
    c / (3.0 * area)
}

fn cross2(a: P2, b: P2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn inside_triangle(p: P2, a: P2, b: P2, c: P2) -> bool {
    cross2(b - a, p - a) >= 0.0 && cross2(c - b, p - b) >= 0.0 && cross2(a - c, p - c) >= 0.0
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
fn triangulate(poly: &[P2]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len().saturating_sub(2));
    while idx.len() > 3 {
        let n = idx.len();
        let ear = (0..n).find(|&k| {
            let (a, b, c) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            if cross2(poly[b] - poly[a], poly[c] - poly[b]) <= 0.0 {
                return false;
            }
            idx.iter()
                .filter(|&&j| j != a && j != b && j != c)
                .all(|&j| !inside_triangle(poly[j], poly[a], poly[b], poly[c]))
        });
        let k = ear.expect("simple counter-clockwise polygon always has an ear");
        out.push([idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]]);
        idx.remove(k);
    }
    out.push([idx[0], idx[1], idx[2]]);
    out
}

/// Prism over a counter-clockwise polygon, spanning `z in [-h/2, h/2]`.
fn extrude(poly: &[P2], height: f64) -> TriangleMesh {
    let n = poly.len();
    let hz = 0.5 * height;
    let mut vertices: Vec<Vec3> = poly.iter().map(|p| Vec3::new(p.x, p.y, -hz)).collect();
    vertices.extend(poly.iter().map(|p| Vec3::new(p.x, p.y, hz)));
    let mut triangles = Vec::with_capacity(4 * n);
    for [a, b, c] in triangulate(poly) {
        triangles.push([a + n, b + n, c + n]);
        triangles.push([c, b, a]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, j + n]);
        triangles.push([i, j + n, i + n]);
    }
    TriangleMesh::new(vertices, triangles).expect("extruded polygon is a valid mesh")
}

//! Closest-point queries on segments and triangles.

use crate::mesh::{cross, dot, norm, sub};
use crate::scalar::Real;

/// Closest point to `p` on segment `ab`.
pub fn closest_point_on_segment<T: Real>(p: [T; 3], a: [T; 3], b: [T; 3]) -> [T; 3] {
    let ab = sub(b, a);
    let denom = dot(ab, ab);
    if denom == T::zero() {
        return a;
    }
    let t = (dot(sub(p, a), ab) / denom).max(T::zero()).min(T::one());
    [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]]
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle<T: Real>(p: [T; 3], a: [T; 3], b: [T; 3], c: [T; 3]) -> [T; 3] {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= T::zero() && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        let t = d1 / (d1 - d3);
        return [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= T::zero() && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        let t = d2 / (d2 - d6);
        return [a[0] + t * ac[0], a[1] + t * ac[1], a[2] + t * ac[2]];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = sub(c, b);
        return [b[0] + t * bc[0], b[1] + t * bc[1], b[2] + t * bc[2]];
    }
    let denom = T::one() / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [
        a[0] + v * ab[0] + w * ac[0],
        a[1] + v * ab[1] + w * ac[1],
        a[2] + v * ab[2] + w * ac[2],
    ]
}

pub fn distance<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    norm(sub(a, b))
}

/// Unit normal of a triangle (right-hand rule over the vertex order).
pub fn triangle_normal<T: Real>(a: [T; 3], b: [T; 3], c: [T; 3]) -> [T; 3] {
    let n = cross(sub(b, a), sub(c, a));
    let len = norm(n);
    if len == T::zero() {
        return [T::zero(); 3];
    }
    [n[0] / len, n[1] / len, n[2] / len]
}

/// In-plane normal of a segment: the tangent rotated by +90 degrees.
pub fn segment_normal_2d<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    let t = sub(b, a);
    let len = norm(t);
    if len == T::zero() {
        return [T::zero(); 3];
    }
    [t[1] / len, -t[0] / len, T::zero()]
}

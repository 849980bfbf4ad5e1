pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Rotate `v` about the unit axis `k` by `angle` radians (Rodrigues).
pub fn rotate(v: Vec3, k: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let kxv = cross(k, v);
    let kdv = dot(k, v);
    [
        v[0] * c + kxv[0] * s + k[0] * kdv * (1.0 - c),
        v[1] * c + kxv[1] * s + k[1] * kdv * (1.0 - c),
        v[2] * c + kxv[2] * s + k[2] * kdv * (1.0 - c),
    ]
}

/// Perpendicular distance from `p` to the segment `start + t·dir`, `t ∈ [0, len]`,
/// or `None` when the projection falls outside the segment.
#[inline]
pub fn cylinder_distance(p: Vec3, start: Vec3, dir: Vec3, len: f64) -> Option<f64> {
    let rel = sub(p, start);
    let t = dot(rel, dir);
    if !(0.0..=len).contains(&t) {
        return None;
    }
    Some((dot(rel, rel) - t * t).max(0.0).sqrt())
}

/// Closest-point distance from `p` to the segment.
#[inline]
pub fn segment_distance(p: Vec3, start: Vec3, dir: Vec3, len: f64) -> f64 {
    let rel = sub(p, start);
    let t = dot(rel, dir).clamp(0.0, len);
    norm(sub(rel, scale(dir, t)))
}

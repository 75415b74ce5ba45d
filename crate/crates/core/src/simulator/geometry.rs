pub type Vec2 = [f64; 2];

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

/// Gap between two discs: center distance minus radii, clamped at zero.
pub fn disc_gap(a: Vec2, ra: f64, b: Vec2, rb: f64) -> f64 {
    (dist(a, b) - (ra + rb)).max(0.0)
}

pub fn discs_overlap(a: Vec2, ra: f64, b: Vec2, rb: f64) -> bool {
    dist(a, b) < ra + rb
}

/// Shortest distance from point `p` to segment `a`–`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Whether the segment passes strictly inside the disc.
pub fn segment_hits_disc(a: Vec2, b: Vec2, center: Vec2, r: f64) -> bool {
    point_segment_distance(center, a, b) < r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_discs() {
        assert!(discs_overlap([0.0, 0.0], 0.03, [0.05, 0.0], 0.03));
        assert!(!discs_overlap([0.0, 0.0], 0.03, [0.07, 0.0], 0.03));
    }

    #[test]
    fn gap_is_clamped() {
        assert_eq!(disc_gap([0.0, 0.0], 0.03, [0.05, 0.0], 0.03), 0.0);
        assert!((disc_gap([0.0, 0.0], 0.03, [0.1, 0.0], 0.03) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn segment_distance() {
        assert!((point_segment_distance([0.5, 0.1], [0.0, 0.0], [1.0, 0.0]) - 0.1).abs() < 1e-12);
        assert!((point_segment_distance([2.0, 0.0], [0.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(segment_hits_disc([0.0, 0.0], [1.0, 0.0], [0.5, 0.01], 0.02));
    }
}

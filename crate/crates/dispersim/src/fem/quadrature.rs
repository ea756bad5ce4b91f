//! Symmetric quadrature rules on triangles (barycentric points, weights
//! normalized to sum to one — multiply by the triangle area), plus a 1-D
//! Gauss rule used by test oracles for boundary line integrals.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Degree-2 rule (3 points at edge-opposite positions).
pub const TRI_DEGREE2: [QuadPoint; 3] = [
    QuadPoint { bary: [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], weight: 1.0 / 3.0 },
    QuadPoint { bary: [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], weight: 1.0 / 3.0 },
    QuadPoint { bary: [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], weight: 1.0 / 3.0 },
];

/// Degree-5 rule (7 points: centroid plus two symmetric orbits).
pub fn tri_degree5() -> &'static [QuadPoint; 7] {
    static RULE: OnceLock<[QuadPoint; 7]> = OnceLock::new();
    RULE.get_or_init(|| {
        let s = 15f64.sqrt();
        let a = (6.0 - s) / 21.0;
        let b = (6.0 + s) / 21.0;
        let wa = (155.0 - s) / 1200.0;
        let wb = (155.0 + s) / 1200.0;
        [
            QuadPoint { bary: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], weight: 9.0 / 40.0 },
            QuadPoint { bary: [1.0 - 2.0 * a, a, a], weight: wa },
            QuadPoint { bary: [a, 1.0 - 2.0 * a, a], weight: wa },
            QuadPoint { bary: [a, a, 1.0 - 2.0 * a], weight: wa },
            QuadPoint { bary: [1.0 - 2.0 * b, b, b], weight: wb },
            QuadPoint { bary: [b, 1.0 - 2.0 * b, b], weight: wb },
            QuadPoint { bary: [b, b, 1.0 - 2.0 * b], weight: wb },
        ]
    })
}

/// 4-point Gauss-Legendre rule on [0, 1] (degree-7 exact); `(position, weight)`.
pub fn edge_gauss4() -> [(f64, f64); 4] {
    let r1 = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let r2 = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let w1 = (18.0 + 30f64.sqrt()) / 72.0;
    let w2 = (18.0 - 30f64.sqrt()) / 72.0;
    [
        (0.5 * (1.0 - r2), w2),
        (0.5 * (1.0 - r1), w1),
        (0.5 * (1.0 + r1), w1),
        (0.5 * (1.0 + r2), w2),
    ]
}

use std::sync::LazyLock;

/// Symmetric quadrature rule on a triangle in barycentric coordinates.
///
/// Weights sum to one; multiply by the triangle area to integrate.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: u32,
}

static CENTROID: LazyLock<QuadratureRule> = LazyLock::new(|| QuadratureRule {
    points: vec![[1.0 / 3.0; 3]],
    weights: vec![1.0],
    degree: 1,
});

static THREE_POINT: LazyLock<QuadratureRule> = LazyLock::new(|| {
    let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
    QuadratureRule {
        points: vec![[a, b, b], [b, a, b], [b, b, a]],
        weights: vec![1.0 / 3.0; 3],
        degree: 2,
    }
});

// Radon's degree-5 rule.
static SEVEN_POINT: LazyLock<QuadratureRule> = LazyLock::new(|| {
    let s = 15f64.sqrt();
    let a = (6.0 - s) / 21.0;
    let b = (6.0 + s) / 21.0;
    let wa = (155.0 - s) / 1200.0;
    let wb = (155.0 + s) / 1200.0;
    QuadratureRule {
        points: vec![
            [1.0 / 3.0; 3],
            [1.0 - 2.0 * a, a, a],
            [a, 1.0 - 2.0 * a, a],
            [a, a, 1.0 - 2.0 * a],
            [1.0 - 2.0 * b, b, b],
            [b, 1.0 - 2.0 * b, b],
            [b, b, 1.0 - 2.0 * b],
        ],
        weights: vec![0.225, wa, wa, wa, wb, wb, wb],
        degree: 5,
    }
});

impl QuadratureRule {
    pub fn centroid() -> &'static QuadratureRule {
        &CENTROID
    }

    pub fn three_point() -> &'static QuadratureRule {
        &THREE_POINT
    }

    pub fn seven_point() -> &'static QuadratureRule {
        &SEVEN_POINT
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

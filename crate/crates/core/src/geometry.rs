//! Planar geometry for the gateway triangle.
//!
//! Everything lives in a local flat frame measured in meters. The three
//! gateways form a [`GatewayTriple`]; the synchronization node is usually
//! placed at the triangle's circumcenter so that its packets reach every
//! gateway at the same instant.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Twice-signed-area threshold below which three points are treated as collinear (m²).
pub const COLLINEARITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("gateways are collinear (twice signed area {twice_area:e} m^2)")]
    Collinear { twice_area: f64 },
    #[error("circumdiameter must be positive and finite, got {0}")]
    InvalidDiameter(f64),
    #[error("sync period must be positive and finite, got {0}")]
    InvalidSyncPeriod(f64),
}

/// A point in the local frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Checked constructor rejecting NaN and infinities.
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite { x, y })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        distance(*self, *other)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Position {
        Position::new(self.x + dx, self.y + dy)
    }

    pub fn scaled(&self, s: f64) -> Position {
        Position::new(self.x * s, self.y * s)
    }
}

/// Euclidean distance in meters.
pub fn distance(p: Position, q: Position) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Twice the signed area of the triangle `(p1, p2, p3)`; positive when counter-clockwise.
pub fn twice_signed_area(p1: Position, p2: Position, p3: Position) -> f64 {
    (p2.x - p1.x) * (p3.y - p1.y) - (p2.y - p1.y) * (p3.x - p1.x)
}

/// Three non-collinear gateway positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GatewayTriple {
    gateways: [Position; 3],
}

impl GatewayTriple {
    pub fn new(g1: Position, g2: Position, g3: Position) -> Result<Self, GeometryError> {
        for g in [g1, g2, g3] {
            Position::try_new(g.x, g.y)?;
        }
        let twice_area = twice_signed_area(g1, g2, g3);
        if twice_area.abs() <= COLLINEARITY_EPS {
            return Err(GeometryError::Collinear { twice_area });
        }
        Ok(Self {
            gateways: [g1, g2, g3],
        })
    }

    pub fn gateways(&self) -> &[Position; 3] {
        &self.gateways
    }

    pub fn get(&self, j: usize) -> Position {
        self.gateways[j]
    }

    pub fn twice_signed_area(&self) -> f64 {
        let [g1, g2, g3] = self.gateways;
        twice_signed_area(g1, g2, g3)
    }

    pub fn centroid(&self) -> Position {
        let [g1, g2, g3] = self.gateways;
        Position::new((g1.x + g2.x + g3.x) / 3.0, (g1.y + g2.y + g3.y) / 3.0)
    }

    /// Largest absolute coordinate, used as a length scale for relative tolerances.
    pub fn coordinate_scale(&self) -> f64 {
        self.gateways
            .iter()
            .fold(0.0_f64, |m, g| m.max(g.x.abs()).max(g.y.abs()))
    }

    /// Barycentric coordinates of `p` with respect to `(g1, g2, g3)`.
    pub fn barycentric(&self, p: Position) -> [f64; 3] {
        let [g1, g2, g3] = self.gateways;
        let area = self.twice_signed_area();
        let l1 = twice_signed_area(p, g2, g3) / area;
        let l2 = twice_signed_area(g1, p, g3) / area;
        let l3 = 1.0 - l1 - l2;
        [l1, l2, l3]
    }

    /// Closed point-in-triangle test (edges count as inside).
    pub fn contains(&self, p: Position) -> bool {
        let [g1, g2, g3] = self.gateways;
        let s1 = twice_signed_area(g1, g2, p);
        let s2 = twice_signed_area(g2, g3, p);
        let s3 = twice_signed_area(g3, g1, p);
        (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        let [g1, g2, g3] = self.gateways;
        Self::new(
            g1.translated(dx, dy),
            g2.translated(dx, dy),
            g3.translated(dx, dy),
        )
    }

    pub fn scaled(&self, s: f64) -> Result<Self, GeometryError> {
        let [g1, g2, g3] = self.gateways;
        Self::new(g1.scaled(s), g2.scaled(s), g3.scaled(s))
    }

    /// Point equidistant from all three gateways. Always defined because the
    /// triple is non-collinear by construction.
    pub fn circumcenter(&self) -> Position {
        let [g1, g2, g3] = self.gateways;
        circumcenter_of(g1, g2, g3).expect("gateway triple is non-collinear")
    }
}

impl<'de> Deserialize<'de> for GatewayTriple {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [g1, g2, g3] = <[Position; 3]>::deserialize(deserializer)?;
        GatewayTriple::new(g1, g2, g3).map_err(serde::de::Error::custom)
    }
}

/// Equilateral triangle inscribed in a circle of the given diameter, centered
/// at the origin, with the first vertex on the negative y-axis.
pub fn canonical_triangle(circumdiameter: f64) -> Result<GatewayTriple, GeometryError> {
    if !(circumdiameter.is_finite() && circumdiameter > 0.0) {
        return Err(GeometryError::InvalidDiameter(circumdiameter));
    }
    let r = circumdiameter / 2.0;
    let half_side = r * 3.0_f64.sqrt() / 2.0;
    GatewayTriple::new(
        Position::new(0.0, -r),
        Position::new(half_side, r / 2.0),
        Position::new(-half_side, r / 2.0),
    )
}

/// Circumcenter of three points; fails for (near-)collinear input.
pub fn circumcenter_of(p1: Position, p2: Position, p3: Position) -> Result<Position, GeometryError> {
    let twice_area = twice_signed_area(p1, p2, p3);
    if twice_area.abs() <= COLLINEARITY_EPS {
        return Err(GeometryError::Collinear { twice_area });
    }
    // Work relative to p1 to keep the squared norms small.
    let (bx, by) = (p2.x - p1.x, p2.y - p1.y);
    let (cx, cy) = (p3.x - p1.x, p3.y - p1.y);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let d = 2.0 * (bx * cy - by * cx);
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Ok(Position::new(p1.x + ux, p1.y + uy))
}

/// Circumcenter of a gateway triple.
pub fn circumcenter(triple: &GatewayTriple) -> Position {
    triple.circumcenter()
}

/// Uniform-in-area sample strictly inside the triangle.
///
/// Uses the reflected parallelogram construction: `u, v ~ U(0,1)`, folded back
/// into the lower triangle when `u + v > 1`.
pub fn sample_in_triangle<R: Rng + ?Sized>(triple: &GatewayTriple, rng: &mut R) -> Position {
    let [g1, g2, g3] = *triple.gateways();
    let (u, v) = loop {
        let u: f64 = rng.sample(Open01);
        let v: f64 = rng.sample(Open01);
        let s = u + v;
        if s < 1.0 {
            break (u, v);
        }
        if s > 1.0 {
            break (1.0 - u, 1.0 - v);
        }
        // s == 1 lands on the g2-g3 edge; draw again.
    };
    Position::new(
        g1.x + u * (g2.x - g1.x) + v * (g3.x - g1.x),
        g1.y + u * (g2.y - g1.y) + v * (g3.y - g1.y),
    )
}

/// Stationary synchronization node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncNodeConfig {
    /// Surveyed position used by the gateways.
    pub position: Position,
    /// Survey error `(Δx₀, Δy₀)` in meters.
    pub position_error: (f64, f64),
    /// Sync packet period α in seconds.
    pub period: f64,
}

impl SyncNodeConfig {
    pub fn new(
        position: Position,
        position_error: (f64, f64),
        period: f64,
    ) -> Result<Self, GeometryError> {
        Position::try_new(position.x, position.y)?;
        Position::try_new(position_error.0, position_error.1)?;
        if !(period.is_finite() && period > 0.0) {
            return Err(GeometryError::InvalidSyncPeriod(period));
        }
        Ok(Self {
            position,
            position_error,
            period,
        })
    }

    /// Sync node at the circumcenter, i.e. temporally equidistant from the gateways.
    pub fn equidistant(
        triple: &GatewayTriple,
        position_error: (f64, f64),
        period: f64,
    ) -> Result<Self, GeometryError> {
        Self::new(triple.circumcenter(), position_error, period)
    }
}

//! Position solvers for three synchronized gateways.
//!
//! Each gateway `j` at `(a_j, b_j)` latches an arrival time `t_j`; the target
//! at `(x, y)` emitted at `t0`, so `|(x, y) - (a_j, b_j)| = c (t_j - t0)`.
//! Two independent routes solve this system:
//!
//! * [`solve_analytic`] lifts the problem to the vector `p = (x, y, c·t0)`
//!   under the Lorentz-like metric `diag(1, 1, -1)`. The three equations
//!   become linear in `p` once `l = pᵀηp` is treated as a parameter, which
//!   leaves a scalar quadratic in `l`.
//! * [`solve_closed_form`] eliminates `t0` through pairwise differences of the
//!   range circles (the classic two-hyperbola intersection), giving a
//!   quadratic in the emission offset `s = c·t0`.
//!
//! Both quadratics have two roots. The candidate that best explains the
//! measurements (smallest [`residual`]) wins; exact ties, which occur when
//! both hyperbola intersections are physically consistent, are broken in
//! favour of the candidate inside the gateway triangle.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, GatewayTriple, Position};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("gateway/arrival-time matrix is singular")]
    SingularGeometry,
    #[error("no real root (relative discriminant {relative_discriminant:e})")]
    NoRealRoot { relative_discriminant: f64 },
    #[error("no root with an admissible emission time")]
    NoAdmissibleRoot,
    #[error("arrival times must be finite")]
    NonFinite,
}

impl SolveError {
    /// Stable machine-readable name.
    pub fn name(&self) -> &'static str {
        match self {
            SolveError::SingularGeometry => "singular-geometry",
            SolveError::NoRealRoot { .. } => "no-real-root",
            SolveError::NoAdmissibleRoot => "no-admissible-root",
            SolveError::NonFinite => "non-finite-input",
        }
    }
}

/// Arrival times at the three gateways, in seconds since the last sync reset.
///
/// Physical readings are non-negative; [`ToAObservation::new`] enforces that.
/// Synthetic perturbed observations may be built directly from the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToAObservation {
    pub arrivals: [f64; 3],
}

impl ToAObservation {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self, SolveError> {
        let arrivals = [t1, t2, t3];
        if arrivals.iter().all(|t| t.is_finite() && *t >= 0.0) {
            Ok(Self { arrivals })
        } else {
            Err(SolveError::NonFinite)
        }
    }

    /// Shift every arrival time by the same amount.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            arrivals: self.arrivals.map(|t| t + dt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub pos: Position,
    /// Emission time in seconds since the last sync reset.
    pub t0: f64,
    /// RMS range mismatch in meters, see [`residual`].
    pub residual: f64,
    /// 0 for the `+` branch of the quadratic, 1 for the `-` branch.
    pub root_index: usize,
}

/// Tunables for root admissibility and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Roots with `t0` below `-t0_tolerance` are discarded.
    pub t0_tolerance: f64,
    /// Emission times closer than this to zero are reported as exactly zero.
    pub t0_snap: f64,
    /// Residuals closer than this (meters) count as a tie.
    pub residual_tie: f64,
    /// Negative discriminants down to `-clamp * scale` are treated as a double root.
    pub discriminant_clamp: f64,
    /// Relative determinant threshold for the linear system.
    pub singular_rel: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            t0_tolerance: 1e-6,
            t0_snap: 1e-12,
            residual_tie: 1e-6,
            discriminant_clamp: 1e-2,
            singular_rel: 1e-9,
        }
    }
}

/// Arrival times for a target at `target` emitting at `t0`.
pub fn forward_toa(target: Position, gws: &GatewayTriple, t0: f64) -> ToAObservation {
    ToAObservation {
        arrivals: gws.gateways().map(|g| t0 + distance(target, g) / SPEED_OF_LIGHT),
    }
}

/// RMS over gateways of `|pos - g_j| - c (t_j - t0)`, in meters.
pub fn residual(est: &LocalizationEstimate, obs: &ToAObservation, gws: &GatewayTriple) -> f64 {
    residual_at(est.pos, est.t0, obs, gws)
}

fn residual_at(pos: Position, t0: f64, obs: &ToAObservation, gws: &GatewayTriple) -> f64 {
    let sum: f64 = gws
        .gateways()
        .iter()
        .zip(obs.arrivals)
        .map(|(g, t)| {
            let r = distance(pos, *g) - SPEED_OF_LIGHT * (t - t0);
            r * r
        })
        .sum();
    (sum / 3.0).sqrt()
}

/// Distance between the true and estimated positions.
pub fn localization_error(true_pos: Position, est: &LocalizationEstimate) -> f64 {
    distance(true_pos, est.pos)
}

/// Quantities of the lifted linear system, in coordinates centered on the
/// gateway centroid.
///
/// Rows of `w` are `(a_j, b_j, -c t_j)`, the real form of `(a_j, b_j, i c t_j)`;
/// `m_j = a_j² + b_j² - c² t_j²`; `u = W⁻¹e`, `v = W⁻¹m`; the quadratic in `l`
/// is `(uᵀηu) l² + (2 uᵀηv - 4) l + vᵀηv = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverIntermediates {
    pub origin: Position,
    pub w: Matrix3<f64>,
    pub m: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub uu: f64,
    pub uv: f64,
    pub vv: f64,
    /// `(2 - uᵀηv)² - (uᵀηu)(vᵀηv)`.
    pub discriminant: f64,
}

fn minkowski(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.x * b.x + a.y * b.y - a.z * b.z
}

pub fn analytic_intermediates(
    obs: &ToAObservation,
    gws: &GatewayTriple,
    opts: &SolverOptions,
) -> Result<SolverIntermediates, SolveError> {
    if obs.arrivals.iter().any(|t| !t.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let origin = gws.centroid();
    let mut w = Matrix3::zeros();
    let mut m = Vector3::zeros();
    for (j, (g, t)) in gws.gateways().iter().zip(obs.arrivals).enumerate() {
        let (a, b, ct) = (g.x - origin.x, g.y - origin.y, SPEED_OF_LIGHT * t);
        w[(j, 0)] = a;
        w[(j, 1)] = b;
        w[(j, 2)] = -ct;
        m[j] = a * a + b * b - ct * ct;
    }
    let scale = w.amax();
    let det = w.determinant();
    if !(det.abs() >= opts.singular_rel * scale.powi(3)) {
        return Err(SolveError::SingularGeometry);
    }
    let lu = w.lu();
    let u = lu.solve(&Vector3::repeat(1.0)).ok_or(SolveError::SingularGeometry)?;
    let v = lu.solve(&m).ok_or(SolveError::SingularGeometry)?;
    let (uu, uv, vv) = (minkowski(&u, &u), minkowski(&u, &v), minkowski(&v, &v));
    let discriminant = (2.0 - uv).powi(2) - uu * vv;
    Ok(SolverIntermediates {
        origin,
        w,
        m,
        u,
        v,
        uu,
        uv,
        vv,
        discriminant,
    })
}

/// Roots of `a x² - 2 b x + c = 0`, i.e. `(b ± √disc) / a`, ordered `[+, -]`
/// and computed without cancellation. `a` may vanish, in which case the
/// corresponding root is infinite.
fn quadratic_roots(a: f64, b_half: f64, c: f64, disc: f64) -> [f64; 2] {
    let sq = disc.max(0.0).sqrt();
    if b_half >= 0.0 {
        let q = b_half + sq;
        let plus = q / a;
        let minus = if q != 0.0 { c / q } else { b_half / a };
        [plus, minus]
    } else {
        let q = b_half - sq;
        let minus = q / a;
        let plus = if q != 0.0 { c / q } else { b_half / a };
        [plus, minus]
    }
}

fn check_discriminant(disc: f64, scale: f64, opts: &SolverOptions) -> Result<f64, SolveError> {
    let relative = if scale > 0.0 { disc / scale } else { disc };
    if disc >= 0.0 {
        Ok(disc)
    } else if relative >= -opts.discriminant_clamp {
        Ok(0.0)
    } else {
        Err(SolveError::NoRealRoot {
            relative_discriminant: relative,
        })
    }
}

struct Candidate {
    pos: Position,
    t0: f64,
    root_index: usize,
}

fn select_root(
    candidates: [Candidate; 2],
    obs: &ToAObservation,
    gws: &GatewayTriple,
    opts: &SolverOptions,
) -> Result<LocalizationEstimate, SolveError> {
    let centroid = gws.centroid();
    let mut admissible: Vec<LocalizationEstimate> = candidates
        .into_iter()
        .filter(|c| c.pos.is_finite() && c.t0.is_finite() && c.t0 >= -opts.t0_tolerance)
        .map(|c| {
            let t0 = if c.t0.abs() < opts.t0_snap { 0.0 } else { c.t0 };
            LocalizationEstimate {
                pos: c.pos,
                t0,
                residual: residual_at(c.pos, t0, obs, gws),
                root_index: c.root_index,
            }
        })
        .collect();
    match admissible.len() {
        0 => Err(SolveError::NoAdmissibleRoot),
        1 => Ok(admissible.remove(0)),
        _ => {
            let (a, b) = (admissible[0], admissible[1]);
            if (a.residual - b.residual).abs() > opts.residual_tie {
                return Ok(if a.residual < b.residual { a } else { b });
            }
            match (gws.contains(a.pos), gws.contains(b.pos)) {
                (true, false) => Ok(a),
                (false, true) => Ok(b),
                _ => Ok(if distance(a.pos, centroid) <= distance(b.pos, centroid) {
                    a
                } else {
                    b
                }),
            }
        }
    }
}

pub fn solve_analytic(obs: &ToAObservation, gws: &GatewayTriple) -> Result<LocalizationEstimate, SolveError> {
    solve_analytic_with(obs, gws, &SolverOptions::default())
}

pub fn solve_analytic_with(
    obs: &ToAObservation,
    gws: &GatewayTriple,
    opts: &SolverOptions,
) -> Result<LocalizationEstimate, SolveError> {
    let it = analytic_intermediates(obs, gws, opts)?;
    let b_half = 2.0 - it.uv;
    let disc = check_discriminant(it.discriminant, b_half * b_half, opts)?;
    let roots = quadratic_roots(it.uu, b_half, it.vv, disc);
    let candidates = [0, 1].map(|k| {
        let p = (it.u * roots[k] + it.v) * 0.5;
        Candidate {
            pos: Position::new(p.x + it.origin.x, p.y + it.origin.y),
            t0: p.z / SPEED_OF_LIGHT,
            root_index: k,
        }
    });
    select_root(candidates, obs, gws, opts)
}

/// `γ₁ = a₂²-a₃²+b₂²-b₃²+d₃²-d₂²` and `γ₂ = a₁²-a₂²+b₁²-b₂²+d₂²-d₁²`, the
/// right-hand sides of the two circle-difference equations
/// `2(a₂-a₃)x + 2(b₂-b₃)y = γ₁` and `2(a₁-a₂)x + 2(b₁-b₂)y = γ₂`.
pub fn gamma_terms(gws: &GatewayTriple, ranges: [f64; 3]) -> (f64, f64) {
    let [g1, g2, g3] = *gws.gateways();
    let [d1, d2, d3] = ranges;
    let gamma1 = g2.x * g2.x - g3.x * g3.x + g2.y * g2.y - g3.y * g3.y + d3 * d3 - d2 * d2;
    let gamma2 = g1.x * g1.x - g2.x * g2.x + g1.y * g1.y - g2.y * g2.y + d2 * d2 - d1 * d1;
    (gamma1, gamma2)
}

/// Position from three known ranges via the circle-difference equations.
pub fn trilaterate_ranges(gws: &GatewayTriple, ranges: [f64; 3]) -> Result<Position, SolveError> {
    let [g1, g2, g3] = *gws.gateways();
    let (gamma1, gamma2) = gamma_terms(gws, ranges);
    let (a23, b23) = (g2.x - g3.x, g2.y - g3.y);
    let (a12, b12) = (g1.x - g2.x, g1.y - g2.y);
    let det = 2.0 * (a23 * b12 - b23 * a12);
    let scale = gws.coordinate_scale();
    if !(det.abs() >= 1e-12 * scale * scale) {
        return Err(SolveError::SingularGeometry);
    }
    Ok(Position::new(
        (gamma1 * b12 - gamma2 * b23) / det,
        (a23 * gamma2 - a12 * gamma1) / det,
    ))
}

pub fn solve_closed_form(obs: &ToAObservation, gws: &GatewayTriple) -> Result<LocalizationEstimate, SolveError> {
    solve_closed_form_with(obs, gws, &SolverOptions::default())
}

pub fn solve_closed_form_with(
    obs: &ToAObservation,
    gws: &GatewayTriple,
    opts: &SolverOptions,
) -> Result<LocalizationEstimate, SolveError> {
    if obs.arrivals.iter().any(|t| !t.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    // Center on the centroid for conditioning.
    let origin = gws.centroid();
    let local = gws
        .translated(-origin.x, -origin.y)
        .map_err(|_| SolveError::SingularGeometry)?;
    let [g1, g2, g3] = *local.gateways();
    let k = obs.arrivals.map(|t| SPEED_OF_LIGHT * t);

    // With d_j = k_j - s, each γ is affine in s:
    //   d₃² - d₂² = k₃² - k₂² - 2s(k₃ - k₂)
    //   d₂² - d₁² = k₂² - k₁² - 2s(k₂ - k₁)
    let (gamma1_0, gamma2_0) = gamma_terms(&local, k);
    let gamma1_1 = -2.0 * (k[2] - k[1]);
    let gamma2_1 = -2.0 * (k[1] - k[0]);

    let (a23, b23) = (g2.x - g3.x, g2.y - g3.y);
    let (a12, b12) = (g1.x - g2.x, g1.y - g2.y);
    let det = 2.0 * (a23 * b12 - b23 * a12);
    let scale = local.coordinate_scale();
    if !(det.abs() >= opts.singular_rel * scale * scale) {
        return Err(SolveError::SingularGeometry);
    }
    let solve = |gamma1: f64, gamma2: f64| ((gamma1 * b12 - gamma2 * b23) / det, (a23 * gamma2 - a12 * gamma1) / det);
    // x(s) = x0 + x1 s, y(s) = y0 + y1 s
    let (x0, y0) = solve(gamma1_0, gamma2_0);
    let (x1, y1) = solve(gamma1_1, gamma2_1);

    // Substitute into the first range circle: (x - a₁)² + (y - b₁)² = (k₁ - s)².
    let (dx, dy) = (x0 - g1.x, y0 - g1.y);
    let qa = x1 * x1 + y1 * y1 - 1.0;
    let qb_half = -(dx * x1 + dy * y1 + k[0]);
    let qc = dx * dx + dy * dy - k[0] * k[0];
    let disc = check_discriminant(qb_half * qb_half - qa * qc, qb_half * qb_half, opts)?;
    let roots = quadratic_roots(qa, qb_half, qc, disc);
    let candidates = [0, 1].map(|i| {
        let s = roots[i];
        Candidate {
            pos: Position::new(x0 + x1 * s + origin.x, y0 + y1 * s + origin.y),
            t0: s / SPEED_OF_LIGHT,
            root_index: i,
        }
    });
    select_root(candidates, obs, gws, opts)
}

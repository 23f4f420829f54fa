//! Canonical planar domains with boundary partitions into a closed Dirichlet
//! part 𝒟 and a relatively open Neumann part 𝒩, distance functions and
//! normals, wedge points (𝒟 ∩ closure 𝒩), and the flattening-diffeomorphism
//! transform of operators.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::SymMatrix;
use crate::problem::OperatorSpec;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point ({0}, {1}) is not on the domain boundary within tolerance {2}")]
    NotOnBoundary(f64, f64, f64),
    #[error("polar angle is undefined at the origin")]
    OriginUndefined,
    #[error("diffeomorphism Jacobian determinant {det} below floor {floor} at ({x}, {y})")]
    SingularJacobian { det: f64, floor: f64, x: f64, y: f64 },
}

/// Which part of the boundary partition a piece belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    Dirichlet,
    Neumann,
}

/// Classification of a single boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClass {
    Dirichlet,
    Neumann,
    /// A point of 𝒟 ∩ closure(𝒩), where the boundary condition type changes.
    Wedge,
}

/// Supported domain shapes. Rectangles are [0, w] x [0, h]; disks and
/// sectors are centered at the origin, sectors span polar angles (0, θ₁).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Rectangle { extents: [f64; 2] },
    Disk { radius: f64 },
    DiskSector { radius: f64, angle: f64 },
    HalfDisk { radius: f64 },
}

/// Boundary partition rule. Pieces not listed as Neumann are Dirichlet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Partition {
    /// Per-edge kinds for a rectangle: [left, right, bottom, top].
    Edges([PieceKind; 4]),
    /// Open angular arcs (θa, θb) of a full disk assigned to 𝒩.
    NeumannArcs(Vec<(f64, f64)>),
    /// Sector pieces: the θ=0 ray, the θ=θ₁ ray, and the outer arc.
    Sector { ray0: PieceKind, ray1: PieceKind, arc: PieceKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub partition: Partition,
}

/// Distance to the boundary together with its gradient. `unique` is false at
/// points equidistant from several boundary pieces, where only a subgradient
/// is returned.
#[derive(Debug, Clone, Copy)]
pub struct DistanceInfo {
    pub d: f64,
    pub grad: [f64; 2],
    pub unique: bool,
}

/// Polar angle in [0, 2π): arccos(x/r) for y ≥ 0, else 2π − arccos(x/r).
pub fn polar_angle(x: f64, y: f64) -> Result<f64, GeomError> {
    let r = f64::hypot(x, y);
    if r == 0.0 {
        return Err(GeomError::OriginUndefined);
    }
    let c = (x / r).clamp(-1.0, 1.0).acos();
    Ok(if y >= 0.0 { c } else { 2.0 * PI - c })
}

fn norm(v: [f64; 2]) -> f64 {
    f64::hypot(v[0], v[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Distance from `p` to the segment [a, b] and the nearest point.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2
    }
    .clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (norm(sub(p, q)), q)
}

/// One boundary piece with enough structure to compute distances and normals.
#[derive(Debug, Clone)]
enum Piece {
    Segment { a: [f64; 2], b: [f64; 2], kind: PieceKind },
    /// Circular arc of radius r about the origin spanning θ ∈ [t0, t1].
    Arc { r: f64, t0: f64, t1: f64, kind: PieceKind },
}

impl Piece {
    fn kind(&self) -> PieceKind {
        match self {
            Piece::Segment { kind, .. } | Piece::Arc { kind, .. } => *kind,
        }
    }

    fn distance(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        match self {
            Piece::Segment { a, b, .. } => segment_distance(p, *a, *b),
            Piece::Arc { r, t0, t1, .. } => {
                let rho = norm(p);
                if rho == 0.0 {
                    // Every arc point is equidistant; pick the midpoint angle.
                    let tm = 0.5 * (t0 + t1);
                    return (*r, [r * tm.cos(), r * tm.sin()]);
                }
                let th = polar_angle(p[0], p[1]).unwrap();
                if th >= *t0 && th <= *t1 {
                    let q = [r / rho * p[0], r / rho * p[1]];
                    ((rho - r).abs(), q)
                } else {
                    let e0 = [r * t0.cos(), r * t0.sin()];
                    let e1 = [r * t1.cos(), r * t1.sin()];
                    let d0 = norm(sub(p, e0));
                    let d1 = norm(sub(p, e1));
                    if d0 <= d1 {
                        (d0, e0)
                    } else {
                        (d1, e1)
                    }
                }
            }
        }
    }
}

impl DomainSpec {
    pub fn rectangle(w: f64, h: f64, edges: [PieceKind; 4]) -> Self {
        Self { shape: Shape::Rectangle { extents: [w, h] }, partition: Partition::Edges(edges) }
    }

    pub fn disk(radius: f64, neumann_arcs: Vec<(f64, f64)>) -> Self {
        Self { shape: Shape::Disk { radius }, partition: Partition::NeumannArcs(neumann_arcs) }
    }

    pub fn sector(radius: f64, angle: f64, ray0: PieceKind, ray1: PieceKind, arc: PieceKind) -> Self {
        Self {
            shape: Shape::DiskSector { radius, angle },
            partition: Partition::Sector { ray0, ray1, arc },
        }
    }

    /// The default Zaremba half-disk: Dirichlet on the θ=0 ray and the arc,
    /// homogeneous Neumann on the θ=π ray.
    pub fn zaremba_half_disk(radius: f64) -> Self {
        Self {
            shape: Shape::HalfDisk { radius },
            partition: Partition::Sector {
                ray0: PieceKind::Dirichlet,
                ray1: PieceKind::Neumann,
                arc: PieceKind::Dirichlet,
            },
        }
    }

    pub fn half_disk(radius: f64, ray0: PieceKind, ray1: PieceKind, arc: PieceKind) -> Self {
        Self {
            shape: Shape::HalfDisk { radius },
            partition: Partition::Sector { ray0, ray1, arc },
        }
    }

    fn sector_geometry(&self) -> Option<(f64, f64, PieceKind, PieceKind, PieceKind)> {
        match (&self.shape, &self.partition) {
            (Shape::DiskSector { radius, angle }, Partition::Sector { ray0, ray1, arc }) => {
                Some((*radius, *angle, *ray0, *ray1, *arc))
            }
            (Shape::HalfDisk { radius }, Partition::Sector { ray0, ray1, arc }) => {
                Some((*radius, PI, *ray0, *ray1, *arc))
            }
            _ => None,
        }
    }

    fn pieces(&self) -> Vec<Piece> {
        match (&self.shape, &self.partition) {
            (Shape::Rectangle { extents: [w, h] }, Partition::Edges(kinds)) => vec![
                Piece::Segment { a: [0.0, 0.0], b: [0.0, *h], kind: kinds[0] },
                Piece::Segment { a: [*w, 0.0], b: [*w, *h], kind: kinds[1] },
                Piece::Segment { a: [0.0, 0.0], b: [*w, 0.0], kind: kinds[2] },
                Piece::Segment { a: [0.0, *h], b: [*w, *h], kind: kinds[3] },
            ],
            (Shape::Disk { radius }, Partition::NeumannArcs(arcs)) => {
                let mut pieces = Vec::new();
                let mut cursor = 0.0;
                let mut sorted = arcs.clone();
                sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                for &(a, b) in &sorted {
                    if a > cursor {
                        pieces.push(Piece::Arc { r: *radius, t0: cursor, t1: a, kind: PieceKind::Dirichlet });
                    }
                    pieces.push(Piece::Arc { r: *radius, t0: a, t1: b, kind: PieceKind::Neumann });
                    cursor = b;
                }
                if cursor < 2.0 * PI {
                    pieces.push(Piece::Arc { r: *radius, t0: cursor, t1: 2.0 * PI, kind: PieceKind::Dirichlet });
                }
                if pieces.is_empty() {
                    pieces.push(Piece::Arc { r: *radius, t0: 0.0, t1: 2.0 * PI, kind: PieceKind::Dirichlet });
                }
                pieces
            }
            _ => {
                let (r, t1, k0, k1, ka) = self.sector_geometry().expect("unsupported shape/partition pair");
                vec![
                    Piece::Segment { a: [0.0, 0.0], b: [r, 0.0], kind: k0 },
                    Piece::Segment { a: [0.0, 0.0], b: [r * t1.cos(), r * t1.sin()], kind: k1 },
                    Piece::Arc { r, t0: 0.0, t1, kind: ka },
                ]
            }
        }
    }

    /// Points of 𝒟 ∩ closure(𝒩). Piece junctions are never interior to the
    /// relatively open C² set 𝒩, so a junction is a wedge point exactly when
    /// at least one adjacent piece is Neumann.
    pub fn wedge_points(&self) -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = Vec::new();
        let mut push = |p: [f64; 2], kinds: &[PieceKind]| {
            if kinds.contains(&PieceKind::Neumann) && !out.iter().any(|q| norm(sub(*q, p)) < 1e-12) {
                out.push(p);
            }
        };
        match (&self.shape, &self.partition) {
            (Shape::Rectangle { extents: [w, h] }, Partition::Edges(k)) => {
                // corners: (left,bottom), (right,bottom), (left,top), (right,top)
                push([0.0, 0.0], &[k[0], k[2]]);
                push([*w, 0.0], &[k[1], k[2]]);
                push([0.0, *h], &[k[0], k[3]]);
                push([*w, *h], &[k[1], k[3]]);
            }
            (Shape::Disk { radius }, Partition::NeumannArcs(arcs)) => {
                for &(a, b) in arcs {
                    push([radius * a.cos(), radius * a.sin()], &[PieceKind::Neumann]);
                    push([radius * b.cos(), radius * b.sin()], &[PieceKind::Neumann]);
                }
            }
            _ => {
                let (r, t1, k0, k1, ka) = self.sector_geometry().unwrap();
                push([0.0, 0.0], &[k0, k1]);
                push([r, 0.0], &[k0, ka]);
                push([r * t1.cos(), r * t1.sin()], &[k1, ka]);
            }
        }
        out
    }

    pub fn inside(&self, p: [f64; 2]) -> bool {
        match &self.shape {
            Shape::Rectangle { extents: [w, h] } => {
                p[0] > 0.0 && p[0] < *w && p[1] > 0.0 && p[1] < *h
            }
            Shape::Disk { radius } => norm(p) < *radius,
            Shape::DiskSector { radius, angle } => {
                let r = norm(p);
                if r >= *radius || r == 0.0 {
                    return false;
                }
                let th = polar_angle(p[0], p[1]).unwrap();
                th > 0.0 && th < *angle
            }
            Shape::HalfDisk { radius } => norm(p) < *radius && p[1] > 0.0,
        }
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match &self.shape {
            Shape::Rectangle { extents: [w, h] } => ([0.0, 0.0], [*w, *h]),
            Shape::Disk { radius } => ([-radius, -radius], [*radius, *radius]),
            Shape::HalfDisk { radius } => ([-radius, 0.0], [*radius, *radius]),
            Shape::DiskSector { radius, angle } => {
                let r = *radius;
                let mut lo = [0.0f64, 0.0];
                let mut hi = [0.0f64, 0.0];
                let mut extend = |p: [f64; 2]| {
                    lo[0] = lo[0].min(p[0]);
                    lo[1] = lo[1].min(p[1]);
                    hi[0] = hi[0].max(p[0]);
                    hi[1] = hi[1].max(p[1]);
                };
                extend([r, 0.0]);
                extend([r * angle.cos(), r * angle.sin()]);
                // axis extremes inside the angular span
                for (k, p) in [(0.5 * PI, [0.0, r]), (PI, [-r, 0.0]), (1.5 * PI, [0.0, -r])] {
                    if *angle > k {
                        extend(p);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Nearest boundary point, its piece kind, and the distance.
    pub fn nearest_boundary(&self, p: [f64; 2]) -> ([f64; 2], PieceKind, f64) {
        let mut best: Option<([f64; 2], PieceKind, f64)> = None;
        for piece in self.pieces() {
            let (d, q) = piece.distance(p);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((q, piece.kind(), d));
            }
        }
        best.expect("domain has at least one boundary piece")
    }

    /// Distance to ∂Ω and its gradient. For points inside the domain the
    /// gradient points away from the nearest boundary piece, so that the unit
    /// outer normal on 𝒩 is −grad. Non-unique projections are flagged.
    pub fn distance_and_normal(&self, p: [f64; 2]) -> DistanceInfo {
        let mut dists: Vec<(f64, [f64; 2])> = self
            .pieces()
            .iter()
            .map(|piece| piece.distance(p))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (d, q) = dists[0];
        let scale = 1.0 + norm(p);
        // A tie between two pieces only breaks smoothness when their nearest
        // points actually differ (shared junction projections are harmless).
        let mut unique = dists.len() < 2
            || (dists[1].0 - d) > 1e-9 * scale
            || norm(sub(dists[1].1, q)) < 1e-9 * scale;
        let grad = if d > 1e-14 * scale {
            let dir = sub(p, q);
            let n = norm(dir);
            [dir[0] / n, dir[1] / n]
        } else {
            // On the boundary: one-sided gradient, the inward normal.
            unique = unique && !self.is_wedge_like(q);
            self.inward_normal_at(q)
        };
        // Interior ridge detection for curved shapes (e.g. disk center).
        if let Shape::Disk { .. } = self.shape {
            if norm(p) < 1e-12 {
                return DistanceInfo { d, grad: [1.0, 0.0], unique: false };
            }
        }
        DistanceInfo { d, grad, unique }
    }

    fn is_wedge_like(&self, q: [f64; 2]) -> bool {
        self.wedge_points().iter().any(|w| norm(sub(*w, q)) < 1e-12)
    }

    /// Inward unit normal at a boundary point (away from wedge corners).
    fn inward_normal_at(&self, q: [f64; 2]) -> [f64; 2] {
        match &self.shape {
            Shape::Rectangle { extents: [w, h] } => {
                let mut cands: Vec<(f64, [f64; 2])> = vec![
                    (q[0].abs(), [1.0, 0.0]),
                    ((w - q[0]).abs(), [-1.0, 0.0]),
                    (q[1].abs(), [0.0, 1.0]),
                    ((h - q[1]).abs(), [0.0, -1.0]),
                ];
                cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                cands[0].1
            }
            Shape::Disk { .. } => {
                let r = norm(q).max(1e-300);
                [-q[0] / r, -q[1] / r]
            }
            Shape::HalfDisk { radius } | Shape::DiskSector { radius, .. } => {
                let t1 = match &self.shape {
                    Shape::HalfDisk { .. } => PI,
                    Shape::DiskSector { angle, .. } => *angle,
                    _ => unreachable!(),
                };
                let r = norm(q);
                if (r - radius).abs() < 1e-9 * radius {
                    [-q[0] / r, -q[1] / r]
                } else {
                    let th = if r == 0.0 { 0.0 } else { polar_angle(q[0], q[1]).unwrap() };
                    if th < 0.5 * t1 {
                        // θ = 0 ray: inward is +θ direction
                        [0.0, 1.0]
                    } else {
                        // θ = θ₁ ray: inward is -θ direction rotated to the ray
                        [t1.sin(), -t1.cos()]
                    }
                }
            }
        }
    }

    /// Hessian of the distance function at an interior point where the
    /// projection is unique; `None` on the ridge set.
    pub fn hess_d(&self, p: [f64; 2]) -> Option<SymMatrix> {
        let info = self.distance_and_normal(p);
        if !info.unique {
            return None;
        }
        let (q, _, _) = self.nearest_boundary(p);
        // Nearest piece flat => zero curvature; arc => curvature -1/|p| along
        // the tangential direction (distance measured inward from the arc).
        let on_arc = match &self.shape {
            Shape::Disk { radius } | Shape::HalfDisk { radius } | Shape::DiskSector { radius, .. } => {
                (norm(q) - radius).abs() < 1e-9 * radius
            }
            Shape::Rectangle { .. } => false,
        };
        if on_arc {
            let r = norm(p);
            if r < 1e-12 {
                return None;
            }
            let xh = [p[0] / r, p[1] / r];
            // d = R - |p| inside: D²d = -(I - x̂⊗x̂)/|p|
            let proj = SymMatrix::identity(2).add(&SymMatrix::outer(&xh).neg());
            Some(proj.scaled(-1.0 / r))
        } else {
            Some(SymMatrix::zero(2))
        }
    }

    /// Largest radius for which the uniform exterior sphere inequality is
    /// declared on the Neumann part.
    pub fn exterior_sphere_radius(&self) -> f64 {
        let diam = {
            let (lo, hi) = self.bbox();
            norm(sub(hi, lo))
        };
        match &self.shape {
            Shape::Rectangle { .. } => diam,
            Shape::Disk { radius } | Shape::HalfDisk { radius } | Shape::DiskSector { radius, .. } => {
                let mut r = diam;
                for piece in self.pieces() {
                    if piece.kind() == PieceKind::Neumann {
                        if let Piece::Arc { .. } = piece {
                            r = r.min(*radius);
                        }
                    }
                }
                r
            }
        }
    }

    /// Classify a boundary point as Dirichlet, Neumann or Wedge. `tol` is the
    /// admission tolerance for lying on the boundary and also the wedge
    /// capture radius (one half grid cell in grid contexts).
    pub fn classify_boundary(&self, p: [f64; 2], tol: f64) -> Result<BoundaryClass, GeomError> {
        let (_, kind, d) = self.nearest_boundary(p);
        if d > tol {
            return Err(GeomError::NotOnBoundary(p[0], p[1], tol));
        }
        for w in self.wedge_points() {
            if norm(sub(p, w)) <= tol {
                return Ok(BoundaryClass::Wedge);
            }
        }
        Ok(match kind {
            PieceKind::Dirichlet => BoundaryClass::Dirichlet,
            PieceKind::Neumann => BoundaryClass::Neumann,
        })
    }
}

// ---------------------------------------------------------------------------
// Flattening diffeomorphisms and the transformed operator
// ---------------------------------------------------------------------------

pub type MapFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
pub type JacFn = Arc<dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync>;
pub type HessFn = Arc<dyn Fn([f64; 2]) -> [SymMatrix; 2] + Send + Sync>;

/// A C² diffeomorphism H with inverse G and closed-form first and second
/// derivatives of both maps. Row k of the Jacobian is ∇H_k.
#[derive(Clone)]
pub struct DiffeoSpec {
    pub forward: MapFn,
    pub inverse: MapFn,
    pub grad_forward: JacFn,
    pub hess_forward: HessFn,
    pub grad_inverse: JacFn,
    pub hess_inverse: HessFn,
    /// Uniform lower bound m on |det ∇H|.
    pub det_floor: f64,
}

fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

impl DiffeoSpec {
    pub fn identity() -> Self {
        Self::affine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::affine([[c, -s], [s, c]], [0.0, 0.0])
    }

    pub fn dilation(s: f64) -> Self {
        assert!(s != 0.0);
        Self::affine([[s, 0.0], [0.0, s]], [0.0, 0.0])
    }

    pub fn affine(m: [[f64; 2]; 2], shift: [f64; 2]) -> Self {
        let det = det2(&m);
        assert!(det.abs() > 0.0, "affine map must be invertible");
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let fwd = move |x: [f64; 2]| {
            [
                m[0][0] * x[0] + m[0][1] * x[1] + shift[0],
                m[1][0] * x[0] + m[1][1] * x[1] + shift[1],
            ]
        };
        let bwd = move |y: [f64; 2]| {
            let z = [y[0] - shift[0], y[1] - shift[1]];
            [inv[0][0] * z[0] + inv[0][1] * z[1], inv[1][0] * z[0] + inv[1][1] * z[1]]
        };
        Self {
            forward: Arc::new(fwd),
            inverse: Arc::new(bwd),
            grad_forward: Arc::new(move |_| m),
            hess_forward: Arc::new(|_| [SymMatrix::zero(2), SymMatrix::zero(2)]),
            grad_inverse: Arc::new(move |_| inv),
            hess_inverse: Arc::new(|_| [SymMatrix::zero(2), SymMatrix::zero(2)]),
            det_floor: det.abs() * 0.5,
        }
    }

    /// Quadratic bend H(x, y) = (x, y + c x²), with exact inverse.
    pub fn quadratic_bend(c: f64) -> Self {
        Self {
            forward: Arc::new(move |p| [p[0], p[1] + c * p[0] * p[0]]),
            inverse: Arc::new(move |q| [q[0], q[1] - c * q[0] * q[0]]),
            grad_forward: Arc::new(move |p| [[1.0, 0.0], [2.0 * c * p[0], 1.0]]),
            hess_forward: Arc::new(move |_| {
                [SymMatrix::zero(2), SymMatrix::new2(2.0 * c, 0.0, 0.0)]
            }),
            grad_inverse: Arc::new(move |q| [[1.0, 0.0], [-2.0 * c * q[0], 1.0]]),
            hess_inverse: Arc::new(move |_| {
                [SymMatrix::zero(2), SymMatrix::new2(-2.0 * c, 0.0, 0.0)]
            }),
            det_floor: 0.5,
        }
    }

    /// Conformal power map z ↦ z^k flattening the sector of opening θ₁ onto
    /// the upper half plane when k = π/θ₁. Valid on annuli away from the
    /// origin.
    pub fn sector_flatten(theta1: f64) -> Self {
        let k = PI / theta1;
        let powmap = move |p: [f64; 2], expo: f64| -> [f64; 2] {
            let r = f64::hypot(p[0], p[1]);
            let th = polar_angle(p[0], p[1]).unwrap_or(0.0);
            let rp = r.powf(expo);
            [rp * (expo * th).cos(), rp * (expo * th).sin()]
        };
        // first and second complex derivatives of z^k give the real Jacobian
        // and Hessians through the Cauchy-Riemann structure
        let jac = move |p: [f64; 2], expo: f64| -> [[f64; 2]; 2] {
            let d = powmap(p, expo - 1.0);
            let (u, v) = (expo * d[0], expo * d[1]);
            [[u, -v], [v, u]]
        };
        let hess = move |p: [f64; 2], expo: f64| -> [SymMatrix; 2] {
            let d = powmap(p, expo - 2.0);
            let (u, v) = (expo * (expo - 1.0) * d[0], expo * (expo - 1.0) * d[1]);
            [SymMatrix::new2(u, -v, -u), SymMatrix::new2(v, u, -v)]
        };
        Self {
            forward: Arc::new(move |p| powmap(p, k)),
            inverse: Arc::new(move |q| powmap(q, 1.0 / k)),
            grad_forward: Arc::new(move |p| jac(p, k)),
            hess_forward: Arc::new(move |p| hess(p, k)),
            grad_inverse: Arc::new(move |q| jac(q, 1.0 / k)),
            hess_inverse: Arc::new(move |q| hess(q, 1.0 / k)),
            det_floor: 1e-8,
        }
    }

    /// Swap the forward and inverse roles.
    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            grad_forward: self.grad_inverse.clone(),
            hess_forward: self.hess_inverse.clone(),
            grad_inverse: self.grad_forward.clone(),
            hess_inverse: self.hess_forward.clone(),
            det_floor: self.det_floor,
        }
    }

    /// Check G(H(x)) = x and the determinant floor on sample points.
    pub fn validate(&self, samples: &[[f64; 2]]) -> Result<(), GeomError> {
        for &x in samples {
            let y = (self.forward)(x);
            let back = (self.inverse)(y);
            let err = norm(sub(back, x));
            if err > 1e-10 * (1.0 + norm(x)) {
                return Err(GeomError::SingularJacobian {
                    det: f64::NAN,
                    floor: self.det_floor,
                    x: x[0],
                    y: x[1],
                });
            }
            let j = (self.grad_forward)(x);
            let det = det2(&j).abs();
            if det < self.det_floor {
                return Err(GeomError::SingularJacobian { det, floor: self.det_floor, x: x[0], y: x[1] });
            }
        }
        Ok(())
    }
}

/// An operator rewritten in flattened coordinates, together with the
/// transformed Neumann direction field on the image of 𝒩.
pub struct TransformedOperator {
    pub op: OperatorSpec,
    /// y ↦ ν(y); the last component equals −|∇H_N| at the preimage, hence is
    /// strictly negative.
    pub neumann_direction: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
}

/// Compose an operator with a flattening diffeomorphism:
/// F_H(y, p, M) = F(G(y), ∇H(G(y))ᵀ p, ∇H(G(y))ᵀ M ∇H(G(y)) + Σ_k p_k D²H_k(G(y))).
///
/// Ellipticity constants of the result are the supplied ones scaled by the
/// extreme squared singular values of ∇H over the validation samples.
pub fn transform_operator(
    f: &OperatorSpec,
    diffeo: &DiffeoSpec,
    validation_samples: &[[f64; 2]],
) -> Result<TransformedOperator, GeomError> {
    diffeo.validate(validation_samples)?;

    let mut smin2 = f64::INFINITY;
    let mut smax2 = 0.0f64;
    for &x in validation_samples {
        let j = (diffeo.grad_forward)(x);
        // singular values of a 2x2 from the Gram matrix spectrum
        let g = SymMatrix::new2(
            j[0][0] * j[0][0] + j[1][0] * j[1][0],
            j[0][0] * j[0][1] + j[1][0] * j[1][1],
            j[0][1] * j[0][1] + j[1][1] * j[1][1],
        );
        let ev = g.eigenvalues();
        smin2 = smin2.min(ev[0]);
        smax2 = smax2.max(ev[1]);
    }
    if !smin2.is_finite() || smin2 <= 0.0 {
        smin2 = 1.0;
        smax2 = smax2.max(1.0);
    }

    let base = f.clone();
    let inv = diffeo.inverse.clone();
    let gradf = diffeo.grad_forward.clone();
    let hessf = diffeo.hess_forward.clone();
    let eval = move |y: &[f64], p: &[f64], m: &SymMatrix| -> f64 {
        let x = inv([y[0], y[1]]);
        let j = gradf(x);
        let hs = hessf(x);
        let pt = [
            j[0][0] * p[0] + j[1][0] * p[1],
            j[0][1] * p[0] + j[1][1] * p[1],
        ];
        // ∇Hᵀ M ∇H with jacobian rows ∇H_k
        let mut mt = SymMatrix::zero(2);
        for i in 0..2 {
            for jj in i..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        s += j[k][i] * m.get(k, l) * j[l][jj];
                    }
                }
                mt.set(i, jj, s);
            }
        }
        let mt = mt.add(&hs[0].scaled(p[0])).add(&hs[1].scaled(p[1]));
        base.evaluate(&x, &pt, &mt)
    };

    let op = OperatorSpec::custom(
        f.a * smin2,
        f.big_a * smax2,
        f.alpha,
        Arc::new(eval),
    )
    .with_lipschitz(f.lip_p * smax2.sqrt())
    .with_x_modulus(f.c_f.max(1.0), f.theta_f);

    let inv2 = diffeo.inverse.clone();
    let gradf2 = diffeo.grad_forward.clone();
    let nu = move |y: [f64; 2]| -> [f64; 2] {
        let x = inv2(y);
        let j = gradf2(x);
        let gn = [j[1][0], j[1][1]]; // ∇H_N, the last component's gradient
        let n = norm(gn).max(1e-300);
        let dir = [-gn[0] / n, -gn[1] / n];
        [
            j[0][0] * dir[0] + j[0][1] * dir[1],
            j[1][0] * dir[0] + j[1][1] * dir[1],
        ]
    };

    Ok(TransformedOperator { op, neumann_direction: Arc::new(nu) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::OperatorSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zaremba_mixed() -> DomainSpec {
        // Dirichlet on the θ=0 ray only; Neumann on the θ=π ray and the arc.
        DomainSpec::half_disk(1.0, PieceKind::Dirichlet, PieceKind::Neumann, PieceKind::Neumann)
    }

    #[test]
    fn polar_angle_branches() {
        assert_eq!(polar_angle(1.0, 0.0).unwrap(), 0.0);
        assert!((polar_angle(0.0, -1.0).unwrap() - 1.5 * PI).abs() < 1e-15);
        assert!((polar_angle(-1.0, 0.0).unwrap() - PI).abs() < 1e-15);
        assert!(polar_angle(0.0, 0.0).is_err());
    }

    #[test]
    fn disk_distance_radial() {
        let dom = DomainSpec::disk(1.0, vec![]);
        let info = dom.distance_and_normal([0.5, 0.0]);
        assert!((info.d - 0.5).abs() < 1e-14);
        assert!((info.grad[0] + 1.0).abs() < 1e-14);
        assert!(info.grad[1].abs() < 1e-14);
        assert!(info.unique);
    }

    #[test]
    fn rectangle_distance_and_ridge() {
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let info = dom.distance_and_normal([0.5, 0.1]);
        assert!((info.d - 0.1).abs() < 1e-14);
        assert!((info.grad[1] - 1.0).abs() < 1e-14);
        let center = dom.distance_and_normal([0.5, 0.5]);
        assert!((center.d - 0.5).abs() < 1e-14);
        assert!(!center.unique);
    }

    #[test]
    fn half_disk_classification() {
        let dom = zaremba_mixed();
        let tol = 0.01;
        assert_eq!(dom.classify_boundary([0.5, 0.0], tol).unwrap(), BoundaryClass::Dirichlet);
        assert_eq!(dom.classify_boundary([0.0, 0.0], tol).unwrap(), BoundaryClass::Wedge);
        assert_eq!(dom.classify_boundary([-0.5, 0.0], tol).unwrap(), BoundaryClass::Neumann);
        assert!(dom.classify_boundary([0.5, 0.5], tol).is_err());
    }

    #[test]
    fn boundary_samples_get_exactly_one_label() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        for k in 0..200 {
            let t = k as f64 / 200.0;
            // walk the boundary: ray0, arc, ray1
            let p = if t < 0.25 {
                [4.0 * t, 0.0]
            } else if t < 0.75 {
                let th = (t - 0.25) * 2.0 * PI;
                [th.cos(), th.sin()]
            } else {
                [-4.0 * (1.0 - t), 0.0]
            };
            dom.classify_boundary(p, 1e-6).unwrap();
        }
    }

    #[test]
    fn eikonal_at_smooth_points() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 200 {
            let p = [rng.gen_range(-0.99..0.99), rng.gen_range(0.01..0.99)];
            if !dom.inside(p) {
                continue;
            }
            let info = dom.distance_and_normal(p);
            if info.unique {
                assert!((norm(info.grad) - 1.0).abs() < 1e-10, "|grad d| != 1 at {p:?}");
                checked += 1;
            }
        }
    }

    #[test]
    fn exterior_sphere_inequality_on_neumann_samples() {
        let dom = zaremba_mixed();
        let r_ext = dom.exterior_sphere_radius();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            // x on the Neumann part (either the θ=π ray or the arc)
            let x = if rng.gen_bool(0.5) {
                [-rng.gen_range(0.05..0.95), 0.0]
            } else {
                let th = rng.gen_range(0.05..PI - 0.05);
                [th.cos(), th.sin()]
            };
            let y = loop {
                let cand = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
                if dom.inside(cand) {
                    break cand;
                }
            };
            let g = dom.distance_and_normal(x).grad;
            let lhs = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            let rhs = 2.0 * r_ext * ((x[0] - y[0]) * g[0] + (x[1] - y[1]) * g[1]);
            assert!(lhs >= rhs - 1e-9, "exterior sphere inequality failed at x={x:?} y={y:?}");
        }
    }

    #[test]
    fn wedge_points_of_partitions() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        let w = dom.wedge_points();
        // Dirichlet ray0 + Dirichlet arc, Neumann ray1: wedges at the two
        // junctions touching the Neumann ray.
        assert_eq!(w.len(), 2);
        assert!(w.iter().any(|p| norm(*p) < 1e-12));
        assert!(w.iter().any(|p| norm(sub(*p, [-1.0, 0.0])) < 1e-12));

        let all_dirichlet = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        assert!(all_dirichlet.wedge_points().is_empty());
    }

    #[test]
    fn transform_identity_is_noop() {
        let f = OperatorSpec::pucci_plus(1.0, 2.0, 0.0).unwrap();
        let samples: Vec<[f64; 2]> = (0..50)
            .map(|k| {
                let t = k as f64 / 50.0;
                [0.3 * t - 0.1, 0.2 * t + 0.05]
            })
            .collect();
        let tf = transform_operator(&f, &DiffeoSpec::identity(), &samples).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let m = SymMatrix::new2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let a = tf.op.evaluate(&y, &p, &m);
            let b = f.evaluate(&y, &p, &m);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_rotation_preserves_pucci() {
        let f = OperatorSpec::pucci_plus(1.0, 2.0, 0.0).unwrap();
        let samples = vec![[0.1, 0.2], [0.5, -0.3], [-0.4, 0.4]];
        let tf = transform_operator(&f, &DiffeoSpec::rotation(PI / 4.0), &samples).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let m = SymMatrix::new2(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let a = tf.op.evaluate(&y, &p, &m);
            let b = f.evaluate(&y, &p, &m);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn transform_dilation_scales_trace() {
        // a = A = 1 makes both Pucci operators the trace.
        let f = OperatorSpec::pucci_plus(1.0, 1.0, 0.0).unwrap();
        let samples = vec![[0.2, 0.1], [-0.3, 0.5]];
        let tf = transform_operator(&f, &DiffeoSpec::dilation(2.0), &samples).unwrap();
        let m = SymMatrix::new2(1.0, 0.5, -2.0);
        let v = tf.op.evaluate(&[0.3, 0.4], &[0.0, 0.0], &m);
        assert!((v - 4.0 * m.trace()).abs() < 1e-12);
    }

    #[test]
    fn transform_round_trip_recovers_operator() {
        let f = OperatorSpec::pucci_plus(1.0, 2.0, 0.0).unwrap();
        let diffeo = DiffeoSpec::quadratic_bend(0.3);
        let samples = vec![[0.1, 0.2], [0.4, -0.2], [-0.3, 0.3]];
        let tf = transform_operator(&f, &diffeo, &samples).unwrap();
        let back = transform_operator(&tf.op, &diffeo.inverted(), &samples).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let m = SymMatrix::new2(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let a = back.op.evaluate(&x, &p, &m);
            let b = f.evaluate(&x, &p, &m);
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn transformed_neumann_direction_points_down() {
        let f = OperatorSpec::pucci_plus(1.0, 2.0, 0.0).unwrap();
        let diffeo = DiffeoSpec::quadratic_bend(0.2);
        let samples = vec![[0.1, 0.0], [0.5, 0.0], [-0.4, 0.0]];
        let tf = transform_operator(&f, &diffeo, &samples).unwrap();
        for &x in &samples {
            let y = (diffeo.forward)(x);
            let nu = (tf.neumann_direction)(y);
            let j = (diffeo.grad_forward)(x);
            let gn = f64::hypot(j[1][0], j[1][1]);
            assert!((nu[1] + gn).abs() < 1e-12, "ν_N must equal -|∇H_N|");
        }
    }

    #[test]
    fn sector_flatten_round_trip() {
        let d = DiffeoSpec::sector_flatten(PI / 2.0);
        let samples: Vec<[f64; 2]> = (1..20)
            .map(|k| {
                let th = 0.4 * PI * k as f64 / 20.0 + 0.02;
                let r = 0.3 + 0.6 * (k as f64 / 20.0);
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        d.validate(&samples).unwrap();
    }
}

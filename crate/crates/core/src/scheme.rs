//! Monotone wide-stencil discretization of −|∇u|^α F(x, ∇u, D²u) + β(u) − f
//! on structured grids.
//!
//! Pucci operators are discretized as extrema over orthogonal lattice
//! direction pairs of one-dimensional second differences: for each frame
//! {v, v⊥} the sum Σ (A Δ⁺ − a Δ⁻) underestimates 𝓜⁺ and the maximum over
//! frames is consistent as the direction set refines, with equality whenever
//! the Hessian eigenframe is sampled. The construction is degenerate
//! elliptic: every frame sum is nondecreasing in each neighbor value.
//!
//! The |∇u|^α prefactor uses a Godunov selection in upwind mode: the
//! magnitude estimate that is monotone in the direction demanded by the signs
//! of F and α, so the full residual stays nondecreasing in neighbor values
//! for the Pucci kinds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridField, NodeClass};
use crate::matrix::SymMatrix;
use crate::problem::{OperatorKind, ProblemSpec};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("stencil arm from node {idx} leaves the stored grid")]
    MissingNeighbor { idx: usize },
    #[error("unsupported direction count {0}: use 4, 8 or 16")]
    UnsupportedDirectionCount(usize),
    #[error("eps_grad = 0 requires alpha >= 0 (got alpha = {alpha})")]
    InvalidRegularization { alpha: f64 },
    #[error("node {idx} has no classification-consistent boundary data")]
    UnclassifiedNode { idx: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradMode {
    Centered,
    Upwind,
}

/// Stencil description: `direction_count` lattice directions spread over the
/// half circle (axes always included, antipodal pairs collapsed), arms of
/// `reach` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub direction_count: usize,
    pub reach: usize,
    pub grad_mode: GradMode,
}

impl Default for StencilSpec {
    fn default() -> Self {
        Self { direction_count: 4, reach: 1, grad_mode: GradMode::Upwind }
    }
}

/// Gradient floor: |∇u|_ε = sqrt(|∇u|² + ε²). With ε = 0 the scheme is only
/// defined for α ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub eps_grad: f64,
}

impl Regularization {
    /// Default choice tied to the grid spacing.
    pub fn tied_to_h(h: f64) -> Self {
        Self { eps_grad: h }
    }

    pub fn none() -> Self {
        Self { eps_grad: 0.0 }
    }

    pub fn check(&self, alpha: f64) -> Result<(), SchemeError> {
        if self.eps_grad == 0.0 && alpha < 0.0 {
            Err(SchemeError::InvalidRegularization { alpha })
        } else {
            Ok(())
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Precomputed frame table for a stencil.
#[derive(Debug, Clone)]
pub struct CompiledStencil {
    pub spec: StencilSpec,
    /// Orthogonal direction pairs (v, v⊥) with |v| = |v⊥|.
    frames: Vec<([i64; 2], [i64; 2], f64)>,
    directions: Vec<[i64; 2]>,
    max_reach: i64,
}

impl CompiledStencil {
    pub fn direction_count(&self) -> usize {
        self.directions.len()
    }

    pub fn max_reach_cells(&self) -> usize {
        self.max_reach as usize
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

pub fn compile(spec: &StencilSpec) -> Result<CompiledStencil, SchemeError> {
    let k: i64 = match spec.direction_count {
        4 => 1,
        8 => 2,
        16 => 3,
        other => return Err(SchemeError::UnsupportedDirectionCount(other)),
    };
    let mut directions = Vec::new();
    for p in -k..=k {
        for q in -k..=k {
            if (p, q) == (0, 0) || gcd(p, q) != 1 {
                continue;
            }
            // keep angles in [0, π)
            if q > 0 || (q == 0 && p > 0) {
                directions.push([p, q]);
            }
        }
    }
    directions.sort_by(|a, b| {
        let ta = (a[1] as f64).atan2(a[0] as f64);
        let tb = (b[1] as f64).atan2(b[0] as f64);
        ta.partial_cmp(&tb).unwrap()
    });
    // frames: each direction in [0, π/2) paired with its 90° rotation
    let mut frames = Vec::new();
    for v in &directions {
        if v[0] > 0 && v[1] >= 0 {
            let perp = [-v[1], v[0]];
            let len2 = (v[0] * v[0] + v[1] * v[1]) as f64;
            frames.push((*v, perp, len2));
        }
    }
    let reach = spec.reach.max(1) as i64;
    let max_reach = k * reach;
    Ok(CompiledStencil { spec: *spec, frames, directions, max_reach })
}

fn value_at(field: &GridField, idx: usize, di: i64, dj: i64) -> Result<f64, SchemeError> {
    field
        .grid
        .offset(idx, di, dj)
        .map(|n| field.values[n])
        .ok_or(SchemeError::MissingNeighbor { idx })
}

/// Second difference along lattice direction v with the given reach,
/// normalized so it is consistent with v̂ᵀ D²u v̂.
fn second_diff(field: &GridField, idx: usize, v: [i64; 2], reach: i64, len2: f64) -> Result<f64, SchemeError> {
    let h = field.grid.h;
    let u0 = field.values[idx];
    let up = value_at(field, idx, v[0] * reach, v[1] * reach)?;
    let um = value_at(field, idx, -v[0] * reach, -v[1] * reach)?;
    let step2 = len2 * (reach as f64 * h) * (reach as f64 * h);
    Ok((up - 2.0 * u0 + um) / step2)
}

/// One-sided and centered axis differences at a node.
struct AxisDiffs {
    dplus: [f64; 2],
    dminus: [f64; 2],
}

fn axis_diffs(field: &GridField, idx: usize) -> Result<AxisDiffs, SchemeError> {
    let h = field.grid.h;
    let u0 = field.values[idx];
    let e = value_at(field, idx, 1, 0)?;
    let w = value_at(field, idx, -1, 0)?;
    let n = value_at(field, idx, 0, 1)?;
    let s = value_at(field, idx, 0, -1)?;
    Ok(AxisDiffs {
        dplus: [(e - u0) / h, (n - u0) / h],
        dminus: [(u0 - w) / h, (u0 - s) / h],
    })
}

/// Discrete gradient. Centered mode is second order; upwind mode selects the
/// larger-magnitude one-sided difference per axis (Godunov style).
pub fn gradient_stencil(
    field: &GridField,
    idx: usize,
    stencil: &StencilSpec,
) -> Result<[f64; 2], SchemeError> {
    let d = axis_diffs(field, idx)?;
    Ok(match stencil.grad_mode {
        GradMode::Centered => [
            0.5 * (d.dplus[0] + d.dminus[0]),
            0.5 * (d.dplus[1] + d.dminus[1]),
        ],
        GradMode::Upwind => {
            let pick = |dp: f64, dm: f64| if dm.abs() >= dp.abs() { dm } else { dp };
            [pick(d.dplus[0], d.dminus[0]), pick(d.dplus[1], d.dminus[1])]
        }
    })
}

/// Godunov gradient magnitudes: `up` is nondecreasing in neighbor values,
/// `down` is nonincreasing.
fn godunov_magnitudes(d: &AxisDiffs) -> (f64, f64) {
    let mut up2 = 0.0;
    let mut down2 = 0.0;
    for k in 0..2 {
        let cu = d.dplus[k].max(0.0).max(-d.dminus[k]).max(0.0);
        let cd = (-d.dplus[k]).max(0.0).max(d.dminus[k]).max(0.0);
        up2 += cu * cu;
        down2 += cd * cd;
    }
    (up2.sqrt(), down2.sqrt())
}

/// Discrete Pucci operator: extremum over orthogonal frames of the frame sums
/// of one-dimensional second differences.
pub fn discrete_pucci(
    field: &GridField,
    idx: usize,
    a: f64,
    big_a: f64,
    stencil: &StencilSpec,
    kind: OperatorKind,
) -> Result<f64, SchemeError> {
    let compiled = compile(stencil)?;
    discrete_pucci_compiled(field, idx, a, big_a, &compiled, kind)
}

pub fn discrete_pucci_compiled(
    field: &GridField,
    idx: usize,
    a: f64,
    big_a: f64,
    stencil: &CompiledStencil,
    kind: OperatorKind,
) -> Result<f64, SchemeError> {
    let reach = stencil.spec.reach.max(1) as i64;
    let mut best = match kind {
        OperatorKind::PucciPlus => f64::NEG_INFINITY,
        _ => f64::INFINITY,
    };
    for (v, perp, len2) in &stencil.frames {
        let d1 = second_diff(field, idx, *v, reach, *len2)?;
        let d2 = second_diff(field, idx, *perp, reach, *len2)?;
        let sum = match kind {
            OperatorKind::PucciPlus => {
                big_a * d1.max(0.0) - a * (-d1).max(0.0) + big_a * d2.max(0.0) - a * (-d2).max(0.0)
            }
            _ => a * d1.max(0.0) - big_a * (-d1).max(0.0) + a * d2.max(0.0) - big_a * (-d2).max(0.0),
        };
        best = match kind {
            OperatorKind::PucciPlus => best.max(sum),
            _ => best.min(sum),
        };
    }
    Ok(best)
}

/// Assemble a full Hessian estimate from axis and diagonal second
/// differences, for direct evaluation of custom operators.
fn assembled_hessian(field: &GridField, idx: usize) -> Result<SymMatrix, SchemeError> {
    let m11 = second_diff(field, idx, [1, 0], 1, 1.0)?;
    let m22 = second_diff(field, idx, [0, 1], 1, 1.0)?;
    let dp = second_diff(field, idx, [1, 1], 1, 2.0)?;
    let dm = second_diff(field, idx, [1, -1], 1, 2.0)?;
    let m12 = 0.5 * (dp - dm);
    Ok(SymMatrix::new2(m11, m12, m22))
}

fn powa(g: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if alpha == 1.0 {
        g
    } else if alpha == 2.0 {
        g * g
    } else {
        g.powf(alpha)
    }
}

/// Fill Dirichlet pins and ghost values.
///
/// Dirichlet and wedge nodes take the data at their boundary projection.
/// Exterior nodes within stencil reach of an unknown get ghost values by
/// reflection through the nearest boundary point: even (value-copy) across a
/// Neumann piece, odd through the data across a Dirichlet piece. Reflection
/// is exact to second order across axis-aligned boundaries and first order on
/// curved ones.
pub fn apply_boundary(
    field: &mut GridField,
    problem: &ProblemSpec,
    stencil: &StencilSpec,
) -> Result<(), SchemeError> {
    let compiled = compile(stencil)?;
    apply_boundary_compiled(field, problem, &compiled)
}

pub fn apply_boundary_compiled(
    field: &mut GridField,
    problem: &ProblemSpec,
    stencil: &CompiledStencil,
) -> Result<(), SchemeError> {
    field.pin_dirichlet(&problem.domain, &problem.dirichlet);

    let reach = stencil.max_reach as i64;
    let grid = field.grid;
    let n = grid.node_count();

    // ghost band: exterior nodes that some unknown's stencil arm can touch
    let mut ghost_targets = Vec::new();
    for idx in 0..n {
        if field.class[idx] != NodeClass::Exterior {
            continue;
        }
        let mut needed = false;
        'scan: for dj in -reach..=reach {
            for di in -reach..=reach {
                if let Some(nb) = grid.offset(idx, di, dj) {
                    if field.is_unknown(nb) {
                        needed = true;
                        break 'scan;
                    }
                }
            }
        }
        if needed {
            ghost_targets.push(idx);
        }
    }

    let mut updates = Vec::with_capacity(ghost_targets.len());
    for &idx in &ghost_targets {
        let p = grid.pos(idx);
        let (b, kind, _) = problem.domain.nearest_boundary(p);
        let refl = [2.0 * b[0] - p[0], 2.0 * b[1] - p[1]];
        let mirrored = field.interp_valued(refl);
        let v = match kind {
            crate::geometry::PieceKind::Neumann => {
                mirrored.or_else(|| local_nearest_valued(field, idx, reach)).ok_or(
                    SchemeError::UnclassifiedNode { idx },
                )?
            }
            crate::geometry::PieceKind::Dirichlet => {
                let g = problem.dirichlet.eval(&problem.domain, b);
                match mirrored {
                    Some(m) => 2.0 * g - m,
                    None => g,
                }
            }
        };
        updates.push((idx, v));
    }
    for (idx, v) in updates {
        field.values[idx] = v;
    }
    Ok(())
}

fn local_nearest_valued(field: &GridField, idx: usize, radius: i64) -> Option<f64> {
    let p = field.grid.pos(idx);
    let mut best: Option<(f64, f64)> = None;
    for dj in -2 * radius..=2 * radius {
        for di in -2 * radius..=2 * radius {
            if let Some(nb) = field.grid.offset(idx, di, dj) {
                if field.class[nb] != NodeClass::Exterior {
                    let q = field.grid.pos(nb);
                    let d = f64::hypot(p[0] - q[0], p[1] - q[1]);
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, field.values[nb]));
                    }
                }
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Residual at one node: |∇u|_ε^α F_h − β(u) + f. Positive residual means the
/// node value should increase.
pub fn residual_at(
    field: &GridField,
    problem: &ProblemSpec,
    stencil: &CompiledStencil,
    reg: &Regularization,
    idx: usize,
) -> Result<f64, SchemeError> {
    let op = &problem.operator;
    let x = field.grid.pos(idx);
    let u0 = field.values[idx];
    let (fh, gmag) = match op.kind {
        OperatorKind::PucciPlus | OperatorKind::PucciMinus => {
            let fh = discrete_pucci_compiled(field, idx, op.a, op.big_a, stencil, op.kind)?;
            let gmag = match stencil.spec.grad_mode {
                GradMode::Centered => {
                    let d = axis_diffs(field, idx)?;
                    f64::hypot(
                        0.5 * (d.dplus[0] + d.dminus[0]),
                        0.5 * (d.dplus[1] + d.dminus[1]),
                    )
                }
                GradMode::Upwind => {
                    let d = axis_diffs(field, idx)?;
                    let (up, down) = godunov_magnitudes(&d);
                    // pick the selection that keeps g^α · F_h monotone in the
                    // neighbor values
                    if (fh >= 0.0) == (op.alpha >= 0.0) {
                        up
                    } else {
                        down
                    }
                }
            };
            (fh, gmag)
        }
        OperatorKind::Custom => {
            let m = assembled_hessian(field, idx)?;
            let p = gradient_stencil(field, idx, &stencil.spec)?;
            let fh = op.evaluate(&x, &p, &m);
            (fh, f64::hypot(p[0], p[1]))
        }
    };
    let geps = f64::hypot(gmag, reg.eps_grad);
    Ok(powa(geps, op.alpha) * fh - problem.beta.eval(u0) + problem.source.eval(x))
}

/// Residual field: the per-node residual at interior and Neumann nodes and
/// zero at pinned or exterior nodes. Boundary values must be applied first.
pub fn residual(
    field: &GridField,
    problem: &ProblemSpec,
    stencil: &StencilSpec,
    reg: &Regularization,
) -> Result<GridField, SchemeError> {
    reg.check(problem.operator.alpha)?;
    let compiled = compile(stencil)?;
    let mut out = GridField {
        grid: field.grid,
        values: vec![0.0; field.values.len()],
        class: field.class.clone(),
    };
    for idx in 0..field.grid.node_count() {
        if field.is_unknown(idx) {
            out.values[idx] = residual_at(field, problem, &compiled, reg, idx)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, PieceKind};
    use crate::problem::{BetaSpec, DirichletSpec, OperatorSpec, SourceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fill(field: &mut GridField, f: impl Fn(f64, f64) -> f64) {
        for idx in 0..field.grid.node_count() {
            let p = field.grid.pos(idx);
            field.values[idx] = f(p[0], p[1]);
        }
    }

    fn square_problem(op: OperatorSpec) -> ProblemSpec {
        ProblemSpec {
            domain: DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]),
            operator: op,
            beta: BetaSpec::Zero,
            source: SourceSpec::Constant(0.0),
            dirichlet: DirichletSpec::Zero,
        }
    }

    fn node_at(grid: &crate::grid::Grid, x: f64, y: f64) -> usize {
        grid.idx(
            ((x - grid.x0) / grid.h).round() as usize,
            ((y - grid.y0) / grid.h).round() as usize,
        )
    }

    #[test]
    fn gradient_exact_on_affine_fields() {
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let mut f = GridField::build(&dom, 0.1, 2);
        fill(&mut f, |x, _| x);
        for mode in [GradMode::Centered, GradMode::Upwind] {
            let st = StencilSpec { direction_count: 4, reach: 1, grad_mode: mode };
            let g = gradient_stencil(&f, node_at(&f.grid, 0.5, 0.5), &st).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-13 && g[1].abs() < 1e-13);
        }
        fill(&mut f, |_, _| 3.0);
        let st = StencilSpec::default();
        let g = gradient_stencil(&f, node_at(&f.grid, 0.5, 0.5), &st).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn centered_gradient_exact_on_quadratics() {
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let mut f = GridField::build(&dom, 0.1, 2);
        fill(&mut f, |x, _| x * x);
        let st = StencilSpec { direction_count: 4, reach: 1, grad_mode: GradMode::Centered };
        let g = gradient_stencil(&f, node_at(&f.grid, 0.5, 0.5), &st).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn discrete_pucci_quadratic_saddle() {
        let dom = DomainSpec::rectangle(2.0, 2.0, [PieceKind::Dirichlet; 4]);
        let mut f = GridField::build(&dom, 0.05, 4);
        fill(&mut f, |x, y| 0.5 * ((x - 1.0) * (x - 1.0) - (y - 1.0) * (y - 1.0)));
        let st = StencilSpec { direction_count: 16, reach: 1, grad_mode: GradMode::Centered };
        let v = discrete_pucci(&f, node_at(&f.grid, 1.0, 1.0), 1.0, 2.0, &st, OperatorKind::PucciPlus)
            .unwrap();
        assert!((v - 1.0).abs() <= 0.1, "directional resolution error too large: {v}");
    }

    #[test]
    fn discrete_pucci_paraboloid_exact() {
        let dom = DomainSpec::rectangle(2.0, 2.0, [PieceKind::Dirichlet; 4]);
        let mut f = GridField::build(&dom, 0.1, 4);
        fill(&mut f, |x, y| 0.5 * ((x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0)));
        for dc in [4usize, 8, 16] {
            let st = StencilSpec { direction_count: dc, reach: 1, grad_mode: GradMode::Centered };
            let v =
                discrete_pucci(&f, node_at(&f.grid, 1.0, 1.0), 1.0, 2.0, &st, OperatorKind::PucciPlus)
                    .unwrap();
            assert!((v - 4.0).abs() < 1e-11, "expected A*N on the unit paraboloid, got {v}");
        }
        let constant = {
            let mut g = GridField::build(&dom, 0.1, 4);
            fill(&mut g, |_, _| 7.0);
            g
        };
        let st = StencilSpec::default();
        let v = discrete_pucci(&constant, node_at(&constant.grid, 1.0, 1.0), 1.0, 2.0, &st, OperatorKind::PucciPlus)
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn neumann_reflection_is_exact_for_even_fields() {
        // bottom edge Neumann, field x^2 has no y-dependence
        let dom = DomainSpec::rectangle(
            1.0,
            1.0,
            [PieceKind::Dirichlet, PieceKind::Dirichlet, PieceKind::Neumann, PieceKind::Dirichlet],
        );
        let mut f = GridField::build(&dom, 0.125, 2);
        fill(&mut f, |x, _| x * x);
        let problem = square_problem(OperatorSpec::pucci_plus(1.0, 1.0, 0.0).unwrap());
        let problem = ProblemSpec { domain: dom.clone(), ..problem };
        let st = StencilSpec::default();
        apply_boundary(&mut f, &problem, &st).unwrap();
        // ghost row below y=0 must mirror the row above
        let grid = f.grid;
        for i in 3..grid.nx - 3 {
            let above = f.values[node_at(&grid, grid.x0 + i as f64 * grid.h, grid.h)];
            let ghost = f.values[node_at(&grid, grid.x0 + i as f64 * grid.h, -grid.h)];
            if dom.inside([grid.x0 + i as f64 * grid.h, grid.h]) {
                assert!((above - ghost).abs() < 1e-12, "ghost mismatch at i={i}");
            }
        }
        // normal difference across the edge vanishes
        let mid = node_at(&grid, 0.5, 0.0);
        let st = StencilSpec { grad_mode: GradMode::Centered, ..st };
        let g = gradient_stencil(&f, mid, &st).unwrap();
        assert!(g[1].abs() < 1e-12);
    }

    #[test]
    fn residual_zero_on_exact_quadratic_steady_state() {
        // a = A = 1, alpha = 0, beta = 0, u = x² + y², f = -4: residual is
        // exactly zero because second differences are exact on quadratics.
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let problem = ProblemSpec {
            domain: dom.clone(),
            operator: OperatorSpec::pucci_plus(1.0, 1.0, 0.0).unwrap(),
            beta: BetaSpec::Zero,
            source: SourceSpec::Constant(-4.0),
            dirichlet: DirichletSpec::Custom(std::sync::Arc::new(|p| p[0] * p[0] + p[1] * p[1])),
        };
        let mut f = GridField::build(&dom, 0.125, 2);
        fill(&mut f, |x, y| x * x + y * y);
        let st = StencilSpec { direction_count: 4, reach: 1, grad_mode: GradMode::Centered };
        apply_boundary(&mut f, &problem, &st).unwrap();
        let res = residual(&f, &problem, &st, &Regularization::none()).unwrap();
        for idx in 0..f.grid.node_count() {
            if f.class[idx] == NodeClass::Interior {
                assert!(res.values[idx].abs() < 1e-10, "residual {} at {:?}", res.values[idx], f.grid.pos(idx));
            }
        }
    }

    #[test]
    fn residual_constants() {
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let mut problem = square_problem(OperatorSpec::pucci_plus(1.0, 2.0, 0.0).unwrap());
        let mut f = GridField::build(&dom, 0.25, 2);
        let st = StencilSpec::default();
        apply_boundary(&mut f, &problem, &st).unwrap();
        let res = residual(&f, &problem, &st, &Regularization::tied_to_h(0.25)).unwrap();
        assert!(res.values.iter().all(|v| *v == 0.0));

        problem.source = SourceSpec::Constant(1.0);
        let res = residual(&f, &problem, &st, &Regularization::tied_to_h(0.25)).unwrap();
        for idx in 0..f.grid.node_count() {
            if f.is_unknown(idx) {
                assert!((res.values[idx] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_ellipticity_under_neighbor_increase() {
        // increasing any neighbor value must not decrease the residual
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for &alpha in &[0.0, 1.0, -0.5] {
            for kind in [OperatorKind::PucciPlus, OperatorKind::PucciMinus] {
                let op = match kind {
                    OperatorKind::PucciPlus => OperatorSpec::pucci_plus(1.0, 2.0, alpha).unwrap(),
                    _ => OperatorSpec::pucci_minus(1.0, 2.0, alpha).unwrap(),
                };
                let problem = ProblemSpec {
                    beta: BetaSpec::Linear { coeff: 1.0 },
                    ..square_problem(op)
                };
                let h = 0.125;
                let reg = Regularization::tied_to_h(h);
                let st = StencilSpec { direction_count: 8, reach: 1, grad_mode: GradMode::Upwind };
                let compiled = compile(&st).unwrap();
                for _case in 0..40 {
                    let mut f = GridField::build(&dom, h, 2);
                    fill(&mut f, |x, y| {
                        (3.0 * x).sin() * (2.0 * y).cos() * 0.3 + 0.1 * x * y
                    });
                    for v in f.values.iter_mut() {
                        *v += rng.gen_range(-0.05..0.05);
                    }
                    let idx = node_at(&f.grid, 0.5, 0.5);
                    let base = residual_at(&f, &problem, &compiled, &reg, idx).unwrap();
                    // bump a random neighbor within the stencil reach
                    let di = rng.gen_range(-2i64..=2);
                    let dj = rng.gen_range(-2i64..=2);
                    if (di, dj) == (0, 0) {
                        continue;
                    }
                    let nb = f.grid.offset(idx, di, dj).unwrap();
                    f.values[nb] += rng.gen_range(0.0..0.2);
                    let bumped = residual_at(&f, &problem, &compiled, &reg, idx).unwrap();
                    assert!(
                        bumped >= base - 1e-12,
                        "residual decreased from {base} to {bumped} (alpha={alpha}, kind={kind:?}, bump at ({di},{dj}))"
                    );
                }
            }
        }
    }

    #[test]
    fn residual_consistent_on_smooth_fields() {
        // a = A makes every frame sum the Laplacian, so the only consistency
        // error is the O(h²) second-difference truncation plus the gradient
        // factor; the observed rate must be at least 1.
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let op = OperatorSpec::pucci_plus(1.0, 1.0, 1.0).unwrap();
        let problem = square_problem(op);
        let exact = |x: f64, y: f64| (2.0 * x).sin() * (1.5 * y).cos();
        let mut errs = Vec::new();
        for &h in &[0.05, 0.025, 0.0125] {
            let mut f = GridField::build(&dom, h, 2);
            fill(&mut f, |x, y| exact(x, y));
            let st = StencilSpec { direction_count: 4, reach: 1, grad_mode: GradMode::Centered };
            let reg = Regularization::none();
            let idx = node_at(&f.grid, 0.5, 0.5);
            let got = residual_at(&f, &problem, &compile(&st).unwrap(), &reg, idx).unwrap();
            // continuum value at (0.5, 0.5)
            let (x, y) = (0.5f64, 0.5f64);
            let ux = 2.0 * (2.0 * x).cos() * (1.5 * y).cos();
            let uy = -1.5 * (2.0 * x).sin() * (1.5 * y).sin();
            let uxx = -4.0 * (2.0 * x).sin() * (1.5 * y).cos();
            let uyy = -2.25 * (2.0 * x).sin() * (1.5 * y).cos();
            let cont = f64::hypot(ux, uy) * (uxx + uyy);
            errs.push((got - cont).abs());
        }
        let rate1 = (errs[0] / errs[1]).log2();
        let rate2 = (errs[1] / errs[2]).log2();
        assert!(rate1 >= 1.0 && rate2 >= 1.0, "rates {rate1:.2}, {rate2:.2} from errors {errs:?}");
    }

    #[test]
    fn eps_zero_rejected_for_negative_alpha() {
        let dom = DomainSpec::rectangle(1.0, 1.0, [PieceKind::Dirichlet; 4]);
        let problem = square_problem(OperatorSpec::pucci_plus(1.0, 2.0, -0.5).unwrap());
        let f = GridField::build(&dom, 0.25, 2);
        let st = StencilSpec::default();
        assert!(matches!(
            residual(&f, &problem, &st, &Regularization::none()),
            Err(SchemeError::InvalidRegularization { .. })
        ));
    }
}

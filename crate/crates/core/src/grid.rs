//! Structured grids over canonical domains with per-node classification.
//!
//! Nodes on or inside the domain carry unknowns or pinned boundary data;
//! a collar of exterior nodes wide enough for the widest stencil arm is kept
//! for ghost values.

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundaryClass, DomainSpec, PieceKind};
use crate::problem::DirichletSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    DirichletBdry,
    NeumannBdry,
    WedgeBdry,
    Exterior,
}

/// Uniform grid: node (i, j) sits at (x0 + i h, y0 + j h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn pos(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.nx;
        let j = idx / self.nx;
        [self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h]
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Neighbor index offset by (di, dj) if it stays on the stored grid.
    pub fn offset(&self, idx: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
            None
        } else {
            Some(self.idx(ni as usize, nj as usize))
        }
    }

    /// Indices of the cell corners around point p for bilinear interpolation,
    /// with the local coordinates inside the cell.
    fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize, f64, f64)> {
        let fx = (p[0] - self.x0) / self.h;
        let fy = (p[1] - self.y0) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        Some((i, j, fx - i as f64, fy - j as f64))
    }
}

/// A scalar field on a classified structured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub class: Vec<NodeClass>,
}

impl GridField {
    /// Build a classified zero field over `domain` with spacing `h` and an
    /// exterior margin of `margin_cells` cells on every side.
    ///
    /// Classification, with s the distance to ∂Ω:
    /// - on the boundary (s ≈ 0): wedge points within h/2 pin to Dirichlet
    ///   data, otherwise the nearest piece kind decides (Neumann nodes stay
    ///   unknowns),
    /// - inside: within h/2 of a Dirichlet piece or a wedge point pins,
    ///   within h/2 of a Neumann piece tags NeumannBdry (still an unknown),
    ///   deeper nodes are Interior,
    /// - outside: within h/2 of a Dirichlet piece or wedge pins (the data is
    ///   taken at the boundary projection), everything else is Exterior and
    ///   serves as ghost storage.
    pub fn build(domain: &DomainSpec, h: f64, margin_cells: usize) -> Self {
        let (lo, hi) = domain.bbox();
        let m = margin_cells as f64;
        let x0 = lo[0] - m * h;
        let y0 = lo[1] - m * h;
        let nx = ((hi[0] - lo[0]) / h).round() as usize + 2 * margin_cells + 1;
        let ny = ((hi[1] - lo[1]) / h).round() as usize + 2 * margin_cells + 1;
        let grid = Grid { h, x0, y0, nx, ny };

        let wedges = domain.wedge_points();
        let on_tol = 1e-9 * (1.0 + hi[0].abs().max(hi[1].abs()));
        let half = 0.5 * h;

        let mut class = vec![NodeClass::Exterior; grid.node_count()];
        for idx in 0..grid.node_count() {
            let p = grid.pos(idx);
            let (_, kind, s) = domain.nearest_boundary(p);
            let near_wedge = wedges
                .iter()
                .any(|w| f64::hypot(p[0] - w[0], p[1] - w[1]) <= half);
            let inside = domain.inside(p);
            class[idx] = if s <= on_tol {
                // exactly on the boundary
                if near_wedge {
                    NodeClass::WedgeBdry
                } else {
                    match kind {
                        PieceKind::Dirichlet => NodeClass::DirichletBdry,
                        PieceKind::Neumann => NodeClass::NeumannBdry,
                    }
                }
            } else if inside {
                if near_wedge && s <= half {
                    NodeClass::WedgeBdry
                } else if s <= half && kind == PieceKind::Dirichlet {
                    NodeClass::DirichletBdry
                } else if s <= half && kind == PieceKind::Neumann {
                    NodeClass::NeumannBdry
                } else {
                    NodeClass::Interior
                }
            } else if s <= half && (near_wedge || kind == PieceKind::Dirichlet) {
                if near_wedge {
                    NodeClass::WedgeBdry
                } else {
                    NodeClass::DirichletBdry
                }
            } else {
                NodeClass::Exterior
            };
        }

        GridField { grid, values: vec![0.0; class.len()], class }
    }

    pub fn is_unknown(&self, idx: usize) -> bool {
        matches!(self.class[idx], NodeClass::Interior | NodeClass::NeumannBdry)
    }

    pub fn is_pinned(&self, idx: usize) -> bool {
        matches!(self.class[idx], NodeClass::DirichletBdry | NodeClass::WedgeBdry)
    }

    /// Pin Dirichlet and wedge nodes to the data evaluated at their boundary
    /// projections.
    pub fn pin_dirichlet(&mut self, domain: &DomainSpec, data: &DirichletSpec) {
        for idx in 0..self.grid.node_count() {
            if self.is_pinned(idx) {
                let p = self.grid.pos(idx);
                let (b, _, _) = domain.nearest_boundary(p);
                self.values[idx] = data.eval(domain, b);
            }
        }
    }

    /// Bilinear interpolation using only non-exterior corner nodes; weights
    /// are renormalized when a corner is missing. Returns None if no valued
    /// corner is available.
    pub fn interp_valued(&self, p: [f64; 2]) -> Option<f64> {
        let (i, j, tx, ty) = self.grid.cell_of(p)?;
        let corners = [
            (self.grid.idx(i, j), (1.0 - tx) * (1.0 - ty)),
            (self.grid.idx(i + 1, j), tx * (1.0 - ty)),
            (self.grid.idx(i, j + 1), (1.0 - tx) * ty),
            (self.grid.idx(i + 1, j + 1), tx * ty),
        ];
        let mut num = 0.0;
        let mut den = 0.0;
        for (idx, w) in corners {
            if self.class[idx] != NodeClass::Exterior {
                num += w * self.values[idx];
                den += w;
            }
        }
        if den > 1e-12 {
            Some(num / den)
        } else {
            None
        }
    }

    /// Nearest non-exterior node value, the fallback when interpolation has
    /// no support.
    pub fn nearest_valued(&self, p: [f64; 2]) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for idx in 0..self.grid.node_count() {
            if self.class[idx] == NodeClass::Exterior {
                continue;
            }
            let q = self.grid.pos(idx);
            let d = f64::hypot(p[0] - q[0], p[1] - q[1]);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, self.values[idx]));
            }
        }
        best.map(|(_, v)| v)
    }

    pub fn max_abs_over_unknowns(&self) -> f64 {
        (0..self.grid.node_count())
            .filter(|&i| self.is_unknown(i))
            .fold(0.0f64, |m, i| m.max(self.values[i].abs()))
    }

    /// Check that every non-exterior node carries a finite value.
    pub fn all_finite(&self) -> bool {
        self.values
            .iter()
            .zip(self.class.iter())
            .all(|(v, c)| *c == NodeClass::Exterior || v.is_finite())
    }
}

pub fn boundary_class_to_node(class: BoundaryClass) -> NodeClass {
    match class {
        BoundaryClass::Dirichlet => NodeClass::DirichletBdry,
        BoundaryClass::Neumann => NodeClass::NeumannBdry,
        BoundaryClass::Wedge => NodeClass::WedgeBdry,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, PieceKind};

    #[test]
    fn rectangle_grid_classes() {
        let dom = DomainSpec::rectangle(
            1.0,
            1.0,
            [PieceKind::Dirichlet, PieceKind::Dirichlet, PieceKind::Neumann, PieceKind::Dirichlet],
        );
        let f = GridField::build(&dom, 0.25, 2);
        let grid = f.grid;
        // center is interior
        let center = grid.idx(
            ((0.5 - grid.x0) / grid.h).round() as usize,
            ((0.5 - grid.y0) / grid.h).round() as usize,
        );
        assert_eq!(f.class[center], NodeClass::Interior);
        // bottom edge midpoint is Neumann
        let bottom = grid.idx(((0.5 - grid.x0) / grid.h).round() as usize, 2);
        assert_eq!(f.class[bottom], NodeClass::NeumannBdry);
        // bottom corners adjoin the Neumann edge: wedges
        let corner = grid.idx(2, 2);
        assert_eq!(f.class[corner], NodeClass::WedgeBdry);
    }

    #[test]
    fn half_disk_wedge_has_both_neighbors() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        let f = GridField::build(&dom, 1.0 / 16.0, 2);
        let grid = f.grid;
        let wedges: Vec<usize> = (0..grid.node_count())
            .filter(|&i| f.class[i] == NodeClass::WedgeBdry)
            .collect();
        assert!(!wedges.is_empty());
        for w in wedges {
            let mut saw_dirichlet = false;
            let mut saw_neumann = false;
            for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    if let Some(n) = grid.offset(w, di, dj) {
                        match f.class[n] {
                            NodeClass::DirichletBdry => saw_dirichlet = true,
                            NodeClass::NeumannBdry => saw_neumann = true,
                            _ => {}
                        }
                    }
                }
            }
            assert!(
                saw_dirichlet && saw_neumann,
                "wedge node at {:?} lacks a Dirichlet or Neumann neighbor",
                grid.pos(w)
            );
        }
    }

    #[test]
    fn half_disk_origin_and_ray_classes() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        let h = 1.0 / 8.0;
        let f = GridField::build(&dom, h, 2);
        let grid = f.grid;
        let at = |x: f64, y: f64| {
            grid.idx(
                ((x - grid.x0) / h).round() as usize,
                ((y - grid.y0) / h).round() as usize,
            )
        };
        assert_eq!(f.class[at(0.0, 0.0)], NodeClass::WedgeBdry);
        assert_eq!(f.class[at(0.5, 0.0)], NodeClass::DirichletBdry);
        assert_eq!(f.class[at(-0.5, 0.0)], NodeClass::NeumannBdry);
        assert_eq!(f.class[at(0.0, 0.5)], NodeClass::Interior);
        assert_eq!(f.class[at(0.0, -0.25)], NodeClass::Exterior);
    }

    #[test]
    fn pinning_uses_boundary_projection() {
        let dom = DomainSpec::zaremba_half_disk(1.0);
        let mut f = GridField::build(&dom, 1.0 / 8.0, 2);
        f.pin_dirichlet(&dom, &crate::problem::DirichletSpec::Constant(3.0));
        for idx in 0..f.grid.node_count() {
            if f.is_pinned(idx) {
                assert_eq!(f.values[idx], 3.0);
            }
        }
        assert!(f.all_finite());
    }
}

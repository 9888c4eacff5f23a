//! Structured criss-cross triangulation of the rectangular fault domain.
//!
//! Every grid rectangle is split into four triangles through an extra node at
//! its centroid. The top and bottom edges are the moving plates (Dirichlet
//! boundary, corners included); the left and right edges are traction
//! boundaries.

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Grid rectangles per direction on level 0.
pub const BASE_NX: usize = 9;
pub const BASE_NY: usize = 8;

/// Dimensions of the rectangular domain and of its two horizontal stripes.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    /// m
    pub width: f64,
    /// m
    pub height: f64,
    /// Height of the initially half-damaged stripe, centered vertically (m).
    pub damaged_stripe_height: f64,
    /// Height of the stripe over which the reaction force is averaged (m).
    pub fault_stripe_height: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            width: 400.0,
            height: 100.0,
            damaged_stripe_height: 8.0,
            fault_stripe_height: 20.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid("width_m", "must be positive and finite"));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::invalid("height_m", "must be positive and finite"));
        }
        // A zero-height damaged stripe means an initially intact body.
        if !(self.damaged_stripe_height >= 0.0) {
            return Err(Error::invalid("damaged_stripe_m", "must be nonnegative"));
        }
        if !(self.fault_stripe_height > 0.0 && self.fault_stripe_height < self.height) {
            return Err(Error::invalid(
                "fault_stripe_m",
                "must lie strictly between 0 and the domain height",
            ));
        }
        if self.damaged_stripe_height > self.fault_stripe_height {
            return Err(Error::invalid(
                "damaged_stripe_m",
                "must not exceed fault_stripe_m",
            ));
        }
        Ok(())
    }

    /// Whether `y` lies in the centered stripe of the given height (closed).
    pub fn in_centered_stripe(&self, y: f64, stripe_height: f64) -> bool {
        if stripe_height <= 0.0 {
            return false;
        }
        let tol = 1e-12 * self.height;
        (y - 0.5 * self.height).abs() <= 0.5 * stripe_height + tol
    }
}

/// Which plate a Dirichlet node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plate {
    Bottom,
    Top,
}

impl Plate {
    /// Sign of the horizontal plate velocity: top moves right, bottom left.
    pub fn sign(self) -> f64 {
        match self {
            Plate::Top => 1.0,
            Plate::Bottom => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, Side::Bottom | Side::Top)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
}

/// Area and constant basis-function gradients of a P1 triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub gradients: [Point; 3],
}

impl ElementGeometry {
    pub fn from_vertices(p: [Point; 3]) -> Option<Self> {
        let twice_area = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
        if !(twice_area > 0.0) {
            return None;
        }
        let inv = 1.0 / twice_area;
        let gradients = [
            Point::new(p[1].y - p[2].y, p[2].x - p[1].x) * inv,
            Point::new(p[2].y - p[0].y, p[0].x - p[2].x) * inv,
            Point::new(p[0].y - p[1].y, p[1].x - p[0].x) * inv,
        ];
        Some(ElementGeometry {
            area: 0.5 * twice_area,
            gradients,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Dirichlet nodes in increasing order, tagged with their plate.
    pub dirichlet_nodes: Vec<(usize, Plate)>,
    pub neumann_edges: Vec<BoundaryEdge>,
    pub dirichlet_edges: Vec<BoundaryEdge>,
    pub level: u32,
    elements: Vec<ElementGeometry>,
}

impl Mesh {
    /// Build a mesh from explicit parts. Triangles must be counterclockwise.
    pub fn from_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        mut dirichlet_nodes: Vec<(usize, Plate)>,
        boundary_edges: Vec<BoundaryEdge>,
        level: u32,
    ) -> Result<Self> {
        let mut elements = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            match ElementGeometry::from_vertices(p) {
                Some(g) => elements.push(g),
                None => {
                    let area = 0.5
                        * ((p[1].x - p[0].x) * (p[2].y - p[0].y)
                            - (p[2].x - p[0].x) * (p[1].y - p[0].y));
                    return Err(Error::DegenerateElement { element: k, area });
                }
            }
        }
        dirichlet_nodes.sort_by_key(|&(n, _)| n);
        dirichlet_nodes.dedup_by_key(|&mut (n, _)| n);
        let (dirichlet_edges, neumann_edges) =
            boundary_edges.into_iter().partition(|e| e.side.is_dirichlet());
        Ok(Mesh {
            nodes,
            triangles,
            dirichlet_nodes,
            neumann_edges,
            dirichlet_edges,
            level,
            elements,
        })
    }

    /// Criss-cross mesh of `nx × ny` rectangles over `[0,width] × [0,height]`.
    ///
    /// Nodes are numbered row by row, each row of grid nodes followed by the
    /// row of centroid nodes above it, which keeps the stiffness bandwidth
    /// proportional to `nx`.
    pub fn criss_cross(width: f64, height: f64, nx: usize, ny: usize, level: u32) -> Self {
        let stride = 2 * nx + 1;
        let grid = |i: usize, j: usize| j * stride + i;
        let center = |i: usize, j: usize| j * stride + nx + 1 + i;
        let dx = width / nx as f64;
        let dy = height / ny as f64;

        let n_nodes = (nx + 1) * (ny + 1) + nx * ny;
        let mut nodes = Vec::with_capacity(n_nodes);
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point::new(i as f64 * dx, j as f64 * dy));
            }
            if j < ny {
                for i in 0..nx {
                    nodes.push(Point::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
                }
            }
        }
        debug_assert_eq!(nodes.len(), n_nodes);
        // Pin the far edges exactly.
        for j in 0..=ny {
            nodes[grid(nx, j)].x = width;
        }
        for i in 0..=nx {
            nodes[grid(i, ny)].y = height;
        }

        let mut triangles = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = grid(i, j);
                let b = grid(i + 1, j);
                let c = grid(i + 1, j + 1);
                let d = grid(i, j + 1);
                let m = center(i, j);
                triangles.push([a, b, m]);
                triangles.push([b, c, m]);
                triangles.push([c, d, m]);
                triangles.push([d, a, m]);
            }
        }

        let mut dirichlet = Vec::with_capacity(2 * (nx + 1));
        let mut edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..=nx {
            dirichlet.push((grid(i, 0), Plate::Bottom));
            dirichlet.push((grid(i, ny), Plate::Top));
        }
        for i in 0..nx {
            edges.push(BoundaryEdge {
                nodes: [grid(i, 0), grid(i + 1, 0)],
                side: Side::Bottom,
            });
            edges.push(BoundaryEdge {
                nodes: [grid(i + 1, ny), grid(i, ny)],
                side: Side::Top,
            });
        }
        for j in 0..ny {
            edges.push(BoundaryEdge {
                nodes: [grid(nx, j), grid(nx, j + 1)],
                side: Side::Right,
            });
            edges.push(BoundaryEdge {
                nodes: [grid(0, j + 1), grid(0, j)],
                side: Side::Left,
            });
        }

        Mesh::from_parts(nodes, triangles, dirichlet, edges, level)
            .expect("criss-cross triangles are nondegenerate for positive spacing")
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_geometry(&self, element: usize) -> &ElementGeometry {
        &self.elements[element]
    }

    pub fn element_geometries(&self) -> &[ElementGeometry] {
        &self.elements
    }

    pub fn centroid(&self, element: usize) -> Point {
        let [a, b, c] = self.triangles[element];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|g| g.area).sum()
    }

    /// Per-node flag: true on Dirichlet nodes.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for &(n, _) in &self.dirichlet_nodes {
            mask[n] = true;
        }
        mask
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = &BoundaryEdge> {
        self.dirichlet_edges.iter().chain(self.neumann_edges.iter())
    }
}

/// Grid dimensions `(nx, ny)` of a refinement level.
pub fn grid_dimensions(level: u32) -> (usize, usize) {
    (BASE_NX << level, BASE_NY << level)
}

pub fn generate_mesh(geometry: &Geometry, level: u32) -> Mesh {
    let (nx, ny) = grid_dimensions(level);
    Mesh::criss_cross(geometry.width, geometry.height, nx, ny, level)
}

/// Nodal initial damage: one half inside the centered damaged stripe, one elsewhere.
pub fn initial_damage(mesh: &Mesh, geometry: &Geometry) -> Vec<f64> {
    mesh.nodes
        .iter()
        .map(|p| {
            if geometry.in_centered_stripe(p.y, geometry.damaged_stripe_height) {
                0.5
            } else {
                1.0
            }
        })
        .collect()
}

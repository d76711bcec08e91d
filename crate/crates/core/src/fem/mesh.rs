use crate::error::{Error, Result};

/// Uniform triangulation of the unit square.
///
/// Node `(i, j)` sits at `(i/n, j/n)` with index `i + j (n+1)`. Cell `(i, j)`
/// is split along its lower-left to upper-right diagonal into elements
/// `2 (i + j n)` = (v00, v10, v11) and `2 (i + j n) + 1` = (v00, v11, v01),
/// both counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshLevel {
    n_side: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundaryTags {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl BoundaryTags {
    pub fn any(self) -> bool {
        self.left || self.right || self.bottom || self.top
    }
}

pub fn build_mesh(n_side: usize) -> Result<MeshLevel> {
    if n_side < 2 {
        return Err(Error::Config(format!(
            "mesh needs at least 2 cells per side, got {n_side}"
        )));
    }
    let h = 1.0 / n_side as f64;
    let stride = n_side + 1;
    let mut nodes = Vec::with_capacity(stride * stride);
    for j in 0..=n_side {
        for i in 0..=n_side {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut elements = Vec::with_capacity(2 * n_side * n_side);
    for j in 0..n_side {
        for i in 0..n_side {
            let v00 = i + j * stride;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    Ok(MeshLevel {
        n_side,
        nodes,
        elements,
    })
}

impl MeshLevel {
    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_side as f64
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn boundary_tags(&self, node: usize) -> BoundaryTags {
        let stride = self.n_side + 1;
        let (i, j) = (node % stride, node / stride);
        BoundaryTags {
            left: i == 0,
            right: i == self.n_side,
            bottom: j == 0,
            top: j == self.n_side,
        }
    }

    pub fn vertices(&self, e: usize) -> [[f64; 2]; 3] {
        self.elements[e].map(|v| self.nodes[v])
    }

    /// Signed area; positive for every element of this mesh.
    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        (0..self.n_elements())
            .map(|e| {
                let [a, b, c] = self.vertices(e);
                [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
            })
            .collect()
    }

    /// Element containing `x` and its barycentric coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::Domain(format!("point {x:?} lies outside the unit square")));
        }
        let n = self.n_side;
        let (i, s) = crate::random_field::cell_coordinate(x[0], n);
        let (j, t) = crate::random_field::cell_coordinate(x[1], n);
        let cell = 2 * (i + j * n);
        if s >= t {
            Ok((cell, [1.0 - s, s - t, t]))
        } else {
            Ok((cell + 1, [1.0 - t, s, t - s]))
        }
    }
}

//! Oriented 2D grid graphs with a horizontal/vertical edge split.
//!
//! Vertex ids are row-major: `i = row * width + col`. Horizontal edge `e`
//! joins `(r, c)` and `(r, c + 1)` with `e = r * (width - 1) + c`; vertical
//! edge `e` joins `(r, c)` and `(r + 1, c)` with `e = r * width + c`. Each
//! lattice edge carries one orientation flag; `true` means the canonical
//! direction (left→right, top→down).

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// How edge orientations are chosen when building a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// All edges left→right and top→down.
    Canonical,
    /// All edges right→left and bottom→up.
    Reversed,
    /// One flag per edge, `true` for the canonical direction.
    Explicit { horizontal: Vec<bool>, vertical: Vec<bool> },
    /// Independent fair coin per edge.
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridGraph {
    height: usize,
    width: usize,
    h_forward: Vec<bool>,
    v_forward: Vec<bool>,
}

impl GridGraph {
    pub fn new(height: usize, width: usize, orientation: Orientation) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        let nh = height * (width - 1);
        let nv = (height - 1) * width;
        let (h_forward, v_forward) = match orientation {
            Orientation::Canonical => (vec![true; nh], vec![true; nv]),
            Orientation::Reversed => (vec![false; nh], vec![false; nv]),
            Orientation::Explicit { horizontal, vertical } => {
                if horizontal.len() != nh || vertical.len() != nv {
                    return Err(Error::shape(format!(
                        "orientation flags: expected {nh} horizontal and {nv} vertical, got {} and {}",
                        horizontal.len(),
                        vertical.len()
                    )));
                }
                (horizontal, vertical)
            }
            Orientation::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = (0..nh).map(|_| rng.gen::<bool>()).collect();
                let v = (0..nv).map(|_| rng.gen::<bool>()).collect();
                (h, v)
            }
        };
        Ok(Self {
            height,
            width,
            h_forward,
            v_forward,
        })
    }

    /// Shorthand for a canonically oriented grid.
    pub fn canonical(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, Orientation::Canonical)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vertex_count(&self) -> usize {
        self.height * self.width
    }

    pub fn vertex(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.width, i % self.width)
    }

    /// The same lattice with every edge orientation flipped.
    pub fn reversed(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            h_forward: self.h_forward.iter().map(|f| !f).collect(),
            v_forward: self.v_forward.iter().map(|f| !f).collect(),
        }
    }

    pub fn orientation_flags(&self, direction: Direction) -> &[bool] {
        match direction {
            Direction::Horizontal => &self.h_forward,
            Direction::Vertical => &self.v_forward,
        }
    }

    pub fn edge_count(&self, direction: Direction) -> usize {
        self.orientation_flags(direction).len()
    }

    /// Oriented edges `(tail, head)` of one direction, in edge-index order.
    pub fn edges(&self, direction: Direction) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.orientation_flags(direction)
            .iter()
            .enumerate()
            .map(move |(e, &fwd)| {
                let (a, b) = match direction {
                    Direction::Horizontal => {
                        let (r, c) = (e / (w - 1), e % (w - 1));
                        (r * w + c, r * w + c + 1)
                    }
                    Direction::Vertical => (e, e + w),
                };
                if fwd {
                    (a, b)
                } else {
                    (b, a)
                }
            })
    }

    /// `A X` (or `Aᵀ X`) for the adjacency matrix of one edge direction,
    /// evaluated as a neighbor gather.
    pub fn apply_adjacency(
        &self,
        direction: Direction,
        transpose: bool,
        x: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if x.nrows() != self.vertex_count() {
            return Err(Error::shape(format!(
                "adjacency: grid has {} vertices, matrix has {} rows",
                self.vertex_count(),
                x.nrows()
            )));
        }
        let mut out = Array2::zeros(x.dim());
        self.accumulate_adjacency(direction, transpose, x, out.view_mut());
        Ok(out)
    }

    /// Adds `A X` (or `Aᵀ X`) into `out`. Shapes are the caller's problem.
    pub(crate) fn accumulate_adjacency(
        &self,
        direction: Direction,
        transpose: bool,
        x: ArrayView2<'_, f64>,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        for (tail, head) in self.edges(direction) {
            let (dst, src) = if transpose { (head, tail) } else { (tail, head) };
            let mut row = out.row_mut(dst);
            row += &x.row(src);
        }
    }

    /// The clipped `k × k` window centered at `i`.
    pub fn patch_support(&self, i: usize, k: usize) -> Result<PatchSupport> {
        if k.is_multiple_of(2) {
            return Err(Error::domain(format!("patch side must be odd, got {k}")));
        }
        if i >= self.vertex_count() {
            return Err(Error::domain(format!(
                "vertex {i} outside grid of {} vertices",
                self.vertex_count()
            )));
        }
        let r = (k / 2) as isize;
        let (ci, cj) = self.coords(i);
        let mut cells = Vec::with_capacity(k * k);
        let mut offsets = Vec::with_capacity(k * k);
        for dr in -r..=r {
            for dc in -r..=r {
                let row = ci as isize + dr;
                let col = cj as isize + dc;
                if row < 0 || col < 0 || row >= self.height as isize || col >= self.width as isize {
                    continue;
                }
                cells.push(self.vertex(row as usize, col as usize));
                offsets.push((dr, dc));
            }
        }
        Ok(PatchSupport {
            center: i,
            side: k,
            cells,
            offsets,
        })
    }
}

/// The in-grid part of a patch window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchSupport {
    pub center: usize,
    pub side: usize,
    /// Vertex ids covered by the window, in template cell order.
    pub cells: Vec<usize>,
    /// `(row, col)` displacement of each cell from the center.
    pub offsets: Vec<(isize, isize)>,
}

impl PatchSupport {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major template cell index of the `n`-th support cell.
    pub fn template_index(&self, n: usize) -> usize {
        let r = (self.side / 2) as isize;
        let (dr, dc) = self.offsets[n];
        ((dr + r) as usize) * self.side + (dc + r) as usize
    }

    /// Pairs of (grid vertex, template cell index).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(move |n| (self.cells[n], self.template_index(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn dense(g: &GridGraph, d: Direction) -> Array2<f64> {
        let n = g.vertex_count();
        let mut a = Array2::zeros((n, n));
        for (t, h) in g.edges(d) {
            a[[t, h]] = 1.0;
        }
        a
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn single_vertex_grid() {
        let g = GridGraph::canonical(1, 1).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(Direction::Horizontal), 0);
        assert_eq!(g.edge_count(Direction::Vertical), 0);
        let out = g
            .apply_adjacency(Direction::Horizontal, false, array![[1.0, 2.0]].view())
            .unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn edge_counts() {
        let g = GridGraph::canonical(2, 2).unwrap();
        assert_eq!(g.edge_count(Direction::Horizontal), 2);
        assert_eq!(g.edge_count(Direction::Vertical), 2);

        // enumerate lattice neighbor pairs directly
        let (h, w) = (3usize, 5usize);
        let g = GridGraph::canonical(h, w).unwrap();
        let mut nh = 0;
        let mut nv = 0;
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w {
                    nh += 1;
                }
                if r + 1 < h {
                    nv += 1;
                }
            }
        }
        assert_eq!((nh, nv), (12, 10));
        assert_eq!(g.edge_count(Direction::Horizontal), nh);
        assert_eq!(g.edge_count(Direction::Vertical), nv);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(GridGraph::canonical(0, 3).is_err());
        assert!(GridGraph::canonical(3, 0).is_err());
        let bad = Orientation::Explicit {
            horizontal: vec![true],
            vertical: vec![],
        };
        assert!(GridGraph::new(2, 2, bad).is_err());
    }

    #[test]
    fn single_edge_gather() {
        let g = GridGraph::canonical(1, 2).unwrap();
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let out = g.apply_adjacency(Direction::Horizontal, false, x.view()).unwrap();
        assert_eq!(out, array![[0.0, 1.0], [0.0, 0.0]]);
        let out = g.apply_adjacency(Direction::Horizontal, true, x.view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn gather_matches_dense_product() {
        for (seed, orient) in [
            (1, Orientation::Canonical),
            (2, Orientation::Random { seed: 17 }),
            (3, Orientation::Reversed),
        ] {
            let g = GridGraph::new(4, 4, orient).unwrap();
            let x = random_matrix(16, 3, seed);
            for d in [Direction::Horizontal, Direction::Vertical] {
                let a = dense(&g, d);
                let fast = g.apply_adjacency(d, false, x.view()).unwrap();
                let fast_t = g.apply_adjacency(d, true, x.view()).unwrap();
                let slow = a.dot(&x);
                let slow_t = a.t().dot(&x);
                for (u, v) in fast.iter().zip(slow.iter()) {
                    assert!((u - v).abs() < 1e-14);
                }
                for (u, v) in fast_t.iter().zip(slow_t.iter()) {
                    assert!((u - v).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = GridGraph::canonical(2, 3).unwrap();
        assert!(g
            .apply_adjacency(Direction::Vertical, false, Array2::zeros((5, 2)).view())
            .is_err());
    }

    #[test]
    fn edge_partition_covers_lattice_once() {
        let g = GridGraph::new(5, 4, Orientation::Random { seed: 3 }).unwrap();
        let sum = dense(&g, Direction::Horizontal) + dense(&g, Direction::Vertical);
        let n = g.vertex_count();
        let mut undirected = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                let (ra, ca) = g.coords(a);
                let (rb, cb) = g.coords(b);
                let lattice = ra.abs_diff(rb) + ca.abs_diff(cb) == 1;
                let nz = (sum[[a, b]] != 0.0) as usize + (sum[[b, a]] != 0.0) as usize;
                assert_eq!(nz, lattice as usize, "pair {a},{b}");
                undirected += lattice as usize;
            }
        }
        assert_eq!(sum.sum() as usize, undirected);
    }

    #[test]
    fn supports() {
        let g = GridGraph::canonical(10, 10).unwrap();
        let s = g.patch_support(g.vertex(4, 4), 1).unwrap();
        assert_eq!(s.cells, vec![g.vertex(4, 4)]);
        assert_eq!(g.patch_support(g.vertex(4, 4), 3).unwrap().len(), 9);

        let corner = g.patch_support(0, 3).unwrap();
        let mut expect = Vec::new();
        for r in -1i32..=1 {
            for c in -1i32..=1 {
                if r >= 0 && c >= 0 {
                    expect.push((r * 10 + c) as usize);
                }
            }
        }
        assert_eq!(corner.cells, expect);
        assert_eq!(corner.len(), 4);
        // template cells (1,1),(1,2),(2,1),(2,2) of a 3x3 template
        let idx: Vec<usize> = corner.iter().map(|(_, t)| t).collect();
        assert_eq!(idx, vec![4, 5, 7, 8]);

        assert!(g.patch_support(0, 2).is_err());
        assert!(g.patch_support(100, 3).is_err());
    }

    proptest! {
        #[test]
        fn adjacency_adjoint(h in 1usize..6, w in 1usize..6, seed in 0u64..500, m in 1usize..4) {
            let g = GridGraph::new(h, w, Orientation::Random { seed }).unwrap();
            let x = random_matrix(h * w, m, seed + 1);
            let y = random_matrix(h * w, m, seed + 2);
            for d in [Direction::Horizontal, Direction::Vertical] {
                let ax = g.apply_adjacency(d, false, x.view()).unwrap();
                let aty = g.apply_adjacency(d, true, y.view()).unwrap();
                let lhs = (&ax * &y).sum();
                let rhs = (&x * &aty).sum();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn reversal_swaps_transpose(h in 1usize..6, w in 1usize..6, seed in 0u64..500) {
            let g = GridGraph::new(h, w, Orientation::Random { seed }).unwrap();
            let r = g.reversed();
            let x = random_matrix(h * w, 2, seed);
            for d in [Direction::Horizontal, Direction::Vertical] {
                for t in [false, true] {
                    let a = g.apply_adjacency(d, t, x.view()).unwrap();
                    let b = r.apply_adjacency(d, !t, x.view()).unwrap();
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}

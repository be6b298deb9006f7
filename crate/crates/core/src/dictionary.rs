//! Labeled patch templates, patch similarity functions and the weighted
//! template adjacency matrices `Ω^h`, `Ω^v`.
//!
//! `Ω^h[d][d']` is the similarity of template `d` centered at `i` with template
//! `d'` centered one column to the right of `i`; `Ω^v` uses one row down.
//! Templates are never clipped here, so both matrices are translation
//! invariant.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::Direction;

/// A `k × k` array of class ids, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatchTemplate {
    side: usize,
    cells: Vec<usize>,
}

impl PatchTemplate {
    pub fn new(side: usize, cells: Vec<usize>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::domain(format!("template side must be odd, got {side}")));
        }
        if cells.len() != side * side {
            return Err(Error::shape(format!(
                "template of side {side} needs {} cells, got {}",
                side * side,
                cells.len()
            )));
        }
        Ok(Self { side, cells })
    }

    pub fn from_rows(rows: &[&[usize]]) -> Result<Self> {
        let side = rows.len();
        if rows.iter().any(|r| r.len() != side) {
            return Err(Error::shape("template rows must form a square"));
        }
        Self::new(side, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    /// Template with every cell set to `class`.
    pub fn constant(side: usize, class: usize) -> Result<Self> {
        Self::new(side, vec![class; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of cells `p = k²`.
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn at(&self, row: usize, col: usize) -> usize {
        self.cells[row * self.side + col]
    }

    pub fn center(&self) -> usize {
        let r = self.side / 2;
        self.at(r, r)
    }

    /// Value at displacement `(dr, dc)` from the center, if inside the window.
    pub fn at_offset(&self, dr: isize, dc: isize) -> Option<usize> {
        let r = (self.side / 2) as isize;
        if dr.abs() > r || dc.abs() > r {
            return None;
        }
        Some(self.at((dr + r) as usize, (dc + r) as usize))
    }

    /// The template with every class id `x` replaced by `map(x)`.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        Self {
            side: self.side,
            cells: self.cells.iter().map(|&x| map(x)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDictionary {
    templates: Vec<PatchTemplate>,
    class_count: usize,
    class_names: Option<Vec<String>>,
}

impl PatchDictionary {
    pub fn new(templates: Vec<PatchTemplate>, class_count: usize) -> Result<Self> {
        let Some(first) = templates.first() else {
            return Err(Error::domain("patch dictionary must contain a template"));
        };
        if class_count == 0 {
            return Err(Error::domain("class count must be positive"));
        }
        let side = first.side();
        for (d, t) in templates.iter().enumerate() {
            if t.side() != side {
                return Err(Error::shape(format!(
                    "template {d} has side {}, dictionary side is {side}",
                    t.side()
                )));
            }
            if let Some(&bad) = t.cells().iter().find(|&&x| x >= class_count) {
                return Err(Error::domain(format!(
                    "template {d} uses class {bad}, but only {class_count} classes exist"
                )));
            }
        }
        Ok(Self {
            templates,
            class_count,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::shape(format!(
                "{} class names for {} classes",
                names.len(),
                self.class_count
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    /// One constant template per class.
    pub fn constant_per_class(side: usize, class_count: usize) -> Result<Self> {
        let templates = (0..class_count)
            .map(|c| PatchTemplate::constant(side, c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(templates, class_count)
    }

    pub fn templates(&self) -> &[PatchTemplate] {
        &self.templates
    }

    pub fn template(&self, d: usize) -> &PatchTemplate {
        &self.templates[d]
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn side(&self) -> usize {
        self.templates[0].side()
    }

    pub fn patch_size(&self) -> usize {
        self.templates[0].size()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }
}

fn check_sides(d: &PatchTemplate, e: &PatchTemplate) -> Result<()> {
    if d.side() != e.side() {
        return Err(Error::shape(format!(
            "templates have sides {} and {}",
            d.side(),
            e.side()
        )));
    }
    Ok(())
}

/// `(overlap cells, agreeing cells)` for `d` at the origin and `e` at `shift`.
fn overlap_counts(d: &PatchTemplate, e: &PatchTemplate, shift: (isize, isize)) -> (usize, usize) {
    let r = (d.side() / 2) as isize;
    let (sr, sc) = shift;
    let mut overlap = 0;
    let mut agree = 0;
    for a in (-r).max(sr - r)..=r.min(sr + r) {
        for b in (-r).max(sc - r)..=r.min(sc + r) {
            overlap += 1;
            if d.at_offset(a, b) == e.at_offset(a - sr, b - sc) {
                agree += 1;
            }
        }
    }
    (overlap, agree)
}

/// Fraction of the `p` template cells on which `d` (at the origin) and `e`
/// (at `shift`) overlap and agree.
pub fn overlap_similarity(d: &PatchTemplate, e: &PatchTemplate, shift: (isize, isize)) -> Result<f64> {
    check_sides(d, e)?;
    let (_, agree) = overlap_counts(d, e, shift);
    Ok(agree as f64 / d.size() as f64)
}

/// 1 when `d` and `e` coincide on the whole overlap (including an empty one).
pub fn binary_similarity(d: &PatchTemplate, e: &PatchTemplate, shift: (isize, isize)) -> Result<f64> {
    check_sides(d, e)?;
    let (overlap, agree) = overlap_counts(d, e, shift);
    Ok(if overlap == agree { 1.0 } else { 0.0 })
}

/// Displacement from a patch center to its successor across a canonical edge.
pub fn canonical_shift(direction: Direction) -> (isize, isize) {
    match direction {
        Direction::Horizontal => (0, 1),
        Direction::Vertical => (1, 0),
    }
}

/// The pair `(Ω^h, Ω^v)` of nonnegative `|D| × |D|` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchAdjacency {
    pub omega_h: Array2<f64>,
    pub omega_v: Array2<f64>,
}

impl PatchAdjacency {
    pub fn new(omega_h: Array2<f64>, omega_v: Array2<f64>) -> Result<Self> {
        let m = omega_h.nrows();
        for (name, om) in [("horizontal", &omega_h), ("vertical", &omega_v)] {
            if om.dim() != (m, m) {
                return Err(Error::shape(format!(
                    "{name} omega is {:?}, expected {m}x{m}",
                    om.dim()
                )));
            }
            if let Some(bad) = om.iter().find(|&&x| !x.is_finite() || x < 0.0) {
                return Err(Error::domain(format!("{name} omega has invalid weight {bad}")));
            }
        }
        if m == 0 {
            return Err(Error::shape("omega matrices must be nonempty"));
        }
        Ok(Self { omega_h, omega_v })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            omega_h: Array2::zeros((m, m)),
            omega_v: Array2::zeros((m, m)),
        }
    }

    pub fn len(&self) -> usize {
        self.omega_h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn omega(&self, direction: Direction) -> &Array2<f64> {
        match direction {
            Direction::Horizontal => &self.omega_h,
            Direction::Vertical => &self.omega_v,
        }
    }

    pub fn transposed(&self) -> Self {
        Self {
            omega_h: self.omega_h.t().to_owned(),
            omega_v: self.omega_v.t().to_owned(),
        }
    }
}

/// Source of the template similarity weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Similarity {
    Overlap,
    Binary,
    /// Externally supplied matrices, used verbatim.
    Custom(PatchAdjacency),
}

impl Similarity {
    pub fn name(&self) -> &'static str {
        match self {
            Similarity::Overlap => "overlap",
            Similarity::Binary => "binary",
            Similarity::Custom(_) => "custom",
        }
    }
}

pub fn build_adjacency(dict: &PatchDictionary, similarity: &Similarity) -> Result<PatchAdjacency> {
    build_adjacency_with_shifts(
        dict,
        similarity,
        canonical_shift(Direction::Horizontal),
        canonical_shift(Direction::Vertical),
    )
}

/// Like [`build_adjacency`], but with explicit center displacements for the
/// two directions. `(0, -1)` and `(-1, 0)` give the reversed orientation.
pub fn build_adjacency_with_shifts(
    dict: &PatchDictionary,
    similarity: &Similarity,
    shift_h: (isize, isize),
    shift_v: (isize, isize),
) -> Result<PatchAdjacency> {
    let m = dict.len();
    let f: fn(&PatchTemplate, &PatchTemplate, (isize, isize)) -> Result<f64> = match similarity {
        Similarity::Overlap => overlap_similarity,
        Similarity::Binary => binary_similarity,
        Similarity::Custom(adj) => {
            if adj.len() != m {
                return Err(Error::shape(format!(
                    "custom omega is {}x{}, dictionary has {m} templates",
                    adj.len(),
                    adj.len()
                )));
            }
            return Ok(adj.clone());
        }
    };
    let mut omega_h = Array2::zeros((m, m));
    let mut omega_v = Array2::zeros((m, m));
    for (a, d) in dict.templates().iter().enumerate() {
        for (b, e) in dict.templates().iter().enumerate() {
            omega_h[[a, b]] = f(d, e, shift_h)?;
            omega_v[[a, b]] = f(d, e, shift_v)?;
        }
    }
    PatchAdjacency::new(omega_h, omega_v)
}

/// One entry of the dictionary graph: `d → d'` across a `direction` edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DictEdge {
    pub direction: Direction,
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Edges of the patch dictionary graph (positive weights only), horizontal
/// first, each block in row-major order.
pub fn dictionary_graph_edges(adj: &PatchAdjacency) -> Vec<DictEdge> {
    let mut edges = Vec::new();
    for direction in [Direction::Horizontal, Direction::Vertical] {
        for ((from, to), &weight) in adj.omega(direction).indexed_iter() {
            if weight > 0.0 {
                edges.push(DictEdge {
                    direction,
                    from,
                    to,
                    weight,
                });
            }
        }
    }
    edges
}

/// Per-template `p × c` matrices: row `q` is `class_weights[x] · e_x` for the
/// class `x` of template cell `q` (row-major).
pub fn template_assignment_rows(dict: &PatchDictionary, class_weights: &[f64]) -> Result<Vec<Array2<f64>>> {
    let c = dict.class_count();
    if class_weights.len() != c {
        return Err(Error::shape(format!(
            "{} class weights for {c} classes",
            class_weights.len()
        )));
    }
    if let Some(bad) = class_weights.iter().find(|&&w| !w.is_finite() || w <= 0.0) {
        return Err(Error::domain(format!("class weights must be positive, got {bad}")));
    }
    Ok(dict
        .templates()
        .iter()
        .map(|t| {
            let mut a = Array2::zeros((t.size(), c));
            for (q, &x) in t.cells().iter().enumerate() {
                a[[q, x]] = class_weights[x];
            }
            a
        })
        .collect())
}

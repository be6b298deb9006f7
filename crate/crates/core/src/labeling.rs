//! From labels to patch assignments and back.
//!
//! Initial scores treat out-of-grid template cells according to [`Boundary`].
//! The uncertainty fields always clip: cells of a window that fall outside
//! the grid are skipped.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{template_assignment_rows, PatchDictionary};
use crate::error::{Error, Result};
use crate::grid::GridGraph;
use crate::simplex::AssignmentField;

/// A class id per grid vertex, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    height: usize,
    width: usize,
    labels: Vec<usize>,
}

impl LabelField {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain(format!(
                "label field must be nonempty, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} label field needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, class: usize) -> Result<Self> {
        Self::new(height, width, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: usize) {
        self.labels[row * self.width + col] = class;
    }

    pub fn max_class(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn check_classes(&self, class_count: usize) -> Result<()> {
        match self.labels.iter().position(|&x| x >= class_count) {
            Some(i) => Err(Error::domain(format!(
                "label {} at vertex {i} is not below the class count {class_count}",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    /// Number of vertices whose labels agree.
    pub fn agreement(&self, other: &LabelField) -> usize {
        self.labels.iter().zip(&other.labels).filter(|(a, b)| a == b).count()
    }

    pub fn count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&x| x == class).count()
    }
}

/// `W^λ_i = (1−λ) e_{L(i)} + λ·(1/c)·1`.
pub fn smooth_labels(labels: &LabelField, class_count: usize, lambda: f64) -> Result<AssignmentField> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if class_count == 0 {
        return Err(Error::domain("class count must be positive"));
    }
    labels.check_classes(class_count)?;
    let n = labels.labels.len();
    let floor = lambda / class_count as f64;
    let mut w = Array2::from_elem((n, class_count), floor);
    for (i, &x) in labels.labels.iter().enumerate() {
        w[[i, x]] += 1.0 - lambda;
    }
    AssignmentField::new_closed(w)
}

/// How template cells that fall outside the grid enter the initial scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Out-of-grid cells are skipped.
    Clip,
    /// Out-of-grid cells read the nearest in-grid vertex.
    #[default]
    Replicate,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Clip => "clip",
            Boundary::Replicate => "replicate",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(Boundary::Clip),
            "replicate" => Ok(Boundary::Replicate),
            other => Err(Error::domain(format!("unknown boundary mode '{other}'"))),
        }
    }
}

/// (vertex, template cell) pairs read by the window centered at `i`.
fn window_cells(graph: &GridGraph, i: usize, k: usize, boundary: Boundary) -> Result<Vec<(usize, usize)>> {
    match boundary {
        Boundary::Clip => Ok(graph.patch_support(i, k)?.iter().collect()),
        Boundary::Replicate => {
            let (r, c) = graph.coords(i);
            let half = (k / 2) as isize;
            let clamp = |x: isize, len: usize| x.clamp(0, len as isize - 1) as usize;
            Ok((0..k * k)
                .map(|q| {
                    let row = clamp(r as isize + (q / k) as isize - half, graph.height());
                    let col = clamp(c as isize + (q % k) as isize - half, graph.width());
                    (graph.vertex(row, col), q)
                })
                .collect())
        }
    }
}

/// Agreement scores `⟨W^λ_[i], d_[i]⟩` for every vertex and template.
pub fn patch_scores(
    smoothed: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
    class_weights: &[f64],
    boundary: Boundary,
) -> Result<Array2<f64>> {
    let n = graph.vertex_count();
    if smoothed.nrows() != n || smoothed.ncols() != dict.class_count() {
        return Err(Error::shape(format!(
            "smoothed labels are {}x{}, expected {n}x{}",
            smoothed.nrows(),
            smoothed.ncols(),
            dict.class_count()
        )));
    }
    let rows = template_assignment_rows(dict, class_weights)?;
    let w = smoothed.view();
    let mut scores = Array2::zeros((n, dict.len()));
    for i in 0..n {
        let cells = window_cells(graph, i, dict.side(), boundary)?;
        for (d, t) in rows.iter().enumerate() {
            scores[[i, d]] = cells.iter().map(|&(cell, q)| w.row(cell).dot(&t.row(q))).sum();
        }
    }
    Ok(scores)
}

/// Row-wise softmax with the usual max shift.
pub fn softmax_rows(scores: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = scores.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Initial patch assignment: softmax over templates of [`patch_scores`].
pub fn initialize(
    smoothed: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
    class_weights: &[f64],
    boundary: Boundary,
) -> Result<AssignmentField> {
    let scores = patch_scores(smoothed, dict, graph, class_weights, boundary)?;
    let p = softmax_rows(scores.view());
    if p.iter().any(|&x| x <= 0.0) {
        return Err(Error::domain(
            "initial assignment underflowed to zero; scores differ by more than ~700",
        ));
    }
    AssignmentField::new(p)
}

fn check_field(p: &AssignmentField, dict: &PatchDictionary, graph: &GridGraph) -> Result<()> {
    if p.nrows() != graph.vertex_count() || p.ncols() != dict.len() {
        return Err(Error::shape(format!(
            "assignment field is {}x{}, expected {}x{}",
            p.nrows(),
            p.ncols(),
            graph.vertex_count(),
            dict.len()
        )));
    }
    Ok(())
}

/// Center class of the most likely template at every vertex. Ties go to the
/// lowest template index.
pub fn extract_labeling(p: &AssignmentField, dict: &PatchDictionary, graph: &GridGraph) -> Result<LabelField> {
    check_field(p, dict, graph)?;
    let labels = p
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (d, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = d;
                }
            }
            dict.template(best).center()
        })
        .collect();
    LabelField::new(graph.height(), graph.width(), labels)
}

/// Center class of a template drawn from `P_i` independently at each vertex.
pub fn sample_labeling(
    p: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
    seed: u64,
) -> Result<LabelField> {
    check_field(p, dict, graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = p
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (d, &x) in row.iter().enumerate() {
                acc += x;
                if u < acc {
                    pick = d;
                    break;
                }
            }
            dict.template(pick).center()
        })
        .collect();
    LabelField::new(graph.height(), graph.width(), labels)
}

/// Mean patch assignment of a binary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyField {
    pub height: usize,
    pub width: usize,
    /// `(1/|D|) Σ_{j : i∈[j]} Σ_d P_{j,d} d_[j](i)`.
    pub raw: Vec<f64>,
    /// The same sum divided by the number of patch windows covering `i`;
    /// lies in `[0, 1]`.
    pub normalized: Vec<f64>,
}

/// Per-class version of [`UncertaintyField`]; rows of `normalized` sum to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassUncertainty {
    pub height: usize,
    pub width: usize,
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
}

/// Accumulates `Σ_j Σ_d P_{j,d} [d_[j](i) = x]` per vertex and class, plus the
/// number of windows covering each vertex.
fn accumulate_mass(
    p: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
) -> Result<(Array2<f64>, Vec<usize>)> {
    check_field(p, dict, graph)?;
    let n = graph.vertex_count();
    let mut mass = Array2::zeros((n, dict.class_count()));
    let mut coverage = vec![0usize; n];
    for j in 0..n {
        let support = graph.patch_support(j, dict.side())?;
        let pj = p.row(j);
        for (cell, q) in support.iter() {
            coverage[cell] += 1;
            for (d, t) in dict.templates().iter().enumerate() {
                mass[[cell, t.cells()[q]]] += pj[d];
            }
        }
    }
    Ok((mass, coverage))
}

pub fn mean_patch_assignment(
    p: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
) -> Result<UncertaintyField> {
    if dict.class_count() != 2 {
        return Err(Error::domain(format!(
            "scalar mean patch assignment needs 2 classes, dictionary has {}",
            dict.class_count()
        )));
    }
    let (mass, coverage) = accumulate_mass(p, dict, graph)?;
    let m = dict.len() as f64;
    let raw = mass.column(1).iter().map(|x| x / m).collect();
    let normalized = mass
        .column(1)
        .iter()
        .zip(&coverage)
        .map(|(x, &c)| (x / c as f64).clamp(0.0, 1.0))
        .collect();
    Ok(UncertaintyField {
        height: graph.height(),
        width: graph.width(),
        raw,
        normalized,
    })
}

pub fn mean_patch_assignment_multiclass(
    p: &AssignmentField,
    dict: &PatchDictionary,
    graph: &GridGraph,
) -> Result<MulticlassUncertainty> {
    let (mass, coverage) = accumulate_mass(p, dict, graph)?;
    let raw = &mass / dict.len() as f64;
    let mut normalized = mass;
    for (mut row, &c) in normalized.rows_mut().into_iter().zip(&coverage) {
        row /= c as f64;
    }
    Ok(MulticlassUncertainty {
        height: graph.height(),
        width: graph.width(),
        raw,
        normalized,
    })
}

//! Brute-force reference computations for the patch flow objective and its
//! gradient. They share nothing with the fast path in [`crate::flow`]
//! beyond the problem definition, and are meant for small instances.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::flow::{objective, FlowProblem};
use crate::grid::{Direction, GridGraph};

/// Largest `n · |D|` accepted by [`kronecker_gradient`].
pub const KRONECKER_LIMIT: usize = 4096;

fn check(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Result<()> {
    let expect = (problem.graph().vertex_count(), problem.template_count());
    if p.dim() != expect {
        return Err(Error::shape(format!(
            "assignment field is {:?}, problem expects {expect:?}",
            p.dim()
        )));
    }
    Ok(())
}

/// `Σ_{ij∈E^h} ⟨P_i, Ω^h P_j⟩ + Σ_{ij∈E^v} ⟨P_i, Ω^v P_j⟩`, one edge at a time.
pub fn objective_edge_sum(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Result<f64> {
    check(problem, p)?;
    let m = problem.template_count();
    let mut total = 0.0;
    for direction in [Direction::Horizontal, Direction::Vertical] {
        let omega = problem.adjacency().omega(direction);
        for (i, j) in problem.graph().edges(direction) {
            for a in 0..m {
                for b in 0..m {
                    total += p[[i, a]] * omega[[a, b]] * p[[j, b]];
                }
            }
        }
    }
    Ok(total)
}

/// Dense `n × n` adjacency matrix of one edge direction.
pub fn dense_adjacency(graph: &GridGraph, direction: Direction) -> Array2<f64> {
    let n = graph.vertex_count();
    let mut a = Array2::zeros((n, n));
    for (i, j) in graph.edges(direction) {
        a[[i, j]] = 1.0;
    }
    a
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            if a[[i, j]] == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

/// `∂J` from the dense vectorized form
/// `(A^h⊗Ω^h + (A^h⊗Ω^h)ᵀ + A^v⊗Ω^v + (A^v⊗Ω^v)ᵀ) vec_r(P)`.
pub fn kronecker_gradient(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check(problem, p)?;
    let (n, m) = p.dim();
    let size = n * m;
    if size > KRONECKER_LIMIT {
        return Err(Error::OracleTooLarge {
            size,
            limit: KRONECKER_LIMIT,
        });
    }
    let mut k = Array2::<f64>::zeros((size, size));
    for direction in [Direction::Horizontal, Direction::Vertical] {
        let block = kron(
            &dense_adjacency(problem.graph(), direction),
            problem.adjacency().omega(direction),
        );
        k += &block;
        k += &block.t();
    }
    let pv: Array1<f64> = p.iter().copied().collect();
    let gv = k.dot(&pv);
    Ok(Array2::from_shape_vec((n, m), gv.to_vec()).expect("shape matches"))
}

/// Central differences of the objective in ambient coordinates.
pub fn finite_difference_gradient(problem: &FlowProblem, p: ArrayView2<'_, f64>, step: f64) -> Result<Array2<f64>> {
    check(problem, p)?;
    let mut work = p.to_owned();
    let mut out = Array2::zeros(p.dim());
    for idx in 0..p.len() {
        let (i, a) = (idx / p.ncols(), idx % p.ncols());
        let orig = work[[i, a]];
        work[[i, a]] = orig + step;
        let up = objective(problem, work.view())?;
        work[[i, a]] = orig - step;
        let down = objective(problem, work.view())?;
        work[[i, a]] = orig;
        out[[i, a]] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

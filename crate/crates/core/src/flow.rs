//! Patch assignment flow: the patch-consistency objective
//!
//! ```text
//! J(P) = ⟨P, A^h P (Ω^h)ᵀ + A^v P (Ω^v)ᵀ⟩
//! ```
//!
//! its Euclidean and Riemannian gradients, and the geometric Euler
//! integrator `P_{k+1,i} = lift(P_{k,i}, ∂J(P_k)_i, h)`.
//!
//! The lift is invariant under adding a constant to its direction, so the
//! ambient gradient can be fed to it directly; its first-order expansion is
//! `P_i + h R_{P_i}[∂J(P)_i]`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::dictionary::PatchAdjacency;
use crate::error::{Error, Result};
use crate::grid::{Direction, GridGraph};
use crate::simplex::{entropy_stats_view, field_replicator_unchecked, lift_row, AssignmentField};

/// Graph, template adjacency and initial point of one flow.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    graph: GridGraph,
    adjacency: PatchAdjacency,
    initial: AssignmentField,
}

impl FlowProblem {
    pub fn new(graph: GridGraph, adjacency: PatchAdjacency, initial: AssignmentField) -> Result<Self> {
        if initial.nrows() != graph.vertex_count() {
            return Err(Error::shape(format!(
                "initial field has {} rows, grid has {} vertices",
                initial.nrows(),
                graph.vertex_count()
            )));
        }
        if initial.ncols() != adjacency.len() {
            return Err(Error::shape(format!(
                "initial field has {} columns, dictionary has {} templates",
                initial.ncols(),
                adjacency.len()
            )));
        }
        Ok(Self {
            graph,
            adjacency,
            initial,
        })
    }

    pub fn graph(&self) -> &GridGraph {
        &self.graph
    }

    pub fn adjacency(&self) -> &PatchAdjacency {
        &self.adjacency
    }

    pub fn initial(&self) -> &AssignmentField {
        &self.initial
    }

    pub fn template_count(&self) -> usize {
        self.adjacency.len()
    }

    /// All edges reversed and both `Ω` transposed; describes the same flow.
    pub fn reversed(&self) -> Self {
        Self {
            graph: self.graph.reversed(),
            adjacency: self.adjacency.transposed(),
            initial: self.initial.clone(),
        }
    }

    fn check(&self, p: ArrayView2<'_, f64>) -> Result<()> {
        let expect = (self.graph.vertex_count(), self.adjacency.len());
        if p.dim() != expect {
            return Err(Error::shape(format!(
                "assignment field is {:?}, problem expects {:?}",
                p.dim(),
                expect
            )));
        }
        Ok(())
    }
}

/// `P M` or `P Mᵀ`, summed over the inner index in ascending order either way.
fn right_multiply(p: ArrayView2<'_, f64>, m: &Array2<f64>, transpose: bool) -> Array2<f64> {
    let k = m.nrows();
    let mut out = Array2::zeros(p.dim());
    Zip::from(out.rows_mut()).and(p.rows()).for_each(|mut o, pr| {
        for b in 0..k {
            let mut acc = 0.0;
            for a in 0..k {
                let mab = if transpose { m[[b, a]] } else { m[[a, b]] };
                acc += pr[a] * mab;
            }
            o[b] = acc;
        }
    });
    out
}

/// `A P Ωᵀ` for one direction.
fn forward_term(graph: &GridGraph, direction: Direction, omega: &Array2<f64>, p: ArrayView2<'_, f64>) -> Array2<f64> {
    let q = right_multiply(p, omega, true);
    let mut out = Array2::zeros(p.dim());
    graph.accumulate_adjacency(direction, false, q.view(), out.view_mut());
    out
}

/// `Aᵀ P Ω` for one direction.
fn backward_term(graph: &GridGraph, direction: Direction, omega: &Array2<f64>, p: ArrayView2<'_, f64>) -> Array2<f64> {
    let q = right_multiply(p, omega, false);
    let mut out = Array2::zeros(p.dim());
    graph.accumulate_adjacency(direction, true, q.view(), out.view_mut());
    out
}

pub fn objective(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Result<f64> {
    problem.check(p)?;
    Ok(objective_unchecked(problem, p))
}

fn objective_unchecked(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> f64 {
    let g = &problem.graph;
    let adj = &problem.adjacency;
    let h = forward_term(g, Direction::Horizontal, &adj.omega_h, p);
    let v = forward_term(g, Direction::Vertical, &adj.omega_v, p);
    Zip::from(&p)
        .and(&h)
        .and(&v)
        .fold(0.0, |acc, &x, &a, &b| acc + x * (a + b))
}

/// `∂J(P) = A^h P (Ω^h)ᵀ + (A^h)ᵀ P Ω^h + A^v P (Ω^v)ᵀ + (A^v)ᵀ P Ω^v`.
pub fn euclidean_gradient(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    problem.check(p)?;
    Ok(gradient_unchecked(problem, p))
}

fn gradient_unchecked(problem: &FlowProblem, p: ArrayView2<'_, f64>) -> Array2<f64> {
    let g = &problem.graph;
    let adj = &problem.adjacency;
    // Reversing every edge while transposing Ω swaps the two terms of each
    // pair, so pairing them this way keeps the sum bitwise identical.
    let pair = |direction: Direction, omega: &Array2<f64>| {
        forward_term(g, direction, omega, p) + backward_term(g, direction, omega, p)
    };
    pair(Direction::Horizontal, &adj.omega_h) + pair(Direction::Vertical, &adj.omega_v)
}

/// `R_P[∂J(P)]`; every row sums to zero.
pub fn riemannian_gradient(problem: &FlowProblem, p: &AssignmentField) -> Result<Array2<f64>> {
    let grad = euclidean_gradient(problem, p.view())?;
    Ok(field_replicator_unchecked(p.view(), grad.view()))
}

/// Integration settings for the geometric Euler scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop once the mean of the row maxima reaches this value.
    pub convergence_tol: f64,
    /// Stop once no entry moves by more than this in one step.
    pub stall_tol: f64,
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            max_steps: 200_000,
            convergence_tol: 0.999,
            stall_tol: 1e-10,
            record_every: 10,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::domain(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        for (name, v) in [("convergence_tol", self.convergence_tol), ("stall_tol", self.stall_tol)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::domain("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Mean row maximum reached `convergence_tol`.
    Integral,
    /// Largest per-step change fell below `stall_tol`.
    Stalled,
    MaxSteps,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Integral => "integral",
            StopReason::Stalled => "stalled",
            StopReason::MaxSteps => "max_steps",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    /// `J(P)` for patch flows; the user trace (or NaN) for generic flows.
    pub objective: f64,
    pub mean_entropy: f64,
    pub mean_max_entry: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub final_state: AssignmentField,
    pub steps_taken: usize,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// `(mean entropy, mean row maximum)` of the final state.
    pub convergence_stats: (f64, f64),
}

impl FlowResult {
    /// `(time, objective)` pairs.
    pub fn objective_trace(&self) -> Vec<(f64, f64)> {
        self.trace.iter().map(|r| (r.time, r.objective)).collect()
    }

    pub fn final_time(&self, config: &FlowConfig) -> f64 {
        self.steps_taken as f64 * config.step_size
    }
}

/// Integrates the patch assignment flow from the problem's initial point.
pub fn integrate(problem: &FlowProblem, config: &FlowConfig) -> Result<FlowResult> {
    integrate_observed(problem, config, |_, _| {})
}

/// Like [`integrate`], calling `observer(k, P_k)` for every iterate, starting
/// with `k = 0`.
pub fn integrate_observed(
    problem: &FlowProblem,
    config: &FlowConfig,
    observer: impl FnMut(usize, ArrayView2<'_, f64>),
) -> Result<FlowResult> {
    run_engine(
        problem.initial.clone(),
        config,
        |p| Ok(gradient_unchecked(problem, p)),
        |p| objective_unchecked(problem, p),
        observer,
    )
}

/// Scalar recorded per trace row by [`generic_assignment_flow`].
pub type TraceFn<'a> = dyn FnMut(ArrayView2<'_, f64>) -> f64 + 'a;

/// Geometric Euler integration of `Ẇ = R_W[F(W)]` for an arbitrary fitness.
///
/// `trace` supplies the scalar recorded alongside the entropy statistics;
/// without it the objective column is NaN.
pub fn generic_assignment_flow<F>(
    mut fitness: F,
    initial: &AssignmentField,
    config: &FlowConfig,
    trace: Option<&mut TraceFn<'_>>,
) -> Result<FlowResult>
where
    F: FnMut(ArrayView2<'_, f64>) -> Array2<f64>,
{
    let dim = initial.view().dim();
    let checked = |p: ArrayView2<'_, f64>| {
        let f = fitness(p);
        if f.dim() != dim {
            return Err(Error::shape(format!(
                "fitness returned {:?}, state is {dim:?}",
                f.dim()
            )));
        }
        Ok(f)
    };
    match trace {
        Some(t) => run_engine(initial.clone(), config, checked, |p| t(p), |_, _| {}),
        None => run_engine(initial.clone(), config, checked, |_| f64::NAN, |_, _| {}),
    }
}

fn run_engine<G, T, O>(
    initial: AssignmentField,
    config: &FlowConfig,
    mut fitness: G,
    mut scalar: T,
    mut observer: O,
) -> Result<FlowResult>
where
    G: FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
    T: FnMut(ArrayView2<'_, f64>) -> f64,
    O: FnMut(usize, ArrayView2<'_, f64>),
{
    config.validate()?;
    if !initial.is_interior() {
        return Err(Error::domain("flow must start in the interior of the simplex"));
    }
    let h = config.step_size;
    let mut state = initial.into_array().as_standard_layout().into_owned();
    let mut previous = state.clone();

    let record = |step: usize, state: ArrayView2<'_, f64>, scalar: &mut T| {
        let (mean_entropy, mean_max_entry) = entropy_stats_view(state);
        TraceRecord {
            step,
            time: step as f64 * h,
            objective: scalar(state),
            mean_entropy,
            mean_max_entry,
        }
    };

    observer(0, state.view());
    let mut trace = vec![record(0, state.view(), &mut scalar)];
    let mut stop = StopReason::MaxSteps;
    let mut steps = 0;

    if trace[0].mean_max_entry >= config.convergence_tol {
        stop = StopReason::Integral;
    } else {
        while steps < config.max_steps {
            let grad = fitness(state.view())?;
            if grad.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step: steps });
            }
            previous.assign(&state);
            let grad = grad.as_standard_layout();
            for (mut row, g) in state.rows_mut().into_iter().zip(grad.rows()) {
                let w = row.as_slice_mut().expect("standard layout rows are contiguous");
                lift_row(w, g.as_slice().expect("standard layout rows are contiguous"), h);
            }
            steps += 1;
            if state.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step: steps });
            }
            observer(steps, state.view());

            let change = Zip::from(&state)
                .and(&previous)
                .fold(0.0_f64, |m, &a, &b| m.max((a - b).abs()));
            let (_, mean_max) = entropy_stats_view(state.view());
            if mean_max >= config.convergence_tol {
                stop = StopReason::Integral;
            } else if change < config.stall_tol {
                stop = StopReason::Stalled;
            }
            if stop != StopReason::MaxSteps || steps % config.record_every == 0 || steps == config.max_steps {
                trace.push(record(steps, state.view(), &mut scalar));
            }
            if stop != StopReason::MaxSteps {
                break;
            }
        }
    }

    let final_state = AssignmentField::from_raw(state);
    let convergence_stats = entropy_stats_view(final_state.view());
    Ok(FlowResult {
        final_state,
        steps_taken: steps,
        trace,
        converged: stop != StopReason::MaxSteps,
        stop_reason: stop,
        convergence_stats,
    })
}

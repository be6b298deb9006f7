//! Fisher-Rao geometry of the open probability simplex and of the product
//! manifold of simplices (one simplex per graph vertex).
//!
//! The metric tensor never appears explicitly. Its inverse acts through the
//! replicator operator `R_w[x] = w∘x − ⟨x,w⟩w`, and steps along the manifold
//! use the lifting map `w ↦ w∘exp(h·v) / ⟨w, exp(h·v)⟩`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum and sum-zero invariants.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Entries are never allowed to drop below this value after a lift.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// A point in the relative interior of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_row(&values, true)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A vector in the tangent space `T_0 = {v : ⟨1, v⟩ = 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector(Vec<f64>);

impl TangentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let s: f64 = values.iter().sum();
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if !s.is_finite() || s.abs() > SIMPLEX_TOL * scale {
            return Err(Error::domain(format!("tangent vector sums to {s}, not 0")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_row(row: &[f64], strict: bool) -> Result<()> {
    if row.is_empty() {
        return Err(Error::domain("simplex point must have at least one entry"));
    }
    for &x in row {
        if !x.is_finite() || x < 0.0 || (strict && x <= 0.0) {
            return Err(Error::domain(format!(
                "simplex entry {x} violates {}",
                if strict { "strict positivity" } else { "nonnegativity" }
            )));
        }
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::domain(format!("simplex entries sum to {s}, not 1")));
    }
    Ok(())
}

/// An `n × m` row-stochastic matrix: one assignment vector per vertex.
///
/// Rows are stored row-major, so the row-stacked vectorization `vec_r(P)`
/// is the underlying buffer order.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentField(Array2<f64>);

impl AssignmentField {
    /// Builds a field on the open product manifold (strictly positive rows).
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        Self::validate(&rows, true)?;
        Ok(Self(rows))
    }

    /// Builds a field on the closed product of simplices; zeros are allowed.
    /// Used for one-hot label encodings.
    pub fn new_closed(rows: Array2<f64>) -> Result<Self> {
        Self::validate(&rows, false)?;
        Ok(Self(rows))
    }

    /// Every row at the barycenter.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("assignment field needs at least one row"));
        }
        let b = barycenter(m)?;
        Ok(Self(Array2::from_elem((n, m), b.as_slice()[0])))
    }

    fn validate(rows: &Array2<f64>, strict: bool) -> Result<()> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::shape(format!(
                "assignment field must be nonempty, got {}x{}",
                rows.nrows(),
                rows.ncols()
            )));
        }
        for (i, row) in rows.outer_iter().enumerate() {
            let row = row.to_vec();
            check_row(&row, strict).map_err(|e| Error::domain(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    /// Wraps a matrix that is known to satisfy the invariants.
    pub(crate) fn from_raw(rows: Array2<f64>) -> Self {
        debug_assert!(Self::validate(&rows, false).is_ok());
        Self(rows)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }
}

/// Uniform distribution on `c` categories.
pub fn barycenter(c: usize) -> Result<SimplexPoint> {
    if c == 0 {
        return Err(Error::domain("barycenter of an empty simplex"));
    }
    Ok(SimplexPoint(vec![1.0 / c as f64; c]))
}

/// `R_w[x] = w∘x − ⟨x,w⟩w`.
pub fn replicator(w: &SimplexPoint, x: &[f64]) -> Result<TangentVector> {
    if x.len() != w.dim() {
        return Err(Error::shape(format!(
            "replicator: point has {} entries, vector has {}",
            w.dim(),
            x.len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    replicator_row(w.as_slice(), x, &mut out);
    Ok(TangentVector(out))
}

pub(crate) fn replicator_row(w: &[f64], x: &[f64], out: &mut [f64]) {
    let mean: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    for ((o, &wi), &xi) in out.iter_mut().zip(w).zip(x) {
        *o = wi * xi - mean * wi;
    }
}

/// Lifting map `w' = w∘exp(h·v) / ⟨w, exp(h·v)⟩`.
pub fn lift(w: &SimplexPoint, v: &[f64], h: f64) -> Result<SimplexPoint> {
    if v.len() != w.dim() {
        return Err(Error::shape(format!(
            "lift: point has {} entries, vector has {}",
            w.dim(),
            v.len()
        )));
    }
    if !h.is_finite() || h < 0.0 {
        return Err(Error::domain(format!("lift step size must be >= 0, got {h}")));
    }
    let mut out = w.as_slice().to_vec();
    lift_row(&mut out, v, h);
    Ok(SimplexPoint(out))
}

/// In-place lift of a single row. A zero step or a constant direction
/// leaves the row untouched.
pub(crate) fn lift_row(w: &mut [f64], v: &[f64], h: f64) {
    if h == 0.0 || v.iter().all(|&x| x == v[0]) {
        return;
    }
    let shift = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(h * x));
    let mut total = 0.0;
    for (wi, &vi) in w.iter_mut().zip(v) {
        *wi *= (h * vi - shift).exp();
        total += *wi;
    }
    let mut floored = false;
    for wi in w.iter_mut() {
        *wi /= total;
        if *wi < POSITIVITY_FLOOR {
            *wi = POSITIVITY_FLOOR;
            floored = true;
        }
    }
    if floored {
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
    }
}

/// Row-wise replicator `R_W[F]`.
pub fn field_replicator(w: &AssignmentField, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if w.view().dim() != f.dim() {
        return Err(Error::shape(format!(
            "field_replicator: field is {:?}, ambient matrix is {:?}",
            w.view().dim(),
            f.dim()
        )));
    }
    Ok(field_replicator_unchecked(w.view(), f))
}

pub(crate) fn field_replicator_unchecked(w: ArrayView2<'_, f64>, f: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(w.dim());
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(w.axis_iter(Axis(0)))
        .and(f.axis_iter(Axis(0)))
        .for_each(|mut o, wr, fr| {
            let mean = wr.dot(&fr);
            Zip::from(&mut o)
                .and(&wr)
                .and(&fr)
                .for_each(|o, &wi, &xi| *o = wi * xi - mean * wi);
        });
    out
}

/// Mean Shannon entropy (natural log) and mean largest entry over rows.
pub fn row_entropy_stats(w: &AssignmentField) -> (f64, f64) {
    entropy_stats_view(w.view())
}

pub(crate) fn entropy_stats_view(w: ArrayView2<'_, f64>) -> (f64, f64) {
    let n = w.nrows() as f64;
    let mut entropy = 0.0;
    let mut max_entry = 0.0;
    for row in w.outer_iter() {
        entropy -= row.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
        max_entry += row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    }
    (entropy / n, max_entry / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> SimplexPoint {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    // Scalar evaluation of w∘x − ⟨x,w⟩w, kept separate from replicator_row.
    fn replicator_oracle(w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut inner = 0.0;
        for k in 0..w.len() {
            inner += x[k] * w[k];
        }
        (0..w.len()).map(|k| w[k] * x[k] - inner * w[k]).collect()
    }

    #[test]
    fn simplex_point_rejects_bad_input() {
        assert!(SimplexPoint::new(vec![]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![1.0, 0.0]).is_err());
        assert!(SimplexPoint::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SimplexPoint::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn replicator_kills_constants() {
        let r = replicator(&pt(&[0.5, 0.5]), &[3.7, 3.7]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn replicator_at_barycenter_centers_vector() {
        let c = 5;
        let x = [1.0, -2.0, 0.5, 4.0, 3.25];
        let mean = x.iter().sum::<f64>() / c as f64;
        let r = replicator(&barycenter(c).unwrap(), &x).unwrap();
        for (ri, xi) in r.as_slice().iter().zip(x) {
            assert!((ri - (xi - mean) / c as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn replicator_matches_scalar_oracle() {
        let w = [0.2, 0.3, 0.5];
        let x = [1.0, 2.0, 3.0];
        let r = replicator(&pt(&w), &x).unwrap();
        let expect = replicator_oracle(&w, &x);
        // ⟨x,w⟩ = 2.3 → (0.2·(1−2.3), 0.3·(2−2.3), 0.5·(3−2.3))
        assert!((expect[0] + 0.26).abs() < 1e-15);
        for (a, b) in r.as_slice().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn replicator_dimension_mismatch() {
        assert!(replicator(&pt(&[0.5, 0.5]), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn lift_zero_step_is_identity() {
        let w = pt(&[0.1, 0.2, 0.7]);
        assert_eq!(lift(&w, &[5.0, -1.0, 2.0], 0.0).unwrap(), w);
        assert_eq!(lift(&w, &[2.5, 2.5, 2.5], 0.3).unwrap(), w);
    }

    #[test]
    fn lift_closed_form_two_categories() {
        for h in [0.01, 0.5, 2.0, 30.0] {
            let out = lift(&pt(&[0.5, 0.5]), &[1.0, -1.0], h).unwrap();
            let z = h.exp() + (-h).exp();
            assert!((out.as_slice()[0] - h.exp() / z).abs() < 1e-15);
            assert!((out.as_slice()[1] - (-h).exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_rejects_negative_step() {
        assert!(lift(&pt(&[0.5, 0.5]), &[1.0, 0.0], -0.1).is_err());
        assert!(lift(&pt(&[0.5, 0.5]), &[1.0], 0.1).is_err());
    }

    #[test]
    fn lift_survives_huge_exponents() {
        let out = lift(&pt(&[0.5, 0.5]), &[1e6, -1e6], 10.0).unwrap();
        assert!(out.as_slice().iter().all(|&x| x >= POSITIVITY_FLOOR));
        assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn barycenter_values() {
        assert_eq!(barycenter(2).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(barycenter(4).unwrap().as_slice(), &[0.25; 4]);
        assert!(barycenter(0).is_err());
        for c in 1..=64 {
            let s: f64 = barycenter(c).unwrap().as_slice().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn field_replicator_constant_rows_vanish() {
        let w = AssignmentField::new(array![[0.2, 0.8], [0.6, 0.4]]).unwrap();
        let f = array![[2.0, 2.0], [-1.0, -1.0]];
        let r = field_replicator(&w, f.view()).unwrap();
        assert!(r.iter().all(|&x| x.abs() < 1e-16));
    }

    #[test]
    fn field_replicator_single_row() {
        let w = AssignmentField::new(array![[0.2, 0.3, 0.5]]).unwrap();
        let f = array![[1.0, 2.0, 3.0]];
        let r = field_replicator(&w, f.view()).unwrap();
        let single = replicator(&pt(&[0.2, 0.3, 0.5]), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.row(0).to_vec(), single.into_vec());
    }

    #[test]
    fn field_replicator_rowwise_oracle() {
        let w = AssignmentField::new(array![
            [0.1, 0.2, 0.3, 0.4],
            [0.25, 0.25, 0.25, 0.25],
            [0.7, 0.1, 0.1, 0.1]
        ])
        .unwrap();
        let f = array![[0.3, -1.2, 2.5, 0.0], [1.0, 2.0, 3.0, 4.0], [-0.5, 0.25, 9.0, -3.0]];
        let r = field_replicator(&w, f.view()).unwrap();
        for i in 0..3 {
            let expect = replicator_oracle(&w.row(i).to_vec(), &f.row(i).to_vec());
            for k in 0..4 {
                assert!((r[[i, k]] - expect[k]).abs() < 1e-14);
            }
        }
        assert!(field_replicator(&w, array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn entropy_stats_barycenter_and_near_integral() {
        let w = AssignmentField::uniform(7, 2).unwrap();
        let (h, m) = row_entropy_stats(&w);
        assert!((h - 2f64.ln()).abs() < 1e-15);
        assert!((m - 0.5).abs() < 1e-15);

        let eps = 1e-12;
        let w = AssignmentField::new(array![[1.0 - eps, eps], [eps, 1.0 - eps]]).unwrap();
        let (_, m) = row_entropy_stats(&w);
        assert!(m >= 1.0 - 1e-11);
    }

    #[test]
    fn entropy_stats_mixed_field_oracle() {
        let rows = array![[0.1, 0.9], [0.3, 0.7], [0.5, 0.5], [0.99, 0.01]];
        let w = AssignmentField::new(rows.clone()).unwrap();
        let (h, m) = row_entropy_stats(&w);
        let mut hs = 0.0;
        let mut ms = 0.0;
        for i in 0..4 {
            let (a, b) = (rows[[i, 0]], rows[[i, 1]]);
            hs += -(a * a.ln()) - b * b.ln();
            ms += if a > b { a } else { b };
        }
        assert!((h - hs / 4.0).abs() < 1e-12);
        assert!((m - ms / 4.0).abs() < 1e-12);
    }

    fn simplex_strategy(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, c).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    fn point_and_vec() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|c| (simplex_strategy(c), prop::collection::vec(-10.0f64..10.0, c)))
    }

    proptest! {
        #[test]
        fn replicator_is_tangent((w, x) in point_and_vec()) {
            let r = replicator(&SimplexPoint::new(w).unwrap(), &x).unwrap();
            let s: f64 = r.as_slice().iter().sum();
            prop_assert!(s.abs() < 1e-12);
        }

        #[test]
        fn replicator_is_linear(
            (w, x) in point_and_vec(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let y: Vec<f64> = x.iter().enumerate()
                .map(|(k, v)| (v * 1.7 + k as f64 + seed as f64 * 0.01).sin())
                .collect();
            let w = SimplexPoint::new(w).unwrap();
            let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = replicator(&w, &comb).unwrap();
            let rx = replicator(&w, &x).unwrap();
            let ry = replicator(&w, &y).unwrap();
            for k in 0..x.len() {
                let rhs = alpha * rx.as_slice()[k] + beta * ry.as_slice()[k];
                prop_assert!((lhs.as_slice()[k] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn lift_stays_on_simplex((w, v) in point_and_vec(), h in 0.0f64..10.0) {
            let out = lift(&SimplexPoint::new(w).unwrap(), &v, h).unwrap();
            prop_assert!(out.as_slice().iter().all(|&x| x > 0.0));
            prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn lift_shift_invariant((w, v) in point_and_vec(), h in 0.0f64..10.0, kappa in -50.0f64..50.0) {
            let w = SimplexPoint::new(w).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + kappa).collect();
            let a = lift(&w, &v, h).unwrap();
            let b = lift(&w, &shifted, h).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn lift_constant_shift_by_three((w, v) in point_and_vec(), h in 0.0f64..5.0) {
            let w = SimplexPoint::new(w).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + 3.0).collect();
            let a = lift(&w, &v, h).unwrap();
            let b = lift(&w, &shifted, h).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

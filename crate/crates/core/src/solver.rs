//! Sparse generalized ridge regression.
//!
//! Minimizes
//!
//! ```text
//! ||y - b0 - X beta||^2 + sum_j w_j (beta_j - c_j)^2
//! ```
//!
//! over an unpenalized intercept `b0` and coefficients `beta`, where every
//! coefficient has its own penalty weight `w_j >= 0` and shrinkage center
//! `c_j`. Substituting `beta = c + d` turns this into a standard ridge
//! problem on the adjusted response `y - X c`; the intercept is profiled out
//! by centering, leaving
//!
//! ```text
//! (Xc' Xc + W) d = Xc' (y - X c - mean)
//! ```
//!
//! which is solved matrix-free with Jacobi-preconditioned conjugate
//! gradients.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{LineupKey, PlayerId, Possession, Side};
use crate::error::{Error, Result};

/// Row-compressed design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDesign {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseDesign {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds a design from explicit `(column, value)` rows.
    pub fn from_rows<R>(n_cols: usize, rows: impl IntoIterator<Item = R>) -> Result<Self>
    where
        R: IntoIterator<Item = (usize, f64)>,
    {
        let mut d = Self::new(n_cols);
        for row in rows {
            d.push_row(row)?;
        }
        Ok(d)
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<()> {
        for (c, v) in entries {
            if c >= self.n_cols {
                return Err(Error::DimensionMismatch {
                    what: "design column",
                    expected: self.n_cols,
                    found: c,
                });
            }
            self.cols.push(c as u32);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).map(|(c, x)| x * v[c]).sum()
    }

    /// `X v`
    pub fn mul(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(i, v);
        }
    }

    /// `X' u`
    pub fn mul_transpose(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            for (c, x) in self.row(i) {
                out[c] += x * ui;
            }
        }
    }

    /// Linear predictor `b0 + X beta` for every row.
    pub fn predict(&self, intercept: f64, coefficients: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| intercept + self.row_dot(i, coefficients))
            .collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.n_cols];
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            means[c as usize] += v;
        }
        let n = self.n_rows().max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    fn column_sq_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            sums[c as usize] += v * v;
        }
        sums
    }
}

/// Maps each entity to an offense column and a defense column.
///
/// Entities are kept sorted; offense columns occupy `0..m` and defense
/// columns `m..2m`.
#[derive(Debug, Clone)]
pub struct ColumnIndex<K> {
    entities: Vec<K>,
    position: HashMap<K, usize>,
}

impl<K: Ord + Hash + Clone> ColumnIndex<K> {
    pub fn new(entities: impl IntoIterator<Item = K>) -> Self {
        let mut entities: Vec<K> = entities.into_iter().collect();
        entities.sort();
        entities.dedup();
        let position = entities.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Self { entities, position }
    }

    pub fn entities(&self) -> &[K] {
        &self.entities
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_cols(&self) -> usize {
        2 * self.entities.len()
    }

    pub fn column(&self, entity: &K, side: Side) -> Option<usize> {
        let i = *self.position.get(entity)?;
        Some(match side {
            Side::Offense => i,
            Side::Defense => self.entities.len() + i,
        })
    }

    pub fn side_of(&self, column: usize) -> Side {
        if column < self.entities.len() {
            Side::Offense
        } else {
            Side::Defense
        }
    }

    pub fn entity_of(&self, column: usize) -> &K {
        &self.entities[column % self.entities.len()]
    }

    /// Split a coefficient vector into per-entity (offense, defense) values.
    pub fn unpack(&self, coefficients: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.entities.len();
        (coefficients[..m].to_vec(), coefficients[m..2 * m].to_vec())
    }
}

impl ColumnIndex<PlayerId> {
    pub fn players<'a>(possessions: impl IntoIterator<Item = &'a Possession>) -> Self {
        Self::new(
            possessions
                .into_iter()
                .flat_map(|p| p.offense.players().iter().chain(p.defense.players().iter()).cloned()),
        )
    }
}

impl ColumnIndex<LineupKey> {
    pub fn lineups<'a>(possessions: impl IntoIterator<Item = &'a Possession>) -> Self {
        Self::new(
            possessions
                .into_iter()
                .flat_map(|p| [p.offense.clone(), p.defense.clone()]),
        )
    }
}

/// Which entities get design columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    /// Ten non-zeros per row: +1 for each offensive player, -1 for each defender.
    Player,
    /// Two non-zeros per row: +1 for the offensive lineup, -1 for the defensive one.
    Lineup,
}

/// A design matrix with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: SparseDesign,
    pub y: Vec<f64>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
}

fn build_rows<'a, I, F>(possessions: I, n_cols: usize, mut encode: F) -> Result<Design>
where
    I: IntoIterator<Item = &'a Possession>,
    F: FnMut(&Possession, &mut Vec<(usize, f64)>) -> Result<()>,
{
    let mut matrix = SparseDesign::new(n_cols);
    let mut y = Vec::new();
    let mut row = Vec::with_capacity(10);
    for p in possessions {
        row.clear();
        encode(p, &mut row)?;
        matrix.push_row(row.iter().copied())?;
        y.push(p.points as f64);
    }
    if y.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(Design { matrix, y })
}

/// Player-mode design against an existing column index.
pub fn player_design<'a, I>(possessions: I, index: &ColumnIndex<PlayerId>) -> Result<Design>
where
    I: IntoIterator<Item = &'a Possession>,
{
    build_rows(possessions, index.n_cols(), |p, row| {
        for (lineup, side, sign) in [(&p.offense, Side::Offense, 1.0), (&p.defense, Side::Defense, -1.0)] {
            for id in lineup.players() {
                let c = index
                    .column(id, side)
                    .ok_or_else(|| Error::UnknownPlayer(id.to_string()))?;
                row.push((c, sign));
            }
        }
        Ok(())
    })
}

/// Lineup-mode design against an existing column index.
pub fn lineup_design<'a, I>(possessions: I, index: &ColumnIndex<LineupKey>) -> Result<Design>
where
    I: IntoIterator<Item = &'a Possession>,
{
    build_rows(possessions, index.n_cols(), |p, row| {
        let off = index
            .column(&p.offense, Side::Offense)
            .ok_or_else(|| Error::MissingPrior(p.offense.to_string()))?;
        let def = index
            .column(&p.defense, Side::Defense)
            .ok_or_else(|| Error::MissingPrior(p.defense.to_string()))?;
        row.push((off, 1.0));
        row.push((def, -1.0));
        Ok(())
    })
}

/// Column labels for a design built by [`build_design`].
#[derive(Debug, Clone)]
pub enum Columns {
    Player(ColumnIndex<PlayerId>),
    Lineup(ColumnIndex<LineupKey>),
}

impl Columns {
    pub fn n_cols(&self) -> usize {
        match self {
            Columns::Player(c) => c.n_cols(),
            Columns::Lineup(c) => c.n_cols(),
        }
    }

    pub fn side_of(&self, column: usize) -> Side {
        match self {
            Columns::Player(c) => c.side_of(column),
            Columns::Lineup(c) => c.side_of(column),
        }
    }
}

/// Builds a design over exactly the entities present in `possessions`.
pub fn build_design<'a, I>(possessions: I, mode: DesignMode) -> Result<(Design, Columns)>
where
    I: IntoIterator<Item = &'a Possession> + Clone,
{
    match mode {
        DesignMode::Player => {
            let index = ColumnIndex::players(possessions.clone());
            Ok((player_design(possessions, &index)?, Columns::Player(index)))
        }
        DesignMode::Lineup => {
            let index = ColumnIndex::lineups(possessions.clone());
            Ok((lineup_design(possessions, &index)?, Columns::Lineup(index)))
        }
    }
}

/// Per-column penalty weights and shrinkage centers.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(weights: Vec<f64>, centers: Vec<f64>) -> Self {
        Self { weights, centers }
    }

    pub fn uniform(lambda: f64, centers: Vec<f64>) -> Self {
        Self {
            weights: vec![lambda; centers.len()],
            centers,
        }
    }

    pub fn zero_centered(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self {
            weights,
            centers: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Regularization strength for offense and defense columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub off: f64,
    pub def: f64,
}

impl LambdaPair {
    pub fn new(off: f64, def: f64) -> Self {
        Self { off, def }
    }

    pub fn uniform(lambda: f64) -> Self {
        Self {
            off: lambda,
            def: lambda,
        }
    }

    pub fn for_side(&self, side: Side) -> f64 {
        match side {
            Side::Offense => self.off,
            Side::Defense => self.def,
        }
    }

    /// Cartesian product of offense and defense candidates.
    pub fn grid(off: &[f64], def: &[f64]) -> Vec<LambdaPair> {
        off.iter()
            .flat_map(|&o| def.iter().map(move |&d| LambdaPair::new(o, d)))
            .collect()
    }
}

/// Shrinkage centers plus the side of each column; combine with a
/// [`LambdaPair`] to get a [`PenaltySpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTemplate {
    pub centers: Vec<f64>,
    pub sides: Vec<Side>,
}

impl PenaltyTemplate {
    pub fn with_lambdas(&self, lambdas: LambdaPair) -> PenaltySpec {
        PenaltySpec {
            weights: self.sides.iter().map(|&s| lambdas.for_side(s)).collect(),
            centers: self.centers.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative residual `||b - A d|| / ||b||` of the normal equations.
    pub tol: f64,
    /// Defaults to `10 * n_cols` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the normal equations at the returned solution.
    pub residual_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(Xc' Xc + W) v` without forming `Xc`.
struct NormalOperator<'a> {
    x: &'a SparseDesign,
    means: &'a [f64],
    weights: &'a [f64],
    row_buf: Vec<f64>,
}

impl NormalOperator<'_> {
    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let shift = dot(self.means, v);
        self.x.mul(v, &mut self.row_buf);
        self.row_buf.iter_mut().for_each(|r| *r -= shift);
        // the centered product sums to zero, so X' and Xc' agree on it
        self.x.mul_transpose(&self.row_buf, out);
        for ((o, w), vi) in out.iter_mut().zip(self.weights).zip(v) {
            *o += w * vi;
        }
    }
}

/// Solves the penalized least-squares problem with an unpenalized intercept.
pub fn solve(design: &SparseDesign, y: &[f64], penalty: &PenaltySpec, opts: SolveOptions) -> Result<RidgeSolution> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: n,
            found: y.len(),
        });
    }
    for (what, len) in [
        ("penalty weights", penalty.weights.len()),
        ("penalty centers", penalty.centers.len()),
    ] {
        if len != p {
            return Err(Error::DimensionMismatch {
                what,
                expected: p,
                found: len,
            });
        }
    }
    if let Some(w) = penalty.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidPenalty(format!(
            "weight {w} is not a finite non-negative number"
        )));
    }
    if penalty.centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidPenalty("non-finite center".into()));
    }
    if n == 0 {
        return Err(Error::EmptyData);
    }

    // adjusted, centered response
    let mut resid = vec![0.0; n];
    design.mul(&penalty.centers, &mut resid);
    for (r, yi) in resid.iter_mut().zip(y) {
        *r = yi - *r;
    }
    let y_mean = resid.iter().sum::<f64>() / n as f64;
    resid.iter_mut().for_each(|r| *r -= y_mean);

    let means = design.column_means();
    let mut b = vec![0.0; p];
    design.mul_transpose(&resid, &mut b);

    let sq = design.column_sq_sums();
    let precond: Vec<f64> = (0..p)
        .map(|j| {
            let d = sq[j] - n as f64 * means[j] * means[j] + penalty.weights[j];
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();

    let mut op = NormalOperator {
        x: design,
        means: &means,
        weights: &penalty.weights,
        row_buf: vec![0.0; n],
    };

    let max_iter = opts.max_iter.unwrap_or(10 * p).max(1);
    let b_norm = norm(&b);
    let mut delta = vec![0.0; p];
    let mut iterations = 0;
    let mut rel_resid = 0.0;

    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, m)| ri * m).collect();
        let mut dir = z.clone();
        let mut ad = vec![0.0; p];
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            op.apply(&dir, &mut ad);
            let curvature = dot(&dir, &ad);
            if curvature <= 0.0 {
                break;
            }
            let alpha = rz / curvature;
            for j in 0..p {
                delta[j] += alpha * dir[j];
                r[j] -= alpha * ad[j];
            }
            iterations += 1;

            // periodically replace the recursive residual to limit drift
            if iterations % 50 == 0 {
                op.apply(&delta, &mut ad);
                for j in 0..p {
                    r[j] = b[j] - ad[j];
                }
            }
            if norm(&r) / b_norm <= opts.tol {
                break;
            }
            for j in 0..p {
                z[j] = r[j] * precond[j];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for j in 0..p {
                dir[j] = z[j] + beta * dir[j];
            }
        }
        // report the true residual
        let mut ad = vec![0.0; p];
        op.apply(&delta, &mut ad);
        let true_resid: Vec<f64> = b.iter().zip(&ad).map(|(bi, ai)| bi - ai).collect();
        rel_resid = norm(&true_resid) / b_norm;
        if rel_resid > opts.tol {
            return Err(Error::NonConvergence {
                iterations,
                residual: rel_resid,
            });
        }
    }

    let intercept = y_mean - dot(&means, &delta);
    let coefficients = penalty.centers.iter().zip(&delta).map(|(c, d)| c + d).collect();
    Ok(RidgeSolution {
        intercept,
        coefficients,
        iterations,
        residual_norm: rel_resid,
    })
}

/// Root mean squared error of a fitted solution on a design.
pub fn rmse(design: &SparseDesign, y: &[f64], solution: &RidgeSolution) -> f64 {
    let pred = design.predict(solution.intercept, &solution.coefficients);
    let sse: f64 = pred.iter().zip(y).map(|(p, yi)| (p - yi).powi(2)).sum();
    (sse / y.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridScore {
    pub lambdas: LambdaPair,
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best: LambdaPair,
    pub best_rmse: f64,
    /// One entry per candidate, in candidate order.
    pub scores: Vec<GridScore>,
}

/// Picks the candidate with the lowest validation RMSE.
///
/// Candidates are evaluated in parallel. Exact RMSE ties go to the larger
/// regularization (compared on the offense value, then defense).
pub fn grid_search(
    train: &Design,
    val: &Design,
    candidates: &[LambdaPair],
    template: &PenaltyTemplate,
    opts: SolveOptions,
) -> Result<GridSearchResult> {
    if candidates.is_empty() || train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::EmptyData);
    }
    if train.matrix.n_cols() != val.matrix.n_cols() {
        return Err(Error::DimensionMismatch {
            what: "validation columns",
            expected: train.matrix.n_cols(),
            found: val.matrix.n_cols(),
        });
    }
    let scores = candidates
        .par_iter()
        .map(|&lambdas| {
            let sol = solve(&train.matrix, &train.y, &template.with_lambdas(lambdas), opts)?;
            Ok(GridScore {
                lambdas,
                validation_rmse: rmse(&val.matrix, &val.y, &sol),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = scores
        .iter()
        .min_by(|a, b| {
            a.validation_rmse
                .total_cmp(&b.validation_rmse)
                .then_with(|| b.lambdas.off.total_cmp(&a.lambdas.off))
                .then_with(|| b.lambdas.def.total_cmp(&a.lambdas.def))
        })
        .expect("non-empty candidates");
    Ok(GridSearchResult {
        best: best.lambdas,
        best_rmse: best.validation_rmse,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::LineupKey;
    use chrono::NaiveDate;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: solve the full (intercept + coefficients) normal
    /// equations directly with an LU factorization.
    fn dense_oracle(rows: &[Vec<f64>], y: &[f64], weights: &[f64], centers: &[f64]) -> (f64, Vec<f64>) {
        let n = rows.len();
        let p = weights.len();
        let mut a = DMatrix::<f64>::zeros(n, p + 1);
        for (i, r) in rows.iter().enumerate() {
            a[(i, 0)] = 1.0;
            for j in 0..p {
                a[(i, j + 1)] = r[j];
            }
        }
        let mut lhs = a.transpose() * &a;
        let mut penalty = DVector::<f64>::zeros(p + 1);
        for j in 0..p {
            lhs[(j + 1, j + 1)] += weights[j];
            penalty[j + 1] = weights[j] * centers[j];
        }
        let rhs = a.transpose() * DVector::from_column_slice(y) + penalty;
        let sol = lhs.lu().solve(&rhs).expect("oracle system is non-singular");
        (sol[0], sol.iter().skip(1).copied().collect())
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..p)
                    .map(|_| match rng.random_range(0..3) {
                        0 => 1.0,
                        1 => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let centers: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..1.5)).collect();
        (rows, y, centers)
    }

    fn to_sparse(rows: &[Vec<f64>], p: usize) -> SparseDesign {
        SparseDesign::from_rows(
            p,
            rows.iter().map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect::<Vec<_>>()
            }),
        )
        .unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        diff / norm(b).max(1e-300)
    }

    #[test]
    fn penalty_dominated_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rows, y, centers) = random_instance(&mut rng, 80, 6);
        let x = to_sparse(&rows, 6);
        let sol = solve(
            &x,
            &y,
            &PenaltySpec::uniform(1e12, centers.clone()),
            SolveOptions::default(),
        )
        .unwrap();
        for (c, pi) in sol.coefficients.iter().zip(&centers) {
            assert!((c - pi).abs() < 1e-6);
        }
        let mut xpi = vec![0.0; 80];
        x.mul(&centers, &mut xpi);
        let expect = y.iter().zip(&xpi).map(|(a, b)| a - b).sum::<f64>() / 80.0;
        assert!((sol.intercept - expect).abs() < 1e-6);
    }

    #[test]
    fn unpenalized_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (rows, y, _) = random_instance(&mut rng, 150, 8);
        let x = to_sparse(&rows, 8);
        let zeros = vec![0.0; 8];
        let (b0, beta) = dense_oracle(&rows, &y, &zeros, &zeros);
        let sol = solve(
            &x,
            &y,
            &PenaltySpec::zero_centered(zeros.clone()),
            SolveOptions::with_tol(1e-13),
        )
        .unwrap();
        assert!(rel_err(&sol.coefficients, &beta) < 1e-8);
        assert!((sol.intercept - b0).abs() < 1e-8);
    }

    #[test]
    fn generalized_ridge_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, y, centers) = random_instance(&mut rng, 500, 20);
        let x = to_sparse(&rows, 20);
        let weights = vec![50.0; 20];
        let (b0, beta) = dense_oracle(&rows, &y, &weights, &centers);
        let sol = solve(
            &x,
            &y,
            &PenaltySpec::new(weights, centers),
            SolveOptions::with_tol(1e-13),
        )
        .unwrap();
        assert!(
            rel_err(&sol.coefficients, &beta) < 1e-8,
            "{}",
            rel_err(&sol.coefficients, &beta)
        );
        assert!((sol.intercept - b0).abs() < 1e-8 * b0.abs().max(1.0));
        assert!(sol.residual_norm <= 1e-13);
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (rows, y, centers) = random_instance(&mut rng, 200, 10);
        let x = to_sparse(&rows, 10);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.5, 1.0, 5.0, 20.0, 100.0, 1e3, 1e4, 1e6] {
            let sol = solve(
                &x,
                &y,
                &PenaltySpec::uniform(lambda, centers.clone()),
                SolveOptions::with_tol(1e-12),
            )
            .unwrap();
            let dev: f64 = sol
                .coefficients
                .iter()
                .zip(&centers)
                .map(|(b, c)| (b - c).powi(2))
                .sum();
            assert!(dev <= last * (1.0 + 1e-9), "lambda {lambda}: {dev} > {last}");
            last = dev;
        }
    }

    #[test]
    fn residual_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, y, centers) = random_instance(&mut rng, 300, 12);
        let x = to_sparse(&rows, 12);
        for tol in [1e-6, 1e-8, 1e-10] {
            let sol = solve(
                &x,
                &y,
                &PenaltySpec::uniform(3.0, centers.clone()),
                SolveOptions::with_tol(tol),
            )
            .unwrap();
            assert!(sol.residual_norm <= tol);
        }
    }

    #[test]
    fn non_convergence_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (rows, y, centers) = random_instance(&mut rng, 300, 12);
        let x = to_sparse(&rows, 12);
        let opts = SolveOptions {
            tol: 1e-14,
            max_iter: Some(1),
        };
        let err = solve(&x, &y, &PenaltySpec::uniform(0.1, centers), opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn dimension_and_penalty_errors() {
        let x = SparseDesign::from_rows(2, [vec![(0, 1.0), (1, -1.0)]]).unwrap();
        let bad_y = solve(
            &x,
            &[1.0, 2.0],
            &PenaltySpec::uniform(1.0, vec![0.0; 2]),
            SolveOptions::default(),
        );
        assert!(matches!(bad_y, Err(Error::DimensionMismatch { .. })));
        let bad_pen = solve(
            &x,
            &[1.0],
            &PenaltySpec::uniform(1.0, vec![0.0; 3]),
            SolveOptions::default(),
        );
        assert!(matches!(bad_pen, Err(Error::DimensionMismatch { .. })));
        let neg = solve(
            &x,
            &[1.0],
            &PenaltySpec::uniform(-1.0, vec![0.0; 2]),
            SolveOptions::default(),
        );
        assert!(matches!(neg, Err(Error::InvalidPenalty(_))));
        assert!(SparseDesign::from_rows(2, [vec![(2, 1.0)]]).is_err());
    }

    fn poss(points: i64, off: &str, def: &str) -> Possession {
        Possession::new(
            points,
            LineupKey::parse(off).unwrap(),
            LineupKey::parse(def).unwrap(),
            "G".into(),
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn player_mode_row_encoding() {
        let ps = [poss(2, "a1,a2,a3,a4,a5", "b1,b2,b3,b4,b5")];
        let (d, cols) = build_design(&ps, DesignMode::Player).unwrap();
        assert_eq!(d.matrix.n_cols(), 20);
        let row: Vec<(usize, f64)> = d.matrix.row(0).collect();
        assert_eq!(row.len(), 10);
        assert_eq!(row.iter().filter(|(_, v)| *v == 1.0).count(), 5);
        assert_eq!(row.iter().filter(|(_, v)| *v == -1.0).count(), 5);
        for (c, v) in row {
            let side = cols.side_of(c);
            assert_eq!(side == Side::Offense, v == 1.0);
        }
        assert_eq!(d.y, vec![2.0]);
    }

    #[test]
    fn lineup_mode_row_encoding() {
        let ps = [
            poss(2, "a1,a2,a3,a4,a5", "b1,b2,b3,b4,b5"),
            poss(0, "b1,b2,b3,b4,b5", "a1,a2,a3,a4,a5"),
            poss(3, "a1,a2,a3,a4,a5", "b1,b2,b3,b4,b5"),
        ];
        let (d, cols) = build_design(&ps, DesignMode::Lineup).unwrap();
        assert_eq!(cols.n_cols(), 4);
        let Columns::Lineup(index) = cols else { panic!() };
        let a = LineupKey::parse("a1,a2,a3,a4,a5").unwrap();
        let b = LineupKey::parse("b1,b2,b3,b4,b5").unwrap();
        let row: Vec<(usize, f64)> = d.matrix.row(0).collect();
        assert_eq!(
            row,
            vec![
                (index.column(&a, Side::Offense).unwrap(), 1.0),
                (index.column(&b, Side::Defense).unwrap(), -1.0)
            ]
        );
        assert_eq!(index.column(&a, Side::Offense), Some(0));
        assert_eq!(index.column(&a, Side::Defense), Some(2));
    }

    #[test]
    fn empty_design_is_an_error() {
        let empty: [Possession; 0] = [];
        assert!(matches!(
            build_design(&empty, DesignMode::Lineup),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn single_candidate_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (rows, y, centers) = random_instance(&mut rng, 100, 6);
        let train = Design {
            matrix: to_sparse(&rows[..70], 6),
            y: y[..70].to_vec(),
        };
        let val = Design {
            matrix: to_sparse(&rows[70..], 6),
            y: y[70..].to_vec(),
        };
        let template = PenaltyTemplate {
            centers,
            sides: vec![Side::Offense; 6],
        };
        let res = grid_search(
            &train,
            &val,
            &[LambdaPair::uniform(42.0)],
            &template,
            SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(res.best, LambdaPair::uniform(42.0));
        assert!(matches!(
            grid_search(&train, &val, &[], &template, SolveOptions::default()),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn grid_ties_break_toward_larger_lambda() {
        // all-zero design: every candidate predicts the training mean
        let train = Design {
            matrix: SparseDesign::from_rows(2, vec![Vec::new(); 4]).unwrap(),
            y: vec![1.0, 2.0, 1.0, 2.0],
        };
        let val = Design {
            matrix: SparseDesign::from_rows(2, vec![Vec::new(); 2]).unwrap(),
            y: vec![0.0, 3.0],
        };
        let template = PenaltyTemplate {
            centers: vec![0.0; 2],
            sides: vec![Side::Offense, Side::Defense],
        };
        let cands = LambdaPair::grid(&[1.0, 10.0, 5.0], &[2.0, 3.0]);
        let res = grid_search(&train, &val, &cands, &template, SolveOptions::default()).unwrap();
        assert_eq!(res.best, LambdaPair::new(10.0, 3.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn permutation_equivariance(seed in 0u64..1000, shift in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = 7;
            let (rows, y, centers) = random_instance(&mut rng, 60, p);
            let weights: Vec<f64> = (0..p).map(|j| 0.5 + j as f64).collect();
            let perm: Vec<usize> = (0..p).map(|j| (j + shift) % p).collect();
            let permuted_rows: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let opts = SolveOptions::with_tol(1e-13);
            let base = solve(&to_sparse(&rows, p), &y, &PenaltySpec::new(weights.clone(), centers.clone()), opts).unwrap();
            let pw = perm.iter().map(|&j| weights[j]).collect();
            let pc = perm.iter().map(|&j| centers[j]).collect();
            let moved = solve(&to_sparse(&permuted_rows, p), &y, &PenaltySpec::new(pw, pc), opts).unwrap();
            for (k, &j) in perm.iter().enumerate() {
                prop_assert!((moved.coefficients[k] - base.coefficients[j]).abs() < 1e-9);
            }
            prop_assert!((moved.intercept - base.intercept).abs() < 1e-9);
        }

        #[test]
        fn scaling_response_and_centers(seed in 0u64..1000, scale in -4.0f64..4.0) {
            prop_assume!(scale.abs() > 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = 6;
            let (rows, y, centers) = random_instance(&mut rng, 50, p);
            let x = to_sparse(&rows, p);
            let opts = SolveOptions::with_tol(1e-13);
            let base = solve(&x, &y, &PenaltySpec::uniform(7.0, centers.clone()), opts).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let cs: Vec<f64> = centers.iter().map(|v| v * scale).collect();
            let scaled = solve(&x, &ys, &PenaltySpec::uniform(7.0, cs), opts).unwrap();
            prop_assert!((scaled.intercept - scale * base.intercept).abs() < 1e-9);
            for (s, b) in scaled.coefficients.iter().zip(&base.coefficients) {
                prop_assert!((s - scale * b).abs() < 1e-9);
            }
        }
    }
}

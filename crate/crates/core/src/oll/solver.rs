//! ADMM solver for the learner SDP.
//!
//! The feasible set is split as `X = Z` with `X` in the PSD cone (carrying
//! the log-determinant) and `Z` in the box `[0, 1]`. The `X` step has a
//! closed form in the eigenbasis of `Z - U + G / beta`: each eigenvalue `w`
//! maps to the non-negative root of `beta (x - w)(x + 1) = 1`. The `Z` step
//! is entry-wise clipping. One eigendecomposition per iteration.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_finite, dim, CumulativeGain, LearnerSolution, SolveStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Bound on both the primal residual `|X - Z|_F` and the dual residual
    /// `beta |Z_k - Z_{k-1}|_F`.
    pub tol_residual: f64,
    /// Initial ADMM penalty `beta`.
    pub penalty: f64,
    /// Relaxation factor in `(0, 2)`. Over-relaxation interferes with the
    /// Anderson extrapolation, so the default is `1`.
    pub relaxation: f64,
    /// Residual balancing is applied only during the first iterations of a
    /// solve so the tail keeps a fixed penalty.
    pub adapt_until: usize,
    /// History length for Anderson acceleration of the `(Z, U)` iteration;
    /// `0` runs plain ADMM.
    pub anderson_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tol_residual: 1e-7,
            penalty: 0.25,
            relaxation: 1.0,
            adapt_until: 100,
            anderson_memory: 8,
        }
    }
}

impl SolverSettings {
    /// Looser residual bound for per-round planner solves. The learner output
    /// only feeds probability updates, so `1e-5` residuals are ample and cut
    /// warm-started iteration counts roughly threefold.
    pub fn planner() -> Self {
        Self {
            tol_residual: 1e-5,
            ..Self::default()
        }
    }
}

/// Iterate carried between solves. Seeding a solve with the previous
/// round's state is what makes per-round cost small.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Scaled dual variable.
    pub u: DMatrix<f64>,
    pub penalty: f64,
}

impl AdmmState {
    /// Fixed starting point used by cold solves: `X = Z = I`, `U = 0`.
    pub fn cold(n_users: usize, settings: &SolverSettings) -> Self {
        let d = dim(n_users);
        Self {
            x: DMatrix::identity(d, d),
            z: DMatrix::identity(d, d),
            u: DMatrix::zeros(d, d),
            penalty: settings.penalty,
        }
    }

    /// Starts from an arbitrary symmetric matrix (clipped into the box).
    pub fn from_start(start: &DMatrix<f64>, settings: &SolverSettings) -> Self {
        let d = start.nrows();
        let z = start.map(|v| v.clamp(0.0, 1.0));
        Self {
            x: z.clone(),
            z,
            u: DMatrix::zeros(d, d),
            penalty: settings.penalty,
        }
    }

    pub fn n_users(&self) -> usize {
        self.x.nrows() / 3
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OllSolver {
    pub settings: SolverSettings,
}

/// Cold-started solve with default settings.
pub fn oll_solve(cumulative: &CumulativeGain, epsilon: f64) -> Result<LearnerSolution> {
    OllSolver::default().solve(cumulative, epsilon)
}

impl OllSolver {
    pub fn new(settings: SolverSettings) -> Self {
        Self { settings }
    }

    pub fn solve(&self, cumulative: &CumulativeGain, epsilon: f64) -> Result<LearnerSolution> {
        let mut state = AdmmState::cold(cumulative.n_users(), &self.settings);
        self.solve_warm(cumulative, epsilon, &mut state)
    }

    /// Solves starting from `state` and leaves the final iterate in it.
    pub fn solve_warm(
        &self,
        cumulative: &CumulativeGain,
        epsilon: f64,
        state: &mut AdmmState,
    ) -> Result<LearnerSolution> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive and finite, got {epsilon}"
            )));
        }
        check_finite(cumulative.matrix())?;
        let d = cumulative.matrix().nrows();
        if state.x.nrows() != d {
            return Err(Error::Dimension {
                expected: d,
                got: state.x.nrows(),
            });
        }
        let gain = cumulative.matrix() * epsilon;
        self.iterate(&gain, state)
    }

    fn iterate(&self, gain: &DMatrix<f64>, state: &mut AdmmState) -> Result<LearnerSolution> {
        let s = &self.settings;
        let mut eigenvalues = DVector::zeros(gain.nrows());
        let mut residual = f64::INFINITY;
        let mut accel = Anderson::new(s.anderson_memory, 2 * gain.len());
        let mut v = pack(&state.z, &state.u);

        for k in 1..=s.max_iterations {
            let beta = state.penalty;
            let (primal, dual) = self.step(gain, state, &mut eigenvalues);
            residual = primal.max(dual);
            if primal <= s.tol_residual && dual <= s.tol_residual {
                return Ok(self.finish(gain, state, &eigenvalues, k, residual, SolveStatus::Converged));
            }

            if k <= s.adapt_until && k % 5 == 0 {
                if primal > 10.0 * dual {
                    state.penalty *= 2.0;
                    state.u /= 2.0;
                } else if dual > 10.0 * primal {
                    state.penalty /= 2.0;
                    state.u *= 2.0;
                }
            }
            if state.penalty != beta {
                accel.reset();
                pack_into(&state.z, &state.u, &mut v);
                continue;
            }
            let mut image = accel.take_buffer();
            pack_into(&state.z, &state.u, &mut image);
            accel.next(&mut v, image);
            unpack(&v, &mut state.z, &mut state.u);
        }

        let best = self.finish(
            gain,
            state,
            &eigenvalues,
            s.max_iterations,
            residual,
            SolveStatus::IterationCap,
        );
        Err(Error::NotConverged {
            iterations: s.max_iterations,
            residual,
            best: Box::new(best),
        })
    }

    /// One over-relaxed ADMM pass from `(state.z, state.u)`. Returns the
    /// primal and dual residuals.
    fn step(&self, gain: &DMatrix<f64>, state: &mut AdmmState, eigenvalues: &mut DVector<f64>) -> (f64, f64) {
        let alpha = self.settings.relaxation;
        let beta = state.penalty;
        let mut w = &state.z - &state.u + gain / beta;
        symmetrize(&mut w);
        let (x, eig) = psd_logdet_prox(w, beta);
        state.x = x;
        *eigenvalues = eig;

        let x_hat = &state.x * alpha + &state.z * (1.0 - alpha);
        let z_new = (&x_hat + &state.u).map(|v| v.clamp(0.0, 1.0));
        state.u += &x_hat - &z_new;

        let primal = (&state.x - &z_new).norm();
        let dual = beta * (&z_new - &state.z).norm();
        state.z = z_new;
        (primal, dual)
    }

    fn finish(
        &self,
        gain: &DMatrix<f64>,
        state: &AdmmState,
        eigenvalues: &DVector<f64>,
        iterations: usize,
        residual: f64,
        status: SolveStatus,
    ) -> LearnerSolution {
        let (x, repaired) = into_box(&state.x);
        let logdet = if repaired {
            super::logdet_shifted(&x).unwrap_or(f64::NAN)
        } else {
            eigenvalues.iter().map(|v| v.ln_1p()).sum()
        };
        LearnerSolution {
            objective: super::inner(&x, gain) + logdet,
            x,
            iterations,
            residual,
            status,
        }
    }
}

/// Moves a PSD matrix whose entries overshoot `[0, 1]` by a residual-sized
/// amount into the feasible set while keeping it PSD: first scale so no
/// entry exceeds 1, then mix with the all-ones matrix until no entry is
/// negative. Returns the matrix and whether it changed.
fn into_box(x: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let mut out = x.clone();
    let top = out.max();
    if top > 1.0 {
        out /= top;
    }
    let theta = out
        .iter()
        .filter(|&&v| v < 0.0)
        .map(|&v| -v / (1.0 - v))
        .fold(0.0, f64::max);
    if theta > 0.0 {
        out = out.map(|v| ((1.0 - theta) * v + theta).clamp(0.0, 1.0));
    }
    let changed = top > 1.0 || theta > 0.0;
    (out, changed)
}

fn pack(z: &DMatrix<f64>, u: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(z.len() + u.len());
    pack_into(z, u, &mut v);
    v
}

fn pack_into(z: &DMatrix<f64>, u: &DMatrix<f64>, v: &mut DVector<f64>) {
    let n = z.len();
    v.as_mut_slice()[..n].copy_from_slice(z.as_slice());
    v.as_mut_slice()[n..].copy_from_slice(u.as_slice());
}

fn unpack(v: &DVector<f64>, z: &mut DMatrix<f64>, u: &mut DMatrix<f64>) {
    let n = z.len();
    z.as_mut_slice().copy_from_slice(&v.as_slice()[..n]);
    u.as_mut_slice().copy_from_slice(&v.as_slice()[n..]);
}

/// Residual growth that makes an extrapolated point count as a failure.
const SAFEGUARD: f64 = 1.0;

/// Type-II Anderson acceleration for a fixed-point map `v -> T(v)`, with a
/// safeguard: when an extrapolated point has a larger fixed-point residual
/// than the point it came from, the history is dropped and the plain image
/// of that earlier point (kept as `fallback`) is used instead.
struct Anderson {
    memory: usize,
    /// Columns `v_{i+1} - v_i` and `f_{i+1} - f_i`, oldest first.
    dv: VecDeque<DVector<f64>>,
    df: VecDeque<DVector<f64>>,
    /// Gram matrix of `df`, same order.
    gram: DMatrix<f64>,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    spare: Option<DVector<f64>>,
    /// Plain image of the last point and its residual norm.
    fallback: DVector<f64>,
    fallback_norm: f64,
    extrapolated: bool,
}

impl Anderson {
    fn new(memory: usize, len: usize) -> Self {
        Self {
            memory,
            dv: VecDeque::with_capacity(memory),
            df: VecDeque::with_capacity(memory),
            gram: DMatrix::zeros(memory, memory),
            prev: None,
            spare: None,
            fallback: DVector::zeros(len),
            fallback_norm: f64::INFINITY,
            extrapolated: false,
        }
    }

    fn reset(&mut self) {
        self.dv.clear();
        self.df.clear();
        self.prev = None;
        self.fallback_norm = f64::INFINITY;
        self.extrapolated = false;
    }

    fn push(&mut self, dv: DVector<f64>, df: DVector<f64>) {
        if self.dv.len() == self.memory {
            self.dv.pop_front();
            self.df.pop_front();
            let m = self.memory;
            for i in 1..m {
                for j in 1..m {
                    self.gram[(i - 1, j - 1)] = self.gram[(i, j)];
                }
            }
        }
        let k = self.df.len();
        for (i, col) in self.df.iter().enumerate() {
            let d = col.dot(&df);
            self.gram[(i, k)] = d;
            self.gram[(k, i)] = d;
        }
        self.gram[(k, k)] = df.norm_squared();
        self.dv.push_back(dv);
        self.df.push_back(df);
    }

    /// A vector of the right length to receive the next image.
    fn take_buffer(&mut self) -> DVector<f64> {
        self.spare.take().unwrap_or_else(|| DVector::zeros(self.fallback.len()))
    }

    /// Replaces the current point `v` by the next one given its image `t`.
    fn next(&mut self, v: &mut DVector<f64>, t: DVector<f64>) {
        if self.memory == 0 {
            self.spare = Some(std::mem::replace(v, t));
            return;
        }
        let f = &t - &*v;
        let norm = f.norm();
        if self.extrapolated && norm > SAFEGUARD * self.fallback_norm {
            self.reset();
            v.copy_from(&self.fallback);
            self.spare = Some(t);
            return;
        }
        if let Some((mut pv, mut pf)) = self.prev.take() {
            pv -= &*v;
            pv.neg_mut();
            pf -= &f;
            pf.neg_mut();
            self.push(pv, pf);
        }
        self.fallback_norm = norm;
        let m = self.df.len();
        self.extrapolated = false;
        let mut out = std::mem::replace(&mut self.fallback, t);
        out.copy_from(&self.fallback);
        if m > 0 {
            let mut gram = self.gram.view((0, 0), (m, m)).into_owned();
            let scale = gram.diagonal().max();
            for i in 0..m {
                gram[(i, i)] += 1e-10 * scale;
            }
            let rhs = DVector::from_fn(m, |i, _| self.df[i].dot(&f));
            if let Some(chol) = gram.cholesky() {
                let gamma = chol.solve(&rhs);
                for i in 0..m {
                    out.axpy(-gamma[i], &self.dv[i], 1.0);
                    out.axpy(-gamma[i], &self.df[i], 1.0);
                }
                self.extrapolated = true;
            }
        }
        let old = std::mem::replace(v, out);
        self.prev = Some((old, f));
    }
}

/// `argmax_{X >= 0} logdet(X + I) - beta/2 |X - W|_F^2`, plus its eigenvalues.
fn psd_logdet_prox(w: DMatrix<f64>, beta: f64) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(w);
    let vals = eig.eigenvalues.map(|lam| prox_eigenvalue(lam, beta));
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(vals.iter()) {
        col *= v;
    }
    let mut x = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut x);
    (x, vals)
}

/// Non-negative root of `beta (x - lam)(x + 1) = 1`, clamped at zero.
#[inline]
fn prox_eigenvalue(lam: f64, beta: f64) -> f64 {
    if lam <= -1.0 / beta {
        return 0.0;
    }
    let disc = (lam + 1.0) * (lam + 1.0) + 4.0 / beta;
    (0.5 * (lam - 1.0 + disc.sqrt())).max(0.0)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

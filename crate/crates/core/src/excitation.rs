//! Offline data, block-Hankel matrices and the trajectory-membership test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::LtiSystem;

/// Default relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Draws attempted by [`generate_pe_input`] before giving up.
pub const PE_RETRIES: usize = 32;

/// Data length `(m+1)(L+n) - 1` needed for excitation of order `L+n`.
pub fn required_length(m: usize, n: usize, depth: usize) -> usize {
    (m + 1) * (depth + n) - 1
}

/// Block-Hankel matrix of depth `depth`. Column `j` stacks
/// `signal[:, j], signal[:, j+1], ..., signal[:, j+depth-1]`.
pub fn hankel(signal: &DMatrix<f64>, depth: usize) -> Result<DMatrix<f64>> {
    let (d, t) = signal.shape();
    if depth == 0 || depth > t {
        return Err(Error::InsufficientData(format!("depth {depth} for a signal of length {t}")));
    }
    let cols = t - depth + 1;
    Ok(DMatrix::from_fn(d * depth, cols, |r, c| signal[(r % d, c + r / d)]))
}

fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// True iff `H_order(u)` has full row rank `m·order`.
pub fn is_persistently_exciting(u: &DMatrix<f64>, order: usize, tol: f64) -> bool {
    let (m, t) = u.shape();
    if order == 0 || order > t || m * order > t - order + 1 {
        return false;
    }
    match hankel(u, order) {
        Ok(h) => numerical_rank(&h, tol) == m * order,
        Err(_) => false,
    }
}

/// Uniform i.i.d. input inside `bounds`, re-drawn until it is persistently
/// exciting of the requested order.
pub fn generate_pe_input(bounds: &[(f64, f64)], t: usize, order: usize, seed: u64, tol: f64) -> Result<DMatrix<f64>> {
    let m = bounds.len();
    if m == 0 || order == 0 || order > t || m * order > t - order + 1 {
        return Err(Error::InsufficientData(format!(
            "H_{order} of a length-{t} signal with {m} channels cannot reach rank {}",
            m * order
        )));
    }
    if let Some((k, _)) = bounds.iter().enumerate().find(|(_, (l, u))| !(l < u)) {
        return Err(Error::InvalidParam(format!("input channel {k} has an empty range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PE_RETRIES {
        let u = DMatrix::from_fn(m, t, |r, _| rng.gen_range(bounds[r].0..bounds[r].1));
        if is_persistently_exciting(&u, order, tol) {
            return Ok(u);
        }
    }
    Err(Error::NotExciting { order, attempts: PE_RETRIES })
}

/// A recorded input/output trajectory, one column per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSequence {
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl DataSequence {
    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }
}

/// Simulates `sys` from the origin under `u` and records the outputs.
pub fn collect(sys: &LtiSystem, u: &DMatrix<f64>) -> Result<DataSequence> {
    let inputs: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    let trace = sys.simulate(&DVector::zeros(sys.n()), &inputs)?;
    let y = DMatrix::from_columns(&trace.outputs);
    Ok(DataSequence { u: u.clone(), y })
}

/// On-disk form of a [`DataSequence`] with row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataFile {
    pub m: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub order: usize,
    pub config_hash: String,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged data rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl DataFile {
    pub fn new(data: &DataSequence, seed: u64, order: usize, config_hash: String) -> Self {
        DataFile {
            m: data.u.nrows(),
            p: data.y.nrows(),
            t: data.len(),
            seed,
            order,
            config_hash,
            u: rows(&data.u),
            y: rows(&data.y),
        }
    }

    pub fn to_sequence(&self) -> Result<DataSequence> {
        let u = from_rows(&self.u, self.t)?;
        let y = from_rows(&self.y, self.t)?;
        if u.nrows() != self.m || y.nrows() != self.p {
            return Err(Error::Dimension(format!("expected {}+{} rows, found {}+{}", self.m, self.p, u.nrows(), y.nrows())));
        }
        Ok(DataSequence { u, y })
    }
}

/// The depth-`K+N` Hankel matrices of a data set, split into past (`K`)
/// and future (`N`) block rows.
#[derive(Clone, Debug)]
pub struct HankelBlocks {
    pub up: DMatrix<f64>,
    pub uf: DMatrix<f64>,
    pub yp: DMatrix<f64>,
    pub yf: DMatrix<f64>,
    pub k: usize,
    pub horizon: usize,
    pub m: usize,
    pub p: usize,
}

impl HankelBlocks {
    /// Number of Hankel columns, i.e. the length of `g`.
    pub fn cols(&self) -> usize {
        self.up.ncols()
    }

    pub fn depth(&self) -> usize {
        self.k + self.horizon
    }

    /// `[U_p; U_f; Y_p; Y_f]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let rows = (self.m + self.p) * self.depth();
        let mut h = DMatrix::zeros(rows, self.cols());
        let mut r = 0;
        for blk in [&self.up, &self.uf, &self.yp, &self.yf] {
            h.rows_mut(r, blk.nrows()).copy_from(blk);
            r += blk.nrows();
        }
        h
    }
}

/// Splits `H_{K+N}` of the data. `state_dim` is only used to check that the
/// data is long enough for excitation of order `K+N+n`.
pub fn split_blocks(data: &DataSequence, k: usize, horizon: usize, state_dim: usize) -> Result<HankelBlocks> {
    if k < 1 {
        return Err(Error::InvalidParam("K must be at least the observability lag 1".into()));
    }
    if horizon < 1 {
        return Err(Error::InvalidParam("N must be at least 1".into()));
    }
    let (m, t) = data.u.shape();
    let p = data.y.nrows();
    if data.y.ncols() != t {
        return Err(Error::Dimension(format!("u has {t} samples, y has {}", data.y.ncols())));
    }
    let l = k + horizon;
    let need = required_length(m, state_dim, l);
    if t < need {
        return Err(Error::InsufficientData(format!("T = {t} < (m+1)(L+n)-1 = {need}")));
    }
    let hu = hankel(&data.u, l)?;
    let hy = hankel(&data.y, l)?;
    Ok(HankelBlocks {
        up: hu.rows(0, m * k).into_owned(),
        uf: hu.rows(m * k, m * horizon).into_owned(),
        yp: hy.rows(0, p * k).into_owned(),
        yf: hy.rows(p * k, p * horizon).into_owned(),
        k,
        horizon,
        m,
        p,
    })
}

/// Least-squares fit of a window `(u, y)` (columns = time) by Hankel columns.
/// Returns the relative residual `|H g - w| / |w|` (0 for a zero window) and
/// the minimum-norm `g`.
pub fn membership_residual(
    blocks: &HankelBlocks,
    u_win: &DMatrix<f64>,
    y_win: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let l = blocks.depth();
    if u_win.shape() != (blocks.m, l) || y_win.shape() != (blocks.p, l) {
        return Err(Error::Dimension(format!(
            "window {:?}/{:?}, expected ({}, {l})/({}, {l})",
            u_win.shape(),
            y_win.shape(),
            blocks.m,
            blocks.p
        )));
    }
    // Column-major flattening matches the Hankel block-row order.
    let w = DVector::from_iterator((blocks.m + blocks.p) * l, u_win.iter().chain(y_win.iter()).copied());
    let h = blocks.stacked();
    let svd = h.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max();
    let g = svd.solve(&w, eps).map_err(|e| Error::Degenerate(e.to_string()))?;
    let wn = w.norm();
    let res = if wn == 0.0 { 0.0 } else { (&h * &g - &w).norm() / wn };
    Ok((res, g))
}

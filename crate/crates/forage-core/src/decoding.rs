//! Linear decoding of position from recurrent hidden states.
//!
//! For each temporal offset dt, a separate ridge decoder maps the hidden
//! state h_t to the position target at t+dt, in allocentric (displacement
//! from episode start) or egocentric (displacement rotated into the body
//! frame) coordinates. Decoders are trained on the first 75% of each
//! episode's usable timesteps and evaluated on the final 25%.
//!
//! Two reference levels accompany every decoder RMSE:
//! - `baseline`: predict the current position plus the train-set mean
//!   displacement over dt steps (position-informed).
//! - `chance`: predict the train-set mean target (position-uninformed), the
//!   average-displacement chance level used for control comparisons.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::env::state::Facing;
use crate::error::{Error, Result};
use crate::telemetry::EpisodeLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Allocentric,
    Egocentric,
}

/// Default cross-validation grid: 1e-2 .. 1e4 in decade steps.
pub fn default_alpha_grid() -> Vec<f64> {
    (-2..=4).map(|e| 10f64.powi(e)).collect()
}

/// Paired hidden states and targets, split per episode into a train prefix
/// (75%) and test suffix (25%).
#[derive(Debug, Clone)]
pub struct DecodingDataset {
    pub train_h: DMatrix<f64>,
    pub train_y: DMatrix<f64>,
    /// "Current position" per train row (allocentric delta at t; zeros in the
    /// egocentric frame), used by the displacement baseline.
    pub train_now: DMatrix<f64>,
    pub test_h: DMatrix<f64>,
    pub test_y: DMatrix<f64>,
    pub test_now: DMatrix<f64>,
    pub dt: i64,
    pub frame: Frame,
}

/// Linear decoder `f(h) = A h + b` with ridge strength alpha.
#[derive(Debug, Clone)]
pub struct DecoderModel {
    /// 2 x hidden_dim weights.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub alpha: f64,
    pub dt: i64,
    pub frame: Frame,
    /// Fewer than hidden_dim/4 training rows: solvable but flagged.
    pub underdetermined: bool,
}

/// Facing at each logged step, reconstructed from the action column:
/// move actions set the facing (even when the move was blocked), nothing
/// else changes it, and episodes start facing north.
pub fn facing_series(log: &EpisodeLog) -> Vec<Facing> {
    let mut facing = Facing::North;
    log.records
        .iter()
        .map(|r| {
            if let Some(dir) = r.env.action.move_facing() {
                facing = dir;
            }
            facing
        })
        .collect()
}

/// Rotate a world displacement into the body frame (forward = +y, right =
/// +x) for the given facing.
pub fn rotate_to_body(d: (f64, f64), facing: Facing) -> (f64, f64) {
    let (dx, dy) = d;
    match facing {
        Facing::North => (dx, -dy),
        Facing::East => (dy, dx),
        Facing::South => (-dx, dy),
        Facing::West => (-dy, -dx),
    }
}

/// Build the decoding dataset for one offset. Rows require a logged hidden
/// state at t (honoring the logging stride) and a record at t+dt within the
/// same episode.
pub fn build_dataset(logs: &[EpisodeLog], dt: i64, frame: Frame) -> Result<DecodingDataset> {
    let mut train_rows: Vec<(Vec<f64>, [f64; 2], [f64; 2])> = Vec::new();
    let mut test_rows: Vec<(Vec<f64>, [f64; 2], [f64; 2])> = Vec::new();
    let mut hidden_dim = 0usize;

    for log in logs {
        if log.header.hidden_dim == 0 {
            continue;
        }
        hidden_dim = log.header.hidden_dim;
        let facings = facing_series(log);
        let len = log.records.len() as i64;
        let mut usable: Vec<(usize, [f64; 2], [f64; 2])> = Vec::new();
        for (t, record) in log.records.iter().enumerate() {
            if record.hidden_state_ref < 0 {
                continue;
            }
            let target_t = t as i64 + dt;
            if target_t < 0 || target_t >= len {
                continue;
            }
            let target = &log.records[target_t as usize].env;
            let here = &record.env;
            let (y, now) = match frame {
                Frame::Allocentric => (
                    [f64::from(target.delta_x), f64::from(target.delta_y)],
                    [f64::from(here.delta_x), f64::from(here.delta_y)],
                ),
                Frame::Egocentric => {
                    let d = (
                        f64::from(target.player_pos.x - here.player_pos.x),
                        f64::from(target.player_pos.y - here.player_pos.y),
                    );
                    let r = rotate_to_body(d, facings[t]);
                    ([r.0, r.1], [0.0, 0.0])
                }
            };
            usable.push((record.hidden_state_ref as usize, y, now));
        }
        let n = usable.len();
        let train_count = n * 3 / 4;
        for (i, (href, y, now)) in usable.into_iter().enumerate() {
            let h = log.hidden_states[href].iter().map(|&v| f64::from(v)).collect();
            if i < train_count {
                train_rows.push((h, y, now));
            } else {
                test_rows.push((h, y, now));
            }
        }
    }
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Decoding(format!(
            "empty dataset for dt={dt}: offset exceeds every episode length or no hidden states logged"
        )));
    }
    let pack = |rows: &[(Vec<f64>, [f64; 2], [f64; 2])]| {
        let n = rows.len();
        let mut h = DMatrix::zeros(n, hidden_dim);
        let mut y = DMatrix::zeros(n, 2);
        let mut now = DMatrix::zeros(n, 2);
        for (i, (hr, yr, nr)) in rows.iter().enumerate() {
            for (j, &v) in hr.iter().enumerate() {
                h[(i, j)] = v;
            }
            y[(i, 0)] = yr[0];
            y[(i, 1)] = yr[1];
            now[(i, 0)] = nr[0];
            now[(i, 1)] = nr[1];
        }
        (h, y, now)
    };
    let (train_h, train_y, train_now) = pack(&train_rows);
    let (test_h, test_y, test_now) = pack(&test_rows);
    Ok(DecodingDataset {
        train_h,
        train_y,
        train_now,
        test_h,
        test_y,
        test_now,
        dt,
        frame,
    })
}

/// Closed-form ridge fit on centered data; the intercept is unpenalized.
/// `A = Y_c^T H_c (H_c^T H_c + alpha I)^{-1}`, `b = mean(Y) - A mean(H)`.
pub fn fit_ridge(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    alpha: f64,
    dt: i64,
    frame: Frame,
) -> Result<DecoderModel> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("ridge alpha must be > 0".into()));
    }
    let n = h.nrows();
    let p = h.ncols();
    if n == 0 {
        return Err(Error::Decoding("cannot fit on an empty set".into()));
    }
    let h_mean = h.row_mean();
    let y_mean = y.row_mean();
    let mut hc = h.clone();
    for mut row in hc.row_iter_mut() {
        row -= &h_mean;
    }
    let mut yc = y.clone();
    for mut row in yc.row_iter_mut() {
        row -= &y_mean;
    }
    let mut gram = hc.transpose() * &hc;
    for i in 0..p {
        gram[(i, i)] += alpha;
    }
    let rhs = hc.transpose() * &yc; // p x 2
    let chol = gram.clone().cholesky().ok_or_else(|| {
        let mut dmin = f64::INFINITY;
        let mut dmax: f64 = 0.0;
        for i in 0..p {
            dmin = dmin.min(gram[(i, i)]);
            dmax = dmax.max(gram[(i, i)]);
        }
        Error::Solver(format!(
            "ridge system singular at alpha={alpha} (diag range {dmin:.3e}..{dmax:.3e}, condition >= {:.3e})",
            dmax / dmin.max(f64::MIN_POSITIVE)
        ))
    })?;
    let a_t = chol.solve(&rhs); // p x 2
    let a = a_t.transpose(); // 2 x p
    let b = DVector::from_iterator(
        2,
        (0..2).map(|k| y_mean[k] - (&a.row(k) * h_mean.transpose())[(0, 0)]),
    );
    Ok(DecoderModel {
        a,
        b,
        alpha,
        dt,
        frame,
        underdetermined: n * 4 < p,
    })
}

impl DecoderModel {
    pub fn predict(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = h * self.a.transpose();
        for mut row in out.row_iter_mut() {
            row[(0, 0)] += self.b[0];
            row[(0, 1)] += self.b[1];
        }
        out
    }

    /// Per-unit contribution: L2 norm of each column of A.
    pub fn unit_weight_norms(&self) -> DVector<f64> {
        DVector::from_iterator(self.a.ncols(), self.a.column_iter().map(|c| c.norm()))
    }
}

/// Per-coordinate RMSE: `sqrt(mean(||pred - y||^2 / 2))`.
pub fn evaluate_rmse(model: &DecoderModel, h: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if h.nrows() == 0 {
        return Err(Error::Decoding("empty evaluation set".into()));
    }
    let pred = model.predict(h);
    Ok(rmse_from_predictions(&pred, y))
}

fn rmse_from_predictions(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = y.nrows() as f64;
    let mut acc = 0.0;
    for i in 0..y.nrows() {
        let dx = pred[(i, 0)] - y[(i, 0)];
        let dy = pred[(i, 1)] - y[(i, 1)];
        acc += (dx * dx + dy * dy) / 2.0;
    }
    (acc / n).sqrt()
}

/// Displacement baseline: predict the current position plus the train-set
/// mean displacement over dt steps. Zero error at dt = 0 by construction.
pub fn baseline_rmse(ds: &DecodingDataset) -> f64 {
    let n_train = ds.train_y.nrows() as f64;
    let mut mean_disp = [0.0f64; 2];
    for i in 0..ds.train_y.nrows() {
        mean_disp[0] += ds.train_y[(i, 0)] - ds.train_now[(i, 0)];
        mean_disp[1] += ds.train_y[(i, 1)] - ds.train_now[(i, 1)];
    }
    mean_disp[0] /= n_train;
    mean_disp[1] /= n_train;
    let mut pred = ds.test_now.clone();
    for i in 0..pred.nrows() {
        pred[(i, 0)] += mean_disp[0];
        pred[(i, 1)] += mean_disp[1];
    }
    rmse_from_predictions(&pred, &ds.test_y)
}

/// Position-uninformed chance level: predict the train-set mean target.
pub fn chance_rmse(ds: &DecodingDataset) -> f64 {
    let mean = ds.train_y.row_mean();
    let mut pred = DMatrix::zeros(ds.test_y.nrows(), 2);
    for i in 0..pred.nrows() {
        pred[(i, 0)] = mean[0];
        pred[(i, 1)] = mean[1];
    }
    rmse_from_predictions(&pred, &ds.test_y)
}

/// Pick alpha by k-fold cross-validation on the train split (contiguous
/// blocks, deterministic). Ties resolve to the earliest grid entry.
pub fn cross_validate_alpha(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<f64> {
    let n = h.nrows();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    let folds = folds.min(n).max(2);
    if n < folds {
        return Ok(grid[grid.len() / 2]);
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &alpha in grid {
        let mut total = 0.0;
        let mut used = 0usize;
        for f in 0..folds {
            let lo = f * n / folds;
            let hi = (f + 1) * n / folds;
            if hi <= lo {
                continue;
            }
            let val_idx: Vec<usize> = (lo..hi).collect();
            let fit_idx: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
            let take = |m: &DMatrix<f64>, idx: &[usize]| {
                DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
            };
            let model = fit_ridge(&take(h, &fit_idx), &take(y, &fit_idx), alpha, 0, Frame::Allocentric)?;
            total += evaluate_rmse(&model, &take(h, &val_idx), &take(y, &val_idx))?;
            used += 1;
        }
        let mean = total / used.max(1) as f64;
        if mean < best.0 {
            best = (mean, alpha);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub dt: i64,
    pub rmse: f64,
    pub baseline: f64,
    pub chance: f64,
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// One decoder per offset: cross-validated alpha, fit on the train split,
/// RMSE on the test split, with baseline and chance columns.
pub fn horizon_sweep(
    logs: &[EpisodeLog],
    dts: &[i64],
    frame: Frame,
    alpha_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let ds = build_dataset(logs, dt, frame)?;
        let alpha = cross_validate_alpha(&ds.train_h, &ds.train_y, alpha_grid, 5)?;
        let model = fit_ridge(&ds.train_h, &ds.train_y, alpha, dt, frame)?;
        let rmse = evaluate_rmse(&model, &ds.test_h, &ds.test_y)?;
        rows.push(SweepRow {
            dt,
            rmse,
            baseline: baseline_rmse(&ds),
            chance: chance_rmse(&ds),
            alpha,
            n_train: ds.train_h.nrows(),
            n_test: ds.test_h.nrows(),
        });
    }
    Ok(rows)
}

/// Per-unit weight-norm table (unit x model), for coefficient profiles
/// aligned by unit id.
pub fn coefficient_profile(models: &[DecoderModel]) -> Result<DMatrix<f64>> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models".into()));
    }
    let p = models[0].a.ncols();
    if models.iter().any(|m| m.a.ncols() != p) {
        return Err(Error::Decoding("models disagree on hidden_dim".into()));
    }
    let mut out = DMatrix::zeros(p, models.len());
    for (k, m) in models.iter().enumerate() {
        out.set_column(k, &m.unit_weight_norms());
    }
    Ok(out)
}

/// Cosine similarity between the unit-weight-magnitude vectors of two models
/// (e.g. the -dt and +dt decoders).
pub fn overlap_score(a: &DecoderModel, b: &DecoderModel) -> Result<f64> {
    if a.a.ncols() != b.a.ncols() {
        return Err(Error::Decoding("models disagree on hidden_dim".into()));
    }
    let u = a.unit_weight_norms();
    let v = b.unit_weight_norms();
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(u.dot(&v) / (nu * nv))
}

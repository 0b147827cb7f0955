//! The PPO-RNN function approximator.
//!
//! One tanh encoder layer feeds a single-layer GRU (512 units by default);
//! policy, value and auxiliary position heads read the hidden state. Forward
//! and reverse-mode (truncated BPTT) passes are written out explicitly for
//! this fixed architecture; gradients are exact and checked against finite
//! differences in the test suite.
//!
//! The net is generic over the float type: f32 for training, f64 for
//! gradient-check tests.

mod checkpoint;
mod prune;

pub use checkpoint::{checkpoint_load, checkpoint_manifest, checkpoint_save, CheckpointManifest};
pub use prune::{make_prune_mask, PruneMask};

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Float scalar the net can run in.
pub trait Scalar:
    num_traits::Float + num_traits::NumCast + ndarray::LinalgScalar + ndarray::ScalarOperand
{
}
impl<T> Scalar for T where
    T: num_traits::Float + num_traits::NumCast + ndarray::LinalgScalar + ndarray::ScalarOperand
{
}

#[inline]
pub(crate) fn t<T: Scalar>(x: f64) -> T {
    T::from(x).unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub action_count: usize,
    /// When false the GRU is bypassed and `h` is the encoder output
    /// (the memory-ablation variant).
    pub recurrent: bool,
    /// When false the auxiliary position head is absent from losses and logs.
    pub aux_enabled: bool,
}

impl NetConfig {
    /// Exact trainable parameter count (mask not included).
    pub fn parameter_count(&self) -> usize {
        let i = self.input_dim;
        let h = self.hidden_dim;
        let a = self.action_count;
        let enc = i * h + h;
        let gru = if self.recurrent { 3 * (h * h + h * h + h) } else { 0 };
        let heads = (h * a + a) + (h + 1) + (h * 2 + 2);
        enc + gru + heads
    }
}

/// All trainable tensors. Weight matrices are stored input-major
/// (`in_dim x out_dim`), so a batched forward is `x.dot(&w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams<T: Scalar> {
    pub config: NetConfig,
    pub w_enc: Array2<T>,
    pub b_enc: Array1<T>,
    pub w_z: Array2<T>,
    pub u_z: Array2<T>,
    pub b_z: Array1<T>,
    pub w_r: Array2<T>,
    pub u_r: Array2<T>,
    pub b_r: Array1<T>,
    pub w_c: Array2<T>,
    pub u_c: Array2<T>,
    pub b_c: Array1<T>,
    pub w_pi: Array2<T>,
    pub b_pi: Array1<T>,
    pub w_v: Array2<T>,
    pub b_v: Array1<T>,
    pub w_aux: Array2<T>,
    pub b_aux: Array1<T>,
    pub mask: PruneMask<T>,
}

/// Names and shapes of the weight matrices, in a fixed order shared by the
/// pruning mask, optimizer state and checkpoints.
pub const MATRIX_NAMES: [&str; 10] = [
    "w_enc", "w_z", "u_z", "w_r", "u_r", "w_c", "u_c", "w_pi", "w_v", "w_aux",
];
pub const VECTOR_NAMES: [&str; 7] = ["b_enc", "b_z", "b_r", "b_c", "b_pi", "b_v", "b_aux"];

macro_rules! matrix_fields {
    ($s:expr) => {
        [
            &$s.w_enc, &$s.w_z, &$s.u_z, &$s.w_r, &$s.u_r, &$s.w_c, &$s.u_c, &$s.w_pi, &$s.w_v,
            &$s.w_aux,
        ]
    };
}
macro_rules! matrix_fields_mut {
    ($s:expr) => {
        [
            &mut $s.w_enc,
            &mut $s.w_z,
            &mut $s.u_z,
            &mut $s.w_r,
            &mut $s.u_r,
            &mut $s.w_c,
            &mut $s.u_c,
            &mut $s.w_pi,
            &mut $s.w_v,
            &mut $s.w_aux,
        ]
    };
}
macro_rules! vector_fields {
    ($s:expr) => {
        [&$s.b_enc, &$s.b_z, &$s.b_r, &$s.b_c, &$s.b_pi, &$s.b_v, &$s.b_aux]
    };
}
macro_rules! vector_fields_mut {
    ($s:expr) => {
        [
            &mut $s.b_enc,
            &mut $s.b_z,
            &mut $s.b_r,
            &mut $s.b_c,
            &mut $s.b_pi,
            &mut $s.b_v,
            &mut $s.b_aux,
        ]
    };
}

fn sigmoid<T: Scalar>(x: T) -> T {
    t::<T>(1.0) / (t::<T>(1.0) + (-x).exp())
}

impl<T: Scalar> AgentParams<T> {
    /// Zero-initialized parameters (useful for tests and as a shape witness).
    pub fn zeros(config: NetConfig) -> Self {
        let i = config.input_dim;
        let h = config.hidden_dim;
        let a = config.action_count;
        Self {
            mask: PruneMask::all_ones(&config),
            w_enc: Array2::zeros((i, h)),
            b_enc: Array1::zeros(h),
            w_z: Array2::zeros((h, h)),
            u_z: Array2::zeros((h, h)),
            b_z: Array1::zeros(h),
            w_r: Array2::zeros((h, h)),
            u_r: Array2::zeros((h, h)),
            b_r: Array1::zeros(h),
            w_c: Array2::zeros((h, h)),
            u_c: Array2::zeros((h, h)),
            b_c: Array1::zeros(h),
            w_pi: Array2::zeros((h, a)),
            b_pi: Array1::zeros(a),
            w_v: Array2::zeros((h, 1)),
            b_v: Array1::zeros(1),
            w_aux: Array2::zeros((h, 2)),
            b_aux: Array1::zeros(2),
            config,
        }
    }

    /// Standard initialization: orthogonal recurrent matrices, scaled-uniform
    /// fan-in elsewhere (variance 1/fan_in), zero biases.
    pub fn init(config: NetConfig, stream: &mut RngStream) -> Self {
        let mut params = Self::zeros(config);
        let uniform_fan_in = |m: &mut Array2<T>, stream: &mut RngStream| {
            let fan_in = m.nrows().max(1) as f64;
            let limit = (3.0 / fan_in).sqrt();
            for v in m.iter_mut() {
                *v = t((stream.next_uniform() * 2.0 - 1.0) * limit);
            }
        };
        uniform_fan_in(&mut params.w_enc, stream);
        uniform_fan_in(&mut params.w_z, stream);
        uniform_fan_in(&mut params.w_r, stream);
        uniform_fan_in(&mut params.w_c, stream);
        uniform_fan_in(&mut params.w_pi, stream);
        uniform_fan_in(&mut params.w_v, stream);
        uniform_fan_in(&mut params.w_aux, stream);
        for m in [&mut params.u_z, &mut params.u_r, &mut params.u_c] {
            orthogonal_into(m, stream);
        }
        params
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    /// Zero hidden state for a batch of `n` rows.
    pub fn initial_hidden(&self, n: usize) -> Array2<T> {
        Array2::zeros((n, self.config.hidden_dim))
    }

    /// Re-apply the pruning mask to the weight matrices.
    pub fn apply_mask(&mut self) {
        let mask = self.mask.clone();
        for (w, m) in matrix_fields_mut!(self).into_iter().zip(mask.matrices()) {
            w.zip_mut_with(m, |a, &b| *a = *a * b);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.config.parameter_count()
    }

    /// One recurrent step for a batch of rows.
    pub fn forward_step(&self, h_prev: &Array2<T>, x: &Array2<T>) -> (Array2<T>, StepCache<T>) {
        let e = (x.dot(&self.w_enc) + &self.b_enc).mapv(|v| v.tanh());
        if !self.config.recurrent {
            let h = e.clone();
            return (
                h.clone(),
                StepCache {
                    x: x.clone(),
                    e,
                    z: Array2::zeros((0, 0)),
                    r: Array2::zeros((0, 0)),
                    c: Array2::zeros((0, 0)),
                    h_prev: h_prev.clone(),
                    h,
                },
            );
        }
        let z = (e.dot(&self.w_z) + h_prev.dot(&self.u_z) + &self.b_z).mapv(sigmoid);
        let r = (e.dot(&self.w_r) + h_prev.dot(&self.u_r) + &self.b_r).mapv(sigmoid);
        let rh = &r * h_prev;
        let c = (e.dot(&self.w_c) + rh.dot(&self.u_c) + &self.b_c).mapv(|v| v.tanh());
        let one = t::<T>(1.0);
        let h = (z.mapv(|v| one - v)) * h_prev + &z * &c;
        (
            h.clone(),
            StepCache {
                x: x.clone(),
                e,
                z,
                r,
                c,
                h_prev: h_prev.clone(),
                h,
            },
        )
    }

    /// Head outputs for a batch of hidden states.
    pub fn heads(&self, h: &Array2<T>) -> (Array2<T>, Array1<T>, Array2<T>) {
        let logits = h.dot(&self.w_pi) + &self.b_pi;
        let value = (h.dot(&self.w_v) + &self.b_v).index_axis_move(Axis(1), 0);
        let pos = h.dot(&self.w_aux) + &self.b_aux;
        (logits, value, pos)
    }

    /// Unrolled forward over a window. `resets[t]` holds per-row carry flags
    /// (0 resets the hidden state before step `t`, 1 carries it over).
    /// Returns the cache needed by `backward_sequence` plus per-step heads.
    pub fn forward_sequence(
        &self,
        h0: &Array2<T>,
        xs: &[Array2<T>],
        resets: &[Array1<T>],
    ) -> Result<(SequenceCache<T>, SequenceOutputs<T>)> {
        assert_eq!(xs.len(), resets.len());
        let mut cache = SequenceCache {
            steps: Vec::with_capacity(xs.len()),
            resets: resets.to_vec(),
        };
        let mut outputs = SequenceOutputs {
            logits: Vec::with_capacity(xs.len()),
            values: Vec::with_capacity(xs.len()),
            pos: Vec::with_capacity(xs.len()),
            final_h: Array2::zeros((0, 0)),
        };
        let mut h = h0.clone();
        for (x, reset) in xs.iter().zip(resets) {
            let carried = &h * &reset.view().insert_axis(Axis(1));
            let (h_new, step_cache) = self.forward_step(&carried, x);
            let (logits, value, pos) = self.heads(&h_new);
            outputs.logits.push(logits);
            outputs.values.push(value);
            outputs.pos.push(pos);
            cache.steps.push(step_cache);
            h = h_new;
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault(
                "non-finite activations in recurrent forward pass".into(),
            ));
        }
        outputs.final_h = h;
        Ok((cache, outputs))
    }

    /// Exact reverse-mode gradients of a scalar loss through the unrolled
    /// window, given the loss gradients w.r.t. each step's head outputs.
    /// Masked weights receive exactly zero gradient.
    pub fn backward_sequence(
        &self,
        cache: &SequenceCache<T>,
        dlogits: &[Array2<T>],
        dvalues: &[Array1<T>],
        dpos: Option<&[Array2<T>]>,
    ) -> ParamGrads<T> {
        let steps = cache.steps.len();
        assert_eq!(dlogits.len(), steps);
        assert_eq!(dvalues.len(), steps);
        let mut g = ParamGrads::zeros(&self.config);
        let one = t::<T>(1.0);
        let mut dh_carry: Array2<T> = Array2::zeros(cache.steps[0].h.raw_dim());
        for ti in (0..steps).rev() {
            let sc = &cache.steps[ti];
            // Head contributions.
            let dl = &dlogits[ti];
            let dv = &dvalues[ti];
            let mut dh = dl.dot(&self.w_pi.t()) + dh_carry;
            g.w_pi = g.w_pi + sc.h.t().dot(dl);
            g.b_pi = g.b_pi + dl.sum_axis(Axis(0));
            let dv2 = dv.view().insert_axis(Axis(1));
            dh = dh + dv2.dot(&self.w_v.t());
            g.w_v = g.w_v + sc.h.t().dot(&dv2);
            g.b_v = g.b_v + dv2.sum_axis(Axis(0));
            if let Some(dpos) = dpos {
                let dp = &dpos[ti];
                dh = dh + dp.dot(&self.w_aux.t());
                g.w_aux = g.w_aux + sc.h.t().dot(dp);
                g.b_aux = g.b_aux + dp.sum_axis(Axis(0));
            }

            let (de, dh_prev) = if self.config.recurrent {
                // h = (1-z) h_prev + z c
                let dz = &dh * &(&sc.c - &sc.h_prev);
                let dc = &dh * &sc.z;
                let mut dh_prev = &dh * &sc.z.mapv(|v| one - v);
                let dc_pre = dc * sc.c.mapv(|v| one - v * v);
                let rh = &sc.r * &sc.h_prev;
                g.w_c = g.w_c + sc.e.t().dot(&dc_pre);
                g.u_c = g.u_c + rh.t().dot(&dc_pre);
                g.b_c = g.b_c + dc_pre.sum_axis(Axis(0));
                let mut de = dc_pre.dot(&self.w_c.t());
                let d_rh = dc_pre.dot(&self.u_c.t());
                let dr = &d_rh * &sc.h_prev;
                dh_prev = dh_prev + d_rh * &sc.r;
                let dz_pre = dz * sc.z.mapv(|v| v * (one - v));
                let dr_pre = dr * sc.r.mapv(|v| v * (one - v));
                g.w_z = g.w_z + sc.e.t().dot(&dz_pre);
                g.u_z = g.u_z + sc.h_prev.t().dot(&dz_pre);
                g.b_z = g.b_z + dz_pre.sum_axis(Axis(0));
                g.w_r = g.w_r + sc.e.t().dot(&dr_pre);
                g.u_r = g.u_r + sc.h_prev.t().dot(&dr_pre);
                g.b_r = g.b_r + dr_pre.sum_axis(Axis(0));
                de = de + dz_pre.dot(&self.w_z.t()) + dr_pre.dot(&self.w_r.t());
                dh_prev = dh_prev + dz_pre.dot(&self.u_z.t()) + dr_pre.dot(&self.u_r.t());
                (de, dh_prev)
            } else {
                (dh, Array2::zeros(cache.steps[0].h.raw_dim()))
            };

            let de_pre = de * sc.e.mapv(|v| one - v * v);
            g.w_enc = g.w_enc + sc.x.t().dot(&de_pre);
            g.b_enc = g.b_enc + de_pre.sum_axis(Axis(0));

            // Gradient does not flow across a hidden-state reset.
            dh_carry = dh_prev * &cache.resets[ti].view().insert_axis(Axis(1));
        }
        g.apply_mask(&self.mask);
        g
    }
}

/// Orthogonal init via QR of a standard-normal matrix, sign-corrected so the
/// decomposition is unique.
fn orthogonal_into<T: Scalar>(m: &mut Array2<T>, stream: &mut RngStream) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "orthogonal init expects square recurrent matrices");
    let gaussian = nalgebra::DMatrix::from_fn(n, n, |_, _| stream.next_gaussian());
    let qr = gaussian.qr();
    let q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            m[(i, j)] = t(q[(i, j)] * sign);
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepCache<T: Scalar> {
    pub x: Array2<T>,
    pub e: Array2<T>,
    pub z: Array2<T>,
    pub r: Array2<T>,
    pub c: Array2<T>,
    /// Effective (post-reset) previous hidden state.
    pub h_prev: Array2<T>,
    pub h: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct SequenceCache<T: Scalar> {
    pub steps: Vec<StepCache<T>>,
    pub resets: Vec<Array1<T>>,
}

#[derive(Debug, Clone)]
pub struct SequenceOutputs<T: Scalar> {
    pub logits: Vec<Array2<T>>,
    pub values: Vec<Array1<T>>,
    pub pos: Vec<Array2<T>>,
    pub final_h: Array2<T>,
}

/// Gradient (or optimizer-moment) tensors congruent to `AgentParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T: Scalar> {
    pub w_enc: Array2<T>,
    pub b_enc: Array1<T>,
    pub w_z: Array2<T>,
    pub u_z: Array2<T>,
    pub b_z: Array1<T>,
    pub w_r: Array2<T>,
    pub u_r: Array2<T>,
    pub b_r: Array1<T>,
    pub w_c: Array2<T>,
    pub u_c: Array2<T>,
    pub b_c: Array1<T>,
    pub w_pi: Array2<T>,
    pub b_pi: Array1<T>,
    pub w_v: Array2<T>,
    pub b_v: Array1<T>,
    pub w_aux: Array2<T>,
    pub b_aux: Array1<T>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros(config: &NetConfig) -> Self {
        let p = AgentParams::<T>::zeros(config.clone());
        Self {
            w_enc: p.w_enc,
            b_enc: p.b_enc,
            w_z: p.w_z,
            u_z: p.u_z,
            b_z: p.b_z,
            w_r: p.w_r,
            u_r: p.u_r,
            b_r: p.b_r,
            w_c: p.w_c,
            u_c: p.u_c,
            b_c: p.b_c,
            w_pi: p.w_pi,
            b_pi: p.b_pi,
            w_v: p.w_v,
            b_v: p.b_v,
            w_aux: p.w_aux,
            b_aux: p.b_aux,
        }
    }

    pub fn matrices(&self) -> [&Array2<T>; 10] {
        matrix_fields!(self)
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<T>; 10] {
        matrix_fields_mut!(self)
    }

    pub fn vectors(&self) -> [&Array1<T>; 7] {
        vector_fields!(self)
    }

    pub fn vectors_mut(&mut self) -> [&mut Array1<T>; 7] {
        vector_fields_mut!(self)
    }

    pub fn apply_mask(&mut self, mask: &PruneMask<T>) {
        for (g, m) in self.matrices_mut().into_iter().zip(mask.matrices()) {
            g.zip_mut_with(m, |a, &b| *a = *a * b);
        }
    }

    /// Global L2 norm over every gradient entry.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for m in self.matrices() {
            for &v in m.iter() {
                let v: f64 = num_traits::NumCast::from(v).unwrap();
                acc += v * v;
            }
        }
        for v in self.vectors() {
            for &x in v.iter() {
                let x: f64 = num_traits::NumCast::from(x).unwrap();
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for m in self.matrices_mut() {
            *m = &*m * s;
        }
        for v in self.vectors_mut() {
            *v = &*v * s;
        }
    }

    pub fn add(&mut self, other: &ParamGrads<T>) {
        for (a, b) in self.matrices_mut().into_iter().zip(other.matrices()) {
            *a = &*a + b;
        }
        for (a, b) in self.vectors_mut().into_iter().zip(other.vectors()) {
            *a = &*a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.vectors().iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl<T: Scalar> AgentParams<T> {
    pub fn matrices(&self) -> [&Array2<T>; 10] {
        matrix_fields!(self)
    }

    pub fn matrices_mut(&mut self) -> [&mut Array2<T>; 10] {
        matrix_fields_mut!(self)
    }

    pub fn vectors(&self) -> [&Array1<T>; 7] {
        vector_fields!(self)
    }

    pub fn vectors_mut(&mut self) -> [&mut Array1<T>; 7] {
        vector_fields_mut!(self)
    }

    /// Convert every tensor to a new scalar type (used by f64 gradient
    /// checks seeded from f32 weights and by checkpoint IO).
    pub fn cast<U: Scalar>(&self) -> AgentParams<U> {
        let conv2 = |m: &Array2<T>| m.mapv(|v| U::from(v).unwrap());
        let conv1 = |m: &Array1<T>| m.mapv(|v| U::from(v).unwrap());
        AgentParams {
            config: self.config.clone(),
            w_enc: conv2(&self.w_enc),
            b_enc: conv1(&self.b_enc),
            w_z: conv2(&self.w_z),
            u_z: conv2(&self.u_z),
            b_z: conv1(&self.b_z),
            w_r: conv2(&self.w_r),
            u_r: conv2(&self.u_r),
            b_r: conv1(&self.b_r),
            w_c: conv2(&self.w_c),
            u_c: conv2(&self.u_c),
            b_c: conv1(&self.b_c),
            w_pi: conv2(&self.w_pi),
            b_pi: conv1(&self.b_pi),
            w_v: conv2(&self.w_v),
            b_v: conv1(&self.b_v),
            w_aux: conv2(&self.w_aux),
            b_aux: conv1(&self.b_aux),
            mask: self.mask.cast(),
        }
    }
}

/// Softmax over the last axis, numerically stabilized.
pub fn softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

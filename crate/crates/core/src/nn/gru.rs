//! Gated recurrent unit shared across all rows of a batch.
//!
//! Sequences are time-major: `[W][M][F]` for inputs and `[W][M][H]` for
//! hidden states, `M` being the number of independent rows (nodes times
//! windows). Input matrices are `H x F`, hidden matrices `H x H`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::Param;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Param,
    pub u_z: Param,
    pub w_r: Param,
    pub u_r: Param,
    pub w: Param,
    pub u: Param,
    pub b_z: Option<Param>,
    pub b_r: Option<Param>,
    pub b_h: Option<Param>,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize, bias: bool) -> Self {
        let wi = || Param::zeros(&[hidden, input]);
        let wh = || Param::zeros(&[hidden, hidden]);
        let b = || bias.then(|| Param::zeros(&[hidden]));
        Self {
            w_z: wi(),
            u_z: wh(),
            w_r: wi(),
            u_r: wh(),
            w: wi(),
            u: wh(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, bias: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden, bias);
        p.w_z = Param::glorot(&[hidden, input], input, hidden, rng);
        p.u_z = Param::glorot(&[hidden, hidden], hidden, hidden, rng);
        p.w_r = Param::glorot(&[hidden, input], input, hidden, rng);
        p.u_r = Param::glorot(&[hidden, hidden], hidden, hidden, rng);
        p.w = Param::glorot(&[hidden, input], input, hidden, rng);
        p.u = Param::glorot(&[hidden, hidden], hidden, hidden, rng);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.shape[0]
    }

    pub fn validate(&self) -> Result<()> {
        let (h, f) = (self.hidden_dim(), self.input_dim());
        for (name, p) in self.named_params("gru") {
            let want: Vec<usize> = if name.starts_with("gru.w") {
                vec![h, f]
            } else if name.starts_with("gru.u") {
                vec![h, h]
            } else {
                vec![h]
            };
            if p.shape != want || p.value.len() != want.iter().product::<usize>() {
                return Err(Error::Shape(format!("{name} has shape {:?}, expected {want:?}", p.shape)));
            }
            if p.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} contains non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.w,
            &mut self.u,
        ];
        for b in [&mut self.b_z, &mut self.b_r, &mut self.b_h].into_iter().flatten() {
            v.push(b);
        }
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut v = vec![
            (format!("{prefix}.w_z"), &self.w_z),
            (format!("{prefix}.u_z"), &self.u_z),
            (format!("{prefix}.w_r"), &self.w_r),
            (format!("{prefix}.u_r"), &self.u_r),
            (format!("{prefix}.w"), &self.w),
            (format!("{prefix}.u"), &self.u),
        ];
        for (n, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            if let Some(b) = b {
                v.push((format!("{prefix}.{n}"), b));
            }
        }
        v
    }
}

/// Gate activations of one step over `M` rows.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Candidate state `h′`.
    pub candidate: Vec<f64>,
    /// `h_prev Uᵀ`, needed for the reset-gate gradient.
    pub uh: Vec<f64>,
}

fn add_bias(y: &mut [f64], b: Option<&Param>, h: usize) {
    if let Some(b) = b {
        for row in y.chunks_mut(h) {
            for (v, bv) in row.iter_mut().zip(&b.value) {
                *v += bv;
            }
        }
    }
}

fn step(p: &GruParams, x: &[f64], h_prev: &[f64], m: usize) -> (Vec<f64>, GruStepCache) {
    let (f, h) = (p.input_dim(), p.hidden_dim());
    let mut z = vec![0.0; m * h];
    gemm_nt(m, f, h, x, &p.w_z.value, &mut z);
    gemm_nt(m, h, h, h_prev, &p.u_z.value, &mut z);
    add_bias(&mut z, p.b_z.as_ref(), h);
    let mut r = vec![0.0; m * h];
    gemm_nt(m, f, h, x, &p.w_r.value, &mut r);
    gemm_nt(m, h, h, h_prev, &p.u_r.value, &mut r);
    add_bias(&mut r, p.b_r.as_ref(), h);
    for v in z.iter_mut().chain(r.iter_mut()) {
        *v = math::sigmoid(*v);
    }
    let mut uh = vec![0.0; m * h];
    gemm_nt(m, h, h, h_prev, &p.u.value, &mut uh);
    let mut cand = vec![0.0; m * h];
    gemm_nt(m, f, h, x, &p.w.value, &mut cand);
    add_bias(&mut cand, p.b_h.as_ref(), h);
    for i in 0..m * h {
        cand[i] = math::tanh(cand[i] + r[i] * uh[i]);
    }
    let out = (0..m * h).map(|i| z[i] * h_prev[i] + (1.0 - z[i]) * cand[i]).collect();
    (
        out,
        GruStepCache {
            z,
            r,
            candidate: cand,
            uh,
        },
    )
}

/// Backward through one step. Accumulates parameter gradients, adds the input
/// gradient into `dx` and returns the gradient with respect to `h_prev`.
fn step_backward(
    p: &mut GruParams,
    x: &[f64],
    h_prev: &[f64],
    cache: &GruStepCache,
    dh: &[f64],
    m: usize,
    dx: &mut [f64],
) -> Vec<f64> {
    let (f, h) = (p.input_dim(), p.hidden_dim());
    let n = m * h;
    let mut dh_prev = vec![0.0; n];
    let mut daz = vec![0.0; n];
    let mut dar = vec![0.0; n];
    let mut dac = vec![0.0; n];
    let mut duh = vec![0.0; n];
    for i in 0..n {
        let (z, r, c) = (cache.z[i], cache.r[i], cache.candidate[i]);
        dh_prev[i] = dh[i] * z;
        daz[i] = dh[i] * (h_prev[i] - c) * z * (1.0 - z);
        dac[i] = dh[i] * (1.0 - z) * (1.0 - c * c);
        dar[i] = dac[i] * cache.uh[i] * r * (1.0 - r);
        duh[i] = dac[i] * r;
    }
    gemm_tn(m, h, f, &daz, x, &mut p.w_z.grad);
    gemm_tn(m, h, h, &daz, h_prev, &mut p.u_z.grad);
    gemm_tn(m, h, f, &dar, x, &mut p.w_r.grad);
    gemm_tn(m, h, h, &dar, h_prev, &mut p.u_r.grad);
    gemm_tn(m, h, f, &dac, x, &mut p.w.grad);
    gemm_tn(m, h, h, &duh, h_prev, &mut p.u.grad);
    for (b, d) in [(&mut p.b_z, &daz), (&mut p.b_r, &dar), (&mut p.b_h, &dac)] {
        if let Some(b) = b {
            for row in d.chunks(h) {
                for (g, v) in b.grad.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
    }
    gemm_nn(m, h, f, &daz, &p.w_z.value, dx);
    gemm_nn(m, h, f, &dar, &p.w_r.value, dx);
    gemm_nn(m, h, f, &dac, &p.w.value, dx);
    gemm_nn(m, h, h, &daz, &p.u_z.value, &mut dh_prev);
    gemm_nn(m, h, h, &dar, &p.u_r.value, &mut dh_prev);
    gemm_nn(m, h, h, &duh, &p.u.value, &mut dh_prev);
    dh_prev
}

/// One cell applied to a single input vector.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], params: &GruParams) -> Result<(Vec<f64>, GruStepCache)> {
    if x.len() != params.input_dim() || h_prev.len() != params.hidden_dim() {
        return Err(Error::Shape(format!(
            "input {} / hidden {} for a {}->{} cell",
            x.len(),
            h_prev.len(),
            params.input_dim(),
            params.hidden_dim()
        )));
    }
    Ok(step(params, x, h_prev, 1))
}

/// Everything the sequence backward pass needs.
#[derive(Debug, Clone)]
pub struct GruSequenceCache {
    pub steps: usize,
    pub rows: usize,
    x: Vec<f64>,
    /// Hidden states `h_0 .. h_W`, each `M x H`.
    states: Vec<Vec<f64>>,
    gates: Vec<GruStepCache>,
}

impl GruSequenceCache {
    /// Hidden state after step `t` (`0`-based), `M x H`.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t + 1]
    }
}

/// Left fold of the cell over `steps` time steps of `rows` rows, from `h0 = 0`.
/// Returns every hidden state laid out `[W][M][H]`.
pub fn gru_sequence_forward(
    x: &[f64],
    steps: usize,
    rows: usize,
    params: &GruParams,
) -> Result<(Vec<f64>, GruSequenceCache)> {
    if steps == 0 {
        return Err(Error::Shape("empty sequence".into()));
    }
    let (f, h) = (params.input_dim(), params.hidden_dim());
    if x.len() != steps * rows * f {
        return Err(Error::Shape(format!(
            "{} values for a {steps}x{rows}x{f} sequence",
            x.len()
        )));
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(vec![0.0; rows * h]);
    let mut gates = Vec::with_capacity(steps);
    let mut out = Vec::with_capacity(steps * rows * h);
    for t in 0..steps {
        let xt = &x[t * rows * f..(t + 1) * rows * f];
        let (ht, cache) = step(params, xt, &states[t], rows);
        out.extend_from_slice(&ht);
        states.push(ht);
        gates.push(cache);
    }
    Ok((
        out,
        GruSequenceCache {
            steps,
            rows,
            x: x.to_vec(),
            states,
            gates,
        },
    ))
}

/// Backpropagation through time. `dh` is the loss gradient with respect to
/// every emitted state, `[W][M][H]`; returns the input gradient `[W][M][F]`.
pub fn gru_sequence_backward(params: &mut GruParams, cache: &GruSequenceCache, dh: &[f64]) -> Vec<f64> {
    let (f, h) = (params.input_dim(), params.hidden_dim());
    let (w, m) = (cache.steps, cache.rows);
    debug_assert_eq!(dh.len(), w * m * h);
    let mut dx = vec![0.0; w * m * f];
    let mut carry = vec![0.0; m * h];
    for t in (0..w).rev() {
        for (c, d) in carry.iter_mut().zip(&dh[t * m * h..(t + 1) * m * h]) {
            *c += d;
        }
        let xt = &cache.x[t * m * f..(t + 1) * m * f];
        carry = step_backward(
            params,
            xt,
            &cache.states[t],
            &cache.gates[t],
            &carry,
            m,
            &mut dx[t * m * f..(t + 1) * m * f],
        );
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(2, 3, true);
        let (h, c) = gru_cell_forward(&[0.7, -1.0], &[0.2, -0.4, 1.0], &p).unwrap();
        assert_eq!(h, [0.1, -0.2, 0.5]);
        assert!(c.z.iter().chain(&c.r).all(|&g| g == 0.5));
        assert!(c.candidate.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_input_zero_state_is_fixed_point() {
        let p = GruParams::init(2, 3, false, &mut stream(1, Stage::Init));
        let (h, _) = gru_cell_forward(&[0.0, 0.0], &[0.0; 3], &p).unwrap();
        assert_eq!(h, [0.0; 3]);
    }

    #[test]
    fn scalar_hand_case() {
        let mut p = GruParams::zeros(1, 1, false);
        p.w.value[0] = 1.0;
        let (h, _) = gru_cell_forward(&[1.0], &[0.3], &p).unwrap();
        let expected = 0.5 * 0.3 + 0.5 * 1f64.tanh();
        assert!((h[0] - expected).abs() < 1e-15);
        assert!((h[0] - 0.53080).abs() < 1e-5);
    }

    #[test]
    fn saturated_update_gate_keeps_state() {
        let mut p = GruParams::init(2, 2, true, &mut stream(2, Stage::Init));
        p.b_z.as_mut().unwrap().value.fill(40.0);
        let prev = [0.3, -0.8];
        let (h, _) = gru_cell_forward(&[1.0, 2.0], &prev, &p).unwrap();
        for (a, b) in h.iter().zip(prev) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn sequence_is_left_fold() {
        let mut rng = stream(3, Stage::Init);
        let p = GruParams::init(2, 4, true, &mut rng);
        let xs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (all, cache) = gru_sequence_forward(&xs, 3, 1, &p).unwrap();
        let mut h = vec![0.0; 4];
        for t in 0..3 {
            h = gru_cell_forward(&xs[t * 2..t * 2 + 2], &h, &p).unwrap().0;
            assert_eq!(&all[t * 4..t * 4 + 4], h.as_slice());
            assert_eq!(cache.state(t), h.as_slice());
        }
        let (one, _) = gru_sequence_forward(&xs[..2], 1, 1, &p).unwrap();
        assert_eq!(one, gru_cell_forward(&xs[..2], &[0.0; 4], &p).unwrap().0);
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = GruParams::zeros(1, 1, false);
        assert!(gru_sequence_forward(&[], 0, 1, &p).is_err());
        assert!(gru_cell_forward(&[1.0, 2.0], &[0.0], &p).is_err());
    }
}

use rand::Rng;

use super::tensor::Tensor;
use super::Parameters;
use crate::error::{Error, Result};

/// Gated recurrent unit weights: input projections `w_*` (H×D), recurrent
/// projections `u_*` (H×H) and biases `b_*` (H) for the update gate `z`, the
/// reset gate `r` and the candidate state `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Uniform(-1/√H, 1/√H) for every weight and bias.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input, hidden);
        for t in p.tensors_mut() {
            *t = Tensor::uniform(t.shape(), bound, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    fn check(&self, x: usize, h: usize) -> Result<()> {
        let (hd, d) = (self.hidden_dim(), self.input_dim());
        let ok = [&self.w_z, &self.w_r, &self.w_h].iter().all(|t| t.shape() == [hd, d])
            && [&self.u_z, &self.u_r, &self.u_h].iter().all(|t| t.shape() == [hd, hd])
            && [&self.b_z, &self.b_r, &self.b_h].iter().all(|t| t.shape() == [hd]);
        if !ok {
            return Err(Error::Shape("inconsistent GRU parameter shapes".into()));
        }
        if x != d || h != hd {
            return Err(Error::Shape(format!(
                "GRU expects input {d} and state {hd}, got {x} and {h}"
            )));
        }
        Ok(())
    }
}

impl Parameters for GruParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug)]
pub(crate) struct GruStep {
    z: Vec<f64>,
    r: Vec<f64>,
    reset_state: Vec<f64>,
    candidate: Vec<f64>,
    h: Vec<f64>,
}

fn step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruStep {
    let n = p.hidden_dim();
    let mut z = p.b_z.data().to_vec();
    p.w_z.matvec_acc(x, &mut z);
    p.u_z.matvec_acc(h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = p.b_r.data().to_vec();
    p.w_r.matvec_acc(x, &mut r);
    p.u_r.matvec_acc(h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let reset_state: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut candidate = p.b_h.data().to_vec();
    p.w_h.matvec_acc(x, &mut candidate);
    p.u_h.matvec_acc(&reset_state, &mut candidate);
    candidate.iter_mut().for_each(|v| *v = v.tanh());

    let h = (0..n)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
        .collect();
    GruStep {
        z,
        r,
        reset_state,
        candidate,
        h,
    }
}

/// Accumulates parameter gradients into `grads`, input gradient into `dx`
/// and returns the gradient with respect to `h_prev`.
fn step_backward(
    p: &GruParams,
    x: &[f64],
    h_prev: &[f64],
    s: &GruStep,
    dh: &[f64],
    grads: &mut GruParams,
    dx: &mut [f64],
) -> Vec<f64> {
    let n = p.hidden_dim();
    let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - s.z[i])).collect();
    let da_h: Vec<f64> = (0..n)
        .map(|i| dh[i] * s.z[i] * (1.0 - s.candidate[i] * s.candidate[i]))
        .collect();
    let da_z: Vec<f64> = (0..n)
        .map(|i| dh[i] * (s.candidate[i] - h_prev[i]) * s.z[i] * (1.0 - s.z[i]))
        .collect();

    grads.w_h.add_outer(&da_h, x);
    grads.u_h.add_outer(&da_h, &s.reset_state);
    super::tensor::axpy(1.0, &da_h, grads.b_h.data_mut());
    p.w_h.matvec_t_acc(&da_h, dx);
    let mut d_reset_state = vec![0.0; n];
    p.u_h.matvec_t_acc(&da_h, &mut d_reset_state);

    let da_r: Vec<f64> = (0..n)
        .map(|i| d_reset_state[i] * h_prev[i] * s.r[i] * (1.0 - s.r[i]))
        .collect();
    for i in 0..n {
        dh_prev[i] += d_reset_state[i] * s.r[i];
    }

    grads.w_z.add_outer(&da_z, x);
    grads.u_z.add_outer(&da_z, h_prev);
    super::tensor::axpy(1.0, &da_z, grads.b_z.data_mut());
    p.w_z.matvec_t_acc(&da_z, dx);
    p.u_z.matvec_t_acc(&da_z, &mut dh_prev);

    grads.w_r.add_outer(&da_r, x);
    grads.u_r.add_outer(&da_r, h_prev);
    super::tensor::axpy(1.0, &da_r, grads.b_r.data_mut());
    p.w_r.matvec_t_acc(&da_r, dx);
    p.u_r.matvec_t_acc(&da_r, &mut dh_prev);

    dh_prev
}

/// One GRU transition:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_cell(x: &[f64], h_prev: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    p.check(x.len(), h_prev.len())?;
    let h = step(p, x, h_prev).h;
    if h.iter().all(|v| v.is_finite()) {
        Ok(h)
    } else {
        Err(Error::NonFinite("gru_cell".into()))
    }
}

/// Per-timestep activations of both directions, indexed by input position.
#[derive(Clone, Debug)]
pub struct BiGruCache {
    fwd: Vec<GruStep>,
    bwd: Vec<GruStep>,
}

/// Runs both directions from zero initial states. Row `t` of the output is
/// `[forward state after x_1..x_t ‖ backward state after x_T..x_t]`.
pub fn bigru_forward(x: &Tensor, fwd: &GruParams, bwd: &GruParams) -> Result<(Tensor, BiGruCache)> {
    let steps = x.rows();
    if steps == 0 || x.shape().len() != 2 {
        return Err(Error::Shape("bigru_encode needs a non-empty T×D matrix".into()));
    }
    let hidden = fwd.hidden_dim();
    fwd.check(x.cols(), hidden)?;
    bwd.check(x.cols(), hidden)?;
    if bwd.hidden_dim() != hidden {
        return Err(Error::Shape("forward and backward GRUs differ in hidden size".into()));
    }

    let zero = vec![0.0; hidden];
    let mut f_steps: Vec<GruStep> = Vec::with_capacity(steps);
    for t in 0..steps {
        let prev = f_steps.last().map_or(&zero[..], |s| &s.h[..]);
        let s = step(fwd, x.row(t), prev);
        f_steps.push(s);
    }
    let mut b_steps: Vec<GruStep> = Vec::with_capacity(steps);
    for t in (0..steps).rev() {
        let prev = b_steps.last().map_or(&zero[..], |s| &s.h[..]);
        let s = step(bwd, x.row(t), prev);
        b_steps.push(s);
    }
    b_steps.reverse();

    let mut out = Tensor::zeros(&[steps, 2 * hidden]);
    for t in 0..steps {
        let row = out.row_mut(t);
        row[..hidden].copy_from_slice(&f_steps[t].h);
        row[hidden..].copy_from_slice(&b_steps[t].h);
    }
    out.ensure_finite("bigru_encode")?;
    Ok((
        out,
        BiGruCache {
            fwd: f_steps,
            bwd: b_steps,
        },
    ))
}

pub fn bigru_encode(x: &Tensor, fwd: &GruParams, bwd: &GruParams) -> Result<Tensor> {
    bigru_forward(x, fwd, bwd).map(|(out, _)| out)
}

/// Backpropagates `d_out` (T×2H) through both directions, accumulating
/// into `g_fwd`/`g_bwd`, and returns the input gradient (T×D).
pub fn bigru_backward(
    x: &Tensor,
    cache: &BiGruCache,
    d_out: &Tensor,
    fwd: &GruParams,
    bwd: &GruParams,
    g_fwd: &mut GruParams,
    g_bwd: &mut GruParams,
) -> Tensor {
    let steps = x.rows();
    let hidden = fwd.hidden_dim();
    let zero = vec![0.0; hidden];
    let mut dx = Tensor::zeros(x.shape());

    let mut carry = vec![0.0; hidden];
    for t in (0..steps).rev() {
        let dh: Vec<f64> = d_out.row(t)[..hidden].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let prev = if t == 0 { &zero[..] } else { &cache.fwd[t - 1].h[..] };
        carry = step_backward(fwd, x.row(t), prev, &cache.fwd[t], &dh, g_fwd, dx.row_mut(t));
    }

    carry.iter_mut().for_each(|v| *v = 0.0);
    for t in 0..steps {
        let dh: Vec<f64> = d_out.row(t)[hidden..].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let prev = if t + 1 == steps { &zero[..] } else { &cache.bwd[t + 1].h[..] };
        carry = step_backward(bwd, x.row(t), prev, &cache.bwd[t], &dh, g_bwd, dx.row_mut(t));
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, Parameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(2, 3);
        let h0 = [0.4, -1.0, 2.0];
        let h = gru_cell(&[1.0, -1.0], &h0, &p).unwrap();
        assert!(close(&h, &[0.2, -0.5, 1.0], 1e-15));
        let h = gru_cell(&[1.0, -1.0], &[0.0; 3], &p).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn saturated_candidate_bounds() {
        let mut p = GruParams::zeros(1, 1);
        p.w_h.data_mut()[0] = 1e3;
        for h0 in [-0.8, 0.0, 0.3, 0.9] {
            let h = gru_cell(&[50.0], &[h0], &p).unwrap()[0];
            assert!(h >= h0 / 2.0 - 1e-12 && h <= (h0 + 1.0) / 2.0 + 1e-12);
            assert!((h - (h0 + 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_update_gate_copies_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = GruParams::init(3, 4, &mut rng);
        p.b_z.fill(-40.0);
        let h0 = [0.3, -0.2, 0.9, -0.7];
        let h = gru_cell(&[1.0, 2.0, -3.0], &h0, &p).unwrap();
        assert!(close(&h, &h0, 1e-6));
    }

    #[test]
    fn state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = GruParams::init(3, 4, &mut rng);
            let mut big = p.clone();
            for t in big.tensors_mut() {
                t.data_mut().iter_mut().for_each(|v| *v *= 10.0);
            }
            let h0: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let bound = h0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for params in [&p, &big] {
                let h = gru_cell(&x, &h0, params).unwrap();
                assert!(h.iter().all(|v| v.abs() <= bound + 1e-12));
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = GruParams::zeros(2, 3);
        assert!(gru_cell(&[1.0], &[0.0; 3], &p).is_err());
        assert!(bigru_encode(&Tensor::zeros(&[0, 2]), &p, &p).is_err());
    }

    #[test]
    fn single_step_sees_same_input_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = GruParams::init(2, 3, &mut rng);
        let b = GruParams::init(2, 3, &mut rng);
        let x = Tensor::from_vec(&[1, 2], vec![0.5, -0.25]).unwrap();
        let out = bigru_encode(&x, &f, &b).unwrap();
        let hf = gru_cell(x.row(0), &[0.0; 3], &f).unwrap();
        let hb = gru_cell(x.row(0), &[0.0; 3], &b).unwrap();
        assert_eq!(&out.row(0)[..3], &hf[..]);
        assert_eq!(&out.row(0)[3..], &hb[..]);
    }

    #[test]
    fn zero_params_give_zero_states() {
        let p = GruParams::zeros(2, 2);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(bigru_encode(&x, &p, &p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = GruParams::init(2, 3, &mut rng);
        let b = GruParams::init(2, 3, &mut rng);
        let x = Tensor::uniform(&[5, 2], 1.0, &mut rng);
        let mut reversed = Tensor::zeros(&[5, 2]);
        for t in 0..5 {
            reversed.row_mut(t).copy_from_slice(x.row(4 - t));
        }
        let out = bigru_encode(&x, &f, &b).unwrap();
        let swapped = bigru_encode(&reversed, &b, &f).unwrap();
        for t in 0..5 {
            assert_eq!(&out.row(t)[..3], &swapped.row(4 - t)[3..]);
            assert_eq!(&out.row(t)[3..], &swapped.row(4 - t)[..3]);
        }
    }

    /// Loss = Σ w ⊙ bigru(x); checks parameter and input gradients.
    #[test]
    fn bigru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (steps, d, h) = (4, 3, 2);
        let f = GruParams::init(d, h, &mut rng);
        let b = GruParams::init(d, h, &mut rng);
        let x = Tensor::uniform(&[steps, d], 1.0, &mut rng);
        let w = Tensor::uniform(&[steps, 2 * h], 1.0, &mut rng);

        let n_f = f.num_parameters();
        let n_b = b.num_parameters();
        let mut theta = f.flatten();
        theta.extend(b.flatten());
        theta.extend_from_slice(x.data());

        let unpack = |theta: &[f64]| {
            let mut f2 = f.clone();
            let mut b2 = b.clone();
            f2.assign_flat(&theta[..n_f]);
            b2.assign_flat(&theta[n_f..n_f + n_b]);
            let x2 = Tensor::from_vec(&[steps, d], theta[n_f + n_b..].to_vec()).unwrap();
            (f2, b2, x2)
        };
        let loss = |theta: &[f64]| {
            let (f2, b2, x2) = unpack(theta);
            let out = bigru_encode(&x2, &f2, &b2).unwrap();
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let (out, cache) = bigru_forward(&x, &f, &b).unwrap();
        assert_eq!(out.shape(), [steps, 2 * h]);
        let mut gf = GruParams::zeros(d, h);
        let mut gb = GruParams::zeros(d, h);
        let dx = bigru_backward(&x, &cache, &w, &f, &b, &mut gf, &mut gb);
        let mut analytic = gf.flatten();
        analytic.extend(gb.flatten());
        analytic.extend_from_slice(dx.data());

        let report = grad_check(loss, &theta, &analytic, usize::MAX, 1e-5, &mut rng);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}

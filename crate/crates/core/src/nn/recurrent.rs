//! GRU (Cho et al. convention) and LSTM sequence layers with
//! backpropagation through time.
//!
//! Both map `[b, t, in] → [b, t, hidden]` starting from a zero state.
//! Gate blocks are stacked along the first weight axis: `z, r, n` for the
//! GRU and `i, f, g, o` for the LSTM.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{glorot, sigmoid, Cache, Layer, LayerKind, Param};
use crate::nn::linalg::{gemm, MatRef};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

fn check_sequence<T: Scalar>(kind: LayerKind, input: &DenseTensor<T>, features: usize) -> Result<(usize, usize)> {
    let s = input.shape();
    if s.len() != 3 || s[2] != features {
        let b = s.first().copied().unwrap_or(1);
        let t = s.get(1).copied().unwrap_or(1);
        return Err(Error::shape(format!("{} input", kind.name()), &[b, t, features], s));
    }
    Ok((s[0], s[1]))
}

/// Rows `t` of every sequence in a `[b, t, f]` buffer.
fn gather_step<T: Scalar>(data: &[T], steps: usize, t: usize, f: usize) -> Vec<T> {
    data.chunks(steps * f).flat_map(|seq| seq[t * f..(t + 1) * f].iter().copied()).collect()
}

fn scatter_step<T: Scalar>(data: &mut [T], steps: usize, t: usize, f: usize, rows: &[T]) {
    for (seq, row) in data.chunks_mut(steps * f).zip(rows.chunks(f)) {
        seq[t * f..(t + 1) * f].copy_from_slice(row);
    }
}

/// Input projections `X·W_inᵀ + bias` for every (sample, step): `[b·t, G]`.
fn input_projection<T: Scalar>(input: &DenseTensor<T>, w_in: &DenseTensor<T>, bias: &DenseTensor<T>) -> Vec<T> {
    let (g, fin) = (w_in.shape()[0], w_in.shape()[1]);
    let rows = input.len() / fin;
    let mut a: Vec<T> = (0..rows).flat_map(|_| bias.data().iter().copied()).collect();
    gemm(T::one(), MatRef::new(input.data(), rows, fin), MatRef::new(w_in.data(), g, fin).t(), T::one(), &mut a);
    a
}

/// Shared tail of both backward passes: input-side weight, bias and input
/// gradients from the pre-activation gradients `da: [b·t, G]`.
fn input_side_backward<T: Scalar>(
    input: &DenseTensor<T>,
    w_in: &DenseTensor<T>,
    da: &[T],
    g_w_in: &mut DenseTensor<T>,
    g_bias: &mut DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    let (g, fin) = (w_in.shape()[0], w_in.shape()[1]);
    let rows = input.len() / fin;
    let da_m = MatRef::new(da, rows, g);
    gemm(T::one(), da_m.t(), MatRef::new(input.data(), rows, fin), T::one(), g_w_in.data_mut());
    for row in da.chunks(g) {
        for (b, &d) in g_bias.data_mut().iter_mut().zip(row) {
            *b += d;
        }
    }
    let mut dx = vec![T::zero(); rows * fin];
    gemm(T::one(), da_m, MatRef::new(w_in.data(), g, fin), T::zero(), &mut dx);
    DenseTensor::new(input.shape(), dx)
}

#[derive(Debug, Clone)]
pub struct Gru<T> {
    hidden: usize,
    params: [Param<T>; 3],
}

struct GruStep<T> {
    h_prev: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
}

struct GruCache<T> {
    input: DenseTensor<T>,
    steps: Vec<GruStep<T>>,
}

impl<T: Scalar> Gru<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden,
            params: [
                Param::new("w_input", glorot(&[3 * hidden, inputs], inputs, 3 * hidden, rng)),
                Param::new("w_hidden", glorot(&[3 * hidden, hidden], hidden, 3 * hidden, rng)),
                Param::new("bias", DenseTensor::zeros(&[3 * hidden])),
            ],
        }
    }

    pub fn from_parts(w_input: DenseTensor<T>, w_hidden: DenseTensor<T>, bias: DenseTensor<T>) -> Result<Self> {
        let hidden = w_hidden.shape().get(1).copied().unwrap_or(0);
        if w_input.rank() != 2 || w_input.shape()[0] != 3 * hidden {
            return Err(Error::InvalidInput(format!("GRU input weight shape {:?}", w_input.shape())));
        }
        w_hidden.expect_shape("GRU hidden weight", &[3 * hidden, hidden])?;
        bias.expect_shape("GRU bias", &[3 * hidden])?;
        Ok(Self {
            hidden,
            params: [
                Param::new("w_input", w_input),
                Param::new("w_hidden", w_hidden),
                Param::new("bias", bias),
            ],
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn inputs(&self) -> usize {
        self.params[0].value.shape()[1]
    }

    /// One step for a single sample: `z = σ(W_z x + U_z h + b_z)`,
    /// `r = σ(W_r x + U_r h + b_r)`, `ñ = tanh(W_n x + U_n (r∘h) + b_n)`,
    /// `h' = (1 − z)∘h + z∘ñ`.
    pub fn step(&self, h_prev: &[T], x: &[T]) -> Result<Vec<T>> {
        let (hd, fin) = (self.hidden, self.inputs());
        if h_prev.len() != hd || x.len() != fin {
            return Err(Error::shape("gru step (hidden, input)", &[hd, fin], &[h_prev.len(), x.len()]));
        }
        let w = self.params[0].value.data();
        let u = self.params[1].value.data();
        let b = self.params[2].value.data();
        let dot = |m: &[T], row: usize, v: &[T]| -> T {
            m[row * v.len()..(row + 1) * v.len()].iter().zip(v).map(|(&a, &c)| a * c).sum()
        };
        let gate = |g: usize, i: usize, h: &[T]| dot(w, g * hd + i, x) + dot(u, g * hd + i, h) + b[g * hd + i];
        let z: Vec<T> = (0..hd).map(|i| sigmoid(gate(0, i, h_prev))).collect();
        let r: Vec<T> = (0..hd).map(|i| sigmoid(gate(1, i, h_prev))).collect();
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &c)| a * c).collect();
        Ok((0..hd)
            .map(|i| {
                let n = gate(2, i, &rh).tanh();
                (T::one() - z[i]) * h_prev[i] + z[i] * n
            })
            .collect())
    }
}

impl<T: Scalar> Layer<T> for Gru<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::GruCell
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let (batch, steps) = check_sequence(self.kind(), input, self.inputs())?;
        let hd = self.hidden;
        let a = input_projection(input, &self.params[0].value, &self.params[2].value);
        let u = self.params[1].value.data();
        let u_zr = MatRef::new(&u[..2 * hd * hd], 2 * hd, hd).t();
        let u_n = MatRef::new(&u[2 * hd * hd..], hd, hd).t();
        let mut out = vec![T::zero(); batch * steps * hd];
        let mut h = vec![T::zero(); batch * hd];
        let mut cache = Vec::with_capacity(steps);
        let mut uh = vec![T::zero(); batch * 2 * hd];
        let mut un = vec![T::zero(); batch * hd];
        for t in 0..steps {
            let a_t = gather_step(&a, steps, t, 3 * hd);
            gemm(T::one(), MatRef::new(&h, batch, hd), u_zr, T::zero(), &mut uh);
            let mut z = vec![T::zero(); batch * hd];
            let mut r = vec![T::zero(); batch * hd];
            for s in 0..batch {
                for i in 0..hd {
                    z[s * hd + i] = sigmoid(a_t[s * 3 * hd + i] + uh[s * 2 * hd + i]);
                    r[s * hd + i] = sigmoid(a_t[s * 3 * hd + hd + i] + uh[s * 2 * hd + hd + i]);
                }
            }
            let rh: Vec<T> = r.iter().zip(&h).map(|(&a, &b)| a * b).collect();
            gemm(T::one(), MatRef::new(&rh, batch, hd), u_n, T::zero(), &mut un);
            let mut n = vec![T::zero(); batch * hd];
            let mut h_next = vec![T::zero(); batch * hd];
            for s in 0..batch {
                for i in 0..hd {
                    let j = s * hd + i;
                    n[j] = (a_t[s * 3 * hd + 2 * hd + i] + un[j]).tanh();
                    h_next[j] = (T::one() - z[j]) * h[j] + z[j] * n[j];
                }
            }
            scatter_step(&mut out, steps, t, hd, &h_next);
            cache.push(GruStep { h_prev: std::mem::replace(&mut h, h_next), z, r, n, rh });
        }
        Ok((
            DenseTensor::new(&[batch, steps, hd], out)?,
            Cache::new(GruCache { input: input.clone(), steps: cache }),
        ))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &GruCache<T> = cache.get(self.kind())?;
        let (batch, steps) = (c.input.shape()[0], c.input.shape()[1]);
        let hd = self.hidden;
        grad_output.expect_shape("gru upstream gradient", &[batch, steps, hd])?;
        let u = self.params[1].value.data();
        let u_zr = MatRef::new(&u[..2 * hd * hd], 2 * hd, hd);
        let u_n = MatRef::new(&u[2 * hd * hd..], hd, hd);
        let mut da = vec![T::zero(); batch * steps * 3 * hd];
        let mut dh_next = vec![T::zero(); batch * hd];
        let (g_in, rest) = param_grads.split_at_mut(1);
        let (g_hidden, g_bias) = rest.split_at_mut(1);
        let (gu_zr, gu_n) = g_hidden[0].data_mut().split_at_mut(2 * hd * hd);
        let mut d_rh = vec![T::zero(); batch * hd];
        for t in (0..steps).rev() {
            let st = &c.steps[t];
            let dy = gather_step(grad_output.data(), steps, t, hd);
            let mut dan = vec![T::zero(); batch * hd];
            let mut dzr = vec![T::zero(); batch * 2 * hd];
            let mut dhp = vec![T::zero(); batch * hd];
            for j in 0..batch * hd {
                let dh = dy[j] + dh_next[j];
                let (z, n, hp) = (st.z[j], st.n[j], st.h_prev[j]);
                dhp[j] = dh * (T::one() - z);
                let dz = dh * (n - hp);
                dan[j] = dh * z * (T::one() - n * n);
                let (s, i) = (j / hd, j % hd);
                dzr[s * 2 * hd + i] = dz * z * (T::one() - z);
            }
            let dan_m = MatRef::new(&dan, batch, hd);
            gemm(T::one(), dan_m, u_n, T::zero(), &mut d_rh);
            gemm(T::one(), dan_m.t(), MatRef::new(&st.rh, batch, hd), T::one(), gu_n);
            for j in 0..batch * hd {
                let r = st.r[j];
                dhp[j] += d_rh[j] * r;
                let dr = d_rh[j] * st.h_prev[j];
                let (s, i) = (j / hd, j % hd);
                dzr[s * 2 * hd + hd + i] = dr * r * (T::one() - r);
            }
            let dzr_m = MatRef::new(&dzr, batch, 2 * hd);
            gemm(T::one(), dzr_m.t(), MatRef::new(&st.h_prev, batch, hd), T::one(), gu_zr);
            gemm(T::one(), dzr_m, u_zr, T::one(), &mut dhp);
            let mut da_t = Vec::with_capacity(batch * 3 * hd);
            for s in 0..batch {
                da_t.extend_from_slice(&dzr[s * 2 * hd..(s + 1) * 2 * hd]);
                da_t.extend_from_slice(&dan[s * hd..(s + 1) * hd]);
            }
            scatter_step(&mut da, steps, t, 3 * hd, &da_t);
            dh_next = dhp;
        }
        input_side_backward(&c.input, &self.params[0].value, &da, &mut g_in[0], &mut g_bias[0])
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Lstm<T> {
    hidden: usize,
    params: [Param<T>; 3],
}

struct LstmStep<T> {
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates `[i, f, g, o]` per sample, `[b, 4H]`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

struct LstmCache<T> {
    input: DenseTensor<T>,
    steps: Vec<LstmStep<T>>,
}

impl<T: Scalar> Lstm<T> {
    /// Zero biases except the forget gate, which starts at 1.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = DenseTensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(T::one());
        Self {
            hidden,
            params: [
                Param::new("w_input", glorot(&[4 * hidden, inputs], inputs, 4 * hidden, rng)),
                Param::new("w_hidden", glorot(&[4 * hidden, hidden], hidden, 4 * hidden, rng)),
                Param::new("bias", bias),
            ],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn inputs(&self) -> usize {
        self.params[0].value.shape()[1]
    }

    /// One step for a single sample, returning `(h', c')`.
    pub fn step(&self, h_prev: &[T], c_prev: &[T], x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let (hd, fin) = (self.hidden, self.inputs());
        if h_prev.len() != hd || c_prev.len() != hd || x.len() != fin {
            return Err(Error::shape(
                "lstm step (hidden, cell, input)",
                &[hd, hd, fin],
                &[h_prev.len(), c_prev.len(), x.len()],
            ));
        }
        let w = self.params[0].value.data();
        let u = self.params[1].value.data();
        let b = self.params[2].value.data();
        let pre = |row: usize| -> T {
            let wx: T = w[row * fin..(row + 1) * fin].iter().zip(x).map(|(&a, &c)| a * c).sum();
            let uh: T = u[row * hd..(row + 1) * hd].iter().zip(h_prev).map(|(&a, &c)| a * c).sum();
            wx + uh + b[row]
        };
        let mut h = Vec::with_capacity(hd);
        let mut c = Vec::with_capacity(hd);
        for k in 0..hd {
            let i = sigmoid(pre(k));
            let f = sigmoid(pre(hd + k));
            let g = pre(2 * hd + k).tanh();
            let o = sigmoid(pre(3 * hd + k));
            let cell = f * c_prev[k] + i * g;
            c.push(cell);
            h.push(o * cell.tanh());
        }
        Ok((h, c))
    }
}

impl<T: Scalar> Layer<T> for Lstm<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::LstmCell
    }

    fn forward(&self, input: &DenseTensor<T>) -> Result<(DenseTensor<T>, Cache)> {
        let (batch, steps) = check_sequence(self.kind(), input, self.inputs())?;
        let hd = self.hidden;
        let a = input_projection(input, &self.params[0].value, &self.params[2].value);
        let u = MatRef::new(self.params[1].value.data(), 4 * hd, hd).t();
        let mut out = vec![T::zero(); batch * steps * hd];
        let mut h = vec![T::zero(); batch * hd];
        let mut cell = vec![T::zero(); batch * hd];
        let mut cache = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut pre = gather_step(&a, steps, t, 4 * hd);
            gemm(T::one(), MatRef::new(&h, batch, hd), u, T::one(), &mut pre);
            let mut gates = vec![T::zero(); batch * 4 * hd];
            let mut c_next = vec![T::zero(); batch * hd];
            let mut h_next = vec![T::zero(); batch * hd];
            let mut tanh_c = vec![T::zero(); batch * hd];
            for s in 0..batch {
                let p = &pre[s * 4 * hd..(s + 1) * 4 * hd];
                let g = &mut gates[s * 4 * hd..(s + 1) * 4 * hd];
                for k in 0..hd {
                    g[k] = sigmoid(p[k]);
                    g[hd + k] = sigmoid(p[hd + k]);
                    g[2 * hd + k] = p[2 * hd + k].tanh();
                    g[3 * hd + k] = sigmoid(p[3 * hd + k]);
                    let j = s * hd + k;
                    c_next[j] = g[hd + k] * cell[j] + g[k] * g[2 * hd + k];
                    tanh_c[j] = c_next[j].tanh();
                    h_next[j] = g[3 * hd + k] * tanh_c[j];
                }
            }
            scatter_step(&mut out, steps, t, hd, &h_next);
            cache.push(LstmStep {
                h_prev: std::mem::replace(&mut h, h_next),
                c_prev: std::mem::replace(&mut cell, c_next),
                gates,
                tanh_c,
            });
        }
        Ok((
            DenseTensor::new(&[batch, steps, hd], out)?,
            Cache::new(LstmCache { input: input.clone(), steps: cache }),
        ))
    }

    fn backward(
        &self,
        cache: &Cache,
        grad_output: &DenseTensor<T>,
        param_grads: &mut [DenseTensor<T>],
    ) -> Result<DenseTensor<T>> {
        let c: &LstmCache<T> = cache.get(self.kind())?;
        let (batch, steps) = (c.input.shape()[0], c.input.shape()[1]);
        let hd = self.hidden;
        grad_output.expect_shape("lstm upstream gradient", &[batch, steps, hd])?;
        let u = MatRef::new(self.params[1].value.data(), 4 * hd, hd);
        let mut da = vec![T::zero(); batch * steps * 4 * hd];
        let mut dh_next = vec![T::zero(); batch * hd];
        let mut dc_next = vec![T::zero(); batch * hd];
        let (g_in, rest) = param_grads.split_at_mut(1);
        let (g_hidden, g_bias) = rest.split_at_mut(1);
        for t in (0..steps).rev() {
            let st = &c.steps[t];
            let dy = gather_step(grad_output.data(), steps, t, hd);
            let mut da_t = vec![T::zero(); batch * 4 * hd];
            for s in 0..batch {
                let g = &st.gates[s * 4 * hd..(s + 1) * 4 * hd];
                let d = &mut da_t[s * 4 * hd..(s + 1) * 4 * hd];
                for k in 0..hd {
                    let j = s * hd + k;
                    let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                    let dh = dy[j] + dh_next[j];
                    let tc = st.tanh_c[j];
                    let dc = dc_next[j] + dh * o * (T::one() - tc * tc);
                    d[k] = dc * gg * i * (T::one() - i);
                    d[hd + k] = dc * st.c_prev[j] * f * (T::one() - f);
                    d[2 * hd + k] = dc * i * (T::one() - gg * gg);
                    d[3 * hd + k] = dh * tc * o * (T::one() - o);
                    dc_next[j] = dc * f;
                }
            }
            let da_m = MatRef::new(&da_t, batch, 4 * hd);
            gemm(T::one(), da_m.t(), MatRef::new(&st.h_prev, batch, hd), T::one(), g_hidden[0].data_mut());
            gemm(T::one(), da_m, u, T::zero(), &mut dh_next);
            scatter_step(&mut da, steps, t, 4 * hd, &da_t);
        }
        input_side_backward(&c.input, &self.params[0].value, &da, &mut g_in[0], &mut g_bias[0])
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn box_clone(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gru_halves_state() {
        let gru = Gru::<f64>::from_parts(
            DenseTensor::zeros(&[6, 3]),
            DenseTensor::zeros(&[6, 2]),
            DenseTensor::zeros(&[6]),
        )
        .unwrap();
        assert_eq!(gru.step(&[0.8, -0.4], &[1.0, 2.0, 3.0]).unwrap(), vec![0.4, -0.2]);
        assert_eq!(gru.step(&[0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(gru.step(&[0.0], &[1.0, 2.0, 3.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn sequence_matches_unrolled_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gru = Gru::<f64>::new(3, 4, &mut rng);
        let lstm = Lstm::<f64>::new(3, 4, &mut rng);
        let x = DenseTensor::from_fn(&[2, 5, 3], |_| rng.gen_range(-1.0..1.0));
        let (yg, _) = gru.forward(&x).unwrap();
        let (yl, _) = lstm.forward(&x).unwrap();
        for s in 0..2 {
            let (mut h, mut hl, mut cl) = (vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
            for t in 0..5 {
                let xt: Vec<f64> = (0..3).map(|i| x.at(&[s, t, i])).collect();
                h = gru.step(&h, &xt).unwrap();
                (hl, cl) = lstm.step(&hl, &cl, &xt).unwrap();
                for i in 0..4 {
                    assert!((yg.at(&[s, t, i]) - h[i]).abs() < 1e-12);
                    assert!((yl.at(&[s, t, i]) - hl[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let lstm = Lstm::<f64>::new(2, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(lstm.params()[2].value.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}

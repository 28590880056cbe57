//! GRU cell and stacked network over a flat parameter slice.
//!
//! Per layer the slice holds `W` (3n × m, gate rows ordered update, reset,
//! candidate), `U` (3n × n) and `b` (3n). The readout `W_out` (n_y × n_L),
//! `b_out` (n_y) follows the last layer.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[inline]
fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[derive(Clone, Copy, Debug)]
pub struct GruLayerRef<'a> {
    pub n: usize,
    pub m: usize,
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

/// Owned parameters of one GRU layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayerParams {
    pub n: usize,
    pub m: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl GruLayerParams {
    pub fn zeros(n: usize, m: usize) -> Self {
        GruLayerParams {
            n,
            m,
            w: vec![0.0; 3 * n * m],
            u: vec![0.0; 3 * n * n],
            b: vec![0.0; 3 * n],
        }
    }

    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if self.w.len() != 3 * n * m || self.u.len() != 3 * n * n || self.b.len() != 3 * n {
            return Err(Error::Dimension(format!("GRU layer {n}x{m} has wrong array sizes")));
        }
        if self.w.iter().chain(&self.u).chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GRU layer parameter".into()));
        }
        Ok(())
    }

    pub fn as_ref(&self) -> GruLayerRef<'_> {
        GruLayerRef {
            n: self.n,
            m: self.m,
            w: &self.w,
            u: &self.u,
            b: &self.b,
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        if s.len() < len {
            s.resize(len, 0.0);
        }
        f(&mut s[..len])
    })
}

/// One cell update. `zrc` receives the gate activations `[z, r, c]` (3n).
fn cell_forward(l: GruLayerRef<'_>, x: &[f64], u: &[f64], x_new: &mut [f64], zrc: &mut [f64]) {
    let (n, m) = (l.n, l.m);
    let (z, rest) = zrc.split_at_mut(n);
    let (r, c) = rest.split_at_mut(n);
    for i in 0..n {
        let wz = &l.w[i * m..(i + 1) * m];
        let wr = &l.w[(n + i) * m..(n + i + 1) * m];
        let uz = &l.u[i * n..(i + 1) * n];
        let ur = &l.u[(n + i) * n..(n + i + 1) * n];
        let mut az = l.b[i];
        let mut ar = l.b[n + i];
        for j in 0..m {
            az += wz[j] * u[j];
            ar += wr[j] * u[j];
        }
        for j in 0..n {
            az += uz[j] * x[j];
            ar += ur[j] * x[j];
        }
        z[i] = sigmoid(az);
        r[i] = sigmoid(ar);
    }
    for i in 0..n {
        let wc = &l.w[(2 * n + i) * m..(2 * n + i + 1) * m];
        let uc = &l.u[(2 * n + i) * n..(2 * n + i + 1) * n];
        let mut ac = l.b[2 * n + i];
        for j in 0..m {
            ac += wc[j] * u[j];
        }
        for j in 0..n {
            ac += uc[j] * r[j] * x[j];
        }
        c[i] = ac.tanh();
        x_new[i] = z[i] * x[i] + (1.0 - z[i]) * c[i];
    }
}

/// Standard fully gated GRU update.
pub fn gru_cell_step(layer: &GruLayerParams, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    layer.check()?;
    if x.len() != layer.n || u.len() != layer.m {
        return Err(Error::Dimension(format!(
            "GRU cell expects x {} / u {}, got {} / {}",
            layer.n,
            layer.m,
            x.len(),
            u.len()
        )));
    }
    let mut out = vec![0.0; layer.n];
    let mut zrc = vec![0.0; 3 * layer.n];
    cell_forward(layer.as_ref(), x, u, &mut out, &mut zrc);
    Ok(out)
}

/// Shape of a stack of GRU layers with an affine readout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruNet {
    pub sizes: Vec<usize>,
    pub n_in: usize,
    pub n_out: usize,
    layer_offsets: Vec<usize>,
    readout_offset: usize,
    n_params: usize,
    state_offsets: Vec<usize>,
    tape_offsets: Vec<usize>,
    tape_stride: usize,
}

impl GruNet {
    pub fn new(sizes: Vec<usize>, n_in: usize, n_out: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) || n_in == 0 || n_out == 0 {
            return Err(Error::Dimension(format!(
                "GRU sizes {sizes:?}, n_in {n_in}, n_out {n_out} must all be positive"
            )));
        }
        let mut layer_offsets = Vec::new();
        let mut state_offsets = Vec::new();
        let mut tape_offsets = Vec::new();
        let (mut p, mut s, mut t) = (0, 0, 0);
        let mut m = n_in;
        for &n in &sizes {
            layer_offsets.push(p);
            state_offsets.push(s);
            tape_offsets.push(t);
            p += 3 * n * m + 3 * n * n + 3 * n;
            s += n;
            // input, previous state, z, r, c
            t += m + 4 * n;
            m = n;
        }
        let readout_offset = p;
        p += n_out * m + n_out;
        Ok(GruNet {
            sizes,
            n_in,
            n_out,
            layer_offsets,
            readout_offset,
            n_params: p,
            state_offsets,
            tape_offsets,
            tape_stride: t,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_x(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn tape_stride(&self) -> usize {
        self.tape_stride
    }

    fn layer_in(&self, l: usize) -> usize {
        if l == 0 {
            self.n_in
        } else {
            self.sizes[l - 1]
        }
    }

    pub fn layer<'a>(&self, p: &'a [f64], l: usize) -> GruLayerRef<'a> {
        let n = self.sizes[l];
        let m = self.layer_in(l);
        let o = self.layer_offsets[l];
        let w = &p[o..o + 3 * n * m];
        let u = &p[o + 3 * n * m..o + 3 * n * m + 3 * n * n];
        let b = &p[o + 3 * n * m + 3 * n * n..o + 3 * n * m + 3 * n * n + 3 * n];
        GruLayerRef { n, m, w, u, b }
    }

    /// Uniform ±1/√fan_in weights, zero biases, update-gate bias +1.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.n_params];
        for l in 0..self.sizes.len() {
            let n = self.sizes[l];
            let m = self.layer_in(l);
            let o = self.layer_offsets[l];
            let a = 1.0 / (m as f64).sqrt();
            for v in &mut p[o..o + 3 * n * m] {
                *v = rng.random_range(-a..a);
            }
            let a = 1.0 / (n as f64).sqrt();
            for v in &mut p[o + 3 * n * m..o + 3 * n * m + 3 * n * n] {
                *v = rng.random_range(-a..a);
            }
            let ob = o + 3 * n * m + 3 * n * n;
            for v in &mut p[ob..ob + n] {
                *v = 1.0;
            }
        }
        let n_last = *self.sizes.last().unwrap_or(&1);
        let a = 1.0 / (n_last as f64).sqrt();
        for v in &mut p[self.readout_offset..self.readout_offset + self.n_out * n_last] {
            *v = rng.random_range(-a..a);
        }
        p
    }

    fn max_width(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0).max(self.n_in)
    }

    /// Advances `x` (all layer states) by one step and writes the readout of
    /// the new last-layer state to `y`.
    pub fn step(&self, p: &[f64], x: &mut [f64], u: &[f64], y: &mut [f64], mut tape: Option<&mut [f64]>) {
        let w = self.max_width();
        with_scratch(4 * w, |s| {
            let (zrc, xn) = s.split_at_mut(3 * w);
            for l in 0..self.sizes.len() {
                let lay = self.layer(p, l);
                let (n, m) = (lay.n, lay.m);
                let so = self.state_offsets[l];
                let (head, tail) = x.split_at_mut(so);
                let xs = &mut tail[..n];
                let input: &[f64] = if l == 0 { u } else { &head[self.state_offsets[l - 1]..so] };
                cell_forward(lay, xs, input, &mut xn[..n], &mut zrc[..3 * n]);
                if let Some(t) = tape.as_deref_mut() {
                    let to = self.tape_offsets[l];
                    let t = &mut t[to..to + m + 4 * n];
                    t[..m].copy_from_slice(input);
                    t[m..m + n].copy_from_slice(xs);
                    t[m + n..].copy_from_slice(&zrc[..3 * n]);
                }
                xs.copy_from_slice(&xn[..n]);
            }
        });
        let nl = self.sizes.len();
        let n_last = self.sizes[nl - 1];
        let xl = &x[self.state_offsets[nl - 1]..self.state_offsets[nl - 1] + n_last];
        let wo = &p[self.readout_offset..self.readout_offset + self.n_out * n_last];
        let bo = &p[self.readout_offset + self.n_out * n_last..self.n_params];
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &wo[i * n_last..(i + 1) * n_last];
            *yi = bo[i] + row.iter().zip(xl).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Reverse pass of one [`GruNet::step`].
    ///
    /// On entry `dx` holds the gradient with respect to the new state; on
    /// exit, with respect to the previous state. Parameter gradients are
    /// accumulated into `g`, input gradients into `du`.
    pub fn backward_step(
        &self,
        p: &[f64],
        tape: &[f64],
        dy: &[f64],
        dx: &mut [f64],
        mut g: Option<&mut [f64]>,
        mut du: Option<&mut [f64]>,
    ) {
        let nl = self.sizes.len();
        let n_last = self.sizes[nl - 1];
        let last = self.layer(p, nl - 1);
        let tl = &tape[self.tape_offsets[nl - 1]..];
        let ml = last.m;
        let x_last_new = |j: usize| {
            let (xp, z, c) = (tl[ml + j], tl[ml + n_last + j], tl[ml + 3 * n_last + j]);
            z * xp + (1.0 - z) * c
        };
        let ro = self.readout_offset;
        let so_last = self.state_offsets[nl - 1];
        for (i, &dyi) in dy.iter().enumerate() {
            if dyi == 0.0 {
                continue;
            }
            let row = &p[ro + i * n_last..ro + (i + 1) * n_last];
            for j in 0..n_last {
                dx[so_last + j] += row[j] * dyi;
            }
            if let Some(g) = g.as_deref_mut() {
                for j in 0..n_last {
                    g[ro + i * n_last + j] += dyi * x_last_new(j);
                }
                g[ro + self.n_out * n_last + i] += dyi;
            }
        }

        let w = self.max_width();
        with_scratch(6 * w, |s| {
            let (da, rest) = s.split_at_mut(3 * w);
            let (dxp, rest) = rest.split_at_mut(w);
            let (drx, dinput) = rest.split_at_mut(w);
            for l in (0..nl).rev() {
                let lay = self.layer(p, l);
                let (n, m) = (lay.n, lay.m);
                let to = self.tape_offsets[l];
                let t = &tape[to..to + m + 4 * n];
                let (uin, xp) = (&t[..m], &t[m..m + n]);
                let (z, r, c) = (&t[m + n..m + 2 * n], &t[m + 2 * n..m + 3 * n], &t[m + 3 * n..m + 4 * n]);
                let so = self.state_offsets[l];
                let da = &mut da[..3 * n];
                let dxp = &mut dxp[..n];
                let drx = &mut drx[..n];
                let dinput = &mut dinput[..m];

                for i in 0..n {
                    let dxn = dx[so + i];
                    da[i] = dxn * (xp[i] - c[i]) * z[i] * (1.0 - z[i]);
                    da[2 * n + i] = dxn * (1.0 - z[i]) * (1.0 - c[i] * c[i]);
                    dxp[i] = dxn * z[i];
                }
                // candidate sees r ⊙ x
                drx.fill(0.0);
                for i in 0..n {
                    let dac = da[2 * n + i];
                    if dac == 0.0 {
                        continue;
                    }
                    let uc = &lay.u[(2 * n + i) * n..(2 * n + i + 1) * n];
                    for j in 0..n {
                        drx[j] += uc[j] * dac;
                    }
                }
                for j in 0..n {
                    dxp[j] += drx[j] * r[j];
                    da[n + j] = drx[j] * xp[j] * r[j] * (1.0 - r[j]);
                }
                for i in 0..n {
                    let (daz, dar) = (da[i], da[n + i]);
                    let uz = &lay.u[i * n..(i + 1) * n];
                    let ur = &lay.u[(n + i) * n..(n + i + 1) * n];
                    for j in 0..n {
                        dxp[j] += uz[j] * daz + ur[j] * dar;
                    }
                }
                dinput.fill(0.0);
                for (k, &dak) in da.iter().enumerate() {
                    if dak == 0.0 {
                        continue;
                    }
                    let wk = &lay.w[k * m..(k + 1) * m];
                    for j in 0..m {
                        dinput[j] += wk[j] * dak;
                    }
                }
                if let Some(g) = g.as_deref_mut() {
                    let o = self.layer_offsets[l];
                    let (ow, ou, ob) = (o, o + 3 * n * m, o + 3 * n * m + 3 * n * n);
                    for (k, &dak) in da.iter().enumerate() {
                        if dak == 0.0 {
                            continue;
                        }
                        let gw = &mut g[ow + k * m..ow + (k + 1) * m];
                        for j in 0..m {
                            gw[j] += dak * uin[j];
                        }
                        let gu = &mut g[ou + k * n..ou + (k + 1) * n];
                        if k < 2 * n {
                            for j in 0..n {
                                gu[j] += dak * xp[j];
                            }
                        } else {
                            for j in 0..n {
                                gu[j] += dak * r[j] * xp[j];
                            }
                        }
                        g[ob + k] += dak;
                    }
                }
                dx[so..so + n].copy_from_slice(dxp);
                if l > 0 {
                    let sp = self.state_offsets[l - 1];
                    for j in 0..m {
                        dx[sp + j] += dinput[j];
                    }
                } else if let Some(du) = du.as_deref_mut() {
                    for j in 0..m {
                        du[j] += dinput[j];
                    }
                }
            }
        });
    }
}

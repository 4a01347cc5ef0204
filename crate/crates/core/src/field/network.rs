//! Fully-connected field network with input skip connections.
//!
//! Hidden layer 0 sees the raw input `X`; every later hidden layer sees the previous
//! activations concatenated with `X`. Hidden units use a leaky ramp, the output layer
//! (4 units) uses `tanh`. Parameters live in one flat vector so that gradients and
//! optimizer state share its layout.

use std::fmt::Debug;

use rand::Rng;

use crate::{Error, Result};

/// Negative-side slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Output units: three object-coordinate components and the signed distance.
pub const OUTPUT_DIM: usize = 4;

/// Scalar types the network runs in: `f32` for training and inference, `f64` for
/// reference computations.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C ← α·A·B + β·C` for strided `A` (m×k), `B` (k×n), `C` (m×n).
    ///
    /// # Safety
    /// Every addressed element must lie inside the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided matrix view: element `(i, j)` is `data[i·rs + j·cs]`.
#[derive(Clone, Copy)]
struct View<'a, T> {
    data: &'a [T],
    rs: usize,
    cs: usize,
}

fn view<T>(data: &[T], rs: usize, cs: usize) -> View<'_, T> {
    View { data, rs, cs }
}

/// Bounds-checked `C ← α·A·B + β·C`, `C` row-major with row stride `ldc`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(m: usize, k: usize, n: usize, alpha: T, a: View<T>, b: View<T>, beta: T, c: &mut [T], ldc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |v: &View<T>, r: usize, cc: usize| (r - 1) * v.rs + (cc - 1) * v.cs;
    if k > 0 {
        assert!(last(&a, m, k) < a.data.len() && last(&b, k, n) < b.data.len());
    }
    assert!((m - 1) * ldc + n - 1 < c.len());
    // SAFETY: all addressed elements were bounds-checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    /// Output units.
    pub rows: usize,
    /// Input width.
    pub cols: usize,
    /// Width of the previous layer's activations inside the input (0 for the first layer).
    pub prev: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetwork<T> {
    input_dim: usize,
    layers: Vec<LayerShape>,
    params: Vec<T>,
}

/// Pre- and post-activation values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub n: usize,
    /// Pre-activations per layer, row-major `n × rows`.
    pub pre: Vec<Vec<T>>,
    /// Activations per layer; the last entry holds the `tanh` outputs.
    pub post: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn outputs(&self) -> &[T] {
        self.post.last().expect("at least one layer")
    }
}

fn layer_shapes(input_dim: usize, hidden: &[usize]) -> Vec<LayerShape> {
    let mut shapes = Vec::with_capacity(hidden.len() + 1);
    let mut off = 0;
    let mut push = |rows: usize, cols: usize, prev: usize| {
        shapes.push(LayerShape {
            rows,
            cols,
            prev,
            w_off: off,
            b_off: off + rows * cols,
        });
        off += rows * cols + rows;
    };
    let mut prev = 0;
    for &h in hidden {
        push(h, prev + input_dim, prev);
        prev = h;
    }
    push(OUTPUT_DIM, prev.max(input_dim * (hidden.is_empty() as usize)), prev);
    shapes
}

#[inline]
fn leaky<T: Real>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        z * T::from_f64(LEAKY_SLOPE)
    }
}

#[inline]
fn leaky_grad<T: Real>(z: T) -> T {
    if z > T::zero() {
        T::one()
    } else {
        T::from_f64(LEAKY_SLOPE)
    }
}

impl<T: Real> FieldNetwork<T> {
    /// All-zero network.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "invalid network shape: input {input_dim}, hidden {hidden:?}"
            )));
        }
        let layers = layer_shapes(input_dim, hidden);
        let last = layers.last().expect("output layer");
        let count = last.b_off + last.rows;
        Ok(FieldNetwork {
            input_dim,
            layers,
            params: vec![T::zero(); count],
        })
    }

    /// Uniform `±√(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden)?;
        for l in net.layers.clone() {
            let a = (6.0 / (l.rows + l.cols) as f64).sqrt();
            for w in &mut net.params[l.w_off..l.b_off] {
                *w = T::from_f64(rng.random_range(-a..a));
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from per-layer `(rows, cols, weights, biases)`, checking the
    /// skip-connection chain.
    pub fn from_layers(layers: Vec<(usize, usize, Vec<T>, Vec<T>)>) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("network layers: {m}"));
        if layers.len() < 2 {
            return Err(bad("need at least one hidden layer".into()));
        }
        let input_dim = layers[0].1;
        let hidden: Vec<usize> = layers[..layers.len() - 1].iter().map(|l| l.0).collect();
        let mut net = Self::zeros(input_dim, &hidden)?;
        for (shape, (rows, cols, w, b)) in net.layers.clone().iter().zip(layers) {
            if (rows, cols) != (shape.rows, shape.cols) || w.len() != rows * cols || b.len() != rows {
                return Err(bad(format!(
                    "layer {rows}×{cols} inconsistent with expected {}×{}",
                    shape.rows, shape.cols
                )));
            }
            net.params[shape.w_off..shape.b_off].copy_from_slice(&w);
            net.params[shape.b_off..shape.b_off + rows].copy_from_slice(&b);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.params[l.w_off..l.b_off]
    }

    pub fn biases(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.params[l.b_off..l.b_off + l.rows]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Real>(&self) -> FieldNetwork<U> {
        FieldNetwork {
            input_dim: self.input_dim,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    fn check_input(&self, x: &[T]) -> Result<usize> {
        if !x.len().is_multiple_of(self.input_dim) {
            return Err(Error::Config(format!(
                "input length {} is not a multiple of the input width {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(x.len() / self.input_dim)
    }

    /// Forward pass over `n` row-major input rows, keeping intermediate values.
    pub fn forward(&self, x: &[T]) -> Result<ForwardCache<T>> {
        let n = self.check_input(x)?;
        let d = self.input_dim;
        let last = self.layers.len() - 1;
        let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (li, l) in self.layers.iter().enumerate() {
            let w = &self.params[l.w_off..l.b_off];
            let b = &self.params[l.b_off..l.b_off + l.rows];
            let mut z = Vec::with_capacity(n * l.rows);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            // Z = H·W[:, :prev]ᵀ + X·W[:, prev:]ᵀ + b
            if l.prev > 0 {
                let h = post.last().expect("previous layer");
                gemm(
                    n,
                    l.prev,
                    l.rows,
                    T::one(),
                    view(h, l.prev, 1),
                    view(w, 1, l.cols),
                    T::one(),
                    &mut z,
                    l.rows,
                );
            }
            if li < last || l.prev == 0 {
                gemm(
                    n,
                    d,
                    l.rows,
                    T::one(),
                    view(x, d, 1),
                    view(&w[l.prev..], 1, l.cols),
                    T::one(),
                    &mut z,
                    l.rows,
                );
            }
            let a: Vec<T> = if li == last {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z.iter().map(|v| leaky(*v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache { n, pre, post })
    }

    /// `tanh` outputs (`n × 4`) only.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.post.pop().expect("output layer"))
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂outputs` (`n × 4`, w.r.t. the
    /// `tanh` values) and the matching forward cache.
    pub fn backward(&self, x: &[T], cache: &ForwardCache<T>, d_out: &[T], grad: &mut [T]) -> Result<()> {
        let n = cache.n;
        let d = self.input_dim;
        if d_out.len() != n * OUTPUT_DIM || grad.len() != self.params.len() || x.len() != n * d {
            return Err(Error::Config("backward: buffer shapes do not match the network".into()));
        }
        let last = self.layers.len() - 1;
        let out = cache.outputs();
        let mut dz: Vec<T> = d_out.iter().zip(out).map(|(g, o)| *g * (T::one() - *o * *o)).collect();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let w = &self.params[l.w_off..l.b_off];
            // dW[:, :prev] += dZᵀ·H,  dW[:, prev:] += dZᵀ·X
            let gw = &mut grad[l.w_off..l.b_off];
            if l.prev > 0 {
                let h = &cache.post[li - 1];
                gemm(
                    l.rows,
                    n,
                    l.prev,
                    T::one(),
                    view(&dz, 1, l.rows),
                    view(h, l.prev, 1),
                    T::one(),
                    gw,
                    l.cols,
                );
            }
            if li < last || l.prev == 0 {
                gemm(
                    l.rows,
                    n,
                    d,
                    T::one(),
                    view(&dz, 1, l.rows),
                    view(x, d, 1),
                    T::one(),
                    &mut gw[l.prev..],
                    l.cols,
                );
            }
            let gb = &mut grad[l.b_off..l.b_off + l.rows];
            for row in dz.chunks_exact(l.rows) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g = *g + *v;
                }
            }
            if li == 0 {
                break;
            }
            // dH = dZ·W[:, :prev], then through the previous activation.
            let mut dh = vec![T::zero(); n * l.prev];
            gemm(
                n,
                l.rows,
                l.prev,
                T::one(),
                view(&dz, l.rows, 1),
                view(w, l.cols, 1),
                T::zero(),
                &mut dh,
                l.prev,
            );
            for (g, z) in dh.iter_mut().zip(&cache.pre[li - 1]) {
                *g = *g * leaky_grad(*z);
            }
            dz = dh;
        }
        Ok(())
    }
}

//! Batched second-order jet propagation through an MLP with a hand-written
//! reverse pass over the layers.
//!
//! This computes the same quantities as [`super::TapeModel`] (network value,
//! selected input derivatives, and parameter gradients of any function of
//! them) but keeps every jet component for a batch of points in one matrix so
//! each layer is a single GEMM. Activations of a batch of `B` points are
//! stored component-major: rows `c·B .. (c+1)·B` hold component `c`.
//!
//! For a hidden unit `a = σ(z)` the propagated components are
//!
//! ```text
//! a      = σ(z)
//! a_j    = σ′(z) z_j
//! a_jk   = σ″(z) z_j z_k + σ′(z) z_jk
//! ```
//!
//! and the reverse pass applies the transpose of their linearisation.

use std::cell::RefCell;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use super::{Activation, FlatParams, ModelConfig};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};

/// Which jet components a batched pass materialises. Component 0 is always
/// the value; then one slot per first-order direction, then one per pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JetLayout {
    n_inputs: usize,
    dirs: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

impl JetLayout {
    pub fn value_only(n_inputs: usize) -> Self {
        Self {
            n_inputs,
            dirs: Vec::new(),
            pairs: Vec::new(),
        }
    }

    /// Every first- and second-order component.
    pub fn full(n_inputs: usize) -> Self {
        let dirs = (0..n_inputs).collect();
        let pairs = (0..n_inputs).flat_map(|j| (j..n_inputs).map(move |k| (j, k))).collect();
        Self {
            n_inputs,
            dirs,
            pairs,
        }
    }

    /// Pairs must only involve listed directions, since `a_jk` needs `z_j z_k`.
    pub fn new(n_inputs: usize, dirs: &[usize], pairs: &[(usize, usize)]) -> Result<Self> {
        let mut d = dirs.to_vec();
        d.sort_unstable();
        d.dedup();
        if d.iter().any(|&j| j >= n_inputs) {
            return Err(Error::Dimension {
                what: "jet direction",
                expected: n_inputs,
                got: *d.last().unwrap() + 1,
            });
        }
        let mut p: Vec<(usize, usize)> = pairs.iter().map(|&(j, k)| (j.min(k), j.max(k))).collect();
        p.sort_unstable();
        p.dedup();
        if let Some(&(j, k)) = p.iter().find(|(j, k)| !d.contains(j) || !d.contains(k)) {
            return Err(Error::Config(format!(
                "jet pair ({j},{k}) requires both first-order directions"
            )));
        }
        Ok(Self {
            n_inputs,
            dirs: d,
            pairs: p,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn components(&self) -> usize {
        1 + self.dirs.len() + self.pairs.len()
    }

    pub fn dirs(&self) -> &[usize] {
        &self.dirs
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Component slot of first-order direction `j`.
    pub fn dir_slot(&self, j: usize) -> Option<usize> {
        self.dirs.iter().position(|&d| d == j).map(|p| 1 + p)
    }

    /// Component slot of the unordered pair `(j, k)`.
    pub fn pair_slot(&self, j: usize, k: usize) -> Option<usize> {
        let key = (j.min(k), j.max(k));
        self.pairs
            .iter()
            .position(|&p| p == key)
            .map(|p| 1 + self.dirs.len() + p)
    }

    // (pair slot, slot of z_j, slot of z_k)
    fn pair_slots(&self) -> Vec<(usize, usize, usize)> {
        self.pairs
            .iter()
            .map(|&(j, k)| {
                (
                    self.pair_slot(j, k).unwrap(),
                    self.dir_slot(j).unwrap(),
                    self.dir_slot(k).unwrap(),
                )
            })
            .collect()
    }
}

thread_local! {
    // Recycled buffers. Fresh multi-page allocations are returned to the OS
    // on free and fault back in on every chunk, which dominated small passes.
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

const POOL_CAP: usize = 64;

// Smallest pooled buffer that fits, else the largest one.
fn take(len: usize) -> Vec<f64> {
    POOL.with(|p| {
        let mut p = p.borrow_mut();
        let fit = p
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len)
            .min_by_key(|(_, v)| v.capacity())
            .or_else(|| p.iter().enumerate().max_by_key(|(_, v)| v.capacity()))
            .map(|(i, _)| i);
        fit.map(|i| p.swap_remove(i)).unwrap_or_default()
    })
}

fn zeroed(len: usize) -> Vec<f64> {
    let mut v = take(len);
    v.clear();
    v.resize(len, 0.0);
    v
}

/// A buffer whose contents are stale; callers overwrite every entry.
fn scratch(len: usize) -> Vec<f64> {
    let mut v = take(len);
    if v.len() >= len {
        v.truncate(len);
    } else {
        v.resize(len, 0.0);
    }
    v
}

fn zeros2(rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), zeroed(rows * cols)).expect("length matches shape")
}

fn scratch2(rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), scratch(rows * cols)).expect("length matches shape")
}

fn recycle(v: Vec<f64>) {
    if v.capacity() == 0 {
        return;
    }
    POOL.with(|p| {
        let mut p = p.borrow_mut();
        if p.len() < POOL_CAP {
            p.push(v);
        }
    });
}

fn recycle2(a: Array2<f64>) {
    recycle(a.into_raw_vec_and_offset().0);
}

struct HiddenCache {
    /// Pre-activations, all components.
    z: Array2<f64>,
    /// σ′, σ″, σ‴ at the value pre-activation, flattened `B × width`;
    /// `d3` is empty when no second-order pair is propagated.
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

/// Forward state for one batch, kept for the reverse pass.
pub struct BatchPass<'a> {
    config: &'a ModelConfig,
    params: &'a FlatParams,
    layout: JetLayout,
    batch: usize,
    /// Input activations of every layer (`C·B × fan_in`).
    inputs: Vec<Array2<f64>>,
    hidden: Vec<HiddenCache>,
    /// Network output, one entry per `(component, point)`.
    output: Vec<f64>,
}

fn weight_view<'p>(params: &'p FlatParams, l: usize) -> ArrayView2<'p, f64> {
    let lay = &params.layout[l];
    ArrayView2::from_shape((lay.fan_out, lay.fan_in), &params.values[lay.weights.clone()])
        .expect("layout matches weight block")
}

/// Runs the batched forward pass. `coords` holds `B` points of
/// `config.input_dim()` coordinates each, row-major.
pub fn forward<'a>(
    config: &'a ModelConfig,
    params: &'a FlatParams,
    coords: &[f64],
    layout: &JetLayout,
) -> Result<BatchPass<'a>> {
    params.check(config)?;
    let n = config.input_dim();
    if layout.n_inputs() != n {
        return Err(Error::Dimension {
            what: "jet layout inputs",
            expected: n,
            got: layout.n_inputs(),
        });
    }
    if !coords.len().is_multiple_of(n) {
        return Err(Error::Dimension {
            what: "flattened coordinates",
            expected: n,
            got: coords.len() % n,
        });
    }
    let b = coords.len() / n;
    let c = layout.components();
    let mut a = zeros2(c * b, n);
    for i in 0..b {
        for j in 0..n {
            a[[i, j]] = coords[i * n + j];
        }
    }
    for (s, &j) in layout.dirs().iter().enumerate() {
        a.slice_mut(s![(1 + s) * b..(2 + s) * b, j]).fill(1.0);
    }
    let pair_slots = layout.pair_slots();

    let n_layers = config.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut hidden = Vec::with_capacity(n_layers.saturating_sub(1));
    for l in 0..n_layers {
        let lay = &params.layout[l];
        let w = weight_view(params, l);
        let mut z = scratch2(c * b, lay.fan_out);
        general_mat_mul(1.0, &a, &w.t(), 0.0, &mut z);
        let bias = &params.values[lay.biases.clone()];
        for mut row in z.slice_mut(s![0..b, ..]).rows_mut() {
            for (v, bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
        }
        inputs.push(a);
        match config.activation(l) {
            None => {
                a = z;
            }
            Some(act) => {
                let (next, cache) = activate(act, z, b, layout.dirs().len(), &pair_slots);
                hidden.push(cache);
                a = next;
            }
        }
    }
    let output = a.column(0).to_vec();
    recycle2(a);
    Ok(BatchPass {
        config,
        params,
        layout: layout.clone(),
        batch: b,
        inputs,
        hidden,
        output,
    })
}

fn activate(
    act: Activation,
    z: Array2<f64>,
    b: usize,
    n_dirs: usize,
    pair_slots: &[(usize, usize, usize)],
) -> (Array2<f64>, HiddenCache) {
    let bw = b * z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let mut a = scratch2(z.nrows(), z.ncols());
    let av = a.as_slice_mut().expect("standard layout");
    let mut d1 = scratch(bw);
    let mut d2 = scratch(bw);
    let mut d3 = if pair_slots.is_empty() { Vec::new() } else { scratch(bw) };
    let value = av[..bw].iter_mut().zip(&zs[..bw]).zip(d1.iter_mut().zip(d2.iter_mut()));
    if d3.is_empty() {
        for ((f, &zk), (s1, s2)) in value {
            (*f, *s1, *s2, _) = act.eval(zk);
        }
    } else {
        for (((f, &zk), (s1, s2)), s3) in value.zip(d3.iter_mut()) {
            (*f, *s1, *s2, *s3) = act.eval(zk);
        }
    }
    for s in 1..=n_dirs {
        let (zb, ab) = (&zs[s * bw..(s + 1) * bw], &mut av[s * bw..(s + 1) * bw]);
        for ((dst, &zk), &s1) in ab.iter_mut().zip(zb).zip(&d1) {
            *dst = s1 * zk;
        }
    }
    for &(p, sj, sk) in pair_slots {
        let (zj, zk, zp) = (&zs[sj * bw..], &zs[sk * bw..], &zs[p * bw..(p + 1) * bw]);
        let ab = &mut av[p * bw..(p + 1) * bw];
        for k in 0..bw {
            ab[k] = d2[k] * zj[k] * zk[k] + d1[k] * zp[k];
        }
    }
    (a, HiddenCache { z, d1, d2, d3 })
}

impl BatchPass<'_> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn layout(&self) -> &JetLayout {
        &self.layout
    }

    /// Output component `slot` at point `i`.
    pub fn output(&self, slot: usize, i: usize) -> f64 {
        self.output[slot * self.batch + i]
    }

    pub fn outputs(&self) -> &[f64] {
        &self.output
    }

    /// Accumulates `Σ_{c,i} g[c·B + i] · ∂out[c,i]/∂θ` into `grad`.
    pub fn backward(&self, g_out: &[f64], grad: &mut [f64]) -> Result<()> {
        let b = self.batch;
        let c = self.layout.components();
        if g_out.len() != c * b {
            return Err(Error::Dimension {
                what: "output cotangent",
                expected: c * b,
                got: g_out.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension {
                what: "gradient buffer",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let n_dirs = self.layout.dirs().len();
        let pair_slots = self.layout.pair_slots();
        let n_layers = self.config.n_layers();
        let mut buf = scratch(c * b);
        buf.copy_from_slice(g_out);
        let mut g = Array2::from_shape_vec((c * b, 1), buf).expect("shape checked above");
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                g = self.activation_backward(l, g, n_dirs, &pair_slots);
            }
            let lay = &self.params.layout[l];
            {
                let mut gw = ArrayViewMut2::from_shape((lay.fan_out, lay.fan_in), &mut grad[lay.weights.clone()])
                    .expect("layout matches weight block");
                general_mat_mul(1.0, &g.t(), &self.inputs[l], 1.0, &mut gw);
            }
            let gb = &mut grad[lay.biases.clone()];
            for row in g.slice(s![0..b, ..]).rows() {
                for (dst, v) in gb.iter_mut().zip(row) {
                    *dst += v;
                }
            }
            if l > 0 {
                let w = weight_view(self.params, l);
                let mut prev = scratch2(c * b, lay.fan_in);
                general_mat_mul(1.0, &g, &w, 0.0, &mut prev);
                recycle2(std::mem::replace(&mut g, prev));
            }
        }
        recycle2(g);
        Ok(())
    }

    fn activation_backward(
        &self,
        l: usize,
        ga: Array2<f64>,
        n_dirs: usize,
        pair_slots: &[(usize, usize, usize)],
    ) -> Array2<f64> {
        let cache = &self.hidden[l];
        let bw = self.batch * cache.z.ncols();
        let (z, d1, d2) = (cache.z.as_slice().expect("standard layout"), &cache.d1, &cache.d2);
        let gs = ga.as_slice().expect("standard layout");
        let mut gz = scratch2(ga.nrows(), ga.ncols());
        let out = gz.as_slice_mut().expect("standard layout");
        let (gv, rest) = out.split_at_mut(bw);
        for ((v, &g), &s1) in gv.iter_mut().zip(&gs[..bw]).zip(d1) {
            *v = g * s1;
        }
        for s in 1..=n_dirs {
            let (g, zs) = (&gs[s * bw..(s + 1) * bw], &z[s * bw..(s + 1) * bw]);
            let dst = &mut rest[(s - 1) * bw..s * bw];
            for ((v, d), (((&g, &zk), &s1), &s2)) in gv.iter_mut().zip(dst).zip(g.iter().zip(zs).zip(d1).zip(d2)) {
                *v += g * s2 * zk;
                *d = g * s1;
            }
        }
        for &(p, sj, sk) in pair_slots {
            let d3 = &cache.d3;
            let (g, zj, zk, zp) = (
                &gs[p * bw..(p + 1) * bw],
                &z[sj * bw..(sj + 1) * bw],
                &z[sk * bw..(sk + 1) * bw],
                &z[p * bw..(p + 1) * bw],
            );
            for k in 0..bw {
                gv[k] += g[k] * (d3[k] * zj[k] * zk[k] + d2[k] * zp[k]);
                rest[(sj - 1) * bw + k] += g[k] * d2[k] * zk[k];
                rest[(sk - 1) * bw + k] += g[k] * d2[k] * zj[k];
                rest[(p - 1) * bw + k] = g[k] * d1[k];
            }
        }
        recycle2(ga);
        gz
    }
}

impl Drop for BatchPass<'_> {
    fn drop(&mut self) {
        for a in self.inputs.drain(..) {
            recycle2(a);
        }
        for h in self.hidden.drain(..) {
            recycle2(h.z);
            recycle(h.d1);
            recycle(h.d2);
            recycle(h.d3);
        }
    }
}

/// Network values at many points, evaluated in fixed-size chunks.
pub fn predict(
    config: &ModelConfig,
    params: &FlatParams,
    coords: &[f64],
    chunk: usize,
    mode: Parallelism,
) -> Result<Vec<f64>> {
    let n = config.input_dim();
    let per = chunk.max(1) * n;
    let chunks: Vec<&[f64]> = coords.chunks(per).collect();
    let layout = JetLayout::value_only(n);
    let parts = par::map_slice(&chunks, mode, |xs| {
        forward(config, params, xs, &layout).map(|mut p| std::mem::take(&mut p.output))
    });
    let mut out = Vec::with_capacity(coords.len() / n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Jet2, Tape};
    use crate::models::{init, Arch, TapeModel};

    fn setup(arch: Arch) -> (ModelConfig, FlatParams) {
        let cfg = ModelConfig::new(arch, vec![2, 5, 4, 1], 21).unwrap();
        let mut p = init(&cfg).unwrap();
        for (i, v) in p.values.iter_mut().enumerate() {
            *v += 0.01 * (i as f64).sin();
        }
        (cfg, p)
    }

    const PTS: [[f64; 2]; 3] = [[0.3, 0.1], [-0.7, 0.8], [1.9, -0.4]];

    #[test]
    fn outputs_match_tape_jets() {
        for arch in [Arch::MlpTanh, Arch::Fls] {
            let (cfg, p) = setup(arch);
            let layout = JetLayout::full(2);
            let coords: Vec<f64> = PTS.iter().flatten().copied().collect();
            let pass = forward(&cfg, &p, &coords, &layout).unwrap();
            for (i, x) in PTS.iter().enumerate() {
                let jet: Jet2<f64> = crate::models::forward_jet_with(&cfg, &p.values, x).unwrap();
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * (1.0 + b.abs());
                assert!(close(pass.output(0, i), jet.value));
                assert!(close(pass.output(layout.dir_slot(0).unwrap(), i), jet.grad[0]));
                assert!(close(pass.output(layout.dir_slot(1).unwrap(), i), jet.grad[1]));
                assert!(close(pass.output(layout.pair_slot(0, 0).unwrap(), i), *jet.hess_at(0, 0)));
                assert!(close(pass.output(layout.pair_slot(0, 1).unwrap(), i), *jet.hess_at(0, 1)));
                assert!(close(pass.output(layout.pair_slot(1, 1).unwrap(), i), *jet.hess_at(1, 1)));
            }
        }
    }

    #[test]
    fn backward_matches_tape() {
        // weighted sum of every component over all points
        for arch in [Arch::MlpTanh, Arch::Fls] {
            let (cfg, p) = setup(arch);
            for layout in [
                JetLayout::value_only(2),
                JetLayout::new(2, &[1], &[]).unwrap(),
                JetLayout::new(2, &[0, 1], &[(0, 0), (1, 1)]).unwrap(),
                JetLayout::full(2),
            ] {
                let c = layout.components();
                let coords: Vec<f64> = PTS.iter().flatten().copied().collect();
                let pass = forward(&cfg, &p, &coords, &layout).unwrap();
                let weights: Vec<f64> = (0..c * PTS.len()).map(|k| 0.3 + 0.17 * k as f64).collect();
                let mut grad = vec![0.0; p.len()];
                pass.backward(&weights, &mut grad).unwrap();

                let tape = Tape::new();
                let model = TapeModel::bind(&tape, &cfg, &p).unwrap();
                let mut terms = Vec::new();
                for (i, x) in PTS.iter().enumerate() {
                    let jet = model.forward_jet(x).unwrap();
                    let mut comps = vec![jet.value];
                    for &j in layout.dirs() {
                        comps.push(jet.grad[j]);
                    }
                    for &(j, k) in layout.pairs() {
                        comps.push(*jet.hess_at(j, k));
                    }
                    for (slot, v) in comps.into_iter().enumerate() {
                        terms.push(v.scale(weights[slot * PTS.len() + i]));
                    }
                }
                let total = tape.sum(&terms);
                let expect = total.backward().unwrap();
                for (a, e) in grad.iter().zip(&expect) {
                    assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{a} vs {e} for {layout:?}");
                }
            }
        }
    }

    #[test]
    fn predict_is_chunk_independent() {
        let (cfg, p) = setup(Arch::MlpTanh);
        let coords: Vec<f64> = (0..50).flat_map(|i| [i as f64 * 0.1, 1.0 - i as f64 * 0.02]).collect();
        let a = predict(&cfg, &p, &coords, 7, Parallelism::Sequential).unwrap();
        let b = predict(&cfg, &p, &coords, 64, Parallelism::Parallel).unwrap();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            let plain = crate::models::forward(&cfg, &p, &coords[2 * i..2 * i + 2]).unwrap();
            assert!((x - y).abs() < 1e-14 && (x - plain).abs() < 1e-13);
        }
    }

    #[test]
    fn layout_requires_directions_for_pairs() {
        assert!(JetLayout::new(2, &[1], &[(0, 1)]).is_err());
        let l = JetLayout::new(2, &[1, 0], &[(1, 0)]).unwrap();
        assert_eq!(l.components(), 4);
        assert_eq!(l.pair_slot(0, 1), Some(3));
    }
}

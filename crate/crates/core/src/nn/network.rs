use serde::{Deserialize, Serialize};

use super::layout::{Block, Dense, Gate, Layout, Norm};
use super::ParameterSet;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Keys and values a block attended over, one row per window position.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMemory {
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Raw head outputs, masked entries included.
    pub logits: Vec<f64>,
    /// Masked softmax of `logits`.
    pub probs: Vec<f64>,
    pub value: f64,
    pub attention_memory: Vec<BlockMemory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub a_v: f64,
    pub a_p: f64,
    pub a_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            a_v: 0.5,
            a_p: 1.0,
            a_e: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a_v", self.a_v), ("a_p", self.a_p), ("a_e", self.a_e)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One learner sample: a state window ending at the sampled step, plus
/// the targets computed from the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub window: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub action: usize,
    /// Corrected value target for the last state of the window.
    pub value_target: f64,
    /// Policy-gradient advantage; treated as a constant.
    pub advantage: f64,
    /// Truncated importance ratio for the taken action.
    pub rho: f64,
    /// Importance-sampling weight from prioritized sampling.
    pub is_weight: f64,
}

/// Batch loss terms, each already scaled by the per-sample IS weight and
/// summed over the batch. `total` is the differentiated objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub policy: f64,
    pub entropy: f64,
    pub total: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutput {
    pub grads: Vec<f64>,
    pub report: LossReport,
}

/// Softmax restricted to entries where `mask` is true; masked entries get
/// exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} logits",
            mask.len(),
            logits.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Precondition(
            "action mask has no feasible entry".into(),
        ));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// Shannon entropy in nats.
pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

fn relu_back(pre: &[f64], d: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(d)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn square(offset: usize, dim: usize) -> Dense {
    Dense {
        w: offset,
        b: None,
        rows: dim,
        cols: dim,
    }
}

fn dense_fwd(p: &[f64], d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.rows)
        .map(|r| {
            let row = &p[d.w + r * d.cols..d.w + (r + 1) * d.cols];
            let bias = d.b.map_or(0.0, |b| p[b + r]);
            row.iter().zip(x).fold(bias, |s, (w, x)| s + w * x)
        })
        .collect()
}

/// Accumulates parameter gradients and returns the input gradient.
fn dense_bwd(p: &[f64], g: &mut [f64], d: &Dense, x: &[f64], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; d.cols];
    for (r, &dyr) in dy.iter().enumerate() {
        if dyr == 0.0 {
            continue;
        }
        if let Some(b) = d.b {
            g[b + r] += dyr;
        }
        let base = d.w + r * d.cols;
        for c in 0..d.cols {
            g[base + c] += dyr * x[c];
            dx[c] += p[base + c] * dyr;
        }
    }
    dx
}

#[derive(Debug, Clone)]
struct NormTrace {
    xhat: Vec<f64>,
    inv_std: f64,
}

fn norm_fwd(p: &[f64], n: &Norm, x: &[f64]) -> (Vec<f64>, NormTrace) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat
        .iter()
        .enumerate()
        .map(|(i, &h)| p[n.gain + i] * h + p[n.bias + i])
        .collect();
    (y, NormTrace { xhat, inv_std })
}

fn norm_bwd(p: &[f64], g: &mut [f64], n: &Norm, t: &NormTrace, dy: &[f64]) -> Vec<f64> {
    let d = dy.len();
    let mut dxhat = vec![0.0; d];
    for i in 0..d {
        g[n.gain + i] += dy[i] * t.xhat[i];
        g[n.bias + i] += dy[i];
        dxhat[i] = dy[i] * p[n.gain + i];
    }
    let sum: f64 = dxhat.iter().sum();
    let dot: f64 = dxhat.iter().zip(&t.xhat).map(|(a, b)| a * b).sum();
    let df = d as f64;
    (0..d)
        .map(|i| t.inv_std / df * (df * dxhat[i] - sum - t.xhat[i] * dot))
        .collect()
}

#[derive(Debug, Clone)]
struct GateTrace {
    r: Vec<f64>,
    z: Vec<f64>,
    h: Vec<f64>,
    rx: Vec<f64>,
}

/// GRU-style gate combining residual stream `x` with sublayer output `y`.
fn gate_fwd(p: &[f64], gt: &Gate, x: &[f64], y: &[f64]) -> (Vec<f64>, GateTrace) {
    let d = x.len();
    let wr = dense_fwd(p, &square(gt.wr, d), y);
    let ur = dense_fwd(p, &square(gt.ur, d), x);
    let wz = dense_fwd(p, &square(gt.wz, d), y);
    let uz = dense_fwd(p, &square(gt.uz, d), x);
    let r: Vec<f64> = (0..d).map(|i| sigmoid(wr[i] + ur[i])).collect();
    let z: Vec<f64> = (0..d)
        .map(|i| sigmoid(wz[i] + uz[i] - p[gt.bz + i]))
        .collect();
    let rx: Vec<f64> = (0..d).map(|i| r[i] * x[i]).collect();
    let wg = dense_fwd(p, &square(gt.wg, d), y);
    let ug = dense_fwd(p, &square(gt.ug, d), &rx);
    let h: Vec<f64> = (0..d).map(|i| (wg[i] + ug[i]).tanh()).collect();
    let out = (0..d).map(|i| (1.0 - z[i]) * x[i] + z[i] * h[i]).collect();
    (out, GateTrace { r, z, h, rx })
}

fn gate_bwd(
    p: &[f64],
    g: &mut [f64],
    gt: &Gate,
    x: &[f64],
    y: &[f64],
    t: &GateTrace,
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = x.len();
    let mut dx: Vec<f64> = (0..d).map(|i| dout[i] * (1.0 - t.z[i])).collect();
    let mut dy = vec![0.0; d];
    let dh_pre: Vec<f64> = (0..d)
        .map(|i| dout[i] * t.z[i] * (1.0 - t.h[i] * t.h[i]))
        .collect();
    let dz_pre: Vec<f64> = (0..d)
        .map(|i| dout[i] * (t.h[i] - x[i]) * t.z[i] * (1.0 - t.z[i]))
        .collect();
    add_into(&mut dy, &dense_bwd(p, g, &square(gt.wg, d), y, &dh_pre));
    let drx = dense_bwd(p, g, &square(gt.ug, d), &t.rx, &dh_pre);
    let dr_pre: Vec<f64> = (0..d)
        .map(|i| drx[i] * x[i] * t.r[i] * (1.0 - t.r[i]))
        .collect();
    for i in 0..d {
        dx[i] += drx[i] * t.r[i];
        g[gt.bz + i] -= dz_pre[i];
    }
    add_into(&mut dy, &dense_bwd(p, g, &square(gt.wz, d), y, &dz_pre));
    add_into(&mut dx, &dense_bwd(p, g, &square(gt.uz, d), x, &dz_pre));
    add_into(&mut dy, &dense_bwd(p, g, &square(gt.wr, d), y, &dr_pre));
    add_into(&mut dx, &dense_bwd(p, g, &square(gt.ur, d), x, &dr_pre));
    (dx, dy)
}

#[derive(Debug, Clone)]
struct TrunkTrace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    x: Vec<Vec<f64>>,
    ln1: Vec<NormTrace>,
    y1: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `[head][query][key]`
    att: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    mr: Vec<Vec<f64>>,
    g1: Vec<GateTrace>,
    x1: Vec<Vec<f64>>,
    ln2: Vec<NormTrace>,
    y2: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h1r: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    h2r: Vec<Vec<f64>>,
    g2: Vec<GateTrace>,
}

struct Trace {
    trunk: Vec<TrunkTrace>,
    blocks: Vec<BlockTrace>,
    head_in: Vec<f64>,
    logits: Vec<f64>,
    value: f64,
}

fn check_rows(rows: &[Vec<f64>], layer: impl FnOnce() -> String) -> Result<()> {
    if rows.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer: layer() })
    }
}

fn block_fwd(
    p: &[f64],
    blk: &Block,
    heads: usize,
    head_dim: usize,
    xs: Vec<Vec<f64>>,
) -> (Vec<Vec<f64>>, BlockTrace) {
    let w = xs.len();
    let (y1, ln1): (Vec<_>, Vec<_>) = xs.iter().map(|x| norm_fwd(p, &blk.ln1, x)).unzip();
    let q: Vec<_> = y1.iter().map(|y| dense_fwd(p, &blk.q, y)).collect();
    let k: Vec<_> = y1.iter().map(|y| dense_fwd(p, &blk.k, y)).collect();
    let v: Vec<_> = y1.iter().map(|y| dense_fwd(p, &blk.v, y)).collect();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut o = vec![vec![0.0; heads * head_dim]; w];
    let mut att = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        let mut a = vec![vec![0.0; w]; w];
        for i in 0..w {
            let scores: Vec<f64> = (0..w)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() * scale)
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..w {
                a[i][j] = exps[j] / sum;
                for c in cols.clone() {
                    o[i][c] += a[i][j] * v[j][c];
                }
            }
        }
        att.push(a);
    }
    let m: Vec<_> = o.iter().map(|row| dense_fwd(p, &blk.o, row)).collect();
    let mr: Vec<_> = m.iter().map(|row| relu(row)).collect();
    let (x1, g1): (Vec<_>, Vec<_>) = (0..w)
        .map(|i| gate_fwd(p, &blk.gate1, &xs[i], &mr[i]))
        .unzip();
    let (y2, ln2): (Vec<_>, Vec<_>) = x1.iter().map(|x| norm_fwd(p, &blk.ln2, x)).unzip();
    let h1: Vec<_> = y2.iter().map(|y| dense_fwd(p, &blk.mlp1, y)).collect();
    let h1r: Vec<_> = h1.iter().map(|r| relu(r)).collect();
    let h2: Vec<_> = h1r.iter().map(|r| dense_fwd(p, &blk.mlp2, r)).collect();
    let h2r: Vec<_> = h2.iter().map(|r| relu(r)).collect();
    let (out, g2): (Vec<_>, Vec<_>) = (0..w)
        .map(|i| gate_fwd(p, &blk.gate2, &x1[i], &h2r[i]))
        .unzip();
    let trace = BlockTrace {
        x: xs,
        ln1,
        y1,
        q,
        k,
        v,
        att,
        o,
        m,
        mr,
        g1,
        x1,
        ln2,
        y2,
        h1,
        h1r,
        h2,
        h2r,
        g2,
    };
    (out, trace)
}

fn block_bwd(
    p: &[f64],
    g: &mut [f64],
    blk: &Block,
    heads: usize,
    head_dim: usize,
    t: &BlockTrace,
    dout: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let w = t.x.len();
    let a_dim = heads * head_dim;
    let mut dx = Vec::with_capacity(w);
    let mut do_rows = Vec::with_capacity(w);
    for i in 0..w {
        let (mut dx1, dh2r) = gate_bwd(p, g, &blk.gate2, &t.x1[i], &t.h2r[i], &t.g2[i], &dout[i]);
        let dh2 = relu_back(&t.h2[i], &dh2r);
        let dh1r = dense_bwd(p, g, &blk.mlp2, &t.h1r[i], &dh2);
        let dh1 = relu_back(&t.h1[i], &dh1r);
        let dy2 = dense_bwd(p, g, &blk.mlp1, &t.y2[i], &dh1);
        add_into(&mut dx1, &norm_bwd(p, g, &blk.ln2, &t.ln2[i], &dy2));
        let (dxi, dmr) = gate_bwd(p, g, &blk.gate1, &t.x[i], &t.mr[i], &t.g1[i], &dx1);
        let dm = relu_back(&t.m[i], &dmr);
        do_rows.push(dense_bwd(p, g, &blk.o, &t.o[i], &dm));
        dx.push(dxi);
    }
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut dq = vec![vec![0.0; a_dim]; w];
    let mut dk = vec![vec![0.0; a_dim]; w];
    let mut dv = vec![vec![0.0; a_dim]; w];
    for h in 0..heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        let a = &t.att[h];
        for i in 0..w {
            let da: Vec<f64> = (0..w)
                .map(|j| cols.clone().map(|c| do_rows[i][c] * t.v[j][c]).sum())
                .collect();
            let inner: f64 = (0..w).map(|j| a[i][j] * da[j]).sum();
            for j in 0..w {
                for c in cols.clone() {
                    dv[j][c] += a[i][j] * do_rows[i][c];
                }
                let ds = a[i][j] * (da[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in cols.clone() {
                    dq[i][c] += ds * t.k[j][c];
                    dk[j][c] += ds * t.q[i][c];
                }
            }
        }
    }
    for i in 0..w {
        let mut dy1 = dense_bwd(p, g, &blk.q, &t.y1[i], &dq[i]);
        add_into(&mut dy1, &dense_bwd(p, g, &blk.k, &t.y1[i], &dk[i]));
        add_into(&mut dy1, &dense_bwd(p, g, &blk.v, &t.y1[i], &dv[i]));
        add_into(&mut dx[i], &norm_bwd(p, g, &blk.ln1, &t.ln1[i], &dy1));
    }
    dx
}

fn validate_window<W: AsRef<[f64]>>(params: &ParameterSet, window: &[W]) -> Result<()> {
    let cfg = &params.config;
    if window.is_empty() {
        return Err(Error::Shape("state window is empty".into()));
    }
    if window.len() > cfg.context_window {
        return Err(Error::Shape(format!(
            "window of {} states exceeds context window {}",
            window.len(),
            cfg.context_window
        )));
    }
    if let Some(bad) = window.iter().find(|s| s.as_ref().len() != cfg.input_dim) {
        return Err(Error::Shape(format!(
            "state has {} features, network expects {}",
            bad.as_ref().len(),
            cfg.input_dim
        )));
    }
    if params.values.len() != Layout::new(cfg).total {
        return Err(Error::Shape(format!(
            "parameter vector has {} entries, layout needs {}",
            params.values.len(),
            Layout::new(cfg).total
        )));
    }
    Ok(())
}

fn run<W: AsRef<[f64]>>(params: &ParameterSet, layout: &Layout, window: &[W]) -> Result<Trace> {
    validate_window(params, window)?;
    params.check_finite()?;
    let cfg = &params.config;
    let p = &params.values;
    let mut trunk = Vec::with_capacity(window.len());
    for s in window {
        let mut acts = vec![s.as_ref().to_vec()];
        let mut pre = Vec::with_capacity(layout.trunk.len());
        for (l, d) in layout.trunk.iter().enumerate() {
            let z = dense_fwd(p, d, acts.last().expect("input row"));
            let a: Vec<f64> = z.iter().map(|&v| cfg.activation.apply(v)).collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: format!("trunk.{l}"),
                });
            }
            pre.push(z);
            acts.push(a);
        }
        trunk.push(TrunkTrace { acts, pre });
    }
    let mut xs: Vec<Vec<f64>> = trunk
        .iter()
        .map(|t| t.acts.last().expect("row").clone())
        .collect();
    let mut blocks = Vec::with_capacity(layout.blocks.len());
    if let Some(pos) = layout.positions {
        let d = cfg.model_dim();
        let first = cfg.context_window - window.len();
        for (i, x) in xs.iter_mut().enumerate() {
            add_into(x, &p[pos + (first + i) * d..pos + (first + i + 1) * d]);
        }
        for (b, blk) in layout.blocks.iter().enumerate() {
            let (out, trace) = block_fwd(p, blk, cfg.heads, cfg.head_dim, xs);
            check_rows(&out, || format!("block.{b}"))?;
            blocks.push(trace);
            xs = out;
        }
    }
    let head_in = xs.pop().expect("non-empty window");
    let logits = dense_fwd(p, &layout.policy, &head_in);
    let value = dense_fwd(p, &layout.value, &head_in)[0];
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            layer: "policy".into(),
        });
    }
    if !value.is_finite() {
        return Err(Error::Numeric {
            layer: "value".into(),
        });
    }
    Ok(Trace {
        trunk,
        blocks,
        head_in,
        logits,
        value,
    })
}

fn backprop(
    params: &ParameterSet,
    layout: &Layout,
    t: &Trace,
    dlogits: &[f64],
    dvalue: f64,
    g: &mut [f64],
) {
    let cfg = &params.config;
    let p = &params.values;
    let mut dh = dense_bwd(p, g, &layout.policy, &t.head_in, dlogits);
    add_into(
        &mut dh,
        &dense_bwd(p, g, &layout.value, &t.head_in, &[dvalue]),
    );
    let w = t.trunk.len();
    let mut drows = vec![vec![0.0; dh.len()]; w];
    drows[w - 1] = dh;
    for (blk, trace) in layout.blocks.iter().zip(&t.blocks).rev() {
        drows = block_bwd(p, g, blk, cfg.heads, cfg.head_dim, trace, &drows);
    }
    if let Some(pos) = layout.positions {
        let d = cfg.model_dim();
        let first = cfg.context_window - w;
        for (i, row) in drows.iter().enumerate() {
            add_into(
                &mut g[pos + (first + i) * d..pos + (first + i + 1) * d],
                row,
            );
        }
    }
    for (tt, mut da) in t.trunk.iter().zip(drows) {
        for (l, d) in layout.trunk.iter().enumerate().rev() {
            let dz: Vec<f64> = tt.pre[l]
                .iter()
                .zip(&tt.acts[l + 1])
                .zip(&da)
                .map(|((&x, &y), &gr)| gr * cfg.activation.derivative(x, y))
                .collect();
            da = dense_bwd(p, g, d, &tt.acts[l], &dz);
        }
    }
}

/// Evaluates the network on the last `window.len()` states. Positions are
/// right-aligned within the context window; absent slots are excluded from
/// attention.
pub fn forward<W: AsRef<[f64]>>(
    params: &ParameterSet,
    window: &[W],
    mask: &[bool],
) -> Result<ForwardOutput> {
    let layout = Layout::new(&params.config);
    let t = run(params, &layout, window)?;
    let probs = masked_softmax(&t.logits, mask)?;
    let attention_memory = t
        .blocks
        .iter()
        .map(|b| BlockMemory {
            keys: b.k.clone(),
            values: b.v.clone(),
        })
        .collect();
    Ok(ForwardOutput {
        logits: t.logits,
        probs,
        value: t.value,
        attention_memory,
    })
}

struct SampleLoss {
    value: f64,
    policy: f64,
    entropy: f64,
    dlogits: Vec<f64>,
    dvalue: f64,
}

fn sample_loss(t: &Trace, s: &LossSample, w: &LossWeights) -> Result<SampleLoss> {
    let probs = masked_softmax(&t.logits, &s.mask)?;
    if s.action >= probs.len() || !s.mask[s.action] {
        return Err(Error::Precondition(format!(
            "action {} is not a feasible choice",
            s.action
        )));
    }
    let max = t
        .logits
        .iter()
        .zip(&s.mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + t.logits
            .iter()
            .zip(&s.mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| (l - max).exp())
            .sum::<f64>()
            .ln();
    let logp: Vec<f64> = t.logits.iter().map(|&l| l - lse).collect();
    let value = (s.value_target - t.value).powi(2);
    let policy = -s.rho * logp[s.action] * s.advantage;
    let entropy: f64 = probs
        .iter()
        .zip(&s.mask)
        .zip(&logp)
        .filter(|((_, &m), _)| m)
        .map(|((&pr, _), &lp)| pr * lp)
        .sum();
    let iw = s.is_weight;
    let dlogits = (0..probs.len())
        .map(|j| {
            if !s.mask[j] {
                return 0.0;
            }
            let onehot = if j == s.action { 1.0 } else { 0.0 };
            let dp = -s.rho * s.advantage * (onehot - probs[j]);
            let de = probs[j] * (logp[j] - entropy);
            iw * (w.a_p * dp + w.a_e * de)
        })
        .collect();
    let dvalue = iw * w.a_v * -2.0 * (s.value_target - t.value);
    Ok(SampleLoss {
        value,
        policy,
        entropy,
        dlogits,
        dvalue,
    })
}

fn validate_sample(s: &LossSample) -> Result<()> {
    for (name, v) in [
        ("value_target", s.value_target),
        ("advantage", s.advantage),
        ("rho", s.rho),
        ("is_weight", s.is_weight),
    ] {
        if !v.is_finite() {
            return Err(Error::Numeric {
                layer: format!("loss input {name}"),
            });
        }
    }
    Ok(())
}

fn accumulate(report: &mut LossReport, l: &SampleLoss, iw: f64, w: &LossWeights) {
    report.value += iw * l.value;
    report.policy += iw * l.policy;
    report.entropy += iw * l.entropy;
    report.total += iw * (w.a_v * l.value + w.a_p * l.policy + w.a_e * l.entropy);
    report.samples += 1;
}

/// Loss terms without gradients.
pub fn loss_only(
    params: &ParameterSet,
    batch: &[LossSample],
    weights: &LossWeights,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Precondition("gradient batch is empty".into()));
    }
    let layout = Layout::new(&params.config);
    let mut report = LossReport::default();
    for s in batch {
        validate_sample(s)?;
        let t = run(params, &layout, &s.window)?;
        let l = sample_loss(&t, s, weights)?;
        accumulate(&mut report, &l, s.is_weight, weights);
    }
    Ok(report)
}

/// Exact gradient of the summed, IS-weighted actor-critic loss.
pub fn gradients(
    params: &ParameterSet,
    batch: &[LossSample],
    weights: &LossWeights,
) -> Result<GradientOutput> {
    if batch.is_empty() {
        return Err(Error::Precondition("gradient batch is empty".into()));
    }
    weights.validate()?;
    let layout = Layout::new(&params.config);
    let mut grads = vec![0.0; layout.total];
    let mut report = LossReport::default();
    for s in batch {
        validate_sample(s)?;
        let t = run(params, &layout, &s.window)?;
        let l = sample_loss(&t, s, weights)?;
        accumulate(&mut report, &l, s.is_weight, weights);
        backprop(params, &layout, &t, &l.dlogits, l.dvalue, &mut grads);
    }
    if let Some(idx) = grads.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            layer: format!("gradient of {}", layout.segment_of(idx).unwrap_or("?")),
        });
    }
    Ok(GradientOutput { grads, report })
}

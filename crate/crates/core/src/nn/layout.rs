use super::{Activation, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zero,
    One,
    Const(f64),
    Uniform(f64),
}

/// Named contiguous range of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub(crate) init: Init,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: Option<usize>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Gate {
    pub wr: usize,
    pub ur: usize,
    pub wz: usize,
    pub uz: usize,
    pub wg: usize,
    pub ug: usize,
    pub bz: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub ln1: Norm,
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub gate1: Gate,
    pub ln2: Norm,
    pub mlp1: Dense,
    pub mlp2: Dense,
    pub gate2: Gate,
}

/// Offsets of every parameter group for a given configuration.
#[derive(Debug, Clone)]
pub struct Layout {
    pub(crate) trunk: Vec<Dense>,
    pub(crate) positions: Option<usize>,
    pub(crate) blocks: Vec<Block>,
    pub(crate) policy: Dense,
    pub(crate) value: Dense,
    pub segments: Vec<Segment>,
    pub total: usize,
}

struct Builder {
    segments: Vec<Segment>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, len: usize, init: Init) -> usize {
        let offset = self.total;
        self.segments.push(Segment {
            name,
            offset,
            len,
            init,
        });
        self.total += len;
        offset
    }

    fn dense(&mut self, name: &str, rows: usize, cols: usize, bias: bool, init: Init) -> Dense {
        let w = self.push(format!("{name}.w"), rows * cols, init);
        let b = bias.then(|| self.push(format!("{name}.b"), rows, Init::Zero));
        Dense { w, b, rows, cols }
    }

    fn norm(&mut self, name: &str, dim: usize) -> Norm {
        Norm {
            gain: self.push(format!("{name}.gain"), dim, Init::One),
            bias: self.push(format!("{name}.bias"), dim, Init::Zero),
        }
    }

    fn gate(&mut self, name: &str, dim: usize, gate_bias: f64) -> Gate {
        let g = glorot(dim, dim);
        let mut m = |part: &str| self.push(format!("{name}.{part}"), dim * dim, Init::Uniform(g));
        let (wr, ur, wz, uz, wg, ug) = (m("wr"), m("ur"), m("wz"), m("uz"), m("wg"), m("ug"));
        let bz = self.push(format!("{name}.bz"), dim, Init::Const(gate_bias));
        Gate {
            wr,
            ur,
            wz,
            uz,
            wg,
            ug,
            bz,
        }
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn he(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl Layout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut b = Builder {
            segments: Vec::new(),
            total: 0,
        };
        let mut width = cfg.input_dim;
        let mut trunk = Vec::new();
        for (i, &units) in cfg.fc_units.iter().enumerate() {
            let bound = match cfg.activation {
                Activation::Relu => he(width),
                Activation::Tanh => glorot(width, units),
            };
            trunk.push(b.dense(
                &format!("trunk.{i}"),
                units,
                width,
                true,
                Init::Uniform(bound),
            ));
            width = units;
        }
        let d = width;
        let a = cfg.attention_dim();
        let (positions, blocks) = if cfg.tf_units > 0 {
            let positions = Some(b.push(
                "positions".into(),
                cfg.context_window * d,
                Init::Uniform(0.1),
            ));
            let blocks = (0..cfg.tf_units)
                .map(|i| {
                    let name = format!("block.{i}");
                    let ln1 = b.norm(&format!("{name}.ln1"), d);
                    let q = b.dense(
                        &format!("{name}.q"),
                        a,
                        d,
                        false,
                        Init::Uniform(glorot(d, a)),
                    );
                    let k = b.dense(
                        &format!("{name}.k"),
                        a,
                        d,
                        false,
                        Init::Uniform(glorot(d, a)),
                    );
                    let v = b.dense(
                        &format!("{name}.v"),
                        a,
                        d,
                        false,
                        Init::Uniform(glorot(d, a)),
                    );
                    let o = b.dense(
                        &format!("{name}.o"),
                        d,
                        a,
                        false,
                        Init::Uniform(glorot(a, d)),
                    );
                    let gate1 = b.gate(&format!("{name}.gate1"), d, cfg.gate_bias);
                    let ln2 = b.norm(&format!("{name}.ln2"), d);
                    let mlp1 = b.dense(
                        &format!("{name}.mlp1"),
                        cfg.mlp_dim,
                        d,
                        true,
                        Init::Uniform(he(d)),
                    );
                    let mlp2 = b.dense(
                        &format!("{name}.mlp2"),
                        d,
                        cfg.mlp_dim,
                        true,
                        Init::Uniform(glorot(cfg.mlp_dim, d)),
                    );
                    let gate2 = b.gate(&format!("{name}.gate2"), d, cfg.gate_bias);
                    Block {
                        ln1,
                        q,
                        k,
                        v,
                        o,
                        gate1,
                        ln2,
                        mlp1,
                        mlp2,
                        gate2,
                    }
                })
                .collect();
            (positions, blocks)
        } else {
            (None, Vec::new())
        };
        let policy = b.dense(
            "policy",
            cfg.action_count,
            d,
            true,
            Init::Uniform(0.01 * glorot(d, cfg.action_count)),
        );
        let value = b.dense("value", 1, d, true, Init::Uniform(0.1 * glorot(d, 1)));
        Layout {
            trunk,
            positions,
            blocks,
            policy,
            value,
            segments: b.segments,
            total: b.total,
        }
    }

    pub fn segment_of(&self, index: usize) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| index >= s.offset && index < s.offset + s.len)
            .map(|s| s.name.as_str())
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

//! Small dense networks with hand-written backpropagation and Adam.
//!
//! Parameters live in one flat buffer: for each affine layer the weight
//! matrix (row-major, `out × in`) followed by its bias.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

/// Extra input appended to the activations of hidden layer `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concat {
    pub layer: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    concat: Option<Concat>,
}

impl MlpSpec {
    /// `activations[l]` follows affine layer `l`, so there is one fewer than `sizes`.
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>, concat: Option<Concat>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(format!("need at least 2 layers, got {}", sizes.len())));
        }
        if sizes.contains(&0) {
            return Err(Error::Shape(format!("layer sizes must be positive: {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} activations for {} affine layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        if let Some(c) = concat {
            if c.layer == 0 || c.layer >= sizes.len() - 1 {
                return Err(Error::Shape(format!(
                    "concat layer {} is not a hidden layer of {sizes:?}",
                    c.layer
                )));
            }
            if c.width == 0 {
                return Err(Error::Shape("concat width must be positive".into()));
            }
        }
        Ok(MlpSpec {
            sizes,
            activations,
            concat,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn concat(&self) -> Option<Concat> {
        self.concat
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn side_width(&self) -> usize {
        self.concat.map_or(0, |c| c.width)
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Fan-in of affine layer `l`, including any concatenated input.
    pub fn fan_in(&self, l: usize) -> usize {
        let extra = match self.concat {
            Some(c) if c.layer == l => c.width,
            _ => 0,
        };
        self.sizes[l] + extra
    }

    pub fn fan_out(&self, l: usize) -> usize {
        self.sizes[l + 1]
    }

    pub fn param_count(&self) -> usize {
        (0..self.layer_count())
            .map(|l| self.fan_out(l) * (self.fan_in(l) + 1))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerSlot {
    weights: usize,
    bias: usize,
    rows: usize,
    cols: usize,
}

fn layout(spec: &MlpSpec) -> Vec<LayerSlot> {
    let mut offset = 0;
    (0..spec.layer_count())
        .map(|l| {
            let (rows, cols) = (spec.fan_out(l), spec.fan_in(l));
            let slot = LayerSlot {
                weights: offset,
                bias: offset + rows * cols,
                rows,
                cols,
            };
            offset += rows * (cols + 1);
            slot
        })
        .collect()
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Network parameters. Every mutation takes a fresh generation so tapes
/// recorded against older values are rejected.
#[derive(Clone, Debug)]
pub struct MlpParams {
    spec: MlpSpec,
    slots: Vec<LayerSlot>,
    data: Vec<f64>,
    generation: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.data == other.data
    }
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        MlpParams {
            spec: spec.clone(),
            slots: layout(spec),
            data: vec![0.0; spec.param_count()],
            generation: next_generation(),
        }
    }

    /// Weights and biases uniform in `±1/√fan_in` of their layer.
    pub fn init(spec: &MlpSpec, rng: &mut RngStream) -> Self {
        let mut p = MlpParams::zeros(spec);
        for l in 0..spec.layer_count() {
            let bound = 1.0 / (spec.fan_in(l) as f64).sqrt();
            let slot = p.slots[l];
            for x in &mut p.data[slot.weights..slot.bias + slot.rows] {
                *x = rng.uniform(-bound, bound);
            }
        }
        p
    }

    pub fn from_flat(spec: &MlpSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                data.len(),
                spec.param_count()
            )));
        }
        Ok(MlpParams {
            spec: spec.clone(),
            slots: layout(spec),
            data,
            generation: next_generation(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn weight(&self, l: usize, r: usize, c: usize) -> f64 {
        let s = self.slots[l];
        assert!(r < s.rows && c < s.cols, "weight index out of range");
        self.data[s.weights + r * s.cols + c]
    }

    pub fn bias(&self, l: usize, r: usize) -> f64 {
        let s = self.slots[l];
        assert!(r < s.rows, "bias index out of range");
        self.data[s.bias + r]
    }

    /// Mutable access to the flat buffer; bumps the generation.
    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn same_shape(&self, other: &MlpParams) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!(
                "network {:?} does not match {:?}",
                self.spec.sizes, other.spec.sizes
            )));
        }
        Ok(())
    }
}

/// Activations recorded by [`mlp_forward`].
#[derive(Clone, Debug)]
pub struct Tape {
    generation: u64,
    /// Input of each affine layer, after concatenation.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("tape has at least one layer")
    }
}

pub fn mlp_forward(p: &MlpParams, input: &[f64], side: Option<&[f64]>) -> Result<(Vec<f64>, Tape)> {
    let spec = &p.spec;
    if input.len() != spec.input_width() {
        return Err(Error::Shape(format!(
            "input has length {}, network expects {}",
            input.len(),
            spec.input_width()
        )));
    }
    match (spec.concat, side) {
        (Some(c), Some(s)) if s.len() != c.width => {
            return Err(Error::Shape(format!(
                "side input has length {}, network expects {}",
                s.len(),
                c.width
            )))
        }
        (Some(_), None) => return Err(Error::Shape("network expects a side input".into())),
        (None, Some(_)) => return Err(Error::Shape("network takes no side input".into())),
        _ => {}
    }
    let layers = spec.layer_count();
    let mut tape = Tape {
        generation: p.generation,
        inputs: Vec::with_capacity(layers),
        pre: Vec::with_capacity(layers),
        post: Vec::with_capacity(layers),
    };
    let mut x = input.to_vec();
    for l in 0..layers {
        if let (Some(c), Some(s)) = (spec.concat, side) {
            if c.layer == l {
                x.extend_from_slice(s);
            }
        }
        let slot = p.slots[l];
        let act = spec.activations[l];
        let mut z = p.data[slot.bias..slot.bias + slot.rows].to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &p.data[slot.weights + r * slot.cols..slot.weights + (r + 1) * slot.cols];
            *zr += row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        let a: Vec<f64> = z.iter().map(|&zi| act.apply(zi)).collect();
        tape.inputs.push(std::mem::replace(&mut x, a.clone()));
        tape.pre.push(z);
        tape.post.push(a);
    }
    Ok((x, tape))
}

/// Output of [`mlp_forward`] without keeping the tape.
pub fn mlp_eval(p: &MlpParams, input: &[f64], side: Option<&[f64]>) -> Result<Vec<f64>> {
    mlp_forward(p, input, side).map(|(y, _)| y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Same flat layout as [`MlpParams`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
    pub side: Option<Vec<f64>>,
}

/// Reverse-mode gradients of `⟨upstream, output⟩`.
pub fn mlp_gradients(p: &MlpParams, tape: &Tape, upstream: &[f64]) -> Result<Gradients> {
    if tape.generation != p.generation {
        return Err(Error::StaleTape(format!(
            "tape recorded at generation {}, parameters are at {}",
            tape.generation, p.generation
        )));
    }
    let spec = &p.spec;
    if upstream.len() != spec.output_width() {
        return Err(Error::Shape(format!(
            "upstream has length {}, output is {}",
            upstream.len(),
            spec.output_width()
        )));
    }
    let mut grads = vec![0.0; p.data.len()];
    let mut side = None;
    let mut dy = upstream.to_vec();
    for l in (0..spec.layer_count()).rev() {
        let slot = p.slots[l];
        let act = spec.activations[l];
        let x = &tape.inputs[l];
        let dz: Vec<f64> = dy
            .iter()
            .zip(tape.pre[l].iter().zip(&tape.post[l]))
            .map(|(&d, (&z, &a))| d * act.derivative(z, a))
            .collect();
        let mut dx = vec![0.0; slot.cols];
        for (r, &dzr) in dz.iter().enumerate() {
            grads[slot.bias + r] = dzr;
            if dzr == 0.0 {
                continue;
            }
            let base = slot.weights + r * slot.cols;
            for c in 0..slot.cols {
                grads[base + c] = dzr * x[c];
                dx[c] += p.data[base + c] * dzr;
            }
        }
        if let Some(c) = spec.concat {
            if c.layer == l {
                side = Some(dx.split_off(spec.sizes[l]));
            }
        }
        dy = dx;
    }
    Ok(Gradients {
        params: grads,
        input: dy,
        side,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn for_params(p: &MlpParams, lr: f64) -> Self {
        AdamState::new(p.len(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step of `params` along `grads`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam state has {} entries, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(p: &mut MlpParams, grads: &[f64], st: &mut AdamState) -> Result<()> {
    st.update(p.flat_mut(), grads)
}

/// `target ← τ·source + (1 − τ)·target`.
pub fn soft_update(target: &mut MlpParams, source: &MlpParams, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("soft update coefficient must be in (0, 1], got {tau}")));
    }
    target.same_shape(source)?;
    if tau == 1.0 {
        target.flat_mut().copy_from_slice(&source.data);
        return Ok(());
    }
    for (t, &s) in target.flat_mut().iter_mut().zip(&source.data) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    Ok(())
}

pub fn format_checkpoint(p: &MlpParams) -> String {
    let spec = &p.spec;
    let mut out = String::new();
    let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
    writeln!(out, "sizes {}", join(&mut spec.sizes.iter().map(|s| s.to_string()))).unwrap();
    writeln!(out, "activations {}", join(&mut spec.activations.iter().map(|a| a.name().to_string()))).unwrap();
    match spec.concat {
        Some(c) => writeln!(out, "concat {} {}", c.layer, c.width).unwrap(),
        None => writeln!(out, "concat none").unwrap(),
    }
    for (l, slot) in p.slots.iter().enumerate() {
        writeln!(out, "layer {l} {} {}", slot.rows, slot.cols).unwrap();
        for r in 0..slot.rows {
            let row = &p.data[slot.weights + r * slot.cols..slot.weights + (r + 1) * slot.cols];
            writeln!(out, "{}", join(&mut row.iter().map(|x| format!("{x:e}")))).unwrap();
        }
        let bias = &p.data[slot.bias..slot.bias + slot.rows];
        writeln!(out, "{}", join(&mut bias.iter().map(|x| format!("{x:e}")))).unwrap();
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<MlpParams> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let field = |lines: &mut dyn Iterator<Item = &str>, key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("checkpoint ends before {key:?}")))?;
        let mut parts = line.split_whitespace().map(str::to_string);
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            _ => Err(Error::Parse(format!("expected {key:?} line, got {line:?}"))),
        }
    };
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Parse(format!("bad count {s:?}")))
    };
    let sizes = field(&mut lines, "sizes")?.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
    let activations = field(&mut lines, "activations")?
        .iter()
        .map(|s| Activation::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let concat = match field(&mut lines, "concat")?.as_slice() {
        [none] if none == "none" => None,
        [layer, width] => Some(Concat {
            layer: num(layer)?,
            width: num(width)?,
        }),
        other => return Err(Error::Parse(format!("bad concat line {other:?}"))),
    };
    let spec = MlpSpec::new(sizes, activations, concat)?;
    let slots = layout(&spec);
    let mut data = Vec::with_capacity(spec.param_count());
    for (l, slot) in slots.iter().enumerate() {
        let header = field(&mut lines, "layer")?;
        let expect = [l.to_string(), slot.rows.to_string(), slot.cols.to_string()];
        if header != expect {
            return Err(Error::Parse(format!("layer header {header:?}, expected {expect:?}")));
        }
        for width in std::iter::repeat_n(slot.cols, slot.rows).chain([slot.rows]) {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("layer {l} is truncated")))?;
            let row = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != width {
                return Err(Error::Parse(format!(
                    "layer {l}: row of {} values, expected {width}",
                    row.len()
                )));
            }
            data.extend(row);
        }
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Parse(format!("trailing checkpoint content {extra:?}")));
    }
    MlpParams::from_flat(&spec, data)
}

pub fn write_checkpoint(p: &MlpParams, path: &Path) -> Result<()> {
    std::fs::write(path, format_checkpoint(p)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

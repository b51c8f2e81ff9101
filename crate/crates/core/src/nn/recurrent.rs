//! Recurrent cells and a stacked sequence regressor trained with full
//! back-propagation through time.
//!
//! All cells work on batches: `x` is `[batch, input]`, hidden states are
//! `[batch, hidden]`. The LSTM gates act on the concatenation
//! `[h_prev, x]`; the GRU keeps separate input and recurrent matrices and
//! applies the reset gate to the recurrent product, `tanh(x W + r ⊙ (h U) + b)`.

use ndarray::{concatenate, s, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::sigmoid;
use crate::nn::init_uniform;
use crate::nn::params::{GradStore, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }
}

fn check_dims(
    context: &str,
    x: &Array2<f64>,
    input: usize,
    h: &Array2<f64>,
    hidden: usize,
) -> Result<()> {
    if x.ncols() != input {
        return Err(Error::shape(format!("{context} input"), input, x.ncols()));
    }
    if h.ncols() != hidden || h.nrows() != x.nrows() {
        return Err(Error::shape(
            format!("{context} hidden state"),
            format!("({}, {hidden})", x.nrows()),
            format!("{:?}", h.dim()),
        ));
    }
    Ok(())
}

fn sum_rows(a: &Array2<f64>) -> Array2<f64> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}

// ---------------------------------------------------------------- LSTM ----

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    /// Gate weights, each `[hidden + input, hidden]` acting on `[h_prev, x]`.
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_c: Array2<f64>,
    /// Gate biases, each `[1, hidden]`.
    pub b_f: Array2<f64>,
    pub b_i: Array2<f64>,
    pub b_o: Array2<f64>,
    pub b_c: Array2<f64>,
    pub hidden_size: usize,
}

const LSTM_FIELDS: [&str; 8] = ["w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"];

impl LstmCellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Array2::zeros((hidden_size + input_size, hidden_size));
        let b = || Array2::zeros((1, hidden_size));
        Self {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
            hidden_size,
        }
    }

    pub fn random<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut p = Self::zeros(input_size, hidden_size);
        for a in p.arrays_mut() {
            *a = init_uniform(rng, a.dim(), bound);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_f.nrows() - self.hidden_size
    }

    fn arrays(&self) -> [&Array2<f64>; 8] {
        [
            &self.w_f, &self.w_i, &self.w_o, &self.w_c, &self.b_f, &self.b_i, &self.b_o, &self.b_c,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Array2<f64>; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }

    fn from_store(store: &ParamStore, prefix: &str, hidden_size: usize) -> Result<Self> {
        let get = |f: &str| store.expect(&format!("{prefix}.{f}")).cloned();
        Ok(Self {
            w_f: get("w_f")?,
            w_i: get("w_i")?,
            w_o: get("w_o")?,
            w_c: get("w_c")?,
            b_f: get("b_f")?,
            b_i: get("b_i")?,
            b_o: get("b_o")?,
            b_c: get("b_c")?,
            hidden_size,
        })
    }

    fn insert_into(self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        let Self {
            w_f,
            w_i,
            w_o,
            w_c,
            b_f,
            b_i,
            b_o,
            b_c,
            ..
        } = self;
        for (f, a) in LSTM_FIELDS
            .iter()
            .zip([w_f, w_i, w_o, w_c, b_f, b_i, b_o, b_c])
        {
            store.insert(format!("{prefix}.{f}"), a)?;
        }
        Ok(())
    }

    fn accumulate_into(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        for (f, a) in LSTM_FIELDS.iter().zip(self.arrays()) {
            *store.expect_mut(&format!("{prefix}.{f}"))? += a;
        }
        Ok(())
    }
}

/// Values from one LSTM step needed by its backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    concat: Array2<f64>,
    pub f: Array2<f64>,
    pub i: Array2<f64>,
    pub o: Array2<f64>,
    pub c_tilde: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// One LSTM step: returns `(h_t, c_t, cache)`.
pub fn lstm_cell_step(
    p: &LstmCellParams,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, LstmStepCache)> {
    check_dims("lstm", x, p.input_size(), h_prev, p.hidden_size)?;
    if c_prev.dim() != h_prev.dim() {
        return Err(Error::shape(
            "lstm cell state",
            format!("{:?}", h_prev.dim()),
            format!("{:?}", c_prev.dim()),
        ));
    }
    let concat = concatenate![Axis(1), *h_prev, *x];
    let f = (concat.dot(&p.w_f) + &p.b_f).mapv(sigmoid);
    let i = (concat.dot(&p.w_i) + &p.b_i).mapv(sigmoid);
    let o = (concat.dot(&p.w_o) + &p.b_o).mapv(sigmoid);
    let c_tilde = (concat.dot(&p.w_c) + &p.b_c).mapv(f64::tanh);
    let c = &i * &c_tilde + &f * c_prev;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    Ok((
        h,
        c,
        LstmStepCache {
            concat,
            f,
            i,
            o,
            c_tilde,
            c_prev: c_prev.clone(),
            tanh_c,
        },
    ))
}

/// Backward through one LSTM step given dL/dh_t and dL/dc_t.
/// Returns `(param grads, dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    p: &LstmCellParams,
    cache: &LstmStepCache,
    dh: &Array2<f64>,
    dc: &Array2<f64>,
) -> (LstmCellParams, Array2<f64>, Array2<f64>, Array2<f64>) {
    let LstmStepCache {
        concat,
        f,
        i,
        o,
        c_tilde,
        c_prev,
        tanh_c,
    } = cache;
    let d_o = dh * tanh_c;
    let dc_total = dc + &(dh * o * &tanh_c.mapv(|t| 1.0 - t * t));
    let da_f = &dc_total * c_prev * &f.mapv(|v| v * (1.0 - v));
    let da_i = &dc_total * c_tilde * &i.mapv(|v| v * (1.0 - v));
    let da_o = &d_o * &o.mapv(|v| v * (1.0 - v));
    let da_c = &dc_total * i * &c_tilde.mapv(|v| 1.0 - v * v);
    let dc_prev = &dc_total * f;

    let ct = concat.t();
    let grads = LstmCellParams {
        w_f: ct.dot(&da_f),
        w_i: ct.dot(&da_i),
        w_o: ct.dot(&da_o),
        w_c: ct.dot(&da_c),
        b_f: sum_rows(&da_f),
        b_i: sum_rows(&da_i),
        b_o: sum_rows(&da_o),
        b_c: sum_rows(&da_c),
        hidden_size: p.hidden_size,
    };
    let d_concat =
        da_f.dot(&p.w_f.t()) + da_i.dot(&p.w_i.t()) + da_o.dot(&p.w_o.t()) + da_c.dot(&p.w_c.t());
    let hsz = p.hidden_size;
    let dh_prev = d_concat.slice(s![.., ..hsz]).to_owned();
    let dx = d_concat.slice(s![.., hsz..]).to_owned();
    (grads, dx, dh_prev, dc_prev)
}

// ----------------------------------------------------------------- GRU ----

#[derive(Clone, Debug, PartialEq)]
pub struct GruCellParams {
    /// Input weights `[input, hidden]`.
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    /// Recurrent weights `[hidden, hidden]`.
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    /// Biases `[1, hidden]`.
    pub b_z: Array2<f64>,
    pub b_r: Array2<f64>,
    pub b_h: Array2<f64>,
}

const GRU_FIELDS: [&str; 9] = [
    "w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h",
];

impl GruCellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Array2::zeros((input_size, hidden_size));
        let u = || Array2::zeros((hidden_size, hidden_size));
        let b = || Array2::zeros((1, hidden_size));
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

    pub fn random<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut p = Self::zeros(input_size, hidden_size);
        for a in p.arrays_mut() {
            *a = init_uniform(rng, a.dim(), bound);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.nrows()
    }

    pub fn input_size(&self) -> usize {
        self.w_z.nrows()
    }

    fn arrays(&self) -> [&Array2<f64>; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r,
            &self.b_h,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Array2<f64>; 9] {
        [
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

    fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |f: &str| store.expect(&format!("{prefix}.{f}")).cloned();
        Ok(Self {
            w_z: get("w_z")?,
            w_r: get("w_r")?,
            w_h: get("w_h")?,
            u_z: get("u_z")?,
            u_r: get("u_r")?,
            u_h: get("u_h")?,
            b_z: get("b_z")?,
            b_r: get("b_r")?,
            b_h: get("b_h")?,
        })
    }

    fn insert_into(self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        let Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        } = self;
        for (f, a) in GRU_FIELDS
            .iter()
            .zip([w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h])
        {
            store.insert(format!("{prefix}.{f}"), a)?;
        }
        Ok(())
    }

    fn accumulate_into(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        for (f, a) in GRU_FIELDS.iter().zip(self.arrays()) {
            *store.expect_mut(&format!("{prefix}.{f}"))? += a;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GruStepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    uh: Array2<f64>,
    pub h_tilde: Array2<f64>,
}

/// One GRU step: `h_t = z ⊙ h_prev + (1 - z) ⊙ h̃`.
pub fn gru_cell_step(
    p: &GruCellParams,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
) -> Result<(Array2<f64>, GruStepCache)> {
    check_dims("gru", x, p.input_size(), h_prev, p.hidden_size())?;
    let z = (x.dot(&p.w_z) + h_prev.dot(&p.u_z) + &p.b_z).mapv(sigmoid);
    let r = (x.dot(&p.w_r) + h_prev.dot(&p.u_r) + &p.b_r).mapv(sigmoid);
    let uh = h_prev.dot(&p.u_h);
    let h_tilde = (x.dot(&p.w_h) + &r * &uh + &p.b_h).mapv(f64::tanh);
    let h = &z * h_prev + &z.mapv(|v| 1.0 - v) * &h_tilde;
    Ok((
        h,
        GruStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            z,
            r,
            uh,
            h_tilde,
        },
    ))
}

/// Returns `(param grads, dx, dh_prev)`.
pub fn gru_cell_backward(
    p: &GruCellParams,
    cache: &GruStepCache,
    dh: &Array2<f64>,
) -> (GruCellParams, Array2<f64>, Array2<f64>) {
    let GruStepCache {
        x,
        h_prev,
        z,
        r,
        uh,
        h_tilde,
    } = cache;
    let dz = dh * &(h_prev - h_tilde);
    let dn = dh * &z.mapv(|v| 1.0 - v);
    let mut dh_prev = dh * z;

    let da_n = &dn * &h_tilde.mapv(|v| 1.0 - v * v);
    let dr = &da_n * uh;
    let duh = &da_n * r;
    let da_z = &dz * &z.mapv(|v| v * (1.0 - v));
    let da_r = &dr * &r.mapv(|v| v * (1.0 - v));

    dh_prev = dh_prev + duh.dot(&p.u_h.t()) + da_z.dot(&p.u_z.t()) + da_r.dot(&p.u_r.t());
    let dx = da_z.dot(&p.w_z.t()) + da_r.dot(&p.w_r.t()) + da_n.dot(&p.w_h.t());

    let xt = x.t();
    let ht = h_prev.t();
    let grads = GruCellParams {
        w_z: xt.dot(&da_z),
        w_r: xt.dot(&da_r),
        w_h: xt.dot(&da_n),
        u_z: ht.dot(&da_z),
        u_r: ht.dot(&da_r),
        u_h: ht.dot(&duh),
        b_z: sum_rows(&da_z),
        b_r: sum_rows(&da_r),
        b_h: sum_rows(&da_n),
    };
    (grads, dx, dh_prev)
}

// ----------------------------------------------------------------- RNN ----

#[derive(Clone, Debug)]
struct RnnStepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    h: Array2<f64>,
}

fn rnn_step(
    store: &ParamStore,
    prefix: &str,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
) -> Result<(Array2<f64>, RnnStepCache)> {
    let w = store.expect(&format!("{prefix}.w"))?;
    let u = store.expect(&format!("{prefix}.u"))?;
    let b = store.expect(&format!("{prefix}.b"))?;
    check_dims("rnn", x, w.nrows(), h_prev, u.nrows())?;
    let h = (x.dot(w) + h_prev.dot(u) + b).mapv(f64::tanh);
    Ok((
        h.clone(),
        RnnStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            h,
        },
    ))
}

fn rnn_backward(
    store: &ParamStore,
    grads: &mut ParamStore,
    prefix: &str,
    cache: &RnnStepCache,
    dh: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let da = dh * &cache.h.mapv(|v| 1.0 - v * v);
    *grads.expect_mut(&format!("{prefix}.w"))? += &cache.x.t().dot(&da);
    *grads.expect_mut(&format!("{prefix}.u"))? += &cache.h_prev.t().dot(&da);
    *grads.expect_mut(&format!("{prefix}.b"))? += &sum_rows(&da);
    let dx = da.dot(&store.expect(&format!("{prefix}.w"))?.t());
    let dh_prev = da.dot(&store.expect(&format!("{prefix}.u"))?.t());
    Ok((dx, dh_prev))
}

// ---------------------------------------------------- stacked sequence ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub output_size: usize,
}

enum StepCache {
    Lstm(LstmStepCache),
    Gru(GruStepCache),
    Rnn(RnnStepCache),
}

enum Cell {
    Lstm(LstmCellParams),
    Gru(GruCellParams),
    Rnn,
}

/// Stacked recurrent network whose last top-layer hidden state feeds a
/// linear head emitting `output_size` values at once.
pub struct SequenceModel {
    spec: SequenceSpec,
    pub params: ParamStore,
    cache: Option<SeqCache>,
}

struct SeqCache {
    steps: Vec<Vec<StepCache>>,
    last_hidden: Array2<f64>,
}

fn layer_prefix(kind: CellKind, l: usize) -> String {
    format!("{}{l}", kind.name())
}

impl SequenceModel {
    pub fn new<R: Rng + ?Sized>(spec: SequenceSpec, rng: &mut R) -> Result<Self> {
        if spec.layers == 0
            || spec.hidden_size == 0
            || spec.input_size == 0
            || spec.output_size == 0
        {
            return Err(Error::Config(
                "sequence model dimensions must be positive".into(),
            ));
        }
        let mut params = ParamStore::new();
        for l in 0..spec.layers {
            let input = if l == 0 {
                spec.input_size
            } else {
                spec.hidden_size
            };
            let prefix = layer_prefix(spec.kind, l);
            match spec.kind {
                CellKind::Lstm => LstmCellParams::random(input, spec.hidden_size, rng)
                    .insert_into(&mut params, &prefix)?,
                CellKind::Gru => GruCellParams::random(input, spec.hidden_size, rng)
                    .insert_into(&mut params, &prefix)?,
                CellKind::Rnn => {
                    let bound = 1.0 / (spec.hidden_size as f64).sqrt();
                    params.insert(
                        format!("{prefix}.w"),
                        init_uniform(rng, (input, spec.hidden_size), bound),
                    )?;
                    params.insert(
                        format!("{prefix}.u"),
                        init_uniform(rng, (spec.hidden_size, spec.hidden_size), bound),
                    )?;
                    params.insert(
                        format!("{prefix}.b"),
                        init_uniform(rng, (1, spec.hidden_size), bound),
                    )?;
                }
            }
        }
        let bound = 1.0 / (spec.hidden_size as f64).sqrt();
        params.insert(
            "head.weight",
            init_uniform(rng, (spec.hidden_size, spec.output_size), bound),
        )?;
        params.insert("head.bias", Array2::zeros((1, spec.output_size)))?;
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    /// Builds a model around existing parameters (e.g. from a checkpoint).
    pub fn from_params(spec: SequenceSpec, params: ParamStore) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let template = Self::new(spec.clone(), &mut rng)?;
        template
            .params
            .check_layout(&params, "sequence model parameters")?;
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    fn cells(&self) -> Result<Vec<Cell>> {
        (0..self.spec.layers)
            .map(|l| {
                let prefix = layer_prefix(self.spec.kind, l);
                Ok(match self.spec.kind {
                    CellKind::Lstm => Cell::Lstm(LstmCellParams::from_store(
                        &self.params,
                        &prefix,
                        self.spec.hidden_size,
                    )?),
                    CellKind::Gru => Cell::Gru(GruCellParams::from_store(&self.params, &prefix)?),
                    CellKind::Rnn => Cell::Rnn,
                })
            })
            .collect()
    }

    /// `inputs` is `[batch, time, features]`; returns `[batch, output_size]`.
    pub fn forward(&mut self, inputs: &Array3<f64>) -> Result<Array2<f64>> {
        let (out, cache) = self.run(inputs, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, inputs: &Array3<f64>) -> Result<Array2<f64>> {
        self.run(inputs, false).map(|(out, _)| out)
    }

    fn run(&self, inputs: &Array3<f64>, keep: bool) -> Result<(Array2<f64>, Option<SeqCache>)> {
        let (batch, time, features) = inputs.dim();
        if time == 0 {
            return Err(Error::EmptyInput("sequence of length 0".into()));
        }
        if features != self.spec.input_size {
            return Err(Error::shape(
                "sequence features",
                self.spec.input_size,
                features,
            ));
        }
        let cells = self.cells()?;
        let hsz = self.spec.hidden_size;
        let mut h: Vec<Array2<f64>> = vec![Array2::zeros((batch, hsz)); self.spec.layers];
        let mut c: Vec<Array2<f64>> = vec![Array2::zeros((batch, hsz)); self.spec.layers];
        let mut steps = Vec::with_capacity(if keep { time } else { 0 });
        for t in 0..time {
            let mut x = inputs.slice(s![.., t, ..]).to_owned();
            let mut layer_caches = Vec::with_capacity(self.spec.layers);
            for (l, cell) in cells.iter().enumerate() {
                let sc = match cell {
                    Cell::Lstm(p) => {
                        let (hn, cn, sc) = lstm_cell_step(p, &x, &h[l], &c[l])?;
                        h[l] = hn;
                        c[l] = cn;
                        StepCache::Lstm(sc)
                    }
                    Cell::Gru(p) => {
                        let (hn, sc) = gru_cell_step(p, &x, &h[l])?;
                        h[l] = hn;
                        StepCache::Gru(sc)
                    }
                    Cell::Rnn => {
                        let prefix = layer_prefix(CellKind::Rnn, l);
                        let (hn, sc) = rnn_step(&self.params, &prefix, &x, &h[l])?;
                        h[l] = hn;
                        StepCache::Rnn(sc)
                    }
                };
                x = h[l].clone();
                if keep {
                    layer_caches.push(sc);
                }
            }
            if keep {
                steps.push(layer_caches);
            }
        }
        let last_hidden = h.pop().expect("at least one layer");
        let out = last_hidden.dot(self.params.expect("head.weight")?)
            + self.params.expect("head.bias")?;
        if out.iter().any(|v| !v.is_finite()) {
            self.params.check_finite()?;
            return Err(Error::NonFinite {
                name: "sequence output".into(),
            });
        }
        let cache = keep.then_some(SeqCache { steps, last_hidden });
        Ok((out, cache))
    }

    /// Full back-propagation through time from dL/d output.
    pub fn backward(&self, output_grad: &Array2<f64>) -> Result<GradStore> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::State("sequence backward called without a cached forward pass".into())
        })?;
        let batch = cache.last_hidden.nrows();
        if output_grad.dim() != (batch, self.spec.output_size) {
            return Err(Error::shape(
                "sequence output gradient",
                format!("({batch}, {})", self.spec.output_size),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let mut grads = self.params.zeros_like();
        *grads.expect_mut("head.weight")? = cache.last_hidden.t().dot(output_grad);
        *grads.expect_mut("head.bias")? = sum_rows(output_grad);

        let cells = self.cells()?;
        let hsz = self.spec.hidden_size;
        let layers = self.spec.layers;
        let mut dh: Vec<Array2<f64>> = vec![Array2::zeros((batch, hsz)); layers];
        let mut dc: Vec<Array2<f64>> = vec![Array2::zeros((batch, hsz)); layers];
        dh[layers - 1] = output_grad.dot(&self.params.expect("head.weight")?.t());

        for step in cache.steps.iter().rev() {
            for l in (0..layers).rev() {
                let prefix = layer_prefix(self.spec.kind, l);
                let dx = match (&cells[l], &step[l]) {
                    (Cell::Lstm(p), StepCache::Lstm(sc)) => {
                        let (g, dx, dh_prev, dc_prev) = lstm_cell_backward(p, sc, &dh[l], &dc[l]);
                        g.accumulate_into(&mut grads, &prefix)?;
                        dh[l] = dh_prev;
                        dc[l] = dc_prev;
                        dx
                    }
                    (Cell::Gru(p), StepCache::Gru(sc)) => {
                        let (g, dx, dh_prev) = gru_cell_backward(p, sc, &dh[l]);
                        g.accumulate_into(&mut grads, &prefix)?;
                        dh[l] = dh_prev;
                        dx
                    }
                    (Cell::Rnn, StepCache::Rnn(sc)) => {
                        let (dx, dh_prev) =
                            rnn_backward(&self.params, &mut grads, &prefix, sc, &dh[l])?;
                        dh[l] = dh_prev;
                        dx
                    }
                    _ => unreachable!("cell and cache kinds always match"),
                };
                if l > 0 {
                    dh[l - 1] += &dx;
                }
            }
        }
        Ok(grads)
    }
}

/// Gradient of a stacked sequence model for one batch, given dL/d output.
pub fn lstm_sequence_gradients(
    model: &mut SequenceModel,
    inputs: &Array3<f64>,
    loss_grad: &Array2<f64>,
) -> Result<GradStore> {
    model.forward(inputs)?;
    model.backward(loss_grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lstm_halves_everything() {
        let p = LstmCellParams::zeros(2, 1);
        let (h, c, cache) =
            lstm_cell_step(&p, &array![[0.3, -4.0]], &array![[0.0]], &array![[0.0]]).unwrap();
        assert_eq!(cache.f[[0, 0]], 0.5);
        assert_eq!(cache.i[[0, 0]], 0.5);
        assert_eq!(cache.o[[0, 0]], 0.5);
        assert_eq!(c, array![[0.0]]);
        assert_eq!(h, array![[0.0]]);
    }

    #[test]
    fn zero_lstm_carries_half_of_previous_cell() {
        let p = LstmCellParams::zeros(1, 1);
        let (h, c, _) = lstm_cell_step(&p, &array![[1.0]], &array![[0.0]], &array![[2.0]]).unwrap();
        assert_eq!(c, array![[1.0]]);
        assert!((h[[0, 0]] - 0.5 * 1.0f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn lstm_rejects_wrong_input_width() {
        let p = LstmCellParams::zeros(2, 3);
        let h = Array2::zeros((1, 3));
        assert!(lstm_cell_step(&p, &array![[1.0]], &h, &h).is_err());
    }

    #[test]
    fn zero_gru_halves_previous_state() {
        let p = GruCellParams::zeros(2, 2);
        let (h, cache) = gru_cell_step(&p, &array![[1.0, 2.0]], &array![[0.4, -1.0]]).unwrap();
        assert!(cache.z.iter().all(|&z| z == 0.5));
        assert!(cache.r.iter().all(|&r| r == 0.5));
        assert!(cache.h_tilde.iter().all(|&v| v == 0.0));
        assert_eq!(h, array![[0.2, -0.5]]);
    }

    #[test]
    fn saturated_update_gate_copies_state() {
        let mut p = GruCellParams::zeros(1, 2);
        p.b_z.fill(100.0);
        let prev = array![[0.7, -0.3]];
        let (h, _) = gru_cell_step(&p, &array![[5.0]], &prev).unwrap();
        for (a, b) in h.iter().zip(prev.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = SequenceSpec {
            kind: CellKind::Lstm,
            input_size: 2,
            hidden_size: 3,
            layers: 1,
            output_size: 1,
        };
        let mut m = SequenceModel::new(spec, &mut rng).unwrap();
        let x = Array3::zeros((1, 0, 2));
        assert!(matches!(m.forward(&x), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn zero_loss_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [CellKind::Lstm, CellKind::Gru, CellKind::Rnn] {
            let spec = SequenceSpec {
                kind,
                input_size: 2,
                hidden_size: 3,
                layers: 2,
                output_size: 2,
            };
            let mut m = SequenceModel::new(spec, &mut rng).unwrap();
            let x =
                Array3::from_shape_fn((2, 4, 2), |(b, t, f)| (b + t) as f64 * 0.1 - f as f64 * 0.2);
            let g = lstm_sequence_gradients(&mut m, &x, &Array2::zeros((2, 2))).unwrap();
            assert_eq!(g.max_abs(), 0.0, "{kind:?}");
        }
    }

    #[test]
    fn from_params_checks_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = SequenceSpec {
            kind: CellKind::Gru,
            input_size: 2,
            hidden_size: 3,
            layers: 1,
            output_size: 1,
        };
        let m = SequenceModel::new(spec.clone(), &mut rng).unwrap();
        assert!(SequenceModel::from_params(spec.clone(), m.params.clone()).is_ok());
        let other = SequenceSpec {
            hidden_size: 4,
            ..spec
        };
        assert!(SequenceModel::from_params(other, m.params).is_err());
    }
}

//! Mask-based trainable separator: a feed-forward layer, a stack of
//! gated recurrent layers, and a per-bin softmax head producing one mask
//! per source. Forward and backward passes are exact and deterministic;
//! all parameters live in one flat vector described by a named layout.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use train::{
    train, train_with_observer, Adam, CostRecord, EpochStats, LossKind, TrainConfig,
    TrainHistory, TrainItem,
};

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{reconstruct_with_mixture_phase, stft, MagSpectrogram, SignalBuffer, StftConfig};
use crate::error::{Error, Result};

/// Separator hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeparatorConfig {
    /// Frequency bins of the input magnitude spectrogram.
    pub input_dim: usize,
    /// Width of the feed-forward front layer.
    pub hidden_ff: usize,
    /// Width of each recurrent layer.
    pub hidden_rec: usize,
    pub num_rec_layers: usize,
    pub num_sources: usize,
    /// Inverted-dropout rate on the feed-forward activations; active in
    /// train mode only.
    pub dropout_rate: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            input_dim: 129,
            hidden_ff: 64,
            hidden_rec: 48,
            num_rec_layers: 2,
            num_sources: 2,
            dropout_rate: 0.2,
            seed: 1,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden_ff == 0
            || self.hidden_rec == 0
            || self.num_rec_layers == 0
        {
            return Err(Error::InvalidArgument("all layer dimensions must be >= 1".into()));
        }
        if self.num_sources < 2 {
            return Err(Error::InvalidArgument("num_sources must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// One named matrix or bias vector inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_bias(&self) -> bool {
        self.cols == 1
    }
}

fn build_layout(cfg: &SeparatorConfig) -> Vec<LayoutEntry> {
    let mut entries = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, rows: usize, cols: usize, entries: &mut Vec<LayoutEntry>| {
        entries.push(LayoutEntry { name, offset, rows, cols });
        offset += rows * cols;
    };
    push("ff_w".into(), cfg.hidden_ff, cfg.input_dim, &mut entries);
    push("ff_b".into(), cfg.hidden_ff, 1, &mut entries);
    for l in 0..cfg.num_rec_layers {
        let d_in = if l == 0 { cfg.hidden_ff } else { cfg.hidden_rec };
        let h = cfg.hidden_rec;
        for gate in ["z", "r", "c"] {
            push(format!("gru{l}_w{gate}"), h, d_in, &mut entries);
            push(format!("gru{l}_u{gate}"), h, h, &mut entries);
            push(format!("gru{l}_b{gate}"), h, 1, &mut entries);
        }
    }
    push("out_w".into(), cfg.num_sources * cfg.input_dim, cfg.hidden_rec, &mut entries);
    push("out_b".into(), cfg.num_sources * cfg.input_dim, 1, &mut entries);
    entries
}

/// The separator: a flat parameter vector plus its layout. The revision
/// counter ties forward caches to the parameter state they were computed
/// from.
#[derive(Debug, Clone)]
pub struct SeparatorModel {
    config: SeparatorConfig,
    params: Vec<f64>,
    layout: Vec<LayoutEntry>,
    revision: u64,
}

impl SeparatorModel {
    /// Fresh model with uniform(-a, a) weights, a = sqrt(6/(fan_in+fan_out)),
    /// and zero biases, drawn deterministically from `config.seed`.
    pub fn init(config: SeparatorConfig) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(&config);
        let total = layout.iter().map(LayoutEntry::len).sum();
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for entry in &layout {
            if entry.is_bias() {
                continue;
            }
            let a = (6.0 / (entry.rows + entry.cols) as f64).sqrt();
            for slot in params[entry.offset..entry.offset + entry.len()].iter_mut() {
                *slot = rng.gen_range(-a..a);
            }
        }
        Ok(Self { config, params, layout, revision: 0 })
    }

    pub(crate) fn from_parts(config: SeparatorConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(&config);
        let total: usize = layout.iter().map(LayoutEntry::len).sum();
        if params.len() != total {
            return Err(Error::Data(format!(
                "parameter count {} does not match layout total {total}",
                params.len()
            )));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::Data("parameters contain non-finite values".into()));
        }
        Ok(Self { config, params, layout, revision: 0 })
    }

    pub fn config(&self) -> &SeparatorConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn layout(&self) -> &[LayoutEntry] {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Adds `delta` to the parameters and invalidates outstanding caches.
    pub fn apply_update(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "update length {} != parameter count {}",
                delta.len(),
                self.params.len()
            )));
        }
        for (p, d) in self.params.iter_mut().zip(delta) {
            *p += d;
        }
        self.revision += 1;
        Ok(())
    }

    /// Test hook: directly perturb one parameter (used by finite
    /// difference checks).
    pub fn nudge_param(&mut self, index: usize, delta: f64) {
        self.params[index] += delta;
        self.revision += 1;
    }

    fn views(&self) -> ParamViews<'_> {
        ParamViews::new(&self.config, &self.layout, &self.params)
    }
}

struct GruParamViews<'a> {
    wz: ArrayView2<'a, f64>,
    uz: ArrayView2<'a, f64>,
    bz: ArrayView1<'a, f64>,
    wr: ArrayView2<'a, f64>,
    ur: ArrayView2<'a, f64>,
    br: ArrayView1<'a, f64>,
    wc: ArrayView2<'a, f64>,
    uc: ArrayView2<'a, f64>,
    bc: ArrayView1<'a, f64>,
}

struct ParamViews<'a> {
    ff_w: ArrayView2<'a, f64>,
    ff_b: ArrayView1<'a, f64>,
    gru: Vec<GruParamViews<'a>>,
    out_w: ArrayView2<'a, f64>,
    out_b: ArrayView1<'a, f64>,
}

impl<'a> ParamViews<'a> {
    fn new(cfg: &SeparatorConfig, layout: &[LayoutEntry], params: &'a [f64]) -> Self {
        let mat = |i: usize| {
            let e = &layout[i];
            ArrayView2::from_shape((e.rows, e.cols), &params[e.offset..e.offset + e.len()])
                .expect("layout shapes are consistent")
        };
        let vec = |i: usize| {
            let e = &layout[i];
            ArrayView1::from_shape(e.rows, &params[e.offset..e.offset + e.len()])
                .expect("layout shapes are consistent")
        };
        let mut gru = Vec::with_capacity(cfg.num_rec_layers);
        for l in 0..cfg.num_rec_layers {
            let base = 2 + l * 9;
            gru.push(GruParamViews {
                wz: mat(base),
                uz: mat(base + 1),
                bz: vec(base + 2),
                wr: mat(base + 3),
                ur: mat(base + 4),
                br: vec(base + 5),
                wc: mat(base + 6),
                uc: mat(base + 7),
                bc: vec(base + 8),
            });
        }
        let out_base = 2 + cfg.num_rec_layers * 9;
        ParamViews {
            ff_w: mat(0),
            ff_b: vec(1),
            gru,
            out_w: mat(out_base),
            out_b: vec(out_base + 1),
        }
    }
}

/// Per-layer recurrent activations kept for the backward pass.
struct GruCache {
    z: Array2<f64>,
    r: Array2<f64>,
    cand: Array2<f64>,
    hidden: Array2<f64>,
}

/// Everything backward needs from one forward pass. Tied to the model
/// revision it was computed against.
pub struct ForwardCache {
    revision: u64,
    input: Array2<f64>,
    ff_act: Array2<f64>,
    /// Dropped activations when dropout was active; equals `ff_act`
    /// otherwise and is not stored twice.
    ff_dropped: Option<Array2<f64>>,
    drop_mask: Option<Array2<f64>>,
    gru: Vec<GruCache>,
    masks: Vec<Array2<f64>>,
}

/// Whether dropout is applied, and from which stream.
pub enum ForwardMode<'a> {
    Eval,
    Train { dropout_rng: &'a mut ChaCha8Rng },
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ensure_finite(layer: &str, values: &Array2<f64>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation in {layer}")))
    }
}

/// Runs the network on one magnitude spectrogram and returns per-source
/// masks (softmax across sources per time-frequency bin) plus the cache
/// for backward.
pub fn forward(
    model: &SeparatorModel,
    mixture_mag: &MagSpectrogram,
    mode: ForwardMode<'_>,
) -> Result<(Vec<MagSpectrogram>, ForwardCache)> {
    let cfg = &model.config;
    let (bins, frames) = mixture_mag.shape();
    if bins != cfg.input_dim {
        return Err(Error::Shape(format!(
            "input has {bins} bins, model expects {}",
            cfg.input_dim
        )));
    }
    if frames == 0 {
        return Err(Error::Data("input spectrogram has no frames".into()));
    }
    let p = model.views();
    let input = mixture_mag.mags.clone();

    // feed-forward front layer
    let mut ff = p.ff_w.dot(&input);
    ff += &p.ff_b.view().insert_axis(Axis(1));
    ff.mapv_inplace(f64::tanh);
    ensure_finite("ff", &ff)?;

    // inverted dropout, train mode only
    let drop_mask = match mode {
        ForwardMode::Train { dropout_rng } if cfg.dropout_rate > 0.0 => {
            let keep = 1.0 - cfg.dropout_rate;
            let scale = 1.0 / keep;
            Some(Array2::from_shape_fn(ff.dim(), |_| {
                if dropout_rng.gen::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            }))
        }
        _ => None,
    };
    let ff_dropped = match &drop_mask {
        Some(mask) => &ff * mask,
        None => ff.clone(),
    };
    let cached_dropped = drop_mask.as_ref().map(|_| ff_dropped.clone());

    // recurrent stack
    let h = cfg.hidden_rec;
    let mut gru_caches = Vec::with_capacity(cfg.num_rec_layers);
    let mut layer_input = ff_dropped;
    for (l, g) in p.gru.iter().enumerate() {
        let mut pz = g.wz.dot(&layer_input);
        pz += &g.bz.view().insert_axis(Axis(1));
        let mut pr = g.wr.dot(&layer_input);
        pr += &g.br.view().insert_axis(Axis(1));
        let mut pc = g.wc.dot(&layer_input);
        pc += &g.bc.view().insert_axis(Axis(1));

        let mut zs = Array2::zeros((h, frames));
        let mut rs = Array2::zeros((h, frames));
        let mut cs = Array2::zeros((h, frames));
        let mut hs = Array2::zeros((h, frames));

        let mut h_prev = Array1::zeros(h);
        let mut az = Array1::zeros(h);
        let mut ar = Array1::zeros(h);
        let mut ac = Array1::zeros(h);
        let mut rh = Array1::zeros(h);
        for t in 0..frames {
            az.assign(&pz.column(t));
            general_mat_vec_mul(1.0, &g.uz, &h_prev, 1.0, &mut az);
            az.mapv_inplace(sigmoid);

            ar.assign(&pr.column(t));
            general_mat_vec_mul(1.0, &g.ur, &h_prev, 1.0, &mut ar);
            ar.mapv_inplace(sigmoid);

            rh.assign(&ar);
            rh *= &h_prev;
            ac.assign(&pc.column(t));
            general_mat_vec_mul(1.0, &g.uc, &rh, 1.0, &mut ac);
            ac.mapv_inplace(f64::tanh);

            // h_t = (1 - z) * h_prev + z * cand
            for i in 0..h {
                h_prev[i] = (1.0 - az[i]) * h_prev[i] + az[i] * ac[i];
            }
            zs.column_mut(t).assign(&az);
            rs.column_mut(t).assign(&ar);
            cs.column_mut(t).assign(&ac);
            hs.column_mut(t).assign(&h_prev);
        }
        ensure_finite(&format!("gru{l}"), &hs)?;
        layer_input = hs.clone();
        gru_caches.push(GruCache { z: zs, r: rs, cand: cs, hidden: hs });
    }

    // output head: logits stacked source-major, softmax across sources
    let mut logits = p.out_w.dot(&layer_input);
    logits += &p.out_b.view().insert_axis(Axis(1));
    ensure_finite("output", &logits)?;

    let s = cfg.num_sources;
    let mut masks: Vec<Array2<f64>> = (0..s).map(|_| Array2::zeros((bins, frames))).collect();
    for t in 0..frames {
        for f in 0..bins {
            let mut max = f64::NEG_INFINITY;
            for src in 0..s {
                max = max.max(logits[[src * bins + f, t]]);
            }
            let mut z = 0.0;
            for src in 0..s {
                z += (logits[[src * bins + f, t]] - max).exp();
            }
            for src in 0..s {
                masks[src][[f, t]] = (logits[[src * bins + f, t]] - max).exp() / z;
            }
        }
    }

    let cache = ForwardCache {
        revision: model.revision,
        input,
        ff_act: ff,
        ff_dropped: cached_dropped,
        drop_mask,
        gru: gru_caches,
        masks: masks.clone(),
    };
    let masks = masks
        .into_iter()
        .map(|m| MagSpectrogram::new(m).expect("softmax output is finite and nonnegative"))
        .collect::<Vec<_>>();
    Ok((masks, cache))
}

/// Applies masks to the mixture magnitude: `O_s = mask_s * Y`.
pub fn estimate_sources(
    masks: &[MagSpectrogram],
    mixture_mag: &MagSpectrogram,
) -> Result<Vec<MagSpectrogram>> {
    let shape = mixture_mag.shape();
    if masks.is_empty() || masks.iter().any(|m| m.shape() != shape) {
        return Err(Error::Shape("masks must match the mixture shape".into()));
    }
    Ok(masks.iter().map(|m| MagSpectrogram { mags: &m.mags * &mixture_mag.mags }).collect())
}

/// Exact backward pass: gradients of the loss with respect to every
/// parameter, given `d loss / d estimated_source` for each source. The
/// chain runs through the mask-times-mixture product, the per-bin
/// softmax, the recurrent stack, and the feed-forward layer.
pub fn backward(
    model: &SeparatorModel,
    cache: &ForwardCache,
    grad_outputs: &[Array2<f64>],
) -> Result<Vec<f64>> {
    let cfg = &model.config;
    if cache.revision != model.revision {
        return Err(Error::Contract(
            "forward cache is stale: model parameters changed since forward".into(),
        ));
    }
    let (bins, frames) = cache.input.dim();
    let s = cfg.num_sources;
    if grad_outputs.len() != s || grad_outputs.iter().any(|g| g.dim() != (bins, frames)) {
        return Err(Error::Shape("grad_outputs must be one bins x frames matrix per source".into()));
    }
    let p = model.views();
    let h = cfg.hidden_rec;
    let mut grad = vec![0.0; model.num_params()];

    // d loss / d mask_s = grad_output_s * Y
    // softmax backward per (bin, frame): dl_s = m_s * (g_s - sum_k m_k g_k)
    let mut dlogits = Array2::zeros((s * bins, frames));
    for t in 0..frames {
        for f in 0..bins {
            let y = cache.input[[f, t]];
            let mut dot = 0.0;
            for src in 0..s {
                dot += cache.masks[src][[f, t]] * grad_outputs[src][[f, t]] * y;
            }
            for src in 0..s {
                let m = cache.masks[src][[f, t]];
                let g = grad_outputs[src][[f, t]] * y;
                dlogits[[src * bins + f, t]] = m * (g - dot);
            }
        }
    }

    // output layer
    let last_hidden = &cache.gru[cfg.num_rec_layers - 1].hidden;
    let d_out_w = dlogits.dot(&last_hidden.t());
    let d_out_b = dlogits.sum_axis(Axis(1));
    let out_base = 2 + cfg.num_rec_layers * 9;
    write_grad(&mut grad, &model.layout[out_base], &d_out_w);
    write_grad_vec(&mut grad, &model.layout[out_base + 1], &d_out_b);
    let mut d_hidden = p.out_w.t().dot(&dlogits); // hidden_rec x frames

    // recurrent stack, top to bottom
    for l in (0..cfg.num_rec_layers).rev() {
        let g = &p.gru[l];
        let c = &cache.gru[l];
        let layer_input: &Array2<f64> = if l == 0 {
            cache.ff_dropped_ref()
        } else {
            &cache.gru[l - 1].hidden
        };

        // transposed copies for the per-frame matvecs
        let uz_t = g.uz.t().to_owned();
        let ur_t = g.ur.t().to_owned();
        let uc_t = g.uc.t().to_owned();

        let mut dz_pre = Array2::zeros((h, frames));
        let mut dr_pre = Array2::zeros((h, frames));
        let mut dc_pre = Array2::zeros((h, frames));

        let mut carry = Array1::<f64>::zeros(h);
        let mut dh = Array1::<f64>::zeros(h);
        let mut svec = Array1::<f64>::zeros(h);
        let mut tmp = Array1::<f64>::zeros(h);
        let zero_col = Array1::<f64>::zeros(h);
        for t in (0..frames).rev() {
            dh.assign(&d_hidden.column(t));
            dh += &carry;
            let h_prev = if t > 0 { c.hidden.column(t - 1) } else { zero_col.view() };

            // gate pre-activation gradients
            for i in 0..h {
                let z = c.z[[i, t]];
                let cand = c.cand[[i, t]];
                let dzi = dh[i] * (cand - h_prev[i]);
                let dci = dh[i] * z;
                dz_pre[[i, t]] = dzi * z * (1.0 - z);
                dc_pre[[i, t]] = dci * (1.0 - cand * cand);
                carry[i] = dh[i] * (1.0 - z);
            }
            // through the candidate's recurrent term: d(r * h_prev)
            general_mat_vec_mul(1.0, &uc_t, &dc_pre.column(t), 0.0, &mut svec);
            for i in 0..h {
                let r = c.r[[i, t]];
                let dri = svec[i] * h_prev[i];
                dr_pre[[i, t]] = dri * r * (1.0 - r);
                carry[i] += svec[i] * r;
            }
            general_mat_vec_mul(1.0, &uz_t, &dz_pre.column(t), 0.0, &mut tmp);
            carry += &tmp;
            general_mat_vec_mul(1.0, &ur_t, &dr_pre.column(t), 0.0, &mut tmp);
            carry += &tmp;
        }

        // h_{t-1} sequence and r * h_{t-1}, as matrices for the weight grads
        let mut h_prev_mat = Array2::zeros((h, frames));
        for t in 1..frames {
            let col = c.hidden.column(t - 1).to_owned();
            h_prev_mat.column_mut(t).assign(&col);
        }
        let rh_mat = &c.r * &h_prev_mat;

        let base = 2 + l * 9;
        write_grad(&mut grad, &model.layout[base], &dz_pre.dot(&layer_input.t()));
        write_grad(&mut grad, &model.layout[base + 1], &dz_pre.dot(&h_prev_mat.t()));
        write_grad_vec(&mut grad, &model.layout[base + 2], &dz_pre.sum_axis(Axis(1)));
        write_grad(&mut grad, &model.layout[base + 3], &dr_pre.dot(&layer_input.t()));
        write_grad(&mut grad, &model.layout[base + 4], &dr_pre.dot(&h_prev_mat.t()));
        write_grad_vec(&mut grad, &model.layout[base + 5], &dr_pre.sum_axis(Axis(1)));
        write_grad(&mut grad, &model.layout[base + 6], &dc_pre.dot(&layer_input.t()));
        write_grad(&mut grad, &model.layout[base + 7], &dc_pre.dot(&rh_mat.t()));
        write_grad_vec(&mut grad, &model.layout[base + 8], &dc_pre.sum_axis(Axis(1)));

        // gradient to the layer below
        d_hidden = g.wz.t().dot(&dz_pre) + g.wr.t().dot(&dr_pre) + g.wc.t().dot(&dc_pre);
    }

    // feed-forward layer (d_hidden now holds d loss / d dropped activations)
    let mut d_ff = d_hidden;
    if let Some(mask) = &cache.drop_mask {
        d_ff *= mask;
    }
    // through tanh
    let mut d_pre = d_ff;
    for (dp, a) in d_pre.iter_mut().zip(cache.ff_act.iter()) {
        *dp *= 1.0 - a * a;
    }
    write_grad(&mut grad, &model.layout[0], &d_pre.dot(&cache.input.t()));
    write_grad_vec(&mut grad, &model.layout[1], &d_pre.sum_axis(Axis(1)));

    Ok(grad)
}

impl ForwardCache {
    /// Layer-0 recurrent input: the dropped feed-forward activations.
    fn ff_dropped_ref(&self) -> &Array2<f64> {
        self.ff_dropped.as_ref().unwrap_or(&self.ff_act)
    }
}

fn write_grad(grad: &mut [f64], entry: &LayoutEntry, values: &Array2<f64>) {
    debug_assert_eq!(values.dim(), (entry.rows, entry.cols));
    let dst = &mut grad[entry.offset..entry.offset + entry.len()];
    for (slot, v) in dst.iter_mut().zip(values.iter()) {
        *slot = *v;
    }
}

fn write_grad_vec(grad: &mut [f64], entry: &LayoutEntry, values: &Array1<f64>) {
    debug_assert_eq!(values.len(), entry.len());
    let dst = &mut grad[entry.offset..entry.offset + entry.len()];
    for (slot, v) in dst.iter_mut().zip(values.iter()) {
        *slot = *v;
    }
}

/// End-to-end inference: STFT, masking, and per-source resynthesis with
/// the mixture phase. Outputs stay in network order.
pub fn separate(
    model: &SeparatorModel,
    mixture: &SignalBuffer,
    cfg: &StftConfig,
) -> Result<Vec<SignalBuffer>> {
    let spec = stft(mixture, cfg)?;
    let mag = spec.magnitude();
    let (masks, _) = forward(model, &mag, ForwardMode::Eval)?;
    let estimates = estimate_sources(&masks, &mag)?;
    estimates.iter().map(|est| reconstruct_with_mixture_phase(est, &spec)).collect()
}

//! The codec's computation graph: analysis/synthesis transforms, hyper
//! transforms, the causal context model, and the entropy-parameter paths.
//!
//! The central switch is [`DecoderMode`]: `mixed` runs one hyperprior
//! decoder and one entropy-parameter network that emits all three GMM
//! parameter families; `separate` runs an independent decoder/network
//! pair per family. Both produce identically shaped [`GmmVars`], so the
//! trainer and coder are mode-agnostic.

use gmsd_tensor::init::{fan_in_uniform, seeded_rng};
use gmsd_tensor::{
    fnv1a64, Checkpoint, Element, MaskKind, ParamId, ParamStore, Tape, TVar, Tensor,
};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::config::{hyper_decoder_channel_plan, ChannelPlan, DecoderMode, ModelConfig};
use crate::error::{CodecError, Result};
use crate::factorized::FactorizedDensity;
use crate::gmm::{assemble_gmm, GmmVars};

/// Downsampling factors of the two coding loops.
pub const MAIN_DOWN: usize = 16;
pub const HYPER_DOWN: usize = 4;

/// Tape bindings for every model parameter, index-aligned with the store.
pub struct ModelVars {
    vars: Vec<TVar>,
}

impl ModelVars {
    pub fn bind<E: Element>(store: &ParamStore<E>, t: &Tape<E>) -> Self {
        Self {
            vars: store.iter().map(|(_, p)| t.leaf(p.value.clone())).collect(),
        }
    }

    /// Bind with caller-supplied variables for selected parameters
    /// (used by gradient checks that perturb a subset).
    pub fn bind_with<E: Element>(
        store: &ParamStore<E>,
        mut leaf_for: impl FnMut(ParamId, &Tensor<E>) -> TVar,
    ) -> Self {
        Self {
            vars: store.iter().map(|(id, p)| leaf_for(id, &p.value)).collect(),
        }
    }

    #[inline]
    pub fn var(&self, id: ParamId) -> TVar {
        self.vars[id.index()]
    }

    /// (parameter, tape variable) pairs for the optimizer.
    pub fn pairs<E: Element>(&self, store: &ParamStore<E>) -> Vec<(ParamId, TVar)> {
        store.iter().map(|(id, _)| (id, self.var(id))).collect()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let kernel = store.add(
            format!("{name}.k"),
            fan_in_uniform(rng, vec![cout, cin, k, k], cin * k * k),
            true,
        )?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(vec![cout]), true)?;
        Ok(Self {
            kernel,
            bias,
            stride,
            pad,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> TVar {
        let c = t.conv2d(x, v.var(self.kernel), self.stride, self.pad);
        t.bias_add(c, v.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DeconvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl DeconvLayer {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Self> {
        let kernel = store.add(
            format!("{name}.k"),
            fan_in_uniform(rng, vec![cin, cout, k, k], cin * k * k),
            true,
        )?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(vec![cout]), true)?;
        Ok(Self {
            kernel,
            bias,
            stride,
            pad,
            out_pad,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> TVar {
        let c = t.conv2d_transpose(x, v.var(self.kernel), self.stride, self.pad, self.out_pad);
        t.bias_add(c, v.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ResBlock {
    c1: ConvLayer,
    c2: ConvLayer,
}

impl ResBlock {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        ch: usize,
    ) -> Result<Self> {
        Ok(Self {
            c1: ConvLayer::init(store, rng, &format!("{name}.c1"), ch, ch, 3, 1, 1)?,
            c2: ConvLayer::init(store, rng, &format!("{name}.c2"), ch, ch, 3, 1, 1)?,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> TVar {
        let h = self.c1.forward(t, v, x);
        let h = t.leaky_relu(h);
        let h = self.c2.forward(t, v, h);
        t.add(x, h)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Analysis {
    downs: Vec<ConvLayer>,
    res: Vec<Vec<ResBlock>>,
}

impl Analysis {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
        depth: usize,
    ) -> Result<Self> {
        let mut downs = Vec::new();
        let mut res = Vec::new();
        downs.push(ConvLayer::init(store, rng, "ga.d1", 3, n, 5, 2, 2)?);
        res.push(Self::blocks(store, rng, "ga.r1", n, depth)?);
        downs.push(ConvLayer::init(store, rng, "ga.d2", n, n, 3, 2, 1)?);
        res.push(Self::blocks(store, rng, "ga.r2", n, depth)?);
        downs.push(ConvLayer::init(store, rng, "ga.d3", n, n, 3, 2, 1)?);
        res.push(Self::blocks(store, rng, "ga.r3", n, depth)?);
        downs.push(ConvLayer::init(store, rng, "ga.d4", n, m, 3, 2, 1)?);
        Ok(Self { downs, res })
    }

    fn blocks<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        ch: usize,
        depth: usize,
    ) -> Result<Vec<ResBlock>> {
        (0..depth)
            .map(|i| ResBlock::init(store, rng, &format!("{name}.b{i}"), ch))
            .collect()
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> TVar {
        let mut h = x;
        for (i, down) in self.downs.iter().enumerate() {
            h = down.forward(t, v, h);
            if i < self.res.len() {
                h = t.leaky_relu(h);
                for block in &self.res[i] {
                    h = block.forward(t, v, h);
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Synthesis {
    ups: Vec<DeconvLayer>,
    res: Vec<Vec<ResBlock>>,
}

impl Synthesis {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
        depth: usize,
    ) -> Result<Self> {
        let mut ups = Vec::new();
        let mut res = Vec::new();
        ups.push(DeconvLayer::init(store, rng, "gs.u1", m, n, 3, 2, 1, 1)?);
        res.push(Analysis::blocks(store, rng, "gs.r1", n, depth)?);
        ups.push(DeconvLayer::init(store, rng, "gs.u2", n, n, 3, 2, 1, 1)?);
        res.push(Analysis::blocks(store, rng, "gs.r2", n, depth)?);
        ups.push(DeconvLayer::init(store, rng, "gs.u3", n, n, 3, 2, 1, 1)?);
        res.push(Analysis::blocks(store, rng, "gs.r3", n, depth)?);
        ups.push(DeconvLayer::init(store, rng, "gs.u4", n, 3, 5, 2, 2, 1)?);
        Ok(Self { ups, res })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, y: TVar) -> TVar {
        let mut h = y;
        for (i, up) in self.ups.iter().enumerate() {
            h = up.forward(t, v, h);
            if i < self.res.len() {
                h = t.leaky_relu(h);
                for block in &self.res[i] {
                    h = block.forward(t, v, h);
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HyperAnalysis {
    c1: ConvLayer,
    c2: ConvLayer,
    c3: ConvLayer,
}

impl HyperAnalysis {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
    ) -> Result<Self> {
        Ok(Self {
            c1: ConvLayer::init(store, rng, "ha.c1", m, n, 3, 1, 1)?,
            c2: ConvLayer::init(store, rng, "ha.c2", n, n, 5, 2, 2)?,
            c3: ConvLayer::init(store, rng, "ha.c3", n, n, 5, 2, 2)?,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, y: TVar) -> TVar {
        let h = t.leaky_relu(self.c1.forward(t, v, y));
        let h = t.leaky_relu(self.c2.forward(t, v, h));
        self.c3.forward(t, v, h)
    }
}

/// One hyperprior decoder branch (Conv1..Conv5 of the reference table,
/// strides 1,2,1,2,1 with the stride-2 layers upsampling).
#[derive(Clone, Debug)]
pub(crate) struct HyperDecoder {
    c1: ConvLayer,
    u2: DeconvLayer,
    c3: ConvLayer,
    u4: DeconvLayer,
    c5: ConvLayer,
}

impl HyperDecoder {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        n: usize,
        widths: &[usize; 5],
    ) -> Result<Self> {
        Ok(Self {
            c1: ConvLayer::init(store, rng, &format!("{name}.c1"), n, widths[0], 3, 1, 1)?,
            u2: DeconvLayer::init(store, rng, &format!("{name}.u2"), widths[0], widths[1], 3, 2, 1, 1)?,
            c3: ConvLayer::init(store, rng, &format!("{name}.c3"), widths[1], widths[2], 3, 1, 1)?,
            u4: DeconvLayer::init(store, rng, &format!("{name}.u4"), widths[2], widths[3], 3, 2, 1, 1)?,
            c5: ConvLayer::init(store, rng, &format!("{name}.c5"), widths[3], widths[4], 3, 1, 1)?,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, z: TVar) -> TVar {
        let h = t.leaky_relu(self.c1.forward(t, v, z));
        let h = t.leaky_relu(self.u2.forward(t, v, h));
        let h = t.leaky_relu(self.c3.forward(t, v, h));
        let h = t.leaky_relu(self.u4.forward(t, v, h));
        self.c5.forward(t, v, h)
    }
}

/// Entropy-parameter network: three 1x1 convolutions on the concatenated
/// context and hyper features.
#[derive(Clone, Debug)]
pub(crate) struct EntropyNet {
    pub(crate) l1: ConvLayer,
    pub(crate) l2: ConvLayer,
    pub(crate) l3: ConvLayer,
}

impl EntropyNet {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        hidden: &[usize; 2],
        out: usize,
    ) -> Result<Self> {
        Ok(Self {
            l1: ConvLayer::init(store, rng, &format!("{name}.l1"), cin, hidden[0], 1, 1, 0)?,
            l2: ConvLayer::init(store, rng, &format!("{name}.l2"), hidden[0], hidden[1], 1, 1, 0)?,
            l3: ConvLayer::init(store, rng, &format!("{name}.l3"), hidden[1], out, 1, 1, 0)?,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> TVar {
        let h = t.leaky_relu(self.l1.forward(t, v, x));
        let h = t.leaky_relu(self.l2.forward(t, v, h));
        self.l3.forward(t, v, h)
    }
}

/// The causal context model: a single masked 5x5 type-A convolution over
/// the already decoded latents, emitting 2*M feature channels.
#[derive(Clone, Debug)]
pub(crate) struct ContextLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub out_ch: usize,
}

impl ContextLayer {
    fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        m: usize,
    ) -> Result<Self> {
        let out_ch = 2 * m;
        let kernel = store.add(
            "ctx.k",
            fan_in_uniform(rng, vec![out_ch, m, 5, 5], m * 5 * 5),
            true,
        )?;
        let bias = store.add("ctx.b", Tensor::zeros(vec![out_ch]), true)?;
        Ok(Self {
            kernel,
            bias,
            out_ch,
        })
    }

    fn forward<E: Element>(&self, t: &Tape<E>, v: &ModelVars, y_hat: TVar) -> TVar {
        let c = t.masked_conv2d(y_hat, v.var(self.kernel), MaskKind::A);
        t.bias_add(c, v.var(self.bias))
    }
}

/// The full codec model: parameters plus the wiring of every transform.
pub struct CodecModel<E: Element> {
    pub config: ModelConfig,
    pub store: ParamStore<E>,
    /// Verbatim config text embedded in checkpoints.
    pub config_text: String,
    pub(crate) plan: ChannelPlan,
    pub(crate) g_a: Analysis,
    pub(crate) g_s: Synthesis,
    pub(crate) h_a: HyperAnalysis,
    pub(crate) h_s: Vec<HyperDecoder>,
    pub(crate) ctx: ContextLayer,
    pub(crate) f: Vec<EntropyNet>,
    pub(crate) factorized: FactorizedDensity,
}

impl<E: Element> CodecModel<E> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let plan = hyper_decoder_channel_plan(&config);
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(seed);
        let (n, m, depth) = (config.n, config.m, config.residual_depth);

        let g_a = Analysis::init(&mut store, &mut rng, n, m, depth)?;
        let g_s = Synthesis::init(&mut store, &mut rng, n, m, depth)?;
        let h_a = HyperAnalysis::init(&mut store, &mut rng, n, m)?;

        let branch_names: &[&str] = match config.decoder_mode {
            DecoderMode::Mixed => &["hs"],
            DecoderMode::Separate => &["hs_w", "hs_mu", "hs_sg"],
        };
        let mut h_s = Vec::new();
        for name in branch_names {
            h_s.push(HyperDecoder::init(&mut store, &mut rng, name, n, &plan.hyper_decoder)?);
        }

        let ctx = ContextLayer::init(&mut store, &mut rng, m)?;

        let f_names: &[&str] = match config.decoder_mode {
            DecoderMode::Mixed => &["f"],
            DecoderMode::Separate => &["f_w", "f_mu", "f_sg"],
        };
        let f_in = ctx.out_ch + plan.hyper_decoder[4];
        let mut f = Vec::new();
        for name in f_names {
            f.push(EntropyNet::init(
                &mut store,
                &mut rng,
                name,
                f_in,
                &plan.entropy_hidden,
                plan.entropy_out,
            )?);
        }

        let factorized = FactorizedDensity::init(&mut store, &mut rng, "fac", n)?;

        let config_text = config.to_text();
        Ok(Self {
            config,
            store,
            config_text,
            plan,
            g_a,
            g_s,
            h_a,
            h_s,
            ctx,
            f,
            factorized,
        })
    }

    pub fn bind(&self, t: &Tape<E>) -> ModelVars {
        ModelVars::bind(&self.store, t)
    }

    pub fn factorized(&self) -> &FactorizedDensity {
        &self.factorized
    }

    pub fn channel_plan(&self) -> &ChannelPlan {
        &self.plan
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.store.total_elements()
    }

    /// y = g_a(x). Input is (B, 3, H, W) with H, W multiples of 16.
    pub fn analysis(&self, t: &Tape<E>, v: &ModelVars, x: TVar) -> Result<TVar> {
        let shape = t.shape(x);
        if shape.len() != 4 || shape[1] != 3 {
            return Err(CodecError::Precondition(format!(
                "analysis expects (B,3,H,W), got {shape:?}"
            )));
        }
        if shape[2] % MAIN_DOWN != 0 || shape[3] % MAIN_DOWN != 0 {
            return Err(CodecError::Precondition(format!(
                "analysis input dims must be multiples of {MAIN_DOWN}, got {}x{} (padding is the caller's job)",
                shape[2], shape[3]
            )));
        }
        Ok(self.g_a.forward(t, v, x))
    }

    /// x_hat = g_s(y_hat), unclamped (clamping to [0,1] is an
    /// evaluation-time step, not part of the transform).
    pub fn synthesis(&self, t: &Tape<E>, v: &ModelVars, y: TVar) -> TVar {
        self.g_s.forward(t, v, y)
    }

    /// z = h_a(y).
    pub fn hyper_analysis(&self, t: &Tape<E>, v: &ModelVars, y: TVar) -> TVar {
        self.h_a.forward(t, v, y)
    }

    /// Hyper features for one branch, cropped to the latent grid.
    pub fn hyper_synthesis(
        &self,
        t: &Tape<E>,
        v: &ModelVars,
        z: TVar,
        latent_hw: (usize, usize),
        branch: usize,
    ) -> TVar {
        let h = self.h_s[branch].forward(t, v, z);
        let shape = t.shape(h);
        if (shape[2], shape[3]) == latent_hw {
            h
        } else {
            t.slice_spatial(h, latent_hw.0, latent_hw.1)
        }
    }

    /// All hyper branches for the current mode.
    pub fn hyper_synthesis_all(
        &self,
        t: &Tape<E>,
        v: &ModelVars,
        z: TVar,
        latent_hw: (usize, usize),
    ) -> Vec<TVar> {
        (0..self.h_s.len())
            .map(|i| self.hyper_synthesis(t, v, z, latent_hw, i))
            .collect()
    }

    /// Context features from the decoded-so-far latents.
    pub fn context(&self, t: &Tape<E>, v: &ModelVars, y_hat: TVar) -> TVar {
        self.ctx.forward(t, v, y_hat)
    }

    /// Mode-agnostic entropy parameters from context + hyper features.
    pub fn entropy_params(
        &self,
        t: &Tape<E>,
        v: &ModelVars,
        ctx_features: TVar,
        hyper_features: &[TVar],
    ) -> GmmVars {
        let (m, k) = (self.config.m, self.config.k);
        let km = m * k;
        match self.config.decoder_mode {
            DecoderMode::Mixed => {
                let joint = t.concat_channels(ctx_features, hyper_features[0]);
                let raw = self.f[0].forward(t, v, joint);
                let w_raw = t.slice_channels(raw, 0, km);
                let mu_raw = t.slice_channels(raw, km, 2 * km);
                let sg_raw = t.slice_channels(raw, 2 * km, 3 * km);
                assemble_gmm(t, w_raw, mu_raw, sg_raw, m, k)
            }
            DecoderMode::Separate => {
                let mut raws = Vec::with_capacity(3);
                for (branch, net) in self.f.iter().enumerate() {
                    let joint = t.concat_channels(ctx_features, hyper_features[branch]);
                    raws.push(net.forward(t, v, joint));
                }
                assemble_gmm(t, raws[0], raws[1], raws[2], m, k)
            }
        }
    }

    /// Eq.-6-style single-decoder path; usage error in separate mode.
    pub fn entropy_params_mixed(
        &self,
        t: &Tape<E>,
        v: &ModelVars,
        ctx_features: TVar,
        hyper_features: TVar,
    ) -> Result<GmmVars> {
        if self.config.decoder_mode != DecoderMode::Mixed {
            return Err(CodecError::Precondition(
                "entropy_params_mixed called on a separate-mode model".into(),
            ));
        }
        Ok(self.entropy_params(t, v, ctx_features, &[hyper_features]))
    }

    /// Eq.-7-style per-family path; usage error in mixed mode.
    pub fn entropy_params_separate(
        &self,
        t: &Tape<E>,
        v: &ModelVars,
        ctx_features: TVar,
        hyper_features: &[TVar],
    ) -> Result<GmmVars> {
        if self.config.decoder_mode != DecoderMode::Separate {
            return Err(CodecError::Precondition(
                "entropy_params_separate called on a mixed-mode model".into(),
            ));
        }
        if hyper_features.len() != 3 {
            return Err(CodecError::Precondition(format!(
                "separate mode needs 3 hyper feature tensors, got {}",
                hyper_features.len()
            )));
        }
        Ok(self.entropy_params(t, v, ctx_features, hyper_features))
    }

    // ── checkpointing ──────────────────────────────────────────────────

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.store
            .save(&mut buf, Some(&self.config_text))
            .expect("in-memory serialization cannot fail");
        buf
    }

    /// FNV-1a of the serialized checkpoint (the identity carried in
    /// bitstream headers).
    pub fn checkpoint_hash(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }

    pub fn save_file(&self, path: &Path) -> Result<u64> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes)?;
        Ok(fnv1a64(&bytes))
    }

    /// Load a model from a checkpoint; the embedded config drives
    /// construction. Returns the model and the file hash.
    pub fn load_file(path: &Path) -> Result<(Self, u64)> {
        let bytes = std::fs::read(path)?;
        let hash = fnv1a64(&bytes);
        let ckpt = Checkpoint::read(bytes.as_slice()).map_err(CodecError::Tensor)?;
        let model = Self::from_checkpoint(ckpt)?;
        Ok((model, hash))
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let kv = crate::config::parse_kv(&ckpt.config)?;
        let config = ModelConfig::from_kv(&kv)?;
        let mut model = Self::new(config, 0)?;
        model.store.load_records(&ckpt.records).map_err(CodecError::Tensor)?;
        model.config_text = ckpt.config;
        Ok(model)
    }
}

/// Latent grid dims for a padded input size.
pub fn latent_hw(h: usize, w: usize) -> (usize, usize) {
    (h / MAIN_DOWN, w / MAIN_DOWN)
}

/// Hyper grid dims for a latent size (ceil division through two stride-2
/// convolutions).
pub fn hyper_hw(hy: usize, wy: usize) -> (usize, usize) {
    (hy.div_ceil(2).div_ceil(2), wy.div_ceil(2).div_ceil(2))
}

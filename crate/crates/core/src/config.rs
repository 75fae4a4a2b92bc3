//! Model, training and evaluation configuration.
//!
//! Configs are stored as flat `key = value` text with dotted section paths.
//! `model.preset` expands a named architecture before explicit keys are
//! applied, so a file may name a preset and override single fields.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sed_tensor::Precision;

use crate::error::{config_err, Result};
use crate::frontend::FrontendConfig;

/// Pads a dilation tuple on the left with 1s up to `k` entries.
pub fn dilation_tuple_expand(spec: &[usize], k: usize) -> Result<Vec<usize>> {
    if spec.len() > k {
        return Err(config_err(format!(
            "dilation tuple {:?} has more than {} entries",
            spec, k
        )));
    }
    if spec.is_empty() || spec.contains(&0) {
        return Err(config_err(format!("invalid dilation tuple {:?}", spec)));
    }
    let mut out = vec![1; k - spec.len()];
    out.extend_from_slice(spec);
    Ok(out)
}

/// Parses branch notation such as `(1)x5+(2,3)+(2,2,3)` into expanded
/// per-branch dilation lists.
pub fn parse_branches(text: &str, k: usize) -> Result<Vec<Vec<usize>>> {
    let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for term in text.split('+') {
        let (tuple, count) = match term.rsplit_once(['x', '×']) {
            Some((t, n)) if t.ends_with(')') => (
                t,
                n.parse::<usize>()
                    .map_err(|_| config_err(format!("bad repeat count in `{}`", term)))?,
            ),
            _ => (term, 1),
        };
        let inner = tuple
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| config_err(format!("expected `(d, ...)` in `{}`", term)))?;
        let dils = inner
            .split(',')
            .map(|d| d.parse::<usize>().map_err(|_| config_err(format!("bad dilation in `{}`", term))))
            .collect::<Result<Vec<_>>>()?;
        let expanded = dilation_tuple_expand(&dils, k)?;
        for _ in 0..count {
            out.push(expanded.clone());
        }
    }
    Ok(out)
}

fn format_branches(branches: &[Vec<usize>]) -> String {
    branches
        .iter()
        .map(|b| format!("({})", b.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")))
        .collect::<Vec<_>>()
        .join("+")
}

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = crate::error::SedError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(config_err(format!(
                        "unknown {} `{}` (expected one of: {})",
                        stringify!($name),
                        s,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `x * sigmoid(W x + b)` with a learned channel-mixing gate.
    ContextGating,
    Relu,
}
text_enum!(Activation { ContextGating => "cg", Relu => "relu" });

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextPooling {
    Average,
    Tap,
}
text_enum!(ContextPooling { Average => "avg", Tap => "tap" });

/// Input of the velocity-attention branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityInput {
    Delta,
    Raw,
}
text_enum!(VelocityInput { Delta => "delta", Raw => "raw" });

/// Normalization of the weak-head attention logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakPooling {
    /// Softmax over time per class.
    Time,
    /// Softmax over classes per frame, renormalized over time.
    Class,
}
text_enum!(WeakPooling { Time => "time", Class => "class" });

/// Which side of the consistency loss is detached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopGrad {
    Teacher,
    Student,
}
text_enum!(StopGrad { Teacher => "teacher", Student => "student" });

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakMask {
    Min,
    Gate,
}
text_enum!(WeakMask { Min => "min", Gate => "gate" });

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionSetting(pub Precision);

impl fmt::Display for PrecisionSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

impl FromStr for PrecisionSetting {
    type Err = crate::error::SedError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Self(Precision::F64)),
            "f32" => Ok(Self(Precision::F32)),
            _ => Err(config_err(format!("unknown precision `{}` (f32 or f64)", s))),
        }
    }
}

/// Per-frequency kernel attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    /// Extent of the first frequency-axis convolution.
    pub kernel: usize,
    pub reduction: usize,
    pub min_hidden: usize,
    pub temperature: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            kernel: 3,
            reduction: 4,
            min_hidden: 4,
            temperature: 31.0,
        }
    }
}

impl AttentionConfig {
    pub fn hidden(&self, channels: usize) -> usize {
        (channels / self.reduction).max(self.min_hidden)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapConfig {
    /// Kernel of the first convolution in each branch.
    pub kernel: usize,
    /// Kernel of the second convolution in each branch.
    pub head_kernel: usize,
    pub reduction: usize,
    pub min_hidden: usize,
    pub velocity_input: VelocityInput,
    pub use_ta: bool,
    pub use_va: bool,
    pub use_avg: bool,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            kernel: 3,
            head_kernel: 1,
            reduction: 4,
            min_hidden: 4,
            velocity_input: VelocityInput::Delta,
            use_ta: true,
            use_va: true,
            use_avg: true,
        }
    }
}

impl TapConfig {
    pub fn hidden(&self, channels: usize) -> usize {
        (channels / self.reduction).max(self.min_hidden)
    }

    fn terms(&self) -> String {
        let mut t = Vec::new();
        if self.use_ta {
            t.push("ta");
        }
        if self.use_va {
            t.push("va");
        }
        if self.use_avg {
            t.push("avg");
        }
        t.join(",")
    }

    fn set_terms(&mut self, text: &str) -> Result<()> {
        let (mut ta, mut va, mut avg) = (false, false, false);
        for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match term {
                "ta" => ta = true,
                "va" => va = true,
                "avg" => avg = true,
                _ => return Err(config_err(format!("unknown TAP term `{}`", term))),
            }
        }
        if !(ta || va || avg) {
            return Err(config_err("TAP needs at least one term"));
        }
        (self.use_ta, self.use_va, self.use_avg) = (ta, va, avg);
        Ok(())
    }
}

/// Variant tag derived from a layer's structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerVariant {
    Static,
    Fdy,
    Dfd,
    Pfd,
    Mdfd,
    Tfd,
}

/// One convolution layer: a static branch plus zero or more dynamic
/// branches of equal width, concatenated along channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerConfig {
    pub static_channels: usize,
    pub branch_channels: usize,
    /// Expanded per-branch dilation lists, each of length K.
    pub branches: Vec<Vec<usize>>,
    pub pooling: ContextPooling,
    /// Average-pool factors `(time, freq)` applied after the layer.
    pub pool: (usize, usize),
}

impl LayerConfig {
    pub fn static_layer(channels: usize, pool: (usize, usize)) -> Self {
        Self {
            static_channels: channels,
            branch_channels: 0,
            branches: Vec::new(),
            pooling: ContextPooling::Average,
            pool,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.static_channels + self.branches.len() * self.branch_channels
    }

    pub fn is_dynamic(&self) -> bool {
        !self.branches.is_empty()
    }

    pub fn variant(&self) -> LayerVariant {
        match self.branches.len() {
            0 => LayerVariant::Static,
            1 if self.static_channels > 0 => LayerVariant::Pfd,
            1 if self.pooling == ContextPooling::Tap => LayerVariant::Tfd,
            1 if self.branches[0].iter().all(|&d| d == 1) => LayerVariant::Fdy,
            1 => LayerVariant::Dfd,
            _ => LayerVariant::Mdfd,
        }
    }

    fn validate(&self, idx: usize) -> Result<()> {
        if self.out_channels() == 0 {
            return Err(config_err(format!("layer {} has no output channels", idx)));
        }
        if self.is_dynamic() && self.branch_channels == 0 {
            return Err(config_err(format!("layer {} has dynamic branches of width 0", idx)));
        }
        if !self.is_dynamic() && self.branch_channels != 0 {
            return Err(config_err(format!("layer {} sets branch width without branches", idx)));
        }
        if let Some(b) = self.branches.iter().find(|b| b.len() < 2 || b.contains(&0)) {
            return Err(config_err(format!("layer {} has invalid basis dilations {:?}", idx, b)));
        }
        if self.pool.0 == 0 || self.pool.1 == 0 {
            return Err(config_err(format!("layer {} has a zero pool factor", idx)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub basis_kernels: usize,
    pub activation: Activation,
    pub layers: Vec<LayerConfig>,
    pub attention: AttentionConfig,
    pub tap: TapConfig,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub classes: usize,
    pub cnn_dropout: f64,
    pub rnn_dropout: f64,
    pub weak_pooling: WeakPooling,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

pub const BASE_CHANNELS: [usize; 7] = [32, 64, 128, 256, 256, 256, 256];
pub const BASE_POOLS: [(usize, usize); 7] = [(2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 2)];

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_layers(
            BASE_CHANNELS
                .iter()
                .zip(BASE_POOLS)
                .map(|(&c, p)| LayerConfig::static_layer(c, p))
                .collect(),
        )
    }
}

/// Fractions written `N/D`.
fn parse_ratio(text: &str) -> Result<(usize, usize)> {
    let (n, d) = text
        .split_once('/')
        .ok_or_else(|| config_err(format!("expected a ratio N/D, got `{}`", text)))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| config_err(format!("bad ratio `{}`", text)));
    let (n, d) = (parse(n)?, parse(d)?);
    if d == 0 {
        return Err(config_err(format!("zero denominator in `{}`", text)));
    }
    Ok((n, d))
}

fn scaled(c: usize, n: usize, d: usize, what: &str) -> Result<usize> {
    if (c * n) % d != 0 {
        return Err(config_err(format!("{} channels {}·{}/{} is not integral", what, c, n, d)));
    }
    Ok(c * n / d)
}

impl ModelConfig {
    pub fn with_layers(layers: Vec<LayerConfig>) -> Self {
        Self {
            n_mels: 128,
            in_channels: 1,
            kernel_size: 3,
            basis_kernels: 4,
            activation: Activation::ContextGating,
            layers,
            attention: AttentionConfig::default(),
            tap: TapConfig::default(),
            gru_hidden: 256,
            gru_layers: 2,
            classes: 10,
            cnn_dropout: 0.5,
            rnn_dropout: 0.5,
            weak_pooling: WeakPooling::Time,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Expands a named architecture over the given per-layer base widths.
    ///
    /// Names: `baseline`, `fdy`, `dfd[:(d,..)]`, `pfd[:N/D]`, `tfd`,
    /// `mdfd[:N/D:branches]` and `tap+` prefixed dynamic variants, e.g.
    /// `tap+pfd:5/8`, `tap+mdfd:5/4:(1)x3+(2,3,3)`.
    pub fn preset(name: &str, base: &[usize], k: usize) -> Result<Self> {
        if base.len() != BASE_POOLS.len() {
            return Err(config_err(format!("presets need {} base widths", BASE_POOLS.len())));
        }
        let name = name.trim();
        let (tap, rest) = match name.strip_prefix("tap+") {
            Some(r) => (true, r),
            None => (false, name),
        };
        let (kind, arg) = match rest.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (rest, None),
        };
        let pooling = if tap {
            ContextPooling::Tap
        } else {
            ContextPooling::Average
        };
        // (channel multiplier N/D, branch divisor, branches, static share)
        let plain = vec![1; k];
        let (mult, layer_of): ((usize, usize), Box<dyn Fn(usize) -> Result<(usize, usize, Vec<Vec<usize>>)>>) =
            match kind {
                "baseline" | "static" if !tap => ((1, 1), Box::new(|c| Ok((c, 0, vec![])))),
                "fdy" => ((1, 1), Box::new(move |c| Ok((0, c, vec![plain.clone()])))),
                "tfd" if !tap => {
                    return Self::preset(&format!("tap+fdy{}", arg.map(|a| format!(":{}", a)).unwrap_or_default()), base, k)
                }
                "dfd" => {
                    let b = parse_branches(arg.unwrap_or("(2,3,3)"), k)?;
                    if b.len() != 1 {
                        return Err(config_err("dfd takes a single dilation tuple"));
                    }
                    ((1, 1), Box::new(move |c| Ok((0, c, b.clone()))))
                }
                "pfd" => {
                    let (n, d) = parse_ratio(arg.unwrap_or("1/8"))?;
                    if n > d {
                        return Err(config_err("pfd proportion exceeds 1"));
                    }
                    let plain = plain.clone();
                    ((1, 1), Box::new(move |c| {
                        let dynamic = scaled(c, n, d, "dynamic")?;
                        Ok((c - dynamic, dynamic, if dynamic > 0 { vec![plain.clone()] } else { vec![] }))
                    }))
                }
                "mdfd" => {
                    let (ratio, scheme) = match arg {
                        Some(a) => a
                            .split_once(':')
                            .ok_or_else(|| config_err("mdfd expects `N/D:branches`"))?,
                        None if tap => ("5/4", "(1)x3+(2,3,3)"),
                        None => ("11/8", "(1)x5+(2,3)+(2,2,3)+(2,3,3)"),
                    };
                    let (n, d) = parse_ratio(ratio)?;
                    let b = parse_branches(scheme, k)?;
                    if b.len() > n {
                        return Err(config_err(format!("{} branches do not fit in {}/{}", b.len(), n, d)));
                    }
                    ((n, d), Box::new(move |c| {
                        let width = scaled(c, 1, n, "branch")?;
                        Ok((c - b.len() * width, width, b.clone()))
                    }))
                }
                _ => return Err(config_err(format!("unknown model preset `{}`", name))),
            };
        let mut layers = Vec::with_capacity(base.len());
        for (i, (&c, &pool)) in base.iter().zip(&BASE_POOLS).enumerate() {
            let channels = scaled(c, mult.0, mult.1, "layer")?;
            if i == 0 {
                layers.push(LayerConfig::static_layer(channels, pool));
                continue;
            }
            let (static_channels, branch_channels, branches) = layer_of(channels)?;
            let branch_channels = if branches.is_empty() { 0 } else { branch_channels };
            layers.push(LayerConfig {
                static_channels,
                branch_channels,
                branches,
                pooling: if branch_channels > 0 { pooling } else { ContextPooling::Average },
                pool,
            });
        }
        let mut cfg = Self::with_layers(layers);
        cfg.basis_kernels = k;
        Ok(cfg)
    }

    /// Frequency and time extents after the CNN for a `[n_mels, frames]` input.
    pub fn output_extent(&self, frames: usize) -> (usize, usize) {
        self.layers
            .iter()
            .fold((self.n_mels, frames), |(f, t), l| (f / l.pool.1, t / l.pool.0))
    }

    pub fn time_pool(&self) -> usize {
        self.layers.iter().map(|l| l.pool.0).product()
    }

    pub fn cnn_out_channels(&self) -> usize {
        self.layers.last().map_or(self.in_channels, |l| l.out_channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(config_err("model needs at least one conv layer"));
        }
        if self.layers[0].is_dynamic() {
            return Err(config_err("the first conv layer must be static"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(config_err("kernel size must be odd"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i + 1)?;
            if let Some(b) = l.branches.iter().find(|b| b.len() != self.basis_kernels) {
                return Err(config_err(format!(
                    "layer {} branch {:?} does not have {} basis kernels",
                    i + 1,
                    b,
                    self.basis_kernels
                )));
            }
        }
        let f = self.layers.iter().fold(self.n_mels, |f, l| f / l.pool.1);
        if f != 1 {
            return Err(config_err(format!(
                "frequency extent after pooling is {}, must be 1",
                f
            )));
        }
        for (name, p) in [("cnn_dropout", self.cnn_dropout), ("rnn_dropout", self.rnn_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(config_err(format!("{} must lie in [0, 1)", name)));
            }
        }
        if self.gru_hidden == 0 || self.gru_layers == 0 || self.classes == 0 {
            return Err(config_err("gru_hidden, gru_layers and classes must be positive"));
        }
        if self.attention.temperature <= 0.0 {
            return Err(config_err("attention temperature must be positive"));
        }
        Ok(())
    }
}

/// Intersection-based detection scoring parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdsConfig {
    pub dtc: f64,
    pub gtc: f64,
    pub alpha_st: f64,
    pub alpha_ct: f64,
    /// Upper bound of the false-positive-rate axis, per hour.
    pub e_max: f64,
    pub n_thresholds: usize,
}

impl Default for PsdsConfig {
    fn default() -> Self {
        Self {
            dtc: 0.7,
            gtc: 0.7,
            alpha_st: 1.0,
            alpha_ct: 0.0,
            e_max: 100.0,
            n_thresholds: 50,
        }
    }
}

impl PsdsConfig {
    /// Operating points `1/(2n), 3/(2n), ..., 1 - 1/(2n)`.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.n_thresholds as f64;
        (0..self.n_thresholds).map(|i| (2 * i + 1) as f64 / (2.0 * n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dtc > 0.0 && self.dtc <= 1.0 && self.gtc > 0.0 && self.gtc <= 1.0) {
            return Err(config_err("dtc and gtc must lie in (0, 1]"));
        }
        if self.e_max <= 0.0 || self.n_thresholds == 0 {
            return Err(config_err("e_max and n_thresholds must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub psds: PsdsConfig,
    pub median_length: usize,
    pub weak_mask: WeakMask,
    pub f1_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            psds: PsdsConfig::default(),
            median_length: 7,
            weak_mask: WeakMask::Min,
            f1_threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_strong: usize,
    pub batch_weak: usize,
    pub batch_unlabeled: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub ema_decay: f64,
    pub w_weak: f64,
    pub w_cons_max: f64,
    pub ramp_epochs: usize,
    pub stop_grad: StopGrad,
    pub mixup_alpha: f64,
    pub mixup_prob: f64,
    /// Largest circular shift in feature frames.
    pub max_shift: usize,
    /// Longest time mask in feature frames.
    pub mask_max_frames: usize,
    pub filter_bands: (usize, usize),
    pub filter_gain_db: f64,
    pub precision: PrecisionSetting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_strong: 12,
            batch_weak: 12,
            batch_unlabeled: 24,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            ema_decay: 0.999,
            w_weak: 0.5,
            w_cons_max: 2.0,
            ramp_epochs: 50,
            stop_grad: StopGrad::Teacher,
            mixup_alpha: 0.2,
            mixup_prob: 0.5,
            max_shift: 90,
            mask_max_frames: 120,
            filter_bands: (2, 5),
            filter_gain_db: 6.0,
            precision: PrecisionSetting(Precision::F32),
        }
    }
}

/// Everything needed to reproduce a run from data.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

fn parse_list<T: FromStr>(key: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| config_err(format!("{}: bad list entry `{}`", key, s))))
        .collect()
}

fn parse_pair(key: &str, text: &str, sep: char) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(sep)
        .ok_or_else(|| config_err(format!("{}: expected `a{}b`, got `{}`", key, sep, text)))?;
    let p = |s: &str| s.trim().parse::<usize>().map_err(|_| config_err(format!("{}: bad value `{}`", key, text)));
    Ok((p(a)?, p(b)?))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", n + 1)))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(config_err(format!("line {}: duplicate key `{}`", n + 1, k.trim())));
        }
    }
    Ok(map)
}

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = v
                .parse::<T>()
                .map_err(|_| config_err(format!("{}: cannot parse `{}`", key, v)))?;
        }
        Ok(())
    }

    fn set_with<T>(&mut self, key: &str, slot: &mut T, f: impl Fn(&str, &str) -> Result<T>) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = f(key, &v)?;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("seed", self.seed.to_string());

        let f = &self.frontend;
        put("frontend.sample_rate", f.sample_rate.to_string());
        put("frontend.clip_seconds", f.clip_seconds.to_string());
        put("frontend.n_fft", f.n_fft.to_string());
        put("frontend.hop", f.hop.to_string());
        put("frontend.n_mels", f.n_mels.to_string());
        put("frontend.f_min", f.f_min.to_string());
        put("frontend.f_max", f.f_max.to_string());
        put("frontend.power", f.power.to_string());
        put("frontend.log_floor", f.log_floor.to_string());
        put("frontend.window", "hamming".into());
        put("frontend.framing", "centered-reflect".into());
        put("frontend.mel_scale", "htk".into());

        let m = &self.model;
        put("model.n_mels", m.n_mels.to_string());
        put("model.in_channels", m.in_channels.to_string());
        put("model.kernel_size", m.kernel_size.to_string());
        put("model.basis_kernels", m.basis_kernels.to_string());
        put("model.activation", m.activation.to_string());
        put("model.layers", m.layers.len().to_string());
        for (i, l) in m.layers.iter().enumerate() {
            let p = format!("model.layer{}.", i + 1);
            put(&format!("{}static_channels", p), l.static_channels.to_string());
            put(&format!("{}branch_channels", p), l.branch_channels.to_string());
            put(&format!("{}branches", p), format_branches(&l.branches));
            put(&format!("{}pooling", p), l.pooling.to_string());
            put(&format!("{}pool", p), format!("{}x{}", l.pool.0, l.pool.1));
        }
        put("model.attention.kernel", m.attention.kernel.to_string());
        put("model.attention.reduction", m.attention.reduction.to_string());
        put("model.attention.min_hidden", m.attention.min_hidden.to_string());
        put("model.attention.temperature", m.attention.temperature.to_string());
        put("model.tap.kernel", m.tap.kernel.to_string());
        put("model.tap.head_kernel", m.tap.head_kernel.to_string());
        put("model.tap.reduction", m.tap.reduction.to_string());
        put("model.tap.min_hidden", m.tap.min_hidden.to_string());
        put("model.tap.velocity_input", m.tap.velocity_input.to_string());
        put("model.tap.terms", m.tap.terms());
        put("model.gru_hidden", m.gru_hidden.to_string());
        put("model.gru_layers", m.gru_layers.to_string());
        put("model.classes", m.classes.to_string());
        put("model.cnn_dropout", m.cnn_dropout.to_string());
        put("model.rnn_dropout", m.rnn_dropout.to_string());
        put("model.weak_pooling", m.weak_pooling.to_string());
        put("model.bn_eps", m.bn_eps.to_string());
        put("model.bn_momentum", m.bn_momentum.to_string());

        let t = &self.train;
        put("train.epochs", t.epochs.to_string());
        put("train.batch_strong", t.batch_strong.to_string());
        put("train.batch_weak", t.batch_weak.to_string());
        put("train.batch_unlabeled", t.batch_unlabeled.to_string());
        put("train.lr", t.lr.to_string());
        put("train.beta1", t.beta1.to_string());
        put("train.beta2", t.beta2.to_string());
        put("train.adam_eps", t.adam_eps.to_string());
        put("train.ema_decay", t.ema_decay.to_string());
        put("train.w_weak", t.w_weak.to_string());
        put("train.w_cons_max", t.w_cons_max.to_string());
        put("train.ramp_epochs", t.ramp_epochs.to_string());
        put("train.stop_grad", t.stop_grad.to_string());
        put("train.mixup_alpha", t.mixup_alpha.to_string());
        put("train.mixup_prob", t.mixup_prob.to_string());
        put("train.max_shift", t.max_shift.to_string());
        put("train.mask_max_frames", t.mask_max_frames.to_string());
        put("train.filter_bands", format!("{}-{}", t.filter_bands.0, t.filter_bands.1));
        put("train.filter_gain_db", t.filter_gain_db.to_string());
        put("train.precision", t.precision.to_string());

        let e = &self.eval;
        put("eval.dtc", e.psds.dtc.to_string());
        put("eval.gtc", e.psds.gtc.to_string());
        put("eval.alpha_st", e.psds.alpha_st.to_string());
        put("eval.alpha_ct", e.psds.alpha_ct.to_string());
        put("eval.e_max", e.psds.e_max.to_string());
        put("eval.n_thresholds", e.psds.n_thresholds.to_string());
        put("eval.median_length", e.median_length.to_string());
        put("eval.weak_mask", e.weak_mask.to_string());
        put("eval.f1_threshold", e.f1_threshold.to_string());
        kv
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_kv() {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader { map: parse_kv(text)? };
        let mut cfg = RunConfig::default();
        r.set("seed", &mut cfg.seed)?;

        // Informational keys written for the record.
        for (key, expected) in [
            ("frontend.window", "hamming"),
            ("frontend.framing", "centered-reflect"),
            ("frontend.mel_scale", "htk"),
        ] {
            if let Some(v) = r.take(key) {
                if v != expected {
                    return Err(config_err(format!("{}: only `{}` is supported", key, expected)));
                }
            }
        }
        let f = &mut cfg.frontend;
        r.set("frontend.sample_rate", &mut f.sample_rate)?;
        r.set("frontend.clip_seconds", &mut f.clip_seconds)?;
        r.set("frontend.n_fft", &mut f.n_fft)?;
        r.set("frontend.hop", &mut f.hop)?;
        r.set("frontend.n_mels", &mut f.n_mels)?;
        r.set("frontend.f_min", &mut f.f_min)?;
        r.set("frontend.f_max", &mut f.f_max)?;
        r.set("frontend.power", &mut f.power)?;
        r.set("frontend.log_floor", &mut f.log_floor)?;

        let mut k = 4usize;
        r.set("model.basis_kernels", &mut k)?;
        let mut base = BASE_CHANNELS.to_vec();
        r.set_with("model.base_channels", &mut base, |key, v| parse_list(key, v))?;
        let mut m = match r.take("model.preset") {
            Some(p) => ModelConfig::preset(&p, &base, k)?,
            None => ModelConfig::preset("baseline", &base, k)?,
        };
        m.basis_kernels = k;
        r.set("model.n_mels", &mut m.n_mels)?;
        r.set("model.in_channels", &mut m.in_channels)?;
        r.set("model.kernel_size", &mut m.kernel_size)?;
        r.set("model.activation", &mut m.activation)?;
        if let Some(n) = r.take("model.layers") {
            let n: usize = n.parse().map_err(|_| config_err("model.layers: expected a count"))?;
            m.layers.resize_with(n, || LayerConfig::static_layer(1, (1, 1)));
        }
        for (i, l) in m.layers.iter_mut().enumerate() {
            let p = format!("model.layer{}.", i + 1);
            r.set(&format!("{}static_channels", p), &mut l.static_channels)?;
            r.set(&format!("{}branch_channels", p), &mut l.branch_channels)?;
            r.set_with(&format!("{}branches", p), &mut l.branches, |_, v| parse_branches(v, k))?;
            r.set(&format!("{}pooling", p), &mut l.pooling)?;
            r.set_with(&format!("{}pool", p), &mut l.pool, |key, v| parse_pair(key, v, 'x'))?;
        }
        r.set("model.attention.kernel", &mut m.attention.kernel)?;
        r.set("model.attention.reduction", &mut m.attention.reduction)?;
        r.set("model.attention.min_hidden", &mut m.attention.min_hidden)?;
        r.set("model.attention.temperature", &mut m.attention.temperature)?;
        r.set("model.tap.kernel", &mut m.tap.kernel)?;
        r.set("model.tap.head_kernel", &mut m.tap.head_kernel)?;
        r.set("model.tap.reduction", &mut m.tap.reduction)?;
        r.set("model.tap.min_hidden", &mut m.tap.min_hidden)?;
        r.set("model.tap.velocity_input", &mut m.tap.velocity_input)?;
        if let Some(v) = r.take("model.tap.terms") {
            m.tap.set_terms(&v)?;
        }
        r.set("model.gru_hidden", &mut m.gru_hidden)?;
        r.set("model.gru_layers", &mut m.gru_layers)?;
        r.set("model.classes", &mut m.classes)?;
        r.set("model.cnn_dropout", &mut m.cnn_dropout)?;
        r.set("model.rnn_dropout", &mut m.rnn_dropout)?;
        r.set("model.weak_pooling", &mut m.weak_pooling)?;
        r.set("model.bn_eps", &mut m.bn_eps)?;
        r.set("model.bn_momentum", &mut m.bn_momentum)?;
        cfg.model = m;

        let t = &mut cfg.train;
        r.set("train.epochs", &mut t.epochs)?;
        r.set("train.batch_strong", &mut t.batch_strong)?;
        r.set("train.batch_weak", &mut t.batch_weak)?;
        r.set("train.batch_unlabeled", &mut t.batch_unlabeled)?;
        r.set("train.lr", &mut t.lr)?;
        r.set("train.beta1", &mut t.beta1)?;
        r.set("train.beta2", &mut t.beta2)?;
        r.set("train.adam_eps", &mut t.adam_eps)?;
        r.set("train.ema_decay", &mut t.ema_decay)?;
        r.set("train.w_weak", &mut t.w_weak)?;
        r.set("train.w_cons_max", &mut t.w_cons_max)?;
        r.set("train.ramp_epochs", &mut t.ramp_epochs)?;
        r.set("train.stop_grad", &mut t.stop_grad)?;
        r.set("train.mixup_alpha", &mut t.mixup_alpha)?;
        r.set("train.mixup_prob", &mut t.mixup_prob)?;
        r.set("train.max_shift", &mut t.max_shift)?;
        r.set("train.mask_max_frames", &mut t.mask_max_frames)?;
        r.set_with("train.filter_bands", &mut t.filter_bands, |key, v| parse_pair(key, v, '-'))?;
        r.set("train.filter_gain_db", &mut t.filter_gain_db)?;
        r.set("train.precision", &mut t.precision)?;

        let e = &mut cfg.eval;
        r.set("eval.dtc", &mut e.psds.dtc)?;
        r.set("eval.gtc", &mut e.psds.gtc)?;
        r.set("eval.alpha_st", &mut e.psds.alpha_st)?;
        r.set("eval.alpha_ct", &mut e.psds.alpha_ct)?;
        r.set("eval.e_max", &mut e.psds.e_max)?;
        r.set("eval.n_thresholds", &mut e.psds.n_thresholds)?;
        r.set("eval.median_length", &mut e.median_length)?;
        r.set("eval.weak_mask", &mut e.weak_mask)?;
        r.set("eval.f1_threshold", &mut e.f1_threshold)?;

        if let Some(k) = r.map.keys().next() {
            return Err(config_err(format!("unknown key `{}`", k)));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.frontend.validate()?;
        self.eval.psds.validate()?;
        if self.model.n_mels != self.frontend.n_mels {
            return Err(config_err(format!(
                "model.n_mels = {} but frontend.n_mels = {}",
                self.model.n_mels, self.frontend.n_mels
            )));
        }
        if self.eval.median_length % 2 == 0 {
            return Err(config_err("eval.median_length must be odd"));
        }
        let t = &self.train;
        if t.batch_strong + t.batch_weak + t.batch_unlabeled == 0 {
            return Err(config_err("empty training batch"));
        }
        if !(0.0..=1.0).contains(&t.ema_decay) || !(0.0..=1.0).contains(&t.mixup_prob) {
            return Err(config_err("ema_decay and mixup_prob must lie in [0, 1]"));
        }
        if t.filter_bands.0 == 0 || t.filter_bands.0 > t.filter_bands.1 {
            return Err(config_err("train.filter_bands must be `lo-hi` with 1 <= lo <= hi"));
        }
        Ok(())
    }
}

//! Experiment configuration: TOML loading, `--set` overrides, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use issma::comms::ChannelSpec;
use issma::detector::{DetectionOrder, MetricKind};
use issma::idd::{DetectorKind, Fading};

/// Problems detected before any computation starts. The CLI exits with status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted field path, empty for whole-file problems.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BerSweep,
    CplSweep,
    ScalingGain,
    SinrBounds,
    ComplexityReport,
    Asymptotics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::BerSweep => "ber_sweep",
            Self::CplSweep => "cpl_sweep",
            Self::ScalingGain => "scaling_gain",
            Self::SinrBounds => "sinr_bounds",
            Self::ComplexityReport => "complexity_report",
            Self::Asymptotics => "asymptotics",
        }
    }

    const ALL: [ExperimentKind; 6] = [
        Self::BerSweep,
        Self::CplSweep,
        Self::ScalingGain,
        Self::SinrBounds,
        Self::ComplexityReport,
        Self::Asymptotics,
    ];
}

/// Top-level config file. Exactly one experiment section is allowed, the one named by `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber_sweep: Option<BerSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpl_sweep: Option<CplSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_gain: Option<ScalingGain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr_bounds: Option<SinrBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_report: Option<ComplexityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotics: Option<Asymptotics>,
}

fn default_iterations() -> usize {
    7
}
fn default_info_bits() -> usize {
    200_000
}
fn default_frame_coded_bits() -> usize {
    12_000
}
fn default_n_l() -> usize {
    5
}
fn default_llr_clip() -> f64 {
    8.0
}
fn default_qpsk() -> usize {
    2
}
fn default_trials() -> usize {
    100_000
}
fn default_mc_samples() -> usize {
    20_000
}
fn default_one() -> f64 {
    1.0
}
fn default_channels() -> usize {
    1000
}
fn default_complexity_snr() -> f64 {
    10.0
}
fn default_complexity_trials() -> usize {
    100
}
fn default_asymptotic_channels() -> usize {
    200
}
fn default_lela() -> MetricKind {
    MetricKind::Lela
}
fn default_issma() -> DetectorKind {
    DetectorKind::Issma
}

/// Coded BER of the iterative receiver over an SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSweep {
    pub n_tx: usize,
    pub n_rx: usize,
    pub bits_per_symbol: usize,
    #[serde(default = "default_issma")]
    pub detector: DetectorKind,
    /// Survivors per level; required by the tree-search detectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// List entries used for bit flipping; defaults to `min(16, 2^Q M)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default = "default_n_l")]
    pub n_l: usize,
    #[serde(default = "default_llr_clip")]
    pub llr_clip: f64,
    #[serde(default)]
    pub ordering: DetectionOrder,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_info_bits")]
    pub info_bits: usize,
    #[serde(default = "default_frame_coded_bits")]
    pub frame_coded_bits: usize,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub fading: Fading,
}

/// Simulated correct-path-loss rate of the single-survivor search against its analytical bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CplSweep {
    pub n: usize,
    /// Receive antennas; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default = "default_qpsk")]
    pub bits_per_symbol: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Look-ahead window of the simulated search; all undecided positions when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead_depth: Option<usize>,
    /// Monte-Carlo samples of the scaling gain in the dominant-term bound.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

/// Top-level look-ahead scaling gain for square or tall systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingGain {
    /// Transmit antennas (the level is `k = N`).
    pub n: Vec<usize>,
    /// Receive antennas; defaults to `N` for every entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default = "default_qpsk")]
    pub bits_per_symbol: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_one")]
    pub lambda_max: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

/// Channel-averaged SINRs and their bounds at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinrBounds {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Uniform prior variance of the undecided symbols.
    #[serde(default = "default_one")]
    pub lambda: f64,
}

/// Instrumented multiplication counts of the tree detector per symbol vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityReport {
    pub n_tx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rx: Option<usize>,
    pub bits_per_symbol: usize,
    pub m: Vec<usize>,
    pub n_l: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default = "default_lela")]
    pub metric: MetricKind,
    #[serde(default = "default_complexity_snr")]
    pub snr_db: f64,
    #[serde(default = "default_complexity_trials")]
    pub trials: usize,
}

/// Large-system limits of the gain bounds, optionally against finite-size samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asymptotics {
    /// Ratio `N / L`.
    #[serde(default = "default_one")]
    pub beta: f64,
    /// Fraction of undecided positions, `(k - 1) / N`.
    pub gamma: Vec<f64>,
    pub sigma2: Vec<f64>,
    #[serde(default = "default_one")]
    pub lambda_min: f64,
    #[serde(default = "default_one")]
    pub lambda_max: f64,
    /// When set, also samples `N x N/beta` channels of this size (uniform priors only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite_n: Option<usize>,
    #[serde(default = "default_asymptotic_channels")]
    pub channels: usize,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Reads, overrides, fills defaults and validates a config file.
pub fn load(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    resolve_str(&text, ov)
}

pub fn resolve_str(text: &str, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::at("", format!("invalid TOML: {}", e.message())))?;
    for kv in &ov.set {
        apply_set(&mut table, kv)?;
    }
    if let Some(seed) = ov.seed {
        let seed = i64::try_from(seed).map_err(|_| ConfigError::at("seed", "must fit in a signed 64-bit TOML integer"))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(w) = ov.workers {
        table.insert("workers".into(), toml::Value::Integer(w as i64));
    }
    if let Some(out) = &ov.out {
        table.insert("out".into(), toml::Value::String(out.display().to_string()));
    }
    // An absent section deserializes from an empty table, so missing required fields are named.
    if let Some(toml::Value::String(kind)) = table.get("experiment") {
        let kind = kind.clone();
        if ExperimentKind::ALL.iter().any(|k| k.name() == kind) && !table.contains_key(&kind) {
            table.insert(kind, toml::Value::Table(toml::Table::new()));
        }
    }
    let mut cfg: ExperimentConfig =
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ConfigError::at(path, e.inner().message().to_string())
        })?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

fn apply_set(table: &mut toml::Table, kv: &str) -> Result<(), ConfigError> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| ConfigError::at("", format!("--set expects key=value, got `{kv}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::at("", format!("--set has an empty key segment in `{key}`")));
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::at(parts[..=i].join("."), "is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn cap_j(q: usize, m: usize) -> usize {
    (1usize << q.min(16)).saturating_mul(m)
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::at(path, message()))
    }
}

fn check_q(path: &str, q: usize) -> Result<(), ConfigError> {
    check(matches!(q, 2 | 4 | 6), path, || format!("bits per symbol must be 2, 4 or 6, got {q}"))
}

fn check_grid(path: &str, xs: &[f64]) -> Result<(), ConfigError> {
    check(!xs.is_empty(), path, || "must not be empty".into())?;
    check(xs.iter().all(|x| x.is_finite()), path, || "entries must be finite".into())
}

impl ExperimentConfig {
    fn fill_defaults(&mut self) {
        if let Some(s) = &mut self.ber_sweep {
            if s.detector != DetectorKind::MmsePic {
                if let (None, Some(m)) = (s.j, s.m) {
                    s.j = Some(16.min(cap_j(s.bits_per_symbol, m)));
                }
            }
        }
        if let Some(s) = &mut self.cpl_sweep {
            s.l.get_or_insert(s.n);
        }
        if let Some(s) = &mut self.sinr_bounds {
            s.l.get_or_insert(s.n);
        }
        if let Some(s) = &mut self.complexity_report {
            s.n_rx.get_or_insert(s.n_tx);
            if let (None, Some(&m)) = (s.j, s.m.iter().min()) {
                s.j = Some(16.min(cap_j(s.bits_per_symbol, m)));
            }
        }
    }

    /// Checks every parameter the selected experiment uses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for k in ExperimentKind::ALL {
            let present = match k {
                ExperimentKind::BerSweep => self.ber_sweep.is_some(),
                ExperimentKind::CplSweep => self.cpl_sweep.is_some(),
                ExperimentKind::ScalingGain => self.scaling_gain.is_some(),
                ExperimentKind::SinrBounds => self.sinr_bounds.is_some(),
                ExperimentKind::ComplexityReport => self.complexity_report.is_some(),
                ExperimentKind::Asymptotics => self.asymptotics.is_some(),
            };
            if present && k != self.experiment {
                return Err(ConfigError::at(
                    k.name(),
                    format!("section given but experiment is `{}`; exactly one experiment per file", self.experiment.name()),
                ));
            }
        }
        match self.experiment {
            ExperimentKind::BerSweep => self.ber_sweep.as_ref().expect("filled").validate(),
            ExperimentKind::CplSweep => self.cpl_sweep.as_ref().expect("filled").validate(),
            ExperimentKind::ScalingGain => self.scaling_gain.as_ref().expect("filled").validate(),
            ExperimentKind::SinrBounds => self.sinr_bounds.as_ref().expect("filled").validate(),
            ExperimentKind::ComplexityReport => self.complexity_report.as_ref().expect("filled").validate(),
            ExperimentKind::Asymptotics => self.asymptotics.as_ref().expect("filled").validate(),
        }
    }

    pub fn out_path(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.experiment.name())))
    }

    /// The resolved config as TOML; feeding it back through [`resolve_str`] gives the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// SHA-256 over the resolved config, ignoring the output path and worker count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.workers = 0;
        let canon = serde_json::to_string(&serde_json::to_value(&c).expect("serializable")).expect("serializable");
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_tree_search(path: &str, q: usize, m: usize, j: usize, llr_clip: f64) -> Result<(), ConfigError> {
    check(m >= 1, &format!("{path}.m"), || "M must be at least 1".into())?;
    let cap = cap_j(q, m);
    check(j <= cap, &format!("{path}.j"), || {
        format!("J = {j} violates the list-extension constraint J <= 2^Q * M = {cap}")
    })?;
    check(llr_clip > 0.0 && llr_clip.is_finite(), &format!("{path}.llr_clip"), || {
        format!("must be positive and finite, got {llr_clip}")
    })
}

impl BerSweep {
    fn validate(&self) -> Result<(), ConfigError> {
        check(self.n_tx >= 1, "ber_sweep.n_tx", || "must be at least 1".into())?;
        check(self.n_rx >= self.n_tx, "ber_sweep.n_rx", || format!("need n_rx >= n_tx = {}", self.n_tx))?;
        check_q("ber_sweep.bits_per_symbol", self.bits_per_symbol)?;
        check_grid("ber_sweep.snr_db", &self.snr_db)?;
        if self.detector == DetectorKind::MmsePic {
            check(self.llr_clip > 0.0 && self.llr_clip.is_finite(), "ber_sweep.llr_clip", || {
                format!("must be positive and finite, got {}", self.llr_clip)
            })?;
        } else {
            let m = self.m.ok_or_else(|| {
                ConfigError::at("ber_sweep.m", format!("missing; required by detector `{}`", detector_name(self.detector)))
            })?;
            check_tree_search("ber_sweep", self.bits_per_symbol, m, self.j.unwrap_or(0), self.llr_clip)?;
        }
        check(self.iterations >= 1, "ber_sweep.iterations", || "must be at least 1".into())?;
        check(self.info_bits > 0, "ber_sweep.info_bits", || "must be positive".into())?;
        check(
            self.frame_coded_bits >= 2 && self.frame_coded_bits.is_multiple_of(2),
            "ber_sweep.frame_coded_bits",
            || format!("must be even and at least 2, got {}", self.frame_coded_bits),
        )?;
        if let ChannelSpec::Kronecker { rho_tx, rho_rx } = self.channel {
            for (name, rho) in [("rho_tx", rho_tx), ("rho_rx", rho_rx)] {
                check((0.0..1.0).contains(&rho), &format!("ber_sweep.channel.{name}"), || {
                    format!("must lie in [0, 1), got {rho}")
                })?;
            }
        }
        Ok(())
    }
}

fn detector_name(d: DetectorKind) -> &'static str {
    match d {
        DetectorKind::Issma => "issma",
        DetectorKind::ConventionalMa => "conventional_ma",
        DetectorKind::MmsePic => "mmse_pic",
    }
}

impl CplSweep {
    fn validate(&self) -> Result<(), ConfigError> {
        check(self.n >= 2, "cpl_sweep.n", || "must be at least 2".into())?;
        let l = self.l.unwrap_or(self.n);
        check(l >= self.n, "cpl_sweep.l", || format!("need l >= n = {}", self.n))?;
        check_q("cpl_sweep.bits_per_symbol", self.bits_per_symbol)?;
        check_grid("cpl_sweep.snr_db", &self.snr_db)?;
        check(self.trials > 0, "cpl_sweep.trials", || "must be positive".into())?;
        check(self.mc_samples >= 2, "cpl_sweep.mc_samples", || "must be at least 2".into())
    }
}

impl ScalingGain {
    fn validate(&self) -> Result<(), ConfigError> {
        check(!self.n.is_empty(), "scaling_gain.n", || "must not be empty".into())?;
        for &n in &self.n {
            check(n >= 2, "scaling_gain.n", || format!("entries must be at least 2, got {n}"))?;
            if let Some(l) = self.l {
                check(l >= n, "scaling_gain.l", || format!("need l >= every n, got l = {l} < {n}"))?;
            }
        }
        check_q("scaling_gain.bits_per_symbol", self.bits_per_symbol)?;
        check_grid("scaling_gain.snr_db", &self.snr_db)?;
        check(self.lambda_max >= 0.0 && self.lambda_max.is_finite(), "scaling_gain.lambda_max", || {
            "must be finite and non-negative".into()
        })?;
        check(self.mc_samples >= 2, "scaling_gain.mc_samples", || "must be at least 2".into())
    }
}

impl SinrBounds {
    fn validate(&self) -> Result<(), ConfigError> {
        check(self.n >= 2, "sinr_bounds.n", || "must be at least 2".into())?;
        let l = self.l.unwrap_or(self.n);
        check(l >= self.n, "sinr_bounds.l", || format!("need l >= n = {}", self.n))?;
        check_grid("sinr_bounds.snr_db", &self.snr_db)?;
        check(self.channels > 0, "sinr_bounds.channels", || "must be positive".into())?;
        check(self.lambda >= 0.0 && self.lambda.is_finite(), "sinr_bounds.lambda", || {
            "must be finite and non-negative".into()
        })
    }
}

impl ComplexityReport {
    fn validate(&self) -> Result<(), ConfigError> {
        check(self.n_tx >= 1, "complexity_report.n_tx", || "must be at least 1".into())?;
        let n_rx = self.n_rx.unwrap_or(self.n_tx);
        check(n_rx >= self.n_tx, "complexity_report.n_rx", || format!("need n_rx >= n_tx = {}", self.n_tx))?;
        check_q("complexity_report.bits_per_symbol", self.bits_per_symbol)?;
        check(!self.m.is_empty(), "complexity_report.m", || "must not be empty".into())?;
        check(!self.n_l.is_empty(), "complexity_report.n_l", || "must not be empty".into())?;
        check(self.metric != MetricKind::Genie, "complexity_report.metric", || {
            "must be `causal` or `lela`".into()
        })?;
        for &m in &self.m {
            check_tree_search("complexity_report", self.bits_per_symbol, m, self.j.unwrap_or(0), 8.0)?;
        }
        check(self.snr_db.is_finite(), "complexity_report.snr_db", || "must be finite".into())?;
        check(self.trials > 0, "complexity_report.trials", || "must be positive".into())
    }
}

impl Asymptotics {
    fn validate(&self) -> Result<(), ConfigError> {
        check(self.beta > 0.0 && self.beta <= 1.0, "asymptotics.beta", || format!("must lie in (0, 1], got {}", self.beta))?;
        check_grid("asymptotics.gamma", &self.gamma)?;
        for &g in &self.gamma {
            check(g > 0.0 && g < 1.0, "asymptotics.gamma", || format!("entries must lie in (0, 1), got {g}"))?;
        }
        check_grid("asymptotics.sigma2", &self.sigma2)?;
        for &s in &self.sigma2 {
            check(s > 0.0, "asymptotics.sigma2", || format!("entries must be positive, got {s}"))?;
        }
        check(self.lambda_min > 0.0 && self.lambda_min.is_finite(), "asymptotics.lambda_min", || {
            "must be positive and finite".into()
        })?;
        check(self.lambda_max >= self.lambda_min && self.lambda_max.is_finite(), "asymptotics.lambda_max", || {
            "must be finite and at least lambda_min".into()
        })?;
        if let Some(n) = self.finite_n {
            check(n >= 2, "asymptotics.finite_n", || "must be at least 2".into())?;
            check(self.lambda_min == self.lambda_max, "asymptotics.finite_n", || {
                "finite-size sampling needs lambda_min == lambda_max".into()
            })?;
            check(self.channels >= 2, "asymptotics.channels", || "must be at least 2".into())?;
        }
        Ok(())
    }
}

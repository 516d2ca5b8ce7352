//! `key=value` run configuration, method dispatch and seed sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    dropedge_plus_snohv2, dropedge_run, random_prune, random_prune_to_sparsity, random_run, ugs_lite_run,
    DropEdgeConfig, Rewind, UgsLiteConfig,
};
use crate::dataset::{load_dataset, make_split, DatasetBundle, DatasetError};
use crate::engine::{ModelConfig, Variant};
use crate::graph::{Graph, LayerMaskSet};
use crate::report::mean_std;
use crate::snowflake::{snohv1_run, snohv2_run, Scheme, SnoHv1Config, SnoHv2Config, Threshold};
use crate::train::{train_unpruned, RunError, RunOutput, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    None,
    SnoHv1,
    SnoHv2,
    Random,
    UgsLite,
    DropEdge,
    DropEdgeSnoHv2,
}

impl MethodKind {
    const ALL: [MethodKind; 7] = [
        MethodKind::None,
        MethodKind::SnoHv1,
        MethodKind::SnoHv2,
        MethodKind::Random,
        MethodKind::UgsLite,
        MethodKind::DropEdge,
        MethodKind::DropEdgeSnoHv2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::None => "none",
            MethodKind::SnoHv1 => "snohv1",
            MethodKind::SnoHv2 => "snohv2",
            MethodKind::Random => "random",
            MethodKind::UgsLite => "ugs_lite",
            MethodKind::DropEdge => "dropedge",
            MethodKind::DropEdgeSnoHv2 => "dropedge+snohv2",
        }
    }

    /// Method-specific keys accepted for this method.
    fn keys(self) -> &'static [&'static str] {
        const V1: &[&str] = &["prune_rate", "window", "scheme", "rounds", "reinit_epochs"];
        const V2: &[&str] = &["rho", "relative", "check_every", "warmup"];
        const DE: &[&str] = &["drop_rate", "per_layer_drop"];
        const DEV2: &[&str] = &["drop_rate", "per_layer_drop", "rho", "relative", "check_every", "warmup"];
        match self {
            MethodKind::None => &[],
            MethodKind::SnoHv1 => V1,
            MethodKind::SnoHv2 => V2,
            MethodKind::Random => &["rate", "target_sparsity"],
            MethodKind::UgsLite => &["ipr", "rounds", "epochs_per_round", "rewind", "l1"],
            MethodKind::DropEdge => DE,
            MethodKind::DropEdgeSnoHv2 => DEV2,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name().replace('-', "_") == s || (s == "ugs" && *m == MethodKind::UgsLite))
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

const GENERAL_KEYS: &[&str] = &[
    "dataset",
    "variant",
    "depth",
    "hidden",
    "method",
    "epochs",
    "lr",
    "seed",
    "split_seed",
    "deterministic",
    "renormalize",
    "probe_every",
    "dropout",
    "batch_norm",
    "out",
];

fn alias(key: &str, method: MethodKind) -> &str {
    match (key, method) {
        ("k", MethodKind::SnoHv1) => "window",
        ("k", _) => "check_every",
        _ => key,
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}' does not apply to method {method}")]
    WrongMethod { key: String, method: MethodKind },
    #[error("bad value '{value}' for '{key}': {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Method {
    None,
    SnoHv1(SnoHv1Config),
    SnoHv2(SnoHv2Config),
    Random { rate: f64, target_sparsity: Option<Vec<f64>> },
    UgsLite(UgsLiteConfig),
    DropEdge { drop_rate: f64, per_layer: bool },
    DropEdgeSnoHv2 { drop_rate: f64, per_layer: bool, snohv2: SnoHv2Config },
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::None => MethodKind::None,
            Method::SnoHv1(_) => MethodKind::SnoHv1,
            Method::SnoHv2(_) => MethodKind::SnoHv2,
            Method::Random { .. } => MethodKind::Random,
            Method::UgsLite(_) => MethodKind::UgsLite,
            Method::DropEdge { .. } => MethodKind::DropEdge,
            Method::DropEdgeSnoHv2 { .. } => MethodKind::DropEdgeSnoHv2,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub variant: Variant,
    pub depth: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub batch_norm: bool,
    pub method: Method,
    pub train: TrainConfig,
    pub seed: u64,
    /// Seed of the random split when the dataset ships none; defaults to
    /// `seed`.
    pub split_seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Raw settings: later assignments win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            s.set_pair(line).map_err(|_| ConfigError::Syntax { line: i + 1 })?;
        }
        Ok(s)
    }

    /// Reads a `key=value` file or a `config.echo.json` written by a
    /// previous run.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Value {
            key: "config".into(),
            value: path.display().to_string(),
            msg: e.to_string(),
        })?;
        if text.trim_start().starts_with('{') {
            let echo: Echo = serde_json::from_str(&text).map_err(|e| ConfigError::Value {
                key: "config".into(),
                value: path.display().to_string(),
                msg: e.to_string(),
            })?;
            return Ok(Settings(echo.settings));
        }
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        let key = match key.trim() {
            "p" => "prune_rate",
            "q" => "drop_rate",
            "iterative_rounds" => "rounds",
            k => k,
        };
        self.0.insert(key.to_string(), value.trim().to_string());
    }

    /// `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        if k.trim().is_empty() {
            return Err(ConfigError::Syntax { line: 0 });
        }
        self.set(k, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Echo {
    settings: BTreeMap<String, String>,
    resolved: serde_json::Value,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        msg: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            msg: "expected true or false".into(),
        }),
    }
}

impl RunConfig {
    pub fn from_settings(settings: &Settings) -> Result<Self, ConfigError> {
        let method: MethodKind = match settings.get("method") {
            Some(m) => parse_value("method", m)?,
            None => MethodKind::None,
        };
        let mut general: BTreeMap<&str, &str> = BTreeMap::new();
        let mut specific: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in &settings.0 {
            let key = alias(k, method);
            if GENERAL_KEYS.contains(&key) {
                general.insert(key, v);
            } else if method.keys().contains(&key) {
                specific.insert(key, v);
            } else if MethodKind::ALL.iter().any(|m| m.keys().contains(&key)) {
                return Err(ConfigError::WrongMethod {
                    key: k.clone(),
                    method,
                });
            } else {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }

        let g = |k: &str| general.get(k).copied();
        let depth: usize = g("depth").map_or(Ok(2), |v| parse_value("depth", v))?;
        let mut train = TrainConfig::default();
        if let Some(v) = g("epochs") {
            train.epochs = parse_value("epochs", v)?;
        }
        if let Some(v) = g("lr") {
            train.lr = parse_value("lr", v)?;
        }
        if let Some(v) = g("deterministic") {
            train.deterministic = parse_bool("deterministic", v)?;
        }
        if let Some(v) = g("renormalize") {
            train.renormalize = parse_bool("renormalize", v)?;
        }
        if let Some(v) = g("probe_every") {
            train.probe_every = parse_value("probe_every", v)?;
        }
        let seed: u64 = g("seed").map_or(Ok(0), |v| parse_value("seed", v))?;

        let s = |k: &str| specific.get(k).copied();
        let snohv2 = |depth: usize| -> Result<SnoHv2Config, ConfigError> {
            let mut c = SnoHv2Config::absolute(SnoHv2Config::default_rho(depth));
            if let Some(v) = s("rho") {
                c.threshold = Threshold::Absolute(parse_value("rho", v)?);
            }
            if let Some(v) = s("relative") {
                if s("rho").is_some() {
                    return Err(ConfigError::Value {
                        key: "relative".into(),
                        value: v.into(),
                        msg: "rho and relative are mutually exclusive".into(),
                    });
                }
                c.threshold = Threshold::Relative(parse_value("relative", v)?);
            }
            if let Some(v) = s("check_every") {
                c.check_every = parse_value("check_every", v)?;
            }
            if let Some(v) = s("warmup") {
                c.warmup = parse_value("warmup", v)?;
            }
            c.validate()?;
            Ok(c)
        };
        let drop_rate = || -> Result<(f64, bool), ConfigError> {
            let q = s("drop_rate").map_or(Ok(0.3), |v| parse_value("drop_rate", v))?;
            let per_layer = s("per_layer_drop").map_or(Ok(false), |v| parse_bool("per_layer_drop", v))?;
            DropEdgeConfig::new(q, seed).validate()?;
            Ok((q, per_layer))
        };

        let method = match method {
            MethodKind::None => Method::None,
            MethodKind::SnoHv1 => {
                let mut c = SnoHv1Config::default();
                if let Some(v) = s("prune_rate") {
                    c.prune_rate = parse_value("prune_rate", v)?;
                }
                if let Some(v) = s("window") {
                    c.window = parse_value("window", v)?;
                }
                if let Some(v) = s("scheme") {
                    c.scheme = parse_value::<Scheme>("scheme", v)?;
                }
                if let Some(v) = s("rounds") {
                    c.iterative_rounds = parse_value("rounds", v)?;
                }
                if let Some(v) = s("reinit_epochs") {
                    c.reinit_epochs = parse_value("reinit_epochs", v)?;
                }
                c.validate(depth, train.epochs)?;
                Method::SnoHv1(c)
            }
            MethodKind::SnoHv2 => Method::SnoHv2(snohv2(depth)?),
            MethodKind::Random => {
                let rate = s("rate").map_or(Ok(30.0), |v| parse_value("rate", v))?;
                let target_sparsity = s("target_sparsity")
                    .map(|v| {
                        v.split(',')
                            .map(|x| parse_value::<f64>("target_sparsity", x.trim()))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .transpose()?;
                if !(0.0..=100.0).contains(&rate) {
                    return Err(RunError::Config("random prune rate must be in [0, 100]".into()).into());
                }
                Method::Random { rate, target_sparsity }
            }
            MethodKind::UgsLite => {
                let mut c = UgsLiteConfig::default();
                if let Some(v) = s("ipr") {
                    c.prune_rate = parse_value("ipr", v)?;
                }
                if let Some(v) = s("rounds") {
                    c.rounds = parse_value("rounds", v)?;
                }
                if let Some(v) = s("epochs_per_round") {
                    c.epochs_per_round = parse_value("epochs_per_round", v)?;
                }
                if let Some(v) = s("rewind") {
                    c.rewind = match v.to_ascii_lowercase().as_str() {
                        "init" | "to_init" | "toinit" => Rewind::ToInit,
                        "none" => Rewind::None,
                        _ => {
                            return Err(ConfigError::Value {
                                key: "rewind".into(),
                                value: v.into(),
                                msg: "expected init or none".into(),
                            })
                        }
                    };
                }
                if let Some(v) = s("l1") {
                    c.l1 = parse_value("l1", v)?;
                }
                c.validate()?;
                Method::UgsLite(c)
            }
            MethodKind::DropEdge => {
                let (drop_rate, per_layer) = drop_rate()?;
                Method::DropEdge { drop_rate, per_layer }
            }
            MethodKind::DropEdgeSnoHv2 => {
                let (drop_rate, per_layer) = drop_rate()?;
                Method::DropEdgeSnoHv2 {
                    drop_rate,
                    per_layer,
                    snohv2: snohv2(depth)?,
                }
            }
        };

        let cfg = RunConfig {
            dataset: g("dataset").map(PathBuf::from),
            variant: g("variant").map_or(Ok(Variant::Gcn), |v| parse_value("variant", v))?,
            depth,
            hidden: g("hidden").map_or(Ok(64), |v| parse_value("hidden", v))?,
            dropout: g("dropout").map_or(Ok(0.0), |v| parse_value("dropout", v))?,
            batch_norm: g("batch_norm").map_or(Ok(false), |v| parse_bool("batch_norm", v))?,
            method,
            train,
            seed,
            split_seed: g("split_seed").map(|v| parse_value("split_seed", v)).transpose()?,
            out: g("out").map(PathBuf::from),
        };
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Canonical settings (every key, defaults filled in).
    pub fn to_settings(&self) -> Settings {
        let mut s = Settings::default();
        if let Some(d) = &self.dataset {
            s.set("dataset", &d.display().to_string());
        }
        s.set("variant", &self.variant.to_string());
        s.set("depth", &self.depth.to_string());
        s.set("hidden", &self.hidden.to_string());
        s.set("dropout", &self.dropout.to_string());
        s.set("batch_norm", &self.batch_norm.to_string());
        s.set("method", self.method.kind().name());
        s.set("epochs", &self.train.epochs.to_string());
        s.set("lr", &self.train.lr.to_string());
        s.set("deterministic", &self.train.deterministic.to_string());
        s.set("renormalize", &self.train.renormalize.to_string());
        s.set("probe_every", &self.train.probe_every.to_string());
        s.set("seed", &self.seed.to_string());
        if let Some(v) = self.split_seed {
            s.set("split_seed", &v.to_string());
        }
        let v2 = |s: &mut Settings, c: &SnoHv2Config| {
            match c.threshold {
                Threshold::Absolute(rho) => s.set("rho", &rho.to_string()),
                Threshold::Relative(p) => s.set("relative", &p.to_string()),
            }
            s.set("check_every", &c.check_every.to_string());
            s.set("warmup", &c.warmup.to_string());
        };
        match &self.method {
            Method::None => {}
            Method::SnoHv1(c) => {
                s.set("prune_rate", &c.prune_rate.to_string());
                s.set("window", &c.window.to_string());
                s.set(
                    "scheme",
                    match c.scheme {
                        Scheme::OneShot => "oneshot",
                        Scheme::Iterative => "iterative",
                        Scheme::Reinit => "reinit",
                    },
                );
                s.set("rounds", &c.iterative_rounds.to_string());
                s.set("reinit_epochs", &c.reinit_epochs.to_string());
            }
            Method::SnoHv2(c) => v2(&mut s, c),
            Method::Random { rate, target_sparsity } => {
                s.set("rate", &rate.to_string());
                if let Some(t) = target_sparsity {
                    let joined: Vec<String> = t.iter().map(f64::to_string).collect();
                    s.set("target_sparsity", &joined.join(","));
                }
            }
            Method::UgsLite(c) => {
                s.set("ipr", &c.prune_rate.to_string());
                s.set("rounds", &c.rounds.to_string());
                s.set("epochs_per_round", &c.epochs_per_round.to_string());
                s.set(
                    "rewind",
                    match c.rewind {
                        Rewind::ToInit => "init",
                        Rewind::None => "none",
                    },
                );
                s.set("l1", &c.l1.to_string());
            }
            Method::DropEdge { drop_rate, per_layer } => {
                s.set("drop_rate", &drop_rate.to_string());
                s.set("per_layer_drop", &per_layer.to_string());
            }
            Method::DropEdgeSnoHv2 {
                drop_rate,
                per_layer,
                snohv2,
            } => {
                s.set("drop_rate", &drop_rate.to_string());
                s.set("per_layer_drop", &per_layer.to_string());
                v2(&mut s, snohv2);
            }
        }
        s
    }

    /// JSON echo: the canonical settings (loadable with
    /// [`Settings::from_file`]) plus the resolved structure.
    pub fn echo_json(&self) -> String {
        let echo = Echo {
            settings: self.to_settings().0,
            resolved: serde_json::to_value(self).expect("plain data"),
        };
        serde_json::to_string_pretty(&echo).expect("plain data") + "\n"
    }

    pub fn model_config(&self, graph: &Graph) -> ModelConfig {
        let mut m = ModelConfig::new(self.variant, self.depth, graph.num_features(), graph.num_classes())
            .with_hidden(self.hidden)
            .with_seed(self.seed);
        m.dropout = self.dropout;
        m.batch_norm = self.batch_norm;
        m
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// Loads the configured dataset and attaches a random 60/20/20 split when
/// it ships none.
pub fn load_for_run(cfg: &RunConfig) -> Result<DatasetBundle, DatasetError> {
    let path = cfg.dataset.as_ref().ok_or_else(|| DatasetError::Invalid {
        file: PathBuf::from("<config>"),
        msg: "no dataset configured".into(),
    })?;
    let bundle = load_dataset(path)?;
    with_default_split(bundle, cfg.split_seed.unwrap_or(cfg.seed))
}

pub fn with_default_split(mut bundle: DatasetBundle, seed: u64) -> Result<DatasetBundle, DatasetError> {
    if bundle.graph.splits().is_empty() {
        let splits = make_split(bundle.graph.num_nodes(), (0.6, 0.2, 0.2), seed)?;
        bundle.graph = bundle.graph.with_splits(splits)?;
    }
    Ok(bundle)
}

/// Runs the configured method on `graph`.
pub fn execute(cfg: &RunConfig, graph: &Graph) -> Result<RunOutput, RunError> {
    let model = cfg.model_config(graph);
    let opts = &cfg.train;
    match &cfg.method {
        Method::None => train_unpruned(graph, &model, opts),
        Method::SnoHv1(c) => snohv1_run(graph, c, &model, opts),
        Method::SnoHv2(c) => snohv2_run(graph, c, &model, opts),
        Method::Random { rate, target_sparsity } => {
            let mut masks = LayerMaskSet::full(graph.pattern().clone(), cfg.depth);
            match target_sparsity {
                Some(t) => random_prune_to_sparsity(&mut masks, t, cfg.seed)?,
                None => random_prune(&mut masks, *rate, cfg.seed)?,
            }
            random_run(graph, masks, &model, opts)
        }
        Method::UgsLite(c) => ugs_lite_run(graph, c, &model, opts),
        Method::DropEdge { drop_rate, per_layer } => {
            let d = DropEdgeConfig {
                drop_rate: *drop_rate,
                seed: cfg.seed,
                per_layer: *per_layer,
            };
            dropedge_run(graph, d, &model, opts)
        }
        Method::DropEdgeSnoHv2 {
            drop_rate,
            per_layer,
            snohv2,
        } => {
            let d = DropEdgeConfig {
                drop_rate: *drop_rate,
                seed: cfg.seed,
                per_layer: *per_layer,
            };
            dropedge_plus_snohv2(graph, d, snohv2, &model, opts)
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: String,
    pub test_acc: f64,
    pub test_acc_std: f64,
    pub val_acc: f64,
    pub best_epoch: Option<usize>,
    pub edge_sparsity: f64,
    pub edge_sparsity_std: f64,
    pub node_sparsity: f64,
    pub node_sparsity_std: f64,
    pub error: String,
}

impl SweepRow {
    pub fn from_output(seed: u64, out: &RunOutput) -> Self {
        let r = &out.report;
        let mean = |xs: Vec<f64>| mean_std(&xs).0;
        SweepRow {
            seed: seed.to_string(),
            test_acc: r.best_test_acc().unwrap_or(f64::NAN),
            test_acc_std: 0.0,
            val_acc: r.best.and_then(|b| b.val_acc).unwrap_or(f64::NAN),
            best_epoch: r.best.map(|b| b.epoch),
            edge_sparsity: mean(r.sparsity.iter().map(|s| s.edge_sparsity).collect()),
            edge_sparsity_std: 0.0,
            node_sparsity: mean(r.sparsity.iter().map(|s| s.node_sparsity).collect()),
            node_sparsity_std: 0.0,
            error: String::new(),
        }
    }

    pub fn failed(seed: u64, err: &str) -> Self {
        SweepRow {
            seed: seed.to_string(),
            test_acc: f64::NAN,
            test_acc_std: 0.0,
            val_acc: f64::NAN,
            best_epoch: None,
            edge_sparsity: f64::NAN,
            edge_sparsity_std: 0.0,
            node_sparsity: f64::NAN,
            node_sparsity_std: 0.0,
            error: err.to_string(),
        }
    }

    /// Mean ± sample std over the successful rows.
    pub fn aggregate(rows: &[SweepRow]) -> SweepRow {
        let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
        let col = |f: fn(&SweepRow) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (t, ts) = col(|r| r.test_acc);
        let (v, _) = col(|r| r.val_acc);
        let (e, es) = col(|r| r.edge_sparsity);
        let (n, ns) = col(|r| r.node_sparsity);
        SweepRow {
            seed: "mean".into(),
            test_acc: t,
            test_acc_std: ts,
            val_acc: v,
            best_epoch: None,
            edge_sparsity: e,
            edge_sparsity_std: es,
            node_sparsity: n,
            node_sparsity_std: ns,
            error: if ok.len() == rows.len() {
                String::new()
            } else {
                format!("{} of {} runs failed", rows.len() - ok.len(), rows.len())
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_settings(&Settings::parse(text)?)
    }

    #[test]
    fn defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.depth, 2);
        assert_eq!(c.hidden, 64);
        assert_eq!(c.train.epochs, 1000);
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.method, Method::None);
    }

    #[test]
    fn method_keys_are_checked() {
        let c = parse("method=snohv2\ndepth=32\n").unwrap();
        assert_eq!(c.method, Method::SnoHv2(SnoHv2Config::absolute(0.05)));
        let c = parse("method = snohv1\np = 20\nk = 10\nscheme = iterative\nrounds=2\ndepth=3").unwrap();
        match c.method {
            Method::SnoHv1(v1) => {
                assert_eq!(v1.prune_rate, 20.0);
                assert_eq!(v1.window, 10);
                assert_eq!(v1.scheme, Scheme::Iterative);
                assert_eq!(v1.iterative_rounds, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("rho=0.1"), Err(ConfigError::WrongMethod { .. })));
        assert!(matches!(parse("colour=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(parse("method=snohv2\nrho=-1"), Err(ConfigError::Run(_))));
        assert!(matches!(parse("depth=two"), Err(ConfigError::Value { .. })));
        assert!(matches!(parse("depth"), Err(ConfigError::Syntax { line: 1 })));
    }

    #[test]
    fn settings_round_trip() {
        for text in [
            "method=ugs_lite\nipr=10\ndepth=4",
            "method=dropedge+snohv2\nq=0.2\nrelative=40",
            "method=random\ntarget_sparsity=0.5,0.25",
            "method=snohv1\nscheme=reinit\nreinit_epochs=40\nwindow=5",
        ] {
            let c = parse(text).unwrap();
            let again = RunConfig::from_settings(&c.to_settings()).unwrap();
            assert_eq!(c, again);
        }
    }
}

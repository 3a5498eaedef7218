//! Structured-text configuration for environments and models.
//!
//! Files ending in `.json` are JSON, anything else is TOML. Both share one
//! schema. Kernels may carry inline rows or refer to a file-level row store
//! and class maps, which keeps lattice-based environments compact.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Kernel, MonitoringStructure, Row, StageEnv};
use crate::model::{Model, ParamSet, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn of(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

/// A row either as a dense vector or as a window starting at `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowSpec {
    Dense(Vec<f64>),
    Window { offset: usize, mass: Vec<f64> },
}

impl RowSpec {
    fn into_row(self) -> Row {
        match self {
            RowSpec::Dense(m) => Row::dense(m),
            RowSpec::Window { offset, mass } => Row::new(offset, mass),
        }
    }

    fn from_row(r: &Row) -> RowSpec {
        if r.offset == 0 {
            RowSpec::Dense(r.mass.clone())
        } else {
            RowSpec::Window {
                offset: r.offset,
                mass: r.mass.clone(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Shift of a row per own strategy, for consequence sets of the form A x S.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub own_stride: usize,
    /// Index into `class_maps`; absent means one class per profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// Inline rows, one per class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<RowSpec>>,
    /// Row ids into the file-level `store`, one per class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_ids: Option<Vec<u32>>,
}

fn is_zero(x: &usize) -> bool {
    *x == 0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub store: Vec<RowSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_maps: Vec<Vec<u32>>,
    pub kernels: Vec<KernelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitoringConfig {
    /// `perfect`, `uninformative` or `noisy`; absent means an explicit table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signals: Vec<String>,
    /// One row per opponent strategy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub strategies: Vec<String>,
    pub consequences: Vec<String>,
    pub situations: Vec<String>,
    pub utility: Vec<f64>,
    pub monitoring: MonitoringConfig,
    /// One kernel per situation, in order.
    #[serde(flatten)]
    pub kernels: KernelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub label: String,
    pub n_strategies: usize,
    pub kernel_labels: Vec<String>,
    /// Explicit (conj_a, conj_b, kernel) triples; absent means the product A x A x kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<[usize; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_eps: Option<f64>,
    #[serde(flatten)]
    pub kernels: KernelSet,
}

fn cfg_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

/// Parse text in the given format; errors carry line and column.
pub fn parse_str<T: DeserializeOwned>(text: &str, format: Format, path: &str) -> Result<T> {
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| cfg_err(path, e)),
        Format::Toml => toml::from_str(text).map_err(|e| {
            let loc = e
                .span()
                .map(|s| {
                    let (line, col) = line_col(text, s.start);
                    format!("line {line} column {col}: ")
                })
                .unwrap_or_default();
            cfg_err(path, format!("{loc}{}", e.message()))
        }),
    }
}

fn line_col(text: &str, byte: usize) -> (usize, usize) {
    let before = &text[..byte.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn to_string<T: Serialize>(value: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(value).map_err(|e| cfg_err("<memory>", e)),
        Format::Toml => toml::to_string(value).map_err(|e| cfg_err("<memory>", e)),
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(&path.display().to_string(), e))?;
    parse_str(&text, Format::of(path), &path.display().to_string())
}

pub fn save<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(value, Format::of(path))?)?;
    Ok(())
}

impl KernelSet {
    fn build(self, n_a: usize, n_y: usize, path: &str) -> Result<Vec<Kernel>> {
        let store = Arc::new(self.store.into_iter().map(RowSpec::into_row).collect::<Vec<_>>());
        let maps: Vec<Arc<Vec<u32>>> = self.class_maps.into_iter().map(Arc::new).collect();
        let identity = Arc::new((0..(n_a * n_a) as u32).collect::<Vec<_>>());
        self.kernels
            .into_iter()
            .enumerate()
            .map(|(i, k)| {
                let class_of = match k.classes {
                    None => identity.clone(),
                    Some(c) => maps
                        .get(c)
                        .cloned()
                        .ok_or_else(|| cfg_err(path, format!("kernel {i}: no class map {c}")))?,
                };
                let (class_row, st) = match (k.rows, k.row_ids) {
                    (Some(rows), None) => {
                        let ids = (0..rows.len() as u32).collect();
                        (
                            ids,
                            Arc::new(rows.into_iter().map(RowSpec::into_row).collect::<Vec<_>>()),
                        )
                    }
                    (None, Some(ids)) => (ids, store.clone()),
                    _ => {
                        return Err(cfg_err(
                            path,
                            format!("kernel {i}: give exactly one of rows or row_ids"),
                        ))
                    }
                };
                Kernel::from_parts(n_a, n_y, k.own_stride, class_of, class_row, st)
                    .map_err(|e| cfg_err(path, format!("kernel {i}: {e}")))
            })
            .collect()
    }

    /// Serialize kernels, sharing stores and class maps that are shared in memory.
    pub fn from_kernels(kernels: &[Kernel]) -> KernelSet {
        let mut set = KernelSet::default();
        let mut store_base: HashMap<*const Vec<Row>, u32> = HashMap::new();
        let mut map_index: HashMap<*const Vec<u32>, usize> = HashMap::new();
        let n_a = kernels.first().map_or(0, |k| k.n_a());
        let identity: Vec<u32> = (0..(n_a * n_a) as u32).collect();
        for k in kernels {
            let base = *store_base.entry(Arc::as_ptr(k.store())).or_insert_with(|| {
                let b = set.store.len() as u32;
                set.store.extend(k.store().iter().map(RowSpec::from_row));
                b
            });
            let classes = if **k.class_of() == identity {
                None
            } else {
                Some(*map_index.entry(Arc::as_ptr(k.class_of())).or_insert_with(|| {
                    set.class_maps.push(k.class_of().to_vec());
                    set.class_maps.len() - 1
                }))
            };
            set.kernels.push(KernelConfig {
                own_stride: k.own_stride(),
                classes,
                rows: None,
                row_ids: Some(k.class_rows().iter().map(|r| r + base).collect()),
            });
        }
        set
    }
}

impl MonitoringConfig {
    fn build(self, strategies: &[String], path: &str) -> Result<MonitoringStructure> {
        match self.kind.as_deref() {
            None => Ok(MonitoringStructure {
                signals: self.signals,
                dist: self.table,
            }),
            Some("perfect") => Ok(MonitoringStructure::perfect(strategies)),
            Some("uninformative") => Ok(MonitoringStructure::uninformative(strategies.len())),
            Some("noisy") => {
                let tau = self.tau.ok_or_else(|| cfg_err(path, "noisy monitoring needs tau"))?;
                if !(0.0..=1.0).contains(&tau) {
                    return Err(cfg_err(path, format!("tau {tau} outside [0, 1]")));
                }
                Ok(MonitoringStructure::noisy(strategies, tau))
            }
            Some(k) => Err(cfg_err(path, format!("unknown monitoring kind {k}"))),
        }
    }
}

impl EnvConfig {
    pub fn from_env(env: &StageEnv) -> EnvConfig {
        EnvConfig {
            strategies: env.strategies.clone(),
            consequences: env.consequences.clone(),
            situations: env.situations.clone(),
            utility: env.utility.clone(),
            monitoring: MonitoringConfig {
                kind: None,
                tau: None,
                signals: env.monitoring.signals.clone(),
                table: env.monitoring.dist.clone(),
            },
            kernels: KernelSet::from_kernels(&env.kernels),
        }
    }

    pub fn build(self, path: &str) -> Result<StageEnv> {
        let n_a = self.strategies.len();
        let n_y = self.consequences.len();
        let monitoring = self.monitoring.build(&self.strategies, path)?;
        let kernels = self.kernels.build(n_a, n_y, path)?;
        StageEnv::new(
            self.strategies,
            self.consequences,
            self.situations,
            kernels,
            self.utility,
            monitoring,
        )
        .map_err(|e| cfg_err(path, e))
    }
}

impl ModelConfig {
    pub fn from_model(m: &Model) -> ModelConfig {
        ModelConfig {
            label: m.label.clone(),
            n_strategies: m.n_a(),
            kernel_labels: m.kernel_labels.clone(),
            params: match &m.params {
                ParamSet::Product => None,
                ParamSet::List(ps) => Some(ps.iter().map(|p| [p.conj_a, p.conj_b, p.kernel]).collect()),
            },
            perturb_eps: m.perturb_eps,
            kernels: KernelSet::from_kernels(&m.kernels),
        }
    }

    /// Build the model; `n_y` is the consequence count of the environment it is used with.
    pub fn build(self, n_y: usize, path: &str) -> Result<Model> {
        let n_a = self.n_strategies;
        let kernels = self.kernels.build(n_a, n_y, path)?;
        let mut m = match self.params {
            None => Model::product(self.label, n_a, kernels, self.kernel_labels),
            Some(ps) => {
                let ps = ps
                    .into_iter()
                    .map(|[a, b, k]| Parameter {
                        conj_a: a,
                        conj_b: b,
                        kernel: k,
                    })
                    .collect();
                Model::list(self.label, n_a, kernels, self.kernel_labels, ps)
            }
        }
        .map_err(|e| cfg_err(path, e))?;
        m.perturb_eps = self.perturb_eps;
        Ok(m)
    }
}

pub fn load_env(path: &Path) -> Result<StageEnv> {
    load::<EnvConfig>(path)?.build(&path.display().to_string())
}

pub fn save_env(env: &StageEnv, path: &Path) -> Result<()> {
    save(&EnvConfig::from_env(env), path)
}

pub fn load_model(path: &Path, env: &StageEnv) -> Result<Model> {
    let p = path.display().to_string();
    let m = load::<ModelConfig>(path)?.build(env.n_y(), &p)?;
    m.check_env(env).map_err(|e| cfg_err(&p, e))?;
    Ok(m)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    save(&ModelConfig::from_model(model), path)
}

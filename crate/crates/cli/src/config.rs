//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! env.name = nine_rooms
//! train.episodes = 2000
//! trail.alpha_edge = 0.01
//! ```
//!
//! Unknown keys, duplicate keys and malformed values are rejected with the
//! offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use trail_core::env::{fmt_f64, EnvConfig};
use trail_core::runner::{AblationAxis, AblationConfig, BcConfig, BcVariant, Collector, TrainConfig};
use trail_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasSource {
    /// Synthetic trajectories of exactly `bias.length` states.
    Fixed,
    /// Episodes of a uniform random policy in the configured environment.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSection {
    pub source: BiasSource,
    pub length: usize,
    pub episodes: usize,
    pub samples: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        BiasSection {
            source: BiasSource::Fixed,
            length: 5,
            episodes: 1000,
            samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcSection {
    pub n_train: usize,
    pub n_test: usize,
    pub batches: usize,
    pub alpha: f64,
    pub variants: Vec<BcVariant>,
}

impl Default for BcSection {
    fn default() -> Self {
        BcSection {
            n_train: 400,
            n_test: 300,
            batches: 80_000,
            alpha: 0.01,
            variants: BcVariant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub axis: AblationAxis,
    pub episodes: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            axis: AblationAxis::K,
            episodes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub bc: BcSection,
    pub bias: BiasSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            bc: BcSection::default(),
            bias: BiasSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn parse_value<T: FromStr>(key: &str, e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        line: e.line,
        message: format!("`{key}`: cannot parse `{}`", e.value),
    })
}

// inf and NaN parse as f64 but never mean anything in a run config
fn parse_real(key: &str, e: &Entry) -> Result<f64> {
    let v: f64 = parse_value(key, e)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: e.line,
            message: format!("`{key}`: expected a finite number, got `{}`", e.value),
        });
    }
    Ok(v)
}

fn parse_bool(key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line: e.line,
            message: format!("`{key}`: expected true or false, got `{}`", e.value),
        }),
    }
}

fn parse_list<T: FromStr>(key: &str, e: &Entry) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Parse {
                line: e.line,
                message: format!("`{key}`: cannot parse list item `{s}`"),
            })
        })
        .collect()
}

fn parse_with<T>(key: &str, e: &Entry, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    f(&e.value).map_err(|err| Error::Parse {
        line: e.line,
        message: format!("`{key}`: {err}"),
    })
}

const ENV_KEYS: [&str; 9] = [
    "env.name",
    "env.rooms_x",
    "env.rooms_y",
    "env.room_size",
    "env.layout_seed",
    "env.horizon",
    "env.turns",
    "env.noise_sigma",
    "env.door_width",
];

const OTHER_KEYS: [&str; 27] = [
    "train.episodes",
    "train.updates_per_step",
    "train.batch_size",
    "train.lr",
    "train.buffer_capacity",
    "train.post_process",
    "train.collector",
    "train.train_encoder",
    "train.eval_every",
    "train.seeds",
    "net.hidden",
    "net.policy_k",
    "trail.k",
    "trail.alpha_edge",
    "trail.alpha_sc",
    "trail.grad_clip",
    "eval.n_queries",
    "eval.query_seed",
    "bc.n_train",
    "bc.n_test",
    "bc.batches",
    "bc.alpha",
    "bc.variants",
    "bias.source",
    "bias.length",
    "bias.episodes",
    "bias.samples",
];

const ABLATE_KEYS: [&str; 2] = ["ablate.axis", "ablate.episodes"];

fn is_known(key: &str) -> bool {
    ENV_KEYS.contains(&key) || OTHER_KEYS.contains(&key) || ABLATE_KEYS.contains(&key)
}

fn build_env(map: &BTreeMap<String, Entry>) -> Result<EnvConfig> {
    let get = |k: &str| map.get(k);
    let name_entry = get("env.name");
    let name = name_entry.map_or("nine_rooms", |e| e.value.as_str());
    let mut env = match name {
        "nine_rooms" | "rooms" => EnvConfig::nine_rooms(),
        "large_rooms" => EnvConfig::large_rooms(),
        "double_spiral" => EnvConfig::double_spiral(),
        "continuous_rooms" => EnvConfig::continuous_rooms(0.0),
        other => {
            return Err(Error::Parse {
                line: name_entry.map_or(0, |e| e.line),
                message: format!(
                    "`env.name`: unknown environment `{other}` (nine_rooms|rooms|large_rooms|double_spiral|continuous_rooms)"
                ),
            })
        }
    };
    for key in ENV_KEYS.iter().skip(1) {
        let Some(e) = get(key) else { continue };
        let applies = match (&mut env, *key) {
            (EnvConfig::Rooms { rooms_x, .. }, "env.rooms_x") => {
                *rooms_x = parse_value(key, e)?;
                true
            }
            (EnvConfig::Rooms { rooms_y, .. }, "env.rooms_y") => {
                *rooms_y = parse_value(key, e)?;
                true
            }
            (EnvConfig::Rooms { room_size, .. }, "env.room_size") => {
                *room_size = parse_value(key, e)?;
                true
            }
            (EnvConfig::Rooms { layout_seed, .. }, "env.layout_seed") => {
                *layout_seed = parse_value(key, e)?;
                true
            }
            (EnvConfig::DoubleSpiral { turns, .. }, "env.turns") => {
                *turns = parse_value(key, e)?;
                true
            }
            (EnvConfig::ContinuousRooms { noise_sigma, .. }, "env.noise_sigma") => {
                *noise_sigma = parse_real(key, e)?;
                true
            }
            (EnvConfig::ContinuousRooms { door_width, .. }, "env.door_width") => {
                *door_width = parse_real(key, e)?;
                true
            }
            (
                EnvConfig::Rooms { horizon, .. }
                | EnvConfig::DoubleSpiral { horizon, .. }
                | EnvConfig::ContinuousRooms { horizon, .. },
                "env.horizon",
            ) => {
                *horizon = parse_value(key, e)?;
                true
            }
            _ => false,
        };
        if !applies {
            return Err(Error::Parse {
                line: e.line,
                message: format!("`{key}` does not apply to env.name = {name}"),
            });
        }
    }
    Ok(env)
}

/// Parses a run configuration. Missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty key or value".into(),
            });
        }
        if !is_known(key) {
            return Err(Error::UnknownKey {
                key: key.to_string(),
                line,
            });
        }
        if let Some(prev) = map.get(key) {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` already set on line {}", prev.line),
            });
        }
        map.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }

    let mut cfg = RunConfig::default();
    cfg.train.env = build_env(&map)?;
    let t = &mut cfg.train;
    for (key, e) in &map {
        let key = key.as_str();
        match key {
            "train.episodes" => t.episodes = parse_value(key, e)?,
            "train.updates_per_step" => t.updates_per_step = parse_value(key, e)?,
            "train.batch_size" => t.batch_size = parse_value(key, e)?,
            "train.lr" => t.lr = parse_real(key, e)?,
            "train.buffer_capacity" => t.buffer_capacity = parse_value(key, e)?,
            "train.post_process" => t.post_process = parse_bool(key, e)?,
            "train.collector" => t.collector = parse_with(key, e, Collector::from_str)?,
            "train.train_encoder" => t.train_encoder = parse_bool(key, e)?,
            "train.eval_every" => t.eval_every = parse_value(key, e)?,
            "train.seeds" => t.seeds = parse_list(key, e)?,
            "net.hidden" => t.hidden = parse_value(key, e)?,
            "net.policy_k" => t.policy_k = parse_value(key, e)?,
            "trail.k" => t.trail.k = parse_value(key, e)?,
            "trail.alpha_edge" => t.trail.alpha_edge = parse_real(key, e)?,
            "trail.alpha_sc" => t.trail.alpha_sc = parse_real(key, e)?,
            "trail.grad_clip" => {
                t.trail.grad_clip = match e.value.as_str() {
                    "none" => None,
                    _ => Some(parse_real(key, e)?),
                }
            }
            "eval.n_queries" => t.n_eval_queries = parse_value(key, e)?,
            "eval.query_seed" => t.query_seed = parse_value(key, e)?,
            "bc.n_train" => cfg.bc.n_train = parse_value(key, e)?,
            "bc.n_test" => cfg.bc.n_test = parse_value(key, e)?,
            "bc.batches" => cfg.bc.batches = parse_value(key, e)?,
            "bc.alpha" => cfg.bc.alpha = parse_real(key, e)?,
            "bc.variants" => {
                cfg.bc.variants = e
                    .value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_with(key, e, |_| s.parse()))
                    .collect::<Result<_>>()?
            }
            "bias.source" => {
                cfg.bias.source = match e.value.as_str() {
                    "fixed" => BiasSource::Fixed,
                    "random" => BiasSource::Random,
                    _ => {
                        return Err(Error::Parse {
                            line: e.line,
                            message: format!("`bias.source`: expected fixed or random, got `{}`", e.value),
                        })
                    }
                }
            }
            "bias.length" => cfg.bias.length = parse_value(key, e)?,
            "bias.episodes" => cfg.bias.episodes = parse_value(key, e)?,
            "bias.samples" => cfg.bias.samples = parse_value(key, e)?,
            "ablate.axis" => cfg.ablate.axis = parse_with(key, e, AblationAxis::from_str)?,
            "ablate.episodes" => cfg.ablate.episodes = parse_value(key, e)?,
            _ => {}
        }
    }
    if t.seeds.is_empty() {
        let line = map.get("train.seeds").map_or(0, |e| e.line);
        return Err(Error::Parse {
            line,
            message: "`train.seeds` must list at least one seed".into(),
        });
    }
    if cfg.bc.variants.is_empty() {
        let line = map.get("bc.variants").map_or(0, |e| e.line);
        return Err(Error::Parse {
            line,
            message: "`bc.variants` must list at least one variant".into(),
        });
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn env_lines(env: &EnvConfig, out: &mut String) {
    match env {
        EnvConfig::Rooms {
            rooms_x,
            rooms_y,
            room_size,
            layout_seed,
            horizon,
        } => {
            let _ = writeln!(out, "env.name = rooms");
            let _ = writeln!(out, "env.rooms_x = {rooms_x}");
            let _ = writeln!(out, "env.rooms_y = {rooms_y}");
            let _ = writeln!(out, "env.room_size = {room_size}");
            let _ = writeln!(out, "env.layout_seed = {layout_seed}");
            let _ = writeln!(out, "env.horizon = {horizon}");
        }
        EnvConfig::DoubleSpiral { turns, horizon } => {
            let _ = writeln!(out, "env.name = double_spiral");
            let _ = writeln!(out, "env.turns = {turns}");
            let _ = writeln!(out, "env.horizon = {horizon}");
        }
        EnvConfig::ContinuousRooms {
            noise_sigma,
            door_width,
            horizon,
        } => {
            let _ = writeln!(out, "env.name = continuous_rooms");
            let _ = writeln!(out, "env.noise_sigma = {}", fmt_f64(*noise_sigma));
            let _ = writeln!(out, "env.door_width = {}", fmt_f64(*door_width));
            let _ = writeln!(out, "env.horizon = {horizon}");
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every effective setting, in a form [`parse_config`] reads back to an
    /// equal configuration.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        env_lines(&t.env, &mut out);
        let lines = [
            ("train.episodes", t.episodes.to_string()),
            ("train.updates_per_step", t.updates_per_step.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", fmt_f64(t.lr)),
            ("train.buffer_capacity", t.buffer_capacity.to_string()),
            ("train.post_process", t.post_process.to_string()),
            ("train.collector", t.collector.to_string()),
            ("train.train_encoder", t.train_encoder.to_string()),
            ("train.eval_every", t.eval_every.to_string()),
            ("train.seeds", join(&t.seeds)),
            ("net.hidden", t.hidden.to_string()),
            ("net.policy_k", t.policy_k.to_string()),
            ("trail.k", t.trail.k.to_string()),
            ("trail.alpha_edge", fmt_f64(t.trail.alpha_edge)),
            ("trail.alpha_sc", fmt_f64(t.trail.alpha_sc)),
            ("trail.grad_clip", t.trail.grad_clip.map_or("none".into(), fmt_f64)),
            ("eval.n_queries", t.n_eval_queries.to_string()),
            ("eval.query_seed", t.query_seed.to_string()),
            ("bc.n_train", self.bc.n_train.to_string()),
            ("bc.n_test", self.bc.n_test.to_string()),
            ("bc.batches", self.bc.batches.to_string()),
            ("bc.alpha", fmt_f64(self.bc.alpha)),
            ("bc.variants", join(&self.bc.variants)),
            (
                "bias.source",
                match self.bias.source {
                    BiasSource::Fixed => "fixed".into(),
                    BiasSource::Random => "random".into(),
                },
            ),
            ("bias.length", self.bias.length.to_string()),
            ("bias.episodes", self.bias.episodes.to_string()),
            ("bias.samples", self.bias.samples.to_string()),
            ("ablate.axis", self.ablate.axis.to_string()),
            ("ablate.episodes", self.ablate.episodes.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn bc_config(&self) -> BcConfig {
        let t = &self.train;
        BcConfig {
            env: t.env.clone(),
            n_train: self.bc.n_train,
            n_test: self.bc.n_test,
            batches: self.bc.batches,
            batch_size: t.batch_size,
            lr: t.lr,
            hidden: t.hidden,
            k: t.trail.k,
            alpha: self.bc.alpha,
            seeds: t.seeds.clone(),
        }
    }

    pub fn ablation_config(&self) -> AblationConfig {
        let t = &self.train;
        AblationConfig {
            env: t.env.clone(),
            episodes: self.ablate.episodes,
            updates_per_step: t.updates_per_step,
            batch_size: t.batch_size,
            lr: t.lr,
            hidden: t.hidden,
            buffer_capacity: t.buffer_capacity,
            n_eval_queries: t.n_eval_queries,
            query_seed: t.query_seed,
            seeds: t.seeds.clone(),
            base: t.trail,
        }
    }
}

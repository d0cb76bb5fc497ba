//! Pipeline configuration: a flat `key = value` file, command-line
//! overrides, and defaults, merged in that precedence order
//! (flags > file > defaults).

use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

use crate::notify::{CommandSink, FileSink, Sink};

pub const DEFAULT_BATCH_THRESHOLD: usize = 1000;
/// 250 MiB.
pub const DEFAULT_MAX_FILE_SIZE_BYTES: u64 = 262_144_000;
pub const DEFAULT_TABLE_WIDTH: u32 = 64;
pub const DEFAULT_WORKERS: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    File(PathBuf),
    Command(String),
}

impl SinkSpec {
    fn parse(value: &str) -> Result<Self, String> {
        if let Some(path) = value.strip_prefix("file:") {
            if path.is_empty() {
                return Err("file sink needs a path".into());
            }
            Ok(SinkSpec::File(PathBuf::from(path)))
        } else if let Some(cmd) = value.strip_prefix("command:") {
            if cmd.is_empty() {
                return Err("command sink needs a command".into());
            }
            Ok(SinkSpec::Command(cmd.to_string()))
        } else {
            Err("sink spec must start with `file:` or `command:`".into())
        }
    }

    fn render(&self) -> String {
        match self {
            SinkSpec::File(p) => format!("file:{}", p.display()),
            SinkSpec::Command(c) => format!("command:{c}"),
        }
    }

    pub fn build(&self) -> Box<dyn Sink> {
        match self {
            SinkSpec::File(path) => Box::new(FileSink::new(path)),
            SinkSpec::Command(cmd) => Box::new(CommandSink::new(cmd)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub source_dir: PathBuf,
    pub root_dir: PathBuf,
    pub batch_threshold: usize,
    pub max_file_size_bytes: u64,
    pub table_width: u32,
    pub critical_column: Option<u32>,
    pub allow_quoted_newlines: bool,
    pub workers: usize,
    pub notify_sinks: Vec<SinkSpec>,
}

impl PipelineConfig {
    pub fn build_sinks(&self) -> Vec<Box<dyn Sink>> {
        self.notify_sinks.iter().map(SinkSpec::build).collect()
    }

    /// Renders the effective configuration; loading the result back yields
    /// an identical configuration.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source_dir = {}", self.source_dir.display());
        let _ = writeln!(out, "root_dir = {}", self.root_dir.display());
        let _ = writeln!(out, "batch_threshold = {}", self.batch_threshold);
        let _ = writeln!(out, "max_file_size_bytes = {}", self.max_file_size_bytes);
        let _ = writeln!(out, "table_width = {}", self.table_width);
        if let Some(c) = self.critical_column {
            let _ = writeln!(out, "critical_column = {c}");
        }
        let _ = writeln!(out, "allow_quoted_newlines = {}", self.allow_quoted_newlines);
        let _ = writeln!(out, "workers = {}", self.workers);
        for sink in &self.notify_sinks {
            let _ = writeln!(out, "notify_sink = {}", sink.render());
        }
        out
    }
}

/// Values supplied on the command line; set fields win over the file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub source_dir: Option<PathBuf>,
    pub root_dir: Option<PathBuf>,
    pub batch_threshold: Option<usize>,
    pub critical_column: Option<u32>,
    pub workers: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected `key = value`")]
    Parse { line: usize },
    #[error("config key `{key}`: {reason}")]
    Validation { key: String, reason: String },
    #[error("missing required setting `{0}` (pass it as a flag or in the config file)")]
    MissingRequired(&'static str),
}

#[derive(Default)]
struct RawConfig {
    source_dir: Option<PathBuf>,
    root_dir: Option<PathBuf>,
    batch_threshold: Option<usize>,
    max_file_size_bytes: Option<u64>,
    table_width: Option<u32>,
    critical_column: Option<u32>,
    allow_quoted_newlines: Option<bool>,
    workers: Option<usize>,
    notify_sinks: Vec<SinkSpec>,
}

/// Loads the effective configuration. Unknown keys and invalid values are
/// rejected; missing keys fall back to the overrides and then the defaults.
pub fn load_config(
    path: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<PipelineConfig, ConfigError> {
    let raw = match path {
        Some(p) => parse_file(&std::fs::read_to_string(p)?)?,
        None => RawConfig::default(),
    };

    let source_dir = overrides
        .source_dir
        .clone()
        .or(raw.source_dir)
        .ok_or(ConfigError::MissingRequired("source_dir"))?;
    let root_dir = overrides
        .root_dir
        .clone()
        .or(raw.root_dir)
        .ok_or(ConfigError::MissingRequired("root_dir"))?;

    let config = PipelineConfig {
        source_dir,
        root_dir,
        batch_threshold: overrides
            .batch_threshold
            .or(raw.batch_threshold)
            .unwrap_or(DEFAULT_BATCH_THRESHOLD),
        max_file_size_bytes: raw
            .max_file_size_bytes
            .unwrap_or(DEFAULT_MAX_FILE_SIZE_BYTES),
        table_width: raw.table_width.unwrap_or(DEFAULT_TABLE_WIDTH),
        critical_column: overrides.critical_column.or(raw.critical_column),
        allow_quoted_newlines: raw.allow_quoted_newlines.unwrap_or(true),
        workers: overrides.workers.or(raw.workers).unwrap_or(DEFAULT_WORKERS),
        notify_sinks: raw.notify_sinks,
    };
    validate(&config)?;
    Ok(config)
}

fn parse_file(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Parse { line: line_no })?;
        let key = key.trim();
        let value = value.trim();
        if key != "notify_sink" && seen.iter().any(|s| s == key) {
            return Err(ConfigError::Validation {
                key: key.to_string(),
                reason: format!("duplicated on line {line_no}"),
            });
        }
        match key {
            "source_dir" => raw.source_dir = Some(PathBuf::from(value)),
            "root_dir" => raw.root_dir = Some(PathBuf::from(value)),
            "batch_threshold" => raw.batch_threshold = Some(parse_number(key, value)?),
            "max_file_size_bytes" => raw.max_file_size_bytes = Some(parse_number(key, value)?),
            "table_width" => raw.table_width = Some(parse_number(key, value)?),
            "critical_column" => raw.critical_column = Some(parse_number(key, value)?),
            "allow_quoted_newlines" => {
                raw.allow_quoted_newlines = Some(match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(ConfigError::Validation {
                            key: key.to_string(),
                            reason: format!("expected true or false, got {other:?}"),
                        })
                    }
                })
            }
            "workers" => raw.workers = Some(parse_number(key, value)?),
            "notify_sink" => {
                let spec = SinkSpec::parse(value).map_err(|reason| ConfigError::Validation {
                    key: key.to_string(),
                    reason,
                })?;
                raw.notify_sinks.push(spec);
            }
            unknown => {
                return Err(ConfigError::Validation {
                    key: unknown.to_string(),
                    reason: "unknown key".to_string(),
                })
            }
        }
        seen.push(key.to_string());
    }
    Ok(raw)
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Validation {
        key: key.to_string(),
        reason: format!("expected a number, got {value:?}"),
    })
}

fn validate(config: &PipelineConfig) -> Result<(), ConfigError> {
    let invalid = |key: &str, reason: String| ConfigError::Validation {
        key: key.to_string(),
        reason,
    };
    if config.batch_threshold < 1 {
        return Err(invalid("batch_threshold", "must be at least 1".into()));
    }
    if config.table_width < 1 {
        return Err(invalid("table_width", "must be at least 1".into()));
    }
    if config.max_file_size_bytes < 1 {
        return Err(invalid("max_file_size_bytes", "must be at least 1".into()));
    }
    if config.workers < 1 {
        return Err(invalid("workers", "must be at least 1".into()));
    }
    if let Some(c) = config.critical_column {
        if c < 1 {
            return Err(invalid("critical_column", "must be at least 1".into()));
        }
        if c > config.table_width {
            return Err(invalid(
                "critical_column",
                format!("must be within the table width {}", config.table_width),
            ));
        }
    }
    let source = normalize(&config.source_dir);
    let managed = ["In", "InProgress", "Archive", "Exception"];
    let mut clashes = vec![normalize(&config.root_dir)];
    clashes.extend(managed.iter().map(|m| normalize(&config.root_dir.join(m))));
    if clashes.contains(&source) {
        return Err(invalid(
            "source_dir",
            "must not be the workspace root or one of its managed folders".into(),
        ));
    }
    Ok(())
}

/// Lexical normalization only: the folders may not exist yet.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    fn dirs() -> ConfigOverrides {
        ConfigOverrides {
            source_dir: Some(PathBuf::from("/data/source")),
            root_dir: Some(PathBuf::from("/data/root")),
            ..Default::default()
        }
    }

    #[test]
    fn empty_file_plus_flags_yields_defaults() {
        let (_dir, path) = write_config("");
        let config = load_config(Some(&path), &dirs()).unwrap();
        assert_eq!(config.batch_threshold, 1000);
        assert_eq!(config.max_file_size_bytes, 262_144_000);
        assert_eq!(config.table_width, 64);
        assert_eq!(config.critical_column, None);
        assert!(config.allow_quoted_newlines);
        assert_eq!(config.workers, 1);
        assert!(config.notify_sinks.is_empty());
    }

    #[test]
    fn no_file_requires_dirs_from_flags() {
        let err = load_config(None, &ConfigOverrides::default()).unwrap_err();
        assert!(matches!(err, ConfigError::MissingRequired("source_dir")));
    }

    #[test]
    fn zero_threshold_is_invalid() {
        let (_dir, path) = write_config("batch_threshold = 0\n");
        let err = load_config(Some(&path), &dirs()).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "batch_threshold"));
    }

    #[test]
    fn critical_column_within_default_width_is_accepted() {
        let (_dir, path) = write_config("critical_column = 3\n");
        let config = load_config(Some(&path), &dirs()).unwrap();
        assert_eq!(config.critical_column, Some(3));
    }

    #[test]
    fn critical_column_beyond_width_is_rejected() {
        let (_dir, path) = write_config("table_width = 4\ncritical_column = 5\n");
        let err = load_config(Some(&path), &dirs()).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "critical_column"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (_dir, path) = write_config("batch_treshold = 10\n");
        let err = load_config(Some(&path), &dirs()).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "batch_treshold"));
    }

    #[test]
    fn lines_without_equals_are_parse_errors() {
        let (_dir, path) = write_config("# fine\nbatch_threshold\n");
        let err = load_config(Some(&path), &dirs()).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2 }));
    }

    #[test]
    fn duplicate_scalar_keys_are_rejected() {
        let (_dir, path) = write_config("workers = 1\nworkers = 2\n");
        assert!(load_config(Some(&path), &dirs()).is_err());
    }

    #[test]
    fn sinks_are_repeatable_and_ordered() {
        let (_dir, path) =
            write_config("notify_sink = file:/tmp/a.log\nnotify_sink = command:cat\n");
        let config = load_config(Some(&path), &dirs()).unwrap();
        assert_eq!(
            config.notify_sinks,
            vec![
                SinkSpec::File(PathBuf::from("/tmp/a.log")),
                SinkSpec::Command("cat".into()),
            ]
        );
    }

    #[test]
    fn flags_win_over_file() {
        let (_dir, path) = write_config("batch_threshold = 10\nworkers = 4\n");
        let overrides = ConfigOverrides {
            batch_threshold: Some(77),
            ..dirs()
        };
        let config = load_config(Some(&path), &overrides).unwrap();
        assert_eq!(config.batch_threshold, 77);
        assert_eq!(config.workers, 4);
    }

    #[test]
    fn source_inside_managed_folders_is_rejected() {
        let (_dir, path) = write_config("");
        let overrides = ConfigOverrides {
            source_dir: Some(PathBuf::from("/data/root/In")),
            root_dir: Some(PathBuf::from("/data/root")),
            ..Default::default()
        };
        let err = load_config(Some(&path), &overrides).unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "source_dir"));
    }

    #[test]
    fn effective_config_round_trips() {
        let (_dir, path) = write_config(
            "table_width = 32\ncritical_column = 2\nnotify_sink = file:/tmp/x.log\nallow_quoted_newlines = false\n",
        );
        let config = load_config(Some(&path), &dirs()).unwrap();
        let rendered = config.to_config_string();
        let (_dir2, path2) = write_config(&rendered);
        let reloaded = load_config(Some(&path2), &ConfigOverrides::default()).unwrap();
        assert_eq!(reloaded, config);
    }
}

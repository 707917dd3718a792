//! Network stage layout and its `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub stem_channels: usize,
    pub stage_channels: Vec<usize>,
    /// Stride-1 blocks per stage.
    pub repeat: usize,
    pub final_channels: usize,
    pub num_classes: usize,
    /// Whether the last stage's stride-2 block doubles its width.
    pub stage3_doubles: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: 31,
            input_channels: 3,
            stem_channels: 24,
            stage_channels: vec![24, 48, 96],
            repeat: 3,
            final_channels: 192,
            num_classes: 10,
            stage3_doubles: false,
        }
    }
}

const KEYS: [&str; 7] = [
    "input_size",
    "stem_channels",
    "stage_channels",
    "repeat",
    "final_channels",
    "num_classes",
    "stage3_doubles",
];

impl NetworkConfig {
    pub fn with_repeat(repeat: usize) -> Self {
        NetworkConfig {
            repeat,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_size", self.input_size),
            ("input_channels", self.input_channels),
            ("stem_channels", self.stem_channels),
            ("repeat", self.repeat),
            ("final_channels", self.final_channels),
            ("num_classes", self.num_classes),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be positive")));
            }
        }
        if self.stage_channels.is_empty() {
            return Err(Error::Config("stage_channels must list at least one width".into()));
        }
        if self.stage_channels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "stage_channels must be strictly increasing, got {:?}",
                self.stage_channels
            )));
        }
        if self.stage_channels.contains(&0) {
            return Err(Error::Config("stage_channels must be positive".into()));
        }
        Ok(())
    }

    /// Parse the `key = value` format; `#` starts a comment, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = NetworkConfig::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("unknown key `{key}` on line {}", lineno + 1)));
            }
            if seen.contains(&key) {
                return Err(Error::Config(format!("duplicate key `{key}` on line {}", lineno + 1)));
            }
            seen.push(key);
            let bad = || Error::Config(format!("invalid value `{value}` for key `{key}`"));
            let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
            match key {
                "input_size" => cfg.input_size = int(value)?,
                "stem_channels" => cfg.stem_channels = int(value)?,
                "stage_channels" => {
                    cfg.stage_channels = value.split(',').map(int).collect::<Result<Vec<_>>>()?;
                }
                "repeat" => cfg.repeat = int(value)?,
                "final_channels" => cfg.final_channels = int(value)?,
                "num_classes" => cfg.num_classes = int(value)?,
                "stage3_doubles" => {
                    cfg.stage3_doubles = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let stages: Vec<String> = self.stage_channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "input_size = {}", self.input_size);
        let _ = writeln!(s, "stem_channels = {}", self.stem_channels);
        let _ = writeln!(s, "stage_channels = {}", stages.join(","));
        let _ = writeln!(s, "repeat = {}", self.repeat);
        let _ = writeln!(s, "final_channels = {}", self.final_channels);
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "stage3_doubles = {}", self.stage3_doubles);
        s
    }
}

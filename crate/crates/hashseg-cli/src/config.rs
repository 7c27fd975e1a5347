//! Run configuration: defaults, overridden by a flat `key=value` config
//! file, overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hashseg::codes::{Channels, CodeConfig};
use hashseg::hsh::{MatchOptions, SegmentParams};
use hashseg::hsp::{Connectivity, PruneConfig};

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub grid: u32,
    pub channels: Channels,
    pub masked: bool,
    pub k: u32,
    pub l: u32,
    pub seed: u64,
    pub min_area: u64,
    pub score_threshold: f64,
    pub iou_threshold: f64,
    pub connectivity: Connectivity,
    pub fallback: bool,
    pub require_overlap: bool,
    /// 0 = one thread per core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: 16,
            channels: Channels::Luma,
            masked: false,
            k: 24,
            l: 32,
            seed: 0,
            min_area: 1,
            score_threshold: 0.5,
            iou_threshold: 0.0,
            connectivity: Connectivity::Four,
            fallback: true,
            require_overlap: false,
            jobs: 0,
        }
    }
}

/// Unresolved overrides, from either the config file or flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<u32>,
    pub channels: Option<Channels>,
    pub masked: Option<bool>,
    pub k: Option<u32>,
    pub l: Option<u32>,
    pub seed: Option<u64>,
    pub min_area: Option<u64>,
    pub score_threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
    pub connectivity: Option<Connectivity>,
    pub fallback: Option<bool>,
    pub require_overlap: Option<bool>,
    pub jobs: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            grid, channels, masked, k, l, seed, min_area, score_threshold,
            iou_threshold, connectivity, fallback, require_overlap, jobs
        );
    }
}

/// Parses a flat `key=value` config file; `#` starts a comment line.
pub fn parse_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let ctx = || format!("{}:{}: bad value for {key}", path.display(), lineno + 1);
        match key {
            "grid" => out.grid = Some(value.parse().with_context(ctx)?),
            "channels" => out.channels = Some(value.parse().map_err(anyhow::Error::msg).with_context(ctx)?),
            "masked" => out.masked = Some(value.parse().with_context(ctx)?),
            "k" => out.k = Some(value.parse().with_context(ctx)?),
            "l" => out.l = Some(value.parse().with_context(ctx)?),
            "seed" => out.seed = Some(value.parse().with_context(ctx)?),
            "min_area" => out.min_area = Some(value.parse().with_context(ctx)?),
            "score_threshold" => out.score_threshold = Some(value.parse().with_context(ctx)?),
            "iou_threshold" => out.iou_threshold = Some(value.parse().with_context(ctx)?),
            "connectivity" => out.connectivity = Some(value.parse().map_err(anyhow::Error::msg).with_context(ctx)?),
            "fallback" => out.fallback = Some(value.parse().with_context(ctx)?),
            "require_overlap" => out.require_overlap = Some(value.parse().with_context(ctx)?),
            "jobs" => out.jobs = Some(value.parse().with_context(ctx)?),
            other => bail!("{}:{}: unknown config key {other:?}", path.display(), lineno + 1),
        }
    }
    Ok(out)
}

/// defaults <- config file <- flags, then validation.
pub fn resolve(file: Option<Overrides>, flags: Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(file) = file {
        file.apply(&mut cfg);
    }
    flags.apply(&mut cfg);

    if cfg.grid < 2 {
        bail!("grid must be at least 2, got {}", cfg.grid);
    }
    if cfg.k < 1 || cfg.k > 64 {
        bail!("k must be in 1..=64, got {}", cfg.k);
    }
    if cfg.l < 1 {
        bail!("l must be at least 1");
    }
    if cfg.min_area < 1 {
        bail!("min_area must be at least 1");
    }
    if !(0.0..=1.0).contains(&cfg.score_threshold) {
        bail!("score_threshold must be in [0, 1]");
    }
    if !(0.0..=1.0).contains(&cfg.iou_threshold) {
        bail!("iou_threshold must be in [0, 1]");
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn code_config(&self) -> CodeConfig {
        CodeConfig {
            grid: self.grid,
            channels: self.channels,
            masked: self.masked,
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            code: self.code_config(),
            k: self.k,
            l: self.l,
            seed: self.seed,
            min_area: self.min_area,
            matching: MatchOptions {
                fallback: self.fallback,
                require_overlap: self.require_overlap,
            },
            prune: PruneConfig {
                iou_threshold: self.iou_threshold,
                connectivity: self.connectivity,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_beat_config_file_beats_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# comment\nk = 10\nl = 5\nscore_threshold = 0.25").unwrap();
        let from_file = parse_config_file(file.path()).unwrap();
        let flags = Overrides {
            k: Some(12),
            ..Overrides::default()
        };
        let cfg = resolve(Some(from_file), flags).unwrap();
        assert_eq!(cfg.k, 12); // flag wins
        assert_eq!(cfg.l, 5); // file wins over default
        assert_eq!(cfg.score_threshold, 0.25);
        assert_eq!(cfg.grid, 16); // default
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "nope = 1").unwrap();
        assert!(parse_config_file(file.path()).is_err());

        let mut file2 = tempfile::NamedTempFile::new().unwrap();
        writeln!(file2, "k = banana").unwrap();
        assert!(parse_config_file(file2.path()).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let flags = Overrides {
            k: Some(65),
            ..Overrides::default()
        };
        assert!(resolve(None, flags).is_err());
        let flags = Overrides {
            grid: Some(1),
            ..Overrides::default()
        };
        assert!(resolve(None, flags).is_err());
    }
}

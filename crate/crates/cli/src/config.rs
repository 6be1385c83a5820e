//! Run configuration: TOML file plus command-line overrides.
//!
//! ```toml
//! stimulus_dir = "stimuli"
//! brain_reference = "brain_reference.txt"
//! output_dir = "report"
//! root_seed = 7
//!
//! [[models]]
//! id = "net_a"
//! dir = "containers/net_a"
//!
//! [scoring]
//! lambda = 2.0
//! distance_metric = "euclidean"
//!
//! [analysis]
//! layerwise = false
//! [analysis.groupings.family]
//! net_a = "cnn"
//! ```
//!
//! Relative paths in the file are taken relative to the file itself.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use brainprop::domain::{DistanceMetric, NegativeBranch, PropertyId};
use brainprop::pipeline::{ModelSource, RunConfig};

#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// Stimulus directory.
    #[arg(long)]
    pub stimuli: Option<PathBuf>,
    /// Model container directory; repeat for several. Replaces configured models.
    #[arg(long = "model", value_name = "ID=DIR")]
    pub models: Vec<String>,
    /// Brain reference file.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// euclidean, cityblock or one_minus_pearson.
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    #[arg(long)]
    pub active_unit_threshold: Option<f64>,
    /// Comma-separated property ids to score.
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    pub properties: Vec<PropertyId>,
    /// Drop scene incongruence (models without a classification head).
    #[arg(long)]
    pub without_scene: bool,
    /// Score negative effects with b + lambda*m instead of b - lambda*m.
    #[arg(long)]
    pub as_printed: bool,
    /// Score per-layer containers and compute trajectories.
    #[arg(long)]
    pub layerwise: bool,
    /// Cluster label for a model; repeat for several.
    #[arg(long = "group", value_name = "GROUPING:MODEL=LABEL")]
    pub groups: Vec<String>,
    /// Root seed recorded in the report header.
    #[arg(long)]
    pub root_seed: Option<u64>,
}

/// Reads the config file, or the defaults when none is given.
pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    rebase(&mut cfg.stimulus_dir);
    rebase(&mut cfg.brain_reference);
    rebase(&mut cfg.output_dir);
    for m in &mut cfg.models {
        rebase(&mut m.dir);
    }
    Ok(cfg)
}

impl RunArgs {
    pub fn resolve(&self, config: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = load(config)?;
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(p) = &self.stimuli {
            cfg.stimulus_dir = p.clone();
        }
        if !self.models.is_empty() {
            cfg.models = self
                .models
                .iter()
                .map(|s| parse_model(s))
                .collect::<Result<_>>()?;
        }
        if let Some(p) = &self.reference {
            cfg.brain_reference = p.clone();
        }
        if let Some(p) = &self.out {
            cfg.output_dir = p.clone();
        }
        if let Some(l) = self.lambda {
            cfg.scoring.lambda = l;
        }
        if let Some(m) = self.metric {
            cfg.scoring.distance_metric = m;
        }
        if let Some(t) = self.active_unit_threshold {
            cfg.scoring.active_unit_threshold = t;
        }
        if !self.properties.is_empty() {
            cfg.scoring.property_subset = self.properties.iter().copied().collect();
        }
        if self.without_scene {
            cfg.scoring
                .property_subset
                .remove(&PropertyId::SceneIncongruence);
        }
        if self.as_printed {
            cfg.scoring.negative_branch = NegativeBranch::AsPrinted;
        }
        if self.layerwise {
            cfg.analysis.layerwise = true;
        }
        for g in &self.groups {
            let (grouping, model, label) = parse_group(g)?;
            cfg.analysis
                .groupings
                .entry(grouping)
                .or_default()
                .insert(model, label);
        }
        if self.root_seed.is_some() {
            cfg.root_seed = self.root_seed;
        }
        Ok(())
    }
}

fn parse_model(s: &str) -> Result<ModelSource> {
    match s.split_once('=') {
        Some((id, dir)) if !id.is_empty() && !dir.is_empty() => Ok(ModelSource {
            id: id.to_string(),
            dir: PathBuf::from(dir),
        }),
        _ => bail!("--model expects ID=DIR, got `{s}`"),
    }
}

fn parse_group(s: &str) -> Result<(String, String, String)> {
    let parsed = s
        .split_once(':')
        .and_then(|(g, rest)| rest.split_once('=').map(|(m, l)| (g, m, l)));
    match parsed {
        Some((g, m, l)) if !g.is_empty() && !m.is_empty() && !l.is_empty() => {
            Ok((g.to_string(), m.to_string(), l.to_string()))
        }
        _ => bail!("--group expects GROUPING:MODEL=LABEL, got `{s}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("run.toml");
        fs::write(
            &path,
            "stimulus_dir = \"stim\"\nroot_seed = 3\n[[models]]\nid = \"a\"\ndir = \"m/a\"\n\
             [scoring]\nlambda = 1.5\n",
        )
        .unwrap();
        let cfg = RunArgs::default().resolve(Some(&path)).unwrap();
        assert_eq!(cfg.stimulus_dir, tmp.path().join("stim"));
        assert_eq!(cfg.models[0].dir, tmp.path().join("m/a"));
        assert_eq!(cfg.scoring.lambda, 1.5);
        assert_eq!(cfg.root_seed, Some(3));

        let args = RunArgs {
            lambda: Some(2.5),
            models: vec!["b=/x/b".into()],
            without_scene: true,
            groups: vec!["family:b=cnn".into()],
            ..RunArgs::default()
        };
        let cfg = args.resolve(Some(&path)).unwrap();
        assert_eq!(cfg.scoring.lambda, 2.5);
        assert_eq!(cfg.models.len(), 1);
        assert_eq!(cfg.models[0].id, "b");
        assert_eq!(cfg.scoring.property_subset.len(), 14);
        assert_eq!(cfg.analysis.groupings["family"]["b"], "cnn");
    }

    #[test]
    fn malformed_pairs_rejected() {
        assert!(parse_model("nodir").is_err());
        assert!(parse_model("=x").is_err());
        assert!(parse_group("fam:a").is_err());
        assert!(parse_group("a=b").is_err());
        assert_eq!(
            parse_group("fam:a=b").unwrap(),
            ("fam".into(), "a".into(), "b".into())
        );
    }
}

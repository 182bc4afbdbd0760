use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mqnc_core::protocol::Policy;
use mqnc_core::topology::Topology;
use mqnc_core::NoiseModel;

/// Verification failure: the artefact is still written, but the process
/// exits with code 3.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct CommonArgs {
    /// Built-in topology name (ibm-falcon-27, heavy-hex-RxC, square-grid-WxH,
    /// path-N) or a topology JSON file.
    #[arg(long, default_value = "ibm-falcon-27")]
    pub topology: String,
    /// Noise as `p1,p2,ro` (depolarizing and symmetric readout flip) or a
    /// preset: ideal, ibm-like, cairo-like.
    #[arg(long, default_value = "ideal")]
    pub noise: String,
    /// Shots per measurement setting; 0 uses exact outcome probabilities.
    #[arg(long, default_value_t = 4000)]
    pub shots: usize,
    /// Master seed; required whenever shots are sampled.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Handling of non-identity byproducts.
    #[arg(long, default_value = "postselect", value_parser = parse_policy)]
    pub policy: Policy,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub noise: NoiseModel,
    pub noise_label: String,
    pub shots: usize,
    pub seed: u64,
    pub policy: Policy,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    /// Validate common flags. `samples` marks runs that draw random shots,
    /// which require an explicit seed.
    pub fn from_args(args: &CommonArgs, samples: bool, default_format: Format) -> Result<Self> {
        if let Some(out) = &args.out {
            validate_output(out)?;
        }
        let topology =
            Topology::load(&args.topology).with_context(|| format!("invalid topology `{}`", args.topology))?;
        let noise = parse_noise(&args.noise)?;
        let seed = match args.seed {
            Some(s) => s,
            None if samples && args.shots > 0 => bail!("--seed is required when sampling shots"),
            None => 0,
        };
        Ok(ExperimentConfig {
            topology,
            noise,
            noise_label: args.noise.clone(),
            shots: args.shots,
            seed,
            policy: args.policy,
            out: args.out.clone(),
            format: args.format.unwrap_or(default_format),
        })
    }
}

/// Parse `p1,p2,ro` or a preset name.
pub fn parse_noise(s: &str) -> Result<NoiseModel> {
    if let Some(n) = NoiseModel::preset(s) {
        return Ok(n);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!(
            "noise must be `p1,p2,ro` or one of {:?}, got `{s}`",
            NoiseModel::PRESETS
        );
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse::<f64>().with_context(|| format!("invalid probability `{p}`"))?;
        if !(0.0..=1.0).contains(slot) {
            bail!("probability {slot} outside [0, 1]");
        }
    }
    let mut noise = NoiseModel::depolarizing(v[0], v[1]);
    if v[2] > 0.0 {
        noise = noise.with_symmetric_readout(v[2], 64);
    }
    noise.validate()?;
    Ok(noise)
}

/// Parse a comma-separated list of indices.
pub fn parse_indices(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid index `{p}` in `{s}`"))
        })
        .collect()
}

fn validate_output(path: &Path) -> Result<()> {
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("output directory {} does not exist", dir.display())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_strings() {
        let n = parse_noise("0.001,0.02,0.03").unwrap();
        assert_eq!((n.p1, n.p2), (0.001, 0.02));
        assert_eq!(n.readout_for(5), [[0.97, 0.03], [0.03, 0.97]]);
        assert!(parse_noise("ideal").unwrap().is_noiseless());
        assert!(parse_noise("0.1,0.2").is_err());
        assert!(parse_noise("0.1,2,0").is_err());
        assert!(parse_noise("bogus").is_err());
    }

    #[test]
    fn index_lists() {
        assert_eq!(parse_indices("2, 0,1").unwrap(), vec![2, 0, 1]);
        assert!(parse_indices("1,x").is_err());
    }
}

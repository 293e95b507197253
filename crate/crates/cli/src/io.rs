//! Recording files and the `simulate` command.

use anyhow::{anyhow, Context};
use needleguide_core::recording::Recording;
use needleguide_core::simulator::{generate, NoiseModel, Scenario, TruthRecord};
use needleguide_server::SessionConfig;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn read_recording(path: &Path) -> anyhow::Result<Recording> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Recording::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Truth from `truth` when given, else whatever the recording carries inline.
pub fn truth_for(recording: &Recording, truth: Option<&Path>) -> anyhow::Result<Vec<TruthRecord>> {
    match truth {
        Some(p) => Ok(read_recording(p)?.truth),
        None => Ok(recording.truth.clone()),
    }
}

pub fn session_config(config: Option<&Path>) -> anyhow::Result<SessionConfig> {
    Ok(match config {
        Some(p) => needleguide_server::load_config(p, &[])?.session,
        None => SessionConfig::default(),
    })
}

/// Standard output when `path` is `None`.
pub fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub struct SimulateArgs {
    pub scenario: String,
    pub noise_sigma: f64,
    pub noise_deg: f64,
    pub seed: u64,
    pub samples: Option<usize>,
    pub rate: f64,
    pub out: Option<PathBuf>,
    pub truth_out: Option<PathBuf>,
}

pub fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let scenario = Scenario::by_name(&a.scenario, a.samples).ok_or_else(|| anyhow!("unknown scenario {}", a.scenario))?;
    if !(a.noise_sigma >= 0.0 && a.noise_deg >= 0.0) {
        return Err(anyhow!("noise levels must be non-negative"));
    }
    let noise = NoiseModel::new(a.noise_sigma * 1e-3, a.noise_deg.to_radians(), a.seed);
    let mut recording = Recording::from(generate(scenario, noise, a.rate)?);
    let truth = Recording { messages: Vec::new(), truth: std::mem::take(&mut recording.truth) };
    if let Some(path) = truth_path(a.out.as_deref(), a.truth_out.as_deref()) {
        truth.write(output(Some(&path))?)?;
    }
    recording.write(output(a.out.as_deref())?)?;
    Ok(())
}

/// Truth never goes inline: it lands in `truth_out`, or beside `out` as
/// `<stem>.truth.jsonl`, or nowhere when the recording goes to stdout.
pub fn truth_path(out: Option<&Path>, truth_out: Option<&Path>) -> Option<PathBuf> {
    if let Some(t) = truth_out {
        return Some(t.to_owned());
    }
    let out = out?;
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    Some(out.with_file_name(format!("{stem}.truth.jsonl")))
}

//! Run configuration: one TOML document, one table per subcommand.
//!
//! Every table has defaults, so an empty file (or none) is valid. Unknown
//! keys are rejected. `--set table.key=value` overrides a file key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stpath::diagram::{ExternalLeg, FockTruncation, Sense, VertexSpec};
use stpath::freq::OutcomeDistribution;
use stpath::history::{ScreenSpec, SlitConfig};
use stpath::kernel::KernelParams;
use stpath::onshell::{OnShellMomentumState, Species};
use stpath::propagator::{EpsilonSchedule, Route};
use stpath::spacetime::GridSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Kernel,
    Propagator,
    Twoslit,
    Scatter,
    Freq,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Propagator => "propagator",
            Command::Twoslit => "twoslit",
            Command::Scatter => "scatter",
            Command::Freq => "freq",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub kernel: KernelSection,
    pub propagator: PropagatorSection,
    pub twoslit: TwoSlitSection,
    pub scatter: ScatterSection,
    pub freq: FreqSection,
    pub check: CheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            out: None,
            seed: 42,
            threads: None,
            kernel: KernelSection::default(),
            propagator: PropagatorSection::default(),
            twoslit: TwoSlitSection::default(),
            scatter: ScatterSection::default(),
            freq: FreqSection::default(),
            check: CheckSection::default(),
        }
    }
}

/// Gaussian packet evolved in λ on a (t, x) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub mass: f64,
    pub points: usize,
    pub extent: f64,
    pub sigma: f64,
    pub carrier: f64,
    pub lambda: f64,
    /// Finite-difference λ steps for the residual, each half the last.
    pub steps: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { mass: 1.0, points: 512, extent: 40.0, sigma: 2.0, carrier: 1.0, lambda: 0.1, steps: vec![0.04, 0.02, 0.01] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorSection {
    pub mass: f64,
    /// Separations `[t, x₁, …]`; all of one dimension (1 or 3 spatial).
    pub points: Vec<Vec<f64>>,
    /// ε ladder for the linear extrapolation to ε → 0.
    pub epsilons: Vec<f64>,
    pub routes: Vec<Route>,
}

impl Default for PropagatorSection {
    fn default() -> Self {
        PropagatorSection {
            mass: 1.0,
            points: vec![vec![0.0, 2.0], vec![0.5, 1.5], vec![1.5, 0.5], vec![2.0, 0.0], vec![0.2, 0.4]],
            epsilons: vec![4e-3, 2e-3, 1e-3],
            routes: vec![Route::Lambda, Route::Momentum],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoSlitSection {
    pub mass: f64,
    pub slits: [Vec<f64>; 2],
    pub t_slit: f64,
    pub t_screen: f64,
    pub screen_lo: f64,
    pub screen_hi: f64,
    pub bins: usize,
    pub subsamples: usize,
    pub epsilon: f64,
    pub t_max: f64,
    pub phase_step: f64,
    pub route: Route,
    /// Half-width of the region used for the fringe visibility.
    pub central: f64,
}

impl Default for TwoSlitSection {
    fn default() -> Self {
        let d = SlitConfig::desk();
        TwoSlitSection {
            mass: d.mass,
            slits: d.slits,
            t_slit: d.t_slit,
            t_screen: d.t_screen,
            screen_lo: d.screen.lo,
            screen_hi: d.screen.hi,
            bins: d.screen.bins,
            subsamples: d.screen.subsamples,
            epsilon: d.schedule.epsilon,
            t_max: d.schedule.t_max,
            phase_step: d.schedule.phase_step,
            route: d.route,
            central: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegSpec {
    pub species: String,
    pub antiparticle: bool,
    pub p: Vec<f64>,
    pub sense: Sense,
}

impl Default for LegSpec {
    fn default() -> Self {
        LegSpec { species: "A".into(), antiparticle: false, p: vec![0.0], sense: Sense::Incoming }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSection {
    pub mass: f64,
    pub coupling: f64,
    /// Species destroyed (and recreated) by the contact vertex.
    pub vertex: Vec<String>,
    pub legs: Vec<LegSpec>,
    pub max_order: usize,
    pub epsilon: f64,
    /// Fock truncation for the unitarity defect: three modes {−Δp, 0, Δp}.
    pub dp: f64,
    pub max_quanta: usize,
    pub truncation_orders: Vec<usize>,
    pub couplings: Vec<f64>,
}

impl Default for ScatterSection {
    fn default() -> Self {
        let leg = |s: &str, sense| LegSpec { species: s.into(), sense, ..LegSpec::default() };
        ScatterSection {
            mass: 1.0,
            coupling: 0.5,
            vertex: vec!["A".into(), "B".into()],
            legs: vec![leg("A", Sense::Incoming), leg("B", Sense::Incoming), leg("A", Sense::Outgoing), leg("B", Sense::Outgoing)],
            max_order: 2,
            epsilon: 1e-3,
            dp: 0.5,
            max_quanta: 4,
            truncation_orders: vec![1, 2],
            couplings: vec![0.05, 0.1, 0.2, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreqSection {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
    /// Trials per record.
    pub n: u64,
    /// Monte Carlo records.
    pub samples: usize,
    pub deltas: Vec<f64>,
}

impl Default for FreqSection {
    fn default() -> Self {
        FreqSection { labels: vec!["a".into(), "b".into()], probabilities: vec![0.3, 0.7], n: 100, samples: 10_000, deltas: vec![0.05, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub suites: Vec<u32>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection { suites: (1..=10).collect() }
    }
}

fn bad<T>(key: &str, msg: impl std::fmt::Display) -> Result<T, CliError> {
    Err(CliError::Config(format!("{key}: {msg}")))
}

/// Maps a module's own precondition failure onto the key that fed it.
fn owned<T>(key: &str, r: stpath::Result<T>) -> Result<T, CliError> {
    r.or_else(|e| bad(key, e))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        bad(key, format!("must be positive, got {v}"))
    }
}

impl KernelSection {
    pub fn params(&self) -> Result<KernelParams, CliError> {
        positive("kernel.mass", self.mass)?;
        owned("kernel.mass", KernelParams::new(self.mass))
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        positive("kernel.extent", self.extent)?;
        owned("kernel.points", GridSpec::spacetime(1, self.points, self.extent))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.grid()?;
        positive("kernel.sigma", self.sigma)?;
        if !self.carrier.is_finite() {
            return bad("kernel.carrier", "must be finite");
        }
        positive("kernel.lambda", self.lambda)?;
        if self.steps.len() < 2 || self.steps.iter().any(|h| !(*h > 0.0 && *h < self.lambda)) {
            return bad("kernel.steps", "need at least two steps in (0, lambda)");
        }
        Ok(())
    }
}

impl PropagatorSection {
    pub fn validate(&self) -> Result<(), CliError> {
        positive("propagator.mass", self.mass)?;
        if self.points.is_empty() {
            return bad("propagator.points", "need at least one separation");
        }
        let dims = self.points[0].len();
        if !(dims == 2 || dims == 4) || self.points.iter().any(|p| p.len() != dims || p.iter().any(|v| !v.is_finite())) {
            return bad("propagator.points", "each point is [t, x] or [t, x, y, z], all the same length");
        }
        if self.epsilons.len() < 2 {
            return bad("propagator.epsilons", "need at least two values to extrapolate");
        }
        for &e in &self.epsilons {
            owned("propagator.epsilons", EpsilonSchedule::new(e))?;
        }
        if self.routes.is_empty() {
            return bad("propagator.routes", "need at least one route");
        }
        Ok(())
    }
}

impl TwoSlitSection {
    pub fn slit_config(&self) -> Result<SlitConfig, CliError> {
        positive("twoslit.mass", self.mass)?;
        positive("twoslit.epsilon", self.epsilon)?;
        positive("twoslit.central", self.central)?;
        let dims = self.slits[0].len();
        let schedule = EpsilonSchedule { epsilon: self.epsilon, t_max: self.t_max, phase_step: self.phase_step };
        owned("twoslit.epsilon", schedule.validate())?;
        let cfg = SlitConfig {
            slits: self.slits.clone(),
            t_slit: self.t_slit,
            t_screen: self.t_screen,
            screen: ScreenSpec { lo: self.screen_lo, hi: self.screen_hi, bins: self.bins, subsamples: self.subsamples, axis: 0, offset: vec![0.0; dims] },
            source_momentum: vec![0.0; dims],
            mass: self.mass,
            schedule,
            route: self.route,
        };
        owned("twoslit", cfg.validate())?;
        Ok(cfg)
    }
}

impl ScatterSection {
    pub fn vertex(&self) -> Result<VertexSpec, CliError> {
        let v = VertexSpec { destroyed: self.vertex.clone(), created: self.vertex.clone(), coupling: self.coupling };
        owned("scatter.vertex", v.validate())?;
        Ok(v)
    }

    pub fn legs(&self) -> Result<Vec<ExternalLeg>, CliError> {
        self.legs
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let sp = if l.antiparticle { Species::antiparticle(&l.species) } else { Species::particle(&l.species) };
                let st = owned(&format!("scatter.legs[{i}]"), OnShellMomentumState::new(sp, l.p.clone(), self.mass))?;
                Ok(ExternalLeg::lambda(st, l.sense))
            })
            .collect()
    }

    pub fn fock(&self) -> FockTruncation {
        let mut species: Vec<&str> = self.vertex.iter().map(|s| s.as_str()).collect();
        species.sort();
        species.dedup();
        FockTruncation::three_mode(&species, self.dp, self.max_quanta, self.mass)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("scatter.mass", self.mass)?;
        if !self.coupling.is_finite() {
            return bad("scatter.coupling", "must be finite");
        }
        self.vertex()?;
        self.legs()?;
        if self.legs.iter().any(|l| l.p.len() != self.legs[0].p.len()) {
            return bad("scatter.legs", "all legs need momenta of one dimension");
        }
        if self.max_order > 4 {
            return bad("scatter.max_order", "at most 4");
        }
        positive("scatter.epsilon", self.epsilon)?;
        positive("scatter.dp", self.dp)?;
        if self.max_quanta == 0 || self.max_quanta > 8 {
            return bad("scatter.max_quanta", "must lie in 1..=8");
        }
        if self.truncation_orders.iter().any(|&k| k == 0 || k > 8) {
            return bad("scatter.truncation_orders", "orders must lie in 1..=8");
        }
        if self.couplings.len() < 2 || self.couplings.iter().any(|g| !(*g > 0.0)) {
            return bad("scatter.couplings", "need at least two positive couplings");
        }
        Ok(())
    }
}

impl FreqSection {
    pub fn distribution(&self) -> Result<OutcomeDistribution, CliError> {
        owned("freq.probabilities", OutcomeDistribution::new(self.labels.clone(), self.probabilities.clone()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.distribution()?;
        if self.n == 0 {
            return bad("freq.n", "need at least one trial");
        }
        if self.samples == 0 {
            return bad("freq.samples", "need at least one record");
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad("freq.deltas", "each delta must lie in (0, 1)");
        }
        Ok(())
    }
}

impl CheckSection {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.suites.is_empty() || self.suites.iter().any(|s| !(1..=10).contains(s)) {
            return bad("check.suites", "suite ids lie in 1..=10");
        }
        Ok(())
    }
}

impl RunConfig {
    /// Validates the table the chosen command reads.
    pub fn validate(&self) -> Result<Command, CliError> {
        let cmd = self.command.ok_or_else(|| CliError::Config("command: no subcommand given".into()))?;
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        match cmd {
            Command::Kernel => self.kernel.validate()?,
            Command::Propagator => self.propagator.validate()?,
            Command::Twoslit => self.twoslit.slit_config().map(|_| ())?,
            Command::Scatter => self.scatter.validate()?,
            Command::Freq => self.freq.validate()?,
            Command::Check => self.check.validate()?,
        }
        Ok(cmd)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(self.command.map_or("run", Command::name)))
    }
}

/// Reads `path` (if any) and applies `key=value` overrides, values parsed
/// as TOML with a bare-string fallback.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| CliError::Config(format!("--set {o}: expected key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        set_path(&mut table, key.trim(), value)?;
    }
    RunConfig::deserialize(table).map_err(|e| CliError::Config(e.message().to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

//! Subcommand execution, artifact writing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use stpath::diagram::{defect_slope, emit_loop_integrand, enumerate_contractions, evaluate_tree_amplitude, unitarity_defect};
use stpath::freq::{
    chi_square_gof, expected_frequency, frequency_histogram, frequency_pmf, gaussian_tail, sample_histories, tail_mass, RNG_ALGORITHM,
};
use stpath::history::screen_profile;
use stpath::kernel::{evolve, residual_orders};
use stpath::oracle::propagator::feynman_closed_form;
use stpath::oracle::twoslit::{model_distribution, model_nulls};
use stpath::propagator::epsilon_extrapolate;
use stpath::spacetime::{minkowski_square, ComplexField, EventVector};
use stpath::C64;

use crate::config::{Command, RunConfig};
use crate::suites::{run_suite, SuiteReport};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub rng_algorithm: String,
    pub threads: usize,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
    /// Set by `check`: every suite's verdict.
    pub suites: Option<Vec<SuiteReport>>,
}

pub const MANIFEST: &str = "manifest.json";

/// Output directory that remembers what it wrote, so a failed run can
/// remove its partial output.
struct Sink {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<Artifact>,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Sink { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.written.push(Artifact { path: name.into(), sha256: hex_digest(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn discard(self) {
        for a in &self.written {
            let _ = fs::remove_file(self.dir.join(&a.path));
        }
        let _ = fs::remove_file(self.dir.join(MANIFEST));
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Thread count: config (already merged with `--threads`), then
/// `STPATH_THREADS`, then rayon's default.
pub fn thread_count(cfg: &RunConfig) -> Result<usize, CliError> {
    if let Some(t) = cfg.threads {
        return Ok(t);
    }
    match std::env::var("STPATH_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&t| t > 0).ok_or_else(|| CliError::Config(format!("STPATH_THREADS: not a positive integer: {v}"))),
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Validates, runs one subcommand in its own thread pool, writes artifacts
/// and the manifest. On any failure the partial output is removed. A
/// `check` whose suites fail still keeps its report and returns
/// [`CliError::Tolerance`].
pub fn run_experiment(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let cmd = cfg.validate()?;
    let threads = thread_count(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Io(e.to_string()))?;
    let start = Instant::now();
    let mut sink = Sink::open(&cfg.out_dir())?;
    let result = pool.install(|| match cmd {
        Command::Kernel => kernel(cfg, &mut sink).map(|_| None),
        Command::Propagator => propagator(cfg, &mut sink).map(|_| None),
        Command::Twoslit => twoslit(cfg, &mut sink).map(|_| None),
        Command::Scatter => scatter(cfg, &mut sink).map(|_| None),
        Command::Freq => freq(cfg, &mut sink).map(|_| None),
        Command::Check => check(cfg, &mut sink).map(Some),
    });
    let suites = match result {
        Ok(s) => s,
        Err(e) => {
            sink.discard();
            return Err(e);
        }
    };
    let manifest = RunManifest {
        tool: "stpath".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd,
        config: cfg.clone(),
        rng_algorithm: RNG_ALGORITHM.into(),
        threads,
        artifacts: sink.written.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        suites,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    if let Err(e) = fs::write(sink.dir.join(MANIFEST), text + "\n") {
        sink.discard();
        return Err(e.into());
    }
    if let Some(failed) = manifest.suites.as_ref().map(|s| s.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect::<Vec<_>>()) {
        if !failed.is_empty() {
            return Err(CliError::Tolerance(format!("suites failed: {}", failed.join(", "))));
        }
    }
    Ok(manifest)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

/// kernel.csv: evolved packet (`i0,i1,re,im`); residual.csv: `step,residual,order`.
fn kernel(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let k = &cfg.kernel;
    let grid = k.grid()?;
    let params = k.params()?;
    let psi = ComplexField::from_fn(grid.clone(), |c| {
        let r2: f64 = c.iter().map(|v| v * v).sum();
        C64::from_polar((-r2 / (2.0 * k.sigma * k.sigma)).exp(), k.carrier * c[1])
    })?;
    let out = evolve(&psi, k.lambda, &params)?;
    let mut buf = Vec::new();
    out.write_csv(&mut buf)?;
    sink.write("kernel.csv", &buf)?;
    let (res, orders) = residual_orders(&psi, k.lambda, &k.steps, &params)?;
    let rows = k.steps.iter().zip(&res).enumerate().map(|(i, (h, r))| {
        let o = if i == 0 { String::new() } else { format!("{:.6}", orders[i - 1]) };
        format!("{h:e},{r:e},{o}")
    });
    sink.write("residual.csv", &csv("step,residual,order", rows))?;
    sink.json("summary.json", &json!({ "grid": grid, "norm_ratio": out.l2_norm() / psi.l2_norm(), "residuals": res, "orders": orders }))
}

/// propagator.csv: `t,x...,interval,route,epsilon,re,im`; epsilon 0 rows are
/// extrapolations, route `bessel` is the closed form.
fn propagator(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let p = &cfg.propagator;
    let dims = p.points[0].len() - 1;
    let coords = ["x", "y", "z"][..dims].join(",");
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for pt in &p.points {
        let dx = EventVector::new(pt[0], pt[1..].to_vec());
        let s = minkowski_square(&dx);
        let lead = format!("{},{s:e}", pt.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
        for &route in &p.routes {
            let (vals, fit) = epsilon_extrapolate(&dx, p.mass, &p.epsilons, route)?;
            let name = serde_json::to_value(route).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            for (e, v) in p.epsilons.iter().zip(&vals) {
                rows.push(format!("{lead},{name},{e:e},{:e},{:e}", v.re, v.im));
            }
            rows.push(format!("{lead},{name},0,{:e},{:e}", fit.intercept.re, fit.intercept.im));
            fits.push(json!({ "point": pt, "route": name, "intercept": [fit.intercept.re, fit.intercept.im], "relative_residual": fit.relative_residual }));
        }
        if s.abs() > 1e-9 {
            let b = feynman_closed_form(&dx, p.mass)?;
            rows.push(format!("{lead},bessel,0,{:e},{:e}", b.re, b.im));
        }
    }
    sink.write("propagator.csv", &csv(&format!("t,{coords},interval,route,epsilon,re,im"), rows))?;
    sink.json("summary.json", &json!({ "mass": p.mass, "epsilons": p.epsilons, "extrapolations": fits }))
}

/// screen.csv: `center,interference,which_slit,slit0,slit1,model`.
fn twoslit(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let sc = cfg.twoslit.slit_config()?;
    let profile = screen_profile(&sc)?;
    let (inter, which) = (profile.distribution(false), profile.distribution(true));
    let (a, b) = (profile.single_slit(0), profile.single_slit(1));
    let model = model_distribution(&sc)?;
    let rows = (0..inter.centers.len()).map(|i| {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            inter.centers[i], inter.probabilities[i], which.probabilities[i], a.probabilities[i], b.probabilities[i], model[i]
        )
    });
    sink.write("screen.csv", &csv("center,interference,which_slit,slit0,slit1,model", rows))?;
    sink.json(
        "summary.json",
        &json!({
            "visibility": inter.visibility(cfg.twoslit.central),
            "which_slit_visibility": which.visibility(cfg.twoslit.central),
            "minima": inter.minima(),
            "model_nulls": model_nulls(&sc)?,
            "bin_width": sc.bin_width(),
        }),
    )
}

/// diagrams.csv: `order,index,symmetry_factor,loops,deltas,satisfied,re,im`;
/// defect.csv: `k,coupling,defect`. Loop integrands go to diagrams.json.
fn scatter(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let s = &cfg.scatter;
    let vertex = s.vertex()?;
    let legs = s.legs()?;
    let mut rows = Vec::new();
    let mut terms = Vec::new();
    for order in 0..=s.max_order {
        for (i, d) in enumerate_contractions(&legs, order, &vertex)?.iter().enumerate() {
            let t = if d.loop_count() == 0 { evaluate_tree_amplitude(d, &legs, &vertex, s.mass, s.epsilon)? } else { emit_loop_integrand(d, &legs, &vertex)? };
            let sat = t.conservation.iter().all(|c| c.satisfied);
            rows.push(format!(
                "{order},{i},{},{},{},{sat},{:e},{:e}",
                d.symmetry_factor,
                d.loop_count(),
                t.conservation.len(),
                t.prefactor.re,
                t.prefactor.im
            ));
            terms.push(json!({ "order": order, "index": i, "diagram": d, "term": t }));
        }
    }
    sink.write("diagrams.csv", &csv("order,index,symmetry_factor,loops,deltas,satisfied,re,im", rows))?;
    sink.json("diagrams.json", &json!(terms))?;

    let fock = s.fock();
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &k in &s.truncation_orders {
        for &g in &s.couplings {
            rows.push(format!("{k},{g},{:e}", unitarity_defect(k, &vertex.with_coupling(g), &fock)?));
        }
        let fit = defect_slope(k, &vertex, &fock, &s.couplings)?;
        slopes.push(json!({ "k": k, "slope": fit.slope, "r_squared": fit.r_squared }));
    }
    sink.write("defect.csv", &csv("k,coupling,defect", rows))?;
    sink.json("summary.json", &json!({ "fock_modes": fock.modes(), "fock_states": fock.basis().len(), "slopes": slopes }))
}

/// pmf.csv: `label,k,frequency,mass`; histogram.csv: `label,k,observed,expected`.
fn freq(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let f = &cfg.freq;
    let dist = f.distribution()?;
    let records = sample_histories(&dist, f.n as usize, f.samples, cfg.seed)?;
    let (mut pmf_rows, mut hist_rows, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (li, (label, &p)) in dist.labels.iter().zip(&dist.probabilities).enumerate() {
        let pmf = frequency_pmf(f.n, p)?;
        for (k, (fr, m)) in pmf.iter().enumerate() {
            pmf_rows.push(format!("{label},{k},{fr},{m:e}"));
        }
        let observed = frequency_histogram(&records, li, f.n as usize);
        for (k, (o, (_, m))) in observed.iter().zip(&pmf).enumerate() {
            hist_rows.push(format!("{label},{k},{o},{:e}", m * f.samples as f64));
        }
        let masses: Vec<f64> = pmf.iter().map(|x| x.1).collect();
        let chi = chi_square_gof(&observed, &masses).ok();
        let tails: Vec<_> = f
            .deltas
            .iter()
            .map(|&d| Ok(json!({ "delta": d, "exact": tail_mass(f.n, p, d)?, "gaussian": gaussian_tail(f.n, p, d) })))
            .collect::<stpath::Result<_>>()?;
        labels.push(json!({ "label": label, "probability": p, "mean_frequency": expected_frequency(f.n, p)?, "tails": tails, "chi_square": chi }));
    }
    sink.write("pmf.csv", &csv("label,k,frequency,mass", pmf_rows))?;
    sink.write("histogram.csv", &csv("label,k,observed,expected", hist_rows))?;
    sink.json("summary.json", &json!({ "n": f.n, "samples": f.samples, "seed": cfg.seed, "rng_algorithm": RNG_ALGORITHM, "labels": labels }))
}

/// check.csv: `id,name,passed,seconds,budget,detail`.
fn check(cfg: &RunConfig, sink: &mut Sink) -> Result<Vec<SuiteReport>, CliError> {
    let reports: Vec<SuiteReport> = cfg.check.suites.iter().map(|&id| run_suite(id)).collect();
    let rows = reports.iter().map(|r| {
        format!(
            "{},{},{},{:.3},{},\"{}\"",
            r.id,
            r.name,
            r.passed,
            r.seconds,
            r.budget.map_or(String::new(), |b| b.to_string()),
            r.detail.replace('"', "'")
        )
    });
    sink.write("check.csv", &csv("id,name,passed,seconds,budget,detail", rows))?;
    Ok(reports)
}

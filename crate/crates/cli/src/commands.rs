//! The harness commands. Each `run_*` computes a report; each `write_*`
//! persists one under the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fxdiff_core::{
    measure_convergence_time, simulate_from_error, synthesize_gains, DecayCertificate, Error,
    GainLadder, IntegrationSettings, NoiseSpec, SignalSpec, SynthesisReport, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Design, ExperimentConfig};
use crate::error::HarnessError;
use crate::output::{num, opt_num, write_table, write_text, Table};

/// Builds the design, running gain synthesis first when requested.
pub fn resolve_design(
    cfg: &ExperimentConfig,
) -> Result<(Design, Option<SynthesisReport>), HarnessError> {
    if cfg.differentiator.synthesize {
        let report = run_synth_gains(cfg)?;
        let design = cfg.design_with_ladder(report.ladder.clone())?;
        Ok((design, Some(report)))
    } else {
        Ok((cfg.design()?, None))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<(), HarnessError> {
    if v.len() != n {
        return Err(HarnessError::Validation(format!(
            "{name}: expected {n} entries, got {}",
            v.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub e0: Vec<f64>,
    pub trajectory: Trajectory,
    pub convergence_time: Option<f64>,
    pub threshold: f64,
    pub digest: String,
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulateReport, HarnessError> {
    let (design, _) = resolve_design(cfg)?;
    let n = cfg.differentiator.order;
    let e0 = cfg
        .simulation
        .initial_error
        .clone()
        .unwrap_or_else(|| vec![0.0; n]);
    check_len("simulation.initial_error", &e0, n)?;
    let lf = design.lyapunov()?;
    let trajectory = simulate_from_error(
        &design.differentiator,
        &e0,
        &cfg.signal,
        &cfg.integration()?,
        Some(&lf),
    )?;
    let convergence_time = measure_convergence_time(&trajectory, cfg.simulation.threshold);
    Ok(SimulateReport {
        e0,
        trajectory,
        convergence_time,
        threshold: cfg.simulation.threshold,
        digest: cfg.digest(),
    })
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let n = traj.samples.first().map_or(0, |s| s.e.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("e_{i}")));
    header.push("norm_e".into());
    header.push("V".into());
    let mut t = Table::new(header);
    for s in &traj.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.e.iter().map(|v| num(*v)));
        row.push(num(s.norm_e));
        row.push(opt_num(s.v));
        t.push(row);
    }
    t
}

pub fn write_simulate(r: &SimulateReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let traj = write_table(
        dir,
        "trajectory.csv",
        &trajectory_table(&r.trajectory),
        &r.digest,
    )?;
    let last = r.trajectory.final_sample();
    let mut s = String::new();
    let _ = writeln!(s, "config_digest: {}", r.digest);
    let _ = writeln!(s, "initial_error: {:?}", r.e0);
    let _ = writeln!(s, "threshold: {}", r.threshold);
    let _ = writeln!(s, "convergence_time: {}", fmt_opt(r.convergence_time));
    if let Some(l) = last {
        let _ = writeln!(s, "final_time: {}", l.t);
        let _ = writeln!(s, "final_error: {:?}", l.e);
    }
    let summary = write_text(dir, "simulate_summary.txt", &s)?;
    Ok(vec![traj, summary])
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

// ---------------------------------------------------------------- sweep-ic

#[derive(Debug, Clone, PartialEq)]
pub struct IcCase {
    pub label: String,
    pub e0: Vec<f64>,
}

/// Scaled family, then explicit list, then seeded random draws.
pub fn ic_cases(cfg: &ExperimentConfig) -> Result<Vec<IcCase>, HarnessError> {
    let n = cfg.differentiator.order;
    let sw = &cfg.sweep;
    let mut out = Vec::new();
    if !sw.ic_exponents.is_empty() {
        let base = sw.ic_base.clone().ok_or_else(|| {
            HarnessError::Validation("sweep.ic_base: required with ic_exponents".into())
        })?;
        check_len("sweep.ic_base", &base, n)?;
        for p in &sw.ic_exponents {
            let s = 10f64.powi(*p);
            out.push(IcCase {
                label: format!("p={p}"),
                e0: base.iter().map(|b| b * s).collect(),
            });
        }
    }
    for (k, e0) in sw.initial_errors.iter().enumerate() {
        check_len("sweep.initial_errors", e0, n)?;
        out.push(IcCase {
            label: format!("explicit{k}"),
            e0: e0.clone(),
        });
    }
    if sw.random_count > 0 {
        let [lo, hi] = sw.random_log10_range;
        if !(lo <= hi) {
            return Err(HarnessError::Validation(
                "sweep.random_log10_range: lower end exceeds upper end".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for k in 0..sw.random_count {
            let e0 = (0..n)
                .map(|_| {
                    let mag = 10f64.powf(rng.random_range(lo..=hi));
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            out.push(IcCase {
                label: format!("random{k}"),
                e0,
            });
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Validation(
            "sweep: no initial conditions (set ic_exponents, initial_errors or random_count)"
                .into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub label: String,
    pub e0: Vec<f64>,
    pub norm_e0: f64,
    pub convergence_time: Option<f64>,
    pub final_error: Vec<f64>,
    /// `ok` or a failure description.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SweepIcReport {
    pub rows: Vec<SweepRow>,
    pub tbar: Option<f64>,
    pub threshold: f64,
    pub digest: String,
}

impl SweepIcReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.convergence_time.is_some())
    }
}

/// One simulation of a sweep; failures become the row status.
pub fn run_case(
    design: &Design,
    signal: &SignalSpec,
    settings: &IntegrationSettings,
    threshold: f64,
    index: usize,
    case: &IcCase,
) -> SweepRow {
    let n = case.e0.len();
    let (convergence_time, final_error, status) =
        match simulate_from_error(&design.differentiator, &case.e0, signal, settings, None) {
            Ok(tr) => (
                measure_convergence_time(&tr, threshold),
                tr.final_sample().map(|s| s.e.clone()).unwrap_or_default(),
                "ok".to_string(),
            ),
            Err(e) => (None, vec![f64::NAN; n], e.to_string()),
        };
    SweepRow {
        index,
        label: case.label.clone(),
        norm_e0: norm(&case.e0),
        e0: case.e0.clone(),
        convergence_time,
        final_error,
        status,
    }
}

/// Runs one simulation per initial condition. With `certify`, the rows also
/// carry the fixed-time bound when the design can be certified.
pub fn run_sweep_ic(cfg: &ExperimentConfig, certify: bool) -> Result<SweepIcReport, HarnessError> {
    let (design, _) = resolve_design(cfg)?;
    let cases = ic_cases(cfg)?;
    let settings = cfg.integration()?;
    let threshold = cfg.simulation.threshold;
    let rows: Vec<SweepRow> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_case(&design, &cfg.signal, &settings, threshold, i, c))
        .collect();
    let tbar = if certify {
        certify_design(&design, cfg).ok().and_then(|c| c.tbar)
    } else {
        None
    };
    Ok(SweepIcReport {
        rows,
        tbar,
        threshold,
        digest: cfg.digest(),
    })
}

pub fn write_sweep_ic(r: &SweepIcReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let n = r.rows.first().map_or(0, |row| row.e0.len());
    let mut header: Vec<String> = vec!["index".into(), "label".into(), "norm_e0".into()];
    header.push("convergence_time".into());
    header.extend((1..=n).map(|i| format!("final_e_{i}")));
    header.push("tbar".into());
    header.push("status".into());
    let mut t = Table::new(header);
    for row in &r.rows {
        let mut cells = vec![row.index.to_string(), row.label.clone(), num(row.norm_e0)];
        cells.push(opt_num(row.convergence_time));
        cells.extend(row.final_error.iter().map(|v| num(*v)));
        cells.push(opt_num(r.tbar));
        cells.push(format!("\"{}\"", row.status.replace('"', "'")));
        t.push(cells);
    }
    let table = write_table(dir, "sweep_ic.csv", &t, &r.digest)?;
    let mut s = String::new();
    let _ = writeln!(s, "config_digest: {}", r.digest);
    let _ = writeln!(s, "threshold: {}", r.threshold);
    let _ = writeln!(s, "runs: {}", r.rows.len());
    let _ = writeln!(
        s,
        "converged: {}",
        r.rows
            .iter()
            .filter(|x| x.convergence_time.is_some())
            .count()
    );
    let _ = writeln!(s, "tbar: {}", fmt_opt(r.tbar));
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{} |e0| = {:.6e} T = {} ({})",
            row.label,
            row.norm_e0,
            fmt_opt(row.convergence_time),
            row.status
        );
    }
    let summary = write_text(dir, "sweep_ic_summary.txt", &s)?;
    Ok(vec![table, summary])
}

// ------------------------------------------------------------- sweep-noise

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub epsilon: f64,
    /// Steady-state `max |e_i|` per component.
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub component: usize,
    pub slope: f64,
    pub expected: f64,
    pub intercept: f64,
    /// Empirical accuracy constant `10^intercept / delta^((i-1)/n)`.
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SweepNoiseReport {
    pub rows: Vec<NoiseRow>,
    pub fits: Vec<SlopeFit>,
    pub window_start: f64,
    pub digest: String,
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Minimum fraction of the horizon left for steady-state statistics.
pub const MIN_WINDOW_FRACTION: f64 = 0.2;

pub fn run_sweep_noise(cfg: &ExperimentConfig) -> Result<SweepNoiseReport, HarnessError> {
    if cfg.differentiator.d0 != -1.0 {
        return Err(HarnessError::Validation(
            "differentiator.d0: noise sweeps require d0 = -1".into(),
        ));
    }
    let (design, _) = resolve_design(cfg)?;
    let n = cfg.differentiator.order;
    let sw = &cfg.sweep;
    let positive: Vec<f64> = sw
        .noise_epsilons
        .iter()
        .copied()
        .filter(|e| *e > 0.0)
        .collect();
    if sw.noise_epsilons.iter().any(|e| !(*e >= 0.0)) {
        return Err(HarnessError::Validation(
            "sweep.noise_epsilons: entries must be nonnegative".into(),
        ));
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    if positive.len() < 2 || (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(HarnessError::Validation(
            "sweep.noise_epsilons: positive values must span at least 3 decades".into(),
        ));
    }
    let settings = cfg.integration()?;
    let e0 = cfg
        .simulation
        .initial_error
        .clone()
        .unwrap_or_else(|| vec![0.0; n]);
    check_len("simulation.initial_error", &e0, n)?;

    let mut clean = cfg.signal.clone();
    clean.noise = None;
    let baseline = simulate_from_error(&design.differentiator, &e0, &clean, &settings, None)?;
    let tc = measure_convergence_time(&baseline, cfg.simulation.threshold).ok_or_else(|| {
        HarnessError::Convergence("noise-free run did not converge within the horizon".into())
    })?;
    let horizon = settings.t_final;
    let window_start = tc.max(horizon * (1.0 - sw.steady_window));
    if horizon - window_start < MIN_WINDOW_FRACTION * horizon {
        return Err(HarnessError::Validation(format!(
            "post-convergence window [{window_start}, {horizon}] is shorter than {}% of the horizon",
            MIN_WINDOW_FRACTION * 100.0
        )));
    }

    let rows: Vec<Result<NoiseRow, HarnessError>> = sw
        .noise_epsilons
        .par_iter()
        .map(|&eps| {
            let mut nz = NoiseSpec::uniform(eps, cfg.seed);
            nz.kind = sw.noise_kind;
            nz.frequency = sw.noise_frequency;
            let signal = clean.clone().with_noise(nz);
            let tr = simulate_from_error(&design.differentiator, &e0, &signal, &settings, None)?;
            Ok(NoiseRow {
                epsilon: eps,
                amplitudes: tr.max_abs_error_after(window_start),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let fitted: Vec<&NoiseRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    let x: Vec<f64> = fitted.iter().map(|r| r.epsilon.log10()).collect();
    let delta = cfg.signal.delta;
    let fits = (0..n)
        .map(|i| {
            let y: Vec<f64> = fitted.iter().map(|r| r.amplitudes[i].log10()).collect();
            let (slope, intercept) = linear_fit(&x, &y);
            let dscale = if delta > 0.0 {
                delta.powf(i as f64 / n as f64)
            } else {
                1.0
            };
            SlopeFit {
                component: i + 1,
                slope,
                expected: (n - i) as f64 / n as f64,
                intercept,
                lambda: 10f64.powf(intercept) / dscale,
            }
        })
        .collect();
    Ok(SweepNoiseReport {
        rows,
        fits,
        window_start,
        digest: cfg.digest(),
    })
}

pub fn write_sweep_noise(r: &SweepNoiseReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let n = r.fits.len();
    let mut header = vec!["epsilon".to_string(), "log10_epsilon".to_string()];
    header.extend((1..=n).map(|i| format!("amp_e_{i}")));
    header.extend((1..=n).map(|i| format!("log10_amp_e_{i}")));
    let mut t = Table::new(header);
    for row in &r.rows {
        let mut cells = vec![num(row.epsilon), num(row.epsilon.log10())];
        cells.extend(row.amplitudes.iter().map(|v| num(*v)));
        cells.extend(row.amplitudes.iter().map(|v| num(v.log10())));
        t.push(cells);
    }
    let table = write_table(dir, "sweep_noise.csv", &t, &r.digest)?;
    let mut f = Table::new([
        "component",
        "slope",
        "expected_slope",
        "intercept",
        "lambda_empirical",
    ]);
    for fit in &r.fits {
        f.push(vec![
            fit.component.to_string(),
            num(fit.slope),
            num(fit.expected),
            num(fit.intercept),
            num(fit.lambda),
        ]);
    }
    let fits = write_table(dir, "noise_fit.csv", &f, &r.digest)?;
    let mut s = String::new();
    let _ = writeln!(s, "config_digest: {}", r.digest);
    let _ = writeln!(s, "steady-state window starts at t = {}", r.window_start);
    let _ = writeln!(s, "zero-noise rows are excluded from the fit");
    for fit in &r.fits {
        let _ = writeln!(
            s,
            "e_{}: slope {:.4} (expected {:.4}), empirical lambda {:.4e}",
            fit.component, fit.slope, fit.expected, fit.lambda
        );
    }
    let summary = write_text(dir, "sweep_noise_summary.txt", &s)?;
    Ok(vec![table, fits, summary])
}

// ----------------------------------------------------------------- certify

#[derive(Debug, Clone)]
pub struct CertifyReport {
    pub p0: f64,
    pub pinf: f64,
    pub delta: f64,
    pub ladder: GainLadder,
    pub synthesis: Option<SynthesisReport>,
    pub certificate: DecayCertificate,
    pub digest: String,
}

fn certify_design(
    design: &Design,
    cfg: &ExperimentConfig,
) -> Result<DecayCertificate, HarnessError> {
    let lf = design.lyapunov()?;
    lf.estimate_eta(design.ladder(), design.delta, &cfg.certify_settings())
        .map_err(|e| match e {
            Error::NotCertified { z, w_star, violations } => HarnessError::Certification(format!(
                "W* >= 0 at {violations} samples; worst relative to V^a + V^b: W* = {w_star:e} at z = {z:?}"
            )),
            other => other.into(),
        })
}

pub fn run_certify(cfg: &ExperimentConfig) -> Result<CertifyReport, HarnessError> {
    let (design, synthesis) = resolve_design(cfg)?;
    let certificate = certify_design(&design, cfg)?;
    Ok(CertifyReport {
        p0: design.params.p0,
        pinf: design.params.pinf,
        delta: design.delta,
        ladder: design.ladder().clone(),
        synthesis,
        certificate,
        digest: cfg.digest(),
    })
}

pub fn write_certify(r: &CertifyReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let c = &r.certificate;
    let mut t = Table::new(["key", "value"]);
    let mut kv = |k: &str, v: String| t.push(vec![k.to_string(), v]);
    kv("p0", num(r.p0));
    kv("pinf", num(r.pinf));
    kv("delta", num(r.delta));
    for (i, k) in r.ladder.k.iter().enumerate() {
        kv(&format!("k_{}", i + 1), num(*k));
    }
    kv("eta0", num(c.eta0));
    kv("etainf", num(c.etainf));
    kv("tbar", opt_num(c.tbar));
    kv("min_margin", num(c.min_margin));
    kv("max_w_star", num(c.max_w_star));
    kv("sample_count", c.sample_count.to_string());
    kv("skipped", c.skipped.to_string());
    let table = write_table(dir, "certificate.csv", &t, &r.digest)?;
    let mut s = String::new();
    let _ = writeln!(s, "status: certified");
    let _ = writeln!(s, "config_digest: {}", r.digest);
    let _ = writeln!(s, "ladder k = {:?}", r.ladder.k);
    let _ = writeln!(s, "eta0 = etainf = {:.6e}", c.eta0);
    let _ = writeln!(s, "fixed-time bound: {}", fmt_opt(c.tbar));
    let _ = writeln!(s, "samples: {} used, {} skipped", c.sample_count, c.skipped);
    let _ = writeln!(
        s,
        "min margin {:.6e}, max W* {:.6e}",
        c.min_margin, c.max_w_star
    );
    let summary = write_text(dir, "certificate.txt", &s)?;
    Ok(vec![table, summary])
}

pub fn write_certify_failure(
    err: &HarnessError,
    digest: &str,
    dir: &Path,
) -> Result<PathBuf, HarnessError> {
    write_text(
        dir,
        "certificate.txt",
        &format!("status: failed\nconfig_digest: {digest}\n{err}\n"),
    )
}

// ------------------------------------------------------------- synth-gains

/// Synthesizes a ladder for the configured (unscaled) internal gains.
pub fn run_synth_gains(cfg: &ExperimentConfig) -> Result<SynthesisReport, HarnessError> {
    let degrees = cfg.degrees()?;
    let gains = cfg.internal_gains()?;
    let params = cfg.lyapunov_params(&degrees)?;
    let injection = fxdiff_core::Injection::new(degrees, gains)?;
    Ok(synthesize_gains(
        &injection,
        cfg.certified_delta(),
        &params,
        &cfg.synthesis_settings(),
    )?)
}

pub fn write_synth_gains(
    r: &SynthesisReport,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let digest = &cfg.digest();
    let kappa_n = cfg.internal_gains()?.kappa[r.ladder.len() - 1];
    let mut t = Table::new(["index", "k", "ktilde", "omega", "samples", "skipped"]);
    let n = r.ladder.len();
    for i in 0..n {
        let stage = r.stages.iter().find(|s| s.index == i + 1);
        t.push(vec![
            (i + 1).to_string(),
            num(r.ladder.k[i]),
            num(r.ladder.ktilde[i]),
            opt_num(stage.map(|s| s.omega)),
            stage.map(|s| s.samples.to_string()).unwrap_or_default(),
            stage.map(|s| s.skipped.to_string()).unwrap_or_default(),
        ]);
    }
    let table = write_table(dir, "gains.csv", &t, digest)?;
    let c = &r.certificate;
    let mut s = String::new();
    let _ = writeln!(s, "config_digest: {digest}");
    let _ = writeln!(s, "delta: {}", r.delta);
    let _ = writeln!(s, "k = {:?}", r.ladder.k);
    let _ = writeln!(s, "ktilde = {:?}", r.ladder.ktilde);
    let _ = writeln!(
        s,
        "margin k_n kappa_n / delta: {}",
        if r.delta > 0.0 {
            (r.ladder.k[r.ladder.len() - 1] * kappa_n / r.delta).to_string()
        } else {
            "n/a".into()
        }
    );
    let _ = writeln!(s, "eta = {:.6e}, tbar = {}", c.eta0, fmt_opt(c.tbar));
    let _ = writeln!(
        s,
        "certificate samples: {}, min margin {:.6e}",
        c.sample_count, c.min_margin
    );
    let summary = write_text(dir, "gains_summary.txt", &s)?;
    Ok(vec![table, summary])
}

// --------------------------------------------------------------- iss-probe

#[derive(Debug, Clone, PartialEq)]
pub struct IssSegment {
    pub segment: usize,
    pub epsilon: f64,
    /// `max |e|` over the second half of the segment.
    pub envelope: f64,
}

#[derive(Debug, Clone)]
pub struct IssReport {
    pub zero_input_radius: f64,
    pub persistent_epsilon: f64,
    pub persistent_radius: f64,
    pub persistent_entry_time: Option<f64>,
    pub segments: Vec<IssSegment>,
    pub bounded_ok: bool,
    pub vanishing_ok: bool,
    pub digest: String,
}

fn tail_radius(tr: &Trajectory, from: f64) -> f64 {
    tr.samples
        .iter()
        .filter(|s| s.t >= from)
        .map(|s| s.norm_e)
        .fold(0.0, f64::max)
}

pub fn run_iss_probe(cfg: &ExperimentConfig) -> Result<IssReport, HarnessError> {
    let (design, _) = resolve_design(cfg)?;
    let n = cfg.differentiator.order;
    let e0 = cfg
        .simulation
        .initial_error
        .clone()
        .unwrap_or_else(|| vec![0.0; n]);
    check_len("simulation.initial_error", &e0, n)?;
    let iss = &cfg.iss;
    if !(iss.epsilon >= 0.0 && iss.period > 0.0 && iss.factor > 0.0 && iss.factor < 1.0) {
        return Err(HarnessError::Validation(
            "iss: need epsilon >= 0, period > 0 and 0 < factor < 1".into(),
        ));
    }
    if iss.segments < 2 {
        return Err(HarnessError::Validation(
            "iss.segments: need at least 2".into(),
        ));
    }
    let settings = cfg.integration()?;
    let horizon = settings.t_final;
    let window = horizon * (1.0 - cfg.sweep.steady_window);
    let mut clean = cfg.signal.clone();
    clean.noise = None;
    let noisy = |nz: NoiseSpec| {
        let mut nz = nz;
        nz.kind = cfg.sweep.noise_kind;
        nz.frequency = cfg.sweep.noise_frequency;
        clean.clone().with_noise(nz)
    };

    let zero = simulate_from_error(&design.differentiator, &e0, &clean, &settings, None)?;
    let zero_input_radius = tail_radius(&zero, window);

    let persistent = simulate_from_error(
        &design.differentiator,
        &e0,
        &noisy(NoiseSpec::uniform(iss.epsilon, cfg.seed)),
        &settings,
        None,
    )?;
    let persistent_radius = tail_radius(&persistent, window);
    let persistent_entry_time = measure_convergence_time(&persistent, persistent_radius);
    let bounded_ok =
        persistent_radius.is_finite() && persistent_entry_time.is_some_and(|t| t <= window);

    let schedule_settings = IntegrationSettings::new(
        settings.dt,
        iss.period * iss.segments as f64,
        settings.record_every,
    );
    let decaying =
        noisy(NoiseSpec::uniform(iss.epsilon, cfg.seed).with_step_decay(iss.period, iss.factor));
    let sched = simulate_from_error(
        &design.differentiator,
        &e0,
        &decaying,
        &schedule_settings,
        None,
    )?;
    let segments: Vec<IssSegment> = (0..iss.segments)
        .map(|k| {
            let lo = (k as f64 + 0.5) * iss.period;
            let hi = (k + 1) as f64 * iss.period;
            let envelope = sched
                .samples
                .iter()
                .filter(|s| s.t >= lo && s.t <= hi)
                .map(|s| s.norm_e)
                .fold(0.0, f64::max);
            IssSegment {
                segment: k,
                epsilon: iss.epsilon * iss.factor.powi(k as i32),
                envelope,
            }
        })
        .collect();
    // Once at the zero-input floor the envelope cannot shrink further.
    let floor = 2.0 * zero_input_radius;
    let vanishing_ok = segments
        .windows(2)
        .all(|w| w[1].envelope < w[0].envelope || w[1].envelope <= floor);

    Ok(IssReport {
        zero_input_radius,
        persistent_epsilon: iss.epsilon,
        persistent_radius,
        persistent_entry_time,
        segments,
        bounded_ok,
        vanishing_ok,
        digest: cfg.digest(),
    })
}

pub fn write_iss_probe(r: &IssReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut t = Table::new(["segment", "epsilon", "envelope"]);
    for s in &r.segments {
        t.push(vec![s.segment.to_string(), num(s.epsilon), num(s.envelope)]);
    }
    let table = write_table(dir, "iss_schedule.csv", &t, &r.digest)?;
    let mut s = String::new();
    let _ = writeln!(s, "config_digest: {}", r.digest);
    let _ = writeln!(s, "zero-input ball radius: {:.6e}", r.zero_input_radius);
    let _ = writeln!(
        s,
        "persistent noise {:.3e}: ball radius {:.6e}, entered at t = {}",
        r.persistent_epsilon,
        r.persistent_radius,
        fmt_opt(r.persistent_entry_time)
    );
    let _ = writeln!(s, "ultimate boundedness: {}", pass(r.bounded_ok));
    let _ = writeln!(s, "vanishing-input decay: {}", pass(r.vanishing_ok));
    let summary = write_text(dir, "iss_summary.txt", &s)?;
    Ok(vec![table, summary])
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 / 3.0 * v - 1.5).collect();
        let (m, b) = linear_fit(&x, &y);
        assert!((m - 2.0 / 3.0).abs() < 1e-14 && (b + 1.5).abs() < 1e-14);
    }

    #[test]
    fn ic_family_and_random_draws() {
        let mut cfg = ExperimentConfig::reference();
        cfg.sweep.random_count = 3;
        let cases = ic_cases(&cfg).unwrap();
        assert_eq!(cases.len(), 12);
        assert_eq!(cases[1].e0, vec![1.0, -5.0, 1.0]);
        assert_eq!(cases[8].e0, vec![1e7, -5e7, 1e7]);
        assert_eq!(cases, ic_cases(&cfg).unwrap());
        for c in &cases[9..] {
            assert!(c.e0.iter().all(|v| v.abs() >= 0.1 && v.abs() <= 10.0));
        }
    }

    #[test]
    fn zero_initial_error_converges_at_zero() {
        let mut cfg = ExperimentConfig::reference();
        cfg.simulation.initial_error = Some(vec![0.0; 3]);
        cfg.simulation.t_final = 0.5;
        // Forward Euler tracks an affine signal exactly.
        cfg.signal = SignalSpec::new(
            fxdiff_core::BaseSignal::Polynomial {
                coefficients: vec![0.3, -1.2],
            },
            0.0,
        );
        let r = run_simulate(&cfg).unwrap();
        assert_eq!(r.convergence_time, Some(0.0));
    }
}

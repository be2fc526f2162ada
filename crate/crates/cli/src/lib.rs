//! Subcommands of the `drnet` binary.
//!
//! Each command takes the network source and a [`RunConfig`] and returns an
//! [`Outcome`] holding stdout text, stderr text, files to write and the exit
//! code, so the binary stays a thin shell and tests can drive commands
//! directly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drnet_core::dranalyzer::{verify_dr, Verdict};
use drnet_core::netparse::{parse_document, parse_network, ParsedNetwork};
use drnet_core::poissondist::{compare_ensemble, compare_truncated, covering_bound, DEFAULT_SIGNIFICANCE};
use drnet_core::stochastic::{
    run_ensemble, truncated_cme, CmeInitial, CmeOptions, EnsembleConfig, StochasticError,
    DEFAULT_EVENT_CAP, DEFAULT_LEAK_BUDGET,
};
use drnet_core::{DrOptions, DrReport, EnsembleSummary, NetworkSource, ProductPoissonLaw, ReactionNetwork};
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_DR_FAILS: i32 = 2;
pub const EXIT_OVERFLOW: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub time: f64,
    pub dt: f64,
    pub grid_points: usize,
    pub replicates: usize,
    pub seed: u64,
    pub tol: f64,
    pub box_bounds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub emit_gnuplot: bool,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            time: 2.0,
            dt: 1e-3,
            grid_points: 201,
            replicates: 100_000,
            seed: 42,
            tol: 1e-9,
            box_bounds: None,
            out: None,
            format: Format::Json,
            emit_gnuplot: false,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.replicates < 1 {
            return Err("--replicates must be at least 1".into());
        }
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err("--time must be a finite nonnegative number".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err("--dt must be positive".into());
        }
        if !(self.tol > 0.0) {
            return Err("--tol must be positive".into());
        }
        if self.grid_points < 2 {
            return Err("the time grid needs at least 2 points".into());
        }
        Ok(())
    }

    fn dr_options(&self) -> DrOptions {
        let mut opts = DrOptions {
            horizon: self.time,
            grid_points: self.grid_points,
            tolerance: self.tol,
            ..DrOptions::default()
        };
        opts.ode.dt = self.dt;
        opts
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub files: Vec<(PathBuf, String)>,
}

impl Outcome {
    fn input_error(msg: impl Into<String>) -> Self {
        let mut stderr = msg.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        Outcome {
            code: EXIT_INPUT,
            stderr,
            ..Outcome::default()
        }
    }

    /// Writes the produced files.
    pub fn write_files(&self) -> std::io::Result<()> {
        for (path, contents) in &self.files {
            std::fs::write(path, contents)?;
        }
        Ok(())
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn diagnostics_text(src: &NetworkSource, diags: &[drnet_core::ParseDiagnostic]) -> String {
    diags.iter().map(|d| format!("{}: {d}\n", src.origin)).collect()
}

fn load(src: &NetworkSource) -> Result<(ParsedNetwork, String), Outcome> {
    match parse_network(src) {
        Ok(p) => {
            let warnings = diagnostics_text(src, &p.warnings);
            Ok((p, warnings))
        }
        Err(d) => Err(Outcome::input_error(diagnostics_text(src, &d))),
    }
}

/// Puts `body` on stdout, or into the `--out` file when one is given.
fn emit(mut outcome: Outcome, cfg: &RunConfig, body: String) -> Outcome {
    match &cfg.out {
        Some(path) => outcome.files.push((path.clone(), body)),
        None => outcome.stdout = body,
    }
    outcome
}

/// Structural summary of a network.
pub fn cmd_parse(src: &NetworkSource, cfg: &RunConfig) -> Outcome {
    let doc = match parse_document(src) {
        Ok(doc) => doc,
        Err(d) => return Outcome::input_error(diagnostics_text(src, &d)),
    };
    let net = &doc.network;
    let name = |i: usize| net.format_complex(&net.complexes()[i]);
    let mut report = json!({
        "species": net.species(),
        "complexes": (0..net.complexes().len())
            .map(|i| json!({"complex": name(i), "order": net.complexes()[i].order()}))
            .collect::<Vec<_>>(),
        "reactions": net.reactions().iter().map(|r| json!({
            "source": net.format_complex(&r.source),
            "product": net.format_complex(&r.product),
            "rate": r.rate,
        })).collect::<Vec<_>>(),
        "linkageClasses": net.linkage_classes().into_iter()
            .map(|c| c.into_iter().map(name).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "weaklyReversible": net.is_weakly_reversible(),
        "order": net.order(),
    });
    if let Some(init) = &doc.initial {
        let map: serde_json::Map<String, Value> = net
            .species()
            .iter()
            .zip(&init.values)
            .map(|(s, &v)| (s.clone(), json!(v)))
            .collect();
        report["initial"] = Value::Object(map);
    }
    let outcome = Outcome {
        stderr: diagnostics_text(src, &doc.warnings),
        ..Outcome::default()
    };
    emit(outcome, cfg, pretty(&report))
}

fn analyze_report(report: &DrReport, c0: &[f64], species: &[String]) -> Value {
    let mut out = serde_json::to_value(report.to_json()).expect("serializable report");
    if report.verdict.is_product_form() {
        if let Some(sys) = &report.linear_system {
            let mut closed = serde_json::to_value(sys.to_json()).expect("serializable system");
            closed["c0"] = json!(c0);
            out["closedForm"] = closed;
        }
    }
    if let Some(traj) = &report.trajectory {
        let stride = (traj.len() / 20).max(1);
        let mut samples: Vec<Value> = traj
            .grid
            .iter()
            .zip(&traj.states)
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || i + 1 == traj.len())
            .map(|(_, (t, c))| json!({"t": t, "c": c}))
            .collect();
        samples.dedup();
        out["species"] = json!(species);
        out["samples"] = Value::Array(samples);
    }
    out
}

/// DR verdict and, when it holds, the closed-form means.
pub fn cmd_analyze(src: &NetworkSource, cfg: &RunConfig) -> Outcome {
    if let Err(e) = cfg.validate() {
        return Outcome::input_error(e);
    }
    let (parsed, warnings) = match load(src) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let net = &parsed.network;
    let c0 = &parsed.initial.values;
    let report = match verify_dr(net, c0, &cfg.dr_options()) {
        Ok(r) => r,
        Err(e) => return Outcome::input_error(format!("{}: {e}\n", src.origin)),
    };
    let code = if report.verdict.is_product_form() {
        EXIT_OK
    } else {
        EXIT_DR_FAILS
    };
    let body = match cfg.format {
        Format::Json => pretty(&analyze_report(&report, c0, net.species())),
        Format::Csv => report
            .trajectory
            .as_ref()
            .map(|t| t.to_csv(net.species()))
            .unwrap_or_default(),
    };
    let outcome = Outcome {
        code,
        stderr: warnings,
        ..Outcome::default()
    };
    emit(outcome, cfg, body)
}

fn ensemble(net: &ReactionNetwork, c0: &[f64], cfg: &RunConfig) -> Result<EnsembleSummary, Outcome> {
    let ecfg = EnsembleConfig {
        replicates: cfg.replicates,
        horizon: cfg.time,
        seed: cfg.seed,
        workers: cfg.workers,
        event_cap: DEFAULT_EVENT_CAP,
    };
    run_ensemble(net, c0, &ecfg).map_err(|e| Outcome {
        code: match e {
            StochasticError::EventOverflow { .. } => EXIT_OVERFLOW,
            _ => EXIT_INPUT,
        },
        stderr: format!("{e}\n"),
        ..Outcome::default()
    })
}

fn prefix_for(src: &NetworkSource, cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        let stem = Path::new(&src.origin)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.starts_with('<'))
            .unwrap_or_else(|| "drnet".to_string());
        PathBuf::from(stem)
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn combined_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("species,count,frequency\n");
    for i in 0..summary.species.len() {
        out.extend(summary.histogram_csv(i).lines().skip(1).map(|l| format!("{l}\n")));
    }
    out
}

fn gnuplot_script(prefix: &Path, summary: &EnsembleSummary, means: &[f64]) -> String {
    let base = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut gp = String::new();
    let _ = writeln!(gp, "set datafile separator ','");
    let _ = writeln!(gp, "set key top right");
    let _ = writeln!(gp, "set style fill solid 0.4");
    let _ = writeln!(gp, "set xlabel 'count'");
    let _ = writeln!(gp, "set ylabel 'probability'");
    let _ = writeln!(gp, "poisson(k, m) = exp(-m + k * log(m) - lgamma(k + 1))");
    let _ = writeln!(gp, "N = {}", summary.replicates);
    for (s, m) in summary.species.iter().zip(means) {
        let lo = s.histogram.keys().next().copied().unwrap_or(0);
        let hi = s.histogram.keys().next_back().copied().unwrap_or(0);
        let _ = writeln!(gp, "\nset terminal pngcairo size 800,500");
        let _ = writeln!(gp, "set output '{base}.{}.png'", s.name);
        let _ = writeln!(gp, "set title '{} at T = {}'", s.name, summary.horizon);
        let _ = writeln!(gp, "set xrange [{}:{}]", lo.saturating_sub(1), hi + 1);
        let _ = writeln!(
            gp,
            "plot '{base}.{}.csv' every ::1 using 2:($3 / N) with boxes title 'empirical', \\\n     \
             [{lo}:{hi}] '+' using (floor($1)):(poisson(floor($1), {m:e})) with linespoints pt 7 title 'Poisson({m:.6})'",
            s.name
        );
    }
    gp
}

/// Ensemble summary plus per-species histogram files.
pub fn cmd_simulate(src: &NetworkSource, cfg: &RunConfig) -> Outcome {
    if let Err(e) = cfg.validate() {
        return Outcome::input_error(e);
    }
    let (parsed, warnings) = match load(src) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let net = &parsed.network;
    let c0 = &parsed.initial.values;
    let summary = match ensemble(net, c0, cfg) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let prefix = prefix_for(src, cfg);
    let json = pretty(&summary.to_json());
    let mut files = vec![(with_suffix(&prefix, ".json"), json.clone())];
    for (i, s) in summary.species.iter().enumerate() {
        files.push((with_suffix(&prefix, &format!(".{}.csv", s.name)), summary.histogram_csv(i)));
    }
    let mut stderr = warnings;
    if cfg.emit_gnuplot {
        match verify_dr(net, c0, &cfg.dr_options()) {
            Ok(r) if r.verdict.is_product_form() => {
                let means = r.trajectory.and_then(|t| t.last()).map(|c| c.values).unwrap_or_default();
                files.push((with_suffix(&prefix, ".gp"), gnuplot_script(&prefix, &summary, &means)));
            }
            Ok(_) => stderr.push_str("DR condition fails; no predicted law, gnuplot script skipped\n"),
            Err(e) => {
                let _ = writeln!(stderr, "analysis failed, gnuplot script skipped: {e}");
            }
        }
    }
    Outcome {
        code: EXIT_OK,
        stdout: match cfg.format {
            Format::Json => json,
            Format::Csv => combined_csv(&summary),
        },
        stderr,
        files,
    }
}

/// Ensemble against the predicted product-Poisson law.
pub fn cmd_compare(src: &NetworkSource, cfg: &RunConfig) -> Outcome {
    if let Err(e) = cfg.validate() {
        return Outcome::input_error(e);
    }
    let (parsed, warnings) = match load(src) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let net = &parsed.network;
    let c0 = &parsed.initial.values;
    let report = match verify_dr(net, c0, &cfg.dr_options()) {
        Ok(r) => r,
        Err(e) => return Outcome::input_error(format!("{}: {e}\n", src.origin)),
    };
    let summary = match ensemble(net, c0, cfg) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let mut stderr = warnings;
    if !report.verdict.is_product_form() {
        let species: Vec<Value> = summary
            .species
            .iter()
            .map(|s| {
                json!({
                    "name": s.name,
                    "empiricalMean": s.mean,
                    "empiricalVariance": s.variance,
                    "varianceToMean": s.variance / s.mean,
                })
            })
            .collect();
        let body = json!({
            "verdict": report.verdict,
            "failingComplexes": report.failing_complexes,
            "N": summary.replicates,
            "T": summary.horizon,
            "seed": summary.seed,
            "species": species,
        });
        for s in &summary.species {
            let _ = writeln!(
                stderr,
                "{}: mean {:.4}, variance {:.4}, variance/mean {:.3}",
                s.name,
                s.mean,
                s.variance,
                s.variance / s.mean
            );
        }
        let outcome = Outcome {
            code: EXIT_DR_FAILS,
            stderr,
            ..Outcome::default()
        };
        return emit(outcome, cfg, pretty(&body));
    }
    let means = report
        .trajectory
        .as_ref()
        .and_then(|t| t.last())
        .map(|c| c.values)
        .unwrap_or_else(|| c0.clone());
    let law = match ProductPoissonLaw::new(means) {
        Ok(l) => l,
        Err(e) => return Outcome::input_error(format!("predicted law is degenerate: {e}\n")),
    };
    let cmp = match compare_ensemble(&summary, &law, DEFAULT_SIGNIFICANCE) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(format!("{e}\n")),
    };
    let passed = cmp.all_passed();
    for s in &cmp.species {
        let _ = writeln!(
            stderr,
            "{}: TV {:.4}, chi2 {:.2} on {} dof, p {:.3e} [{}]",
            s.name,
            s.tv,
            s.chi2,
            s.dof,
            s.p_value,
            if s.passed { "PASS" } else { "FAIL" }
        );
    }
    let body = match cfg.format {
        Format::Json => {
            let mut v = serde_json::to_value(&cmp).expect("serializable comparison");
            v["verdict"] = json!(report.verdict);
            v["passed"] = json!(passed);
            v["N"] = json!(summary.replicates);
            v["T"] = json!(summary.horizon);
            v["seed"] = json!(summary.seed);
            pretty(&v)
        }
        Format::Csv => {
            let mut out = String::from("species,tv,chi2,dof,pValue,predictedMean,empiricalMean,empiricalVariance\n");
            for s in &cmp.species {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.name, s.tv, s.chi2, s.dof, s.p_value, s.predicted_mean, s.empirical_mean, s.empirical_variance
                );
            }
            out
        }
    };
    let outcome = Outcome {
        code: if passed { EXIT_OK } else { EXIT_DR_FAILS },
        stderr,
        ..Outcome::default()
    };
    emit(outcome, cfg, body)
}

fn distance_json(pmf: &drnet_core::TruncatedPmf, means: &[f64]) -> Value {
    match ProductPoissonLaw::new(means.to_vec()) {
        Ok(law) => {
            let (sup, tv) = compare_truncated(pmf, &law);
            json!({"means": means, "supNorm": sup, "tv": tv})
        }
        Err(e) => json!({"means": means, "error": e.to_string()}),
    }
}

/// Truncated master equation against the product-Poisson prediction.
pub fn cmd_oracle(src: &NetworkSource, cfg: &RunConfig) -> Outcome {
    if let Err(e) = cfg.validate() {
        return Outcome::input_error(e);
    }
    let (parsed, warnings) = match load(src) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let net = &parsed.network;
    let c0 = &parsed.initial.values;
    let report = match verify_dr(net, c0, &cfg.dr_options()) {
        Ok(r) => r,
        Err(e) => return Outcome::input_error(format!("{}: {e}\n", src.origin)),
    };
    let predicted = report.trajectory.as_ref().and_then(|t| t.last()).map(|c| c.values);
    let bounds = match &cfg.box_bounds {
        Some(b) if b.len() == 1 => vec![b[0]; net.dim()],
        Some(b) if b.len() == net.dim() => b.clone(),
        Some(b) => {
            return Outcome::input_error(format!(
                "--box needs 1 or {} bounds, found {}\n",
                net.dim(),
                b.len()
            ))
        }
        None => default_box(c0, report.trajectory.as_ref()),
    };
    let opts = CmeOptions {
        horizon: cfg.time,
        dt: cfg.dt,
        leak_budget: DEFAULT_LEAK_BUDGET,
    };
    let pmf = match truncated_cme(net, &CmeInitial::Poisson(c0.clone()), &bounds, &opts) {
        Ok(p) => p,
        Err(e @ (StochasticError::BoxTooSmall { .. } | StochasticError::InitialMassOutsideBox { .. })) => {
            return Outcome {
                code: EXIT_OVERFLOW,
                stderr: format!("{e}; enlarge --box\n"),
                ..Outcome::default()
            }
        }
        Err(e) => return Outcome::input_error(format!("{e}\n")),
    };
    let matched = pmf.means();
    let mut body = json!({
        "verdict": report.verdict,
        "T": cfg.time,
        "box": bounds,
        "leaked": pmf.leaked,
        "matchedMeans": distance_json(&pmf, &matched),
    });
    if let Some(p) = &predicted {
        body["predicted"] = distance_json(&pmf, p);
    }
    let code = if report.verdict == Verdict::Fails {
        EXIT_DR_FAILS
    } else {
        EXIT_OK
    };
    let outcome = Outcome {
        code,
        stderr: warnings,
        ..Outcome::default()
    };
    emit(outcome, cfg, pretty(&body))
}

fn default_box(c0: &[f64], traj: Option<&drnet_core::Trajectory>) -> Vec<u64> {
    (0..c0.len())
        .map(|i| {
            let peak = traj
                .map(|t| t.states.iter().map(|c| c[i]).fold(c0[i], f64::max))
                .unwrap_or(c0[i]);
            covering_bound(peak.max(1e-3)) + 5
        })
        .collect()
}

/// `40` or `40,30`.
pub fn parse_box(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| format!("invalid box bound `{p}`")))
        .collect()
}

/// Worker cap from `DRNET_THREADS`.
pub fn workers_from_env() -> Result<Option<usize>, String> {
    match std::env::var("DRNET_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("DRNET_THREADS must be a positive integer, found `{v}`")),
        Err(_) => Ok(None),
    }
}

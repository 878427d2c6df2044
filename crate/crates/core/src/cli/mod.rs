//! Experiment driver: configuration, reports, artifacts and exit codes.

mod experiments;
pub mod plot;
mod verify;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbits::ClassifierOptions;

pub use experiments::{classification_seeds, phase_measurements, PhaseMeasurement};
pub use plot::{emit_plot, render_svg, PlotSeries, Projection, StrokeStyle};
pub use verify::{prop22_residual, verify_suite};

/// Report format version.
pub const SCHEMA_VERSION: u32 = 1;

/// Named experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyForms,
    Bubble,
    Foliation,
    Glue,
    BreakScaling,
    Bhopf,
    Counterexample,
    TorusSeparatrix,
    Seifert,
    Taxonomy,
    /// Every catalog oracle and module check.
    Verify,
    /// Catalog listing with oracle residuals.
    Catalog,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::VerifyForms,
        Experiment::Bubble,
        Experiment::Foliation,
        Experiment::Glue,
        Experiment::BreakScaling,
        Experiment::Bhopf,
        Experiment::Counterexample,
        Experiment::TorusSeparatrix,
        Experiment::Seifert,
        Experiment::Taxonomy,
        Experiment::Verify,
        Experiment::Catalog,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::VerifyForms => "verify-forms",
            Experiment::Bubble => "bubble",
            Experiment::Foliation => "foliation",
            Experiment::Glue => "glue",
            Experiment::BreakScaling => "break-scaling",
            Experiment::Bhopf => "bhopf",
            Experiment::Counterexample => "counterexample",
            Experiment::TorusSeparatrix => "torus-separatrix",
            Experiment::Seifert => "seifert",
            Experiment::Taxonomy => "taxonomy",
            Experiment::Verify => "verify",
            Experiment::Catalog => "catalog",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Experiment> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Deliberate faults for exercising the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Solve Hamiltonian fields with `ι_X ω = +dH`.
    FlipHamiltonianSign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub reeb: f64,
    pub prop22: f64,
    pub conservation: f64,
    pub stereographic: f64,
    pub foliation: f64,
    /// Relative error of each measured passage phase.
    pub phase_rel: f64,
    /// Relative error of the fitted phase slope.
    pub slope_rel: f64,
    pub seifert_orbit: f64,
    pub seifert_endpoint: f64,
    pub seifert_constant_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            reeb: 1e-9,
            prop22: 1e-8,
            conservation: 1e-8,
            stereographic: 1e-8,
            foliation: 1e-10,
            phase_rel: 0.1,
            slope_rel: 0.05,
            seifert_orbit: 1e-6,
            seifert_endpoint: 1e-8,
            seifert_constant_rel: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputFormat {
    pub csv: bool,
    pub svg: bool,
    /// Include wall-clock time in the report (breaks byte-for-byte reproducibility).
    pub wall_time: bool,
}

impl Default for OutputFormat {
    fn default() -> Self {
        OutputFormat { csv: true, svg: true, wall_time: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub delta: f64,
    /// Classification horizon per direction.
    pub horizon: f64,
    /// Number of sampled orbits in batch experiments.
    pub seeds: usize,
    /// Seed of the experiment's random generator.
    pub seed: u64,
    pub tolerances: Tolerances,
    pub classifier: ClassifierOptions,
    pub output_dir: Option<PathBuf>,
    pub format: OutputFormat,
    pub fault: Option<Fault>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            eps: 1e-2,
            eps_list: vec![1e-3, 2e-3, 4e-3],
            delta: 0.2,
            horizon: 500.0,
            seeds: 100,
            seed: 20240607,
            tolerances: Tolerances::default(),
            classifier: ClassifierOptions::default(),
            output_dir: None,
            format: OutputFormat::default(),
            fault: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let small = |v: f64, name: &str| -> Result<()> {
            pos(v, name)?;
            if v > 0.1 {
                return Err(Error::Config(format!("{name} must not exceed 0.1, got {v}")));
            }
            Ok(())
        };
        small(self.eps, "eps")?;
        if self.eps_list.len() < 2 {
            return Err(Error::Config("eps_list needs at least two values".into()));
        }
        for &e in &self.eps_list {
            small(e, "eps_list entry")?;
        }
        pos(self.delta, "delta")?;
        if self.delta > 0.4 {
            return Err(Error::Config(format!("delta must not exceed 0.4, got {}", self.delta)));
        }
        pos(self.horizon, "horizon")?;
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        let t = &self.tolerances;
        for (v, n) in [
            (t.identity, "tolerances.identity"),
            (t.reeb, "tolerances.reeb"),
            (t.prop22, "tolerances.prop22"),
            (t.conservation, "tolerances.conservation"),
            (t.stereographic, "tolerances.stereographic"),
            (t.foliation, "tolerances.foliation"),
            (t.phase_rel, "tolerances.phase_rel"),
            (t.slope_rel, "tolerances.slope_rel"),
            (t.seifert_orbit, "tolerances.seifert_orbit"),
            (t.seifert_endpoint, "tolerances.seifert_endpoint"),
            (t.seifert_constant_rel, "tolerances.seifert_constant_rel"),
        ] {
            pos(v, n)?;
        }
        self.classifier().validate()
    }

    /// Classifier options with the configured horizon.
    pub fn classifier(&self) -> ClassifierOptions {
        ClassifierOptions { horizon: self.horizon, ..self.classifier.clone() }
    }
}

/// How `measured` is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `measured ≤ tolerance` (a residual; `expected` is 0).
    AtMost,
    /// `measured ≥ expected`.
    AtLeast,
    /// `measured > expected`.
    Above,
    /// `|measured − expected| ≤ tolerance`.
    Abs,
    /// `|measured − expected| ≤ tolerance·|expected|`.
    Rel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Which claim the check reproduces (descriptive, not a citation).
    pub paper_anchor: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: &str, anchor: &str, measured: f64, expected: f64, tolerance: f64, comparison: Comparison) -> CheckRecord {
        let pass = match comparison {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= expected,
            Comparison::Above => measured > expected,
            Comparison::Abs => (measured - expected).abs() <= tolerance,
            Comparison::Rel => (measured - expected).abs() <= tolerance * expected.abs(),
        };
        CheckRecord { name: name.into(), paper_anchor: anchor.into(), measured, expected, tolerance, comparison, pass }
    }

    pub fn residual(name: &str, anchor: &str, measured: f64, tolerance: f64) -> CheckRecord {
        CheckRecord::new(name, anchor, measured, 0.0, tolerance, Comparison::AtMost)
    }

    pub fn count(name: &str, anchor: &str, measured: usize, expected: usize) -> CheckRecord {
        CheckRecord::new(name, anchor, measured as f64, expected as f64, 0.0, Comparison::Abs)
    }

    pub fn flag(name: &str, anchor: &str, ok: bool) -> CheckRecord {
        CheckRecord::count(name, anchor, ok as usize, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckRecord>,
    /// Comparisons against formulas known to be misprinted; informational.
    pub discrepancies: Vec<CheckRecord>,
    /// Orbit counts per classification, where applicable.
    pub tallies: BTreeMap<String, BTreeMap<String, usize>>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub pass: bool,
}

impl ExperimentReport {
    fn new(experiment: Experiment, cfg: &ExperimentConfig) -> ExperimentReport {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment,
            seed: cfg.seed,
            config: cfg.clone(),
            checks: Vec::new(),
            discrepancies: Vec::new(),
            tallies: BTreeMap::new(),
            artifacts: Vec::new(),
            wall_time_s: None,
            pass: false,
        }
    }

    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Traceability table: one line per check.
    pub fn table(&self) -> String {
        let mut s = format!("experiment {} (seed {})\n", self.experiment, self.seed);
        for c in &self.checks {
            s.push_str(&format!(
                "{:4}  {:<64} measured {:>12.5e}  expected {:>12.5e}  tol {:>9.2e}  [{}]\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected,
                c.tolerance,
                c.paper_anchor
            ));
        }
        for c in &self.discrepancies {
            s.push_str(&format!(
                "{:4}  {:<64} measured {:>12.5e}  expected {:>12.5e}  tol {:>9.2e}  [{}; printed formula]\n",
                "NOTE", c.name, c.measured, c.expected, c.tolerance, c.paper_anchor
            ));
        }
        for a in &self.artifacts {
            s.push_str(&format!("wrote {a}\n"));
        }
        s.push_str(if self.pass { "overall: PASS\n" } else { "overall: FAIL\n" });
        s
    }
}

/// Collects checks and writes artifacts for one run.
pub(crate) struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub report: ExperimentReport,
    dir: Option<PathBuf>,
    /// Cleared by the verification suite, which only writes its report.
    pub files: bool,
}

impl<'a> Run<'a> {
    fn new(experiment: Experiment, cfg: &'a ExperimentConfig) -> Result<Run<'a>> {
        let dir = cfg.output_dir.clone();
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Run { cfg, report: ExperimentReport::new(experiment, cfg), dir, files: true })
    }

    pub fn check(&mut self, c: CheckRecord) {
        self.report.checks.push(c);
    }

    pub fn discrepancy(&mut self, c: CheckRecord) {
        self.report.discrepancies.push(c);
    }

    pub fn tally(&mut self, name: &str, counts: BTreeMap<String, usize>) {
        self.report.tallies.insert(name.into(), counts);
    }

    /// Write an artifact (if an output directory is configured).
    pub fn artifact(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        if let (Some(d), true) = (&self.dir, self.files) {
            fs::write(d.join(name), contents)?;
            self.report.artifacts.push(name.into());
        }
        Ok(())
    }

    pub fn wants_csv(&self) -> bool {
        self.files && self.dir.is_some() && self.cfg.format.csv
    }

    pub fn wants_svg(&self) -> bool {
        self.files && self.dir.is_some() && self.cfg.format.svg
    }

    fn finish(mut self) -> Result<ExperimentReport> {
        self.report.pass = !self.report.checks.is_empty() && self.report.checks.iter().all(|c| c.pass);
        if let Some(d) = &self.dir {
            self.report.artifacts.push("report.json".into());
            fs::write(d.join("report.json"), self.report.to_json())?;
        }
        Ok(self.report)
    }
}

/// Run one experiment; writes `report.json` and artifacts when an output
/// directory is configured.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut r = Run::new(experiment, cfg)?;
    match experiment {
        Experiment::VerifyForms => experiments::verify_forms(&mut r)?,
        Experiment::Bubble => experiments::bubble(&mut r)?,
        Experiment::Foliation => experiments::foliation(&mut r)?,
        Experiment::Glue => experiments::glue(&mut r)?,
        Experiment::BreakScaling => experiments::break_scaling(&mut r)?,
        Experiment::Bhopf => experiments::bhopf(&mut r)?,
        Experiment::Counterexample => experiments::counterexample(&mut r)?,
        Experiment::TorusSeparatrix => experiments::torus_separatrix(&mut r)?,
        Experiment::Seifert => experiments::seifert(&mut r)?,
        Experiment::Taxonomy => experiments::taxonomy(&mut r)?,
        Experiment::Verify => verify::suite_into(&mut r)?,
        Experiment::Catalog => experiments::catalog(&mut r)?,
    }
    if cfg.format.wall_time {
        r.report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    r.finish()
}

/// Process exit code for a finished run.
pub fn exit_code(outcome: &Result<ExperimentReport>) -> i32 {
    match outcome {
        Ok(r) if r.pass => 0,
        Ok(_) => 1,
        Err(e) => e.exit_code(),
    }
}

//! Experiment driver: specs, result tables and output files.
//!
//! Every experiment produces a long-format [`ResultTable`] with the columns
//! `experiment, seed, member, variant, theta_rule, k, index, metric, value`.
//! Empty cells mean the column does not apply to that row. `index` is the
//! eigenvalue index (1-based) or the PCG iteration (0 = initial guess).

mod experiments;
pub mod validate;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eda::TwinConfig;
use crate::error::{Error, Result};
use crate::lmp::ThetaRule;
use crate::sketch::SketchKind;

pub use experiments::DENSE_ORACLE_MAX_N;
pub use experiments::{
    run_control_lmp, run_eig_error, run_eig_sensitivity, run_ensemble_lmp, run_theta_sensitivity,
};
pub use validate::{failed_checks, run_checks, run_validate, CheckResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    EigSensitivity,
    EigError,
    ControlLmp,
    ThetaSensitivity,
    EnsembleLmp,
    Validate,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::EigSensitivity,
        ExperimentId::EigError,
        ExperimentId::ControlLmp,
        ExperimentId::ThetaSensitivity,
        ExperimentId::EnsembleLmp,
        ExperimentId::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::EigSensitivity => "eig-sensitivity",
            ExperimentId::EigError => "eig-error",
            ExperimentId::ControlLmp => "control-lmp",
            ExperimentId::ThetaSensitivity => "theta-sensitivity",
            ExperimentId::EnsembleLmp => "ensemble-lmp",
            ExperimentId::Validate => "validate",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Settings for one experiment run. Fields missing from a config file take
/// the per-experiment defaults of [`ExperimentSpec::defaults`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub twin: TwinConfig,
    /// Sketch seeds. For Γ each seed also selects a fresh ensemble.
    pub seeds: Vec<u64>,
    pub sketch_kinds: Vec<SketchKind>,
    pub theta_rules: Vec<ThetaRule>,
    /// Sketch width ℓ.
    pub sketch_width: usize,
    /// Retained ranks k, each ≤ ℓ.
    pub ranks: Vec<usize>,
    pub max_iters: usize,
    pub length_scales: Vec<f64>,
    pub diffusion_steps: Vec<u32>,
    /// Number of leading eigenvalues reported by eig-sensitivity; the
    /// default reaches past p = 150 so the unit tail is visible.
    pub n_eigs: usize,
    pub output_dir: PathBuf,
}

/// Partial spec as read from a TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOverrides {
    pub experiment: Option<ExperimentId>,
    pub twin: Option<toml::Table>,
    pub seeds: Option<Vec<u64>>,
    pub sketch_kinds: Option<Vec<SketchKind>>,
    pub theta_rules: Option<Vec<ThetaRule>>,
    pub sketch_width: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub max_iters: Option<usize>,
    pub length_scales: Option<Vec<f64>>,
    pub diffusion_steps: Option<Vec<u32>>,
    pub n_eigs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl SpecOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

impl ExperimentSpec {
    pub fn defaults(experiment: ExperimentId) -> Self {
        let mut spec = ExperimentSpec {
            experiment,
            twin: TwinConfig::default(),
            seeds: (0..20).collect(),
            sketch_kinds: vec![
                SketchKind::Gaussian,
                SketchKind::PowerA,
                SketchKind::RhsGamma,
            ],
            theta_rules: vec![ThetaRule::HalfSum],
            sketch_width: 20,
            ranks: vec![20],
            max_iters: 40,
            length_scales: vec![2.0, 4.0, 6.0, 8.0],
            diffusion_steps: vec![2, 6, 10, 14],
            n_eigs: 160,
            output_dir: PathBuf::from("results"),
        };
        match experiment {
            ExperimentId::EigSensitivity => spec.seeds = vec![0],
            ExperimentId::EigError | ExperimentId::ControlLmp => {
                spec.sketch_kinds = SketchKind::ALL.to_vec();
            }
            ExperimentId::ThetaSensitivity => {
                spec.sketch_kinds = vec![SketchKind::RhsGamma];
                spec.ranks = vec![20, 15];
                spec.theta_rules = vec![ThetaRule::HalfSum, ThetaRule::LambdaK, ThetaRule::One];
            }
            ExperimentId::EnsembleLmp => {
                spec.seeds = vec![0];
                spec.sketch_kinds = vec![SketchKind::RhsGamma];
                spec.ranks = vec![20, 15];
                spec.theta_rules = vec![ThetaRule::HalfSum, ThetaRule::LambdaK];
            }
            ExperimentId::Validate => {
                spec.twin = TwinConfig::small();
                spec.seeds = vec![0];
            }
        }
        spec
    }

    /// Applies file overrides on top of `self`. Twin keys are merged one by
    /// one, so a file may set only `twin.n`.
    pub fn merge(mut self, o: SpecOverrides) -> Result<Self> {
        if let Some(e) = o.experiment {
            if e != self.experiment {
                return Err(Error::Config(format!(
                    "config is for `{e}` but `{}` was requested",
                    self.experiment
                )));
            }
        }
        if let Some(table) = o.twin {
            let mut base = toml::Table::try_from(&self.twin)
                .map_err(|e| Error::Config(format!("twin config: {e}")))?;
            base.extend(table);
            self.twin = base
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("twin config: {e}")))?;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(
            seeds,
            sketch_kinds,
            theta_rules,
            sketch_width,
            ranks,
            max_iters,
            length_scales,
            diffusion_steps,
            n_eigs,
            output_dir
        );
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.sketch_width == 0 {
            return Err(Error::Config("sketch width must be positive".into()));
        }
        if let Some(&k) = self
            .ranks
            .iter()
            .find(|&&k| k == 0 || k > self.sketch_width)
        {
            return Err(Error::Config(format!(
                "rank {k} must lie in 1..={}",
                self.sketch_width
            )));
        }
        let needs = |b: bool, what: &str| {
            if b {
                Err(Error::Config(format!("{what} list is empty")))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentId::EigSensitivity => {
                needs(self.length_scales.is_empty(), "length scale")?;
                needs(self.diffusion_steps.is_empty(), "diffusion step")?;
                if self.n_eigs == 0 {
                    return Err(Error::Config("n_eigs must be positive".into()));
                }
            }
            ExperimentId::EigError | ExperimentId::ControlLmp | ExperimentId::ThetaSensitivity => {
                needs(self.sketch_kinds.is_empty(), "sketch kind")?;
                needs(self.ranks.is_empty(), "rank")?;
                needs(self.theta_rules.is_empty(), "theta rule")?;
            }
            ExperimentId::EnsembleLmp => {
                needs(self.ranks.is_empty(), "rank")?;
                needs(self.theta_rules.is_empty(), "theta rule")?;
                if self.twin.members < self.sketch_width {
                    return Err(Error::Config(format!(
                        "{} members cannot fill a sketch of width {}",
                        self.twin.members, self.sketch_width
                    )));
                }
            }
            ExperimentId::Validate => {}
        }
        if self.sketch_kinds.contains(&SketchKind::RhsGamma)
            && self.twin.members < self.sketch_width
        {
            return Err(Error::Config(format!(
                "Γ needs at least ℓ = {} members, got {}",
                self.sketch_width, self.twin.members
            )));
        }
        self.twin.model().validate()?;
        self.twin.covariance().validate()?;
        self.twin
            .network()?
            .validate(self.twin.n, self.twin.n_steps)?;
        Ok(())
    }
}

/// One long-format output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: Option<u64>,
    pub member: Option<usize>,
    pub variant: String,
    pub theta_rule: Option<String>,
    pub k: Option<usize>,
    pub index: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const HEADER: [&'static str; 9] = [
        "experiment",
        "seed",
        "member",
        "variant",
        "theta_rule",
        "k",
        "index",
        "metric",
        "value",
    ];

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// Rows matching `metric` and `variant`, in table order.
    pub fn select<'a>(
        &'a self,
        variant: &'a str,
        metric: &'a str,
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.variant == variant && r.metric == metric)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(ResultTable { rows })
    }
}

/// Row builder; fields left unset stay empty in the CSV.
#[derive(Debug, Clone)]
pub(crate) struct RowKey {
    experiment: ExperimentId,
    seed: Option<u64>,
    member: Option<usize>,
    variant: String,
    theta_rule: Option<ThetaRule>,
    k: Option<usize>,
}

impl RowKey {
    pub(crate) fn new(experiment: ExperimentId, variant: impl Into<String>) -> Self {
        RowKey {
            experiment,
            seed: None,
            member: None,
            variant: variant.into(),
            theta_rule: None,
            k: None,
        }
    }

    pub(crate) fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub(crate) fn member(mut self, member: usize) -> Self {
        self.member = Some(member);
        self
    }

    pub(crate) fn theta(mut self, rule: ThetaRule) -> Self {
        self.theta_rule = Some(rule);
        self
    }

    pub(crate) fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub(crate) fn row(&self, index: usize, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.name().to_string(),
            seed: self.seed,
            member: self.member,
            variant: self.variant.clone(),
            theta_rule: self.theta_rule.map(|t| t.name().to_string()),
            k: self.k,
            index,
            metric: metric.to_string(),
            value,
        }
    }

    pub(crate) fn series(
        &self,
        metric: &str,
        values: &[f64],
        first_index: usize,
    ) -> Vec<ResultRow> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.row(first_index + i, metric, v))
            .collect()
    }
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Per-position median, min and max across equally long series.
pub(crate) fn envelopes(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut med = Vec::with_capacity(len);
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for i in 0..len {
        let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
        med.push(median(&col));
        lo.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        hi.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    (med, lo, hi)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    match spec.experiment {
        ExperimentId::EigSensitivity => run_eig_sensitivity(spec),
        ExperimentId::EigError => run_eig_error(spec),
        ExperimentId::ControlLmp => run_control_lmp(spec),
        ExperimentId::ThetaSensitivity => run_theta_sensitivity(spec),
        ExperimentId::EnsembleLmp => run_ensemble_lmp(spec),
        ExperimentId::Validate => run_validate(spec),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub spec: ExperimentSpec,
    pub crate_version: String,
    pub git_revision: Option<String>,
    pub profile: String,
    pub rows: usize,
    pub wall_time_seconds: f64,
    pub finished_unix_seconds: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: ResultTable,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs the experiment and writes `<dir>/<experiment>.csv` and
/// `<dir>/<experiment>.manifest.json`.
pub fn run_and_write(spec: &ExperimentSpec) -> Result<RunOutput> {
    let start = Instant::now();
    let table = run_experiment(spec)?;
    let wall = start.elapsed().as_secs_f64();
    fs::create_dir_all(&spec.output_dir)?;
    let csv_path = spec.output_dir.join(format!("{}.csv", spec.experiment));
    let manifest_path = spec
        .output_dir
        .join(format!("{}.manifest.json", spec.experiment));
    table.write_csv(fs::File::create(&csv_path)?)?;
    let manifest = RunManifest {
        experiment: spec.experiment.name().to_string(),
        spec: spec.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        git_revision: option_env!("EDA_SKETCH_GIT_REVISION").map(str::to_string),
        profile: if cfg!(debug_assertions) {
            "debug"
        } else {
            "release"
        }
        .to_string(),
        rows: table.len(),
        wall_time_seconds: wall,
        finished_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutput {
        table,
        csv_path,
        manifest_path,
    })
}

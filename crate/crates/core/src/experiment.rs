//! Experiment configuration and the file-based pipelines: data generation,
//! basis computation, training and metric suites.
//!
//! Artifacts live under `<root>/<problem>/` in `data/`, `bases/`, `nets/` and
//! `metrics/`. Every manifest records the digest of the configuration that
//! produced it; evaluation refuses artifacts from a different configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CovarianceParams, Mesh1D, SpectralCovariance};
use crate::io;
use crate::metrics::{self, error_decomposition, MetricRow, Reconstruction, TestMoments};
use crate::pde::{generate_dataset, JacobianStorage, PdeProblem, ProblemKind, SampleSet};
use crate::polymap::{verify_constants, HermiteMap};
use crate::reduction::{
    build_basis, input_dis_from_operator, input_dis_operator, output_dis_from_operator, output_dis_operator,
    output_mean, output_pca, BasisKind, BasisSource, ReducedBasis,
};
use crate::rng::NormalStream;
use crate::surrogate::{encode_dataset, train, LatentNetwork, NetworkConfig, Rbno, TrainReport, TrainingSchedule};

/// Random Hermite maps for the theory suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub maps: usize,
    pub max_degree: u32,
    pub dim_in: usize,
    pub dim_out: usize,
    pub extra_terms: usize,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self { maps: 100, max_degree: 4, dim_in: 4, dim_out: 3, extra_terms: 8, n_mc: 10_000, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub covariance: CovarianceParams,
    pub n_el: usize,
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    pub reference_size: usize,
    pub ranks: Vec<usize>,
    pub basis_pairs: Vec<(BasisKind, BasisKind)>,
    pub network: NetworkConfig,
    /// Template schedule; each run replaces the seed with its own.
    pub schedule: TrainingSchedule,
    pub seeds: Vec<u64>,
    pub test_seed: u64,
    pub reference_seed: u64,
    /// Largest rank of the reconstruction curves.
    pub reconstruction_rank: usize,
    pub excess_sizes: Vec<usize>,
    pub excess_seeds: Vec<u64>,
    pub excess_rank: usize,
    pub theory: TheoryConfig,
    /// Output root; the `--output` flag and the `RBNO_OUTPUT` variable take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::invalid(format!("unknown preset '{s}' (expected desk or paper)"))),
        }
    }
}

pub fn all_pairs() -> Vec<(BasisKind, BasisKind)> {
    let mut out = Vec::new();
    for input in [BasisKind::InputPca, BasisKind::InputDis] {
        for output in [BasisKind::OutputPca, BasisKind::OutputDis] {
            out.push((input, output));
        }
    }
    out
}

impl ExperimentConfig {
    pub fn preset(preset: Preset, problem: ProblemKind) -> Self {
        let network = NetworkConfig::for_problem(problem);
        let (train_sizes, schedule, seeds) = match preset {
            Preset::Desk => (vec![250, 1000, 4000], TrainingSchedule::desk(network.lr0, 0), vec![1, 2, 3, 4, 5]),
            Preset::Paper => {
                (vec![640, 1000, 2000, 4000, 8000, 16_000], TrainingSchedule::paper(network.lr0, 0), (1..=10).collect())
            }
        };
        Self {
            problem,
            covariance: problem.default_covariance(),
            n_el: 256,
            train_sizes,
            test_size: 4000,
            reference_size: 20_000,
            ranks: vec![10, 20, 30],
            basis_pairs: all_pairs(),
            network,
            schedule,
            seeds,
            test_seed: 1_000_001,
            reference_seed: 2_000_003,
            reconstruction_rank: 50,
            excess_sizes: vec![80, 160, 320, 640],
            excess_seeds: (101..=110).collect(),
            excess_rank: 10,
            theory: TheoryConfig::default(),
            output_dir: None,
        }
    }

    pub fn desk(problem: ProblemKind) -> Self {
        Self::preset(Preset::Desk, problem)
    }

    pub fn paper(problem: ProblemKind) -> Self {
        Self::preset(Preset::Paper, problem)
    }

    pub fn dim(&self) -> usize {
        self.n_el + 1
    }

    /// Rank at which bases are computed and stored; smaller ranks truncate.
    pub fn basis_rank(&self) -> usize {
        let mut r = self.reconstruction_rank.max(self.excess_rank);
        r = self.ranks.iter().copied().fold(r, usize::max);
        r.min(self.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.n_el == 0 || self.test_size == 0 || self.reference_size == 0 {
            return Err(Error::invalid("mesh and dataset sizes must be positive"));
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) || self.excess_sizes.contains(&0) {
            return Err(Error::invalid("training sizes must be positive"));
        }
        if self.ranks.iter().chain([&self.reconstruction_rank, &self.excess_rank]).any(|&r| r == 0 || r > d) {
            return Err(Error::invalid(format!("ranks must lie in 1..={d}")));
        }
        let mut seeds: Vec<u64> = self.seeds.iter().chain(&self.excess_seeds).copied().collect();
        seeds.extend([self.test_seed, self.reference_seed]);
        let total = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != total {
            return Err(Error::invalid("training, excess, test and reference seeds must be distinct"));
        }
        if self.basis_pairs.iter().any(|(i, o)| !i.is_input() || o.is_input()) {
            return Err(Error::invalid("each basis pair must be (input kind, output kind)"));
        }
        if self.network.depth < 2 || self.network.width_factor == 0 {
            return Err(Error::invalid("network depth must be at least 2 and the width factor positive"));
        }
        let min_train = self.train_sizes.iter().min().copied().unwrap_or(0);
        self.schedule.validate(min_train)
    }

    /// Digest of the configuration, excluding the output location.
    pub fn digest(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        io::json_digest(&c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = io::read_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Every training run in a fixed order: rank, pair, size, seed.
    pub fn runs(&self) -> Vec<RunId> {
        let mut out = Vec::new();
        for &rank in &self.ranks {
            for &(input, output) in &self.basis_pairs {
                for &n_train in &self.train_sizes {
                    for &seed in &self.seeds {
                        out.push(RunId { problem: self.problem, input, output, rank, n_train, seed });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunId {
    pub problem: ProblemKind,
    pub input: BasisKind,
    pub output: BasisKind,
    pub rank: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-r{}-n{}-s{}",
            self.problem.name(),
            self.input.name(),
            self.output.name(),
            self.rank,
            self.n_train,
            self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRole {
    Train,
    Test,
    Reference,
}

impl DataRole {
    pub fn name(self) -> &'static str {
        match self {
            DataRole::Train => "train",
            DataRole::Test => "test",
            DataRole::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Created,
    Exists,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Reconstruction,
    Excess,
    Generalization,
    Theory,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Reconstruction, Suite::Excess, Suite::Generalization, Suite::Theory];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Reconstruction => "reconstruction",
            Suite::Excess => "excess",
            Suite::Generalization => "generalization",
            Suite::Theory => "theory",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            Error::invalid(format!("unknown suite '{s}' (expected reconstruction, excess, generalization or theory)"))
        })
    }
}

/// Relative tolerance of the finite-difference checks that gate every training run.
pub const GATE_TOLERANCE: f64 = 1e-5;

/// Builds the surrogate for one run: encodes `train`, initializes the network
/// from the schedule seed and trains it.
pub fn fit_rbno(
    train_set: &SampleSet,
    input: ReducedBasis,
    output: ReducedBasis,
    network: &NetworkConfig,
    schedule: &TrainingSchedule,
) -> Result<(Rbno, TrainReport)> {
    let data = schedule.normalization.apply(encode_dataset(train_set, &input, &output)?)?;
    let mut net = LatentNetwork::glorot(
        input.rank(),
        output.rank(),
        network.width(input.rank().max(output.rank())),
        network.depth,
        network.activation,
        schedule.seed,
    )?;
    let first: Vec<usize> = (0..data.len().min(schedule.batch_size)).collect();
    let err = net.gradient_check(&data.select(&first), 3, schedule.seed)?;
    if !(err < GATE_TOLERANCE) {
        return Err(Error::Integrity(format!("loss gradient check failed (relative error {err:.2e})")));
    }
    let report = train(&mut net, &data, schedule)?;
    Ok((Rbno::new(input, output, net)?, report))
}

/// Reference bases from an assembled large-sample operator (no tail refinement).
pub fn reference_basis(
    kind: BasisKind,
    reference: &SampleSet,
    cov: &SpectralCovariance,
    r: usize,
) -> Result<ReducedBasis> {
    let source = BasisSource::Empirical { n: reference.len(), seed: reference.seed };
    match kind {
        BasisKind::InputPca => build_basis(kind, reference, cov, r),
        BasisKind::OutputPca => output_pca(reference, cov.mesh(), r),
        BasisKind::InputDis => input_dis_from_operator(&input_dis_operator(reference, cov)?, cov, r, source),
        BasisKind::OutputDis => output_dis_from_operator(
            &output_dis_operator(reference, cov)?,
            cov.mesh(),
            r,
            output_mean(reference)?,
            source,
        ),
    }
}

/// Log-log slope of the mean values, or NaN when some mean is not positive.
fn slope_or_nan(grid: &[usize], values: &[Vec<f64>]) -> Result<f64> {
    let positive = values.iter().all(|v| v.iter().sum::<f64>() > 0.0);
    if positive {
        metrics::rate_slope(grid, values)
    } else {
        Ok(f64::NAN)
    }
}

/// The artifact tree of one configuration.
pub struct Workspace {
    root: PathBuf,
    config: ExperimentConfig,
    digest: String,
    problem: PdeProblem,
    cov: SpectralCovariance,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    run: RunId,
    config_digest: String,
    report: TrainReport,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Mesh1D::uniform(config.n_el)?;
        let problem = PdeProblem::new(config.problem, mesh.clone())?;
        let cov = SpectralCovariance::new(mesh, config.covariance)?;
        let digest = config.digest()?;
        Ok(Self { root: root.into(), config, digest, problem, cov })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn covariance(&self) -> &SpectralCovariance {
        &self.cov
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn base(&self) -> PathBuf {
        self.root.join(self.config.problem.name())
    }

    pub fn dataset_dir(&self, role: DataRole, n: usize, seed: u64) -> PathBuf {
        self.base().join("data").join(format!("{}-n{n}-s{seed}", role.name()))
    }

    pub fn basis_dir(&self, kind: BasisKind, r: usize, n: usize, seed: u64) -> PathBuf {
        let name = match kind {
            BasisKind::InputPca => format!("{}-r{r}", kind.name()),
            _ => format!("{}-r{r}-n{n}-s{seed}", kind.name()),
        };
        self.base().join("bases").join(name)
    }

    pub fn reference_basis_dir(&self, kind: BasisKind, r: usize) -> PathBuf {
        self.base().join("bases").join(format!("{}-r{r}-reference", kind.name()))
    }

    pub fn run_dir(&self, run: &RunId) -> PathBuf {
        self.base().join("nets").join(run.to_string())
    }

    pub fn metrics_path(&self, suite: Suite) -> PathBuf {
        self.base().join("metrics").join(format!("{}.csv", suite.name()))
    }

    fn check_digest(&self, what: &Path, digest: &str) -> Result<()> {
        if digest != self.digest {
            return Err(Error::Integrity(format!(
                "{} was produced by configuration {digest}, not {}; refusing to mix configurations",
                what.display(),
                self.digest
            )));
        }
        Ok(())
    }

    /// Generates and saves a dataset unless an identical one exists.
    pub fn generate(&self, role: DataRole, n: usize, seed: u64) -> Result<Outcome> {
        let dir = self.dataset_dir(role, n, seed);
        if dir.join("manifest.json").exists() {
            let (id, _) = SampleSet::peek(&dir)?;
            if id.n != n
                || id.seed != seed
                || id.problem != self.config.problem
                || id.covariance != self.config.covariance
            {
                return Err(Error::Integrity(format!("{} holds a different dataset", dir.display())));
            }
            self.dataset(role, n, seed)?;
            return Ok(Outcome::Exists);
        }
        let set = generate_dataset(&self.problem, &self.cov, n, seed)?;
        set.save(&dir, &self.digest, JacobianStorage::Auto)?;
        Ok(Outcome::Created)
    }

    /// Every dataset the configuration needs (training sets are generated once
    /// per seed at the largest size and truncated for smaller sizes).
    pub fn planned_datasets(&self, with_reference: bool) -> Vec<(DataRole, usize, u64)> {
        let c = &self.config;
        let mut out = Vec::new();
        let n_max = c.train_sizes.iter().copied().max().unwrap_or(0);
        for &seed in &c.seeds {
            out.push((DataRole::Train, n_max, seed));
        }
        let n_excess = c.excess_sizes.iter().copied().max().unwrap_or(0);
        if n_excess > 0 {
            for &seed in &c.excess_seeds {
                out.push((DataRole::Train, n_excess, seed));
            }
        }
        out.push((DataRole::Test, c.test_size, c.test_seed));
        if with_reference {
            out.push((DataRole::Reference, c.reference_size, c.reference_seed));
        }
        out
    }

    pub fn dataset(&self, role: DataRole, n: usize, seed: u64) -> Result<SampleSet> {
        let dir = self.dataset_dir(role, n, seed);
        let (set, digest) = SampleSet::load(&dir, &self.problem, &self.cov)?;
        self.check_digest(&dir, &digest)?;
        Ok(set)
    }

    /// The first `n` samples of the smallest saved training set for `seed` holding at least `n`.
    pub fn train_set(&self, n: usize, seed: u64) -> Result<SampleSet> {
        let dir = self.base().join("data");
        let mut sizes: Vec<usize> = Vec::new();
        if let Ok(entries) = std::fs::read_dir(&dir) {
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let suffix = format!("-s{seed}");
                if let Some(rest) = name.strip_prefix("train-n").and_then(|r| r.strip_suffix(&suffix)) {
                    if let Ok(m) = rest.parse::<usize>() {
                        if m >= n {
                            sizes.push(m);
                        }
                    }
                }
            }
        }
        let m = sizes
            .into_iter()
            .min()
            .ok_or_else(|| Error::MissingArtifact(self.dataset_dir(DataRole::Train, n, seed).display().to_string()))?;
        Ok(self.dataset(DataRole::Train, m, seed)?.truncated(n))
    }

    pub fn test_set(&self) -> Result<SampleSet> {
        self.dataset(DataRole::Test, self.config.test_size, self.config.test_seed)
    }

    fn stored_rank(&self, kind: BasisKind, n: usize) -> usize {
        let r = self.config.basis_rank();
        if kind == BasisKind::OutputPca {
            r.min(n)
        } else {
            r
        }
    }

    /// Computes and saves a basis from the training set `(n, seed)` unless it exists.
    pub fn build_basis(&self, kind: BasisKind, r: usize, n: usize, seed: u64) -> Result<Outcome> {
        let dir = self.basis_dir(kind, r, n, seed);
        if dir.join("manifest.json").exists() {
            return Ok(Outcome::Exists);
        }
        let set = if kind == BasisKind::InputPca { None } else { Some(self.train_set(n, seed)?) };
        let basis = match set {
            Some(s) => build_basis(kind, &s, &self.cov, r)?,
            None => build_basis(kind, &self.problem_free_set(), &self.cov, r)?,
        };
        basis.save(&dir, &self.digest)?;
        Ok(Outcome::Created)
    }

    /// An empty set for bases that do not use data.
    fn problem_free_set(&self) -> SampleSet {
        SampleSet {
            problem: self.config.problem,
            n_el: self.config.n_el,
            covariance: self.config.covariance,
            seed: 0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            jacobians: Vec::new(),
            iterations: Vec::new(),
        }
    }

    pub fn build_reference_basis(&self, kind: BasisKind, r: usize) -> Result<Outcome> {
        let dir = self.reference_basis_dir(kind, r);
        if dir.join("manifest.json").exists() {
            return Ok(Outcome::Exists);
        }
        let c = &self.config;
        let reference = self.dataset(DataRole::Reference, c.reference_size, c.reference_seed)?;
        reference_basis(kind, &reference, &self.cov, r)?.save(&dir, &self.digest)?;
        Ok(Outcome::Created)
    }

    fn load_basis_dir(&self, dir: &Path) -> Result<ReducedBasis> {
        let (basis, digest) = ReducedBasis::load(dir, &self.cov)?;
        self.check_digest(dir, &digest)?;
        Ok(basis)
    }

    /// The stored basis for `(kind, n, seed)` truncated to rank `r`.
    pub fn basis(&self, kind: BasisKind, r: usize, n: usize, seed: u64) -> Result<ReducedBasis> {
        let stored = self.stored_rank(kind, n);
        if r > stored {
            return Err(Error::invalid(format!("rank {r} exceeds the stored rank {stored} of {kind}")));
        }
        self.load_basis_dir(&self.basis_dir(kind, stored, n, seed))?.truncated(r)
    }

    /// Bases needed by the configuration, at the stored rank.
    pub fn planned_bases(&self) -> Vec<(BasisKind, usize, usize, u64)> {
        let c = &self.config;
        let mut out = vec![(BasisKind::InputPca, self.stored_rank(BasisKind::InputPca, 0), 0, 0)];
        for &n in &c.train_sizes {
            for &seed in &c.seeds {
                for kind in [BasisKind::OutputPca, BasisKind::InputDis, BasisKind::OutputDis] {
                    out.push((kind, self.stored_rank(kind, n), n, seed));
                }
            }
        }
        out
    }

    /// Trains one run (building missing bases) and saves the network, its
    /// loss history and a manifest. Existing runs are left untouched.
    pub fn train_run(&self, run: &RunId) -> Result<Outcome> {
        let dir = self.run_dir(run);
        if dir.join("run.json").exists() {
            return Ok(Outcome::Exists);
        }
        for kind in [run.input, run.output] {
            let (n, seed) = if kind == BasisKind::InputPca { (0, 0) } else { (run.n_train, run.seed) };
            self.build_basis(kind, self.stored_rank(kind, n), n, seed)?;
        }
        let input = self.basis(run.input, run.rank, run.n_train, run.seed)?;
        let output = self.basis(run.output, run.rank, run.n_train, run.seed)?;
        let train_set = self.train_set(run.n_train, run.seed)?;
        let dir_field = self.cov.sample(&mut NormalStream::new(run.seed, u64::MAX));
        let err = self.problem.jacobian_check(&train_set.inputs[0], &dir_field)?;
        if !(err < GATE_TOLERANCE) {
            return Err(Error::Integrity(format!("PDE Jacobian check failed (relative error {err:.2e})")));
        }
        let mut schedule = self.config.schedule.clone();
        schedule.seed = run.seed;
        let (rbno, report) = fit_rbno(&train_set, input, output, &self.config.network, &schedule)?;
        let schedule_digest = io::json_digest(&schedule)?;
        rbno.net.save(&dir, &schedule_digest)?;
        let mut w = csv::Writer::from_path(dir.join("history.csv"))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in report.history.iter().enumerate() {
            w.write_record([e.to_string(), format!("{l:e}")])?;
        }
        w.flush()?;
        io::write_json(&dir.join("run.json"), &RunManifest { run: *run, config_digest: self.digest.clone(), report })?;
        Ok(Outcome::Created)
    }

    pub fn load_run(&self, run: &RunId) -> Result<(Rbno, TrainReport)> {
        let dir = self.run_dir(run);
        let m: RunManifest = io::read_json(&dir.join("run.json"))?;
        self.check_digest(&dir, &m.config_digest)?;
        let (net, _) = LatentNetwork::load(&dir)?;
        let input = self.basis(run.input, run.rank, run.n_train, run.seed)?;
        let output = self.basis(run.output, run.rank, run.n_train, run.seed)?;
        Ok((Rbno::new(input, output, net)?, m.report))
    }

    fn row(
        &self,
        metric: &str,
        input: Option<BasisKind>,
        output: Option<BasisKind>,
        rank: usize,
        n: usize,
        seed: u64,
        value: f64,
        denominator: f64,
    ) -> MetricRow {
        MetricRow {
            metric: metric.to_string(),
            problem: self.config.problem.name().to_string(),
            basis_in: input.map_or(String::new(), |k| k.name().to_string()),
            basis_out: output.map_or(String::new(), |k| k.name().to_string()),
            rank,
            n_train: n,
            seed,
            value,
            denominator,
        }
    }

    /// Runs a metric suite and writes its CSV. Returns the rows.
    pub fn evaluate(&self, suite: Suite) -> Result<Vec<MetricRow>> {
        let rows = match suite {
            Suite::Reconstruction => self.reconstruction_suite()?,
            Suite::Excess => self.excess_suite()?,
            Suite::Generalization => self.generalization_suite()?,
            Suite::Theory => self.theory_suite()?,
        };
        let path = self.metrics_path(suite);
        std::fs::create_dir_all(path.parent().expect("metrics directory"))?;
        metrics::write_csv(&path, &rows)?;
        Ok(rows)
    }

    fn side(kind: BasisKind) -> (Option<BasisKind>, Option<BasisKind>) {
        if kind.is_input() {
            (Some(kind), None)
        } else {
            (None, Some(kind))
        }
    }

    fn reconstruction_suite(&self) -> Result<Vec<MetricRow>> {
        let c = &self.config;
        let test = self.test_set()?;
        let moments = TestMoments::new(&test, &self.cov)?;
        let mut rows = Vec::new();
        for &n in &c.train_sizes {
            for &seed in &c.seeds {
                for kind in BasisKind::ALL {
                    let top = c.reconstruction_rank.min(self.stored_rank(kind, n));
                    let basis = self.basis(kind, top, n, seed)?;
                    let (bi, bo) = Self::side(kind);
                    let seed_col = if kind == BasisKind::InputPca { 0 } else { seed };
                    for (i, &e) in basis.eigs().iter().take(top).enumerate() {
                        rows.push(self.row("eigenvalue", bi, bo, i + 1, n, seed_col, e, 1.0));
                    }
                    for r in 1..=top {
                        let b = basis.truncated(r)?;
                        for &q in Reconstruction::for_kind(kind) {
                            let rep = moments.reconstruction(&b, self.cov.mesh(), q)?;
                            rows.push(self.row(q.name(), bi, bo, r, n, seed_col, rep.value, rep.denominator));
                        }
                        rows.push(self.row("trailing_sum", bi, bo, r, n, seed_col, basis.trailing_sum(r)?, 1.0));
                    }
                }
            }
        }
        Ok(rows)
    }

    fn excess_suite(&self) -> Result<Vec<MetricRow>> {
        let c = &self.config;
        let r = c.excess_rank;
        let test = self.test_set()?;
        let moments = TestMoments::new(&test, &self.cov)?;
        let mesh = self.cov.mesh();
        let kinds = [BasisKind::OutputPca, BasisKind::OutputDis, BasisKind::InputDis];
        let references =
            kinds.iter().map(|&k| self.load_basis_dir(&self.reference_basis_dir(k, r))).collect::<Result<Vec<_>>>()?;
        let reference_mean = references[0].mean().clone();
        let n_max = c.excess_sizes.iter().copied().max().unwrap_or(0);
        let mut rows = Vec::new();
        let mut risks = vec![vec![Vec::new(); c.excess_sizes.len()]; kinds.len()];
        let mut mean_errors = vec![Vec::new(); c.excess_sizes.len()];
        for &seed in &c.excess_seeds {
            let full = self.train_set(n_max, seed)?;
            for (j, &n) in c.excess_sizes.iter().enumerate() {
                let set = full.truncated(n);
                for (i, &kind) in kinds.iter().enumerate() {
                    let small = reference_basis(kind, &set, &self.cov, r)?;
                    let risk = metrics::excess_risk(&small, &references[i], &moments, mesh)?;
                    let (bi, bo) = Self::side(kind);
                    rows.push(self.row("excess_risk", bi, bo, r, n, seed, risk, 1.0));
                    risks[i][j].push(risk);
                }
                let err = metrics::mean_estimator_error(&set, &reference_mean, mesh)?;
                rows.push(self.row("mean_estimator_error", None, None, 0, n, seed, err, 1.0));
                mean_errors[j].push(err);
            }
        }
        for (i, &kind) in kinds.iter().enumerate() {
            let (bi, bo) = Self::side(kind);
            let slope = slope_or_nan(&c.excess_sizes, &risks[i])?;
            rows.push(self.row("excess_risk_slope", bi, bo, r, 0, 0, slope, 1.0));
        }
        let slope = slope_or_nan(&c.excess_sizes, &mean_errors)?;
        rows.push(self.row("mean_estimator_slope", None, None, 0, 0, 0, slope, 1.0));
        Ok(rows)
    }

    fn generalization_suite(&self) -> Result<Vec<MetricRow>> {
        let test = self.test_set()?;
        let mut rows = Vec::new();
        for run in self.config.runs() {
            let (rbno, _) = self.load_run(&run)?;
            let dec = error_decomposition(&test, &self.cov, &rbno)?;
            let (bi, bo) = (Some(run.input), Some(run.output));
            let terms = [
                ("l2_error", dec.l2_measured),
                ("h1_semi_error", dec.h1_measured),
                ("l2_latent", dec.l2_latent),
                ("l2_output_reconstruction", dec.l2_output_reconstruction),
                ("l2_mean_shift", dec.l2_mean_shift),
                ("h1_latent", dec.h1_latent),
                ("h1_input_reconstruction", dec.h1_input_reconstruction),
                ("h1_output_reconstruction", dec.h1_output_reconstruction),
            ];
            for (name, value) in terms {
                rows.push(self.row(name, bi, bo, run.rank, run.n_train, run.seed, value, 1.0));
            }
        }
        Ok(rows)
    }

    fn theory_suite(&self) -> Result<Vec<MetricRow>> {
        let t = &self.config.theory;
        let mut rows = Vec::new();
        for i in 0..t.maps {
            let degree = 1 + (i as u32 % t.max_degree);
            let mut rng = NormalStream::new(t.seed, i as u64);
            let map = HermiteMap::random(t.dim_in, t.dim_out, degree, t.extra_terms, &mut rng)?;
            let report = verify_constants(&map, t.n_mc, t.seed.wrapping_add(i as u64))?;
            let seed = i as u64;
            rows.push(self.row("k_d", None, None, degree as usize, 0, seed, report.k_d, degree as f64));
            rows.push(self.row("k_h", None, None, degree as usize, 0, seed, report.k_h, (degree - 1) as f64));
            for row in metrics::subspace_poincare_check(&map, &(0..=t.dim_in).collect::<Vec<_>>())? {
                rows.push(self.row("poincare_lhs", None, None, row.r, 0, seed, row.lhs, 1.0));
                rows.push(self.row("poincare_rhs", None, None, row.r, 0, seed, row.rhs, 1.0));
            }
        }
        Ok(rows)
    }
}

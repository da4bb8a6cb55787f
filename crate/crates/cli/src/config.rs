//! TOML experiment configuration. One file describes one experiment.

use anyhow::{bail, Context, Result};
use multigibbs_core::sampler::{ModelSpec, Scan, Statistic};
use multigibbs_core::{BaseMeasure, CouplingMatrix, Density, MotifGraph, StepKernel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Master seed; there is deliberately no entropy-based default.
    pub seed: u64,
    pub theta: f64,
    #[serde(default)]
    pub field: f64,
    #[serde(default = "default_motif")]
    pub motif: MotifSpec,
    /// Reference or starting profile, one value per kernel block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
    pub base: BaseSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub critical: CriticalConfig,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub weak_law: WeakLawConfig,
    #[serde(default)]
    pub checks: Checks,
}

fn default_motif() -> MotifSpec {
    MotifSpec::Preset("K2".into())
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Complete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    IsingPm1,
    IsingField { h: f64 },
    Bernoulli { p: f64 },
    ThreePoint { w: f64 },
    Atoms { points: Vec<f64>, weights: Vec<f64> },
    Quadrature { density: String, a: f64, b: f64, nodes: usize },
}

/// `"K2"`, `"K3"`, `"K1_2"`, `"K<v>"`, or an explicit 1-based edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MotifSpec {
    Preset(String),
    Edges { v: usize, edges: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Complete,
    Tripartite,
    Bipartite { c: f64 },
    /// Quenched Erdos-Renyi coupling matrix scaled by `1/p`, used as a step kernel
    /// with `n` equal blocks or directly as the sampler's coupling.
    ErQuenched { n: usize, p: f64, seed: u64 },
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        masses: Option<Vec<f64>>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_random: usize,
    pub constant_grid: usize,
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub value_tol: f64,
    pub dedup_tol: f64,
    pub residual_tol: f64,
    pub cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_random: 64,
            constant_grid: 9,
            damping: 0.5,
            max_iter: 100_000,
            tol: 1e-11,
            value_tol: 1e-8,
            dedup_tol: 1e-6,
            residual_tol: 1e-8,
            cap: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// `"random"` or `"sequential"`.
    pub scan: String,
    pub stats: Vec<String>,
    /// Chain seeds; the master seed is used when empty.
    pub seeds: Vec<u64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            sweeps: 1000,
            burn_in: 200,
            thin: 1,
            scan: "random".into(),
            stats: vec![
                "mag".into(),
                "absmag".into(),
                "ham".into(),
                "contrast:alt".into(),
                "moments".into(),
            ],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub steps: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            theta_min: 0.0,
            theta_max: 2.0,
            steps: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    /// Interaction order; the motif's vertex count when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<usize>,
    pub bracket: [f64; 2],
    pub tol: f64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            v: None,
            bracket: [0.0, 8.0],
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactConfig {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { n_min: 4, n_max: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakLawConfig {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub snapshot_every: usize,
    pub subsample: usize,
    pub repeats: usize,
    pub p_prime: f64,
}

impl Default for WeakLawConfig {
    fn default() -> Self {
        Self {
            sizes: vec![250, 500, 1000, 2000],
            seeds: vec![1, 2, 3],
            sweeps: 500,
            burn_in: 100,
            snapshot_every: 25,
            subsample: 512,
            repeats: 1,
            p_prime: 1.0,
        }
    }
}

/// Assertions evaluated after a run; absent entries are not checked.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    /// The configured profile must beat the best constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_beats_constants: Option<bool>,
    /// The best optimizer must have blocks of both signs and beat constants by 1e-6.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opposite_signs: Option<bool>,
    /// Scalar maximizer count switches from one to two across this coupling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_c_tol: Option<f64>,
    /// Long-run magnetization within this of the nearest optimizer mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_mag_tol: Option<f64>,
    /// Long-run Hamiltonian statistic within this of `v G_W(f)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_ham_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_mag_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_contrast_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_ham_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_lp_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_distance_decreasing: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_final_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_gap_decreasing: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing experiment config")
    }

    /// Resolves every preset reference so that errors surface before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.measure()?;
        self.motif_graph()?;
        let w = self.step_kernel()?;
        if let Some(p) = &self.profile {
            if p.len() != w.k() {
                bail!("profile has {} values but the kernel has {} blocks", p.len(), w.k());
            }
        }
        for s in &self.sampler.stats {
            Statistic::parse(s)?;
        }
        self.scan_order()?;
        Ok(())
    }

    pub fn measure(&self) -> Result<BaseMeasure> {
        Ok(match &self.base {
            BaseSpec::IsingPm1 => BaseMeasure::ising_pm1(),
            BaseSpec::IsingField { h } => BaseMeasure::ising_field(*h),
            BaseSpec::Bernoulli { p } => BaseMeasure::bernoulli(*p)?,
            BaseSpec::ThreePoint { w } => BaseMeasure::three_point(*w)?,
            BaseSpec::Atoms { points, weights } => BaseMeasure::from_unnormalized(points.clone(), weights.clone())?,
            BaseSpec::Quadrature { density, a, b, nodes } => {
                BaseMeasure::quadrature(Density::from_name(density)?, *a, *b, *nodes)?
            }
        })
    }

    pub fn motif_graph(&self) -> Result<MotifGraph> {
        Ok(match &self.motif {
            MotifSpec::Preset(name) => match name.as_str() {
                "K1_2" | "cherry" => MotifGraph::cherry(),
                other => {
                    let v = other
                        .strip_prefix('K')
                        .and_then(|d| d.parse::<usize>().ok())
                        .with_context(|| format!("unknown motif preset '{other}'"))?;
                    MotifGraph::complete(v)?
                }
            },
            MotifSpec::Edges { v, edges } => {
                let e: Vec<(usize, usize)> = edges.iter().map(|[a, b]| (*a, *b)).collect();
                MotifGraph::new(*v, &e)?
            }
        })
    }

    pub fn coupling_matrix(&self) -> Result<Option<CouplingMatrix>> {
        Ok(match &self.kernel {
            KernelSpec::ErQuenched { n, p, seed } => Some(CouplingMatrix::er_quenched(*n, *p, *seed)?),
            _ => None,
        })
    }

    pub fn step_kernel(&self) -> Result<StepKernel> {
        Ok(match &self.kernel {
            KernelSpec::Complete => StepKernel::complete(),
            KernelSpec::Tripartite => StepKernel::tripartite(),
            KernelSpec::Bipartite { c } => StepKernel::bipartite(*c),
            KernelSpec::ErQuenched { .. } => self
                .coupling_matrix()?
                .expect("quenched kernel has a matrix")
                .to_kernel(),
            KernelSpec::Custom { masses, values } => match masses {
                Some(m) => StepKernel::new(m.clone(), values.clone())?,
                None => StepKernel::uniform(values.clone())?,
            },
        })
    }

    /// Finite-n model with the configured coupling strength.
    pub fn model(&self, n: usize) -> Result<ModelSpec> {
        let motif = self.motif_graph()?;
        let mu = self.measure()?;
        Ok(match self.coupling_matrix()? {
            Some(q) => {
                if q.n() != n {
                    bail!("quenched coupling has n={} but {n} sites were requested", q.n());
                }
                ModelSpec::dense(motif, q, mu, self.theta, self.field)?
            }
            None => ModelSpec::block(motif, self.step_kernel()?, n, mu, self.theta, self.field)?,
        })
    }

    pub fn scan_order(&self) -> Result<Scan> {
        Ok(match self.sampler.scan.as_str() {
            "random" => Scan::Random,
            "sequential" => Scan::Sequential,
            other => bail!("unknown scan order '{other}'"),
        })
    }

    pub fn statistics(&self) -> Result<Vec<Statistic>> {
        Ok(self
            .sampler
            .stats
            .iter()
            .map(|s| Statistic::parse(s))
            .collect::<std::result::Result<_, _>>()?)
    }

    pub fn sampler_seeds(&self) -> Vec<u64> {
        if self.sampler.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.sampler.seeds.clone()
        }
    }
}

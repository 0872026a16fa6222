//! Seeded Monte-Carlo experiments: empirical error probabilities of the mean
//! estimators against their Chebyshev bounds, and the sensor-network field
//! estimation demo.
//!
//! Every random stream is derived from the master seed and a path naming its
//! role (graph draw or trial block), so results are identical for any thread
//! count and adding a size leaves the other sizes untouched.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    chebyshev_bound, dominance_violations, estimator_psd, filtered_psd, mse, node_variance, ChebyshevBound,
    DominanceViolations,
};
use crate::estimators::ShiftAverager;
use crate::graphs::{
    adjacency_shift, covariance_graph, erdos_renyi, sbm, sensor_network, Graph, SensorParams, ShiftOperator,
};
use crate::io::fmt_f64;
use crate::process::{gmrf_psd_calibrated, logspace_psd, snr_to_p1, DcRule, Sampler, WssProcess};
use crate::seeds::{child_rng, derive, Rng};
use crate::spectral::{classify_spectrum, decompose, SpectralDecomposition};
use crate::{Complex64, Error, Result};

/// Trials per independently seeded block.
const BLOCK: usize = 500;

/// Stream tags for seed derivation.
const GRAPH_STREAM: u64 = 1;
const TRIAL_STREAM: u64 = 2;
const DEMO_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Er,
    Covariance,
    Sbm,
    Gmrf,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Er => "er",
            Family::Covariance => "covariance",
            Family::Sbm => "sbm",
            Family::Gmrf => "gmrf",
        }
    }

    fn code(self) -> u64 {
        match self {
            Family::Er => 1,
            Family::Covariance => 2,
            Family::Sbm => 3,
            Family::Gmrf => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ShiftAverage,
    Optimal,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::ShiftAverage => "shift_average",
            EstimatorKind::Optimal => "optimal",
        }
    }
}

/// Parameters of the graph families and processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyParams {
    pub p_er: f64,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Training samples behind each sample-covariance shift.
    pub covariance_samples: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub thres_factor: f64,
    /// The GMRF uses `a = gmrf_a_scale / λ_1`.
    pub gmrf_a_scale: f64,
    pub dc_rule: DcRule,
}

impl Default for FamilyParams {
    fn default() -> Self {
        let sensor = SensorParams::default();
        Self {
            p_er: 0.2,
            communities: 4,
            p_in: 0.6,
            p_out: 0.1,
            covariance_samples: 100_000,
            rho_min: sensor.rho_min,
            rho_max: sensor.rho_max,
            thres_factor: sensor.thres_factor,
            gmrf_a_scale: 0.99,
            dc_rule: DcRule::KeepP1,
        }
    }
}

impl FamilyParams {
    fn sensor(&self) -> SensorParams {
        SensorParams { rho_min: self.rho_min, rho_max: self.rho_max, thres_factor: self.thres_factor }
    }
}

fn default_graphs() -> usize {
    10
}
fn default_trials() -> usize {
    10_000
}
fn default_mu() -> f64 {
    3.0
}
fn default_snr() -> f64 {
    10.0
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::ShiftAverage, EstimatorKind::Optimal]
}
fn default_attempts() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    #[serde(default = "default_graphs")]
    pub graphs_per_size: usize,
    #[serde(default = "default_trials")]
    pub trials_per_graph: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Error threshold; when absent, `0.1 · 10^{SNR/10}`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    #[serde(default)]
    pub params: FamilyParams,
    /// Failed graph draws are redrawn up to this many times in total.
    #[serde(default = "default_attempts")]
    pub max_draw_attempts: usize,
}

impl ExperimentConfig {
    pub fn new(family: Family, sizes: Vec<usize>, master_seed: u64) -> Self {
        Self {
            family,
            sizes,
            graphs_per_size: default_graphs(),
            trials_per_graph: default_trials(),
            mu: default_mu(),
            snr_db: default_snr(),
            epsilon: None,
            estimators: default_estimators(),
            master_seed,
            params: FamilyParams::default(),
            max_draw_attempts: default_attempts(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolved_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| 0.1 * 10f64.powf(self.snr_db / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidParameter("sizes must be nonempty".into()));
        }
        if self.graphs_per_size == 0 || self.trials_per_graph == 0 {
            return Err(Error::InvalidParameter("graphs_per_size and trials_per_graph must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if self.max_draw_attempts == 0 {
            return Err(Error::InvalidParameter("max_draw_attempts must be positive".into()));
        }
        let eps = self.resolved_epsilon();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {eps} must be positive")));
        }
        snr_to_p1(self.mu, self.snr_db)?;
        Ok(())
    }
}

/// The probe node: the largest `v_{1,k}` strictly below `1/√N`, or the
/// smallest entry (lowest index on ties) when no entry is below.
pub fn select_node(v1: &DVector<f64>) -> usize {
    let cut = 1.0 / (v1.len() as f64).sqrt();
    let mut best: Option<usize> = None;
    for (k, &v) in v1.iter().enumerate() {
        if v < cut && best.is_none_or(|b| v > v1[b]) {
            best = Some(k);
        }
    }
    best.unwrap_or_else(|| {
        (0..v1.len())
            .min_by(|&a, &b| v1[a].total_cmp(&v1[b]).then(a.cmp(&b)))
            .expect("nonempty vector")
    })
}

/// One graph realization with its stationary process.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub shift: ShiftOperator,
    pub decomposition: SpectralDecomposition,
    pub psd: DVector<f64>,
    pub mu: f64,
}

/// Draws the graph, shift and PSD of `family` at size `n`.
pub fn build_instance(family: Family, n: usize, mu: f64, snr_db: f64, params: &FamilyParams, rng: &mut Rng) -> Result<Instance> {
    let p1 = snr_to_p1(mu, snr_db)?;
    let (graph, shift) = match family {
        Family::Er => {
            let g = erdos_renyi(n, params.p_er, rng)?;
            let s = adjacency_shift(&g)?;
            (g, s)
        }
        Family::Sbm => {
            let g = sbm(n, params.communities, params.p_in, params.p_out, rng)?;
            let s = adjacency_shift(&g)?;
            (g, s)
        }
        Family::Covariance => {
            let cg = covariance_graph(n, params.covariance_samples, rng)?;
            (cg.graph, cg.shift)
        }
        Family::Gmrf => {
            let net = sensor_network(n, params.sensor(), rng)?;
            let s = adjacency_shift(&net.graph)?;
            (net.graph, s)
        }
    };
    let decomposition = decompose(&shift)?;
    let psd = match family {
        Family::Er | Family::Sbm => logspace_psd(n, p1, params.dc_rule)?,
        Family::Covariance => DVector::from_element(n, p1),
        Family::Gmrf => {
            let a = params.gmrf_a_scale / decomposition.lambda1();
            gmrf_psd_calibrated(&decomposition, a, p1)?.0
        }
    };
    Ok(Instance { graph, shift, decomposition, psd, mu })
}

/// Per-graph result for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorKind,
    pub errors: u64,
    pub trials: u64,
    pub err_prob: f64,
    /// Binomial standard error from the empirical probability.
    pub std_err: f64,
    /// Analytic variance of the estimate at the probe node.
    pub variance: f64,
    pub bound: ChebyshevBound,
    /// Mean of `‖μ̂ - μ v_1‖² / N` over the trials.
    pub mse_empirical: f64,
    /// `tr C_μ̂ / N`.
    pub mse_analytic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphOutcome {
    pub n: usize,
    pub graph_index: usize,
    /// Probe node, 0-based.
    pub node: usize,
    pub lambda1: f64,
    pub near_degenerate: bool,
    pub dominance: DominanceViolations,
    pub estimators: Vec<EstimatorOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub family: Family,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub err_prob_mean: f64,
    pub err_prob_min: f64,
    pub err_prob_max: f64,
    /// Binomial standard error of `err_prob_mean`.
    pub err_prob_se: f64,
    /// Raw Chebyshev bounds.
    pub bound_mean: f64,
    pub bound_min: f64,
    pub bound_max: f64,
    pub mse_mean: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub epsilon: f64,
    pub rows: Vec<ReportRow>,
    pub graphs: Vec<GraphOutcome>,
    pub dominance_violations: DominanceViolations,
    /// Graph draws that failed and were redrawn.
    pub redrawn: usize,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn row(&self, n: usize, estimator: EstimatorKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.n == n && r.estimator == estimator)
    }

    /// CSV with columns `family,N,estimator,err_prob_mean,err_prob_min,
    /// err_prob_max,bound_mean,bound_min,bound_max,mse_mean,seed`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("family,N,estimator,err_prob_mean,err_prob_min,err_prob_max,bound_mean,bound_min,bound_max,mse_mean,seed\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.family.name(),
                r.n,
                r.estimator.name(),
                fmt_f64(r.err_prob_mean),
                fmt_f64(r.err_prob_min),
                fmt_f64(r.err_prob_max),
                fmt_f64(r.bound_mean),
                fmt_f64(r.bound_min),
                fmt_f64(r.bound_max),
                fmt_f64(r.mse_mean),
                r.seed
            )
            .expect("writing to a string");
        }
        out
    }
}

/// Counts from one block of trials.
#[derive(Debug, Clone, Default)]
struct BlockTally {
    errors: Vec<u64>,
    sq_err: Vec<f64>,
}

fn run_block(
    inst: &Instance,
    sampler: &Sampler,
    estimators: &[EstimatorKind],
    node: usize,
    epsilon: f64,
    trials: usize,
    mut rng: Rng,
) -> BlockTally {
    let n = inst.shift.n();
    let lambda1 = inst.decomposition.lambda1();
    let v1 = inst.decomposition.perron_vector();
    let truth = sampler.mean();
    let mut averager = ShiftAverager::new(&inst.shift, lambda1, n).expect("positive Perron root");
    let mut w = DVector::zeros(n);
    let mut x = DVector::zeros(n);
    let mut est = DVector::zeros(n);
    let mut tally = BlockTally { errors: vec![0; estimators.len()], sq_err: vec![0.0; estimators.len()] };
    for _ in 0..trials {
        sampler.sample_into(&mut rng, &mut w, &mut x);
        for (e, kind) in estimators.iter().enumerate() {
            match kind {
                EstimatorKind::ShiftAverage => averager.run(&x, &mut est),
                EstimatorKind::Optimal => {
                    let c = v1.dot(&x);
                    est.copy_from(&v1);
                    est *= c;
                }
            }
            if (est[node] - truth[node]).abs() > epsilon {
                tally.errors[e] += 1;
            }
            tally.sq_err[e] += (&est - truth).norm_squared();
        }
    }
    tally
}

/// Estimator PSD (`q` or `r`) used for the analytic quantities.
fn estimator_spectrum(inst: &Instance, kind: EstimatorKind) -> Result<DVector<f64>> {
    let d = &inst.decomposition;
    match kind {
        EstimatorKind::ShiftAverage => estimator_psd(&inst.psd, d.eigenvalues(), d.lambda1(), d.n()),
        EstimatorKind::Optimal => {
            let e1 = DVector::from_fn(d.n(), |i, _| if i == 0 { Complex64::ONE } else { Complex64::ZERO });
            filtered_psd(&inst.psd, &e1)
        }
    }
}

/// Runs the trials of one graph realization.
pub fn evaluate_instance(
    inst: &Instance,
    estimators: &[EstimatorKind],
    epsilon: f64,
    trials: usize,
    seed_path: (u64, &[u64]),
) -> Result<(usize, Vec<EstimatorOutcome>, DominanceViolations)> {
    let d = &inst.decomposition;
    let n = d.n();
    let node = select_node(&d.perron_vector());
    let process = WssProcess::new(d.clone(), inst.mu, inst.psd.clone())?;
    let sampler = process.sampler()?;

    let blocks = trials.div_ceil(BLOCK);
    let (master, path) = seed_path;
    let tallies: Vec<BlockTally> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut block_path = path.to_vec();
            block_path.push(b as u64);
            let size = BLOCK.min(trials - b * BLOCK);
            run_block(inst, &sampler, estimators, node, epsilon, size, child_rng(master, &block_path))
        })
        .collect();

    let q_shift = estimator_psd(&inst.psd, d.eigenvalues(), d.lambda1(), n)?;
    let dominance = dominance_violations(&inst.psd, &q_shift, d)?;

    let mut outcomes = Vec::with_capacity(estimators.len());
    for (e, &kind) in estimators.iter().enumerate() {
        let errors: u64 = tallies.iter().map(|t| t.errors[e]).sum();
        let sq: f64 = tallies.iter().fold(0.0, |acc, t| acc + t.sq_err[e]);
        let spectrum = estimator_spectrum(inst, kind)?;
        let variance = node_variance(&spectrum, d, node)?;
        let err_prob = errors as f64 / trials as f64;
        outcomes.push(EstimatorOutcome {
            estimator: kind,
            errors,
            trials: trials as u64,
            err_prob,
            std_err: (err_prob * (1.0 - err_prob) / trials as f64).sqrt(),
            variance,
            bound: chebyshev_bound(variance, epsilon)?,
            mse_empirical: sq / (trials as f64 * n as f64),
            mse_analytic: mse(&spectrum) / n as f64,
        });
    }
    Ok((node, outcomes, dominance))
}

/// Runs the full Monte-Carlo experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let epsilon = cfg.resolved_epsilon();
    let family = cfg.family;
    let mut graphs = Vec::new();
    let mut rows = Vec::new();
    let mut total_dominance = DominanceViolations::default();
    let mut redrawn = 0;

    for &n in &cfg.sizes {
        let mut per_size: Vec<GraphOutcome> = Vec::with_capacity(cfg.graphs_per_size);
        for gi in 0..cfg.graphs_per_size {
            let mut attempt = 0;
            let inst = loop {
                let path = [GRAPH_STREAM, family.code(), n as u64, gi as u64, attempt as u64];
                let mut rng = child_rng(cfg.master_seed, &path);
                match build_instance(family, n, cfg.mu, cfg.snr_db, &cfg.params, &mut rng) {
                    Ok(inst) => break inst,
                    Err(e) => {
                        attempt += 1;
                        redrawn += 1;
                        log::warn!("{} graph {gi} at N = {n}: draw failed ({e}), redrawing", family.name());
                        if attempt >= cfg.max_draw_attempts {
                            return Err(e);
                        }
                    }
                }
            };
            let regime = classify_spectrum(&inst.decomposition, 0.5);
            if regime.near_degenerate {
                log::warn!("{} graph {gi} at N = {n}: Perron eigenvalue is nearly repeated", family.name());
            }
            let trial_path = [TRIAL_STREAM, family.code(), n as u64, gi as u64];
            let (node, estimators, dominance) =
                evaluate_instance(&inst, &cfg.estimators, epsilon, cfg.trials_per_graph, (cfg.master_seed, &trial_path))?;
            total_dominance += dominance;
            per_size.push(GraphOutcome {
                n,
                graph_index: gi,
                node,
                lambda1: inst.decomposition.lambda1(),
                near_degenerate: regime.near_degenerate,
                dominance,
                estimators,
            });
        }
        for (e, &kind) in cfg.estimators.iter().enumerate() {
            let outs: Vec<&EstimatorOutcome> = per_size.iter().map(|g| &g.estimators[e]).collect();
            let count = outs.len() as f64;
            let probs: Vec<f64> = outs.iter().map(|o| o.err_prob).collect();
            let bounds: Vec<f64> = outs.iter().map(|o| o.bound.raw).collect();
            let se = outs.iter().map(|o| o.std_err * o.std_err).sum::<f64>().sqrt() / count;
            rows.push(ReportRow {
                family,
                n,
                estimator: kind,
                err_prob_mean: probs.iter().sum::<f64>() / count,
                err_prob_min: probs.iter().copied().fold(f64::INFINITY, f64::min),
                err_prob_max: probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                err_prob_se: se,
                bound_mean: bounds.iter().sum::<f64>() / count,
                bound_min: bounds.iter().copied().fold(f64::INFINITY, f64::min),
                bound_max: bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mse_mean: outs.iter().map(|o| o.mse_empirical).sum::<f64>() / count,
                seed: cfg.master_seed,
            });
        }
        log::info!("{} N = {n}: {} graphs done", family.name(), cfg.graphs_per_size);
        graphs.extend(per_size);
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        epsilon,
        rows,
        graphs,
        dominance_violations: total_dominance,
        redrawn,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Settings shared by the sensor-network field experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSettings {
    pub mu: f64,
    pub snr_db: f64,
    pub params: FamilyParams,
    /// Zero PSD: every realization equals the mean field.
    pub noiseless: bool,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self { mu: default_mu(), snr_db: default_snr(), params: FamilyParams::default(), noiseless: false }
    }
}

fn field_instance(n: usize, settings: &FieldSettings, rng: &mut Rng) -> Result<(Instance, Vec<[f64; 2]>)> {
    let net = sensor_network(n, settings.params.sensor(), rng)?;
    let shift = adjacency_shift(&net.graph)?;
    let decomposition = decompose(&shift)?;
    let psd = if settings.noiseless {
        DVector::zeros(n)
    } else {
        let a = settings.params.gmrf_a_scale / decomposition.lambda1();
        gmrf_psd_calibrated(&decomposition, a, snr_to_p1(settings.mu, settings.snr_db)?)?.0
    };
    Ok((Instance { graph: net.graph, shift, decomposition, psd, mu: settings.mu }, net.positions))
}

#[derive(Debug, Clone)]
pub struct FieldDemo {
    pub positions: Vec<[f64; 2]>,
    pub raw: DVector<f64>,
    pub shift_average: DVector<f64>,
    pub true_mean: DVector<f64>,
    /// `‖x - μ v_1‖ / ‖μ v_1‖`.
    pub rel_err_raw: f64,
    /// `‖μ̂ - μ v_1‖ / ‖μ v_1‖`.
    pub rel_err_avg: f64,
}

impl FieldDemo {
    /// CSV with columns `node,x,y,raw,shift_average,true_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,x,y,raw,shift_average,true_mean\n");
        for k in 0..self.raw.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k + 1,
                fmt_f64(self.positions[k][0]),
                fmt_f64(self.positions[k][1]),
                fmt_f64(self.raw[k]),
                fmt_f64(self.shift_average[k]),
                fmt_f64(self.true_mean[k])
            )
            .expect("writing to a string");
        }
        out
    }
}

/// One realization of a GMRF on a sensor network and its shift average.
pub fn gmrf_field_demo(n: usize, seed: u64, settings: &FieldSettings) -> Result<FieldDemo> {
    if n < 10 {
        return Err(Error::InvalidSize(format!("field demo needs N >= 10, got {n}")));
    }
    let mut rng = child_rng(seed, &[DEMO_STREAM, n as u64]);
    let (inst, positions) = field_instance(n, settings, &mut rng)?;
    let sampler = WssProcess::new(inst.decomposition.clone(), inst.mu, inst.psd.clone())?.sampler()?;
    let raw = sampler.sample(&mut rng);
    let mut avg = DVector::zeros(n);
    ShiftAverager::new(&inst.shift, inst.decomposition.lambda1(), n)?.run(&raw, &mut avg);
    let truth = sampler.mean().clone();
    let scale = truth.norm();
    Ok(FieldDemo {
        positions,
        rel_err_raw: (&raw - &truth).norm() / scale,
        rel_err_avg: (&avg - &truth).norm() / scale,
        raw,
        shift_average: avg,
        true_mean: truth,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// Mean over networks of the per-network average `‖μ̂ - μ v_1‖² / N`.
    pub mse_empirical: f64,
    /// Standard error of `mse_empirical`.
    pub mse_se: f64,
    /// Mean over networks of `tr C_μ̂ / N`.
    pub mse_analytic: f64,
}

/// Empirical MSE of the shift average on sensor-network GMRFs, `networks`
/// networks per size and `realizations` draws per network.
pub fn gmrf_mse_sweep(
    sizes: &[usize],
    networks: usize,
    realizations: usize,
    master_seed: u64,
    settings: &FieldSettings,
) -> Result<Vec<SweepRow>> {
    if networks == 0 || realizations == 0 {
        return Err(Error::InvalidParameter("networks and realizations must be positive".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut emp = 0.0;
        let mut var_sum = 0.0;
        let mut ana = 0.0;
        for g in 0..networks {
            let mut rng = child_rng(master_seed, &[DEMO_STREAM, Family::Gmrf.code(), n as u64, g as u64]);
            let (inst, _) = field_instance(n, settings, &mut rng)?;
            let sampler = WssProcess::new(inst.decomposition.clone(), inst.mu, inst.psd.clone())?.sampler()?;
            let seed = derive(master_seed, &[TRIAL_STREAM, Family::Gmrf.code(), n as u64, g as u64]);
            let values: Vec<f64> = (0..realizations.div_ceil(BLOCK))
                .into_par_iter()
                .flat_map_iter(|b| {
                    let mut rng = child_rng(seed, &[b as u64]);
                    let mut averager =
                        ShiftAverager::new(&inst.shift, inst.decomposition.lambda1(), n).expect("positive Perron root");
                    let mut out = DVector::zeros(n);
                    let count = BLOCK.min(realizations - b * BLOCK);
                    (0..count)
                        .map(|_| {
                            let x = sampler.sample(&mut rng);
                            averager.run(&x, &mut out);
                            (&out - sampler.mean()).norm_squared() / n as f64
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let mean = values.iter().sum::<f64>() / realizations as f64;
            let var = if realizations > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (realizations - 1) as f64
            } else {
                0.0
            };
            emp += mean;
            var_sum += var / realizations as f64;
            let q = estimator_psd(&inst.psd, inst.decomposition.eigenvalues(), inst.decomposition.lambda1(), n)?;
            ana += mse(&q) / n as f64;
        }
        let g = networks as f64;
        rows.push(SweepRow { n, mse_empirical: emp / g, mse_se: var_sum.sqrt() / g, mse_analytic: ana / g });
    }
    Ok(rows)
}

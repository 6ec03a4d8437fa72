//! Simulation engine for the limit theorems: chi-square convergence of the
//! pivotal statistic, Gaussian block variances, Haar convergence of the
//! group-valued statistics, and confidence-region coverage.
//!
//! Replicate k draws all of its randomness from the stream keyed by
//! `(seed, k)`, so results are bit-identical for a given configuration no
//! matter how many worker threads run the replicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flag::Flag;
use crate::inference::{
    anderson_statistics, confidence_region_contains, g_statistic_from, h_statistic_from,
    pivotal_statistic, sample_covariance, CovModel, Denominator,
};
use crate::matcore::{chi2_cdf, chi2_quantile, conditional_haar_orthogonal, Mat, RngStream};

/// Stream indices from this base are reserved for reference ensembles so
/// they never collide with replicate streams.
const REFERENCE_STREAM_BASE: u64 = 1 << 62;

/// Simulation configuration.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub model: CovModel,
    /// Sample size per replicate.
    pub n: usize,
    /// Number of replicates.
    pub reps: usize,
    /// Level used by the coverage check.
    pub alpha: f64,
    pub seed: u64,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain("replicate sample size must be at least 2"));
        }
        if self.reps < 1 {
            return Err(Error::domain("at least one replicate is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain("alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Histogram with explicit bin edges (`edges.len() == counts.len() + 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn collect(samples: &[f64], hi: f64, bins: usize) -> Histogram {
        let edges: Vec<f64> = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
        let mut counts = vec![0usize; bins];
        for &x in samples {
            let idx = ((x / hi * bins as f64).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Aggregated simulation output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McResult {
    /// Pivotal statistics of the completed replicates, in replicate order.
    pub statistics: Vec<f64>,
    /// Replicates where at least one block was truncated.
    pub truncation_count: usize,
    /// Replicates aborted by domain errors (kept out of `statistics`).
    pub aborted: usize,
    /// KS distance between `statistics` and the chi-square law with `dof`
    /// degrees of freedom.
    pub ks_distance: f64,
    /// Fraction of completed replicates whose confidence region contains
    /// the true flag.
    pub coverage: f64,
    pub histogram: Histogram,
    pub dof: usize,
}

/// Spawns `threads` workers (0 = available parallelism) over `count` tasks
/// and returns results in task order.
fn parallel_map<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = resolve_threads(threads).min(count.max(1));
    if threads <= 1 {
        return (0..count).map(f).collect();
    }
    let mut results: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        let f = &f;
        let mut rest: &mut [Option<T>] = &mut results;
        let mut base = 0usize;
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            let start = base;
            scope.spawn(move || {
                for (off, slot) in head.iter_mut().enumerate() {
                    *slot = Some(f(start + off));
                }
            });
            rest = tail;
            base += take;
        }
    });
    results.into_iter().map(|o| o.expect("worker filled every slot")).collect()
}

fn resolve_threads(threads: usize) -> usize {
    if threads > 0 {
        threads
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

/// Draws `n` iid rows from `N(0, Sigma)` as `Gamma Delta^{1/2} z`.
pub fn sample_gaussian(model: &CovModel, n: usize, rng: &mut RngStream) -> Mat {
    let d = model.d();
    let factor = model.sampling_factor();
    let mut data = Mat::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.normal();
        }
        for a in 0..d {
            let mut acc = 0.0;
            for (b, &zb) in z.iter().enumerate() {
                acc += factor[(a, b)] * zb;
            }
            data[(i, a)] = acc;
        }
    }
    data
}

struct RepOutcome {
    statistic: f64,
    truncated: bool,
    covered: bool,
}

fn run_replicate(cfg: &McConfig, true_flag: &Flag, k: usize) -> Result<RepOutcome> {
    let mut rng = RngStream::substream(cfg.seed, k as u64);
    let data = sample_gaussian(&cfg.model, cfg.n, &mut rng);
    let sigma_hat = sample_covariance(&data, Denominator::N)?;
    let report =
        pivotal_statistic(cfg.model.gamma(), &sigma_hat, cfg.model.flag_type(), cfg.n)?;
    let covered = confidence_region_contains(
        true_flag,
        &sigma_hat,
        cfg.model.flag_type(),
        cfg.n,
        cfg.alpha,
    )?;
    Ok(RepOutcome {
        statistic: report.statistic,
        truncated: report.truncation_applied,
        covered,
    })
}

/// Runs `cfg.reps` independent replicates of sample -> covariance ->
/// pivotal statistic against the model's own reference rotation, collecting
/// the statistics, truncation counts, coverage, KS distance and histogram.
pub fn replicate_pivotal(cfg: &McConfig, threads: usize) -> Result<McResult> {
    cfg.validate()?;
    let true_flag = cfg.model.true_flag();
    let outcomes = parallel_map(cfg.reps, threads, |k| run_replicate(cfg, &true_flag, k));

    let dof = crate::inference::dof(cfg.model.flag_type());
    let mut statistics = Vec::with_capacity(cfg.reps);
    let mut truncation_count = 0;
    let mut covered = 0usize;
    let mut aborted = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(rep) => {
                statistics.push(rep.statistic);
                if rep.truncated {
                    truncation_count += 1;
                }
                if rep.covered {
                    covered += 1;
                }
            }
            Err(_) => aborted += 1,
        }
    }
    if statistics.is_empty() {
        return Err(Error::Numeric("every replicate aborted".into()));
    }
    // Single-block types have a point-mass limit; the KS comparison is
    // vacuously exact there.
    let ks_distance = if dof == 0 { 0.0 } else { ks_distance(&statistics, dof)? };
    let hi = chi2_quantile(dof.max(1), 0.999)?;
    let histogram = Histogram::collect(&statistics, hi, 50);
    let coverage = covered as f64 / statistics.len() as f64;
    Ok(McResult {
        statistics,
        truncation_count,
        aborted,
        ks_distance,
        coverage,
        histogram,
        dof,
    })
}

/// Fraction of replicates whose confidence region contains the true flag.
pub fn coverage_rate(cfg: &McConfig, threads: usize) -> Result<f64> {
    replicate_pivotal(cfg, threads).map(|r| r.coverage)
}

/// One-sample Kolmogorov-Smirnov distance between `samples` and the
/// chi-square law with `dof` degrees of freedom.
pub fn ks_distance(samples: &[f64], dof: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("KS distance of an empty sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = chi2_cdf(dof, x);
        sup = sup.max((cdf - i as f64 / m).abs());
        sup = sup.max(((i + 1) as f64 / m - cdf).abs());
    }
    Ok(sup)
}

/// Two-sample Kolmogorov-Smirnov distance. Ties within and across the
/// samples are handled by comparing the empirical CDFs only at distinct
/// data values.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Empirical entry variances of the rotation blocks against their limits.
#[derive(Clone, Debug, Serialize)]
pub struct CltBlockCheck {
    /// Variance of the entries of `F_n^(i,j) = sqrt(n) E_n^(i,j)`.
    pub var_f: f64,
    /// Variance of the entries of `U_n^(i,j)`.
    pub var_u: f64,
    /// Variance of the entries of block (i,j) of the tangent statistic.
    pub var_g: f64,
    /// Limit `sigma_{i,j}^2 = lambda_i lambda_j / (lambda_i - lambda_j)^2`.
    pub sigma_sq: f64,
    /// Limit `s_{i,j}^2 = lambda_i lambda_j`.
    pub s_sq: f64,
    pub aborted: usize,
}

/// Collects the entries of `F_n^(i,j)`, `U_n^(i,j)` and the (i,j) block of
/// the tangent statistic over replicates and compares their empirical
/// variances with the limiting ones.
pub fn clt_block_check(
    cfg: &McConfig,
    i: usize,
    j: usize,
    threads: usize,
) -> Result<CltBlockCheck> {
    cfg.validate()?;
    let t = cfg.model.flag_type().clone();
    if i == j || i >= t.r() || j >= t.r() {
        return Err(Error::domain("clt_block_check needs two distinct valid block indices"));
    }
    type Entries = (Vec<f64>, Vec<f64>, Vec<f64>);
    let worker = |k: usize| -> Result<Entries> {
        let mut rng = RngStream::substream(cfg.seed, k as u64);
        let data = sample_gaussian(&cfg.model, cfg.n, &mut rng);
        let sigma_hat = sample_covariance(&data, Denominator::N)?;
        let stats = anderson_statistics(&cfg.model, &sigma_hat, cfg.n)?;
        let f_entries = stats.f_block(i, j).as_slice().to_vec();
        let u_entries = stats.u_block(i, j).as_slice().to_vec();
        let (g, truncated) = g_statistic_from(&stats, &t, i)?;
        let g_entries = if truncated {
            Vec::new()
        } else {
            let ri = t.block_range(i);
            let rj = t.block_range(j);
            g.as_mat().block(ri.start, ri.end, rj.start, rj.end).as_slice().to_vec()
        };
        Ok((f_entries, u_entries, g_entries))
    };
    let outcomes = parallel_map(cfg.reps, threads, worker);

    let mut f_all = Vec::new();
    let mut u_all = Vec::new();
    let mut g_all = Vec::new();
    let mut aborted = 0;
    for outcome in outcomes {
        match outcome {
            Ok((f, u, g)) => {
                f_all.extend(f);
                u_all.extend(u);
                g_all.extend(g);
            }
            Err(_) => aborted += 1,
        }
    }
    Ok(CltBlockCheck {
        var_f: variance(&f_all),
        var_u: variance(&u_all),
        var_g: variance(&g_all),
        sigma_sq: cfg.model.sigma_std(i, j).powi(2),
        s_sq: cfg.model.s_std(i, j).powi(2),
        aborted,
    })
}

fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Distributional comparison of the group-valued statistic for block `i`
/// against fresh conditional-Haar reference draws.
#[derive(Clone, Debug, Serialize)]
pub struct HaarCheck {
    /// Row-major per-entry two-sample KS distances (length q_i^2).
    pub entry_ks: Vec<f64>,
    /// Two-sample KS distance between the trace statistics.
    pub trace_ks: f64,
    /// Fraction of simulated draws with every diagonal entry positive.
    pub pos_diag_frequency: f64,
    pub aborted: usize,
}

/// Draws the statistic `H_n^i` over replicates and compares it entrywise
/// (plus a trace statistic) against conditional-Haar reference samples.
pub fn haar_check(cfg: &McConfig, i: usize, threads: usize) -> Result<HaarCheck> {
    cfg.validate()?;
    let t = cfg.model.flag_type().clone();
    if i >= t.r() {
        return Err(Error::domain("haar_check block index out of range"));
    }
    let q = t.multiplicity(i);
    let worker = |k: usize| -> Result<Mat> {
        let mut rng = RngStream::substream(cfg.seed, k as u64);
        let data = sample_gaussian(&cfg.model, cfg.n, &mut rng);
        let sigma_hat = sample_covariance(&data, Denominator::N)?;
        let stats = anderson_statistics(&cfg.model, &sigma_hat, cfg.n)?;
        // The truncated value (identity) is part of the statistic itself.
        let (h, _) = h_statistic_from(&stats, &t, i)?;
        Ok(h.into_mat())
    };
    let outcomes = parallel_map(cfg.reps, threads, worker);

    let mut draws: Vec<Mat> = Vec::with_capacity(cfg.reps);
    let mut aborted = 0;
    for outcome in outcomes {
        match outcome {
            Ok(h) => draws.push(h),
            Err(_) => aborted += 1,
        }
    }
    if draws.is_empty() {
        return Err(Error::Numeric("every replicate aborted".into()));
    }

    let refs: Vec<Mat> = (0..draws.len())
        .map(|k| {
            let mut rng = RngStream::substream(cfg.seed, REFERENCE_STREAM_BASE + k as u64);
            conditional_haar_orthogonal(q, &mut rng).into_mat()
        })
        .collect();

    let mut entry_ks = Vec::with_capacity(q * q);
    for a in 0..q {
        for b in 0..q {
            let sim: Vec<f64> = draws.iter().map(|m| m[(a, b)]).collect();
            let reference: Vec<f64> = refs.iter().map(|m| m[(a, b)]).collect();
            entry_ks.push(ks_two_sample(&sim, &reference));
        }
    }
    let sim_tr: Vec<f64> = draws.iter().map(|m| m.trace()).collect();
    let ref_tr: Vec<f64> = refs.iter().map(|m| m.trace()).collect();
    let trace_ks = ks_two_sample(&sim_tr, &ref_tr);
    let pos = draws
        .iter()
        .filter(|m| (0..q).all(|a| m[(a, a)] > 0.0))
        .count();
    Ok(HaarCheck {
        entry_ks,
        trace_ks,
        pos_diag_frequency: pos as f64 / draws.len() as f64,
        aborted,
    })
}

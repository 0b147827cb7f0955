//! Binomial logistic regression via iteratively reweighted least squares,
//! with Wald inference, agent fixed effects, and variance inflation factors.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::behavior::choices::ChoiceEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change declaring convergence.
    pub tol: f64,
    /// Minimum events per agent for that agent's data to be included.
    pub min_events_per_agent: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            min_events_per_agent: 10,
        }
    }
}

/// Result of the raw IRLS solve on a prepared design matrix.
#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub beta: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub z_scores: DVector<f64>,
    pub p_values: DVector<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Full GLM output over choice events.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub predictor_names: Vec<String>,
    /// Standardized-unit coefficients, one per predictor.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Significance stars at 0.05 / 0.01 / 0.001.
    pub stars: Vec<&'static str>,
    pub vif: Vec<f64>,
    /// Per-agent fixed-effect intercepts, (agent_id, value).
    pub agent_intercepts: Vec<(usize, f64)>,
    pub n_obs: usize,
    pub n_events: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        let mu = sigmoid(eta[i]).clamp(1e-12, 1.0 - 1e-12);
        ll += y[i] * mu.ln() + (1.0 - y[i]) * (1.0 - mu).ln();
    }
    ll
}

/// IRLS for binomial logistic regression. Convergence: relative
/// log-likelihood change below `tol` (or `max_iter` reached, which is an
/// error). Perfect separation and rank deficiency are flagged as warnings
/// with coefficients still reported.
pub fn fit_logistic_irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &GlmOptions,
) -> Result<IrlsFit> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 || p == 0 {
        return Err(Error::Glm("empty design matrix".into()));
    }
    let mut beta = DVector::zeros(p);
    let mut warnings = Vec::new();
    let mut ll_prev = log_likelihood(x, y, &beta);
    let mut ll_trace = vec![ll_prev];
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::zeros(p, p);

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let eta = x * &beta;
        let mut w_sqrt_x = x.clone();
        let mut residual = DVector::zeros(n);
        let mut min_w = f64::INFINITY;
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            min_w = min_w.min(mu * (1.0 - mu));
            for j in 0..p {
                w_sqrt_x[(i, j)] = x[(i, j)] * w;
            }
            residual[i] = y[i] - mu;
        }
        // Fisher information X^T W X and score X^T (y - mu).
        info = x.transpose() * &w_sqrt_x;
        let score = x.transpose() * &residual;
        let delta = match info.clone().cholesky() {
            Some(chol) => chol.solve(&score),
            None => {
                if !warnings.iter().any(|w: &String| w.contains("collinear")) {
                    warnings.push(
                        "rank-deficient information matrix (collinear predictors); ridge jitter applied"
                            .to_owned(),
                    );
                }
                let mut jittered = info.clone();
                for j in 0..p {
                    jittered[(j, j)] += 1e-8;
                }
                jittered
                    .cholesky()
                    .ok_or_else(|| Error::Glm("information matrix not positive definite".into()))?
                    .solve(&score)
            }
        };
        beta += &delta;
        let ll = log_likelihood(x, y, &beta);
        ll_trace.push(ll);
        let rel = (ll - ll_prev).abs() / (ll.abs() + 1.0);
        if min_w < 1e-9 || beta.amax() > 15.0 {
            if !warnings.iter().any(|w: &String| w.contains("separation")) {
                warnings.push(
                    "possible perfect separation: fitted probabilities at the boundary".to_owned(),
                );
            }
        }
        if rel < opts.tol {
            converged = true;
            ll_prev = ll;
            break;
        }
        ll_prev = ll;
    }
    if !converged && !warnings.iter().any(|w| w.contains("separation")) {
        return Err(Error::Glm(format!(
            "IRLS did not converge after {} iterations; log-likelihood trace: {:?}",
            opts.max_iter,
            &ll_trace[ll_trace.len().saturating_sub(6)..]
        )));
    }

    // Wald standard errors from the inverse Fisher information.
    let cov = match info.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            let mut jittered = info;
            for j in 0..p {
                jittered[(j, j)] += 1e-8;
            }
            jittered
                .cholesky()
                .ok_or_else(|| Error::Glm("information matrix not invertible".into()))?
                .inverse()
        }
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut std_errors = DVector::zeros(p);
    let mut z_scores = DVector::zeros(p);
    let mut p_values = DVector::zeros(p);
    for j in 0..p {
        std_errors[j] = cov[(j, j)].max(0.0).sqrt();
        z_scores[j] = if std_errors[j] > 0.0 {
            beta[j] / std_errors[j]
        } else {
            0.0
        };
        p_values[j] = 2.0 * (1.0 - normal.cdf(z_scores[j].abs()));
    }
    Ok(IrlsFit {
        beta,
        std_errors,
        z_scores,
        p_values,
        log_likelihood: ll_prev,
        iterations,
        converged,
        warnings,
    })
}

/// Variance inflation factors: `VIF_j = 1 / (1 - R^2_j)` from the OLS of
/// predictor j on the remaining predictors (with intercept). Exactly
/// collinear columns report infinity.
pub fn vif(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if p < 2 {
        return Err(Error::Glm("VIF needs at least 2 predictors".into()));
    }
    if n <= p {
        return Err(Error::Glm("VIF needs more rows than predictors".into()));
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        // Design: intercept + all other columns.
        let mut z = DMatrix::zeros(n, p);
        for i in 0..n {
            z[(i, 0)] = 1.0;
            let mut k = 1;
            for c in 0..p {
                if c != j {
                    z[(i, k)] = x[(i, c)];
                    k += 1;
                }
            }
        }
        let target = x.column(j).into_owned();
        let gram = z.transpose() * &z;
        let rhs = z.transpose() * &target;
        let Some(chol) = gram.cholesky() else {
            out.push(f64::INFINITY);
            continue;
        };
        let coef = chol.solve(&rhs);
        let fitted = &z * &coef;
        let mean = target.mean();
        let mut sse = 0.0;
        let mut sst = 0.0;
        for i in 0..n {
            sse += (target[i] - fitted[i]).powi(2);
            sst += (target[i] - mean).powi(2);
        }
        if sst <= 0.0 {
            out.push(f64::INFINITY);
            continue;
        }
        let r2 = 1.0 - sse / sst;
        if r2 >= 1.0 - 1e-12 {
            out.push(f64::INFINITY);
        } else {
            out.push(1.0 / (1.0 - r2));
        }
    }
    Ok(out)
}

pub const PREDICTOR_NAMES: [&str; 6] = [
    "EatRate",
    "DrinkRate",
    "PredRate",
    "Recency",
    "Dwelltime",
    "CowCount",
];
pub const UNCERTAINTY_NAME: &str = "Uncertainty";

/// Standardized design matrix over (event, candidate) rows, plus agent
/// fixed-effect dummies (no global intercept).
pub struct GlmDesign {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub predictor_names: Vec<String>,
    pub n_predictors: usize,
    pub agent_ids: Vec<usize>,
    pub n_events: usize,
    pub warnings: Vec<String>,
}

pub fn build_design(events: &[ChoiceEvent], opts: &GlmOptions) -> Result<GlmDesign> {
    let mut warnings = Vec::new();
    // Enforce the per-agent event floor.
    let mut per_agent: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for e in events {
        *per_agent.entry(e.agent_id).or_insert(0) += 1;
    }
    let kept_agents: Vec<usize> = per_agent
        .iter()
        .filter(|(_, &n)| n >= opts.min_events_per_agent)
        .map(|(&id, _)| id)
        .collect();
    for (&id, &n) in &per_agent {
        if n < opts.min_events_per_agent {
            warnings.push(format!(
                "agent {id} dropped: {n} events < {}",
                opts.min_events_per_agent
            ));
        }
    }
    let events: Vec<&ChoiceEvent> = events
        .iter()
        .filter(|e| kept_agents.contains(&e.agent_id))
        .collect();
    if events.is_empty() {
        return Err(Error::Glm(
            "no events remain after the per-agent floor".into(),
        ));
    }
    let with_uncertainty = events
        .iter()
        .all(|e| e.candidates.iter().all(|c| c.uncertainty.is_some()));
    if !with_uncertainty {
        warnings.push("Uncertainty predictor absent (auxiliary head disabled)".to_owned());
    }
    let mut predictor_names: Vec<String> = PREDICTOR_NAMES.iter().map(|s| s.to_string()).collect();
    if with_uncertainty {
        predictor_names.push(UNCERTAINTY_NAME.to_owned());
    }
    let n_predictors = predictor_names.len();

    let n_rows: usize = events.iter().map(|e| e.candidates.len()).sum();
    let p = n_predictors + kept_agents.len();
    let mut x = DMatrix::zeros(n_rows, p);
    let mut y = DVector::zeros(n_rows);
    let mut row = 0;
    for e in &events {
        for c in &e.candidates {
            x[(row, 0)] = c.eat_rate;
            x[(row, 1)] = c.drink_rate;
            x[(row, 2)] = c.pred_rate;
            x[(row, 3)] = c.recency;
            x[(row, 4)] = c.dwelltime;
            x[(row, 5)] = c.cow_count;
            if with_uncertainty {
                x[(row, 6)] = c.uncertainty.unwrap();
            }
            let agent_col = n_predictors
                + kept_agents
                    .iter()
                    .position(|&id| id == e.agent_id)
                    .expect("agent kept");
            x[(row, agent_col)] = 1.0;
            y[row] = if c.chosen { 1.0 } else { 0.0 };
            row += 1;
        }
    }
    // Standardize predictor columns (agent dummies untouched).
    for j in 0..n_predictors {
        let col = x.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_rows as f64;
        let sd = var.sqrt();
        if sd < 1e-12 {
            warnings.push(format!(
                "predictor {} is constant; centered to zero",
                predictor_names[j]
            ));
            for i in 0..n_rows {
                x[(i, j)] = 0.0;
            }
        } else {
            for i in 0..n_rows {
                x[(i, j)] = (x[(i, j)] - mean) / sd;
            }
        }
    }
    Ok(GlmDesign {
        x,
        y,
        predictor_names,
        n_predictors,
        agent_ids: kept_agents,
        n_events: events.len(),
        warnings,
    })
}

/// Fit the revisitation-choice GLM: binomial logistic regression of the
/// chosen indicator on standardized patch-history predictors with agent
/// fixed effects, reported with Wald inference and VIF diagnostics.
pub fn fit_glm_logistic(events: &[ChoiceEvent], opts: &GlmOptions) -> Result<GlmFit> {
    let design = build_design(events, opts)?;
    let fit = fit_logistic_irls(&design.x, &design.y, opts)?;
    let predictors_only = design.x.columns(0, design.n_predictors).into_owned();
    let vif_values = if design.n_predictors >= 2 {
        vif(&predictors_only)?
    } else {
        vec![1.0; design.n_predictors]
    };
    let stars = |p: f64| -> &'static str {
        if p < 0.001 {
            "***"
        } else if p < 0.01 {
            "**"
        } else if p < 0.05 {
            "*"
        } else {
            ""
        }
    };
    let mut warnings = design.warnings.clone();
    warnings.extend(fit.warnings.clone());
    Ok(GlmFit {
        predictor_names: design.predictor_names.clone(),
        coefficients: (0..design.n_predictors).map(|j| fit.beta[j]).collect(),
        std_errors: (0..design.n_predictors).map(|j| fit.std_errors[j]).collect(),
        z_scores: (0..design.n_predictors).map(|j| fit.z_scores[j]).collect(),
        p_values: (0..design.n_predictors).map(|j| fit.p_values[j]).collect(),
        stars: (0..design.n_predictors)
            .map(|j| stars(fit.p_values[j]))
            .collect(),
        vif: vif_values,
        agent_intercepts: design
            .agent_ids
            .iter()
            .enumerate()
            .map(|(k, &id)| (id, fit.beta[design.n_predictors + k]))
            .collect(),
        n_obs: design.x.nrows(),
        n_events: design.n_events,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
        warnings,
    })
}

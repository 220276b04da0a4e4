//! Household record selection: simple random sampling, alias-table weighted
//! sampling, and moment matching through a minimum-norm quadratic program.

use rand::Rng;

use crate::alias::{AliasError, AliasTable};
use crate::ingest::{MicrodataTable, MomentTarget};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("microdata has no household records")]
    EmptyMicrodata,
    #[error("{items} items but {weights} weights")]
    LengthMismatch { items: usize, weights: usize },
    #[error("weights: {0}")]
    Weights(#[from] AliasError),
    #[error("moment {moment} is outside the feasible interval [{min}, {max}]")]
    Infeasible { moment: f64, min: f64, max: f64 },
    #[error("no values to match a moment against")]
    NoValues,
    #[error("`{0}` is categorical; moment matching needs an ordinal or continuous variable")]
    Categorical(String),
    #[error("`{0}` is not a microdata variable")]
    UnknownVariable(String),
    #[error("household `{record_id}` has no numeric value for `{variable}`")]
    MissingValue { record_id: String, variable: String },
    #[error("active-set iteration did not finish in {0} steps")]
    NoConvergence(usize),
}

/// `n` household indices drawn uniformly with replacement.
pub fn srs_sample<R: Rng + ?Sized>(micro: &MicrodataTable, n: usize, rng: &mut R) -> Result<Vec<usize>, SamplingError> {
    let len = micro.households().len();
    if len == 0 {
        return Err(SamplingError::EmptyMicrodata);
    }
    Ok((0..n).map(|_| rng.random_range(0..len)).collect())
}

/// `n` draws with replacement, item i with probability weights[i] / Σ weights.
pub fn weighted_sample<T: Clone, R: Rng + ?Sized>(
    items: &[T],
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<T>, SamplingError> {
    if items.len() != weights.len() {
        return Err(SamplingError::LengthMismatch {
            items: items.len(),
            weights: weights.len(),
        });
    }
    let table = AliasTable::new(weights)?;
    Ok((0..n).map(|_| items[table.sample(rng)].clone()).collect())
}

/// Minimum-norm solution on a free set: w_i = 1/|F| + γ (n_i − mean) for
/// i ∈ F, 0 elsewhere. `None` when the moment is unreachable on F.
fn free_set_solution(values: &[f64], free: &[bool], moment: f64) -> Option<Vec<f64>> {
    let count = free.iter().filter(|&&f| f).count();
    if count == 0 {
        return None;
    }
    let mean = values.iter().zip(free).filter(|(_, &f)| f).map(|(v, _)| v).sum::<f64>() / count as f64;
    let ss: f64 = values
        .iter()
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|(v, _)| (v - mean).powi(2))
        .sum();
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let gamma = if ss > 1e-24 * scale * scale {
        (moment - mean) / ss
    } else if (moment - mean).abs() <= 1e-12 * scale {
        0.0
    } else {
        return None;
    };
    Some(
        values
            .iter()
            .zip(free)
            .map(|(v, &f)| if f { 1.0 / count as f64 + gamma * (v - mean) } else { 0.0 })
            .collect(),
    )
}

/// Solves  min ½‖w‖²  s.t.  Σ w_i = 1,  Σ n_i w_i = moment,  w ≥ 0.
///
/// Dual active-set iteration with an identity Hessian: start from the
/// equality-constrained minimum, repeatedly take the most violated bound
/// w_p ≥ 0, and move along the projection of e_p off span{1_F, n_F}
/// (F the free indices) until either w_p reaches 0 or an active bound's
/// multiplier would turn negative, in which case that bound is released.
pub fn qp_solve(values: &[f64], moment: f64) -> Result<Vec<f64>, SamplingError> {
    if values.is_empty() {
        return Err(SamplingError::NoValues);
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !moment.is_finite() || moment < min || moment > max {
        return Err(SamplingError::Infeasible { moment, min, max });
    }
    let n = values.len();
    if moment == min || moment == max {
        // only the extreme values can carry weight
        let at: Vec<bool> = values.iter().map(|&v| v == moment).collect();
        let k = at.iter().filter(|&&b| b).count() as f64;
        return Ok(at.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect());
    }
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-13;

    let mut free = vec![true; n];
    let mut w = free_set_solution(values, &free, moment).ok_or(SamplingError::Infeasible { moment, min, max })?;
    // multipliers of active bounds
    let mut u = vec![0.0; n];
    let max_steps = 50 * n + 100;
    let mut steps = 0;

    loop {
        let violated = (0..n)
            .filter(|&i| free[i] && w[i] < -tol)
            .min_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(p) = violated else { break };
        let mut up = 0.0;
        loop {
            steps += 1;
            if steps > max_steps {
                return Err(SamplingError::NoConvergence(max_steps));
            }
            let count = free.iter().filter(|&&f| f).count() as f64;
            let mean = (0..n).filter(|&i| free[i]).map(|i| values[i]).sum::<f64>() / count;
            let ss: f64 = (0..n).filter(|&i| free[i]).map(|i| (values[i] - mean).powi(2)).sum();
            let cp = values[p] - mean;
            let beta = if ss > 1e-24 * scale * scale { cp / ss } else { 0.0 };
            let alpha = 1.0 / count;
            // e_p = z + a·1 + b·n + Σ_{j active} r_j e_j
            let (a, b) = (alpha - beta * mean, beta);
            let z: Vec<f64> = (0..n)
                .map(|i| {
                    if !free[i] {
                        0.0
                    } else {
                        let proj = alpha + beta * (values[i] - mean);
                        if i == p {
                            1.0 - proj
                        } else {
                            -proj
                        }
                    }
                })
                .collect();
            let r = |j: usize| -(a + b * values[j]);
            let blocking = (0..n)
                .filter(|&j| !free[j] && r(j) > 0.0)
                .map(|j| (u[j] / r(j), j))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            let zp = z[p];
            let full = if zp > 1e-14 { Some(-w[p] / zp) } else { None };

            let add = match (full, blocking) {
                (None, None) => return Err(SamplingError::Infeasible { moment, min, max }),
                (Some(t1), None) => Ok(t1),
                (Some(t1), Some((t2, _))) if t1 <= t2 => Ok(t1),
                (_, Some(blk)) => Err(blk),
            };
            match add {
                Ok(t1) => {
                    for i in 0..n {
                        w[i] += t1 * z[i];
                    }
                    for j in 0..n {
                        if !free[j] {
                            u[j] -= t1 * r(j);
                        }
                    }
                    w[p] = 0.0;
                    free[p] = false;
                    u[p] = up + t1;
                    break;
                }
                Err((t2, j)) => {
                    for i in 0..n {
                        w[i] += t2 * z[i];
                    }
                    for k in 0..n {
                        if !free[k] {
                            u[k] -= t2 * r(k);
                        }
                    }
                    up += t2;
                    free[j] = true;
                    u[j] = 0.0;
                    w[j] = 0.0;
                }
            }
        }
    }

    // recompute from the final free set to shed accumulated rounding
    let mut out = free_set_solution(values, &free, moment).unwrap_or(w);
    for x in out.iter_mut() {
        if *x < 0.0 && *x > -1e-10 {
            *x = 0.0;
        }
    }
    Ok(out)
}

/// Household values of a numeric variable, in household order.
pub fn household_values(micro: &MicrodataTable, variable: &str) -> Result<Vec<f64>, SamplingError> {
    let kind = micro
        .schema()
        .kind(variable)
        .ok_or_else(|| SamplingError::UnknownVariable(variable.to_string()))?;
    if !kind.is_numeric() {
        return Err(SamplingError::Categorical(variable.to_string()));
    }
    (0..micro.households().len())
        .map(|h| {
            micro
                .household_value(h, variable)
                .and_then(|v| v.as_number())
                .ok_or_else(|| SamplingError::MissingValue {
                    record_id: micro.households()[h].record_id.clone(),
                    variable: variable.to_string(),
                })
        })
        .collect()
}

/// Moment-matching weights for every household.
pub fn mm_weights(micro: &MicrodataTable, target: &MomentTarget) -> Result<Vec<f64>, SamplingError> {
    if micro.households().is_empty() {
        return Err(SamplingError::EmptyMicrodata);
    }
    qp_solve(&household_values(micro, &target.variable)?, target.moment)
}

/// `n` household indices drawn with the moment-matching weights, so the
/// expected sample mean of the variable equals the target moment.
pub fn mm_sample<R: Rng + ?Sized>(
    micro: &MicrodataTable,
    target: &MomentTarget,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplingError> {
    let w = mm_weights(micro, target)?;
    let idx: Vec<usize> = (0..w.len()).collect();
    weighted_sample(&idx, &w, n, rng)
}

//! Central finite-difference check of graph gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::layers::Net;
use super::tensor::Tensor;
use super::weights::NetWeights;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many scalars, sampled with `seed`.
    pub max_params: usize,
    pub seed: u64,
    /// Denominator floor: gradients smaller than this are compared in
    /// absolute terms scaled by `1/floor`.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_params: 400,
            seed: 0,
            floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(weights: &NetWeights, build: &F) -> Result<f64>
where
    F: Fn(&NetWeights, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = build(weights, &mut g)?;
    g.check_finite()?;
    Ok(g.value(out).item())
}

/// Compares backward-pass gradients of the scalar built by `build`
/// against central differences. A scalar whose first estimate disagrees
/// is re-estimated with a step 100× smaller and the smaller error kept,
/// so that a ReLU or L1 kink landing inside the stencil is not reported
/// as a gradient bug.
pub fn grad_check<F>(weights: &NetWeights, build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&NetWeights, &mut Graph) -> Result<Var>,
{
    grad_check_where(weights, build, cfg, |_, _| true)
}

/// [`grad_check`] restricted to the `(parameter, flat index)` entries
/// accepted by `keep`.
pub fn grad_check_where<F, K>(weights: &NetWeights, build: F, cfg: &GradCheckConfig, keep: K) -> Result<GradCheckReport>
where
    F: Fn(&NetWeights, &mut Graph) -> Result<Var>,
    K: Fn(&str, usize) -> bool,
{
    let mut g = Graph::new();
    let out = build(weights, &mut g)?;
    g.check_finite()?;
    let grads = g.param_grads(&g.backward(out));

    let mut entries: Vec<(String, usize)> = Vec::new();
    for (name, p) in weights.iter() {
        if grads.contains_key(name) {
            entries.extend((0..p.value.len()).filter(|&i| keep(name, i)).map(|i| (name.to_string(), i)));
        }
    }
    if entries.len() > cfg.max_params {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked: Vec<usize> = sample(&mut rng, entries.len(), cfg.max_params).into_vec();
        picked.sort_unstable();
        entries = picked.into_iter().map(|i| entries[i].clone()).collect();
    }

    let mut work = weights.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: entries.len(),
        worst: None,
    };
    for (name, i) in entries {
        let analytic = grads[&name].data()[i];
        let mut numeric_at = |h: f64| -> Result<f64> {
            let orig = work.get(&name)?.data()[i];
            work.get_mut(&name).expect("present").data_mut()[i] = orig + h;
            let plus = eval(&work, &build)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig - h;
            let minus = eval(&work, &build)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig;
            Ok((plus - minus) / (2.0 * h))
        };
        let mut err = relative_error(analytic, numeric_at(cfg.h)?, cfg.floor);
        if err > 1e-6 {
            err = err.min(relative_error(analytic, numeric_at(cfg.h * 1e-2)?, cfg.floor));
        }
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name.clone(), i));
        }
    }
    Ok(report)
}

/// Gradient check of `net` on a fixed input under a scalar loss.
pub fn grad_check_net<L>(
    net: &Net,
    weights: &NetWeights,
    input: &Tensor,
    loss: L,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Graph, Var) -> Var,
{
    grad_check(
        weights,
        |w, g| {
            let x = g.constant(input.clone());
            let y = net.forward(g, w, x)?;
            Ok(loss(g, y))
        },
        cfg,
    )
}

//! Sequence losses on `[T, D]` parameter tracks.

use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};

pub const SSIM_DELTA1: f64 = 1e-4;
pub const SSIM_DELTA2: f64 = 9e-4;

fn same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b || a.len() != 2 {
        return Err(Error::Shape(format!("sequence shapes {a:?} and {b:?} differ or are not [T, D]")));
    }
    Ok(())
}

/// `(1/T) Σ_t ‖m_t − m̂_t‖₁` on the graph.
pub fn l1_seq(g: &mut Graph, m: Var, m_hat: Var) -> Result<Var> {
    same_shape(g.shape(m), g.shape(m_hat))?;
    let t = g.shape(m)[0] as f64;
    let d = g.sub(m, m_hat);
    let a = g.abs(d);
    let s = g.sum(a);
    Ok(g.scale(s, 1.0 / t))
}

/// SSIM-Seq: one minus the mean over dimensions of a per-dimension SSIM
/// computed from temporal means, variances and covariance (population
/// statistics, divisor `T`).
pub fn ssim_seq(g: &mut Graph, m: Var, m_hat: Var, delta1: f64, delta2: f64) -> Result<Var> {
    same_shape(g.shape(m), g.shape(m_hat))?;
    if g.shape(m)[0] < 2 {
        return Err(Error::InvalidArgument("SSIM-Seq needs at least 2 frames".into()));
    }
    let mu = g.mean_rows(m);
    let mu_h = g.mean_rows(m_hat);
    let neg_mu = g.neg(mu);
    let neg_mu_h = g.neg(mu_h);
    let c = g.row_bias(m, neg_mu);
    let c_h = g.row_bias(m_hat, neg_mu_h);
    let c2 = g.square(c);
    let var = g.mean_rows(c2);
    let c2_h = g.square(c_h);
    let var_h = g.mean_rows(c2_h);
    let cc = g.mul(c, c_h);
    let cov = g.mean_rows(cc);

    let mm = g.mul(mu, mu_h);
    let a = g.scale(mm, 2.0);
    let a = g.offset(a, delta1);
    let b = g.scale(cov, 2.0);
    let b = g.offset(b, delta2);
    let num = g.mul(a, b);
    let mu2 = g.square(mu);
    let mu2_h = g.square(mu_h);
    let c = g.add(mu2, mu2_h);
    let c = g.offset(c, delta1);
    let d = g.add(var, var_h);
    let d = g.offset(d, delta2);
    let den = g.mul(c, d);
    let ratio = g.div(num, den);
    let avg = g.mean(ratio);
    let neg = g.neg(avg);
    Ok(g.offset(neg, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanSide {
    Generator,
    Discriminator,
}

/// Least-squares GAN loss with labels fake 0, real 1, generator target 1.
/// The discriminator side needs `d_real`; the generator side ignores it.
pub fn lsgan(g: &mut Graph, d_real: Option<Var>, d_fake: Var, side: GanSide) -> Result<Var> {
    match side {
        GanSide::Generator => {
            let f = g.offset(d_fake, -1.0);
            let f = g.square(f);
            let f = g.mean(f);
            Ok(g.scale(f, 0.5))
        }
        GanSide::Discriminator => {
            let real = d_real.ok_or_else(|| Error::InvalidArgument("discriminator loss needs real scores".into()))?;
            let r = g.offset(real, -1.0);
            let r = g.square(r);
            let r = g.mean(r);
            let f = g.square(d_fake);
            let f = g.mean(f);
            let s = g.add(r, f);
            Ok(g.scale(s, 0.5))
        }
    }
}

fn eval2(m: &Tensor, m_hat: &Tensor, f: impl FnOnce(&mut Graph, Var, Var) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.constant(m.clone());
    let b = g.constant(m_hat.clone());
    let out = f(&mut g, a, b)?;
    Ok(g.value(out).item())
}

pub fn l1_seq_value(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    eval2(m, m_hat, l1_seq)
}

pub fn ssim_seq_value(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    eval2(m, m_hat, |g, a, b| ssim_seq(g, a, b, SSIM_DELTA1, SSIM_DELTA2))
}

pub fn lsgan_value(d_real: &Tensor, d_fake: &Tensor, side: GanSide) -> Result<f64> {
    eval2(d_real, d_fake, |g, r, f| lsgan(g, Some(r), f, side))
}

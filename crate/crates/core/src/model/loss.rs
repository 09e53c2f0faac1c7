//! Loss terms recorded onto a tape.

use std::f64::consts::PI;

use crate::autodiff::{Activation, Axis, NodeId, Reduction, Tape};
use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Upper bound on the argument of `exp` in the f-divergence value function.
pub const EXP_ARG_MAX: f64 = 20.0;

/// Node pair for the diagonal Gaussian `q(z|x)`.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorNodes {
    pub mu: NodeId,
    pub log_var: NodeId,
}

fn ensure_finite(tape: &Tape, id: NodeId, what: &str) -> Result<()> {
    if tape.value(id).iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("NaN in {what}")));
    }
    Ok(())
}

/// Batch mean of `½ Σ_j [(z_j − μ_j)² / σ_j² + log σ_j² + log 2π]`.
pub fn gaussian_nll(tape: &mut Tape, z: NodeId, post: PosteriorNodes) -> Result<NodeId> {
    ensure_finite(tape, z, "latent codes")?;
    ensure_finite(tape, post.mu, "posterior mean")?;
    ensure_finite(tape, post.log_var, "posterior log-variance")?;

    let resid = tape.sub(z, post.mu)?;
    let sq = tape.activation(resid, Activation::Square)?;
    let neg_lv = tape.activation(post.log_var, Activation::Negate)?;
    let precision = tape.activation(neg_lv, Activation::Exp)?;
    let weighted = tape.mul(sq, precision)?;
    let with_lv = tape.add(weighted, post.log_var)?;
    let per_dim = tape.offset(with_lv, (2.0 * PI).ln());
    let per_sample = tape.reduce(per_dim, Reduction::Sum, Axis::Cols);
    let half = tape.scale(per_sample, 0.5);
    Ok(tape.mean(half))
}

fn clamped_log(tape: &mut Tape, p: NodeId) -> Result<NodeId> {
    let c = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
    tape.activation(c, Activation::Log)
}

fn complement(tape: &mut Tape, p: NodeId) -> Result<NodeId> {
    let neg = tape.activation(p, Activation::Negate)?;
    Ok(tape.offset(neg, 1.0))
}

/// `−mean log ρ_q − mean log(1 − ρ_p)`.
pub fn disc_loss_gan(tape: &mut Tape, rho_q: NodeId, rho_p: NodeId) -> Result<NodeId> {
    let log_q = clamped_log(tape, rho_q)?;
    let one_minus = complement(tape, rho_p)?;
    let log_p = clamped_log(tape, one_minus)?;
    let a = tape.mean(log_q);
    let b = tape.mean(log_p);
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, -1.0))
}

/// Non-saturating generator loss `−mean log ρ_p`.
pub fn gen_loss_gan(tape: &mut Tape, rho_p: NodeId) -> Result<NodeId> {
    let log_p = clamped_log(tape, rho_p)?;
    let m = tape.mean(log_p);
    Ok(tape.scale(m, -1.0))
}

/// `V = mean D(x) − mean exp(D(G(z)) − 1)` for an identity-headed critic.
pub fn fgan_value(tape: &mut Tape, d_real: NodeId, d_fake: NodeId) -> Result<NodeId> {
    let real = tape.mean(d_real);
    let shifted = tape.offset(d_fake, -1.0);
    let bounded = tape.clamp(shifted, f64::NEG_INFINITY, EXP_ARG_MAX);
    let e = tape.activation(bounded, Activation::Exp)?;
    let fake = tape.mean(e);
    tape.sub(real, fake)
}

/// Generator side of the f-divergence game: `−mean D(G(z))`.
pub fn fgan_gen_loss(tape: &mut Tape, d_fake: NodeId) -> NodeId {
    let m = tape.mean(d_fake);
    tape.scale(m, -1.0)
}

/// `L_g + λ · nll`, where `nll` is already a batch mean.
pub fn reconstruction_loss(tape: &mut Tape, gen_loss: NodeId, nll: NodeId, lambda: f64) -> Result<NodeId> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Contract(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let weighted = tape.scale(nll, lambda);
    tape.add(gen_loss, weighted)
}

/// `E_{N(0, I_d)} log p(z) = −d (1 + log 2π) / 2`, the additive constant that
/// separates the optimized objective from the joint KL it bounds.
pub fn prior_log_constant(d: usize) -> f64 {
    -(d as f64) * (1.0 + (2.0 * PI).ln()) / 2.0
}

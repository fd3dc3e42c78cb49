//! Closed-form transmit beamformers for fixed RIS phases.
//!
//! For transmitter `tx` with receiver `rx = tx.other()` the coefficients are
//!
//! ```text
//! b_rx = |α_rx w_tx|²
//! f_rx = b_rx / (b_rx² + |h_{rx rx}ᴴ w_rx|²)
//! β_rx = f_rx α_rx + f_tx h_{tx tx}ᴴ
//! Σ_rx = 1 − f_rx b_rx
//! ```
//!
//! and the beamformer maximizes `−½ f_rx |α_rx w|² + Re(β_rx w)` subject to
//! `‖w‖² ≤ P_max`, whose stationary point is
//! `w(v) = (v I + f_rx α_rxᴴ α_rx)⁻¹ β_rxᴴ`. The dual variable `v` is found by
//! bisection on `‖w(v)‖² − P_max` over `[v_floor, ‖β_rx‖ / √P_max]`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, Node};
use crate::error::{Error, Result};
use crate::numerics::{solve_rank1_regularized, ComplexVector};
use crate::sysmodel::{effective_channel, rate, sinr_with_alpha, BeamformerPair, LinkBudget, PhaseConfig};

/// Smallest dual value tried; `v = 0` leaves a rank-one system for `M > 1`.
pub const V_FLOOR: f64 = 1e-12;
/// Relative tolerance on `‖w‖² − P_max` at the bisection root.
pub const POWER_TOL: f64 = 1e-8;
pub const MAX_BISECTION_ITERS: usize = 200;

/// How `f_rx` is formed from `b_rx` and the self-interference power.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `b / (b² + SI)`.
    #[default]
    Literal,
    /// `b / (b² + SI + σ²)`.
    NoiseAugmented,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformingOptions {
    /// Stop once the sum-rate changes by less than this (bps/Hz).
    pub tol: f64,
    pub max_iter: usize,
    pub estimator: Estimator,
}

impl Default for BeamformingOptions {
    fn default() -> Self {
        BeamformingOptions {
            tol: 1e-4,
            max_iter: 50,
            estimator: Estimator::Literal,
        }
    }
}

/// Per-receiver auxiliary coefficients; index with [`Node`].
#[derive(Clone, Debug, PartialEq)]
pub struct AuxCoefficients {
    pub b: [f64; 2],
    pub f: [f64; 2],
    pub beta: [ComplexVector; 2],
    pub sigma: [f64; 2],
}

impl AuxCoefficients {
    pub fn b(&self, rx: Node) -> f64 {
        self.b[rx.index()]
    }

    pub fn f(&self, rx: Node) -> f64 {
        self.f[rx.index()]
    }

    pub fn beta(&self, rx: Node) -> &ComplexVector {
        &self.beta[rx.index()]
    }

    pub fn sigma(&self, rx: Node) -> f64 {
        self.sigma[rx.index()]
    }
}

/// `f = b / (b² + si [+ σ²])`, with `f = 0` for a link that delivers no signal.
pub fn estimator_gain(b: f64, si: f64, sigma2: f64, estimator: Estimator) -> Result<f64> {
    if b == 0.0 {
        return Ok(0.0);
    }
    let denom = match estimator {
        Estimator::Literal => b * b + si,
        Estimator::NoiseAugmented => b * b + si + sigma2,
    };
    let f = b / denom;
    if !f.is_finite() {
        return Err(Error::DegenerateLink(format!(
            "estimator gain is not finite (b = {b:e}, SI power = {si:e})"
        )));
    }
    Ok(f)
}

/// `β_rx = f_rx α_rx + f_tx h_{tx tx}ᴴ` as a row vector.
pub fn combine_beta(
    f_rx: f64,
    alpha_rx: &ComplexVector,
    f_tx: f64,
    si_row_tx: &ComplexVector,
) -> Result<ComplexVector> {
    alpha_rx.scale_real(f_rx).axpy(f_tx.into(), si_row_tx)
}

pub fn aux_coefficients(
    ch: &ChannelRealization,
    theta: &PhaseConfig,
    w: &BeamformerPair,
    budget: &LinkBudget,
    estimator: Estimator,
) -> Result<AuxCoefficients> {
    let alphas = [
        effective_channel(ch, theta, Node::S1)?,
        effective_channel(ch, theta, Node::S2)?,
    ];
    aux_from_alphas(ch, &alphas, w, budget, estimator)
}

fn aux_from_alphas(
    ch: &ChannelRealization,
    alphas: &[ComplexVector; 2],
    w: &BeamformerPair,
    budget: &LinkBudget,
    estimator: Estimator,
) -> Result<AuxCoefficients> {
    let mut b = [0.0; 2];
    let mut f = [0.0; 2];
    for rx in Node::BOTH {
        let i = rx.index();
        b[i] = alphas[i].dotu(w.of(rx.other()))?.norm_sqr();
        let si = ch.self_interference(rx).dotc(w.of(rx))?.norm_sqr();
        f[i] = estimator_gain(b[i], si, budget.sigma2, estimator)?;
    }
    let beta_for = |rx: Node| {
        let tx = rx.other();
        combine_beta(
            f[rx.index()],
            &alphas[rx.index()],
            f[tx.index()],
            &ch.self_interference(tx).conj(),
        )
    };
    Ok(AuxCoefficients {
        b,
        f,
        beta: [beta_for(Node::S1)?, beta_for(Node::S2)?],
        sigma: [1.0 - f[0] * b[0], 1.0 - f[1] * b[1]],
    })
}

/// Bisection bracket for the dual variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DualInterval {
    /// `[0, ‖β‖ / √P_max]`.
    pub fn for_beta(beta: &ComplexVector, p_max: f64) -> Self {
        DualInterval {
            lo: 0.0,
            hi: beta.norm() / p_max.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSolution {
    pub w: ComplexVector,
    pub v: f64,
}

/// `w(v) = (v I + f αᴴα)⁻¹ βᴴ`.
pub fn regularized_beamformer(
    v: f64,
    f: f64,
    alpha: &ComplexVector,
    beta: &ComplexVector,
) -> Result<ComplexVector> {
    solve_rank1_regularized(v, f, &alpha.conj(), &beta.conj())
}

/// `−½ f |α w|² + Re(β w)`.
pub fn qp_objective(f: f64, alpha: &ComplexVector, beta: &ComplexVector, w: &ComplexVector) -> Result<f64> {
    Ok(-0.5 * f * alpha.dotu(w)?.norm_sqr() + beta.dotu(w)?.re)
}

/// Power-constrained maximizer of [`qp_objective`] with its dual variable.
pub fn solve_qp(
    f: f64,
    alpha: &ComplexVector,
    beta: &ComplexVector,
    p_max: f64,
) -> Result<BeamformerSolution> {
    if alpha.len() != beta.len() {
        return Err(Error::Shape(format!(
            "alpha has length {}, beta {}",
            alpha.len(),
            beta.len()
        )));
    }
    if !(f >= 0.0) {
        return Err(Error::Domain(format!("estimator gain must be >= 0, got {f}")));
    }
    if beta.is_zero() {
        return Ok(BeamformerSolution {
            w: ComplexVector::zeros(beta.len()),
            v: 0.0,
        });
    }
    let w_at = |v: f64| regularized_beamformer(v, f, alpha, beta);
    let tol = POWER_TOL * p_max;

    let w_floor = w_at(V_FLOOR)?;
    if w_floor.norm_sqr() - p_max <= 0.0 {
        return Ok(BeamformerSolution { w: w_floor, v: V_FLOOR });
    }

    let interval = DualInterval::for_beta(beta, p_max);
    let mut lo = V_FLOOR;
    let mut hi = interval.hi;
    let w_hi = w_at(hi)?;
    if (w_hi.norm_sqr() - p_max).abs() <= tol {
        return Ok(BeamformerSolution { w: w_hi, v: hi });
    }
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let w = w_at(mid)?;
        let g = w.norm_sqr() - p_max;
        if g.abs() <= tol {
            return Ok(BeamformerSolution { w, v: mid });
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(format!(
        "dual bisection did not reach |‖w‖² − P| <= {tol:e} within {MAX_BISECTION_ITERS} steps"
    )))
}

/// Beamformer of `tx` from its receiver's coefficients.
pub fn solve_beamformer(
    aux: &AuxCoefficients,
    tx: Node,
    alpha_rx: &ComplexVector,
    p_max: f64,
) -> Result<BeamformerSolution> {
    let rx = tx.other();
    solve_qp(aux.f(rx), alpha_rx, aux.beta(rx), p_max)
}

/// Full-power maximum-ratio transmission towards `alpha`.
pub fn mrt(alpha: &ComplexVector, p_max: f64) -> ComplexVector {
    let norm = alpha.norm();
    if norm == 0.0 {
        return ComplexVector::zeros(alpha.len());
    }
    alpha.conj().scale_real(p_max.sqrt() / norm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerReport {
    pub pair: BeamformerPair,
    pub sum_rate: f64,
    pub iterations: usize,
    /// Absolute sum-rate change of the last iteration.
    pub last_change: f64,
    pub converged: bool,
}

/// Alternates coefficient refreshes and beamformer solves for both nodes,
/// starting from MRT at full power.
pub fn optimize_beamformers(
    ch: &ChannelRealization,
    theta: &PhaseConfig,
    budget: &LinkBudget,
    opts: &BeamformingOptions,
) -> Result<BeamformerReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!(
            "beamforming tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let alphas = [
        effective_channel(ch, theta, Node::S1)?,
        effective_channel(ch, theta, Node::S2)?,
    ];
    let alpha = |rx: Node| &alphas[rx.index()];
    let sum_rate_of = |w: &BeamformerPair| -> Result<f64> {
        let mut total = 0.0;
        for rx in Node::BOTH {
            total += rate(sinr_with_alpha(ch, alpha(rx), w, budget, rx)?)?;
        }
        Ok(total)
    };

    let mut pair = BeamformerPair {
        w1: mrt(alpha(Node::S2), budget.p_max),
        w2: mrt(alpha(Node::S1), budget.p_max),
    };
    let mut current = sum_rate_of(&pair)?;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let aux = aux_from_alphas(ch, &alphas, &pair, budget, opts.estimator)?;
        let mut next = pair.clone();
        for tx in Node::BOTH {
            let sol = solve_beamformer(&aux, tx, alpha(tx.other()), budget.p_max)?;
            next.set(tx, sol.w);
        }
        let updated = sum_rate_of(&next)?;
        last_change = (updated - current).abs();
        pair = next;
        current = updated;
        if last_change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(BeamformerReport {
        pair,
        sum_rate: current,
        iterations,
        last_change,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize_drop, ChannelModel, DeploymentScheme, Geometry, Scenario};
    use crate::numerics::{cgauss_sample, RngStream, C64};
    use crate::sysmodel::sum_rate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cv(v: &[(f64, f64)]) -> ComplexVector {
        ComplexVector::from_vec(v.iter().map(|&(a, b)| c(a, b)).collect())
    }

    fn drop(seed: u64, n: usize, m: usize) -> ChannelRealization {
        realize_drop(
            &mut RngStream::new(seed, 0),
            &ChannelModel::default(),
            &Geometry::default(),
            &DeploymentScheme::single(n).unwrap(),
            Scenario::S1,
            m,
        )
        .unwrap()
    }

    #[test]
    fn aux_unit_cases() {
        let scheme = DeploymentScheme::single(1).unwrap();
        let mut ch = ChannelRealization::zeros(&scheme, 2);
        // α_S2 = conj(h_S1S2) = [1, 0].
        ch.direct_s1_s2 = cv(&[(1.0, 0.0), (0.0, 0.0)]);
        let w = BeamformerPair {
            w1: cv(&[(1.0, 0.0), (0.0, 0.0)]),
            w2: ComplexVector::zeros(2),
        };
        let budget = LinkBudget::new(1.0, 1.0).unwrap();
        let aux = aux_coefficients(&ch, &PhaseConfig::zeros(1), &w, &budget, Estimator::Literal).unwrap();
        assert_eq!(aux.b(Node::S2), 1.0);
        assert_eq!(aux.f(Node::S2), 1.0);
        assert_eq!(aux.sigma(Node::S2), 0.0);
        assert_eq!(aux.b(Node::S1), 0.0);
        assert_eq!(aux.f(Node::S1), 0.0);
    }

    #[test]
    fn beta_linear_combination() {
        let beta = combine_beta(1.0, &cv(&[(1.0, 0.0), (0.0, 0.0)]), 2.0, &cv(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        assert_eq!(beta, cv(&[(1.0, 0.0), (2.0, 0.0)]));
    }

    #[test]
    fn estimator_variants() {
        assert_eq!(estimator_gain(1.0, 0.0, 5.0, Estimator::Literal).unwrap(), 1.0);
        assert_eq!(estimator_gain(1.0, 1.0, 2.0, Estimator::NoiseAugmented).unwrap(), 0.25);
        assert_eq!(estimator_gain(0.0, 0.0, 1.0, Estimator::Literal).unwrap(), 0.0);
        assert!(matches!(
            estimator_gain(1e-320, 0.0, 1.0, Estimator::Literal),
            Err(Error::DegenerateLink(_))
        ));
    }

    #[test]
    fn zero_gain_scales_to_power_boundary() {
        let beta = cv(&[(1.0, 2.0), (-0.5, 0.3), (0.0, -1.0)]);
        let alpha = cv(&[(3.0, 0.0), (1.0, 1.0), (0.2, 0.0)]);
        let p = 0.7;
        let sol = solve_qp(0.0, &alpha, &beta, p).unwrap();
        let expect = beta.conj().scale_real(p.sqrt() / beta.norm());
        assert!(sol.w.sub(&expect).unwrap().norm() < 1e-8);
        assert!((sol.v - beta.norm() / p.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn scalar_case() {
        let one = cv(&[(1.0, 0.0)]);
        let sol = solve_qp(1.0, &one, &one, 0.25).unwrap();
        assert!((sol.v - 1.0).abs() < 1e-7);
        assert!((sol.w[0] - c(0.5, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn zero_beta_gives_zero() {
        let sol = solve_qp(1.0, &cv(&[(1.0, 0.0)]), &ComplexVector::zeros(1), 1.0).unwrap();
        assert!(sol.w.is_zero());
        assert_eq!(sol.v, 0.0);
    }

    #[test]
    fn interior_solution_uses_floor() {
        // Huge power budget: the unconstrained optimum is feasible.
        let alpha = cv(&[(1.0, 0.0)]);
        let beta = cv(&[(1.0, 0.0)]);
        let sol = solve_qp(1.0, &alpha, &beta, 100.0).unwrap();
        assert_eq!(sol.v, V_FLOOR);
        assert!(sol.w.norm_sqr() <= 100.0);
        assert!((sol.w[0].re - 1.0).abs() < 1e-9);
    }

    /// Dense complex Gaussian-elimination route, independent of the rank-one identity.
    fn dense_w(v: f64, f: f64, alpha: &ComplexVector, beta: &ComplexVector) -> ComplexVector {
        let m = alpha.len();
        let sys = nalgebra::DMatrix::<C64>::from_fn(m, m, |r, k| {
            alpha[r].conj() * alpha[k] * f + if r == k { v } else { 0.0 }
        });
        let rhs = nalgebra::DVector::<C64>::from_fn(m, |r, _| beta[r].conj());
        let sol = sys.lu().solve(&rhs).expect("regularized system is nonsingular");
        ComplexVector::from_vec(sol.iter().copied().collect())
    }

    /// Best feasible objective over a uniform grid of dual values.
    fn grid_oracle(f: f64, alpha: &ComplexVector, beta: &ComplexVector, p: f64, points: usize) -> f64 {
        let hi = DualInterval::for_beta(beta, p).hi;
        let mut best = f64::NEG_INFINITY;
        for k in 1..=points {
            let v = hi * k as f64 / points as f64;
            let w = dense_w(v, f, alpha, beta);
            if w.norm_sqr() <= p * (1.0 + 1e-12) {
                best = best.max(qp_objective(f, alpha, beta, &w).unwrap());
            }
        }
        best
    }

    #[test]
    fn matches_grid_oracle_on_random_instance() {
        let mut rng = RngStream::new(13, 0);
        let alpha = cgauss_sample(&mut rng, 4, 1.0).unwrap();
        let beta = cgauss_sample(&mut rng, 4, 1.0).unwrap();
        let (f, p) = (0.8, 0.5);
        let sol = solve_qp(f, &alpha, &beta, p).unwrap();
        let ours = qp_objective(f, &alpha, &beta, &sol.w).unwrap();
        let oracle = grid_oracle(f, &alpha, &beta, p, 10_000);
        // The grid only samples feasible duals, so it can trail the root but never lead it.
        assert!(ours >= oracle - 1e-6, "{ours} vs {oracle}");
        let dense = dense_w(sol.v, f, &alpha, &beta);
        assert!(dense.sub(&sol.w).unwrap().norm() < 1e-9);
    }

    #[test]
    fn norm_strictly_decreasing_in_dual() {
        let mut rng = RngStream::new(14, 0);
        let alpha = cgauss_sample(&mut rng, 4, 1.0).unwrap();
        let beta = cgauss_sample(&mut rng, 4, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..60 {
            let v = 1e-6 * 1.4f64.powi(k);
            let n = regularized_beamformer(v, 2.0, &alpha, &beta).unwrap().norm();
            assert!(n < last);
            last = n;
        }
    }

    #[test]
    fn stationary_point_by_finite_differences() {
        let mut rng = RngStream::new(15, 0);
        let alpha = cgauss_sample(&mut rng, 3, 1.0).unwrap();
        let beta = cgauss_sample(&mut rng, 3, 1.0).unwrap();
        let (f, p) = (1.3, 0.2);
        let sol = solve_qp(f, &alpha, &beta, p).unwrap();
        let lagrangian = |w: &ComplexVector| {
            qp_objective(f, &alpha, &beta, w).unwrap() - 0.5 * sol.v * w.norm_sqr()
        };
        let h = 1e-6;
        for k in 0..6 {
            let mut dir = ComplexVector::zeros(3);
            dir[k / 2] = if k % 2 == 0 { c(1.0, 0.0) } else { c(0.0, 1.0) };
            let plus = sol.w.axpy(c(h, 0.0), &dir).unwrap();
            let minus = sol.w.axpy(c(-h, 0.0), &dir).unwrap();
            let deriv = (lagrangian(&plus) - lagrangian(&minus)) / (2.0 * h);
            assert!(deriv.abs() <= 1e-6, "coordinate {k}: {deriv}");
        }
    }

    #[test]
    fn zero_channels_give_zero_beamformers() {
        let scheme = DeploymentScheme::single(4).unwrap();
        let ch = ChannelRealization::zeros(&scheme, 3);
        let rep = optimize_beamformers(&ch, &PhaseConfig::zeros(4), &LinkBudget::default(), &Default::default()).unwrap();
        assert!(rep.pair.w1.is_zero());
        assert!(rep.pair.w2.is_zero());
        assert_eq!(rep.sum_rate, 0.0);
    }

    #[test]
    fn si_free_link_keeps_mrt_direction() {
        let mut ch = drop(21, 4, 4);
        ch.si_s1 = ComplexVector::zeros(4);
        ch.si_s2 = ComplexVector::zeros(4);
        for ris in &mut ch.ris {
            ris.to_s1 = ComplexVector::zeros(4);
        }
        ch.direct_s2_s1 = ComplexVector::zeros(4);
        let theta = PhaseConfig::new([0.3, -0.2, 1.0, 2.5]);
        let rep = optimize_beamformers(&ch, &theta, &LinkBudget::default(), &Default::default()).unwrap();
        let alpha = effective_channel(&ch, &theta, Node::S2).unwrap();
        let w = &rep.pair.w1;
        let cos = alpha.conj().dotc(w).unwrap().norm() / (alpha.norm() * w.norm());
        assert!(cos >= 1.0 - 1e-9, "cosine similarity {cos}");
        assert!(rep.pair.w2.is_zero());
    }

    #[test]
    fn fixed_seed_convergence() {
        let ch = drop(11, 8, 4);
        let mut rng = RngStream::new(11, 1);
        let theta = PhaseConfig::new((0..8).map(|_| rng.uniform(-PI, PI)));
        let budget = LinkBudget::default();
        let rep = optimize_beamformers(&ch, &theta, &budget, &Default::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 50);
        assert!(rep.last_change < 1e-4);
        let check = sum_rate(&ch, &theta, &rep.pair, &budget).unwrap();
        assert!((check - rep.sum_rate).abs() < 1e-12);
        for w in [&rep.pair.w1, &rep.pair.w2] {
            assert!(w.norm_sqr() <= budget.p_max + 1e-8);
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let ch = drop(1, 2, 2);
        let opts = BeamformingOptions { tol: 0.0, ..Default::default() };
        assert!(optimize_beamformers(&ch, &PhaseConfig::zeros(2), &LinkBudget::default(), &opts).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn feasibility_and_complementarity(seed in any::<u64>(), f in 0.0f64..20.0, p in 1e-3f64..1.0) {
            let mut rng = RngStream::new(seed, 0);
            let alpha = cgauss_sample(&mut rng, 4, 1.0).unwrap();
            let beta = cgauss_sample(&mut rng, 4, 1.0).unwrap();
            let sol = solve_qp(f, &alpha, &beta, p).unwrap();
            let power = sol.w.norm_sqr();
            prop_assert!(power <= p + 1e-8);
            let on_boundary = (power - p).abs() <= POWER_TOL * p;
            prop_assert!(sol.v == V_FLOOR || on_boundary);
        }
    }
}

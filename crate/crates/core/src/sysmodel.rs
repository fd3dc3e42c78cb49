//! Full-duplex MISO signal model: effective channels, SINR, rate and sum-rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, Node};
use crate::error::{Error, Result};
use crate::numerics::{ComplexVector, C64};

/// Maps any real angle onto `[−π, π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = x - two_pi * ((x + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// RIS phase shifts, concatenated RIS by RIS, each wrapped into `[−π, π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseConfig {
    phases: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(phases: impl IntoIterator<Item = f64>) -> Self {
        PhaseConfig {
            phases: phases.into_iter().map(wrap_phase).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        PhaseConfig { phases: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerPair {
    pub w1: ComplexVector,
    pub w2: ComplexVector,
}

impl BeamformerPair {
    pub fn zeros(antennas: usize) -> Self {
        BeamformerPair {
            w1: ComplexVector::zeros(antennas),
            w2: ComplexVector::zeros(antennas),
        }
    }

    pub fn of(&self, node: Node) -> &ComplexVector {
        match node {
            Node::S1 => &self.w1,
            Node::S2 => &self.w2,
        }
    }

    pub fn set(&mut self, node: Node, w: ComplexVector) {
        match node {
            Node::S1 => self.w1 = w,
            Node::S2 => self.w2 = w,
        }
    }
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Noise variance and per-node transmit power limit, in watts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub sigma2: f64,
    pub p_max: f64,
}

impl LinkBudget {
    pub fn new(sigma2: f64, p_max: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !(p_max > 0.0) {
            return Err(Error::Config(format!(
                "noise variance and power limit must be positive (sigma2 = {sigma2}, p_max = {p_max})"
            )));
        }
        Ok(LinkBudget { sigma2, p_max })
    }

    pub fn from_dbm(noise_dbm: f64, p_max_dbm: f64) -> Result<Self> {
        Self::new(dbm_to_watts(noise_dbm), dbm_to_watts(p_max_dbm))
    }
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            sigma2: dbm_to_watts(-80.0),
            p_max: dbm_to_watts(15.0),
        }
    }
}

/// Composite row channel `α_rx = Σ_r h_{R_r rx}ᴴ Θ_r H_{tx R_r} + h_{tx rx}ᴴ`
/// seen by `rx` from the other node.
pub fn effective_channel(
    ch: &ChannelRealization,
    theta: &PhaseConfig,
    rx: Node,
) -> Result<ComplexVector> {
    if theta.len() != ch.total_elements() {
        return Err(Error::Shape(format!(
            "{} phases for {} RIS elements",
            theta.len(),
            ch.total_elements()
        )));
    }
    let tx = rx.other();
    let mut alpha = ch.direct_to(rx).conj();
    if alpha.len() != ch.antennas {
        return Err(Error::Shape("direct channel length differs from M".into()));
    }
    let mut offset = 0;
    for ris in &ch.ris {
        let n = ris.elements();
        let h = ris.to_node(rx);
        let phases = &theta.as_slice()[offset..offset + n];
        // Row vector hᴴ Θ, then times the N_r × M incoming matrix.
        let weighted = ComplexVector::from_fn(n, |k| h[k].conj() * C64::from_polar(1.0, phases[k]));
        alpha = alpha.add(&ris.from_node(tx).vecmat(&weighted)?)?;
        offset += n;
    }
    Ok(alpha)
}

/// SINR at `rx` with both nodes transmitting simultaneously.
pub fn sinr(
    ch: &ChannelRealization,
    theta: &PhaseConfig,
    w: &BeamformerPair,
    budget: &LinkBudget,
    rx: Node,
) -> Result<f64> {
    let alpha = effective_channel(ch, theta, rx)?;
    sinr_with_alpha(ch, &alpha, w, budget, rx)
}

pub(crate) fn sinr_with_alpha(
    ch: &ChannelRealization,
    alpha: &ComplexVector,
    w: &BeamformerPair,
    budget: &LinkBudget,
    rx: Node,
) -> Result<f64> {
    let signal = alpha.dotu(w.of(rx.other()))?.norm_sqr();
    let si = ch.self_interference(rx).dotc(w.of(rx))?.norm_sqr();
    Ok(signal / (si + budget.sigma2))
}

/// `log₂(1 + γ)` in bps/Hz.
pub fn rate(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("SINR must be >= 0, got {gamma}")));
    }
    Ok(gamma.ln_1p() / std::f64::consts::LN_2)
}

pub fn sum_rate(
    ch: &ChannelRealization,
    theta: &PhaseConfig,
    w: &BeamformerPair,
    budget: &LinkBudget,
) -> Result<f64> {
    let mut total = 0.0;
    for rx in Node::BOTH {
        total += rate(sinr(ch, theta, w, budget, rx)?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize_drop, ChannelModel, DeploymentScheme, Geometry, RisChannels, Scenario};
    use crate::numerics::{cgauss_sample, RngStream};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn drop(seed: u64, scheme: DeploymentScheme, scen: Scenario, m: usize) -> ChannelRealization {
        realize_drop(
            &mut RngStream::new(seed, 0),
            &ChannelModel::default(),
            &Geometry::default(),
            &scheme,
            scen,
            m,
        )
        .unwrap()
    }

    fn random_pair(rng: &mut RngStream, m: usize, p: f64) -> BeamformerPair {
        BeamformerPair {
            w1: cgauss_sample(rng, m, p / m as f64).unwrap(),
            w2: cgauss_sample(rng, m, p / m as f64).unwrap(),
        }
    }

    fn random_phases(rng: &mut RngStream, n: usize) -> PhaseConfig {
        PhaseConfig::new((0..n).map(|_| rng.uniform(-PI, PI)))
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(wrap_phase(-PI), -PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -50..50 {
            let x = k as f64 * 0.77;
            let r = wrap_phase(x);
            assert!((-PI..PI).contains(&r));
            let d = (x - r) / (2.0 * PI);
            assert!((d - d.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_ris_gives_direct_channel() {
        let scheme = DeploymentScheme::single(3).unwrap();
        let mut ch = drop(3, scheme, Scenario::S1, 2);
        ch.ris[0] = RisChannels::zeros(3, 2);
        let theta = PhaseConfig::new([0.4, -1.0, 2.0]);
        let alpha = effective_channel(&ch, &theta, Node::S2).unwrap();
        assert_eq!(alpha, ch.direct_s1_s2.conj());
    }

    #[test]
    fn single_element_identity_phase() {
        let scheme = DeploymentScheme::single(1).unwrap();
        let ch = drop(4, scheme, Scenario::S1, 3);
        let theta = PhaseConfig::zeros(1);
        let alpha = effective_channel(&ch, &theta, Node::S2).unwrap();
        let h = ch.ris[0].to_s2[0].conj();
        for k in 0..3 {
            let expect = h * ch.ris[0].from_s1.get(0, k) + ch.direct_s1_s2[k].conj();
            assert!((alpha[k] - expect).norm() < 1e-18);
        }
    }

    /// Brute-force triple loop over (RIS, element, antenna).
    fn alpha_loop(ch: &ChannelRealization, theta: &PhaseConfig, rx: Node) -> Vec<C64> {
        let tx = rx.other();
        let mut out: Vec<C64> = ch.direct_to(rx).iter().map(|z| z.conj()).collect();
        let mut idx = 0;
        for ris in &ch.ris {
            for n in 0..ris.elements() {
                let g = ris.to_node(rx)[n].conj() * C64::from_polar(1.0, theta.as_slice()[idx]);
                for (m, o) in out.iter_mut().enumerate() {
                    *o += g * ris.from_node(tx).get(n, m);
                }
                idx += 1;
            }
        }
        out
    }

    #[test]
    fn effective_channel_matches_loop() {
        let scheme = DeploymentScheme::distributed(6).unwrap();
        let ch = drop(3, scheme, Scenario::S2, 4);
        let mut rng = RngStream::new(3, 1);
        let theta = random_phases(&mut rng, 6);
        for rx in Node::BOTH {
            let a = effective_channel(&ch, &theta, rx).unwrap();
            let b = alpha_loop(&ch, &theta, rx);
            let scale: f64 = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for k in 0..4 {
                assert!((a[k] - b[k]).norm() <= 1e-12 * scale);
            }
        }
        assert!(effective_channel(&ch, &PhaseConfig::zeros(5), Node::S1).is_err());
    }

    fn unit_channel() -> ChannelRealization {
        // M = 1, one element, all RIS paths zero; direct S1→S2 = 1, SI at S2 = 1.
        let scheme = DeploymentScheme::single(1).unwrap();
        let mut ch = ChannelRealization::zeros(&scheme, 1);
        ch.direct_s1_s2 = ComplexVector::from_vec(vec![c(1.0, 0.0)]);
        ch
    }

    #[test]
    fn sinr_unit_cases() {
        let mut ch = unit_channel();
        let theta = PhaseConfig::zeros(1);
        let budget = LinkBudget::new(1.0, 10.0).unwrap();
        let w = BeamformerPair {
            w1: ComplexVector::from_vec(vec![c(1.0, 0.0)]),
            w2: ComplexVector::from_vec(vec![c(1.0, 0.0)]),
        };
        assert_eq!(sinr(&ch, &theta, &w, &budget, Node::S2).unwrap(), 1.0);

        ch.direct_s1_s2 = ComplexVector::from_vec(vec![c(2f64.sqrt(), 0.0)]);
        ch.si_s2 = ComplexVector::from_vec(vec![c(0.0, 1.0)]);
        let g = sinr(&ch, &theta, &w, &budget, Node::S2).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate(0.0).unwrap(), 0.0);
        assert!((rate(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rate(3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(rate(-0.1).is_err());
    }

    #[test]
    fn sum_rate_cases() {
        let mut ch = unit_channel();
        ch.direct_s2_s1 = ComplexVector::from_vec(vec![c(1.0, 0.0)]);
        let theta = PhaseConfig::zeros(1);
        let budget = LinkBudget::new(1.0, 10.0).unwrap();
        let w = BeamformerPair {
            w1: ComplexVector::from_vec(vec![c(1.0, 0.0)]),
            w2: ComplexVector::from_vec(vec![c(1.0, 0.0)]),
        };
        assert!((sum_rate(&ch, &theta, &w, &budget).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(sum_rate(&ch, &theta, &BeamformerPair::zeros(1), &budget).unwrap(), 0.0);
    }

    #[test]
    fn sum_rate_recomposes() {
        let scheme = DeploymentScheme::distributed(8).unwrap();
        let ch = drop(21, scheme, Scenario::S1, 4);
        let budget = LinkBudget::default();
        let mut rng = RngStream::new(21, 5);
        let theta = random_phases(&mut rng, 8);
        let w = random_pair(&mut rng, 4, budget.p_max);
        // Recompute from the loop oracle.
        let mut total = 0.0;
        for rx in Node::BOTH {
            let a = alpha_loop(&ch, &theta, rx);
            let sig: C64 = a.iter().zip(w.of(rx.other()).iter()).map(|(a, w)| a * w).sum();
            let si: C64 = ch.self_interference(rx).iter().zip(w.of(rx).iter()).map(|(h, w)| h.conj() * w).sum();
            total += (1.0 + sig.norm_sqr() / (si.norm_sqr() + budget.sigma2)).log2();
        }
        let s = sum_rate(&ch, &theta, &w, &budget).unwrap();
        assert!((s - total).abs() < 1e-12 * total.max(1.0));
    }

    #[test]
    fn noise_monotonicity() {
        let scheme = DeploymentScheme::single(8).unwrap();
        let ch = drop(5, scheme, Scenario::S1, 4);
        let mut rng = RngStream::new(5, 9);
        let theta = random_phases(&mut rng, 8);
        let w = random_pair(&mut rng, 4, 0.03);
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let b = LinkBudget::new(1e-13 * 2f64.powi(k), 0.03).unwrap();
            let s = sum_rate(&ch, &theta, &w, &b).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn distributed_with_silent_second_ris_matches_single() {
        let dist = DeploymentScheme::distributed(8).unwrap();
        let mut ch = drop(17, dist, Scenario::S1, 4);
        ch.ris[1] = RisChannels::zeros(4, 4);
        let mut single = ch.clone();
        single.ris.truncate(1);
        let mut rng = RngStream::new(17, 2);
        let phases: Vec<f64> = (0..8).map(|_| rng.uniform(-PI, PI)).collect();
        let w = random_pair(&mut rng, 4, 0.03);
        let budget = LinkBudget::default();
        let a = sum_rate(&ch, &PhaseConfig::new(phases.clone()), &w, &budget).unwrap();
        let b = sum_rate(&single, &PhaseConfig::new(phases[..4].to_vec()), &w, &budget).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn budget_defaults_and_conversion() {
        assert!((dbm_to_watts(15.0) - 0.031623).abs() < 1e-6);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-24);
        let b = LinkBudget::default();
        assert!((b.p_max - 0.0316227766).abs() < 1e-9);
        assert!(LinkBudget::new(0.0, 1.0).is_err());
    }

    #[test]
    fn sinr_matches_symbol_monte_carlo() {
        let scheme = DeploymentScheme::single(4).unwrap();
        let ch = drop(77, scheme, Scenario::S1, 2);
        let budget = LinkBudget::default();
        let mut rng = RngStream::new(77, 1);
        let theta = random_phases(&mut rng, 4);
        let w = random_pair(&mut rng, 2, budget.p_max);
        for rx in Node::BOTH {
            let analytic = sinr(&ch, &theta, &w, &budget, rx).unwrap();
            let mc = symbol_level_sinr(&ch, &theta, &w, &budget, rx, 100_000, &mut rng);
            assert!((mc - analytic).abs() <= 0.02 * analytic, "{mc} vs {analytic}");
        }
    }

    /// Empirical signal power over interference-plus-noise power from simulated
    /// received samples `y = αw x + hᴴ_SI w x_own + n`.
    fn symbol_level_sinr(
        ch: &ChannelRealization,
        theta: &PhaseConfig,
        w: &BeamformerPair,
        budget: &LinkBudget,
        rx: Node,
        symbols: usize,
        rng: &mut RngStream,
    ) -> f64 {
        let a = alpha_loop(ch, theta, rx);
        let g: C64 = a.iter().zip(w.of(rx.other()).iter()).map(|(a, w)| a * w).sum();
        let si: C64 = ch.self_interference(rx).iter().zip(w.of(rx).iter()).map(|(h, w)| h.conj() * w).sum();
        let mut sig = 0.0;
        let mut other = 0.0;
        for _ in 0..symbols {
            let x_far = crate::numerics::cgauss(rng, 1.0);
            let x_own = crate::numerics::cgauss(rng, 1.0);
            let n = crate::numerics::cgauss(rng, budget.sigma2);
            sig += (g * x_far).norm_sqr();
            other += (si * x_own + n).norm_sqr();
        }
        sig / other
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn phase_periodicity(seed in any::<u64>(), turns in -3i32..4) {
            let scheme = DeploymentScheme::distributed(4).unwrap();
            let ch = drop(seed, scheme, Scenario::S1, 2);
            let mut rng = RngStream::new(seed, 3);
            let phases: Vec<f64> = (0..4).map(|_| rng.uniform(-PI, PI)).collect();
            let w = random_pair(&mut rng, 2, 0.03);
            let budget = LinkBudget::default();
            let shifted: Vec<f64> = phases.iter().map(|p| p + 2.0 * PI * turns as f64).collect();
            let a = PhaseConfig::new(phases);
            let b = PhaseConfig::new(shifted);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let ra = sum_rate(&ch, &a, &w, &budget).unwrap();
            let rb = sum_rate(&ch, &b, &w, &budget).unwrap();
            prop_assert!((ra - rb).abs() < 1e-9);
            prop_assert!(ra >= 0.0);
        }

        #[test]
        fn phases_always_in_range(x in -1e4f64..1e4) {
            let r = wrap_phase(x);
            prop_assert!((-PI..PI).contains(&r));
        }
    }
}

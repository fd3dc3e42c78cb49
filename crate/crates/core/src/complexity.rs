//! Parameter, multiplication and addition counts of actor-critic designs,
//! and the relative reduction against a baseline design.
//!
//! Every affine layer with fan-in `a` and fan-out `b` holds `(a + 1)·b`
//! parameters and costs `a·b` multiplications and `(a + 1)·b` additions:
//! `(a − 1)·b` for the dot products, `b` for the bias and `b` for the
//! activation. Totals cover the evaluation and target copy of both networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation and target copy.
pub const COPIES: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    P,
    M,
    A,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::P, Metric::M, Metric::A];

    pub fn label(self) -> &'static str {
        match self {
            Metric::P => "P",
            Metric::M => "M",
            Metric::A => "A",
        }
    }
}

/// Layer sizes of both networks. The critic takes `concat_width` extra
/// inputs (the action) at layer `concat_layer`, where 0 is the input layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDesign {
    pub actor: Vec<usize>,
    pub critic: Vec<usize>,
    pub concat_layer: usize,
    pub concat_width: usize,
}

impl NetworkDesign {
    pub fn validate(&self) -> Result<()> {
        for (name, sizes) in [("actor", &self.actor), ("critic", &self.critic)] {
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(Error::Shape(format!("{name} layer sizes {sizes:?} are not a valid network")));
            }
        }
        if self.concat_layer + 1 >= self.critic.len() {
            return Err(Error::Shape(format!(
                "critic concat layer {} has no downstream layer in {:?}",
                self.concat_layer, self.critic
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every critic affine layer.
    pub fn critic_layers(&self) -> Vec<(usize, usize)> {
        self.critic
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let extra = if l == self.concat_layer { self.concat_width } else { 0 };
                (w[0] + extra, w[1])
            })
            .collect()
    }

    pub fn actor_layers(&self) -> Vec<(usize, usize)> {
        self.actor.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Actor `[N+1, ψ₁, ψ₂, N]`, critic `[N+1, ψ₁ (+N), ψ₂, 1]`.
pub fn design_for(n: usize, psi1: usize, psi2: usize) -> Result<NetworkDesign> {
    if n == 0 || psi1 == 0 || psi2 == 0 {
        return Err(Error::Domain(format!("N, ψ₁, ψ₂ must be positive, got ({n}, {psi1}, {psi2})")));
    }
    Ok(NetworkDesign {
        actor: vec![n + 1, psi1, psi2, n],
        critic: vec![n + 1, psi1, psi2, 1],
        concat_layer: 1,
        concat_width: n,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub mults: u64,
    pub adds: u64,
}

impl CostReport {
    pub fn get(&self, metric: Metric) -> u64 {
        match metric {
            Metric::P => self.params,
            Metric::M => self.mults,
            Metric::A => self.adds,
        }
    }

    fn add_layer(&mut self, fan_in: usize, fan_out: usize) {
        let (a, b) = (fan_in as u64, fan_out as u64);
        self.params += (a + 1) * b;
        self.mults += a * b;
        self.adds += (a + 1) * b;
    }

    fn scaled(self, k: u64) -> CostReport {
        CostReport {
            params: k * self.params,
            mults: k * self.mults,
            adds: k * self.adds,
        }
    }
}

/// Single-copy counts of one network given its affine layers.
pub fn network_cost(layers: &[(usize, usize)]) -> CostReport {
    let mut c = CostReport::default();
    for &(a, b) in layers {
        c.add_layer(a, b);
    }
    c
}

/// Combined actor and critic counts, both copies.
pub fn cost(design: &NetworkDesign) -> Result<CostReport> {
    design.validate()?;
    let actor = network_cost(&design.actor_layers());
    let critic = network_cost(&design.critic_layers());
    Ok(CostReport {
        params: actor.params + critic.params,
        mults: actor.mults + critic.mults,
        adds: actor.adds + critic.adds,
    }
    .scaled(COPIES))
}

/// `1 − proposed / baseline` for `metric`.
pub fn reduction(proposed: &CostReport, baseline: &CostReport, metric: Metric) -> Result<f64> {
    let b = baseline.get(metric);
    if b == 0 {
        return Err(Error::Domain(format!("baseline {} count is zero", metric.label())));
    }
    Ok(1.0 - proposed.get(metric) as f64 / b as f64)
}

/// Layer size `base + per_n·N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affine {
    pub base: usize,
    #[serde(default)]
    pub per_n: usize,
}

impl Affine {
    pub const fn fixed(base: usize) -> Self {
        Affine { base, per_n: 0 }
    }

    pub const fn new(base: usize, per_n: usize) -> Self {
        Affine { base, per_n }
    }

    pub fn at(self, n: usize) -> usize {
        self.base + self.per_n * n
    }
}

/// A design family indexed by the number of RIS elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignTemplate {
    pub actor: Vec<Affine>,
    pub critic: Vec<Affine>,
    pub concat_layer: usize,
    pub concat_width: Affine,
}

impl DesignTemplate {
    pub fn proposed(psi1: usize, psi2: usize) -> Self {
        DesignTemplate {
            actor: vec![Affine::new(1, 1), Affine::fixed(psi1), Affine::fixed(psi2), Affine::new(0, 1)],
            critic: vec![Affine::new(1, 1), Affine::fixed(psi1), Affine::fixed(psi2), Affine::fixed(1)],
            concat_layer: 1,
            concat_width: Affine::new(0, 1),
        }
    }

    /// Default comparison design: a three-fold wider state input
    /// (`3N + 1`), hidden sizes (90, 46), and the action joined at the
    /// critic input.
    pub fn assumed_baseline() -> Self {
        DesignTemplate {
            actor: vec![Affine::new(1, 3), Affine::fixed(90), Affine::fixed(46), Affine::new(0, 1)],
            critic: vec![Affine::new(1, 3), Affine::fixed(90), Affine::fixed(46), Affine::fixed(1)],
            concat_layer: 0,
            concat_width: Affine::new(0, 1),
        }
    }

    pub fn at(&self, n: usize) -> Result<NetworkDesign> {
        let d = NetworkDesign {
            actor: self.actor.iter().map(|a| a.at(n)).collect(),
            critic: self.critic.iter().map(|a| a.at(n)).collect(),
            concat_layer: self.concat_layer,
            concat_width: self.concat_width.at(n),
        };
        d.validate()?;
        Ok(d)
    }

    /// Exact coefficients `(c₀, c₁, c₂)` of `count(N) = c₀ + c₁N + c₂N²`.
    fn polynomial(&self, metric: Metric) -> Result<[i128; 3]> {
        let f = |n: usize| -> Result<i128> { Ok(cost(&self.at(n)?)?.get(metric) as i128) };
        // Products of two affine sizes are at most quadratic in N.
        let (y1, y2, y3) = (f(1)?, f(2)?, f(3)?);
        let c2 = (y3 - 2 * y2 + y1) / 2;
        let c1 = y2 - y1 - 3 * c2;
        let c0 = y1 - c1 - c2;
        Ok([c0, c1, c2])
    }
}

/// `lim_{N→∞} reduction(N)` for two design families.
pub fn asymptotic_reduction(proposed: &DesignTemplate, baseline: &DesignTemplate, metric: Metric) -> Result<f64> {
    let p = proposed.polynomial(metric)?;
    let b = baseline.polynomial(metric)?;
    let lead = |c: &[i128; 3]| if c[2] != 0 { (2, c[2]) } else if c[1] != 0 { (1, c[1]) } else { (0, c[0]) };
    let (dp, lp) = lead(&p);
    let (db, lb) = lead(&b);
    if lb == 0 {
        return Err(Error::Domain("baseline count is identically zero".into()));
    }
    Ok(match dp.cmp(&db) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Equal => 1.0 - lp as f64 / lb as f64,
        std::cmp::Ordering::Greater => f64::NEG_INFINITY,
    })
}

/// One row of the complexity table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityRow {
    pub n: usize,
    pub proposed: CostReport,
    pub baseline: CostReport,
    pub reduction: [f64; 3],
}

pub fn complexity_row(proposed: &DesignTemplate, baseline: &DesignTemplate, n: usize) -> Result<ComplexityRow> {
    let p = cost(&proposed.at(n)?)?;
    let b = cost(&baseline.at(n)?)?;
    let mut reduction = [0.0; 3];
    for (slot, metric) in reduction.iter_mut().zip(Metric::ALL) {
        *slot = self::reduction(&p, &b, metric)?;
    }
    Ok(ComplexityRow {
        n,
        proposed: p,
        baseline: b,
        reduction,
    })
}

pub fn format_table(rows: &[ComplexityRow]) -> String {
    let mut out = String::from("N C_P C_M C_A reduction_P reduction_M reduction_A\n");
    for r in rows {
        out.push_str(&format!(
            "{} {} {} {} {:.6} {:.6} {:.6}\n",
            r.n, r.proposed.params, r.proposed.mults, r.proposed.adds, r.reduction[0], r.reduction[1], r.reduction[2]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::{actor_spec, critic_spec};
    use crate::neural::MlpParams;
    use crate::numerics::RngStream;

    /// Counts by walking every weight and bias of instantiated networks.
    fn brute_force(n: usize, hidden: [usize; 2]) -> (u64, u64) {
        let mut params = 0u64;
        let mut weights = 0u64;
        let mut rng = RngStream::new(0, 0);
        for spec in [actor_spec(n, hidden).unwrap(), critic_spec(n, hidden).unwrap()] {
            let p = MlpParams::init(&spec, &mut rng);
            for l in 0..spec.layer_count() {
                for r in 0..spec.fan_out(l) {
                    let _ = p.bias(l, r);
                    params += 1;
                    for c in 0..spec.fan_in(l) {
                        let _ = p.weight(l, r, c);
                        params += 1;
                        weights += 1;
                    }
                }
            }
        }
        (COPIES * params, COPIES * weights)
    }

    #[test]
    fn proposed_design_shapes() {
        let d = design_for(20, 100, 45).unwrap();
        assert_eq!(d.actor, vec![21, 100, 45, 20]);
        assert_eq!(d.critic_layers()[1], (120, 45));
        assert_eq!(design_for(1, 100, 45).unwrap().actor, vec![2, 100, 45, 1]);
        assert!(design_for(0, 100, 45).is_err());
    }

    #[test]
    fn proposed_design_counts() {
        let c = cost(&design_for(20, 100, 45).unwrap()).unwrap();
        assert_eq!(c.params, 2 * (7665 + 7691));
        assert_eq!(c.params, 30712);
        assert_eq!(c.mults, 2 * (7500 + 7545));
        assert_eq!(c.mults, 30090);
        assert_eq!(c.adds, 30712);
    }

    #[test]
    fn single_layer_count() {
        assert_eq!(network_cost(&[(2, 3)]).params, 9);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        for n in 1..=200 {
            let c = cost(&design_for(n, 100, 45).unwrap()).unwrap();
            assert_eq!((c.params, c.mults), brute_force(n, [100, 45]), "N = {n}");
        }
    }

    #[test]
    fn counts_strictly_increase_in_n() {
        let mut last = cost(&design_for(1, 100, 45).unwrap()).unwrap();
        for n in 2..=200 {
            let c = cost(&design_for(n, 100, 45).unwrap()).unwrap();
            for m in Metric::ALL {
                assert!(c.get(m) > last.get(m));
            }
            last = c;
        }
    }

    #[test]
    fn reduction_cases() {
        let p = cost(&design_for(20, 100, 45).unwrap()).unwrap();
        for m in Metric::ALL {
            assert_eq!(reduction(&p, &p, m).unwrap(), 0.0);
        }
        let b = cost(&design_for(20, 200, 90).unwrap()).unwrap();
        assert_eq!(b.params, 97382);
        assert_eq!(reduction(&p, &b, Metric::P).unwrap(), 1.0 - 30712.0 / 97382.0);
        assert!(reduction(&b, &p, Metric::P).unwrap() < 0.0);
        assert!(reduction(&p, &CostReport::default(), Metric::M).is_err());
    }

    #[test]
    fn assumed_baseline_curve() {
        let prop = DesignTemplate::proposed(100, 45);
        let base = DesignTemplate::assumed_baseline();
        let row = complexity_row(&prop, &base, 20).unwrap();
        assert_eq!(row.baseline.params, 2 * (10706 + 11613));
        let a = asymptotic_reduction(&prop, &base, Metric::P).unwrap();
        assert!((a - (1.0 - 291.0 / 677.0)).abs() < 1e-15);
        let mut last = f64::NEG_INFINITY;
        for n in 20..=1000 {
            let r = complexity_row(&prop, &base, n).unwrap().reduction;
            assert!(r[0] >= last);
            last = r[0];
        }
        assert!((a - last).abs() < 0.01);
    }

    #[test]
    fn fixed_hidden_baseline_curve_decreases() {
        let prop = DesignTemplate::proposed(100, 45);
        let base = DesignTemplate::proposed(200, 90);
        let r20 = complexity_row(&prop, &base, 20).unwrap().reduction[0];
        let r60 = complexity_row(&prop, &base, 60).unwrap().reduction[0];
        assert!(r60 < r20);
        let a = asymptotic_reduction(&prop, &base, Metric::P).unwrap();
        assert!(a < r60);
    }

    #[test]
    fn identical_templates_have_zero_reduction() {
        let t = DesignTemplate::assumed_baseline();
        for n in [1, 20, 60] {
            assert_eq!(complexity_row(&t, &t, n).unwrap().reduction, [0.0; 3]);
        }
        assert_eq!(asymptotic_reduction(&t, &t, Metric::A).unwrap(), 0.0);
    }

    #[test]
    fn template_matches_design_for() {
        let t = DesignTemplate::proposed(100, 45);
        for n in [1, 7, 20, 60] {
            assert_eq!(t.at(n).unwrap(), design_for(n, 100, 45).unwrap());
        }
    }

    #[test]
    fn table_header() {
        let rows = vec![complexity_row(&DesignTemplate::proposed(100, 45), &DesignTemplate::assumed_baseline(), 20).unwrap()];
        let t = format_table(&rows);
        assert!(t.starts_with("N C_P C_M C_A reduction_P reduction_M reduction_A\n20 30712 30090 30712 "));
    }
}

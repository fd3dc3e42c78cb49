//! Link geometry, log-distance path loss, and Rician/Rayleigh fading for the
//! single- and distributed-RIS layouts.
//!
//! Every channel is `√PL_linear · h_small` with `E|h_small|² = 1` per entry.
//! The LoS part of a Rician link is built from half-wavelength ULA steering
//! vectors whose spatial frequency is `cos(atan2(vertical, horizontal))` of the
//! node-to-RIS offset. Vectors that enter the signal model conjugated
//! (`hᴴ`) store the conjugate steering, so the two directions of a Rician
//! node–RIS link share their LoS phase profile.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cgauss, ComplexMatrix, ComplexVector, RngStream, C64};

/// Path loss at the reference distance, in dB.
pub const PL0_DB: f64 = -35.6;
/// Reference distance of the path-loss model, in meters.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// One of the two full-duplex nodes: `S1` is the base station, `S2` the user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    S1,
    S2,
}

impl Node {
    pub const BOTH: [Node; 2] = [Node::S1, Node::S2];

    pub fn other(self) -> Node {
        match self {
            Node::S1 => Node::S2,
            Node::S2 => Node::S1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Node::S1 => 0,
            Node::S2 => 1,
        }
    }
}

/// Horizontal/vertical placement of the nodes and surfaces, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// BS–UE horizontal distance.
    pub d1: f64,
    /// Horizontal offset of R₁ from the BS.
    pub d01: f64,
    /// Horizontal offset of R₂ from the BS.
    pub d02: f64,
    pub dv1: f64,
    pub dv2: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            d1: 50.0,
            d01: 1.0,
            d02: 49.0,
            dv1: 2.0,
            dv2: 2.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self, scheme: &DeploymentScheme) -> Result<()> {
        let in_span = |d: f64| d > 0.0 && d < self.d1;
        if !(self.d1 > 0.0) || !in_span(self.d01) || !(self.dv1 > 0.0) {
            return Err(Error::Config(format!(
                "invalid geometry {self:?}: need 0 < d01 < d1 and dv1 > 0"
            )));
        }
        if scheme.kind == SchemeKind::Distributed && (!in_span(self.d02) || !(self.dv2 > 0.0)) {
            return Err(Error::Config(format!(
                "invalid geometry {self:?}: need 0 < d02 < d1 and dv2 > 0"
            )));
        }
        Ok(())
    }

    /// `(horizontal offset from S1, vertical offset)` of RIS `r` (0-based).
    fn ris_position(&self, r: usize) -> (f64, f64) {
        match r {
            0 => (self.d01, self.dv1),
            _ => (self.d02, self.dv2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkDistances {
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
    pub direct: f64,
}

pub fn link_distances(g: &Geometry) -> LinkDistances {
    LinkDistances {
        d11: g.d01.hypot(g.dv1),
        d12: g.d02.hypot(g.dv2),
        d21: (g.d1 - g.d01).hypot(g.dv1),
        d22: (g.d1 - g.d02).hypot(g.dv2),
        direct: g.d1,
    }
}

/// Log-distance path loss `PL₀ − 10 ζ log₁₀(d / D_r)` in dB.
pub fn path_loss_db(d: f64, zeta: f64) -> Result<f64> {
    if !(d >= REFERENCE_DISTANCE_M) {
        return Err(Error::Domain(format!(
            "distance {d} m is below the {REFERENCE_DISTANCE_M} m reference"
        )));
    }
    Ok(PL0_DB - 10.0 * zeta * (d / REFERENCE_DISTANCE_M).log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Single,
    Distributed,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Single => "single",
            SchemeKind::Distributed => "distributed",
        }
    }
}

/// RIS layout with `total_elements` split evenly over one or two surfaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeploymentScheme {
    pub kind: SchemeKind,
    pub total_elements: usize,
}

impl DeploymentScheme {
    pub fn new(kind: SchemeKind, total_elements: usize) -> Result<Self> {
        if total_elements == 0 {
            return Err(Error::Config("RIS element count must be positive".into()));
        }
        if kind == SchemeKind::Distributed && total_elements % 2 != 0 {
            return Err(Error::Config(format!(
                "distributed deployment needs an even element count, got {total_elements}"
            )));
        }
        Ok(DeploymentScheme {
            kind,
            total_elements,
        })
    }

    pub fn single(total_elements: usize) -> Result<Self> {
        Self::new(SchemeKind::Single, total_elements)
    }

    pub fn distributed(total_elements: usize) -> Result<Self> {
        Self::new(SchemeKind::Distributed, total_elements)
    }

    pub fn ris_count(&self) -> usize {
        match self.kind {
            SchemeKind::Single => 1,
            SchemeKind::Distributed => 2,
        }
    }

    pub fn elements_per_ris(&self) -> usize {
        self.total_elements / self.ris_count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }
}

/// Which link Scenario 3 treats as blocked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario3Block {
    #[default]
    S1R2,
    R2S2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fading {
    Rayleigh,
    Rician { k: f64 },
}

/// Identifies a physical link for fading assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Direct,
    SelfInterference,
    /// Both directions of the link between node and RIS `ris` (0-based).
    NodeRis { node: Node, ris: usize },
}

/// Large-scale and fading parameters shared by every drop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    /// Linear Rician K-factor of unblocked links.
    pub rician_k: f64,
    /// Path-loss exponent of the S₁–S₂ link.
    pub zeta_direct: f64,
    /// Path-loss exponent of S₁–R links.
    pub zeta_bs_ris: f64,
    /// Path-loss exponent of S₂–R links.
    pub zeta_ue_ris: f64,
    pub si_path_loss_db: f64,
    /// Model the direct S₁–S₂ link as Rician instead of Rayleigh.
    pub direct_rician: bool,
    pub scenario3_block: Scenario3Block,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            rician_k: 10.0,
            zeta_direct: 4.0,
            zeta_bs_ris: 2.1,
            zeta_ue_ris: 2.2,
            si_path_loss_db: -95.0,
            direct_rician: false,
            scenario3_block: Scenario3Block::S1R2,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rician_k >= 0.0) {
            return Err(Error::Config(format!(
                "Rician K must be >= 0, got {}",
                self.rician_k
            )));
        }
        Ok(())
    }

    fn blocked(&self, scenario: Scenario, node: Node, ris: usize) -> bool {
        match scenario {
            Scenario::S1 => false,
            Scenario::S2 => node == Node::S2 && ris == 0,
            Scenario::S3 => match self.scenario3_block {
                Scenario3Block::S1R2 => node == Node::S1 && ris == 1,
                Scenario3Block::R2S2 => node == Node::S2 && ris == 1,
            },
        }
    }

    /// Fading assignment of `link` under `scenario`.
    pub fn fading(&self, scenario: Scenario, link: Link) -> Fading {
        let rician = Fading::Rician { k: self.rician_k };
        match link {
            Link::SelfInterference => Fading::Rayleigh,
            Link::Direct if self.direct_rician => rician,
            Link::Direct => Fading::Rayleigh,
            Link::NodeRis { node, ris } if self.blocked(scenario, node, ris) => Fading::Rayleigh,
            Link::NodeRis { .. } => rician,
        }
    }
}

/// Deterministic LoS construction for [`sample_link`].
///
/// `row_cos`/`col_cos` are the ULA spatial frequencies (cosine of the
/// arrival/departure angle) of the row and column arrays; `None` means a
/// single-element side. With `conjugate`, the stored LoS is conjugated.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LosSpec {
    pub row_cos: Option<f64>,
    pub col_cos: Option<f64>,
    pub conjugate: bool,
}

fn steering(n: usize, cos: Option<f64>) -> Vec<C64> {
    match cos {
        Some(c) => (0..n)
            .map(|k| C64::from_polar(1.0, PI * k as f64 * c))
            .collect(),
        None => vec![C64::new(1.0, 0.0); n],
    }
}

impl LosSpec {
    fn matrix(&self, rows: usize, cols: usize) -> ComplexMatrix {
        let a = steering(rows, self.row_cos);
        let b = steering(cols, self.col_cos);
        ComplexMatrix::from_fn(rows, cols, |r, c| {
            let z = a[r] * b[c];
            if self.conjugate {
                z.conj()
            } else {
                z
            }
        })
    }
}

/// Draws one `rows × cols` link with path loss `pl_db` and the given fading.
pub fn sample_link(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    pl_db: f64,
    fading: Fading,
    los: &LosSpec,
) -> Result<ComplexMatrix> {
    let amplitude = db_to_linear(pl_db).sqrt();
    match fading {
        Fading::Rayleigh => Ok(ComplexMatrix::from_fn(rows, cols, |_, _| {
            cgauss(rng, 1.0) * amplitude
        })),
        Fading::Rician { k } => {
            if !(k >= 0.0) {
                return Err(Error::Domain(format!("Rician K must be >= 0, got {k}")));
            }
            let los_weight = (k / (k + 1.0)).sqrt();
            let nlos_weight = (1.0 / (k + 1.0)).sqrt();
            let los = los.matrix(rows, cols);
            Ok(ComplexMatrix::from_fn(rows, cols, |r, c| {
                (los.get(r, c) * los_weight + cgauss(rng, 1.0) * nlos_weight) * amplitude
            }))
        }
    }
}

/// Channels touching RIS `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct RisChannels {
    /// `H_{S1 R_r}`, `N_r × M`.
    pub from_s1: ComplexMatrix,
    /// `H_{S2 R_r}`, `N_r × M`.
    pub from_s2: ComplexMatrix,
    /// `h_{R_r S1}`, enters the model as `hᴴ`.
    pub to_s1: ComplexVector,
    /// `h_{R_r S2}`, enters the model as `hᴴ`.
    pub to_s2: ComplexVector,
}

impl RisChannels {
    pub fn zeros(elements: usize, antennas: usize) -> Self {
        RisChannels {
            from_s1: ComplexMatrix::zeros(elements, antennas),
            from_s2: ComplexMatrix::zeros(elements, antennas),
            to_s1: ComplexVector::zeros(elements),
            to_s2: ComplexVector::zeros(elements),
        }
    }

    pub fn elements(&self) -> usize {
        self.to_s1.len()
    }

    pub fn from_node(&self, node: Node) -> &ComplexMatrix {
        match node {
            Node::S1 => &self.from_s1,
            Node::S2 => &self.from_s2,
        }
    }

    pub fn to_node(&self, node: Node) -> &ComplexVector {
        match node {
            Node::S1 => &self.to_s1,
            Node::S2 => &self.to_s2,
        }
    }
}

/// One drop of every channel coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub antennas: usize,
    pub ris: Vec<RisChannels>,
    /// `h_{S1 S2}`: S₁ transmit array to S₂'s receive antenna.
    pub direct_s1_s2: ComplexVector,
    /// `h_{S2 S1}`.
    pub direct_s2_s1: ComplexVector,
    /// `h_{S1 S1}`: self-interference at S₁.
    pub si_s1: ComplexVector,
    pub si_s2: ComplexVector,
}

impl ChannelRealization {
    /// All-zero channels with the shapes of `scheme`.
    pub fn zeros(scheme: &DeploymentScheme, antennas: usize) -> Self {
        ChannelRealization {
            antennas,
            ris: (0..scheme.ris_count())
                .map(|_| RisChannels::zeros(scheme.elements_per_ris(), antennas))
                .collect(),
            direct_s1_s2: ComplexVector::zeros(antennas),
            direct_s2_s1: ComplexVector::zeros(antennas),
            si_s1: ComplexVector::zeros(antennas),
            si_s2: ComplexVector::zeros(antennas),
        }
    }

    pub fn total_elements(&self) -> usize {
        self.ris.iter().map(RisChannels::elements).sum()
    }

    /// Direct channel from the other node into `rx`.
    pub fn direct_to(&self, rx: Node) -> &ComplexVector {
        match rx {
            Node::S1 => &self.direct_s2_s1,
            Node::S2 => &self.direct_s1_s2,
        }
    }

    pub fn self_interference(&self, node: Node) -> &ComplexVector {
        match node {
            Node::S1 => &self.si_s1,
            Node::S2 => &self.si_s2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.antennas;
        for v in [
            &self.direct_s1_s2,
            &self.direct_s2_s1,
            &self.si_s1,
            &self.si_s2,
        ] {
            if v.len() != m {
                return Err(Error::Shape(format!(
                    "node-to-node channel of length {} with M = {m}",
                    v.len()
                )));
            }
        }
        for (r, ris) in self.ris.iter().enumerate() {
            let n = ris.elements();
            if ris.to_s2.len() != n
                || ris.from_s1.shape() != (n, m)
                || ris.from_s2.shape() != (n, m)
            {
                return Err(Error::Shape(format!(
                    "RIS {} channels are inconsistent with N_r = {n}, M = {m}",
                    r + 1
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.ris.iter().all(|r| {
            r.from_s1.is_finite() && r.from_s2.is_finite() && r.to_s1.is_finite() && r.to_s2.is_finite()
        }) && self.direct_s1_s2.is_finite()
            && self.direct_s2_s1.is_finite()
            && self.si_s1.is_finite()
            && self.si_s2.is_finite()
    }

    /// Named links in dump order.
    pub fn links(&self) -> Vec<(String, ComplexMatrix)> {
        let col = |v: &ComplexVector| {
            ComplexMatrix::from_row_major(v.len(), 1, v.as_slice().to_vec())
                .expect("vector reshapes to a column")
        };
        let mut out = Vec::new();
        for (r, ris) in self.ris.iter().enumerate() {
            let r = r + 1;
            out.push((format!("H_S1R{r}"), ris.from_s1.clone()));
            out.push((format!("H_S2R{r}"), ris.from_s2.clone()));
            out.push((format!("h_R{r}S1"), col(&ris.to_s1)));
            out.push((format!("h_R{r}S2"), col(&ris.to_s2)));
        }
        out.push(("h_S1S2".into(), col(&self.direct_s1_s2)));
        out.push(("h_S2S1".into(), col(&self.direct_s2_s1)));
        out.push(("h_S1S1".into(), col(&self.si_s1)));
        out.push(("h_S2S2".into(), col(&self.si_s2)));
        out
    }
}

fn node_ris_los(g: &Geometry, node: Node, ris: usize) -> (f64, f64) {
    let (offset, dv) = g.ris_position(ris);
    let horizontal = match node {
        Node::S1 => offset,
        Node::S2 => offset - g.d1,
    };
    let cos = dv.atan2(horizontal).cos();
    (cos, cos)
}

/// Draws a full channel realization for the scheme and scenario.
pub fn realize_drop(
    rng: &mut RngStream,
    model: &ChannelModel,
    geometry: &Geometry,
    scheme: &DeploymentScheme,
    scenario: Scenario,
    antennas: usize,
) -> Result<ChannelRealization> {
    if antennas == 0 {
        return Err(Error::Config("antenna count M must be positive".into()));
    }
    model.validate()?;
    geometry.validate(scheme)?;
    let n_r = scheme.elements_per_ris();
    let dist = link_distances(geometry);

    let mut ris = Vec::with_capacity(scheme.ris_count());
    for r in 0..scheme.ris_count() {
        let (d_s1, d_s2) = match r {
            0 => (dist.d11, dist.d21),
            _ => (dist.d12, dist.d22),
        };
        let pl_s1 = path_loss_db(d_s1, model.zeta_bs_ris)?;
        let pl_s2 = path_loss_db(d_s2, model.zeta_ue_ris)?;
        let fad_s1 = model.fading(scenario, Link::NodeRis { node: Node::S1, ris: r });
        let fad_s2 = model.fading(scenario, Link::NodeRis { node: Node::S2, ris: r });
        let (ris_cos1, node_cos1) = node_ris_los(geometry, Node::S1, r);
        let (ris_cos2, node_cos2) = node_ris_los(geometry, Node::S2, r);

        let into_ris = |ris_cos, node_cos| LosSpec {
            row_cos: Some(ris_cos),
            col_cos: Some(node_cos),
            conjugate: false,
        };
        let out_of_ris = |ris_cos| LosSpec {
            row_cos: Some(ris_cos),
            col_cos: None,
            conjugate: true,
        };

        let from_s1 = sample_link(rng, n_r, antennas, pl_s1, fad_s1, &into_ris(ris_cos1, node_cos1))?;
        let to_s1 = sample_link(rng, n_r, 1, pl_s1, fad_s1, &out_of_ris(ris_cos1))?.column(0);
        let from_s2 = sample_link(rng, n_r, antennas, pl_s2, fad_s2, &into_ris(ris_cos2, node_cos2))?;
        let to_s2 = sample_link(rng, n_r, 1, pl_s2, fad_s2, &out_of_ris(ris_cos2))?.column(0);
        ris.push(RisChannels {
            from_s1,
            from_s2,
            to_s1,
            to_s2,
        });
    }

    let pl_direct = path_loss_db(dist.direct, model.zeta_direct)?;
    let fad_direct = model.fading(scenario, Link::Direct);
    // Direct link along the horizontal axis: S1 sees S2 at angle 0, S2 sees S1 at π.
    let direct = |cos: f64| LosSpec {
        row_cos: Some(cos),
        col_cos: None,
        conjugate: true,
    };
    let direct_s1_s2 = sample_link(rng, antennas, 1, pl_direct, fad_direct, &direct(1.0))?.column(0);
    let direct_s2_s1 = sample_link(rng, antennas, 1, pl_direct, fad_direct, &direct(-1.0))?.column(0);
    let si = LosSpec::default();
    let si_s1 = sample_link(rng, antennas, 1, model.si_path_loss_db, Fading::Rayleigh, &si)?.column(0);
    let si_s2 = sample_link(rng, antennas, 1, model.si_path_loss_db, Fading::Rayleigh, &si)?.column(0);

    Ok(ChannelRealization {
        antennas,
        ris,
        direct_s1_s2,
        direct_s2_s1,
        si_s1,
        si_s2,
    })
}

/// Writes the line-oriented channel dump: `link rows cols re im re im …`.
pub fn write_channel_dump(ch: &ChannelRealization, path: &Path) -> Result<()> {
    let mut text = String::from("# link rows cols re im ... (row-major)\n");
    for (name, m) in ch.links() {
        write!(text, "{name} {} {}", m.rows(), m.cols()).unwrap();
        for z in m.as_slice() {
            write!(text, " {:e} {:e}", z.re, z.im).unwrap();
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_channel_dump(path: &Path) -> Result<ChannelRealization> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_channel_dump(&text)
}

pub fn parse_channel_dump(text: &str) -> Result<ChannelRealization> {
    let mut links: BTreeMap<String, ComplexMatrix> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("channel dump line {}: {what}", lineno + 1));
        let mut fields = line.split_ascii_whitespace();
        let name = fields.next().ok_or_else(|| bad("missing link name"))?;
        let rows: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad row count"))?;
        let cols: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad column count"))?;
        let values = fields
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 2 * rows * cols {
            return Err(bad("value count does not match shape"));
        }
        let data = values.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        links.insert(name.to_string(), ComplexMatrix::from_row_major(rows, cols, data)?);
    }

    let mut take = |name: &str| {
        links
            .remove(name)
            .ok_or_else(|| Error::Parse(format!("channel dump is missing link {name}")))
    };
    let column = |m: ComplexMatrix| m.column(0);
    let direct_s1_s2 = column(take("h_S1S2")?);
    let direct_s2_s1 = column(take("h_S2S1")?);
    let si_s1 = column(take("h_S1S1")?);
    let si_s2 = column(take("h_S2S2")?);
    let mut ris = Vec::new();
    for r in 1..=2 {
        let Ok(from_s1) = take(&format!("H_S1R{r}")) else {
            break;
        };
        ris.push(RisChannels {
            from_s1,
            from_s2: take(&format!("H_S2R{r}"))?,
            to_s1: column(take(&format!("h_R{r}S1"))?),
            to_s2: column(take(&format!("h_R{r}S2"))?),
        });
    }
    let ch = ChannelRealization {
        antennas: direct_s1_s2.len(),
        ris,
        direct_s1_s2,
        direct_s2_s1,
        si_s1,
        si_s2,
    };
    ch.validate()?;
    Ok(ch)
}

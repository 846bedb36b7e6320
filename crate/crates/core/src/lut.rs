//! Lookup-table equalizer: design of the channel quantizer, forward, backward
//! and final tables with the information bottleneck method, table-driven
//! runtime, sub-block processing and bundle serialization.
//!
//! Message levels are 0-based. Every quantizer orders its levels by ascending
//! reliability for symbol index 0 (`+1`), so for sign-symmetric designs level
//! `t` and level `2^w - 1 - t` are complements.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::channel::{build_trellis, ChannelSpec, Trellis};
use crate::ib::{
    binary_llr_quantizer, compress_joint, ib_cluster_from, mutual_information,
    scalar_quantizer_dp, scalar_quantizer_dp_symmetric, IbOptions, JointPmf, Mapping,
};
use crate::{Error, Result};

/// Magnitude limit of every LLR table.
pub const LLR_CLIP: f64 = 20.0;

const BUNDLE_MAGIC: &[u8; 4] = b"IBEQ";
const BUNDLE_VERSION: u16 = 1;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Index of the quantizer cell holding `v`; values on a threshold go to the lower cell.
#[inline]
fn level_of(thresholds: &[f64], v: f64) -> usize {
    thresholds.partition_point(|&t| t < v)
}

/// Message widths in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Widths {
    pub w_r: u32,
    pub w_d: u32,
    pub w_alpha: u32,
    pub w_beta: u32,
    pub w_e: u32,
}

impl Default for Widths {
    fn default() -> Self {
        Widths {
            w_r: 5,
            w_d: 3,
            w_alpha: 8,
            w_beta: 8,
            w_e: 4,
        }
    }
}

impl Widths {
    pub fn new(w_r: u32, w_d: u32, w_alpha: u32, w_beta: u32, w_e: u32) -> Result<Self> {
        let w = Widths {
            w_r,
            w_d,
            w_alpha,
            w_beta,
            w_e,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_r", self.w_r),
            ("w_d", self.w_d),
            ("w_alpha", self.w_alpha),
            ("w_beta", self.w_beta),
            ("w_e", self.w_e),
        ] {
            if !(1..=16).contains(&v) {
                return Err(Error::Range(format!("{name}={v} is outside 1..=16")));
            }
        }
        Ok(())
    }
}

fn levels(w: u32) -> usize {
    1usize << w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Reduced,
}

/// Variant per update, written like `FFF`, `RRF` or `RRR` (forward, backward, final).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Structure {
    pub forward: Variant,
    pub backward: Variant,
    pub final_update: Variant,
}

impl Structure {
    pub const FFF: Structure = Structure {
        forward: Variant::Full,
        backward: Variant::Full,
        final_update: Variant::Full,
    };
    pub const RRF: Structure = Structure {
        forward: Variant::Reduced,
        backward: Variant::Reduced,
        final_update: Variant::Full,
    };
    pub const RRR: Structure = Structure {
        forward: Variant::Reduced,
        backward: Variant::Reduced,
        final_update: Variant::Reduced,
    };
}

impl FromStr for Structure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<Variant> = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'F' => Ok(Variant::Full),
                'R' => Ok(Variant::Reduced),
                other => Err(Error::Config(format!("unknown structure letter '{other}'"))),
            })
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(Error::Config(format!("structure '{s}' needs three letters")));
        }
        Ok(Structure {
            forward: v[0],
            backward: v[1],
            final_update: v[2],
        })
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |v: Variant| if v == Variant::Full { 'F' } else { 'R' };
        write!(
            f,
            "{}{}{}",
            c(self.forward),
            c(self.backward),
            c(self.final_update)
        )
    }
}

/// Input order of the reduced forward/backward chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ReducedOrder {
    /// `(t, t_r) -> u`, then `(u, t_d) -> t'`.
    #[default]
    ChannelFirst,
    /// `(t, t_d) -> u`, then `(u, t_r) -> t'`.
    FeedbackFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryCounts {
    pub forward: u64,
    pub backward: u64,
    pub final_update: u64,
}

impl EntryCounts {
    pub fn total(&self) -> u64 {
        self.forward + self.backward + self.final_update
    }
}

/// Number of table entries of every update for the given widths.
pub fn entry_counts(w: &Widths, s: Structure) -> EntryCounts {
    let p = |b: u32| 1u64 << b;
    let msg = |wm: u32, v: Variant| match v {
        Variant::Full => p(wm + w.w_r + w.w_d),
        Variant::Reduced => p(wm) * (p(w.w_r) + p(w.w_d)),
    };
    EntryCounts {
        forward: msg(w.w_alpha, s.forward),
        backward: msg(w.w_beta, s.backward),
        final_update: match s.final_update {
            Variant::Full => p(w.w_alpha + w.w_r + w.w_beta),
            Variant::Reduced => p(w.w_alpha + w.w_beta),
        },
    }
}

/// Dense multi-input lookup table, row-major over `dims`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lut {
    pub dims: Vec<usize>,
    pub levels: usize,
    pub table: Vec<u16>,
}

impl Lut {
    pub fn from_mapping(dims: Vec<usize>, m: &Mapping) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != m.len() || m.num_clusters > 1 << 16 {
            return Err(Error::Precondition(format!(
                "mapping of {} entries does not fit dims {dims:?}",
                m.len()
            )));
        }
        Ok(Lut {
            dims,
            levels: m.num_clusters,
            table: m.assign.iter().map(|&v| v as u16).collect(),
        })
    }

    #[inline]
    pub fn get2(&self, a: usize, b: usize) -> usize {
        self.table[a * self.dims[1] + b] as usize
    }

    #[inline]
    pub fn get3(&self, a: usize, b: usize, c: usize) -> usize {
        self.table[(a * self.dims[1] + b) * self.dims[2] + c] as usize
    }

    pub fn entries(&self) -> usize {
        self.table.len()
    }

    pub fn input_bits(&self) -> Vec<u32> {
        self.dims.iter().map(|d| d.trailing_zeros()).collect()
    }

    pub fn output_bits(&self) -> u32 {
        self.levels.trailing_zeros()
    }

    /// Checks `f(complement inputs) = complement f(inputs)` for every entry.
    pub fn is_complement_symmetric(&self) -> bool {
        let n = self.table.len();
        (0..n).all(|i| self.table[n - 1 - i] as usize == self.levels - 1 - self.table[i] as usize)
    }
}

/// Tables of one update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LutStage {
    Full(Lut),
    /// Chain of two-input tables; the reduced final update holds a single table.
    Reduced { luts: Vec<Lut>, order: ReducedOrder },
}

impl LutStage {
    pub fn entries(&self) -> u64 {
        self.luts().iter().map(|l| l.entries() as u64).sum()
    }

    pub fn luts(&self) -> Vec<&Lut> {
        match self {
            LutStage::Full(l) => vec![l],
            LutStage::Reduced { luts, .. } => luts.iter().collect(),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            LutStage::Full(_) => Variant::Full,
            LutStage::Reduced { .. } => Variant::Reduced,
        }
    }

    /// Forward or backward update `(t, t_r, t_d) -> t'`.
    #[inline]
    pub fn update(&self, t: usize, tr: usize, td: usize) -> usize {
        match self {
            LutStage::Full(l) => l.get3(t, tr, td),
            LutStage::Reduced { luts, order } => match order {
                ReducedOrder::ChannelFirst => luts[1].get2(luts[0].get2(t, tr), td),
                ReducedOrder::FeedbackFirst => luts[1].get2(luts[0].get2(t, td), tr),
            },
        }
    }
}

/// Channel-output quantizer `r -> t_r`.
#[derive(Clone, Debug)]
pub struct ChannelQuantizer {
    /// Ascending cell boundaries, `2^{w_r} - 1` of them.
    pub thresholds: Vec<f64>,
    /// `p((s, d), t_r)` with relevant index `s * |D| + d`.
    pub joint: JointPmf,
    pub info: f64,
    pub symmetric: bool,
}

impl ChannelQuantizer {
    pub fn levels(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn quantize(&self, r: f64) -> usize {
        level_of(&self.thresholds, r)
    }
}

/// Designs the channel quantizer on a fine uniform grid over
/// `[min x_ch - 5 sigma, max x_ch + 5 sigma]` with relevant variable `(s, d)`.
pub fn design_channel_quantizer(
    spec: &ChannelSpec,
    w_r: u32,
    grid_points: usize,
) -> Result<ChannelQuantizer> {
    let trellis = build_trellis(spec)?;
    let sigma = spec.noise_std();
    if !(sigma > 0.0) {
        return Err(Error::Precondition("quantizer design needs N_0 > 0".into()));
    }
    let lv = levels(w_r);
    let symmetric = spec.is_sign_symmetric() && lv.is_multiple_of(2);
    let grid_points = grid_points + grid_points % 2;
    if grid_points < lv {
        return Err(Error::Range(format!(
            "{grid_points} grid points for {lv} levels"
        )));
    }
    let m = trellis.num_symbols;
    let nx = trellis.num_states * m;
    let xs: Vec<f64> = (0..nx).map(|x| trellis.output(x / m, x % m)).collect();
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if symmetric {
        let a = xmin.abs().max(xmax.abs()) + 5.0 * sigma;
        (-a, a)
    } else {
        (xmin - 5.0 * sigma, xmax + 5.0 * sigma)
    };
    let step = (hi - lo) / grid_points as f64;
    let mut data = vec![0.0; grid_points * nx];
    for g in 0..grid_points {
        let (e0, e1) = (lo + g as f64 * step, lo + (g + 1) as f64 * step);
        for (x, &mu) in xs.iter().enumerate() {
            data[g * nx + x] =
                (normal_cdf((e1 - mu) / sigma) - normal_cdf((e0 - mu) / sigma)) / nx as f64;
        }
    }
    let inside: f64 = data.iter().sum();
    if inside < 0.99 {
        return Err(Error::Design(format!(
            "quantizer grid covers only {:.2}% of the mass",
            100.0 * inside
        )));
    }
    let grid = JointPmf::normalized(nx, grid_points, data)?;
    let q = if symmetric {
        scalar_quantizer_dp_symmetric(&grid, lv)?
    } else {
        scalar_quantizer_dp(&grid, lv)?
    };
    let thresholds = q.starts[1..]
        .iter()
        .map(|&s| lo + s as f64 * step)
        .collect();
    let joint = compress_joint(&grid, &q.mapping)?;
    Ok(ChannelQuantizer {
        thresholds,
        info: mutual_information(&joint),
        joint,
        symmetric,
    })
}

/// Design-time model of the decoder feedback `p(d, t_d)`.
#[derive(Clone, Debug)]
pub struct FeedbackModel {
    pub target: f64,
    /// Standard deviation of the consistent Gaussian LLR.
    pub sigma: f64,
    /// Ascending LLR thresholds shared with the runtime quantizer.
    pub thresholds: Vec<f64>,
    /// `p(d, t_d)` with `d` as relevant index.
    pub joint: JointPmf,
    pub info: f64,
    /// `ln p(d=+1|t_d) / p(d=-1|t_d)` per level, 0 for unused levels.
    pub llr: Vec<f64>,
}

impl FeedbackModel {
    pub fn levels(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn quantize(&self, llr: f64) -> usize {
        level_of(&self.thresholds, llr)
    }

    /// Level used when no feedback is available.
    pub fn neutral(&self) -> usize {
        self.levels() / 2 - 1
    }
}

fn llr_of_column(p0: f64, p1: f64) -> Option<f64> {
    if p0 + p1 <= 0.0 {
        None
    } else if p1 <= 0.0 {
        Some(LLR_CLIP)
    } else if p0 <= 0.0 {
        Some(-LLR_CLIP)
    } else {
        Some((p0 / p1).ln().clamp(-LLR_CLIP, LLR_CLIP))
    }
}

/// Per-level LLRs of a binary joint; antisymmetric when `symmetric`.
fn binary_llr_table(joint: &JointPmf, symmetric: bool) -> (Vec<f64>, Vec<usize>) {
    let n = joint.ny();
    let mut out = vec![0.0; n];
    let mut flagged = Vec::new();
    for (t, v) in out.iter_mut().enumerate() {
        match llr_of_column(joint.get(0, t), joint.get(1, t)) {
            Some(l) => *v = l,
            None => flagged.push(t),
        }
    }
    if symmetric {
        for t in 0..n / 2 {
            out[n - 1 - t] = -out[t];
        }
    }
    (out, flagged)
}

/// Thresholds, joint pmf with the bit and its information.
type GaussianQuantizer = (Vec<f64>, JointPmf, f64);

fn gaussian_llr_quantizer(sigma: f64, lv: usize) -> Result<GaussianQuantizer> {
    const GRID: usize = 512;
    let mu = sigma * sigma / 2.0;
    let a = mu + 6.0 * sigma;
    let step = 2.0 * a / GRID as f64;
    let mut data = vec![0.0; GRID * 2];
    for g in 0..GRID {
        let (e0, e1) = (-a + g as f64 * step, -a + (g + 1) as f64 * step);
        data[2 * g] = 0.5 * (normal_cdf((e1 - mu) / sigma) - normal_cdf((e0 - mu) / sigma));
        data[2 * g + 1] = 0.5 * (normal_cdf((e1 + mu) / sigma) - normal_cdf((e0 + mu) / sigma));
    }
    let grid = JointPmf::normalized(2, GRID, data)?;
    let q = scalar_quantizer_dp_symmetric(&grid, lv)?;
    let thresholds = q.starts[1..].iter().map(|&s| -a + s as f64 * step).collect();
    let joint = compress_joint(&grid, &q.mapping)?;
    let info = mutual_information(&joint);
    Ok((thresholds, joint, info))
}

/// Quantized consistent-Gaussian feedback model with `I(D;T_d)` at most
/// `i_design` and as close to it as the bisection allows.
pub fn model_feedback_pmf(i_design: f64, w_d: u32) -> Result<FeedbackModel> {
    if !(0.0..=1.0).contains(&i_design) {
        return Err(Error::Range(format!("I_design={i_design} is outside [0, 1]")));
    }
    if !(1..=16).contains(&w_d) {
        return Err(Error::Range(format!("w_d={w_d} is outside 1..=16")));
    }
    let lv = levels(w_d);
    let half = lv / 2;
    if i_design <= 0.0 {
        let mut thresholds = vec![f64::NEG_INFINITY; half - 1];
        thresholds.push(0.0);
        thresholds.extend(std::iter::repeat_n(f64::INFINITY, half - 1));
        let mut data = vec![0.0; lv * 2];
        for t in [half - 1, half] {
            data[2 * t] = 0.25;
            data[2 * t + 1] = 0.25;
        }
        return Ok(FeedbackModel {
            target: 0.0,
            sigma: 0.0,
            thresholds,
            joint: JointPmf::new(2, lv, data)?,
            info: 0.0,
            llr: vec![0.0; lv],
        });
    }
    const SIGMA_MAX: f64 = 60.0;
    let (mut lo, mut hi) = (0.0f64, SIGMA_MAX);
    let top = gaussian_llr_quantizer(hi, lv)?;
    let chosen = if top.2 <= i_design {
        (hi, top)
    } else {
        let mut best: Option<(f64, GaussianQuantizer)> = None;
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let cand = gaussian_llr_quantizer(mid, lv)?;
            if cand.2 <= i_design {
                lo = mid;
                best = Some((mid, cand));
            } else {
                hi = mid;
            }
        }
        match best {
            Some(b) => b,
            None => (hi, gaussian_llr_quantizer(hi, lv)?),
        }
    };
    let (sigma, (thresholds, joint, info)) = chosen;
    let (llr, _) = binary_llr_table(&joint, true);
    Ok(FeedbackModel {
        target: i_design,
        sigma,
        thresholds,
        joint,
        info,
        llr,
    })
}

/// Direction of a message recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Statistics shared by all table designs of one equalizer.
#[derive(Clone, Debug)]
pub struct DesignContext {
    pub trellis: Trellis,
    /// `p(t_r | s, d)` at `[(s * 2 + d) * nr + t_r]`.
    p_tr: Vec<f64>,
    /// `p(d, t_d)` at `[d * nd + t_d]`.
    p_dtd: Vec<f64>,
    pub nr: usize,
    pub nd: usize,
    pub symmetric: bool,
}

impl DesignContext {
    pub fn new(
        spec: &ChannelSpec,
        cq: &ChannelQuantizer,
        fb: &FeedbackModel,
        symmetric: bool,
    ) -> Result<Self> {
        let trellis = build_trellis(spec)?;
        if trellis.num_symbols != 2 {
            return Err(Error::Precondition("table design is binary-only".into()));
        }
        let nr = cq.levels();
        let nd = fb.levels();
        let px = cq.joint.px();
        let mut p_tr = vec![0.0; px.len() * nr];
        for (x, &pxv) in px.iter().enumerate() {
            for t in 0..nr {
                p_tr[x * nr + t] = if pxv > 0.0 { cq.joint.get(x, t) / pxv } else { 0.0 };
            }
        }
        let mut p_dtd = vec![0.0; 2 * nd];
        for d in 0..2 {
            for t in 0..nd {
                p_dtd[d * nd + t] = fb.joint.get(d, t);
            }
        }
        Ok(DesignContext {
            trellis,
            p_tr,
            p_dtd,
            nr,
            nd,
            symmetric: symmetric && cq.symmetric,
        })
    }

    pub fn num_states(&self) -> usize {
        self.trellis.num_states
    }

    /// `p(x, t, t_r, t_d)` at `[((t * nr + t_r) * nd + t_d) * S + x]`, where the
    /// message joint `msg` is over the input state and `x` is the output state.
    pub fn update_joint(&self, msg: &JointPmf, dir: Direction) -> Vec<f64> {
        let ns = self.num_states();
        let (nr, nd) = (self.nr, self.nd);
        let nt = msg.ny();
        let mut out = vec![0.0; nt * nr * nd * ns];
        for s in 0..ns {
            for d in 0..2 {
                let sp = self.trellis.next(s, d);
                let (inp, outx) = match dir {
                    Direction::Forward => (s, sp),
                    Direction::Backward => (sp, s),
                };
                let ptr = &self.p_tr[(s * 2 + d) * nr..(s * 2 + d + 1) * nr];
                let pd = &self.p_dtd[d * nd..(d + 1) * nd];
                for t in 0..nt {
                    let m = msg.get(inp, t);
                    if m == 0.0 {
                        continue;
                    }
                    for (tr, &a) in ptr.iter().enumerate() {
                        let a = m * a;
                        if a == 0.0 {
                            continue;
                        }
                        let base = (t * nr + tr) * nd;
                        for (td, &b) in pd.iter().enumerate() {
                            out[(base + td) * ns + outx] += a * b;
                        }
                    }
                }
            }
        }
        out
    }
}

/// `p(s, t) = 1 / (S * 2^w)`.
pub fn uniform_message(num_states: usize, w: u32) -> JointPmf {
    let n = num_states * levels(w);
    JointPmf::new(num_states, levels(w), vec![1.0 / n as f64; n]).expect("uniform table")
}

/// Label order: clusters sorted by the LLR of the state bit most informative
/// about them; complement pairs stay at `(i, k-1-i)` in symmetric mode.
fn relabel_permutation(joint: &JointPmf, symmetric: bool) -> Vec<u32> {
    let nx = joint.nx();
    let k = joint.ny();
    let bits = (nx.max(2)).trailing_zeros() as usize;
    let marginal = |b: usize| -> Vec<f64> {
        let mut v = vec![0.0; 2 * k];
        for t in 0..k {
            for x in 0..nx {
                v[t * 2 + ((x >> b) & 1)] += joint.get(x, t);
            }
        }
        v
    };
    let mut best_bit = 0;
    let mut best_mi = f64::NEG_INFINITY;
    for b in 0..bits {
        let m = marginal(b);
        let mi = JointPmf::normalized(2, k, m)
            .map(|p| mutual_information(&p))
            .unwrap_or(0.0);
        if mi > best_mi + 1e-12 {
            best_mi = mi;
            best_bit = b;
        }
    }
    let m = marginal(best_bit);
    let llr: Vec<f64> = (0..k)
        .map(|t| llr_of_column(m[2 * t], m[2 * t + 1]).unwrap_or(0.0))
        .collect();
    let mut perm = vec![0u32; k];
    if symmetric && k.is_multiple_of(2) {
        let mut pairs: Vec<(usize, usize)> = (0..k / 2)
            .map(|t| {
                let c = k - 1 - t;
                if llr[t] <= llr[c] {
                    (t, c)
                } else {
                    (c, t)
                }
            })
            .collect();
        pairs.sort_by(|a, b| llr[a.0].total_cmp(&llr[b.0]));
        for (i, &(lo, hi)) in pairs.iter().enumerate() {
            perm[lo] = i as u32;
            perm[hi] = (k - 1 - i) as u32;
        }
    } else {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| llr[a].total_cmp(&llr[b]));
        for (i, &t) in order.iter().enumerate() {
            perm[t] = i as u32;
        }
    }
    perm
}

fn ib_design(
    p: &JointPmf,
    k: usize,
    symmetric: bool,
    init: Option<&Mapping>,
    opts: &DesignOptions,
    seed: u64,
) -> Result<(Mapping, usize)> {
    let res = ib_cluster_from(
        p,
        k,
        &IbOptions {
            restarts: if init.is_some() { 0 } else { opts.restarts.max(1) },
            symmetric,
            seed,
            max_passes: opts.max_passes,
        },
        init,
    )?;
    Ok((res.mapping, res.zero_mass.len()))
}

/// Output of a forward or backward design.
#[derive(Clone, Debug)]
pub struct RecursionDesign {
    pub stage: LutStage,
    /// Map from `(t, t_r, t_d)` to the output message.
    pub composite: Mapping,
    /// `I(X; T')` in bits after every design recursion.
    pub trace: Vec<f64>,
    /// `I(X; U)` of the first reduced table per recursion; empty for full tables.
    pub stage1_trace: Vec<f64>,
    /// Message after the last design recursion.
    pub last_message: JointPmf,
    /// Steady-state `p(state, t)` of the static table.
    pub steady: JointPmf,
    pub static_info: f64,
    pub static_iterations: usize,
    pub zero_mass: usize,
}

fn permute_columns(msg: &JointPmf, perm: &[u32]) -> Result<JointPmf> {
    let nx = msg.nx();
    let mut data = vec![0.0; msg.raw().len()];
    for t in 0..msg.ny() {
        let dst = perm[t] as usize * nx;
        data[dst..dst + nx].copy_from_slice(msg.column(t));
    }
    JointPmf::new(nx, msg.ny(), data)
}

/// Sums `j` over the input that does not enter the first reduced table.
fn first_stage_joint(j: &[f64], a: usize, nr: usize, nd: usize, ns: usize, order: ReducedOrder) -> Vec<f64> {
    let v1 = if order == ReducedOrder::ChannelFirst { nr } else { nd };
    let mut j1 = vec![0.0; a * v1 * ns];
    for t in 0..a {
        for tr in 0..nr {
            for td in 0..nd {
                let i1 = if order == ReducedOrder::ChannelFirst { tr } else { td };
                let src = ((t * nr + tr) * nd + td) * ns;
                let dst = (t * v1 + i1) * ns;
                for x in 0..ns {
                    j1[dst + x] += j[src + x];
                }
            }
        }
    }
    j1
}

/// Recursive design of the forward or backward tables followed by the static phase.
///
/// Recursion `n` warm-starts from the table of recursion `n-1`, which keeps
/// the meaning of message labels stable. The static table is the one of the
/// last recursion; its labels are finally reordered by reliability, applied
/// consistently to table inputs and outputs.
pub fn design_recursion(
    ctx: &DesignContext,
    dir: Direction,
    w_msg: u32,
    variant: Variant,
    opts: &DesignOptions,
) -> Result<RecursionDesign> {
    if opts.recursions == 0 {
        return Err(Error::Precondition("at least one recursion is required".into()));
    }
    let ns = ctx.num_states();
    let (nr, nd) = (ctx.nr, ctx.nd);
    let a = levels(w_msg);
    let sym = ctx.symmetric;
    let order = opts.order;
    let (v1, v2) = match order {
        ReducedOrder::ChannelFirst => (nr, nd),
        ReducedOrder::FeedbackFirst => (nd, nr),
    };
    let split = |tr: usize, td: usize| match order {
        ReducedOrder::ChannelFirst => (tr, td),
        ReducedOrder::FeedbackFirst => (td, tr),
    };
    let mut msg = uniform_message(ns, w_msg);
    let mut full: Option<Mapping> = None;
    let mut pair: Option<(Mapping, Mapping)> = None;
    let mut trace = Vec::with_capacity(opts.recursions);
    let mut stage1_trace = Vec::new();
    let mut composite = Mapping::identity(0);
    let mut zero_mass = 0;
    for rec in 0..opts.recursions {
        let seed = opts.seed.wrapping_add(1000 * rec as u64);
        let j = ctx.update_joint(&msg, dir);
        match variant {
            Variant::Full => {
                let p = JointPmf::normalized(ns, a * nr * nd, j)?;
                let (m, z) = ib_design(&p, a, sym, full.as_ref(), opts, seed)?;
                zero_mass = z;
                msg = compress_joint(&p, &m)?;
                composite = m.clone();
                full = Some(m);
            }
            Variant::Reduced => {
                let p1 = JointPmf::normalized(ns, a * v1, first_stage_joint(&j, a, nr, nd, ns, order))?;
                let prev1 = pair.as_ref().map(|(m1, _)| m1);
                let (m1, z1) = ib_design(&p1, a, sym, prev1, opts, seed)?;
                stage1_trace.push(mapped_info(&p1, &m1)?);
                let mut j2 = vec![0.0; a * v2 * ns];
                for t in 0..a {
                    for tr in 0..nr {
                        for td in 0..nd {
                            let (i1, i2) = split(tr, td);
                            let u = m1.get(t * v1 + i1);
                            let src = ((t * nr + tr) * nd + td) * ns;
                            let dst = (u * v2 + i2) * ns;
                            for x in 0..ns {
                                j2[dst + x] += j[src + x];
                            }
                        }
                    }
                }
                let p2 = JointPmf::normalized(ns, a * v2, j2)?;
                let init2 = Mapping {
                    assign: (0..a * v2).map(|y| (y / v2) as u32).collect(),
                    num_clusters: a,
                };
                let (mut m2, mut z2) = ib_design(&p2, a, sym, Some(&init2), opts, seed + 1)?;
                if let Some((_, prev2)) = pair.as_ref() {
                    // keep the previous labelling unless the identity start is strictly better
                    let (w2, wz) = ib_design(&p2, a, sym, Some(prev2), opts, seed + 1)?;
                    if mapped_info(&p2, &w2)? >= mapped_info(&p2, &m2)? - 1e-12 {
                        m2 = w2;
                        z2 = wz;
                    }
                }
                zero_mass = z1 + z2;
                msg = compress_joint(&p2, &m2)?;
                let mut assign = vec![0u32; a * nr * nd];
                for t in 0..a {
                    for tr in 0..nr {
                        for td in 0..nd {
                            let (i1, i2) = split(tr, td);
                            let u = m1.get(t * v1 + i1);
                            assign[(t * nr + tr) * nd + td] = m2.assign[u * v2 + i2];
                        }
                    }
                }
                composite = Mapping {
                    assign,
                    num_clusters: a,
                };
                pair = Some((m1, m2));
            }
        }
        trace.push(mutual_information(&msg));
    }
    let (steady, static_iterations) = static_phase(
        ctx,
        dir,
        uniform_message(ns, w_msg),
        &composite,
        opts.static_max_iters,
    )?;

    // reorder message labels: t -> pi(t) on both sides of the table
    let pi = relabel_permutation(&steady, sym);
    let conj = |m: &Mapping, rows: usize, row_perm: &[u32], out_perm: &[u32]| -> Mapping {
        let cols = m.len() / rows;
        let mut assign = vec![0u32; m.len()];
        for r in 0..rows {
            for c in 0..cols {
                assign[row_perm[r] as usize * cols + c] = out_perm[m.assign[r * cols + c] as usize];
            }
        }
        Mapping {
            assign,
            num_clusters: m.num_clusters,
        }
    };
    let stage = match variant {
        Variant::Full => {
            let m = conj(full.as_ref().expect("designed"), a, &pi, &pi);
            LutStage::Full(Lut::from_mapping(vec![a, nr, nd], &m)?)
        }
        Variant::Reduced => {
            let (m1, m2) = pair.as_ref().expect("designed");
            let j = ctx.update_joint(&steady, dir);
            let p1 = JointPmf::normalized(ns, a * v1, first_stage_joint(&j, a, nr, nd, ns, order))?;
            let rho = relabel_permutation(&compress_joint(&p1, m1)?, sym);
            let m1 = conj(m1, a, &pi, &rho);
            let m2 = conj(m2, a, &rho, &pi);
            LutStage::Reduced {
                luts: vec![
                    Lut::from_mapping(vec![a, v1], &m1)?,
                    Lut::from_mapping(vec![a, v2], &m2)?,
                ],
                order,
            }
        }
    };
    let composite = conj(&composite, a, &pi, &pi);
    let steady = permute_columns(&steady, &pi)?;
    let last_message = permute_columns(&msg, &pi)?;
    Ok(RecursionDesign {
        stage,
        composite,
        trace,
        stage1_trace,
        last_message,
        static_info: mutual_information(&steady),
        steady,
        static_iterations,
        zero_mass,
    })
}

fn mapped_info(p: &JointPmf, m: &Mapping) -> Result<f64> {
    Ok(mutual_information(&compress_joint(p, m)?))
}

/// Density evolution of a fixed table from the uniform message until the
/// information settles.
pub fn static_phase(
    ctx: &DesignContext,
    dir: Direction,
    start: JointPmf,
    lut: &Mapping,
    max_iters: usize,
) -> Result<(JointPmf, usize)> {
    let ns = ctx.num_states();
    let ny = start.ny() * ctx.nr * ctx.nd;
    let mut msg = start;
    let mut last = -1.0;
    for it in 0..max_iters.max(1) {
        let p = JointPmf::normalized(ns, ny, ctx.update_joint(&msg, dir))?;
        msg = compress_joint(&p, lut)?;
        let info = mutual_information(&msg);
        if (info - last).abs() < 1e-12 {
            return Ok((msg, it + 1));
        }
        last = info;
    }
    Ok((msg, max_iters.max(1)))
}

/// Output of the final-table design.
#[derive(Clone, Debug)]
pub struct FinalDesign {
    pub stage: LutStage,
    pub llr_table: Vec<f64>,
    /// `p(d, t_e)`.
    pub joint: JointPmf,
    pub info: f64,
    /// Output levels without probability mass; their LLR is 0.
    pub flagged: Vec<usize>,
}

fn conditional_rows(msg: &JointPmf) -> Vec<f64> {
    let (nx, ny) = (msg.nx(), msg.ny());
    let px = msg.px();
    let mut out = vec![0.0; nx * ny];
    for x in 0..nx {
        for t in 0..ny {
            out[x * ny + t] = if px[x] > 0.0 { msg.get(x, t) / px[x] } else { 0.0 };
        }
    }
    out
}

/// Designs the final table from the steady-state forward and backward messages.
///
/// Full: `(t_alpha_k, t_r_k, t'_beta_{k+1}) -> t_e`. Reduced:
/// `(t_alpha_{k+1}, t'_beta_{k+1}) -> t_e`, where the forward message has
/// already absorbed `r_k` and `t_d_k`.
pub fn design_final(
    ctx: &DesignContext,
    fwd: &JointPmf,
    bwd: &JointPmf,
    w_e: u32,
    variant: Variant,
    opts: &DesignOptions,
) -> Result<FinalDesign> {
    let ns = ctx.num_states();
    let (na, nb, nr) = (fwd.ny(), bwd.ny(), ctx.nr);
    let pb = conditional_rows(bwd);
    let (dims, data) = match variant {
        Variant::Full => {
            let mut data = vec![0.0; na * nr * nb * 2];
            for s in 0..ns {
                for d in 0..2 {
                    let sp = ctx.trellis.next(s, d);
                    let ptr = &ctx.p_tr[(s * 2 + d) * nr..(s * 2 + d + 1) * nr];
                    let pbs = &pb[sp * nb..(sp + 1) * nb];
                    for ta in 0..na {
                        let a = 0.5 * fwd.get(s, ta);
                        if a == 0.0 {
                            continue;
                        }
                        for (tr, &c) in ptr.iter().enumerate() {
                            let b = a * c;
                            if b == 0.0 {
                                continue;
                            }
                            let base = (ta * nr + tr) * nb;
                            for (tb, &e) in pbs.iter().enumerate() {
                                data[(base + tb) * 2 + d] += b * e;
                            }
                        }
                    }
                }
            }
            (vec![na, nr, nb], data)
        }
        Variant::Reduced => {
            let mut data = vec![0.0; na * nb * 2];
            for sp in 0..ns {
                let d = ctx.trellis.newest(sp);
                let pbs = &pb[sp * nb..(sp + 1) * nb];
                for ta in 0..na {
                    let a = fwd.get(sp, ta);
                    if a == 0.0 {
                        continue;
                    }
                    for (tb, &e) in pbs.iter().enumerate() {
                        data[(ta * nb + tb) * 2 + d] += a * e;
                    }
                }
            }
            (vec![na, nb], data)
        }
    };
    let ny = data.len() / 2;
    let p = JointPmf::normalized(2, ny, data)?;
    let res = binary_llr_quantizer(&p, levels(w_e), ctx.symmetric, opts.llr_bins)?;
    let joint = compress_joint(&p, &res.mapping)?;
    let (llr_table, flagged) = binary_llr_table(&joint, ctx.symmetric);
    let lut = Lut::from_mapping(dims, &res.mapping)?;
    let stage = match variant {
        Variant::Full => LutStage::Full(lut),
        Variant::Reduced => LutStage::Reduced {
            luts: vec![lut],
            order: opts.order,
        },
    };
    Ok(FinalDesign {
        stage,
        llr_table,
        info: mutual_information(&joint),
        joint,
        flagged,
    })
}

/// Known-state and neutral start indices of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InitIndex {
    /// Most likely message for the all-`+1` state.
    pub known: usize,
    /// Message whose state posterior has maximal entropy.
    pub neutral: usize,
}

pub fn init_index(msg: &JointPmf) -> InitIndex {
    let py = msg.py();
    let mut known = 0;
    let mut best = f64::NEG_INFINITY;
    let mut neutral = 0;
    let mut best_h = f64::NEG_INFINITY;
    for t in 0..msg.ny() {
        if py[t] <= 0.0 {
            continue;
        }
        let post0 = msg.get(0, t) / py[t];
        if post0 > best + 1e-15 {
            best = post0;
            known = t;
        }
        let h: f64 = msg
            .column(t)
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let q = v / py[t];
                -q * q.ln()
            })
            .sum();
        if h > best_h + 1e-12 {
            best_h = h;
            neutral = t;
        }
    }
    InitIndex { known, neutral }
}

/// Knobs of the design pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignOptions {
    pub recursions: usize,
    /// Random restarts of the first recursion; later recursions warm-start.
    pub restarts: usize,
    pub seed: u64,
    pub max_passes: usize,
    pub grid_points: usize,
    pub order: ReducedOrder,
    pub static_max_iters: usize,
    pub symmetric: bool,
    pub llr_bins: usize,
    /// Subtract the feedback prior from the reduced final output.
    pub subtract_prior: bool,
    /// Preset name recorded in the bundle header.
    pub channel_name: String,
    /// Turbo iteration this design serves.
    pub iteration: u32,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            recursions: 30,
            restarts: 1,
            seed: 1,
            max_passes: 30,
            grid_points: 512,
            order: ReducedOrder::ChannelFirst,
            static_max_iters: 400,
            symmetric: true,
            llr_bins: 4096,
            subtract_prior: true,
            channel_name: "custom".into(),
            iteration: 0,
        }
    }
}

/// Start indices of all messages at runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuntimeInit {
    pub forward: InitIndex,
    pub backward: InitIndex,
    pub feedback_neutral: usize,
}

/// Runtime artifact of a design.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerDesign {
    pub widths: Widths,
    pub structure: Structure,
    pub symmetric: bool,
    pub channel_name: String,
    pub taps: Vec<f64>,
    pub n0: f64,
    pub i_design: f64,
    pub iteration: u32,
    pub channel_thresholds: Vec<f64>,
    pub feedback_thresholds: Vec<f64>,
    pub feedback_llr: Vec<f64>,
    pub init: RuntimeInit,
    pub forward: LutStage,
    pub backward: LutStage,
    pub final_stage: LutStage,
    pub llr_table: Vec<f64>,
    pub subtract_prior: bool,
}

/// Diagnostics of a design run.
#[derive(Clone, Debug, Default)]
pub struct DesignReport {
    pub channel_info: f64,
    pub feedback_info: f64,
    pub forward_trace: Vec<f64>,
    pub backward_trace: Vec<f64>,
    pub forward_static_info: f64,
    pub backward_static_info: f64,
    pub final_info: f64,
    pub zero_mass: usize,
    pub flagged_levels: Vec<usize>,
    pub warnings: Vec<String>,
}

impl DesignReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("channel_info = {:.6}\n", self.channel_info));
        s.push_str(&format!("feedback_info = {:.6}\n", self.feedback_info));
        for (name, tr) in [("forward", &self.forward_trace), ("backward", &self.backward_trace)] {
            for (i, v) in tr.iter().enumerate() {
                s.push_str(&format!("{name}_trace[{}] = {:.8}\n", i + 1, v));
            }
        }
        s.push_str(&format!("forward_static_info = {:.8}\n", self.forward_static_info));
        s.push_str(&format!("backward_static_info = {:.8}\n", self.backward_static_info));
        s.push_str(&format!("final_info = {:.8}\n", self.final_info));
        s.push_str(&format!("zero_mass_inputs = {}\n", self.zero_mass));
        s.push_str(&format!("flagged_output_levels = {:?}\n", self.flagged_levels));
        for w in &self.warnings {
            s.push_str(&format!("warning = {w}\n"));
        }
        s
    }
}

fn convergence_warning(name: &str, trace: &[f64]) -> Option<String> {
    if trace.len() < 2 {
        return None;
    }
    let d = (trace[trace.len() - 1] - trace[trace.len() - 2]).abs();
    (d > 1e-3).then(|| format!("{name} trace still moves by {d:.2e} bits"))
}

/// Full design pipeline: channel quantizer, feedback model, forward and
/// backward recursions with static phase, final table.
pub fn design_equalizer(
    spec: &ChannelSpec,
    widths: &Widths,
    structure: Structure,
    i_design: f64,
    opts: &DesignOptions,
) -> Result<(EqualizerDesign, DesignReport)> {
    widths.validate()?;
    let cq = design_channel_quantizer(spec, widths.w_r, opts.grid_points)?;
    let fb = model_feedback_pmf(i_design, widths.w_d)?;
    let ctx = DesignContext::new(spec, &cq, &fb, opts.symmetric)?;
    let fwd = design_recursion(&ctx, Direction::Forward, widths.w_alpha, structure.forward, opts)?;
    let bwd = design_recursion(
        &ctx,
        Direction::Backward,
        widths.w_beta,
        structure.backward,
        &DesignOptions {
            seed: opts.seed.wrapping_add(7_777),
            ..opts.clone()
        },
    )?;
    let fin = design_final(
        &ctx,
        &fwd.steady,
        &bwd.steady,
        widths.w_e,
        structure.final_update,
        opts,
    )?;
    let mut warnings = Vec::new();
    warnings.extend(convergence_warning("forward", &fwd.trace));
    warnings.extend(convergence_warning("backward", &bwd.trace));
    if fb.info < i_design - 0.01 {
        warnings.push(format!(
            "feedback model reaches only {:.4} of {:.4} bits",
            fb.info, i_design
        ));
    }
    let report = DesignReport {
        channel_info: cq.info,
        feedback_info: fb.info,
        forward_static_info: fwd.static_info,
        backward_static_info: bwd.static_info,
        final_info: fin.info,
        zero_mass: fwd.zero_mass + bwd.zero_mass,
        flagged_levels: fin.flagged.clone(),
        forward_trace: fwd.trace,
        backward_trace: bwd.trace,
        warnings,
    };
    let design = EqualizerDesign {
        widths: *widths,
        structure,
        symmetric: ctx.symmetric,
        channel_name: opts.channel_name.clone(),
        taps: spec.taps.clone(),
        n0: spec.n0,
        i_design,
        iteration: opts.iteration,
        channel_thresholds: cq.thresholds,
        feedback_thresholds: fb.thresholds.clone(),
        feedback_llr: fb.llr.clone(),
        init: RuntimeInit {
            forward: init_index(&fwd.steady),
            backward: init_index(&bwd.steady),
            feedback_neutral: fb.neutral(),
        },
        forward: fwd.stage,
        backward: bwd.stage,
        final_stage: fin.stage,
        llr_table: fin.llr_table,
        subtract_prior: opts.subtract_prior,
    };
    Ok((design, report))
}

/// Equalizer output for the data symbols of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerOutput {
    pub t_e: Vec<u16>,
    pub llr: Vec<f64>,
}

impl EqualizerDesign {
    pub fn entry_counts(&self) -> EntryCounts {
        EntryCounts {
            forward: self.forward.entries(),
            backward: self.backward.entries(),
            final_update: self.final_stage.entries(),
        }
    }

    pub fn quantize_channel(&self, r: &[f64]) -> Vec<u16> {
        r.iter()
            .map(|&v| level_of(&self.channel_thresholds, v) as u16)
            .collect()
    }

    pub fn quantize_feedback(&self, llr: &[f64]) -> Vec<u16> {
        llr.iter()
            .map(|&v| level_of(&self.feedback_thresholds, v) as u16)
            .collect()
    }

    fn final_includes_prior(&self) -> bool {
        self.final_stage.variant() == Variant::Reduced
    }

    fn check_inputs(&self, t_r: &[u16], t_d: &[u16], tail: usize) -> Result<()> {
        if tail > t_r.len() || t_d.len() != t_r.len() - tail {
            return Err(Error::Precondition(format!(
                "{} channel messages with tail {tail} need {} feedback messages, got {}",
                t_r.len(),
                t_r.len().saturating_sub(tail),
                t_d.len()
            )));
        }
        let nr = levels(self.widths.w_r);
        let nd = levels(self.widths.w_d);
        if t_r.iter().any(|&v| v as usize >= nr) || t_d.iter().any(|&v| v as usize >= nd) {
            return Err(Error::Range("message index outside its alphabet".into()));
        }
        Ok(())
    }

    fn td_at(&self, t_d: &[u16], k: usize) -> usize {
        t_d.get(k)
            .map(|&v| v as usize)
            .unwrap_or(self.init.feedback_neutral)
    }

    /// Emits `t_e` and `L_e` for positions `lo..hi` given forward messages
    /// `alpha[k - a0]` at boundary `k` and backward messages `beta[k - b0]`.
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        t_r: &[u16],
        t_d: &[u16],
        alpha: &[usize],
        a0: usize,
        beta: &[usize],
        b0: usize,
        lo: usize,
        hi: usize,
        out: &mut EqualizerOutput,
    ) {
        for k in lo..hi {
            let te = match &self.final_stage {
                LutStage::Full(l) => {
                    l.get3(alpha[k - a0], t_r[k] as usize, beta[k + 1 - b0])
                }
                LutStage::Reduced { luts, .. } => luts[0].get2(alpha[k + 1 - a0], beta[k + 1 - b0]),
            };
            let mut l = self.llr_table[te];
            if self.final_includes_prior() && self.subtract_prior {
                l -= self.feedback_llr[t_d[k] as usize];
            }
            out.t_e[k] = te as u16;
            out.llr[k] = l;
        }
    }

    /// Table-driven equalization of one frame with explicit start messages.
    pub fn run_with_init(
        &self,
        t_r: &[u16],
        t_d: &[u16],
        tail: usize,
        forward_init: usize,
        backward_init: usize,
    ) -> Result<EqualizerOutput> {
        self.check_inputs(t_r, t_d, tail)?;
        let k_len = t_r.len();
        let n = k_len - tail;
        let mut alpha = vec![0usize; k_len + 1];
        alpha[0] = forward_init;
        for k in 0..k_len {
            alpha[k + 1] = self
                .forward
                .update(alpha[k], t_r[k] as usize, self.td_at(t_d, k));
        }
        let mut beta = vec![0usize; k_len + 1];
        beta[k_len] = backward_init;
        for k in (0..k_len).rev() {
            beta[k] = self
                .backward
                .update(beta[k + 1], t_r[k] as usize, self.td_at(t_d, k));
        }
        let mut out = EqualizerOutput {
            t_e: vec![0; n],
            llr: vec![0.0; n],
        };
        self.emit(t_r, t_d, &alpha, 0, &beta, 0, 0, n, &mut out);
        Ok(out)
    }

    /// Equalizes a frame whose preamble and `tail` trailing symbols are `+1`.
    pub fn run(&self, t_r: &[u16], t_d: &[u16], tail: usize) -> Result<EqualizerOutput> {
        self.run_with_init(t_r, t_d, tail, self.init.forward.known, self.init.backward.known)
    }

    /// Sub-block equalization with blocks of `n_b` outputs and `n_o` warm-up
    /// symbols on each side. Blocks whose warm-up reaches a frame edge start
    /// from the known state; others start from the neutral message.
    pub fn run_subblocks(
        &self,
        t_r: &[u16],
        t_d: &[u16],
        tail: usize,
        n_b: usize,
        n_o: usize,
    ) -> Result<EqualizerOutput> {
        if n_b == 0 {
            return Err(Error::Precondition("sub-block length must be positive".into()));
        }
        self.check_inputs(t_r, t_d, tail)?;
        let k_len = t_r.len();
        let n = k_len - tail;
        let mut out = EqualizerOutput {
            t_e: vec![0; n],
            llr: vec![0.0; n],
        };
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut a = 0;
        while a < n {
            let end = (a + n_b).min(n);
            let fs = a.saturating_sub(n_o);
            alpha.clear();
            alpha.push(if fs == 0 {
                self.init.forward.known
            } else {
                self.init.forward.neutral
            });
            for k in fs..end {
                let prev = *alpha.last().expect("nonempty");
                alpha.push(self.forward.update(prev, t_r[k] as usize, self.td_at(t_d, k)));
            }
            let be = (end + n_o).min(k_len);
            beta.clear();
            beta.resize(be - a + 1, 0);
            beta[be - a] = if be == k_len {
                self.init.backward.known
            } else {
                self.init.backward.neutral
            };
            for k in (a..be).rev() {
                beta[k - a] =
                    self.backward
                        .update(beta[k + 1 - a], t_r[k] as usize, self.td_at(t_d, k));
            }
            self.emit(t_r, t_d, &alpha, fs, &beta, a, a, end, &mut out);
            a = end;
        }
        Ok(out)
    }

    /// Serializes the design into the versioned binary bundle format.
    pub fn write_bundle<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(BUNDLE_MAGIC);
        buf.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        let wd = &self.widths;
        buf.extend([wd.w_r, wd.w_d, wd.w_alpha, wd.w_beta, wd.w_e].map(|v| v as u8));
        buf.extend_from_slice(self.structure.to_string().as_bytes());
        let flags = self.symmetric as u8 | (self.subtract_prior as u8) << 1;
        buf.push(flags);
        put_u32(&mut buf, self.channel_name.len() as u32);
        buf.extend_from_slice(self.channel_name.as_bytes());
        put_f64s(&mut buf, &self.taps);
        buf.extend_from_slice(&self.n0.to_le_bytes());
        buf.extend_from_slice(&self.i_design.to_le_bytes());
        put_u32(&mut buf, self.iteration);
        put_f64s(&mut buf, &self.channel_thresholds);
        put_f64s(&mut buf, &self.feedback_thresholds);
        put_f64s(&mut buf, &self.feedback_llr);
        for v in [
            self.init.forward.known,
            self.init.forward.neutral,
            self.init.backward.known,
            self.init.backward.neutral,
            self.init.feedback_neutral,
        ] {
            put_u32(&mut buf, v as u32);
        }
        for stage in [&self.forward, &self.backward, &self.final_stage] {
            let (kind, order) = match stage {
                LutStage::Full(_) => (0u8, 0u8),
                LutStage::Reduced { order, .. } => {
                    (1u8, (*order == ReducedOrder::FeedbackFirst) as u8)
                }
            };
            let luts = stage.luts();
            buf.extend([kind, order, luts.len() as u8]);
            for l in luts {
                buf.push(l.dims.len() as u8);
                for &d in &l.dims {
                    put_u32(&mut buf, d as u32);
                }
                put_u32(&mut buf, l.levels as u32);
                for &v in &l.table {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        put_f64s(&mut buf, &self.llr_table);
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_bundle(&mut v).expect("writing to memory");
        v
    }

    /// Parses a bundle written by [`write_bundle`](Self::write_bundle).
    pub fn read_bundle<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { b: bytes, pos: 0 };
        if c.take(4)? != BUNDLE_MAGIC {
            return Err(Error::Format("not an equalizer bundle".into()));
        }
        let version = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes"));
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let w = c.take(5)?;
        let widths = Widths::new(w[0] as u32, w[1] as u32, w[2] as u32, w[3] as u32, w[4] as u32)?;
        let structure: Structure = std::str::from_utf8(c.take(3)?)
            .map_err(|_| Error::Format("bad structure tag".into()))?
            .parse()?;
        let flags = c.u8()?;
        let name_len = c.u32()? as usize;
        let channel_name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("bad channel name".into()))?;
        let taps = c.f64s()?;
        let n0 = c.f64()?;
        let i_design = c.f64()?;
        let iteration = c.u32()?;
        let channel_thresholds = c.f64s()?;
        let feedback_thresholds = c.f64s()?;
        let feedback_llr = c.f64s()?;
        let mut init = [0usize; 5];
        for v in init.iter_mut() {
            *v = c.u32()? as usize;
        }
        let mut stages = Vec::new();
        for _ in 0..3 {
            let kind = c.u8()?;
            let order = if c.u8()? == 1 {
                ReducedOrder::FeedbackFirst
            } else {
                ReducedOrder::ChannelFirst
            };
            let count = c.u8()? as usize;
            let mut luts = Vec::new();
            for _ in 0..count {
                let nd = c.u8()? as usize;
                let dims: Vec<usize> = (0..nd).map(|_| c.u32().map(|v| v as usize)).collect::<Result<_>>()?;
                let lv = c.u32()? as usize;
                let n: usize = dims.iter().product();
                let raw = c.take(n * 2)?;
                let table: Vec<u16> = raw
                    .chunks_exact(2)
                    .map(|p| u16::from_le_bytes([p[0], p[1]]))
                    .collect();
                if table.iter().any(|&v| v as usize >= lv) {
                    return Err(Error::Format("table entry out of range".into()));
                }
                luts.push(Lut {
                    dims,
                    levels: lv,
                    table,
                });
            }
            stages.push(match (kind, count) {
                (0, 1) => LutStage::Full(luts.pop().expect("one table")),
                (1, _) if count >= 1 => LutStage::Reduced { luts, order },
                _ => return Err(Error::Format("bad stage layout".into())),
            });
        }
        let llr_table = c.f64s()?;
        if c.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in bundle".into()));
        }
        let final_stage = stages.pop().expect("3 stages");
        let backward = stages.pop().expect("3 stages");
        let forward = stages.pop().expect("3 stages");
        let design = EqualizerDesign {
            widths,
            structure,
            symmetric: flags & 1 != 0,
            channel_name,
            taps,
            n0,
            i_design,
            iteration,
            channel_thresholds,
            feedback_thresholds,
            feedback_llr,
            init: RuntimeInit {
                forward: InitIndex {
                    known: init[0],
                    neutral: init[1],
                },
                backward: InitIndex {
                    known: init[2],
                    neutral: init[3],
                },
                feedback_neutral: init[4],
            },
            forward,
            backward,
            final_stage,
            llr_table,
            subtract_prior: flags & 2 != 0,
        };
        if design.entry_counts() != entry_counts(&design.widths, design.structure) {
            return Err(Error::Format("table sizes disagree with the header".into()));
        }
        Ok(design)
    }

    /// Plain-text manifest mirroring the bundle header.
    pub fn manifest(&self) -> String {
        let c = self.entry_counts();
        let w = &self.widths;
        let mut s = String::new();
        s.push_str(&format!("format = IBEQ v{BUNDLE_VERSION}\n"));
        s.push_str(&format!("channel = {}\n", self.channel_name));
        s.push_str(&format!("taps = {:?}\n", self.taps));
        s.push_str(&format!("n0 = {}\n", self.n0));
        s.push_str(&format!("iteration = {}\n", self.iteration));
        s.push_str(&format!("i_design = {}\n", self.i_design));
        s.push_str(&format!(
            "widths = w_r:{} w_d:{} w_alpha:{} w_beta:{} w_e:{}\n",
            w.w_r, w.w_d, w.w_alpha, w.w_beta, w.w_e
        ));
        s.push_str(&format!("structure = {}\n", self.structure));
        s.push_str(&format!("symmetric = {}\n", self.symmetric));
        s.push_str(&format!("entries_forward = {}\n", c.forward));
        s.push_str(&format!("entries_backward = {}\n", c.backward));
        s.push_str(&format!("entries_final = {}\n", c.final_update));
        s.push_str(&format!("entries_total = {}\n", c.total()));
        s
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    put_u32(buf, v.len() as u32);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::Format("truncated bundle".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::transmit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn small_widths() -> Widths {
        Widths::new(4, 2, 5, 5, 3).unwrap()
    }

    fn small_opts() -> DesignOptions {
        DesignOptions {
            recursions: 30,
            ..DesignOptions::default()
        }
    }

    fn epr4() -> ChannelSpec {
        ChannelSpec::preset("epr4", 0.5).unwrap()
    }

    fn small_design(structure: Structure) -> &'static (EqualizerDesign, DesignReport) {
        static FFF: OnceLock<(EqualizerDesign, DesignReport)> = OnceLock::new();
        static RRR: OnceLock<(EqualizerDesign, DesignReport)> = OnceLock::new();
        let cell = if structure == Structure::FFF { &FFF } else { &RRR };
        cell.get_or_init(|| {
            design_equalizer(&epr4(), &small_widths(), structure, 0.5, &small_opts()).unwrap()
        })
    }

    #[test]
    fn table_one_counts() {
        let w8 = Widths::new(5, 3, 8, 8, 4).unwrap();
        let w6 = Widths::new(5, 3, 6, 6, 4).unwrap();
        let f8 = entry_counts(&w8, Structure::FFF);
        let f6 = entry_counts(&w6, Structure::FFF);
        let r8 = entry_counts(&w8, Structure::RRR);
        let r6 = entry_counts(&w6, Structure::RRR);
        assert_eq!((f8.forward, f6.forward, f8.final_update, f6.final_update), (65536, 16384, 2097152, 131072));
        assert_eq!((r8.forward, r6.forward, r8.final_update, r6.final_update), (10240, 2560, 65536, 4096));
        assert_eq!(f8.backward, f8.forward);
        assert_eq!(r6.backward, 2560);
    }

    #[test]
    fn widths_and_structure_parsing() {
        assert!(Widths::new(0, 3, 8, 8, 4).is_err());
        assert!(Widths::new(5, 3, 17, 8, 4).is_err());
        let s: Structure = "rrf".parse().unwrap();
        assert_eq!(s, Structure::RRF);
        assert_eq!(s.to_string(), "RRF");
        assert!("RRX".parse::<Structure>().is_err());
        assert!("RR".parse::<Structure>().is_err());
    }

    #[test]
    fn channel_quantizer_is_symmetric_for_epr4() {
        let cq = design_channel_quantizer(&epr4(), 5, 512).unwrap();
        assert_eq!(cq.levels(), 32);
        assert!(cq.symmetric);
        let n = cq.thresholds.len();
        for i in 0..n {
            assert!((cq.thresholds[i] + cq.thresholds[n - 1 - i]).abs() < 1e-9);
        }
        assert!(cq.joint.is_symmetric(1e-12));
        assert_eq!(cq.quantize(0.0), 15);
        assert_eq!(cq.quantize(1e-6), 16);
    }

    #[test]
    fn channel_quantizer_noiseless_limit() {
        // outputs {-2,-1,0,1,2} with weights 1,4,6,4,1 out of 16
        let spec = ChannelSpec::preset("epr4", 1e-8).unwrap();
        let cq = design_channel_quantizer(&spec, 5, 512).unwrap();
        let w = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v: f64| v / 16.0);
        let h: f64 = -w.iter().map(|p| p * p.log2()).sum::<f64>();
        assert!((cq.info - h).abs() < 1e-6, "{} vs {h}", cq.info);
    }

    #[test]
    fn feedback_model_limits() {
        let z = model_feedback_pmf(0.0, 3).unwrap();
        assert_eq!(z.levels(), 8);
        for d in 0..2 {
            for t in 0..8 {
                let pd = z.joint.px()[d];
                let pt = z.joint.py()[t];
                assert!((z.joint.get(d, t) - pd * pt).abs() < 1e-15);
            }
        }
        assert_eq!(z.quantize(0.0), 3);
        assert_eq!(z.quantize(5.0), 4);
        let half = model_feedback_pmf(0.5, 3).unwrap();
        assert!(half.info <= 0.5 && half.info >= 0.49, "{}", half.info);
        let high = model_feedback_pmf(0.999, 3).unwrap();
        let py = high.joint.py();
        assert!(py[0] + py[7] > 0.9);
        assert!(high.info > 0.98);
    }

    #[test]
    fn feedback_quantizer_symmetry() {
        let m = model_feedback_pmf(0.5, 3).unwrap();
        assert_eq!(m.quantize(0.0), m.neutral());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let l: f64 = rng.random_range(-10.0..10.0);
            if m.thresholds.iter().any(|&t| t == l.abs()) {
                continue;
            }
            assert_eq!(m.quantize(-l), 7 - m.quantize(l));
        }
        for t in 0..4 {
            assert!((m.llr[t] + m.llr[7 - t]).abs() < 1e-12);
        }
    }

    #[test]
    fn designed_tables_have_expected_sizes_and_symmetry() {
        for s in [Structure::FFF, Structure::RRR] {
            let (d, _) = small_design(s);
            assert_eq!(d.entry_counts(), entry_counts(&small_widths(), s));
            for stage in [&d.forward, &d.backward, &d.final_stage] {
                for l in stage.luts() {
                    assert!(l.is_complement_symmetric(), "{s} table not symmetric");
                }
            }
            let n = d.llr_table.len();
            for t in 0..n {
                assert!((d.llr_table[t] + d.llr_table[n - 1 - t]).abs() < 1e-12);
                assert!(d.llr_table[t].abs() <= LLR_CLIP);
            }
        }
    }

    #[test]
    fn trace_does_not_degrade() {
        for s in [Structure::FFF, Structure::RRR] {
            let (_, r) = small_design(s);
            for tr in [&r.forward_trace, &r.backward_trace] {
                assert!(tr.last().unwrap() >= &(tr[0] - 1e-6));
            }
        }
    }

    #[test]
    fn forward_and_backward_agree_on_epr4() {
        // without feedback the time-reversed channel is the negated channel
        let (_, r) = design_equalizer(&epr4(), &small_widths(), Structure::RRR, 0.0, &small_opts())
            .unwrap();
        let f = *r.forward_trace.last().unwrap();
        let b = *r.backward_trace.last().unwrap();
        assert!((f - b).abs() < 0.02, "{f} vs {b}");
    }

    #[test]
    fn static_table_keeps_recursion_information() {
        for s in [Structure::FFF, Structure::RRR] {
            let (_, r) = small_design(s);
            let last = *r.forward_trace.last().unwrap();
            assert!(r.forward_static_info > last - 0.02, "{s}: {} vs {last}", r.forward_static_info);
        }
    }

    #[test]
    fn bundle_round_trip() {
        for s in [Structure::FFF, Structure::RRR] {
            let (d, _) = small_design(s);
            let bytes = d.to_bytes();
            let back = EqualizerDesign::from_bytes(&bytes).unwrap();
            assert_eq!(&back, d);
            assert_eq!(back.to_bytes(), bytes);
            assert!(d.manifest().contains("entries_total"));
            let mut bad = bytes.clone();
            bad[0] = b'X';
            assert!(EqualizerDesign::from_bytes(&bad).is_err());
            assert!(EqualizerDesign::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        }
    }

    #[test]
    fn complemented_inputs_give_complemented_outputs() {
        for s in [Structure::FFF, Structure::RRR] {
            let (d, _) = small_design(s);
            let spec = epr4();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let bits: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
            let r = transmit(&bits, &spec, 3);
            let tr = d.quantize_channel(&r);
            let td: Vec<u16> = (0..200).map(|_| rng.random_range(0..4)).collect();
            let trc: Vec<u16> = tr.iter().map(|&v| 15 - v).collect();
            let tdc: Vec<u16> = td.iter().map(|&v| 3 - v).collect();
            let (fa, ba) = (d.init.forward.known, d.init.backward.known);
            assert!(d.run_with_init(&tr, &td[..150], 0, fa, ba).is_err());
            let a = d.run_with_init(&tr, &td, 0, fa, ba).unwrap();
            let b = d.run_with_init(&trc, &tdc, 0, 31 - fa, 31 - ba).unwrap();
            for k in 0..200 {
                assert_eq!(a.t_e[k], 7 - b.t_e[k]);
                assert!((a.llr[k] + b.llr[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_inputs_settle() {
        let (d, _) = small_design(Structure::RRR);
        let tr = vec![7u16; 300];
        let td = vec![d.init.feedback_neutral as u16; 300];
        let out = d.run(&tr, &td, 0).unwrap();
        let mid: Vec<u16> = out.t_e[100..200].to_vec();
        assert!(mid.iter().all(|&v| v == mid[0]));
    }

    #[test]
    fn full_overlap_subblocks_match_full_run() {
        let (d, _) = small_design(Structure::RRR);
        let spec = epr4();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut bits: Vec<usize> = (0..100).map(|_| rng.random_range(0..2)).collect();
        bits.extend([0, 0, 0]);
        let tr = d.quantize_channel(&transmit(&bits, &spec, 5));
        let td = vec![d.init.feedback_neutral as u16; 100];
        let full = d.run(&tr, &td, 3).unwrap();
        for n_b in [1, 7, 32, 100] {
            let sb = d.run_subblocks(&tr, &td, 3, n_b, 200).unwrap();
            assert_eq!(sb, full);
        }
        assert!(d.run_subblocks(&tr, &td, 3, 0, 10).is_err());
    }

    #[test]
    fn neutral_feedback_stage_is_information_neutral() {
        let spec = epr4();
        let w = small_widths();
        let cq = design_channel_quantizer(&spec, w.w_r, 256).unwrap();
        let fb = model_feedback_pmf(0.0, w.w_d).unwrap();
        let ctx = DesignContext::new(&spec, &cq, &fb, true).unwrap();
        let opts = DesignOptions {
            recursions: 4,
            ..DesignOptions::default()
        };
        let rd = design_recursion(&ctx, Direction::Forward, w.w_alpha, Variant::Reduced, &opts)
            .unwrap();
        assert_eq!(rd.stage1_trace.len(), 4);
        for (u, out) in rd.stage1_trace.iter().zip(&rd.trace) {
            assert!((u - out).abs() < 1e-6, "{u} vs {out}");
        }
    }
}

//! Information bottleneck machinery: joint distributions, mutual information,
//! deterministic sequential-IB clustering and information-optimal scalar
//! quantizers.
//!
//! A [`JointPmf`] holds `p(x, y)` with `x` the relevant variable and `y` the
//! observed one. Tables are stored `y`-major so that the conditional profile
//! of a single observation is contiguous.
//!
//! Symmetric designs use index complement on every alphabet: `x̄ = |X|-1-x`,
//! `ȳ = |Y|-1-y`, `t̄ = |T|-1-t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, LOG2_E};

#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl JointPmf {
    /// Builds a distribution from a `y`-major table (`data[y * nx + x]`).
    pub fn new(nx: usize, ny: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * ny || nx == 0 || ny == 0 {
            return Err(Error::Precondition(format!(
                "table of length {} does not match {nx}x{ny}",
                data.len()
            )));
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Precondition("negative or non-finite probability".into()));
        }
        let total: f64 = data.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("probabilities sum to {total}")));
        }
        Ok(JointPmf { nx, ny, data })
    }

    /// Scales a nonnegative table to unit mass.
    pub fn normalized(nx: usize, ny: usize, mut data: Vec<f64>) -> Result<Self> {
        let total: f64 = data.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Precondition("table has no mass".into()));
        }
        data.iter_mut().for_each(|v| *v /= total);
        Self::new(nx, ny, data)
    }

    /// Builds from an `x`-major table (`rows[x][y]`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, |r| r.len());
        let mut data = vec![0.0; nx * ny];
        for (x, row) in rows.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::Precondition("ragged table".into()));
            }
            for (y, &v) in row.iter().enumerate() {
                data[y * nx + x] = v;
            }
        }
        Self::new(nx, ny, data)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.nx + x]
    }

    /// `p(x, y)` for all `x` at fixed `y`.
    #[inline]
    pub fn column(&self, y: usize) -> &[f64] {
        &self.data[y * self.nx..(y + 1) * self.nx]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn px(&self) -> Vec<f64> {
        let mut px = vec![0.0; self.nx];
        for col in self.data.chunks_exact(self.nx) {
            px.iter_mut().zip(col).for_each(|(a, b)| *a += b);
        }
        px
    }

    pub fn py(&self) -> Vec<f64> {
        self.data.chunks_exact(self.nx).map(|c| c.iter().sum()).collect()
    }

    /// Checks `p(x, y) = p(x̄, ȳ)` to the given tolerance.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.ny).all(|y| {
            (0..self.nx).all(|x| {
                (self.get(x, y) - self.get(self.nx - 1 - x, self.ny - 1 - y)).abs() <= tol
            })
        })
    }
}

/// Deterministic map `y -> t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    pub assign: Vec<u32>,
    pub num_clusters: usize,
}

impl Mapping {
    pub fn identity(n: usize) -> Self {
        Mapping {
            assign: (0..n as u32).collect(),
            num_clusters: n,
        }
    }

    #[inline]
    pub fn get(&self, y: usize) -> usize {
        self.assign[y] as usize
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    /// True if `m(ȳ) = complement(m(y))` for every `y`.
    pub fn is_complement_symmetric(&self) -> bool {
        let n = self.assign.len();
        let k = self.num_clusters as u32;
        (0..n).all(|y| self.assign[n - 1 - y] == k - 1 - self.assign[y])
    }
}

/// `sum v ln v - V ln V`; the per-cluster term of `I(X;T)` in nats, up to `H(X)`.
#[inline]
fn cluster_term(v: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for &a in v {
        if a > 0.0 {
            s += a * a.ln();
        }
    }
    s - total * total.ln()
}

#[inline]
fn merged_term(a: &[f64], b: &[f64], total: f64) -> f64 {
    let mut s = 0.0;
    for (&u, &v) in a.iter().zip(b) {
        let w = u + v;
        if w > 0.0 {
            s += w * w.ln();
        }
    }
    s - total * total.ln()
}

fn entropy_nats(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `I(X;Y)` in bits.
pub fn mutual_information(p: &JointPmf) -> f64 {
    let hx = entropy_nats(&p.px());
    let sum: f64 = p
        .data
        .chunks_exact(p.nx)
        .map(|c| cluster_term(c, c.iter().sum()))
        .sum();
    ((hx + sum) * LOG2_E).max(0.0)
}

/// `p(x, t) = sum_{y: m(y) = t} p(x, y)`.
pub fn compress_joint(p: &JointPmf, m: &Mapping) -> Result<JointPmf> {
    if m.len() != p.ny {
        return Err(Error::Precondition(format!(
            "mapping covers {} observations, distribution has {}",
            m.len(),
            p.ny
        )));
    }
    let mut data = vec![0.0; p.nx * m.num_clusters];
    for y in 0..p.ny {
        let t = m.get(y);
        let dst = &mut data[t * p.nx..(t + 1) * p.nx];
        dst.iter_mut().zip(p.column(y)).for_each(|(a, b)| *a += b);
    }
    Ok(JointPmf {
        nx: p.nx,
        ny: m.num_clusters,
        data,
    })
}

/// `I(X;T)` for `T = m(Y)` in bits.
pub fn mapped_information(p: &JointPmf, m: &Mapping) -> Result<f64> {
    compress_joint(p, m).map(|c| mutual_information(&c))
}

#[derive(Clone, Debug)]
pub struct IbOptions {
    pub restarts: usize,
    pub symmetric: bool,
    pub seed: u64,
    pub max_passes: usize,
}

impl Default for IbOptions {
    fn default() -> Self {
        IbOptions {
            restarts: 1,
            symmetric: false,
            seed: 0,
            max_passes: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IbResult {
    pub mapping: Mapping,
    /// `I(X;T)` in bits.
    pub info: f64,
    /// Observations without mass; assigned to the lowest cluster (or its complement).
    pub zero_mass: Vec<usize>,
    pub passes: usize,
}

struct Clusters {
    nx: usize,
    mass: Vec<f64>,
    joint: Vec<f64>,
    term: Vec<f64>,
}

impl Clusters {
    fn build(p: &JointPmf, assign: &[u32], k: usize) -> Self {
        let nx = p.nx;
        let mut mass = vec![0.0; k];
        let mut joint = vec![0.0; k * nx];
        for (y, &t) in assign.iter().enumerate() {
            let t = t as usize;
            let col = p.column(y);
            joint[t * nx..(t + 1) * nx]
                .iter_mut()
                .zip(col)
                .for_each(|(a, b)| *a += b);
            mass[t] += col.iter().sum::<f64>();
        }
        let term = (0..k)
            .map(|t| cluster_term(&joint[t * nx..(t + 1) * nx], mass[t]))
            .collect();
        Clusters {
            nx,
            mass,
            joint,
            term,
        }
    }

    fn shift(&mut self, t: usize, col: &[f64], col_mass: f64, sign: f64) {
        let nx = self.nx;
        let row = &mut self.joint[t * nx..(t + 1) * nx];
        row.iter_mut().zip(col).for_each(|(a, b)| {
            *a += sign * b;
            if *a < 0.0 {
                *a = 0.0;
            }
        });
        self.mass[t] += sign * col_mass;
        if self.mass[t] < 1e-300 || row.iter().all(|&v| v == 0.0) {
            self.mass[t] = 0.0;
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        self.term[t] = cluster_term(row, self.mass[t]);
    }

    /// Cluster minimizing the information loss of adding `col`; lowest index on ties.
    fn best(&self, col: &[f64], col_mass: f64) -> usize {
        let nx = self.nx;
        let own = cluster_term(col, col_mass);
        let tol = 1e-13 * col_mass.max(1e-300);
        let mut best_t = usize::MAX;
        let mut best_loss = f64::INFINITY;
        let mut empty_seen = false;
        for t in 0..self.mass.len() {
            let loss = if self.mass[t] == 0.0 {
                if empty_seen {
                    continue;
                }
                empty_seen = true;
                0.0
            } else {
                let total = self.mass[t] + col_mass;
                own + self.term[t] - merged_term(&self.joint[t * nx..(t + 1) * nx], col, total)
            };
            if loss < best_loss - tol {
                best_loss = loss;
                best_t = t;
            }
        }
        best_t
    }
}

/// Sequential IB refinement of a starting assignment until no observation moves.
fn sequential_ib(p: &JointPmf, assign: &mut [u32], k: usize, symmetric: bool, max_passes: usize) -> usize {
    let ny = p.ny;
    let masses = p.py();
    let mut passes = 0;
    let limit = if symmetric { ny / 2 } else { ny };
    while passes < max_passes {
        passes += 1;
        // rebuild from scratch each pass to shed accumulated rounding
        let mut cl = Clusters::build(p, assign, k);
        let mut moves = 0usize;
        for y in 0..limit {
            let my = masses[y];
            if symmetric {
                let yc = ny - 1 - y;
                let mc = masses[yc];
                if my + mc <= 0.0 {
                    continue;
                }
                let old = assign[y] as usize;
                cl.shift(old, p.column(y), my, -1.0);
                cl.shift(assign[yc] as usize, p.column(yc), mc, -1.0);
                // the pair enters (t, t̄); score with the lower-half member
                let t = cl.best(p.column(y), my);
                cl.shift(t, p.column(y), my, 1.0);
                cl.shift(k - 1 - t, p.column(yc), mc, 1.0);
                if t != old {
                    moves += 1;
                }
                assign[y] = t as u32;
                assign[yc] = (k - 1 - t) as u32;
            } else {
                if my <= 0.0 {
                    continue;
                }
                let old = assign[y] as usize;
                cl.shift(old, p.column(y), my, -1.0);
                let t = cl.best(p.column(y), my);
                cl.shift(t, p.column(y), my, 1.0);
                if t != old {
                    moves += 1;
                }
                assign[y] = t as u32;
            }
        }
        if moves == 0 {
            break;
        }
    }
    passes
}

fn check_cluster_args(p: &JointPmf, k: usize, symmetric: bool) -> Result<()> {
    if k == 0 || k > p.ny {
        return Err(Error::Range(format!(
            "{k} clusters requested for {} observations",
            p.ny
        )));
    }
    if symmetric && (!k.is_multiple_of(2) || !p.ny.is_multiple_of(2) || !p.nx.is_multiple_of(2)) {
        return Err(Error::Precondition(
            "symmetric clustering needs even alphabets".into(),
        ));
    }
    Ok(())
}

fn zero_mass_fixup(p: &JointPmf, assign: &mut [u32], k: usize, symmetric: bool) -> Vec<usize> {
    let masses = p.py();
    let ny = p.ny;
    let mut zero = Vec::new();
    for y in 0..ny {
        let dead = if symmetric {
            masses[y] + masses[ny - 1 - y] <= 0.0
        } else {
            masses[y] <= 0.0
        };
        if dead {
            zero.push(y);
            assign[y] = if symmetric && y >= ny / 2 { (k - 1) as u32 } else { 0 };
        }
    }
    zero
}

fn random_assignment(ny: usize, k: usize, symmetric: bool, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut assign = vec![0u32; ny];
    if symmetric {
        for y in 0..ny / 2 {
            let t = rng.random_range(0..k);
            assign[y] = t as u32;
            assign[ny - 1 - y] = (k - 1 - t) as u32;
        }
    } else {
        assign.iter_mut().for_each(|a| *a = rng.random_range(0..k) as u32);
    }
    assign
}

/// Deterministic IB clustering of `Y` into `num_clusters` groups maximizing `I(X;T)`.
///
/// Runs `restarts` random initializations (restart `r` seeded from
/// `seed + r`) and keeps the best; earlier restarts win ties.
pub fn ib_cluster(p: &JointPmf, num_clusters: usize, opts: &IbOptions) -> Result<IbResult> {
    ib_cluster_from(p, num_clusters, opts, None)
}

/// Like [`ib_cluster`] but also refines `init` as an extra candidate, tried first.
pub fn ib_cluster_from(
    p: &JointPmf,
    k: usize,
    opts: &IbOptions,
    init: Option<&Mapping>,
) -> Result<IbResult> {
    check_cluster_args(p, k, opts.symmetric)?;
    let mut candidates: Vec<Vec<u32>> = Vec::new();
    if let Some(m) = init {
        if m.len() != p.ny || m.num_clusters != k {
            return Err(Error::Precondition("initial mapping has the wrong shape".into()));
        }
        let mut a = m.assign.clone();
        if opts.symmetric {
            // force the complement structure from the lower half
            let ny = p.ny;
            for y in 0..ny / 2 {
                a[ny - 1 - y] = (k as u32 - 1) - a[y];
            }
        }
        candidates.push(a);
    }
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
        candidates.push(random_assignment(p.ny, k, opts.symmetric, &mut rng));
    }
    if candidates.is_empty() {
        return Err(Error::Precondition("no restarts and no initial mapping".into()));
    }
    let mut best: Option<IbResult> = None;
    for mut assign in candidates {
        let passes = sequential_ib(p, &mut assign, k, opts.symmetric, opts.max_passes);
        let zero_mass = zero_mass_fixup(p, &mut assign, k, opts.symmetric);
        let mapping = Mapping {
            assign,
            num_clusters: k,
        };
        let info = mapped_information(p, &mapping)?;
        if best.as_ref().is_none_or(|b| info > b.info) {
            best = Some(IbResult {
                mapping,
                info,
                zero_mass,
                passes,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Result of a contiguous quantizer design.
#[derive(Clone, Debug)]
pub struct ScalarQuantizer {
    pub mapping: Mapping,
    /// First grid index of every cell; `starts[0] = 0`.
    pub starts: Vec<usize>,
    pub info: f64,
}

struct SegmentCost {
    cum: Vec<f64>,
    px: Vec<f64>,
    nx: usize,
}

impl SegmentCost {
    fn new(p: &JointPmf, px: Vec<f64>, len: usize) -> Self {
        let nx = p.nx;
        let mut cum = vec![0.0; (len + 1) * nx];
        for y in 0..len {
            for x in 0..nx {
                cum[(y + 1) * nx + x] = cum[y * nx + x] + p.get(x, y);
            }
        }
        SegmentCost { cum, px, nx }
    }

    /// Information contribution of the cell `[i, j)` in nats.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let nx = self.nx;
        let mut mass = 0.0;
        let mut acc = 0.0;
        for x in 0..nx {
            let v = (self.cum[j * nx + x] - self.cum[i * nx + x]).max(0.0);
            mass += v;
            if v > 0.0 && self.px[x] > 0.0 {
                acc += v * (v / self.px[x]).ln();
            }
        }
        if mass <= 0.0 {
            0.0
        } else {
            acc - mass * mass.ln()
        }
    }
}

/// Optimal contiguous partition of `len` grid points into `levels` cells.
fn contiguous_dp(cost: &SegmentCost, len: usize, levels: usize) -> Vec<usize> {
    // seg[i][j] for 0 <= i < j <= len, flattened
    let mut seg = vec![0.0; (len + 1) * (len + 1)];
    for i in 0..len {
        for j in i + 1..=len {
            seg[i * (len + 1) + j] = cost.cost(i, j);
        }
    }
    let w = len + 1;
    let mut value = vec![f64::NEG_INFINITY; (levels + 1) * w];
    let mut back = vec![0usize; (levels + 1) * w];
    value[0] = 0.0;
    for l in 1..=levels {
        for j in l..=len - (levels - l) {
            let mut best = f64::NEG_INFINITY;
            let mut arg = l - 1;
            for i in l - 1..j {
                let v = value[(l - 1) * w + i];
                if v == f64::NEG_INFINITY {
                    continue;
                }
                let cand = v + seg[i * w + j];
                if cand > best + 1e-15 * cand.abs().max(1e-300) {
                    best = cand;
                    arg = i;
                }
            }
            value[l * w + j] = best;
            back[l * w + j] = arg;
        }
    }
    let mut starts = vec![0usize; levels];
    let mut j = len;
    for l in (1..=levels).rev() {
        let i = back[l * w + j];
        starts[l - 1] = i;
        j = i;
    }
    starts
}

fn starts_to_mapping(starts: &[usize], len: usize) -> Mapping {
    let mut assign = vec![0u32; len];
    for (c, &s) in starts.iter().enumerate() {
        let e = starts.get(c + 1).copied().unwrap_or(len);
        assign[s..e].iter_mut().for_each(|a| *a = c as u32);
    }
    Mapping {
        assign,
        num_clusters: starts.len(),
    }
}

/// Information-optimal partition of an ordered grid into `levels` contiguous cells.
pub fn scalar_quantizer_dp(p: &JointPmf, levels: usize) -> Result<ScalarQuantizer> {
    let len = p.ny;
    if levels == 0 || levels > len {
        return Err(Error::Range(format!("{levels} levels for a grid of {len}")));
    }
    let cost = SegmentCost::new(p, p.px(), len);
    let starts = contiguous_dp(&cost, len, levels);
    let mapping = starts_to_mapping(&starts, len);
    let info = mapped_information(p, &mapping)?;
    Ok(ScalarQuantizer {
        mapping,
        starts,
        info,
    })
}

/// Mirror-symmetric variant: designs the lower half with `levels / 2` cells
/// and reflects it, so cell `c` of grid point `g` pairs with cell
/// `levels-1-c` of point `len-1-g`.
pub fn scalar_quantizer_dp_symmetric(p: &JointPmf, levels: usize) -> Result<ScalarQuantizer> {
    let len = p.ny;
    if levels == 0 || levels > len {
        return Err(Error::Range(format!("{levels} levels for a grid of {len}")));
    }
    if !levels.is_multiple_of(2) || !len.is_multiple_of(2) {
        return Err(Error::Precondition(
            "symmetric quantizer needs even grid and level counts".into(),
        ));
    }
    let half = len / 2;
    let cost = SegmentCost::new(p, p.px(), half);
    let lower = contiguous_dp(&cost, half, levels / 2);
    let mut starts = lower.clone();
    // upper cells start where the mirrored lower cells end
    for c in (0..levels / 2).rev() {
        let end = lower.get(c + 1).copied().unwrap_or(half);
        starts.push(len - end);
    }
    let mapping = starts_to_mapping(&starts, len);
    let info = mapped_information(p, &mapping)?;
    Ok(ScalarQuantizer {
        mapping,
        starts,
        info,
    })
}

/// IB quantizer for a binary relevant variable: observations are ordered by
/// their log-likelihood ratio `ln p(x=0|y)/p(x=1|y)`, pooled into `bins`
/// uniform LLR bins and partitioned by [`scalar_quantizer_dp`].
///
/// Output cells are ordered by ascending LLR.
pub fn binary_llr_quantizer(
    p: &JointPmf,
    levels: usize,
    symmetric: bool,
    bins: usize,
) -> Result<IbResult> {
    if p.nx != 2 {
        return Err(Error::Precondition("relevant variable must be binary".into()));
    }
    check_cluster_args(p, levels, symmetric)?;
    let ny = p.ny;
    let bins = if symmetric { bins + bins % 2 } else { bins }.max(levels);
    const CAP: f64 = 60.0;
    let llr = |y: usize| -> Option<f64> {
        let (a, b) = (p.get(0, y), p.get(1, y));
        if a + b <= 0.0 {
            None
        } else if b <= 0.0 {
            Some(CAP)
        } else if a <= 0.0 {
            Some(-CAP)
        } else {
            Some((a / b).ln().clamp(-CAP, CAP))
        }
    };
    let lmax = (0..ny)
        .filter_map(llr)
        .fold(0.0f64, |m, l| m.max(l.abs()))
        .max(1e-9)
        * (1.0 + 1e-12);
    let bin_of = |l: f64| -> usize {
        let u = (l + lmax) / (2.0 * lmax) * bins as f64;
        (u.floor().max(0.0) as usize).min(bins - 1)
    };
    let mut y_bin = vec![usize::MAX; ny];
    let limit = if symmetric { ny / 2 } else { ny };
    for y in 0..limit {
        if let Some(l) = llr(y) {
            let b = bin_of(l);
            y_bin[y] = b;
            if symmetric {
                y_bin[ny - 1 - y] = bins - 1 - b;
            }
        } else if symmetric {
            if let Some(l) = llr(ny - 1 - y) {
                let b = bin_of(l);
                y_bin[ny - 1 - y] = b;
                y_bin[y] = bins - 1 - b;
            }
        }
    }
    let mut pooled = vec![0.0; 2 * bins];
    for y in 0..ny {
        if y_bin[y] != usize::MAX {
            pooled[2 * y_bin[y]] += p.get(0, y);
            pooled[2 * y_bin[y] + 1] += p.get(1, y);
        }
    }
    let grid = JointPmf::normalized(2, bins, pooled)?;
    let q = if symmetric {
        scalar_quantizer_dp_symmetric(&grid, levels)?
    } else {
        scalar_quantizer_dp(&grid, levels)?
    };
    let mut assign = vec![0u32; ny];
    for y in 0..ny {
        if y_bin[y] != usize::MAX {
            assign[y] = q.mapping.assign[y_bin[y]];
        }
    }
    let zero_mass = zero_mass_fixup(p, &mut assign, levels, symmetric);
    let mapping = Mapping {
        assign,
        num_clusters: levels,
    };
    let info = mapped_information(p, &mapping)?;
    Ok(IbResult {
        mapping,
        info,
        zero_mass,
        passes: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_joint(nx: usize, ny: usize, seed: u64) -> JointPmf {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>().powi(3)).collect();
        JointPmf::normalized(nx, ny, data).unwrap()
    }

    fn symmetrize(p: &JointPmf) -> JointPmf {
        let (nx, ny) = (p.nx(), p.ny());
        let mut data = vec![0.0; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                data[y * nx + x] = p.get(x, y) + p.get(nx - 1 - x, ny - 1 - y);
            }
        }
        JointPmf::normalized(nx, ny, data).unwrap()
    }

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn mi_of_independent_is_zero() {
        let px = [0.3, 0.7];
        let py = [0.1, 0.2, 0.3, 0.4];
        let rows: Vec<Vec<f64>> = px
            .iter()
            .map(|a| py.iter().map(|b| a * b).collect())
            .collect();
        let p = JointPmf::from_rows(&rows).unwrap();
        assert!(mutual_information(&p).abs() < 1e-12);
    }

    #[test]
    fn mi_of_noiseless_binary_is_one_bit() {
        let p = JointPmf::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((mutual_information(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_of_bsc() {
        let e = 0.11;
        let p = JointPmf::from_rows(&[
            vec![0.5 * (1.0 - e), 0.5 * e],
            vec![0.5 * e, 0.5 * (1.0 - e)],
        ])
        .unwrap();
        let expected = 1.0 - h2(e);
        assert!((mutual_information(&p) - expected).abs() < 1e-12);
        assert!((expected - 0.5).abs() < 0.001);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(JointPmf::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(JointPmf::new(1, 2, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn compress_identity_and_all_to_one() {
        let p = random_joint(3, 5, 1);
        let same = compress_joint(&p, &Mapping::identity(5)).unwrap();
        assert_eq!(same, p);
        let one = compress_joint(
            &p,
            &Mapping {
                assign: vec![0; 5],
                num_clusters: 1,
            },
        )
        .unwrap();
        for (a, b) in one.column(0).iter().zip(p.px()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(mutual_information(&one).abs() < 1e-12);
    }

    #[test]
    fn cluster_extremes() {
        let p = random_joint(4, 12, 2);
        let opts = IbOptions {
            restarts: 3,
            ..Default::default()
        };
        let full = ib_cluster(&p, 12, &opts).unwrap();
        assert!((full.info - mutual_information(&p)).abs() < 1e-9);
        let one = ib_cluster(&p, 1, &opts).unwrap();
        assert!(one.info.abs() < 1e-12);
        assert!(ib_cluster(&p, 13, &opts).is_err());
    }

    #[test]
    fn binary_two_clusters_match_exhaustive_search() {
        for seed in 0..20 {
            let p = random_joint(2, 8, 100 + seed);
            let mut best = 0.0f64;
            for bits in 0u32..256 {
                let m = Mapping {
                    assign: (0..8).map(|y| (bits >> y) & 1).collect(),
                    num_clusters: 2,
                };
                best = best.max(mapped_information(&p, &m).unwrap());
            }
            let opts = IbOptions {
                restarts: 8,
                seed,
                ..Default::default()
            };
            let got = ib_cluster(&p, 2, &opts).unwrap();
            assert!((got.info - best).abs() < 1e-12, "seed {seed}: {} vs {best}", got.info);
        }
    }

    #[test]
    fn symmetric_clustering_respects_complement() {
        let p = symmetrize(&random_joint(4, 32, 9));
        let opts = IbOptions {
            restarts: 2,
            symmetric: true,
            ..Default::default()
        };
        let r = ib_cluster(&p, 8, &opts).unwrap();
        assert!(r.mapping.is_complement_symmetric());
        assert!(r.info <= mutual_information(&p) + 1e-9);
    }

    #[test]
    fn zero_mass_observations_go_to_lowest_cluster() {
        let mut data = random_joint(2, 6, 4).raw().to_vec();
        data[4] = 0.0;
        data[5] = 0.0;
        let p = JointPmf::normalized(2, 6, data).unwrap();
        let r = ib_cluster(&p, 3, &IbOptions::default()).unwrap();
        assert_eq!(r.zero_mass, vec![2]);
        assert_eq!(r.mapping.get(2), 0);
    }

    #[test]
    fn restarts_are_monotone() {
        let p = random_joint(4, 40, 21);
        let mut last = 0.0;
        for n in 1..6 {
            let r = ib_cluster(
                &p,
                5,
                &IbOptions {
                    restarts: n,
                    seed: 77,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(r.info >= last);
            last = r.info;
        }
    }

    fn gaussian_grid(len: usize, sigma: f64) -> JointPmf {
        let mut rows = vec![vec![0.0; len]; 2];
        for g in 0..len {
            let v = -4.0 + 8.0 * (g as f64 + 0.5) / len as f64;
            rows[0][g] = (-(v - 1.0).powi(2) / (2.0 * sigma * sigma)).exp();
            rows[1][g] = (-(v + 1.0).powi(2) / (2.0 * sigma * sigma)).exp();
        }
        let total: f64 = rows.iter().flatten().sum();
        rows.iter_mut().flatten().for_each(|v| *v /= total);
        JointPmf::from_rows(&rows).unwrap()
    }

    #[test]
    fn dp_two_levels_splits_at_midpoint() {
        let p = gaussian_grid(64, 0.8);
        let q = scalar_quantizer_dp(&p, 2).unwrap();
        assert_eq!(q.starts, vec![0, 32]);
        let qs = scalar_quantizer_dp_symmetric(&p, 2).unwrap();
        assert_eq!(qs.mapping, q.mapping);
    }

    #[test]
    fn dp_full_resolution_is_identity() {
        let p = random_joint(3, 10, 5);
        let q = scalar_quantizer_dp(&p, 10).unwrap();
        assert_eq!(q.mapping, Mapping::identity(10));
        assert!((q.info - mutual_information(&p)).abs() < 1e-12);
        assert!(matches!(scalar_quantizer_dp(&p, 11), Err(Error::Range(_))));
    }

    #[test]
    fn dp_beats_clustering_on_ordered_grid() {
        let p = gaussian_grid(64, 1.0);
        let q = scalar_quantizer_dp(&p, 4).unwrap();
        let c = ib_cluster(
            &p,
            4,
            &IbOptions {
                restarts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(q.info >= c.info - 1e-12);
    }

    #[test]
    fn symmetric_dp_mirrors_cells() {
        let p = gaussian_grid(40, 0.6);
        let q = scalar_quantizer_dp_symmetric(&p, 6).unwrap();
        assert!(q.mapping.is_complement_symmetric());
        let plain = scalar_quantizer_dp(&p, 6).unwrap();
        assert!((q.info - plain.info).abs() < 1e-9);
    }

    #[test]
    fn binary_llr_quantizer_is_contiguous_in_llr() {
        let p = symmetrize(&random_joint(2, 200, 8));
        let r = binary_llr_quantizer(&p, 4, true, 512).unwrap();
        assert!(r.mapping.is_complement_symmetric());
        let llr: Vec<f64> = (0..200).map(|y| (p.get(0, y) / p.get(1, y)).ln()).collect();
        for a in 0..200 {
            for b in 0..200 {
                if llr[a] + 1e-6 < llr[b] {
                    assert!(r.mapping.get(a) <= r.mapping.get(b));
                }
            }
        }
        let c = ib_cluster(&p, 4, &IbOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!(r.info >= c.info - 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn data_processing_holds(seed in 0u64..10_000, k in 1usize..8) {
            let p = random_joint(8, 16, seed);
            let r = ib_cluster(&p, k, &IbOptions { seed, ..Default::default() }).unwrap();
            prop_assert!(r.info <= mutual_information(&p) + 1e-9);
            let m = Mapping { assign: (0..16).map(|y| (y * 7 % k) as u32).collect(), num_clusters: k };
            prop_assert!(mapped_information(&p, &m).unwrap() <= mutual_information(&p) + 1e-9);
        }

        #[test]
        fn dp_is_invariant_under_order_reversal(seed in 0u64..10_000, levels in 1usize..6) {
            let p = random_joint(3, 12, seed);
            let mut rev = vec![0.0; 36];
            for y in 0..12 {
                for x in 0..3 {
                    rev[y * 3 + x] = p.get(x, 11 - y);
                }
            }
            let pr = JointPmf::new(3, 12, rev).unwrap();
            let a = scalar_quantizer_dp(&p, levels).unwrap();
            let b = scalar_quantizer_dp(&pr, levels).unwrap();
            prop_assert!((a.info - b.info).abs() < 1e-12);
        }
    }
}

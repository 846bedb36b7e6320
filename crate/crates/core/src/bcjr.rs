//! Conventional log-domain BCJR equalizers and a brute-force posterior oracle.
//!
//! Frames follow the convention of [`crate::channel::transmit`]: the symbols
//! before the frame are the known preamble (alphabet index 0), and the last
//! `tail` observed positions carry known tail symbols (also index 0). LLRs are
//! `ln p(d=+1)/p(d=-1)`, i.e. symbol index 0 over index 1.

use crate::channel::{build_trellis, ungerboeck_front_end, ChannelSpec, Trellis, UngerboeckModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaxStar {
    /// Jacobian logarithm `max(a,b) + ln(1 + e^{-|a-b|})`.
    Exact,
    /// Max-log approximation.
    Approx,
}

#[inline]
pub fn maxstar(a: f64, b: f64, mode: MaxStar) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    match mode {
        MaxStar::Approx => m,
        MaxStar::Exact => m + (-(a - b).abs()).exp().ln_1p(),
    }
}

/// Left fold of [`maxstar`]; `-inf` for an empty input.
pub fn maxstar_fold<I: IntoIterator<Item = f64>>(values: I, mode: MaxStar) -> f64 {
    values
        .into_iter()
        .fold(f64::NEG_INFINITY, |acc, v| maxstar(acc, v, mode))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationModel {
    Forney,
    Ungerboeck,
}

/// Forney branch metric `-|r_k - x_ch|^2`.
#[inline]
pub fn forney_metric(trellis: &Trellis, s: usize, d: usize, r: f64) -> f64 {
    let e = r - trellis.output(s, d);
    -e * e
}

/// Ungerboeck branch metric `2 d_k r'_k - (g_0 |d_k|^2 + 2 d_k sum g_l d_{k-l})`.
#[inline]
pub fn ungerboeck_metric(
    trellis: &Trellis,
    model: &UngerboeckModel,
    alphabet: &[f64],
    s: usize,
    d: usize,
    filtered: f64,
) -> f64 {
    2.0 * alphabet[d] * filtered - model.correction(trellis, alphabet, s, d)
}

/// Floating-point log-MAP / max-log-MAP equalizer for BPSK.
#[derive(Clone, Debug)]
pub struct Bcjr {
    pub spec: ChannelSpec,
    pub trellis: Trellis,
    pub model: ObservationModel,
    pub mode: MaxStar,
    ungerboeck: UngerboeckModel,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `[ln p(+1), ln p(-1)]` for an LLR.
fn log_prior(llr: f64) -> [f64; 2] {
    [-softplus(-llr), -softplus(llr)]
}

impl Bcjr {
    pub fn new(spec: &ChannelSpec, model: ObservationModel, mode: MaxStar) -> Result<Self> {
        if spec.alphabet.len() != 2 {
            return Err(Error::Precondition("BCJR equalizer is binary-only".into()));
        }
        Ok(Bcjr {
            trellis: build_trellis(spec)?,
            ungerboeck: UngerboeckModel::new(spec),
            spec: spec.clone(),
            model,
            mode,
        })
    }

    fn branch_table(&self, r: &[f64]) -> Vec<f64> {
        let t = &self.trellis;
        let n0 = self.spec.n0;
        let nt = t.num_transitions();
        let mut out = vec![0.0; r.len() * nt];
        match self.model {
            ObservationModel::Forney => {
                for (k, &rk) in r.iter().enumerate() {
                    for s in 0..t.num_states {
                        for d in 0..2 {
                            out[k * nt + s * 2 + d] = forney_metric(t, s, d, rk) / n0;
                        }
                    }
                }
            }
            ObservationModel::Ungerboeck => {
                let (rp, _) = ungerboeck_front_end(r, &self.spec);
                for (k, &f) in rp.iter().enumerate() {
                    for s in 0..t.num_states {
                        for d in 0..2 {
                            out[k * nt + s * 2 + d] = ungerboeck_metric(
                                t,
                                &self.ungerboeck,
                                &self.spec.alphabet,
                                s,
                                d,
                                f,
                            ) / n0;
                        }
                    }
                }
            }
        }
        out
    }

    /// Posterior LLRs of the `r.len() - tail` data symbols.
    ///
    /// `prior_llr` has one entry per data symbol (pass zeros on the first run).
    pub fn posterior(&self, r: &[f64], prior_llr: &[f64], tail: usize) -> Result<Vec<f64>> {
        let k_len = r.len();
        if tail > k_len || prior_llr.len() != k_len - tail {
            return Err(Error::Precondition(format!(
                "{} observations with tail {tail} need {} priors, got {}",
                k_len,
                k_len.saturating_sub(tail),
                prior_llr.len()
            )));
        }
        let t = &self.trellis;
        let ns = t.num_states;
        let nt = t.num_transitions();
        let mode = self.mode;
        let mut gamma = self.branch_table(r);
        for k in 0..k_len {
            let lp = if k < k_len - tail {
                log_prior(prior_llr[k])
            } else {
                [0.0, f64::NEG_INFINITY]
            };
            for s in 0..ns {
                for d in 0..2 {
                    gamma[k * nt + s * 2 + d] += lp[d];
                }
            }
        }
        let mut alpha = vec![f64::NEG_INFINITY; (k_len + 1) * ns];
        alpha[0] = 0.0;
        for k in 0..k_len {
            let (cur, next) = alpha.split_at_mut((k + 1) * ns);
            let cur = &cur[k * ns..];
            let next = &mut next[..ns];
            for s in 0..ns {
                if cur[s] == f64::NEG_INFINITY {
                    continue;
                }
                for d in 0..2 {
                    let sp = t.next(s, d);
                    next[sp] = maxstar(next[sp], cur[s] + gamma[k * nt + s * 2 + d], mode);
                }
            }
            let top = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            next.iter_mut().for_each(|v| *v -= top);
        }
        let mut beta = vec![0.0; (k_len + 1) * ns];
        for k in (0..k_len).rev() {
            for s in 0..ns {
                let mut acc = f64::NEG_INFINITY;
                for d in 0..2 {
                    let sp = t.next(s, d);
                    acc = maxstar(acc, beta[(k + 1) * ns + sp] + gamma[k * nt + s * 2 + d], mode);
                }
                beta[k * ns + s] = acc;
            }
            let top = beta[k * ns..(k + 1) * ns]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            beta[k * ns..(k + 1) * ns].iter_mut().for_each(|v| *v -= top);
        }
        let out = (0..k_len - tail)
            .map(|k| {
                let mut num = [f64::NEG_INFINITY; 2];
                for s in 0..ns {
                    let a = alpha[k * ns + s];
                    if a == f64::NEG_INFINITY {
                        continue;
                    }
                    for (d, acc) in num.iter_mut().enumerate() {
                        let sp = t.next(s, d);
                        *acc = maxstar(
                            *acc,
                            a + gamma[k * nt + s * 2 + d] + beta[(k + 1) * ns + sp],
                            mode,
                        );
                    }
                }
                num[0] - num[1]
            })
            .collect();
        Ok(out)
    }

    /// Extrinsic LLRs: posterior minus prior.
    pub fn extrinsic(&self, r: &[f64], prior_llr: &[f64], tail: usize) -> Result<Vec<f64>> {
        let post = self.posterior(r, prior_llr, tail)?;
        Ok(post.iter().zip(prior_llr).map(|(p, a)| p - a).collect())
    }
}

/// Exact symbol posteriors by enumerating every data sequence.
///
/// Refuses frames with more than 16 unknown symbols.
pub fn brute_force_posterior(
    r: &[f64],
    spec: &ChannelSpec,
    prior_llr: &[f64],
    tail: usize,
) -> Result<Vec<f64>> {
    let n = r.len().checked_sub(tail).ok_or_else(|| {
        Error::Precondition("tail longer than the frame".into())
    })?;
    if n > 16 {
        return Err(Error::Capacity(format!("{n} symbols is too many to enumerate")));
    }
    if prior_llr.len() != n || spec.alphabet.len() != 2 {
        return Err(Error::Precondition("binary alphabet and one prior per symbol required".into()));
    }
    let priors: Vec<[f64; 2]> = prior_llr.iter().map(|&l| log_prior(l)).collect();
    let mut num = vec![[f64::NEG_INFINITY; 2]; n];
    let mut syms = vec![0usize; r.len()];
    for word in 0u32..(1u32 << n) {
        for (k, s) in syms.iter_mut().enumerate().take(n) {
            *s = ((word >> k) & 1) as usize;
        }
        let mut w = 0.0;
        for (k, &rk) in r.iter().enumerate() {
            let x: f64 = spec
                .taps
                .iter()
                .enumerate()
                .map(|(l, h)| h * spec.alphabet[if k >= l { syms[k - l] } else { 0 }])
                .sum();
            w -= (rk - x) * (rk - x) / spec.n0;
        }
        for k in 0..n {
            w += priors[k][syms[k]];
        }
        for k in 0..n {
            let slot = &mut num[k][syms[k]];
            *slot = maxstar(*slot, w, MaxStar::Exact);
        }
    }
    Ok(num.iter().map(|v| v[0] - v[1]).collect())
}

/// Uniform quantization and metric widths of the fixed-point equalizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointFormat {
    pub delta: f64,
    /// Channel message width.
    pub w_r: u32,
    /// Width of one state-metric entry.
    pub w_entry: u32,
}

impl FixedPointFormat {
    pub fn new(delta: f64, w_r: u32, w_entry: u32) -> Result<Self> {
        if !(delta > 0.0) || !(2..=40).contains(&w_r) || !(2..=62).contains(&w_entry) {
            return Err(Error::Precondition(format!(
                "invalid fixed-point format delta={delta} w_r={w_r} w_entry={w_entry}"
            )));
        }
        Ok(FixedPointFormat {
            delta,
            w_r,
            w_entry,
        })
    }

    /// Picks `delta` so the `w_r`-bit grid spans `±(max|x_ch| + 3 sigma)`.
    pub fn for_channel(spec: &ChannelSpec, w_r: u32, w_entry: u32) -> Result<Self> {
        let trellis = build_trellis(spec)?;
        let xmax = (0..trellis.num_states)
            .flat_map(|s| (0..trellis.num_symbols).map(move |d| (s, d)))
            .map(|(s, d)| trellis.output(s, d).abs())
            .fold(0.0, f64::max);
        let span = xmax + 3.0 * spec.noise_std();
        Self::new(span / Self::max_level(w_r) as f64, w_r, w_entry)
    }

    fn max_level(bits: u32) -> i64 {
        (1i64 << (bits - 1)) - 1
    }

    /// Stored bits of one metric vector; state 0 is implicit.
    pub fn metric_width(&self, num_states: usize) -> u32 {
        (num_states as u32 - 1) * self.w_entry
    }

    pub fn entry_range(&self) -> (i64, i64) {
        let hi = Self::max_level(self.w_entry);
        (-hi - 1, hi)
    }

    /// Rounds to the grid and clips to `w_r` bits.
    pub fn quantize(&self, r: &[f64]) -> Vec<f64> {
        let lim = Self::max_level(self.w_r) as f64;
        r.iter()
            .map(|v| (v / self.delta).round().clamp(-lim, lim) * self.delta)
            .collect()
    }
}

/// `N_0 ln p(d | t_d)` per feedback level, in units of `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorLut {
    pub entries: Vec<[i64; 2]>,
}

impl PriorLut {
    /// Builds the table from `ln p(d | t_d)` rows.
    pub fn from_log_probs(log_probs: &[[f64; 2]], n0: f64, fmt: &FixedPointFormat) -> Self {
        let (lo, hi) = fmt.entry_range();
        let entries = log_probs
            .iter()
            .map(|row| {
                row.map(|lp| {
                    let v = n0 * lp / fmt.delta;
                    if v.is_finite() {
                        (v.round() as i64).clamp(lo, hi)
                    } else {
                        lo
                    }
                })
            })
            .collect();
        PriorLut { entries }
    }

    /// Single neutral level with equal priors.
    pub fn uniform() -> Self {
        PriorLut {
            entries: vec![[0, 0]],
        }
    }
}

/// Fixed-point max-log equalizer on the Ungerboeck model with saturating
/// metrics normalized to state 0.
#[derive(Clone, Debug)]
pub struct QuantizedBcjr {
    pub spec: ChannelSpec,
    pub trellis: Trellis,
    pub fmt: FixedPointFormat,
    ungerboeck: UngerboeckModel,
}

impl QuantizedBcjr {
    pub fn new(spec: &ChannelSpec, fmt: FixedPointFormat) -> Result<Self> {
        if spec.alphabet.len() != 2 {
            return Err(Error::Precondition("BCJR equalizer is binary-only".into()));
        }
        Ok(QuantizedBcjr {
            trellis: build_trellis(spec)?,
            ungerboeck: UngerboeckModel::new(spec),
            spec: spec.clone(),
            fmt,
        })
    }

    fn branch(&self, rp: &[f64]) -> Vec<i64> {
        let t = &self.trellis;
        let nt = t.num_transitions();
        let mut out = vec![0i64; rp.len() * nt];
        for (k, &f) in rp.iter().enumerate() {
            for s in 0..t.num_states {
                for d in 0..2 {
                    let g = ungerboeck_metric(t, &self.ungerboeck, &self.spec.alphabet, s, d, f);
                    out[k * nt + s * 2 + d] = (g / self.fmt.delta).round() as i64;
                }
            }
        }
        out
    }

    fn saturate(&self, v: i64) -> i64 {
        let (lo, hi) = self.fmt.entry_range();
        v.clamp(lo, hi)
    }

    /// Integer extrinsic LLRs (units of `delta / N_0` in the LLR domain).
    ///
    /// `r` must already lie on the `delta` grid within `w_r` bits; `t_d` holds
    /// one feedback level per data symbol.
    pub fn equalize(
        &self,
        r: &[f64],
        t_d: &[usize],
        prior: &PriorLut,
        tail: usize,
    ) -> Result<Vec<i64>> {
        self.equalize_traced(r, t_d, prior, tail).map(|(llr, _)| llr)
    }

    /// As [`equalize`](Self::equalize), also returning the forward metric vectors.
    pub fn equalize_traced(
        &self,
        r: &[f64],
        t_d: &[usize],
        prior: &PriorLut,
        tail: usize,
    ) -> Result<(Vec<i64>, Vec<i64>)> {
        let lim = FixedPointFormat::max_level(self.fmt.w_r) as f64;
        for &v in r {
            let q = v / self.fmt.delta;
            if (q - q.round()).abs() > 1e-6 || q.abs() > lim + 1e-9 {
                return Err(Error::Precondition(format!(
                    "observation {v} is not on the {}-bit grid",
                    self.fmt.w_r
                )));
            }
        }
        let k_len = r.len();
        if tail > k_len || t_d.len() != k_len - tail {
            return Err(Error::Precondition("one feedback level per data symbol".into()));
        }
        if let Some(&bad) = t_d.iter().find(|&&l| l >= prior.entries.len()) {
            return Err(Error::Precondition(format!("feedback level {bad} has no prior entry")));
        }
        let t = &self.trellis;
        let ns = t.num_states;
        let nt = t.num_transitions();
        let (lo, _) = self.fmt.entry_range();
        let (rp, _) = ungerboeck_front_end(r, &self.spec);
        let gamma = self.branch(&rp);
        let allowed = |k: usize, d: usize| k < k_len - tail || d == 0;
        let prior_of = |k: usize, d: usize| -> i64 {
            if k < k_len - tail {
                prior.entries[t_d[k]][d]
            } else {
                0
            }
        };

        let mut alpha = vec![lo; (k_len + 1) * ns];
        alpha[0] = 0;
        for k in 0..k_len {
            let mut next = vec![i64::MIN; ns];
            for sp in 0..ns {
                let d = t.newest(sp);
                if !allowed(k, d) {
                    continue;
                }
                let mut best = i64::MIN;
                for e in 0..2 {
                    let s = if t.memory == 0 { 0 } else { t.predecessor(sp, e) };
                    best = best.max(alpha[k * ns + s] + gamma[k * nt + s * 2 + d]);
                    if t.memory == 0 {
                        break;
                    }
                }
                next[sp] = best + prior_of(k, d);
            }
            if t.memory == 0 {
                // single state: the recursion carries no information
                alpha[(k + 1) * ns] = 0;
                continue;
            }
            let reference = if next[0] == i64::MIN { 0 } else { next[0] };
            for sp in 0..ns {
                alpha[(k + 1) * ns + sp] = if next[sp] == i64::MIN {
                    lo
                } else {
                    self.saturate(next[sp] - reference)
                };
            }
        }

        let mut beta_next = vec![0i64; ns];
        let mut beta = vec![0i64; (k_len + 1) * ns];
        for k in (0..k_len).rev() {
            let mut cur = vec![i64::MIN; ns];
            for s in 0..ns {
                for d in 0..2 {
                    if !allowed(k, d) {
                        continue;
                    }
                    let sp = t.next(s, d);
                    let v = beta_next[sp] + gamma[k * nt + s * 2 + d] + prior_of(k, d);
                    cur[s] = cur[s].max(v);
                }
            }
            let reference = cur[0];
            for s in 0..ns {
                beta_next[s] = if t.memory == 0 { 0 } else { self.saturate(cur[s] - reference) };
            }
            beta[k * ns..(k + 1) * ns].copy_from_slice(&beta_next);
        }
        let llr = (0..k_len - tail)
            .map(|k| {
                let mut num = [i64::MIN; 2];
                for s in 0..ns {
                    for (d, acc) in num.iter_mut().enumerate() {
                        let sp = t.next(s, d);
                        let b = if k + 1 == k_len { 0 } else { beta[(k + 1) * ns + sp] };
                        *acc = (*acc).max(alpha[k * ns + s] + gamma[k * nt + s * 2 + d] + b);
                    }
                }
                num[0] - num[1]
            })
            .collect();
        Ok((llr, alpha))
    }

    /// Converts integer LLRs to the natural-log domain.
    pub fn to_real(&self, llr: &[i64]) -> Vec<f64> {
        let scale = self.fmt.delta / self.spec.n0;
        llr.iter().map(|&v| v as f64 * scale).collect()
    }
}

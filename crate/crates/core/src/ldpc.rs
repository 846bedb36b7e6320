//! Regular LDPC codes: progressive edge growth construction, alist I/O,
//! systematic encoding and flooding decoders with optional warm start.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Sparse parity-check matrix with a systematic encoder.
#[derive(Clone, Debug)]
pub struct LdpcCode {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Variable indices of each check.
    pub checks: Vec<Vec<usize>>,
    /// Check indices of each variable.
    pub vars: Vec<Vec<usize>>,
    /// Codeword positions carrying the message bits.
    pub info_positions: Vec<usize>,
    /// Codeword positions of the parity bits, one per independent check.
    parity_positions: Vec<usize>,
    /// Per parity bit, the packed message bits it sums.
    parity_rows: Vec<Vec<u64>>,
    // CSR edge layout shared by the decoders.
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    var_ptr: Vec<usize>,
    var_edge: Vec<usize>,
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl LdpcCode {
    /// Builds the code from check adjacency lists.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        let m = checks.len();
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            for &v in row {
                if v >= n {
                    return Err(Error::Format(format!("check {c} references variable {v} >= {n}")));
                }
                if vars[v].contains(&c) {
                    return Err(Error::Format(format!("duplicate edge ({c},{v})")));
                }
                vars[v].push(c);
            }
        }
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::new();
        for row in &checks {
            edge_var.extend_from_slice(row);
            check_ptr.push(edge_var.len());
        }
        let mut var_edges = vec![Vec::new(); n];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[v].push(e);
        }
        let mut var_ptr = vec![0];
        let mut var_edge = Vec::with_capacity(edge_var.len());
        for list in &var_edges {
            var_edge.extend_from_slice(list);
            var_ptr.push(var_edge.len());
        }
        let (info_positions, parity_positions, parity_rows) = systematic_form(n, &checks);
        Ok(LdpcCode {
            n,
            m,
            k: info_positions.len(),
            checks,
            vars,
            info_positions,
            parity_positions,
            parity_rows,
            check_ptr,
            edge_var,
            var_ptr,
            var_edge,
        })
    }

    /// Regular `(dv, dc)` code of length `n` by progressive edge growth.
    pub fn peg(n: usize, dv: usize, dc: usize, seed: u64) -> Result<Self> {
        if dv == 0 || dc < 2 || n == 0 || !(n * dv).is_multiple_of(dc) {
            return Err(Error::Precondition(format!(
                "no regular ({dv},{dc}) code of length {n}"
            )));
        }
        let m = n * dv / dc;
        if m < dv {
            return Err(Error::Precondition("too few checks for the variable degree".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checks: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut vars: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut reached = vec![false; m];
        let mut seen_var = vec![false; n];
        for j in 0..n {
            for e in 0..dv {
                let c = if e == 0 {
                    pick_min_degree(&checks, dc, &mut rng, |c| !vars[j].contains(&c))
                } else {
                    peg_candidate(j, &checks, &vars, dc, &mut reached, &mut seen_var, &mut rng)
                };
                let c = c.ok_or_else(|| Error::Design(format!("edge growth stuck at variable {j}")))?;
                checks[c].push(j);
                vars[j].push(c);
            }
        }
        Self::from_checks(n, checks)
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn num_edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Systematic encoding; `msg` has `k` bits.
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        if msg.len() != self.k {
            return Err(Error::Precondition(format!(
                "message has {} bits, code dimension is {}",
                msg.len(),
                self.k
            )));
        }
        let mut packed = vec![0u64; words(self.k)];
        for (i, &b) in msg.iter().enumerate() {
            if b & 1 == 1 {
                packed[i / 64] |= 1 << (i % 64);
            }
        }
        let mut c = vec![0u8; self.n];
        for (&pos, &b) in self.info_positions.iter().zip(msg) {
            c[pos] = b & 1;
        }
        for (&pos, row) in self.parity_positions.iter().zip(&self.parity_rows) {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            c[pos] = (ones & 1) as u8;
        }
        Ok(c)
    }

    /// Message bits of a codeword.
    pub fn extract(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }

    /// Number of unsatisfied checks.
    pub fn syndrome_weight(&self, bits: &[u8]) -> usize {
        self.checks
            .iter()
            .filter(|row| row.iter().fold(0u8, |acc, &v| acc ^ bits[v]) & 1 == 1)
            .count()
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n && self.syndrome_weight(bits) == 0
    }

    /// Writes the parity-check matrix in alist format.
    pub fn to_alist(&self) -> String {
        let mut s = String::new();
        let max_col = self.vars.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.checks.iter().map(Vec::len).max().unwrap_or(0);
        let _ = writeln!(s, "{} {}", self.n, self.m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(s, "{}", join(self.vars.iter().map(|c| c.len().to_string()).collect()));
        let _ = writeln!(s, "{}", join(self.checks.iter().map(|r| r.len().to_string()).collect()));
        for (lists, width) in [(&self.vars, max_col), (&self.checks, max_row)] {
            for l in lists {
                let mut items: Vec<String> = l.iter().map(|i| (i + 1).to_string()).collect();
                items.resize(width, "0".into());
                let _ = writeln!(s, "{}", join(items));
            }
        }
        s
    }

    /// Parses an alist description; column lists must agree with row lists.
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Format(format!("alist token {t:?} is not a count")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(Error::Format("alist ended early".into())));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        let mut vars = Vec::with_capacity(n);
        for &w in &col_w {
            let entries: Vec<usize> = (0..max_col).map(|_| next()).collect::<Result<_>>()?;
            vars.push(parse_list(&entries, w, m)?);
        }
        let mut checks = Vec::with_capacity(m);
        for &w in &row_w {
            let entries: Vec<usize> = (0..max_row).map(|_| next()).collect::<Result<_>>()?;
            checks.push(parse_list(&entries, w, n)?);
        }
        for (v, list) in vars.iter().enumerate() {
            for &c in list {
                if !checks[c].contains(&v) {
                    return Err(Error::Format(format!(
                        "column list of variable {v} disagrees with row {c}"
                    )));
                }
            }
        }
        if vars.iter().map(Vec::len).sum::<usize>() != checks.iter().map(Vec::len).sum::<usize>() {
            return Err(Error::Format("row and column edge counts differ".into()));
        }
        Self::from_checks(n, checks)
    }

    pub fn read_alist(path: &Path) -> Result<Self> {
        Self::from_alist(&std::fs::read_to_string(path)?)
    }

    pub fn write_alist(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_alist())?;
        Ok(())
    }
}

fn parse_list(entries: &[usize], weight: usize, bound: usize) -> Result<Vec<usize>> {
    if weight > entries.len() {
        return Err(Error::Format(format!("weight {weight} exceeds the list width")));
    }
    let list: Vec<usize> = entries[..weight].iter().map(|&i| i.wrapping_sub(1)).collect();
    if list.iter().any(|&i| i >= bound) || entries[weight..].iter().any(|&i| i != 0) {
        return Err(Error::Format("alist index out of range".into()));
    }
    Ok(list)
}

fn pick_min_degree<F: Fn(usize) -> bool>(
    checks: &[Vec<usize>],
    dc: usize,
    rng: &mut ChaCha8Rng,
    allowed: F,
) -> Option<usize> {
    let best = (0..checks.len())
        .filter(|&c| checks[c].len() < dc && allowed(c))
        .map(|c| checks[c].len())
        .min()?;
    let ties: Vec<usize> = (0..checks.len())
        .filter(|&c| checks[c].len() == best && allowed(c))
        .collect();
    Some(ties[rng.random_range(0..ties.len())])
}

/// Check for the next edge of variable `j`: the least-loaded check outside
/// the largest computation tree that still leaves some check unreached.
fn peg_candidate(
    j: usize,
    checks: &[Vec<usize>],
    vars: &[Vec<usize>],
    dc: usize,
    reached: &mut [bool],
    seen_var: &mut [bool],
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    reached.iter_mut().for_each(|r| *r = false);
    seen_var.iter_mut().for_each(|s| *s = false);
    let eligible = |c: usize| checks[c].len() < dc;
    let total_eligible = (0..checks.len()).filter(|&c| eligible(c)).count();
    seen_var[j] = true;
    let mut frontier: Vec<usize> = vars[j].clone();
    for &c in &frontier {
        reached[c] = true;
    }
    let mut reached_eligible = frontier.iter().filter(|&&c| eligible(c)).count();
    loop {
        let mut next = Vec::new();
        for &c in &frontier {
            for &v in &checks[c] {
                if seen_var[v] {
                    continue;
                }
                seen_var[v] = true;
                for &c2 in &vars[v] {
                    if !reached[c2] {
                        reached[c2] = true;
                        next.push(c2);
                    }
                }
            }
        }
        let new_eligible = next.iter().filter(|&&c| eligible(c)).count();
        if next.is_empty() || reached_eligible + new_eligible == total_eligible {
            // Prefer checks outside the tree before this expansion.
            for &c in &next {
                reached[c] = false;
            }
            let pick = pick_min_degree(checks, dc, rng, |c| !reached[c]);
            return pick.or_else(|| pick_min_degree(checks, dc, rng, |c| !vars[j].contains(&c)));
        }
        reached_eligible += new_eligible;
        frontier = next;
    }
}

/// Gauss-Jordan elimination over GF(2). Returns message positions, parity
/// positions and the packed message dependencies of each parity bit.
#[allow(clippy::type_complexity)]
fn systematic_form(n: usize, checks: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>, Vec<Vec<u64>>) {
    let w = words(n);
    let mut rows: Vec<Vec<u64>> = checks
        .iter()
        .map(|row| {
            let mut bits = vec![0u64; w];
            for &v in row {
                bits[v / 64] ^= 1 << (v % 64);
            }
            bits
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    // Pivot from the last column down so the message sits in front.
    for col in (0..n).rev() {
        if r == rows.len() {
            break;
        }
        let bit = |row: &Vec<u64>| row[col / 64] >> (col % 64) & 1 == 1;
        let Some(p) = (r..rows.len()).find(|&i| bit(&rows[i])) else {
            continue;
        };
        rows.swap(r, p);
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && bit(row) {
                row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
            }
        }
        pivots.push(col);
        r += 1;
    }
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let info: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let kw = words(info.len());
    let parity_rows = (0..pivots.len())
        .map(|i| {
            let mut packed = vec![0u64; kw];
            for (t, &c) in info.iter().enumerate() {
                if rows[i][c / 64] >> (c % 64) & 1 == 1 {
                    packed[t / 64] |= 1 << (t % 64);
                }
            }
            packed
        })
        .collect();
    (info, pivots, parity_rows)
}

/// Quantized offset min-sum parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinSumConfig {
    /// LLR value of one quantization level.
    pub step: f64,
    pub offset: f64,
    /// Largest level magnitude; 7 gives 4-bit messages.
    pub max_level: i32,
}

impl Default for MinSumConfig {
    fn default() -> Self {
        MinSumConfig {
            step: 0.5,
            offset: 0.5,
            max_level: 7,
        }
    }
}

impl MinSumConfig {
    fn quantize(&self, v: f64) -> f64 {
        let m = self.max_level as f64;
        (v / self.step).round().clamp(-m, m) * self.step
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecoderKind {
    /// Exact tanh-rule belief propagation.
    BeliefPropagation,
    OffsetMinSum(MinSumConfig),
}

/// Check-to-variable messages carried between decoder calls.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub c2v: Vec<f64>,
}

impl DecoderState {
    pub fn new(code: &LdpcCode) -> Self {
        DecoderState {
            c2v: vec![0.0; code.num_edges()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    /// Decoder output minus its input LLR.
    pub extrinsic: Vec<f64>,
    pub hard: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding decoder over a fixed code.
#[derive(Clone, Copy, Debug)]
pub struct Decoder<'a> {
    pub code: &'a LdpcCode,
    pub kind: DecoderKind,
}

const TANH_LIMIT: f64 = 1.0 - 1e-15;

impl<'a> Decoder<'a> {
    pub fn new(code: &'a LdpcCode, kind: DecoderKind) -> Self {
        Decoder { code, kind }
    }

    /// Runs up to `iters` iterations, stopping once all checks hold.
    ///
    /// With `state` the decoder resumes from and updates the carried
    /// check-to-variable messages; without it every call starts cold.
    pub fn decode(&self, llr_in: &[f64], iters: usize, state: Option<&mut DecoderState>) -> DecodeOutput {
        let code = self.code;
        let mut local;
        let st = match state {
            Some(s) => s,
            None => {
                local = DecoderState::new(code);
                &mut local
            }
        };
        let input: Vec<f64> = match self.kind {
            DecoderKind::BeliefPropagation => llr_in.to_vec(),
            DecoderKind::OffsetMinSum(cfg) => llr_in.iter().map(|&l| cfg.quantize(l)).collect(),
        };
        let mut v2c = vec![0.0; code.num_edges()];
        let mut totals = self.totals(&input, &st.c2v);
        let mut hard = hard_decisions(&totals);
        let mut converged = code.syndrome_weight(&hard) == 0 && st.c2v.iter().any(|&m| m != 0.0);
        let mut done = 0;
        while done < iters && !converged {
            for v in 0..code.n {
                for &e in &code.var_edge[code.var_ptr[v]..code.var_ptr[v + 1]] {
                    v2c[e] = totals[v] - st.c2v[e];
                }
            }
            if let DecoderKind::OffsetMinSum(cfg) = self.kind {
                v2c.iter_mut().for_each(|m| *m = cfg.quantize(*m));
            }
            for c in 0..code.m {
                let edges = code.check_ptr[c]..code.check_ptr[c + 1];
                match self.kind {
                    DecoderKind::BeliefPropagation => tanh_rule(&v2c[edges.clone()], &mut st.c2v[edges]),
                    DecoderKind::OffsetMinSum(cfg) => {
                        offset_min(&v2c[edges.clone()], &mut st.c2v[edges], cfg)
                    }
                }
            }
            done += 1;
            totals = self.totals(&input, &st.c2v);
            hard = hard_decisions(&totals);
            converged = code.syndrome_weight(&hard) == 0;
        }
        DecodeOutput {
            extrinsic: totals.iter().zip(&input).map(|(t, l)| t - l).collect(),
            hard,
            converged,
            iterations: done,
        }
    }

    fn totals(&self, input: &[f64], c2v: &[f64]) -> Vec<f64> {
        let code = self.code;
        (0..code.n)
            .map(|v| {
                input[v]
                    + code.var_edge[code.var_ptr[v]..code.var_ptr[v + 1]]
                        .iter()
                        .map(|&e| c2v[e])
                        .sum::<f64>()
            })
            .collect()
    }
}

fn hard_decisions(llr: &[f64]) -> Vec<u8> {
    llr.iter().map(|&l| u8::from(l < 0.0)).collect()
}

fn tanh_rule(incoming: &[f64], out: &mut [f64]) {
    let t: Vec<f64> = incoming.iter().map(|&m| (m / 2.0).tanh()).collect();
    for i in 0..t.len() {
        let p: f64 = t.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
        out[i] = 2.0 * p.clamp(-TANH_LIMIT, TANH_LIMIT).atanh();
    }
}

fn offset_min(incoming: &[f64], out: &mut [f64], cfg: MinSumConfig) {
    let sign: f64 = incoming.iter().map(|&m| if m < 0.0 { -1.0 } else { 1.0 }).product();
    let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, 0);
    for (i, &m) in incoming.iter().enumerate() {
        let a = m.abs();
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, &m) in incoming.iter().enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let s = if m < 0.0 { -sign } else { sign };
        out[i] = cfg.quantize(s * (mag - cfg.offset).max(0.0));
    }
}

/// Fixed pseudo-random permutation between code and channel order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    /// Channel position `i` carries code bit `perm[i]`.
    pub perm: Vec<usize>,
}

impl Interleaver {
    pub fn random(n: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Interleaver { perm }
    }

    pub fn identity(n: usize) -> Self {
        Interleaver {
            perm: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Code order to channel order.
    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    /// Channel order to code order.
    pub fn deinterleave<T: Copy + Default>(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); y.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = y[i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::OnceLock;

    fn code() -> &'static LdpcCode {
        static C: OnceLock<LdpcCode> = OnceLock::new();
        C.get_or_init(|| LdpcCode::peg(2048, 3, 6, 7).unwrap())
    }

    fn small() -> &'static LdpcCode {
        static C: OnceLock<LdpcCode> = OnceLock::new();
        C.get_or_init(|| LdpcCode::peg(256, 3, 6, 3).unwrap())
    }

    fn random_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2)).collect()
    }

    /// Girth lower bound: no two variables share two checks.
    fn has_four_cycle(c: &LdpcCode) -> bool {
        let mut seen = std::collections::HashSet::new();
        for row in &c.checks {
            for a in 0..row.len() {
                for b in a + 1..row.len() {
                    let key = (row[a].min(row[b]), row[a].max(row[b]));
                    if !seen.insert(key) {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn peg_code_is_regular_rate_half_and_four_cycle_free() {
        let c = code();
        assert_eq!((c.n, c.m), (2048, 1024));
        assert!(c.vars.iter().all(|v| v.len() == 3));
        assert!(c.checks.iter().all(|r| r.len() == 6));
        assert!(c.k >= 1024 && c.k <= 1030, "k={}", c.k);
        assert!(!has_four_cycle(c));
    }

    #[test]
    fn peg_is_deterministic() {
        let a = LdpcCode::peg(256, 3, 6, 3).unwrap();
        assert_eq!(a.checks, small().checks);
        let b = LdpcCode::peg(256, 3, 6, 4).unwrap();
        assert_ne!(a.checks, b.checks);
    }

    #[test]
    fn encoding_satisfies_every_check() {
        let c = code();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let msg = random_bits(c.k, &mut rng);
            let cw = c.encode(&msg).unwrap();
            assert_eq!(c.syndrome_weight(&cw), 0);
            assert_eq!(c.extract(&cw), msg);
        }
    }

    #[test]
    fn alist_round_trip() {
        let c = small();
        let text = c.to_alist();
        let d = LdpcCode::from_alist(&text).unwrap();
        assert_eq!(d.checks, c.checks);
        assert_eq!(d.vars, c.vars);
        assert_eq!(d.to_alist(), text);
        assert!(LdpcCode::from_alist("4 2\n2 1\n").is_err());
    }

    #[test]
    fn alist_known_hamming_matrix() {
        // [7,4] Hamming code.
        let text = "7 3\n3 4\n1 1 1 2 2 2 3\n4 4 4\n\
                    1 0 0\n2 0 0\n3 0 0\n1 2 0\n1 3 0\n2 3 0\n1 2 3\n\
                    1 4 5 7\n2 4 6 7\n3 5 6 7\n";
        let c = LdpcCode::from_alist(text).unwrap();
        assert_eq!((c.n, c.m, c.k), (7, 3, 4));
        let mut count = 0;
        for m in 0..16u8 {
            let msg: Vec<u8> = (0..4).map(|i| m >> i & 1).collect();
            let cw = c.encode(&msg).unwrap();
            assert!(c.is_codeword(&cw));
            count += 1;
        }
        assert_eq!(count, 16);
    }

    #[test]
    fn noiseless_input_converges_in_one_iteration() {
        let c = code();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cw = c.encode(&random_bits(c.k, &mut rng)).unwrap();
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 0 { 8.0 } else { -8.0 }).collect();
        for kind in [DecoderKind::BeliefPropagation, DecoderKind::OffsetMinSum(MinSumConfig::default())] {
            let out = Decoder::new(c, kind).decode(&llr, 20, None);
            assert!(out.converged);
            assert_eq!(out.iterations, 1);
            assert_eq!(out.hard, cw);
            for (e, l) in out.extrinsic.iter().zip(&llr) {
                assert!(e * l >= 0.0);
            }
        }
    }

    fn awgn_llr(cw: &[u8], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        cw.iter()
            .map(|&b| {
                let x = if b == 0 { 1.0 } else { -1.0 };
                let n: f64 = StandardNormal.sample(rng);
                2.0 * (x + sigma * n) / (sigma * sigma)
            })
            .collect()
    }

    #[test]
    fn converged_output_is_a_codeword() {
        let c = small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [DecoderKind::BeliefPropagation, DecoderKind::OffsetMinSum(MinSumConfig::default())] {
            for _ in 0..50 {
                let cw = c.encode(&random_bits(c.k, &mut rng)).unwrap();
                let out = Decoder::new(c, kind).decode(&awgn_llr(&cw, 0.85, &mut rng), 30, None);
                if out.converged {
                    assert_eq!(c.syndrome_weight(&out.hard), 0);
                }
            }
        }
    }

    #[test]
    fn min_sum_is_not_better_than_belief_propagation() {
        let c = small();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut e_bp, mut e_ms, mut bits) = (0u64, 0u64, 0u64);
        for _ in 0..400 {
            let cw = c.encode(&random_bits(c.k, &mut rng)).unwrap();
            let llr = awgn_llr(&cw, 0.9, &mut rng);
            let bp = Decoder::new(c, DecoderKind::BeliefPropagation).decode(&llr, 20, None);
            let ms = Decoder::new(c, DecoderKind::OffsetMinSum(MinSumConfig::default())).decode(&llr, 20, None);
            e_bp += bp.hard.iter().zip(&cw).filter(|(a, b)| a != b).count() as u64;
            e_ms += ms.hard.iter().zip(&cw).filter(|(a, b)| a != b).count() as u64;
            bits += c.n as u64;
        }
        // One-sided test on the error-count difference.
        let (p_bp, p_ms) = (e_bp as f64 / bits as f64, e_ms as f64 / bits as f64);
        let se = ((p_bp + p_ms) / bits as f64).sqrt();
        assert!(p_ms - p_bp > -1.96 * se, "bp {p_bp} ms {p_ms}");
        assert!(e_bp > 0, "operating point too clean to compare");
    }

    #[test]
    fn cold_decoding_is_pure_and_warm_start_resumes() {
        let c = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cw = c.encode(&random_bits(c.k, &mut rng)).unwrap();
        let llr = awgn_llr(&cw, 0.95, &mut rng);
        let dec = Decoder::new(c, DecoderKind::BeliefPropagation);
        assert_eq!(dec.decode(&llr, 3, None), dec.decode(&llr, 3, None));
        // Two warm calls of 3 iterations equal one cold call of 6.
        let mut st = DecoderState::new(c);
        let a = dec.decode(&llr, 3, Some(&mut st));
        let b = dec.decode(&llr, 3, Some(&mut st));
        let full = dec.decode(&llr, 6, None);
        if !a.converged {
            assert_eq!(b.hard, full.hard);
            for (x, y) in b.extrinsic.iter().zip(&full.extrinsic) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tanh_rule_matches_two_input_closed_form() {
        let mut out = [0.0; 3];
        tanh_rule(&[1.0, -2.0, 0.5], &mut out);
        let boxplus = |a: f64, b: f64| ((1.0 + (a + b).exp()) / (a.exp() + b.exp())).ln();
        assert!((out[0] - boxplus(-2.0, 0.5)).abs() < 1e-12);
        assert!((out[1] - boxplus(1.0, 0.5)).abs() < 1e-12);
        assert!((out[2] - boxplus(1.0, -2.0)).abs() < 1e-12);
    }

    #[test]
    fn offset_min_sum_check_rule() {
        let cfg = MinSumConfig::default();
        let mut out = [0.0; 3];
        offset_min(&[2.0, -1.5, 3.0], &mut out, cfg);
        assert_eq!(out, [-1.0, 1.5, -1.0]);
        offset_min(&[0.5, 0.5, 3.0], &mut out, cfg);
        assert_eq!(out, [0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn interleaver_round_trip(n in 1usize..500, seed in any::<u64>()) {
            let il = Interleaver::random(n, seed);
            let x: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
            prop_assert_eq!(il.deinterleave(&il.interleave(&x)), x);
            let mut p = il.perm.clone();
            p.sort_unstable();
            prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn linear_combinations_are_codewords(seed in any::<u64>()) {
            let c = small();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = c.encode(&random_bits(c.k, &mut rng)).unwrap();
            let b = c.encode(&random_bits(c.k, &mut rng)).unwrap();
            let s: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            prop_assert!(c.is_codeword(&s));
        }
    }
}

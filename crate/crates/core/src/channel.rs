//! ISI channel model, trellis construction and observation front-ends.
//!
//! Symbols are carried as alphabet indices. For BPSK the alphabet is
//! `[+1, -1]`, so index 0 is `+1` and the complement of an index `i` is
//! `1 - i`. A state packs the last `L` symbol indices as a base-`|D|` number
//! with `d_{k-1}` in the least significant digit, which makes the complement
//! of a state (all symbols flipped) equal to `num_states - 1 - s` for BPSK.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// EPR4 magnetic recording channel.
pub const EPR4_TAPS: [f64; 4] = [0.5, 0.5, -0.5, -0.5];

/// Faster-than-Nyquist impulse response with 12 taps.
pub const FTN_TAPS: [f64; 12] = [
    0.8907, 0.4088, -0.1919, 0.0510, -0.0040, 0.0045, -0.0076, 0.0039, -0.0014, 0.0019, -0.0020,
    0.0014,
];

/// Upper bound on the trellis size accepted by [`build_trellis`].
pub const DEFAULT_STATE_LIMIT: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    pub taps: Vec<f64>,
    pub alphabet: Vec<f64>,
    /// One-sided noise power spectral density; the real noise variance is `n0 / 2`.
    pub n0: f64,
}

impl ChannelSpec {
    pub fn new(taps: Vec<f64>, alphabet: Vec<f64>, n0: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Precondition("channel needs at least one tap".into()));
        }
        if alphabet.len() < 2 {
            return Err(Error::Precondition("alphabet needs at least two symbols".into()));
        }
        if !(n0 >= 0.0) || !n0.is_finite() {
            return Err(Error::Precondition(format!("invalid noise density {n0}")));
        }
        Ok(ChannelSpec { taps, alphabet, n0 })
    }

    pub fn bpsk(taps: &[f64], n0: f64) -> Result<Self> {
        Self::new(taps.to_vec(), vec![1.0, -1.0], n0)
    }

    /// Looks up a named preset (`"epr4"`, `"ftn"`, `"awgn"`).
    pub fn preset(name: &str, n0: f64) -> Result<Self> {
        match name {
            "epr4" => Self::bpsk(&EPR4_TAPS, n0),
            "ftn" => Self::bpsk(&FTN_TAPS, n0),
            "awgn" => Self::bpsk(&[1.0], n0),
            other => Err(Error::Config(format!("unknown channel preset '{other}'"))),
        }
    }

    /// Channel memory `L`.
    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn with_n0(&self, n0: f64) -> Self {
        ChannelSpec { n0, ..self.clone() }
    }

    /// Mean received symbol energy through the taps for equiprobable symbols.
    pub fn symbol_energy(&self) -> f64 {
        let tap_energy: f64 = self.taps.iter().map(|h| h * h).sum();
        let sym_energy: f64 =
            self.alphabet.iter().map(|a| a * a).sum::<f64>() / self.alphabet.len() as f64;
        tap_energy * sym_energy
    }

    pub fn noise_std(&self) -> f64 {
        (self.n0 / 2.0).sqrt()
    }

    /// True if negating every symbol negates every noiseless output, with the
    /// alphabet closed under negation by index complement.
    pub fn is_sign_symmetric(&self) -> bool {
        let m = self.alphabet.len();
        m.is_multiple_of(2)
            && (0..m).all(|i| (self.alphabet[i] + self.alphabet[m - 1 - i]).abs() < 1e-12)
    }
}

/// Trellis of an ISI channel with memory `L`.
#[derive(Clone, Debug)]
pub struct Trellis {
    pub num_states: usize,
    pub num_symbols: usize,
    pub memory: usize,
    next: Vec<usize>,
    output: Vec<f64>,
}

impl Trellis {
    /// Successor state when `d` (symbol index) enters state `s`.
    #[inline]
    pub fn next(&self, s: usize, d: usize) -> usize {
        self.next[s * self.num_symbols + d]
    }

    /// Noiseless channel output of the transition `(s, d)`.
    #[inline]
    pub fn output(&self, s: usize, d: usize) -> f64 {
        self.output[s * self.num_symbols + d]
    }

    pub fn num_transitions(&self) -> usize {
        self.num_states * self.num_symbols
    }

    /// Symbol index `d_{k-l}` stored in state `s` at lag `l` (1-based).
    #[inline]
    pub fn symbol_at(&self, s: usize, lag: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.memory);
        (s / self.num_symbols.pow(lag as u32 - 1)) % self.num_symbols
    }

    /// Newest symbol of a successor state, i.e. the `d_k` that led into it.
    #[inline]
    pub fn newest(&self, next_state: usize) -> usize {
        if self.memory == 0 {
            0
        } else {
            next_state % self.num_symbols
        }
    }

    /// Predecessor of `next_state` whose departing (oldest) symbol is `oldest`.
    #[inline]
    pub fn predecessor(&self, next_state: usize, oldest: usize) -> usize {
        if self.memory == 0 {
            return 0;
        }
        let top = self.num_symbols.pow(self.memory as u32 - 1);
        next_state / self.num_symbols + oldest * top
    }

    /// The state reached after `L` repetitions of symbol index `d`.
    pub fn constant_state(&self, d: usize) -> usize {
        (0..self.memory).fold(0, |s, _| s * self.num_symbols + d)
    }

    /// Complement of a state under symbol-index complement.
    pub fn complement(&self, s: usize) -> usize {
        self.num_states - 1 - s
    }
}

/// Builds the trellis with [`DEFAULT_STATE_LIMIT`].
pub fn build_trellis(spec: &ChannelSpec) -> Result<Trellis> {
    build_trellis_limited(spec, DEFAULT_STATE_LIMIT)
}

pub fn build_trellis_limited(spec: &ChannelSpec, state_limit: usize) -> Result<Trellis> {
    let m = spec.alphabet.len();
    let memory = spec.memory();
    let num_states = (0..memory)
        .try_fold(1usize, |acc, _| acc.checked_mul(m))
        .filter(|&n| n <= state_limit)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "{m}^{memory} states exceed the limit of {state_limit}"
            ))
        })?;
    let mut next = Vec::with_capacity(num_states * m);
    let mut output = Vec::with_capacity(num_states * m);
    for s in 0..num_states {
        for d in 0..m {
            next.push(if memory == 0 { 0 } else { (s * m) % num_states + d });
            let mut x = spec.taps[0] * spec.alphabet[d];
            let mut rest = s;
            for h in &spec.taps[1..] {
                x += h * spec.alphabet[rest % m];
                rest /= m;
            }
            output.push(x);
        }
    }
    Ok(Trellis {
        num_states,
        num_symbols: m,
        memory,
        next,
        output,
    })
}

/// Sends symbol indices `d` through the channel.
///
/// Symbols before index 0 are the preamble (alphabet index 0). A zero `n0`
/// gives the noiseless output.
pub fn transmit(d: &[usize], spec: &ChannelSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transmit_with(d, spec, &mut rng)
}

pub fn transmit_with<R: rand::Rng>(d: &[usize], spec: &ChannelSpec, rng: &mut R) -> Vec<f64> {
    let sigma = spec.noise_std();
    (0..d.len())
        .map(|k| {
            let x: f64 = spec
                .taps
                .iter()
                .enumerate()
                .map(|(l, h)| {
                    let sym = if k >= l { d[k - l] } else { 0 };
                    h * spec.alphabet[sym]
                })
                .sum();
            if sigma > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                x + sigma * n
            } else {
                x
            }
        })
        .collect()
}

/// Matched-filter (Ungerboeck) observation model for real taps.
#[derive(Clone, Debug)]
pub struct UngerboeckModel {
    /// `h'_l = h_{-l}` for `l = -L..=0`, stored from `l = -L` upwards.
    pub prefilter: Vec<f64>,
    /// `g_k` for `k = 0..=L`; `g_{-k} = g_k` for real taps.
    pub autocorr: Vec<f64>,
}

impl UngerboeckModel {
    pub fn new(spec: &ChannelSpec) -> Self {
        let h = &spec.taps;
        let l = h.len() - 1;
        let autocorr = (0..=l)
            .map(|k| (k..=l).map(|i| h[i] * h[i - k]).sum())
            .collect();
        let prefilter = h.iter().rev().copied().collect();
        UngerboeckModel {
            prefilter,
            autocorr,
        }
    }

    /// `g_k` for any integer lag.
    pub fn g(&self, k: isize) -> f64 {
        self.autocorr
            .get(k.unsigned_abs())
            .copied()
            .unwrap_or(0.0)
    }

    /// State-dependent correction `g_0 |d_k|^2 + 2 d_k sum_{l>=1} g_l d_{k-l}`.
    pub fn correction(&self, trellis: &Trellis, alphabet: &[f64], s: usize, d: usize) -> f64 {
        let dk = alphabet[d];
        let mut acc = 0.0;
        for lag in 1..=trellis.memory {
            acc += self.autocorr[lag] * alphabet[trellis.symbol_at(s, lag)];
        }
        self.autocorr[0] * dk * dk + 2.0 * dk * acc
    }
}

/// Applies the matched filter `r'_k = sum_l h_l r_{k+l}` (zero-extended).
pub fn ungerboeck_front_end(r: &[f64], spec: &ChannelSpec) -> (Vec<f64>, UngerboeckModel) {
    let model = UngerboeckModel::new(spec);
    let filtered = (0..r.len())
        .map(|k| {
            spec.taps
                .iter()
                .enumerate()
                .filter_map(|(l, h)| r.get(k + l).map(|rv| h * rv))
                .sum()
        })
        .collect();
    (filtered, model)
}

/// Keeps taps `h_0..=h_{new_memory}` without renormalizing.
pub fn truncate_taps(spec: &ChannelSpec, new_memory: usize) -> Result<ChannelSpec> {
    if new_memory > spec.memory() {
        return Err(Error::Range(format!(
            "cannot truncate memory {} to {new_memory}",
            spec.memory()
        )));
    }
    Ok(ChannelSpec {
        taps: spec.taps[..=new_memory].to_vec(),
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn trellis_sizes() {
        let epr4 = ChannelSpec::preset("epr4", 0.5).unwrap();
        assert_eq!(build_trellis(&epr4).unwrap().num_states, 8);
        let t0 = build_trellis(&ChannelSpec::bpsk(&[1.0], 1.0).unwrap()).unwrap();
        assert_eq!((t0.num_states, t0.num_transitions()), (1, 2));
        let t2 = build_trellis(&ChannelSpec::bpsk(&[1.0, 0.5, 0.2], 1.0).unwrap()).unwrap();
        assert_eq!((t2.num_states, t2.num_transitions()), (4, 8));
    }

    #[test]
    fn trellis_capacity_error() {
        let spec = ChannelSpec::bpsk(&[0.1; 20], 1.0).unwrap();
        assert!(matches!(
            build_trellis_limited(&spec, 1024),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn transitions_are_balanced_and_outputs_match_taps() {
        let spec = ChannelSpec::bpsk(&[0.9, -0.4, 0.3, 0.1], 1.0).unwrap();
        let t = build_trellis(&spec).unwrap();
        let mut incoming = vec![0; t.num_states];
        for s in 0..t.num_states {
            for d in 0..2 {
                let ns = t.next(s, d);
                incoming[ns] += 1;
                assert_eq!(t.newest(ns), d);
                assert_eq!(t.predecessor(ns, t.symbol_at(s, t.memory)), s);
                let mut x = spec.taps[0] * spec.alphabet[d];
                for lag in 1..=t.memory {
                    x += spec.taps[lag] * spec.alphabet[t.symbol_at(s, lag)];
                }
                assert_eq!(x, t.output(s, d));
            }
        }
        assert!(incoming.iter().all(|&c| c == 2));
    }

    #[test]
    fn epr4_all_plus_steady_state_is_zero() {
        let spec = ChannelSpec::preset("epr4", 0.0).unwrap();
        let r = transmit(&[0; 10], &spec, 1);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn identity_channel_is_transparent() {
        let spec = ChannelSpec::bpsk(&[1.0], 0.0).unwrap();
        let d = [0, 1, 1, 0, 1];
        assert_eq!(transmit(&d, &spec, 3), vec![1.0, -1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn noise_variance_matches_n0() {
        let spec = ChannelSpec::bpsk(&[1.0], 0.8).unwrap();
        let d = vec![0usize; 1_000_000];
        let r = transmit(&d, &spec, 11);
        let var = r.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / r.len() as f64;
        assert!((var / 0.4 - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn transmit_is_reproducible() {
        let spec = ChannelSpec::preset("epr4", 0.3).unwrap();
        let d: Vec<usize> = (0..100).map(|k| (k * 7 % 3) % 2).collect();
        assert_eq!(transmit(&d, &spec, 42), transmit(&d, &spec, 42));
        assert_ne!(transmit(&d, &spec, 42), transmit(&d, &spec, 43));
    }

    #[test]
    fn epr4_autocorrelation() {
        let spec = ChannelSpec::preset("epr4", 1.0).unwrap();
        let m = UngerboeckModel::new(&spec);
        assert!((m.g(0) - 1.0).abs() < 1e-15);
        assert!((m.g(3) + 0.25).abs() < 1e-15);
        assert!((m.g(-3) - m.g(3)).abs() < 1e-15);
        assert_eq!(m.g(4), 0.0);
    }

    #[test]
    fn prefilter_equals_direct_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let taps: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = ChannelSpec::bpsk(&taps, 1.0).unwrap();
        let r: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (rp, model) = ungerboeck_front_end(&r, &spec);
        // full convolution of r with the time-reversed taps, then realign
        let hr = &model.prefilter;
        let n = r.len() + hr.len() - 1;
        let mut conv = vec![0.0; n];
        for (i, rv) in r.iter().enumerate() {
            for (j, hv) in hr.iter().enumerate() {
                conv[i + j] += rv * hv;
            }
        }
        let lag = hr.len() - 1;
        for k in 0..r.len() {
            assert!((rp[k] - conv[k + lag]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation() {
        let ftn = ChannelSpec::preset("ftn", 1.0).unwrap();
        assert_eq!(truncate_taps(&ftn, 2).unwrap().taps, vec![0.8907, 0.4088, -0.1919]);
        let epr4 = ChannelSpec::preset("epr4", 1.0).unwrap();
        assert_eq!(truncate_taps(&epr4, 3).unwrap(), epr4);
        assert_eq!(truncate_taps(&epr4, 0).unwrap().taps, vec![0.5]);
        assert!(matches!(truncate_taps(&epr4, 4), Err(Error::Range(_))));
    }

    #[test]
    fn epr4_is_sign_symmetric() {
        let spec = ChannelSpec::preset("epr4", 1.0).unwrap();
        assert!(spec.is_sign_symmetric());
        let t = build_trellis(&spec).unwrap();
        for s in 0..t.num_states {
            for d in 0..2 {
                assert_eq!(t.output(s, d), -t.output(t.complement(s), 1 - d));
            }
        }
    }
}

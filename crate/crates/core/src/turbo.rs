//! Turbo loop exchanging extrinsic information between an equalizer and the
//! LDPC decoder.

use crate::bcjr::{Bcjr, FixedPointFormat, MaxStar, ObservationModel, PriorLut, QuantizedBcjr};
use crate::channel::{transmit_with, ChannelSpec};
use crate::error::{Error, Result};
use crate::ldpc::{Decoder, DecoderKind, DecoderState, Interleaver, LdpcCode};
use crate::lut::EqualizerDesign;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Decoder iterations per turbo iteration; `N_it + 1` entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TurboSchedule {
    pub decoder_iters: Vec<usize>,
    /// Keep check-to-variable messages across turbo iterations.
    pub warm_start: bool,
}

impl TurboSchedule {
    pub fn new(decoder_iters: Vec<usize>, warm_start: bool) -> Result<Self> {
        if decoder_iters.is_empty() || decoder_iters.contains(&0) {
            return Err(Error::Config(format!(
                "decoder iterations {decoder_iters:?} must be a nonempty list of positive counts"
            )));
        }
        Ok(TurboSchedule {
            decoder_iters,
            warm_start,
        })
    }

    /// Number of feedback rounds `N_it`.
    pub fn n_it(&self) -> usize {
        self.decoder_iters.len() - 1
    }

    /// Total decoder iterations.
    pub fn budget(&self) -> usize {
        self.decoder_iters.iter().sum()
    }
}

impl FromStr for TurboSchedule {
    type Err = Error;

    /// Parses `5,5,10` or `(5,5,10)` with warm start enabled.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let iters = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad schedule entry {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        TurboSchedule::new(iters, true)
    }
}

impl fmt::Display for TurboSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.decoder_iters.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Thresholds decoder LLRs into feedback levels. Values on a threshold,
/// including a zero LLR on the center threshold, go to the lower level.
pub fn quantize_feedback(llr: &[f64], thresholds: &[f64]) -> Vec<u16> {
    llr.iter()
        .map(|&v| thresholds.partition_point(|&t| t < v) as u16)
        .collect()
}

/// Prior grid of the fixed-point equalizer: LLRs rounded to this step.
const PRIOR_STEP: f64 = 0.25;
const PRIOR_CLIP: f64 = 16.0;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Equalizer plugged into the turbo loop.
#[derive(Clone, Debug)]
pub enum TurboEqualizer {
    /// LUT equalizer with one design per turbo iteration; later iterations
    /// reuse the last design. `subblock` holds `(N_b, N_o)`.
    Ib {
        designs: Vec<Arc<EqualizerDesign>>,
        subblock: Option<(usize, usize)>,
    },
    /// Floating-point log-MAP or max-log BCJR.
    Float(Bcjr),
    /// Fixed-point max-log BCJR with priors on a uniform LLR grid.
    Quantized { bcjr: QuantizedBcjr, prior: PriorLut },
}

impl TurboEqualizer {
    pub fn ib(designs: Vec<Arc<EqualizerDesign>>, subblock: Option<(usize, usize)>) -> Result<Self> {
        if designs.is_empty() {
            return Err(Error::Config("IB equalizer needs at least one design".into()));
        }
        Ok(TurboEqualizer::Ib { designs, subblock })
    }

    pub fn float(spec: &ChannelSpec, mode: MaxStar) -> Result<Self> {
        Ok(TurboEqualizer::Float(Bcjr::new(spec, ObservationModel::Forney, mode)?))
    }

    pub fn quantized(spec: &ChannelSpec, fmt: FixedPointFormat) -> Result<Self> {
        let levels = (2.0 * PRIOR_CLIP / PRIOR_STEP).round() as usize + 1;
        let rows: Vec<[f64; 2]> = (0..levels)
            .map(|i| {
                let l = -PRIOR_CLIP + i as f64 * PRIOR_STEP;
                [-softplus(-l), -softplus(l)]
            })
            .collect();
        Ok(TurboEqualizer::Quantized {
            bcjr: QuantizedBcjr::new(spec, fmt)?,
            prior: PriorLut::from_log_probs(&rows, spec.n0, &fmt),
        })
    }

    /// Extrinsic LLRs of the data symbols plus the feedback levels used.
    ///
    /// `prior` holds decoder extrinsic LLRs in channel order (zeros when
    /// none are available yet).
    pub fn equalize(&self, iteration: usize, r: &[f64], prior: &[f64], tail: usize) -> Result<EqualizerRun> {
        match self {
            TurboEqualizer::Ib { designs, subblock } => {
                let d = &designs[iteration.min(designs.len() - 1)];
                let t_r = d.quantize_channel(r);
                let t_d = if iteration == 0 {
                    vec![d.init.feedback_neutral as u16; prior.len()]
                } else {
                    d.quantize_feedback(prior)
                };
                let out = match subblock {
                    Some((n_b, n_o)) => d.run_subblocks(&t_r, &t_d, tail, *n_b, *n_o)?,
                    None => d.run(&t_r, &t_d, tail)?,
                };
                Ok(EqualizerRun {
                    llr: out.llr,
                    feedback_levels: Some((t_d, d.feedback_thresholds.len() + 1)),
                })
            }
            TurboEqualizer::Float(b) => Ok(EqualizerRun {
                llr: b.extrinsic(r, prior, tail)?,
                feedback_levels: None,
            }),
            TurboEqualizer::Quantized { bcjr, prior: lut } => {
                let rq = bcjr.fmt.quantize(r);
                let t_d: Vec<usize> = prior
                    .iter()
                    .map(|&l| ((l.clamp(-PRIOR_CLIP, PRIOR_CLIP) + PRIOR_CLIP) / PRIOR_STEP).round() as usize)
                    .collect();
                let llr = bcjr.equalize(&rq, &t_d, lut, tail)?;
                Ok(EqualizerRun {
                    llr: bcjr.to_real(&llr),
                    feedback_levels: None,
                })
            }
        }
    }
}

/// One equalizer activation.
#[derive(Clone, Debug)]
pub struct EqualizerRun {
    pub llr: Vec<f64>,
    /// Quantized feedback and its alphabet size, for LUT equalizers.
    pub feedback_levels: Option<(Vec<u16>, usize)>,
}

/// Code, interleaver and decoder shared by all frames.
#[derive(Clone, Copy, Debug)]
pub struct TurboLink<'a> {
    pub code: &'a LdpcCode,
    pub interleaver: &'a Interleaver,
    pub decoder: DecoderKind,
    /// Known `+1` symbols appended after the codeword.
    pub tail: usize,
}

/// Per turbo iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTelemetry {
    pub iteration: usize,
    /// Estimate of `I(D;T_d)` of the feedback entering this equalizer run.
    pub feedback_info: Option<f64>,
    /// Estimate of the mutual information carried by the equalizer LLRs.
    pub equalizer_info: Option<f64>,
    pub decoder_iterations: usize,
    pub converged: bool,
    /// Code bit errors after this decoder run.
    pub bit_errors: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurboOutput {
    pub codeword: Vec<u8>,
    pub message: Vec<u8>,
    pub converged: bool,
    pub telemetry: Vec<IterationTelemetry>,
}

/// Averaged `1 - E[log2(1 + exp(-x L))]` of LLRs against known bits.
pub fn llr_information(llr: &[f64], bits: &[u8]) -> f64 {
    if llr.is_empty() {
        return 0.0;
    }
    let loss: f64 = llr
        .iter()
        .zip(bits)
        .map(|(&l, &b)| {
            let xl = if b == 0 { l } else { -l };
            softplus(-xl) * crate::LOG2_E
        })
        .sum();
    1.0 - loss / llr.len() as f64
}

/// Plug-in mutual information between bits and discrete levels.
pub fn histogram_information(levels: &[u16], bits: &[u8], num_levels: usize) -> f64 {
    let mut counts = vec![0.0; num_levels * 2];
    for (&t, &b) in levels.iter().zip(bits) {
        counts[t as usize * 2 + b as usize] += 1.0;
    }
    crate::ib::JointPmf::normalized(2, num_levels, counts)
        .map(|p| crate::ib::mutual_information(&p))
        .unwrap_or(0.0)
}

/// Encodes, interleaves and transmits one frame; returns the codeword and
/// the observations including the tail.
pub fn transmit_frame<R: rand::Rng>(
    msg: &[u8],
    link: &TurboLink,
    spec: &ChannelSpec,
    rng: &mut R,
) -> Result<(Vec<u8>, Vec<f64>)> {
    let cw = link.code.encode(msg)?;
    let mut d: Vec<usize> = link.interleaver.interleave(&cw).iter().map(|&b| b as usize).collect();
    d.extend(std::iter::repeat_n(0, link.tail));
    Ok((cw, transmit_with(&d, spec, rng)))
}

/// Runs the turbo schedule on the observations `r` of one frame.
///
/// `truth` (the transmitted codeword) only feeds the telemetry.
pub fn turbo_run(
    r: &[f64],
    eq: &TurboEqualizer,
    link: &TurboLink,
    schedule: &TurboSchedule,
    truth: Option<&[u8]>,
) -> Result<TurboOutput> {
    let n = link.code.n;
    if r.len() != n + link.tail || link.interleaver.len() != n {
        return Err(Error::Precondition(format!(
            "frame of {} observations does not match code length {n} plus tail {}",
            r.len(),
            link.tail
        )));
    }
    let truth_channel = truth.map(|c| link.interleaver.interleave(c));
    let decoder = Decoder::new(link.code, link.decoder);
    let mut state = DecoderState::new(link.code);
    let mut prior = vec![0.0; n];
    let mut telemetry = Vec::with_capacity(schedule.decoder_iters.len());
    let mut last = None;
    for (i, &iters) in schedule.decoder_iters.iter().enumerate() {
        let run = eq.equalize(i, r, &prior, link.tail)?;
        let feedback_info = truth_channel.as_ref().map(|bits| match (&run.feedback_levels, i) {
            (_, 0) => 0.0,
            (Some((t_d, nl)), _) => histogram_information(t_d, bits, *nl),
            (None, _) => llr_information(&prior, bits),
        });
        let equalizer_info = truth_channel.as_ref().map(|bits| llr_information(&run.llr, bits));
        let input = link.interleaver.deinterleave(&run.llr);
        if !schedule.warm_start {
            state = DecoderState::new(link.code);
        }
        let out = decoder.decode(&input, iters, Some(&mut state));
        telemetry.push(IterationTelemetry {
            iteration: i,
            feedback_info,
            equalizer_info,
            decoder_iterations: out.iterations,
            converged: out.converged,
            bit_errors: truth.map(|c| c.iter().zip(&out.hard).filter(|(a, b)| a != b).count()),
        });
        prior = link.interleaver.interleave(&out.extrinsic);
        let converged = out.converged;
        last = Some(out);
        if converged {
            break;
        }
    }
    let out = last.expect("schedule is nonempty");
    Ok(TurboOutput {
        message: link.code.extract(&out.hard),
        codeword: out.hard,
        converged: out.converged,
        telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;
    use crate::ldpc::MinSumConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn code() -> &'static LdpcCode {
        static C: OnceLock<LdpcCode> = OnceLock::new();
        C.get_or_init(|| LdpcCode::peg(512, 3, 6, 2).unwrap())
    }

    fn frame(spec: &ChannelSpec, link: &TurboLink, seed: u64) -> (Vec<u8>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msg: Vec<u8> = (0..link.code.k).map(|_| rng.random_range(0..2)).collect();
        transmit_frame(&msg, link, spec, &mut rng).unwrap()
    }

    #[test]
    fn schedule_parsing_and_budget() {
        let s: TurboSchedule = "(5,5,10)".parse().unwrap();
        assert_eq!(s.n_it(), 2);
        assert_eq!(s.budget(), 20);
        assert_eq!(s.to_string(), "(5,5,10)");
        assert_eq!("20".parse::<TurboSchedule>().unwrap().n_it(), 0);
        assert!("".parse::<TurboSchedule>().is_err());
        assert!("5,0".parse::<TurboSchedule>().is_err());
    }

    #[test]
    fn feedback_quantizer_ties_and_symmetry() {
        let fb = crate::lut::model_feedback_pmf(0.5, 3).unwrap();
        assert_eq!(fb.levels(), 8);
        let z = quantize_feedback(&[0.0], &fb.thresholds);
        assert_eq!(z[0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..1000).map(|_| rng.random_range(-10.0..10.0)).collect();
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let a = quantize_feedback(&v, &fb.thresholds);
        let b = quantize_feedback(&neg, &fb.thresholds);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, 7 - *y);
        }
    }

    #[test]
    fn information_estimators() {
        let bits = [0u8, 1, 0, 1];
        assert!((llr_information(&[40.0, -40.0, 40.0, -40.0], &bits) - 1.0).abs() < 1e-9);
        assert!(llr_information(&[0.0; 4], &bits).abs() < 1e-12);
        assert!((histogram_information(&[0, 1, 0, 1], &bits, 2) - 1.0).abs() < 1e-12);
        assert!(histogram_information(&[0, 0, 1, 1], &bits, 2).abs() < 1e-12);
    }

    #[test]
    fn noiseless_frame_decodes_immediately() {
        let spec = ChannelSpec::preset("epr4", 0.0).unwrap();
        let c = code();
        let il = Interleaver::random(c.n, 3);
        let link = TurboLink {
            code: c,
            interleaver: &il,
            decoder: DecoderKind::BeliefPropagation,
            tail: 3,
        };
        let (cw, r) = frame(&spec.with_n0(1e-9), &link, 4);
        let eq = TurboEqualizer::float(&spec.with_n0(0.05), MaxStar::Exact).unwrap();
        let sched: TurboSchedule = "5,5,10".parse().unwrap();
        let out = turbo_run(&r, &eq, &link, &sched, Some(&cw)).unwrap();
        assert!(out.converged);
        assert_eq!(out.codeword, cw);
        assert_eq!(out.telemetry.len(), 1);
        assert_eq!(out.telemetry[0].bit_errors, Some(0));
    }

    #[test]
    fn zero_iterations_equal_equalize_then_decode() {
        let spec = ChannelSpec::preset("epr4", 0.4).unwrap();
        let c = code();
        let il = Interleaver::random(c.n, 8);
        let link = TurboLink {
            code: c,
            interleaver: &il,
            decoder: DecoderKind::OffsetMinSum(MinSumConfig::default()),
            tail: 3,
        };
        let eq = TurboEqualizer::float(&spec, MaxStar::Approx).unwrap();
        let sched = TurboSchedule::new(vec![12], true).unwrap();
        for seed in 0..5 {
            let (cw, r) = frame(&spec, &link, seed);
            let out = turbo_run(&r, &eq, &link, &sched, Some(&cw)).unwrap();
            let llr = eq.equalize(0, &r, &vec![0.0; c.n], 3).unwrap().llr;
            let dec = Decoder::new(c, link.decoder).decode(&il.deinterleave(&llr), 12, None);
            assert_eq!(out.codeword, dec.hard);
            assert_eq!(out.converged, dec.converged);
        }
    }

    #[test]
    fn turbo_run_is_reproducible_and_telemetry_complete() {
        let spec = ChannelSpec::preset("epr4", 0.55).unwrap();
        let c = code();
        let il = Interleaver::random(c.n, 8);
        let link = TurboLink {
            code: c,
            interleaver: &il,
            decoder: DecoderKind::BeliefPropagation,
            tail: 3,
        };
        let fmt = FixedPointFormat::for_channel(&spec, 7, 11).unwrap();
        let sched: TurboSchedule = "2,2,2".parse().unwrap();
        for eq in [
            TurboEqualizer::float(&spec, MaxStar::Exact).unwrap(),
            TurboEqualizer::quantized(&spec, fmt).unwrap(),
        ] {
            let (cw, r) = frame(&spec, &link, 17);
            let a = turbo_run(&r, &eq, &link, &sched, Some(&cw)).unwrap();
            let b = turbo_run(&r, &eq, &link, &sched, Some(&cw)).unwrap();
            assert_eq!(a, b);
            for t in &a.telemetry {
                assert!(t.feedback_info.is_some() && t.equalizer_info.is_some());
            }
            assert_eq!(a.telemetry[0].feedback_info, Some(0.0));
            if a.telemetry.len() > 1 {
                assert!(a.telemetry[1].feedback_info.unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn quantized_equalizer_tracks_float_max_log() {
        let spec = ChannelSpec::preset("epr4", 0.5).unwrap();
        let fmt = FixedPointFormat::for_channel(&spec, 7, 16).unwrap();
        let q = TurboEqualizer::quantized(&spec, fmt).unwrap();
        let f = TurboEqualizer::float(&spec, MaxStar::Approx).unwrap();
        let c = code();
        let il = Interleaver::random(c.n, 1);
        let link = TurboLink {
            code: c,
            interleaver: &il,
            decoder: DecoderKind::BeliefPropagation,
            tail: 3,
        };
        let (cw, r) = frame(&spec, &link, 2);
        let bits = il.interleave(&cw);
        let zero = vec![0.0; c.n];
        let lq = q.equalize(0, &r, &zero, 3).unwrap().llr;
        let lf = f.equalize(0, &r, &zero, 3).unwrap().llr;
        let (iq, i_f) = (llr_information(&lq, &bits), llr_information(&lf, &bits));
        assert!((iq - i_f).abs() < 0.05, "quantized {iq} float {i_f}");
    }

    proptest! {
        #[test]
        fn feedback_levels_stay_in_range(v in prop::collection::vec(-50.0f64..50.0, 1..64)) {
            static FB: OnceLock<crate::lut::FeedbackModel> = OnceLock::new();
            let fb = FB.get_or_init(|| crate::lut::model_feedback_pmf(0.8, 3).unwrap());
            for t in quantize_feedback(&v, &fb.thresholds) {
                prop_assert!(t < 8);
            }
        }
    }
}

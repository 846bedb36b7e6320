//! Run configuration, design pipeline driver, Monte Carlo sweeps and reports.

use crate::bcjr::{FixedPointFormat, MaxStar, ObservationModel};
use crate::channel::{build_trellis, ChannelSpec};
use crate::error::{Error, Result};
use crate::hw::{self, CostModel, CostReport, DnfOptions, GateCostTable, Realization};
use crate::ldpc::{DecoderKind, Interleaver, LdpcCode, MinSumConfig};
use crate::lut::{design_equalizer, DesignOptions, DesignReport, EqualizerDesign, Structure, Widths};
use crate::turbo::{transmit_frame, turbo_run, TurboEqualizer, TurboLink, TurboSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualizerKind {
    Ib,
    ConventionalExact,
    ConventionalMaxlog,
    ConventionalQuantized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderChoice {
    Bp,
    MinSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub preset: String,
}

fn default_structure() -> String {
    "RRR".into()
}
fn d_w_r() -> u32 {
    5
}
fn d_w_d() -> u32 {
    3
}
fn d_w_alpha() -> Vec<u32> {
    vec![8]
}
fn d_w_e() -> u32 {
    4
}
fn d_i_design() -> Vec<f64> {
    vec![0.0]
}
fn d_true() -> bool {
    true
}
fn d_recursions() -> usize {
    30
}
fn d_fixed_w_r() -> u32 {
    7
}
fn d_fixed_w_entry() -> u32 {
    11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualizerConfig {
    pub kind: EqualizerKind,
    #[serde(default = "default_structure")]
    pub structure: String,
    #[serde(default = "d_w_r")]
    pub w_r: u32,
    #[serde(default = "d_w_d")]
    pub w_d: u32,
    /// Forward widths per turbo iteration; one entry applies to all.
    #[serde(default = "d_w_alpha")]
    pub w_alpha: Vec<u32>,
    /// Backward widths; defaults to the forward widths.
    #[serde(default)]
    pub w_beta: Option<Vec<u32>>,
    #[serde(default = "d_w_e")]
    pub w_e: u32,
    /// Feedback information the design of each turbo iteration assumes.
    #[serde(default = "d_i_design")]
    pub i_design: Vec<f64>,
    /// Design every LUT at this E_b/N_0; absent means at each sweep point.
    #[serde(default)]
    pub design_snr_db: Option<f64>,
    #[serde(default)]
    pub design_dir: Option<PathBuf>,
    #[serde(default = "d_true")]
    pub design_if_missing: bool,
    #[serde(default = "d_recursions")]
    pub recursions: usize,
    #[serde(default = "d_true")]
    pub symmetric: bool,
    /// `[N_b, N_o]` for sub-block equalization.
    #[serde(default)]
    pub subblock: Option<[usize; 2]>,
    /// Channel width of the fixed-point arithmetic equalizer.
    #[serde(default = "d_fixed_w_r")]
    pub fixed_w_r: u32,
    /// Bits per state-metric entry of the fixed-point equalizer.
    #[serde(default = "d_fixed_w_entry")]
    pub fixed_w_entry: u32,
}

fn d_iters() -> Vec<usize> {
    vec![20]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "d_iters")]
    pub decoder_iters: Vec<usize>,
    #[serde(default = "d_true")]
    pub warm_start: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            decoder_iters: d_iters(),
            warm_start: true,
        }
    }
}

fn d_n() -> usize {
    2048
}
fn d_dv() -> usize {
    3
}
fn d_dc() -> usize {
    6
}
fn d_one() -> u64 {
    1
}
fn d_decoder() -> DecoderChoice {
    DecoderChoice::Bp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_dv")]
    pub dv: usize,
    #[serde(default = "d_dc")]
    pub dc: usize,
    #[serde(default = "d_one")]
    pub seed: u64,
    /// Parity-check matrix in alist format instead of the generated code.
    #[serde(default)]
    pub alist: Option<PathBuf>,
    #[serde(default = "d_decoder")]
    pub decoder: DecoderChoice,
    #[serde(default = "d_one")]
    pub interleaver_seed: u64,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            n: d_n(),
            dv: d_dv(),
            dc: d_dc(),
            seed: 1,
            alist: None,
            decoder: DecoderChoice::Bp,
            interleaver_seed: 1,
        }
    }
}

fn d_min_fe() -> u64 {
    200
}
fn d_max_frames() -> u64 {
    100_000
}
fn d_batch() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// E_b/N_0 points in dB.
    pub snr_db: Vec<f64>,
    #[serde(default = "d_min_fe")]
    pub min_frame_errors: u64,
    #[serde(default = "d_max_frames")]
    pub max_frames: u64,
    /// Frames simulated between stopping-rule checks.
    #[serde(default = "d_batch")]
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_one")]
    pub seed: u64,
    pub channel: ChannelConfig,
    pub equalizer: EqualizerConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub code: CodeConfig,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.equalizer;
        if self.sim.snr_db.is_empty() || self.sim.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db needs at least one finite value".into()));
        }
        if self.sim.min_frame_errors == 0 || self.sim.max_frames == 0 || self.sim.batch == 0 {
            return Err(Error::Config("stopping rule and batch size must be positive".into()));
        }
        let sched = self.schedule()?;
        let iters = sched.decoder_iters.len();
        for (name, len) in [
            ("w_alpha", e.w_alpha.len()),
            ("w_beta", e.w_beta.as_ref().map_or(1, Vec::len)),
            ("i_design", e.i_design.len()),
        ] {
            if len != 1 && len != iters {
                return Err(Error::Config(format!(
                    "{name} has {len} entries; expected 1 or {iters}"
                )));
            }
        }
        if let Some([n_b, _]) = e.subblock {
            if n_b == 0 {
                return Err(Error::Config("sub-block length must be positive".into()));
            }
        }
        e.structure.parse::<Structure>()?;
        for i in 0..iters {
            self.widths(i)?;
        }
        ChannelSpec::preset(&self.channel.preset, 1.0)?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<TurboSchedule> {
        TurboSchedule::new(self.schedule.decoder_iters.clone(), self.schedule.warm_start)
    }

    fn pick<T: Copy>(v: &[T], i: usize) -> T {
        v[i.min(v.len() - 1)]
    }

    /// LUT widths of turbo iteration `i`.
    pub fn widths(&self, i: usize) -> Result<Widths> {
        let e = &self.equalizer;
        let wa = Self::pick(&e.w_alpha, i);
        let wb = e.w_beta.as_ref().map_or(wa, |v| Self::pick(v, i));
        Widths::new(e.w_r, e.w_d, wa, wb, e.w_e)
    }

    pub fn i_design(&self, i: usize) -> f64 {
        Self::pick(&self.equalizer.i_design, i)
    }

    /// Short content hash of the canonical configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn decoder_kind(&self) -> DecoderKind {
        match self.code.decoder {
            DecoderChoice::Bp => DecoderKind::BeliefPropagation,
            DecoderChoice::MinSum => DecoderKind::OffsetMinSum(MinSumConfig::default()),
        }
    }
}

/// Code and interleaver of a configuration, cached per process.
pub fn load_code(cfg: &CodeConfig) -> Result<Arc<LdpcCode>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<LdpcCode>>>> = OnceLock::new();
    let key = match &cfg.alist {
        Some(p) => format!("alist:{}", p.display()),
        None => format!("peg:{}:{}:{}:{}", cfg.n, cfg.dv, cfg.dc, cfg.seed),
    };
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("code cache").get(&key) {
        return Ok(c.clone());
    }
    let code = Arc::new(match &cfg.alist {
        Some(p) => LdpcCode::read_alist(p)?,
        None => LdpcCode::peg(cfg.n, cfg.dv, cfg.dc, cfg.seed)?,
    });
    cache.lock().expect("code cache").insert(key, code.clone());
    Ok(code)
}

/// `N_0 = E_s / (R 10^{snr/10})` with `E_s` the mean energy through the taps.
pub fn n0_for_snr(spec: &ChannelSpec, rate: f64, snr_db: f64) -> f64 {
    spec.symbol_energy() / (rate * 10f64.powf(snr_db / 10.0))
}

/// One designed equalizer per turbo iteration.
#[derive(Clone, Debug)]
pub struct DesignSet {
    pub designs: Vec<Arc<EqualizerDesign>>,
    pub reports: Vec<Option<DesignReport>>,
    pub paths: Vec<Option<PathBuf>>,
}

fn design_key(cfg: &RunConfig, i: usize, snr_db: f64) -> Result<String> {
    let w = cfg.widths(i)?;
    Ok(format!(
        "{}_{}_w{}-{}-{}-{}-{}_i{:.3}_snr{:.2}_it{}_r{}_s{}{}",
        cfg.channel.preset,
        cfg.equalizer.structure,
        w.w_r,
        w.w_d,
        w.w_alpha,
        w.w_beta,
        w.w_e,
        cfg.i_design(i),
        snr_db,
        i,
        cfg.equalizer.recursions,
        cfg.seed,
        if cfg.equalizer.symmetric { "" } else { "_asym" }
    ))
}

type DesignCache = Mutex<HashMap<String, (Arc<EqualizerDesign>, Option<DesignReport>)>>;

fn design_cache() -> &'static DesignCache {
    static CACHE: OnceLock<DesignCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Channel quantizer, forward, backward and final designs for every turbo
/// iteration at `snr_db`. Bundles, manifests and information traces go to
/// the design directory when one is configured; existing bundles are reused.
pub fn design_all_at(cfg: &RunConfig, snr_db: f64) -> Result<DesignSet> {
    let code = load_code(&cfg.code)?;
    let base = ChannelSpec::preset(&cfg.channel.preset, 1.0)?;
    let spec = base.with_n0(n0_for_snr(&base, code.rate(), snr_db));
    let structure: Structure = cfg.equalizer.structure.parse()?;
    let mut set = DesignSet {
        designs: Vec::new(),
        reports: Vec::new(),
        paths: Vec::new(),
    };
    for i in 0..cfg.schedule.decoder_iters.len() {
        let key = design_key(cfg, i, snr_db)?;
        let path = cfg.equalizer.design_dir.as_ref().map(|d| d.join(format!("{key}.ibeq")));
        let cached = design_cache().lock().expect("design cache").get(&key).cloned();
        let (design, report) = match (cached, &path) {
            (Some(hit), _) => hit,
            (None, Some(p)) if p.exists() => (Arc::new(EqualizerDesign::read_bundle(std::fs::File::open(p)?)?), None),
            (None, _) => {
                if !cfg.equalizer.design_if_missing {
                    return Err(Error::Config(format!("design bundle {key} is missing")));
                }
                let opts = DesignOptions {
                    recursions: cfg.equalizer.recursions,
                    seed: cfg.seed,
                    symmetric: cfg.equalizer.symmetric,
                    channel_name: cfg.channel.preset.clone(),
                    iteration: i as u32,
                    ..Default::default()
                };
                let (d, rep) = design_equalizer(&spec, &cfg.widths(i)?, structure, cfg.i_design(i), &opts)?;
                if let Some(p) = &path {
                    if let Some(dir) = p.parent() {
                        std::fs::create_dir_all(dir)?;
                    }
                    d.write_bundle(std::io::BufWriter::new(std::fs::File::create(p)?))?;
                    std::fs::write(p.with_extension("manifest.txt"), d.manifest())?;
                    std::fs::write(p.with_extension("trace.txt"), rep.to_text())?;
                }
                (Arc::new(d), Some(rep))
            }
        };
        design_cache()
            .lock()
            .expect("design cache")
            .insert(key, (design.clone(), report.clone()));
        set.designs.push(design);
        set.reports.push(report);
        set.paths.push(path);
    }
    Ok(set)
}

/// Designs for the configured design point (or the first sweep point).
pub fn design_all(cfg: &RunConfig) -> Result<DesignSet> {
    design_all_at(cfg, cfg.equalizer.design_snr_db.unwrap_or(cfg.sim.snr_db[0]))
}

/// Outcome of one SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    /// Standard error of the per-frame bit error rate.
    pub ber_stderr: f64,
    /// Mean `I(D;T_d)` estimate per turbo iteration, `;`-separated.
    pub feedback_info: String,
    pub elapsed: f64,
    pub config_hash: String,
}

impl ResultRow {
    /// Equality of everything except wall-clock time.
    pub fn same_outcome(&self, other: &ResultRow) -> bool {
        ResultRow {
            elapsed: 0.0,
            ..self.clone()
        } == ResultRow {
            elapsed: 0.0,
            ..other.clone()
        }
    }
}

/// Per-frame random stream derived from `(seed, point, frame)`.
fn frame_rng(seed: u64, point: usize, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) ^ frame);
    rng
}

struct FrameOutcome {
    bit_errors: u64,
    sq_ber: f64,
    feedback: Vec<Option<f64>>,
}

fn build_equalizer(cfg: &RunConfig, spec: &ChannelSpec, snr_db: f64) -> Result<TurboEqualizer> {
    match cfg.equalizer.kind {
        EqualizerKind::Ib => {
            let set = match cfg.equalizer.design_snr_db {
                Some(_) => design_all(cfg)?,
                None => design_all_at(cfg, snr_db)?,
            };
            TurboEqualizer::ib(set.designs, cfg.equalizer.subblock.map(|[b, o]| (b, o)))
        }
        EqualizerKind::ConventionalExact => TurboEqualizer::float(spec, MaxStar::Exact),
        EqualizerKind::ConventionalMaxlog => TurboEqualizer::float(spec, MaxStar::Approx),
        EqualizerKind::ConventionalQuantized => {
            let fmt = FixedPointFormat::for_channel(spec, cfg.equalizer.fixed_w_r, cfg.equalizer.fixed_w_entry)?;
            TurboEqualizer::quantized(spec, fmt)
        }
    }
}

/// Monte Carlo BER/FER per SNR point until the stopping rule holds.
/// Frames run in parallel batches and are reduced in frame order, so the
/// result depends only on the configuration.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let code = load_code(&cfg.code)?;
    let il = Interleaver::random(code.n, cfg.code.interleaver_seed);
    let base = ChannelSpec::preset(&cfg.channel.preset, 1.0)?;
    let sched = cfg.schedule()?;
    let link = TurboLink {
        code: &code,
        interleaver: &il,
        decoder: cfg.decoder_kind(),
        tail: base.memory(),
    };
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for (point, &snr) in cfg.sim.snr_db.iter().enumerate() {
        let start = Instant::now();
        let spec = base.with_n0(n0_for_snr(&base, code.rate(), snr));
        let eq = build_equalizer(cfg, &spec, snr)?;
        let (mut frames, mut bit_errors, mut frame_errors) = (0u64, 0u64, 0u64);
        let mut sq = 0.0;
        let slots = sched.decoder_iters.len();
        let mut fb_sum = vec![0.0; slots];
        let mut fb_count = vec![0u64; slots];
        while frame_errors < cfg.sim.min_frame_errors && frames < cfg.sim.max_frames {
            let batch = (cfg.sim.batch as u64).min(cfg.sim.max_frames - frames);
            let outcomes: Vec<Result<FrameOutcome>> = (frames..frames + batch)
                .into_par_iter()
                .map(|f| {
                    let mut rng = frame_rng(cfg.seed, point, f);
                    let msg: Vec<u8> = (0..code.k).map(|_| rng.random_range(0..2)).collect();
                    let (cw, r) = transmit_frame(&msg, &link, &spec, &mut rng)?;
                    let out = turbo_run(&r, &eq, &link, &sched, Some(&cw))?;
                    let errs = out.message.iter().zip(&msg).filter(|(a, b)| a != b).count() as u64;
                    let mut feedback = vec![None; slots];
                    for t in &out.telemetry {
                        feedback[t.iteration] = t.feedback_info;
                    }
                    Ok(FrameOutcome {
                        bit_errors: errs,
                        sq_ber: (errs as f64 / code.k as f64).powi(2),
                        feedback,
                    })
                })
                .collect();
            for o in outcomes {
                let o = o?;
                frames += 1;
                bit_errors += o.bit_errors;
                frame_errors += u64::from(o.bit_errors > 0);
                sq += o.sq_ber;
                for (i, v) in o.feedback.iter().enumerate() {
                    if let Some(v) = v {
                        fb_sum[i] += v;
                        fb_count[i] += 1;
                    }
                }
            }
        }
        let ber = bit_errors as f64 / (frames * code.k as u64) as f64;
        let var = (sq / frames as f64 - ber * ber).max(0.0);
        let feedback_info = fb_sum
            .iter()
            .zip(&fb_count)
            .map(|(s, &c)| if c > 0 { format!("{:.4}", s / c as f64) } else { "nan".into() })
            .collect::<Vec<_>>()
            .join(";");
        rows.push(ResultRow {
            snr_db: snr,
            frames,
            bit_errors,
            frame_errors,
            ber,
            fer: frame_errors as f64 / frames as f64,
            ber_stderr: (var / frames as f64).sqrt(),
            feedback_info,
            elapsed: start.elapsed().as_secs_f64(),
            config_hash: hash.clone(),
        });
    }
    Ok(rows)
}

pub fn write_results_csv<W: std::io::Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

/// E_b/N_0 where the BER curve crosses `target`, interpolating `log10 BER`
/// linearly between the first bracketing pair of points.
pub fn snr_at_ber(rows: &[ResultRow], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.snr_db, r.ber)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lt = target.log10();
    for w in pts.windows(2) {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 <= target {
            if b1 <= 0.0 {
                return (b0 == target).then_some(s0).or(Some(s0 + (s1 - s0) * 0.5));
            }
            let (l0, l1) = (b0.log10(), b1.log10());
            if (l0 - l1).abs() < 1e-15 {
                return Some(s0);
            }
            return Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1));
        }
    }
    None
}

/// One-sided Clopper-Pearson upper bound on a binomial rate after
/// `failures` events in `trials`, holding with probability `1 - alpha`.
pub fn binomial_upper(failures: u64, trials: u64, alpha: f64) -> f64 {
    if trials == 0 || failures >= trials {
        return 1.0;
    }
    let cdf = |p: f64| {
        // P(X <= failures) summed term by term from P(X = 0).
        let mut term = (trials as f64) * (1.0 - p).ln();
        let mut acc = term.exp();
        for i in 0..failures {
            term += ((trials - i) as f64 / (i + 1) as f64).ln() + (p / (1.0 - p)).ln();
            acc += term.exp();
        }
        acc
    };
    let (mut lo, mut hi) = (failures as f64 / trials as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// One row of the hardware report.
#[derive(Clone, Debug, PartialEq)]
pub struct HwRow {
    pub equalizer: String,
    pub realization: String,
    pub fallback: bool,
    pub report: CostReport,
}

pub const HW_CSV_HEADER: &str = "equalizer,realization,fallback";

/// A priced hardware configuration before sub-block selection.
#[derive(Clone, Debug, PartialEq)]
pub struct HwModel {
    pub equalizer: String,
    pub realization: String,
    pub fallback: bool,
    pub model: CostModel,
}

/// Cost models of the configured LUT equalizer in every realization and of
/// the arithmetic reference with as many turbo iterations.
pub fn hw_models(cfg: &RunConfig) -> Result<Vec<HwModel>> {
    let g = GateCostTable::default();
    let mut out = Vec::new();
    let iterations = cfg.schedule.decoder_iters.len();
    let base = ChannelSpec::preset(&cfg.channel.preset, 1.0)?;
    if cfg.equalizer.kind == EqualizerKind::Ib {
        let set = design_all(cfg)?;
        let refs: Vec<&EqualizerDesign> = set.designs.iter().map(|d| d.as_ref()).collect();
        for r in Realization::ALL {
            let (model, fallback) = hw::ib_cost_model(&refs, r, &g, &DnfOptions::default())?;
            out.push(HwModel {
                equalizer: "ib".into(),
                realization: r.name().into(),
                fallback,
                model,
            });
        }
    }
    let code = load_code(&cfg.code)?;
    let snr = cfg.equalizer.design_snr_db.unwrap_or(cfg.sim.snr_db[0]);
    let spec = base.with_n0(n0_for_snr(&base, code.rate(), snr));
    let trellis = build_trellis(&spec)?;
    let fmt = FixedPointFormat::for_channel(&spec, cfg.equalizer.fixed_w_r, cfg.equalizer.fixed_w_entry)?;
    out.push(HwModel {
        equalizer: "conventional".into(),
        realization: "arithmetic".into(),
        fallback: false,
        model: hw::arithmetic_cost_model(&trellis, &fmt, ObservationModel::Ungerboeck, iterations, &g),
    });
    Ok(out)
}

/// Every model at its optimal sub-block length.
pub fn report_hw(cfg: &RunConfig, n_o: usize) -> Result<Vec<HwRow>> {
    hw_models(cfg)?
        .into_iter()
        .map(|m| {
            Ok(HwRow {
                report: hw::optimize_subblock(&m.model, n_o)?,
                equalizer: m.equalizer,
                realization: m.realization,
                fallback: m.fallback,
            })
        })
        .collect()
}

/// Every model at every even sub-block length of the search range.
pub fn scan_hw(cfg: &RunConfig, n_o: usize) -> Result<Vec<HwRow>> {
    let mut rows = Vec::new();
    for m in hw_models(cfg)? {
        for n_b in (hw::SUBBLOCK_RANGE.0..=hw::SUBBLOCK_RANGE.1).step_by(2) {
            rows.push(HwRow {
                equalizer: m.equalizer.clone(),
                realization: m.realization.clone(),
                fallback: m.fallback,
                report: hw::pipeline_memory_cost(&m.model, n_b, n_o)?,
            });
        }
    }
    Ok(rows)
}

pub fn hw_csv(rows: &[HwRow]) -> String {
    let mut s = format!("{HW_CSV_HEADER},{}\n", CostReport::CSV_HEADER);
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.equalizer, r.realization, r.fallback, r.report.csv_row()));
    }
    s
}

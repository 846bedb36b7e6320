//! Fast self-checks runnable from the command line.

use crate::bcjr::{brute_force_posterior, maxstar, Bcjr, FixedPointFormat, MaxStar, ObservationModel};
use crate::channel::{build_trellis, ChannelSpec};
use crate::error::Result;
use crate::hw::{
    self, dnf_minimize, realize, realize_symmetric, share_multilevel, unshared_multilevel, DnfOptions,
    GateCostTable, GateKind, Netlist, Realization, Signal, TruthTable,
};
use crate::lut::{entry_counts, Structure, Widths};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

type CheckFn = fn(u64) -> Result<Check>;

pub const CHECKS: [(&str, CheckFn); 7] = [
    ("entry-counts", entry_count_check),
    ("gate-costs", gate_cost_check),
    ("bcjr-oracle", bcjr_oracle_check),
    ("maxstar", maxstar_check),
    ("netlist-equivalence", netlist_check),
    ("memory-identities", memory_identity_check),
    ("metric-ratio", metric_ratio_check),
];

/// Runs the named checks, or all of them when `only` is empty.
pub fn run(only: &[String], seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, f) in CHECKS {
        if only.is_empty() || only.iter().any(|o| o == name) {
            out.push(f(seed)?);
        }
    }
    Ok(out)
}

fn entry_count_check(_: u64) -> Result<Check> {
    let counts = |w: u32, s: Structure| -> Result<(u64, u64)> {
        let c = entry_counts(&Widths::new(5, 3, w, w, 4)?, s);
        Ok((c.forward, c.final_update))
    };
    let (f8, f6) = (counts(8, Structure::FFF)?, counts(6, Structure::FFF)?);
    let (r8, r6) = (counts(8, Structure::RRR)?, counts(6, Structure::RRR)?);
    let full = [f8.0, f6.0, f8.1, f6.1];
    let reduced = [r8.0, r6.0, r8.1, r6.1];
    let ok = full == [65536, 16384, 2097152, 131072] && reduced == [10240, 2560, 65536, 4096];
    Ok(Check::new(
        "entry-counts",
        ok,
        format!("full {full:?}, reduced {reduced:?} (update w=8, w=6, final w=8, w=6)"),
    ))
}

fn gate_cost_check(_: u64) -> Result<Check> {
    let g = GateCostTable::default();
    let want = [
        (GateKind::And, 6),
        (GateKind::Or, 6),
        (GateKind::Not, 2),
        (GateKind::Nand, 4),
        (GateKind::Xor, 10),
    ];
    let mut ok = g.validate().is_ok() && g.dff == 18 && g.dff == 4 * g.nand + g.not;
    for (kind, cost) in want {
        let mut n = Netlist::new(2);
        let ins: Vec<Signal> = (0..kind.arity()).map(|i| Signal::Input(i as u32 % 2)).collect();
        let o = n.push(kind, &ins);
        n.outputs.push(o);
        ok &= g.cost(kind) == cost && n.transistors(&g) == cost;
    }
    // Doubling every gate price must double every cost path.
    let double = GateCostTable {
        and: 2 * g.and,
        or: 2 * g.or,
        not: 2 * g.not,
        nand: 2 * g.nand,
        xor: 2 * g.xor,
        dff: 2 * g.dff,
        mux2: 2 * g.mux2,
    };
    let spec = ChannelSpec::preset("epr4", 0.5)?;
    let trellis = build_trellis(&spec)?;
    let fmt = FixedPointFormat::for_channel(&spec, 7, 11)?;
    let a = hw::arithmetic_cost_model(&trellis, &fmt, ObservationModel::Ungerboeck, 1, &g);
    let b = hw::arithmetic_cost_model(&trellis, &fmt, ObservationModel::Ungerboeck, 1, &double);
    let ra = hw::pipeline_memory_cost(&a, 32, 10)?;
    let rb = hw::pipeline_memory_cost(&b, 32, 10)?;
    ok &= rb.eq_numerator() == 2 * ra.eq_numerator();
    let mux_a = hw::mux_tree_cost(8, 3, false, &g).transistors;
    let mux_b = hw::mux_tree_cost(8, 3, false, &double).transistors;
    ok &= mux_b == 2 * mux_a;
    Ok(Check::new(
        "gate-costs",
        ok,
        format!(
            "AND {} OR {} NOT {} NAND {} XOR {} DFF {} MUX2 {}",
            g.and, g.or, g.not, g.nand, g.xor, g.dff, g.mux2
        ),
    ))
}

fn bcjr_oracle_check(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbc);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let l = rng.random_range(1..=3usize);
        let taps: Vec<f64> = (0..=l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = ChannelSpec::bpsk(&taps, rng.random_range(0.2..2.0))?;
        let n = rng.random_range(1..=8usize);
        let tail = rng.random_range(0..=l);
        let d: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut full = d.clone();
        full.extend(std::iter::repeat_n(0, tail));
        let r = crate::channel::transmit_with(&full, &spec, &mut rng);
        let prior: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let bcjr = Bcjr::new(&spec, ObservationModel::Forney, MaxStar::Exact)?;
        let got = bcjr.posterior(&r, &prior, tail)?;
        let want = brute_force_posterior(&r, &spec, &prior, tail)?;
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Check::new("bcjr-oracle", worst <= 1e-9, format!("200 instances, max |dL| = {worst:.2e}")))
}

fn maxstar_check(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let (mut exact_err, mut approx_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1_000_000 {
        let a: f64 = rng.random_range(-50.0..50.0);
        let b = a + rng.random_range(-20.0..20.0);
        let m = a.max(b);
        let truth = m + ((a - m).exp() + (b - m).exp()).ln();
        exact_err = exact_err.max((maxstar(a, b, MaxStar::Exact) - truth).abs());
        approx_err = approx_err.max(truth - maxstar(a, b, MaxStar::Approx));
    }
    let ok = exact_err <= 1e-12 && approx_err <= std::f64::consts::LN_2 + 1e-15;
    Ok(Check::new(
        "maxstar",
        ok,
        format!("10^6 pairs, exact error {exact_err:.2e}, approximation gap {approx_err:.4}"),
    ))
}

fn random_table(rng: &mut ChaCha8Rng) -> Result<TruthTable> {
    let w_in = rng.random_range(2..=12u32);
    let w_out = rng.random_range(1..=4u32);
    let n = 1usize << w_in;
    let mask = (1u32 << w_out) - 1;
    let symmetric = rng.random_bool(0.5);
    let monotone = rng.random_bool(0.5);
    let mut rows: Vec<u32> = if monotone {
        // Sorted random levels resemble designed threshold tables.
        let mut v: Vec<u32> = (0..n).map(|_| rng.random_range(0..=mask)).collect();
        v.sort_unstable();
        v
    } else {
        (0..n).map(|_| rng.random_range(0..=mask)).collect()
    };
    if symmetric {
        for y in 0..n / 2 {
            rows[n - 1 - y] = !rows[y] & mask;
        }
    }
    TruthTable::new(w_in, w_out, rows)
}

fn netlist_check(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e);
    let opts = DnfOptions::default();
    let (mut equivalent, mut shared_le, mut symmetric_tables) = (0, 0, 0);
    for _ in 0..50 {
        let tt = random_table(&mut rng)?;
        let mut all = true;
        for r in Realization::ALL {
            all &= realize(&tt, r, &opts)?.netlist.equivalent_to(&tt);
            if tt.is_complement_symmetric() {
                all &= realize_symmetric(&tt, r, &opts)?.netlist.equivalent_to(&tt);
            }
        }
        symmetric_tables += usize::from(tt.is_complement_symmetric());
        equivalent += usize::from(all);
        let cover = dnf_minimize(&tt, &opts)?;
        let g = GateCostTable::default();
        shared_le += usize::from(share_multilevel(&cover).transistors(&g) <= unshared_multilevel(&cover).transistors(&g));
    }
    Ok(Check::new(
        "netlist-equivalence",
        equivalent == 50 && shared_le == 50,
        format!(
            "{equivalent}/50 tables identical in all realizations ({symmetric_tables} symmetric), shared <= unshared in {shared_le}/50"
        ),
    ))
}

fn memory_identity_check(_: u64) -> Result<Check> {
    let spec = ChannelSpec::preset("epr4", 0.5)?;
    let trellis = build_trellis(&spec)?;
    let fmt = FixedPointFormat::for_channel(&spec, 7, 11)?;
    let model = hw::arithmetic_cost_model(&trellis, &fmt, ObservationModel::Ungerboeck, 2, &GateCostTable::default());
    let mut ok = hw::shift_register_series(10) == 20;
    for n_b in (2..=64usize).step_by(2) {
        let explicit: u128 = (1..n_b / 2).map(|k| 2 * k as u128).sum();
        let h = (n_b / 2) as u128;
        ok &= explicit == (h - 1) * h;
        ok &= hw::shift_register_series(n_b) == explicit;
        ok &= hw::x_structure_registers(n_b) == explicit;
        let rep = hw::pipeline_memory_cost(&model, n_b, 10)?;
        let enumerated: u128 = rep
            .iterations
            .iter()
            .zip(&model.iterations)
            .map(|(r, it)| {
                let bits = r.s_p as u128 * (it.w_alpha + it.w_beta) as u128 + r.s_pe as u128 * it.w_e as u128;
                bits * model.gates.dff as u128 * hw::x_structure_registers(n_b)
            })
            .sum();
        ok &= rep.memory_numerator() == enumerated;
    }
    Ok(Check::new("memory-identities", ok, "even N_b in 2..=64".into()))
}

fn metric_ratio_check(_: u64) -> Result<Check> {
    let spec = ChannelSpec::preset("epr4", 0.5)?;
    let trellis = build_trellis(&spec)?;
    let fmt = FixedPointFormat::for_channel(&spec, 7, 11)?;
    let conventional = fmt.metric_width(trellis.num_states);
    let ib = Widths::new(5, 3, 9, 9, 4)?;
    let ratio = conventional as f64 / ib.w_alpha as f64;
    let ok = conventional == 77 && ib.w_alpha + ib.w_beta == 18 && (3.0..=13.0).contains(&ratio);
    Ok(Check::new(
        "metric-ratio",
        ok,
        format!(
            "IB stores {} bits per step, conventional {} per direction, ratio {ratio:.2}",
            ib.w_alpha + ib.w_beta,
            conventional
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        let only: Vec<String> = ["entry-counts", "gate-costs", "memory-identities", "metric-ratio"]
            .map(String::from)
            .to_vec();
        for c in run(&only, 1).unwrap() {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn unknown_names_select_nothing() {
        assert!(run(&["nope".into()], 1).unwrap().is_empty());
    }
}

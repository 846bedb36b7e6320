//! Transistor-count area model for LUT and arithmetic equalizers.
//!
//! LUTs are realized as multiplexer trees, minimized two-level logic,
//! shared multi-level logic, or complement-symmetric halves of those. The
//! arithmetic equalizer is priced from a prefix-adder model. Pipeline and
//! shift-register memory are added per sub-block configuration.

use crate::bcjr::{FixedPointFormat, ObservationModel};
use crate::channel::Trellis;
use crate::error::{Error, Result};
use crate::lut::{EqualizerDesign, Lut, LutStage};
use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

/// CMOS transistors per gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateCostTable {
    pub and: u64,
    pub or: u64,
    pub not: u64,
    pub nand: u64,
    pub xor: u64,
    /// D flip-flop built from 4 NAND and 1 NOT.
    pub dff: u64,
    /// 2:1 multiplexer built from 2 AND, 1 OR and 1 NOT.
    pub mux2: u64,
}

impl Default for GateCostTable {
    fn default() -> Self {
        let (and, or, not, nand, xor) = (6, 6, 2, 4, 10);
        GateCostTable {
            and,
            or,
            not,
            nand,
            xor,
            dff: 4 * nand + not,
            mux2: 2 * and + or + not,
        }
    }
}

impl GateCostTable {
    pub fn cost(&self, kind: GateKind) -> u64 {
        match kind {
            GateKind::And => self.and,
            GateKind::Or => self.or,
            GateKind::Not => self.not,
            GateKind::Nand => self.nand,
            GateKind::Xor => self.xor,
            GateKind::Mux2 => self.mux2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.and, self.or, self.not, self.nand, self.xor, self.dff, self.mux2];
        if all.contains(&0) {
            return Err(Error::Config("gate costs must be positive".into()));
        }
        Ok(())
    }
}

/// A wire of a netlist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Const(bool),
    Input(u32),
    Node(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Not,
    Nand,
    Xor,
    /// `sel ? b : a` with inputs `[a, b, sel]`.
    Mux2,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Not => 1,
            GateKind::Mux2 => 3,
            _ => 2,
        }
    }

    pub const ALL: [GateKind; 6] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Not,
        GateKind::Nand,
        GateKind::Xor,
        GateKind::Mux2,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: [Signal; 3],
}

/// Acyclic gate network; gates only read inputs, constants and earlier gates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Netlist {
    pub num_inputs: u32,
    pub gates: Vec<Gate>,
    pub outputs: Vec<Signal>,
}

impl Netlist {
    pub fn new(num_inputs: u32) -> Self {
        Netlist {
            num_inputs,
            gates: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn check(&self, s: Signal) {
        match s {
            Signal::Input(i) => assert!(i < self.num_inputs, "input {i} out of range"),
            Signal::Node(n) => assert!((n as usize) < self.gates.len(), "forward reference"),
            Signal::Const(_) => {}
        }
    }

    /// Appends a gate; unused input slots are ignored.
    pub fn push(&mut self, kind: GateKind, inputs: &[Signal]) -> Signal {
        assert_eq!(inputs.len(), kind.arity(), "wrong arity for {kind:?}");
        let mut arr = [Signal::Const(false); 3];
        for (slot, &s) in arr.iter_mut().zip(inputs) {
            self.check(s);
            *slot = s;
        }
        self.gates.push(Gate { kind, inputs: arr });
        Signal::Node(self.gates.len() as u32 - 1)
    }

    pub fn and(&mut self, a: Signal, b: Signal) -> Signal {
        self.push(GateKind::And, &[a, b])
    }

    pub fn or(&mut self, a: Signal, b: Signal) -> Signal {
        self.push(GateKind::Or, &[a, b])
    }

    pub fn not(&mut self, a: Signal) -> Signal {
        self.push(GateKind::Not, &[a])
    }

    pub fn mux(&mut self, sel: Signal, a: Signal, b: Signal) -> Signal {
        self.push(GateKind::Mux2, &[a, b, sel])
    }

    /// Balanced tree of a two-input gate; `empty` for no operands.
    pub fn tree(&mut self, kind: GateKind, mut level: Vec<Signal>, empty: Signal) -> Signal {
        if level.is_empty() {
            return empty;
        }
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                next.push(if pair.len() == 2 {
                    self.push(kind, &[pair[0], pair[1]])
                } else {
                    pair[0]
                });
            }
            level = next;
        }
        level[0]
    }

    /// Copies `other` into this netlist with its inputs bound to `inputs`;
    /// returns the copied outputs.
    pub fn embed(&mut self, other: &Netlist, inputs: &[Signal]) -> Vec<Signal> {
        assert_eq!(inputs.len(), other.num_inputs as usize);
        let offset = self.gates.len() as u32;
        let map = |s: Signal| match s {
            Signal::Input(i) => inputs[i as usize],
            Signal::Node(n) => Signal::Node(n + offset),
            c => c,
        };
        for g in &other.gates {
            let ins: Vec<Signal> = g.inputs[..g.kind.arity()].iter().map(|&s| map(s)).collect();
            self.push(g.kind, &ins);
        }
        other.outputs.iter().map(|&s| map(s)).collect()
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }

    pub fn transistors(&self, g: &GateCostTable) -> u64 {
        self.gates.iter().map(|x| g.cost(x.kind)).sum()
    }

    /// Gate levels of every node; inputs and constants are level 0.
    fn node_levels(&self) -> Vec<u32> {
        let mut lv = vec![0u32; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            let deepest = g.inputs[..g.kind.arity()]
                .iter()
                .map(|s| match s {
                    Signal::Node(n) => lv[*n as usize],
                    _ => 0,
                })
                .max()
                .unwrap_or(0);
            lv[i] = deepest + 1;
        }
        lv
    }

    /// Longest gate path `N_L` to any output.
    pub fn depth(&self) -> u32 {
        let lv = self.node_levels();
        self.outputs
            .iter()
            .map(|s| match s {
                Signal::Node(n) => lv[*n as usize],
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Transistor count and logic depth.
    pub fn cost(&self, g: &GateCostTable) -> (u64, u32) {
        (self.transistors(g), self.depth())
    }

    /// Outputs for the 64 input patterns `base..base + 64`, bit `j` of word
    /// `o` holding output `o` of pattern `base + j`.
    pub fn eval_block(&self, base: u64) -> Vec<u64> {
        const PATTERNS: [u64; 6] = [
            0xAAAA_AAAA_AAAA_AAAA,
            0xCCCC_CCCC_CCCC_CCCC,
            0xF0F0_F0F0_F0F0_F0F0,
            0xFF00_FF00_FF00_FF00,
            0xFFFF_0000_FFFF_0000,
            0xFFFF_FFFF_0000_0000,
        ];
        let input = |i: u32| -> u64 {
            if i < 6 {
                PATTERNS[i as usize]
            } else if base >> i & 1 == 1 {
                u64::MAX
            } else {
                0
            }
        };
        let mut val = vec![0u64; self.gates.len()];
        let read = |s: Signal, val: &[u64]| match s {
            Signal::Const(true) => u64::MAX,
            Signal::Const(false) => 0,
            Signal::Input(i) => input(i),
            Signal::Node(n) => val[n as usize],
        };
        for i in 0..self.gates.len() {
            let g = self.gates[i];
            let a = read(g.inputs[0], &val);
            let b = read(g.inputs[1], &val);
            val[i] = match g.kind {
                GateKind::And => a & b,
                GateKind::Or => a | b,
                GateKind::Not => !a,
                GateKind::Nand => !(a & b),
                GateKind::Xor => a ^ b,
                GateKind::Mux2 => {
                    let s = read(g.inputs[2], &val);
                    (a & !s) | (b & s)
                }
            };
        }
        self.outputs.iter().map(|&s| read(s, &val)).collect()
    }

    /// Evaluates one input pattern.
    pub fn eval(&self, y: u64) -> u64 {
        let words = self.eval_block(y & !63);
        let j = y & 63;
        words
            .iter()
            .enumerate()
            .fold(0, |acc, (o, w)| acc | ((w >> j & 1) << o))
    }

    /// Exhaustive comparison with a truth table.
    pub fn equivalent_to(&self, tt: &TruthTable) -> bool {
        if self.num_inputs != tt.num_inputs || self.outputs.len() != tt.num_outputs as usize {
            return false;
        }
        let n = 1u64 << tt.num_inputs;
        let mut base = 0;
        while base < n {
            let words = self.eval_block(base);
            for j in 0..64.min(n - base) {
                let row = tt.rows[(base + j) as usize];
                for (o, w) in words.iter().enumerate() {
                    if (w >> j & 1) as u32 != row >> o & 1 {
                        return false;
                    }
                }
            }
            base += 64;
        }
        true
    }
}

/// Multi-output Boolean function; input bit `i` is bit `i` of the row index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    pub num_inputs: u32,
    pub num_outputs: u32,
    pub rows: Vec<u32>,
}

impl TruthTable {
    pub fn new(num_inputs: u32, num_outputs: u32, rows: Vec<u32>) -> Result<Self> {
        if num_inputs > 24 || num_outputs > 31 || rows.len() != 1 << num_inputs {
            return Err(Error::Precondition(format!(
                "truth table with {} rows for {num_inputs} inputs",
                rows.len()
            )));
        }
        if rows.iter().any(|&r| r >> num_outputs != 0) {
            return Err(Error::Precondition("row value exceeds the output width".into()));
        }
        Ok(TruthTable {
            num_inputs,
            num_outputs,
            rows,
        })
    }

    /// Table of a LUT whose dimensions are powers of two; the first input
    /// occupies the most significant bits.
    pub fn from_lut(lut: &Lut) -> Result<Self> {
        if lut.dims.iter().chain([&lut.levels]).any(|d| !d.is_power_of_two()) {
            return Err(Error::Precondition(format!(
                "LUT dims {:?} -> {} are not powers of two",
                lut.dims, lut.levels
            )));
        }
        let bits: u32 = lut.input_bits().iter().sum();
        Self::new(bits, lut.output_bits(), lut.table.iter().map(|&v| v as u32).collect())
    }

    /// `f(!y) = !f(y)` for every row.
    pub fn is_complement_symmetric(&self) -> bool {
        let n = self.rows.len();
        let mask = (1u32 << self.num_outputs) - 1;
        (0..n).all(|y| self.rows[n - 1 - y] == !self.rows[y] & mask)
    }

    fn on_set(&self, bit: u32) -> Vec<u32> {
        (0..self.rows.len() as u32)
            .filter(|&y| self.rows[y as usize] >> bit & 1 == 1)
            .collect()
    }

    /// Table of the lower half (most significant input fixed to 0).
    pub fn lower_half(&self) -> Result<TruthTable> {
        if self.num_inputs == 0 {
            return Err(Error::Precondition("cannot halve a constant table".into()));
        }
        let half = self.rows.len() / 2;
        TruthTable::new(self.num_inputs - 1, self.num_outputs, self.rows[..half].to_vec())
    }
}

/// Product term: inputs outside `mask` must equal the bits of `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    pub value: u32,
    /// Don't-care positions.
    pub mask: u32,
}

impl Cube {
    pub fn contains(&self, y: u32) -> bool {
        y & !self.mask == self.value
    }

    pub fn literals(&self, num_inputs: u32) -> u32 {
        num_inputs - (self.mask & low_mask(num_inputs)).count_ones()
    }

    fn minterms(&self) -> impl Iterator<Item = u32> + '_ {
        let mask = self.mask;
        let mut sub = mask;
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let v = self.value | sub;
            if sub == 0 {
                done = true;
            } else {
                sub = (sub - 1) & mask;
            }
            Some(v)
        })
    }
}

fn low_mask(bits: u32) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1 << bits) - 1
    }
}

/// Sum-of-products per output bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cover {
    pub num_inputs: u32,
    pub outputs: Vec<Vec<Cube>>,
    /// Output bits that fell back to the canonical minterm form.
    pub fallback: Vec<bool>,
}

impl Cover {
    pub fn eval(&self, y: u32) -> u32 {
        self.outputs
            .iter()
            .enumerate()
            .fold(0, |acc, (o, cubes)| acc | (u32::from(cubes.iter().any(|c| c.contains(y))) << o))
    }

    pub fn product_count(&self) -> usize {
        self.outputs.iter().map(Vec::len).sum()
    }

    pub fn literal_count(&self) -> usize {
        self.outputs
            .iter()
            .flatten()
            .map(|c| c.literals(self.num_inputs) as usize)
            .sum()
    }

    pub fn any_fallback(&self) -> bool {
        self.fallback.iter().any(|&f| f)
    }

    pub fn equivalent_to(&self, tt: &TruthTable) -> bool {
        (0..tt.rows.len() as u32).all(|y| self.eval(y) == tt.rows[y as usize])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DnfOptions {
    /// Abort prime generation once this many implicants were produced.
    pub implicant_limit: usize,
}

impl Default for DnfOptions {
    fn default() -> Self {
        DnfOptions {
            implicant_limit: 4_000_000,
        }
    }
}

/// Largest input width accepted by the two-level minimizer.
pub const MAX_DNF_INPUTS: u32 = 16;

/// Prime implicants by iterated merging of cubes that differ in one bit.
/// Returns `None` once the implicant limit is exceeded.
fn prime_implicants(on: &[u32], num_inputs: u32, limit: usize) -> Option<Vec<Cube>> {
    let mut level: HashMap<u32, HashSet<u32>> = HashMap::new();
    level.insert(0, on.iter().copied().collect());
    let mut primes = Vec::new();
    let mut produced = on.len();
    while !level.is_empty() {
        let mut next: HashMap<u32, HashSet<u32>> = HashMap::new();
        let mut masks: Vec<u32> = level.keys().copied().collect();
        masks.sort_unstable();
        for mask in masks {
            let values = &level[&mask];
            let mut merged: HashSet<u32> = HashSet::new();
            let mut sorted: Vec<u32> = values.iter().copied().collect();
            sorted.sort_unstable();
            for &v in &sorted {
                for b in 0..num_inputs {
                    let bit = 1 << b;
                    if mask & bit != 0 || v & bit != 0 {
                        continue;
                    }
                    if values.contains(&(v | bit)) {
                        merged.insert(v);
                        merged.insert(v | bit);
                        if next.entry(mask | bit).or_default().insert(v) {
                            produced += 1;
                            if produced > limit {
                                return None;
                            }
                        }
                    }
                }
            }
            for &v in &sorted {
                if !merged.contains(&v) {
                    primes.push(Cube { value: v, mask });
                }
            }
        }
        level = next;
    }
    primes.sort_unstable();
    Some(primes)
}

/// Essential primes first, then the prime covering most uncovered minterms
/// (fewer literals, then lower index on ties).
fn greedy_cover(on: &[u32], primes: &[Cube], num_inputs: u32) -> Vec<Cube> {
    let index: HashMap<u32, usize> = on.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let covers: Vec<Vec<usize>> = primes
        .iter()
        .map(|p| p.minterms().map(|m| index[&m]).collect())
        .collect();
    let mut by_minterm = vec![Vec::new(); on.len()];
    for (p, list) in covers.iter().enumerate() {
        for &m in list {
            by_minterm[m].push(p);
        }
    }
    let mut covered = vec![false; on.len()];
    let mut gain: Vec<usize> = covers.iter().map(Vec::len).collect();
    let mut chosen = Vec::new();
    let take = |p: usize, covered: &mut Vec<bool>, gain: &mut Vec<usize>, chosen: &mut Vec<usize>| {
        chosen.push(p);
        for &m in &covers[p] {
            if !covered[m] {
                covered[m] = true;
                for &q in &by_minterm[m] {
                    gain[q] -= 1;
                }
            }
        }
    };
    for m in 0..on.len() {
        if by_minterm[m].len() == 1 && !covered[m] {
            take(by_minterm[m][0], &mut covered, &mut gain, &mut chosen);
        }
    }
    loop {
        let best = (0..primes.len())
            .filter(|&p| gain[p] > 0)
            .max_by_key(|&p| (gain[p], Reverse(primes[p].literals(num_inputs)), Reverse(p)));
        match best {
            Some(p) => take(p, &mut covered, &mut gain, &mut chosen),
            None => break,
        }
    }
    // Drop primes made redundant by later choices, newest first.
    let mut times = vec![0usize; on.len()];
    for &p in &chosen {
        for &m in &covers[p] {
            times[m] += 1;
        }
    }
    let mut keep = vec![true; chosen.len()];
    for i in (0..chosen.len()).rev() {
        let p = chosen[i];
        if covers[p].iter().all(|&m| times[m] > 1) {
            keep[i] = false;
            for &m in &covers[p] {
                times[m] -= 1;
            }
        }
    }
    let mut kept: Vec<usize> = chosen.into_iter().zip(keep).filter(|&(_, k)| k).map(|(p, _)| p).collect();
    kept.sort_unstable();
    kept.into_iter().map(|p| primes[p]).collect()
}

/// Two-level minimization of every output bit: Quine-McCluskey primes
/// followed by a greedy cover. Output bits whose prime generation exceeds
/// the implicant limit keep their minterms and are flagged.
pub fn dnf_minimize(tt: &TruthTable, opts: &DnfOptions) -> Result<Cover> {
    if tt.num_inputs > MAX_DNF_INPUTS {
        return Err(Error::Capacity(format!(
            "two-level minimization supports at most {MAX_DNF_INPUTS} inputs, got {}",
            tt.num_inputs
        )));
    }
    let mut outputs = Vec::new();
    let mut fallback = Vec::new();
    for bit in 0..tt.num_outputs {
        let on = tt.on_set(bit);
        match prime_implicants(&on, tt.num_inputs, opts.implicant_limit) {
            Some(primes) => {
                outputs.push(greedy_cover(&on, &primes, tt.num_inputs));
                fallback.push(false);
            }
            None => {
                outputs.push(on.iter().map(|&v| Cube { value: v, mask: 0 }).collect());
                fallback.push(true);
            }
        }
    }
    Ok(Cover {
        num_inputs: tt.num_inputs,
        outputs,
        fallback,
    })
}

/// Literal signals with one shared inverter per complemented input.
struct Literals {
    inverted: Vec<Option<Signal>>,
}

impl Literals {
    fn new(n: u32) -> Self {
        Literals {
            inverted: vec![None; n as usize],
        }
    }

    fn get(&mut self, net: &mut Netlist, input: u32, positive: bool) -> Signal {
        if positive {
            return Signal::Input(input);
        }
        *self.inverted[input as usize].get_or_insert_with(|| net.not(Signal::Input(input)))
    }

    fn of_cube(&mut self, net: &mut Netlist, c: &Cube, n: u32) -> Vec<Signal> {
        (0..n)
            .filter(|&i| c.mask >> i & 1 == 0)
            .map(|i| self.get(net, i, c.value >> i & 1 == 1))
            .collect()
    }
}

/// Two-level cover built from two-input gates without any sharing: every
/// product of every output gets its own balanced AND tree.
pub fn unshared_multilevel(cover: &Cover) -> Netlist {
    let n = cover.num_inputs;
    let mut net = Netlist::new(n);
    let mut lits = Literals::new(n);
    let mut outs = Vec::new();
    for cubes in &cover.outputs {
        let products: Vec<Signal> = cubes
            .iter()
            .map(|c| {
                let l = lits.of_cube(&mut net, c, n);
                net.tree(GateKind::And, l, Signal::Const(true))
            })
            .collect();
        outs.push(net.tree(GateKind::Or, products, Signal::Const(false)));
    }
    net.outputs = outs;
    net
}

type Pair = (Signal, Signal);

fn pair(a: Signal, b: Signal) -> Pair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Pair statistics of the greedy factoring.
#[derive(Default)]
struct PairCounts {
    count: HashMap<Pair, usize>,
    queue: BTreeSet<(usize, Reverse<Pair>)>,
}

impl PairCounts {
    fn add(&mut self, p: Pair, delta: isize) {
        let c = self.count.entry(p).or_insert(0);
        if *c > 0 {
            self.queue.remove(&(*c, Reverse(p)));
        }
        *c = (*c as isize + delta) as usize;
        if *c > 0 {
            self.queue.insert((*c, Reverse(p)));
        } else {
            self.count.remove(&p);
        }
    }

    fn best(&self) -> Option<(usize, Pair)> {
        self.queue.iter().next_back().map(|&(c, Reverse(p))| (c, p))
    }
}

/// Shared multi-level realization: identical products are merged, then the
/// AND of the two signals used together by most products is created and
/// substituted until every product is a single signal. OR planes are
/// balanced trees.
pub fn share_multilevel(cover: &Cover) -> Netlist {
    let n = cover.num_inputs;
    let mut net = Netlist::new(n);
    let mut lits = Literals::new(n);
    let mut ids: HashMap<Cube, usize> = HashMap::new();
    let mut products: Vec<Vec<Signal>> = Vec::new();
    let mut out_ids: Vec<Vec<usize>> = Vec::new();
    for cubes in &cover.outputs {
        let mut list = Vec::new();
        for c in cubes {
            let id = *ids.entry(*c).or_insert_with(|| {
                let mut l = lits.of_cube(&mut net, c, n);
                l.sort_unstable();
                products.push(l);
                products.len() - 1
            });
            if !list.contains(&id) {
                list.push(id);
            }
        }
        out_ids.push(list);
    }
    let mut counts = PairCounts::default();
    let mut occ: HashMap<Signal, HashSet<usize>> = HashMap::new();
    for (pid, p) in products.iter().enumerate() {
        for (i, &a) in p.iter().enumerate() {
            occ.entry(a).or_default().insert(pid);
            for &b in &p[i + 1..] {
                counts.add(pair(a, b), 1);
            }
        }
    }
    while let Some((c, (a, b))) = counts.best() {
        if c < 2 {
            break;
        }
        let g = net.and(a, b);
        let users: Vec<usize> = {
            let (oa, ob) = (&occ[&a], &occ[&b]);
            let mut u: Vec<usize> = oa.intersection(ob).copied().collect();
            u.sort_unstable();
            u
        };
        for pid in users {
            let p = &mut products[pid];
            let others: Vec<Signal> = p.iter().copied().filter(|&x| x != a && x != b).collect();
            for &x in &others {
                counts.add(pair(a, x), -1);
                counts.add(pair(b, x), -1);
                counts.add(pair(g, x), 1);
            }
            counts.add((a, b), -1);
            p.retain(|&x| x != a && x != b);
            p.push(g);
            occ.get_mut(&a).expect("occurs").remove(&pid);
            occ.get_mut(&b).expect("occurs").remove(&pid);
            occ.entry(g).or_default().insert(pid);
        }
    }
    // No pair is shared any more; finish each product as a balanced tree.
    let signals: Vec<Signal> = products
        .into_iter()
        .map(|p| net.tree(GateKind::And, p, Signal::Const(true)))
        .collect();
    net.outputs = out_ids
        .iter()
        .map(|list| {
            let terms: Vec<Signal> = list.iter().map(|&id| signals[id]).collect();
            if terms.contains(&Signal::Const(true)) {
                Signal::Const(true)
            } else {
                net.tree(GateKind::Or, terms, Signal::Const(false))
            }
        })
        .collect();
    net
}

/// Formula cost of a multiplexer-tree LUT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MuxTreeCost {
    /// All 2:1 multiplexers.
    pub muxes: u64,
    /// Multiplexers of the selection trees alone.
    pub tree_muxes: u64,
    /// Input and output inversion multiplexers of the symmetric form.
    pub conversion_muxes: u64,
    pub transistors: u64,
    pub stages: u32,
}

/// Multiplexer tree with `w_out` trees of `2^{w_in} - 1` muxes. The
/// symmetric form stores half the table and conditionally inverts `w_in - 1`
/// inputs and all outputs, which needs one inverter per converted signal.
pub fn mux_tree_cost(w_in: u32, w_out: u32, symmetric: bool, g: &GateCostTable) -> MuxTreeCost {
    let tree_in = if symmetric && w_in > 0 { w_in - 1 } else { w_in };
    let tree_muxes = w_out as u64 * ((1u64 << tree_in) - 1);
    let conversion_muxes = if symmetric { (w_in - 1 + w_out) as u64 } else { 0 };
    let muxes = tree_muxes + conversion_muxes;
    let transistors = muxes * g.mux2 + conversion_muxes * g.not;
    let stages = if symmetric { tree_in + 2 } else { w_in };
    MuxTreeCost {
        muxes,
        tree_muxes,
        conversion_muxes,
        transistors,
        stages,
    }
}

/// Multiplexer tree netlist; stage `k` selects with input bit `k`, leaves
/// are the stored table bits.
pub fn mux_tree_netlist(tt: &TruthTable) -> Netlist {
    let mut net = Netlist::new(tt.num_inputs);
    let mut outs = Vec::new();
    for bit in 0..tt.num_outputs {
        let mut level: Vec<Signal> = tt
            .rows
            .iter()
            .map(|&r| Signal::Const(r >> bit & 1 == 1))
            .collect();
        for k in 0..tt.num_inputs {
            level = level
                .chunks(2)
                .map(|p| net.mux(Signal::Input(k), p[0], p[1]))
                .collect();
        }
        outs.push(level[0]);
    }
    net.outputs = outs;
    net
}

/// LUT realization styles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Realization {
    MuxTree,
    /// Minimized cover with one unshared AND tree per product.
    TwoLevel,
    SharedMultiLevel,
}

impl Realization {
    pub const ALL: [Realization; 3] = [Realization::MuxTree, Realization::TwoLevel, Realization::SharedMultiLevel];

    pub fn name(self) -> &'static str {
        match self {
            Realization::MuxTree => "mux",
            Realization::TwoLevel => "two_level",
            Realization::SharedMultiLevel => "shared",
        }
    }
}

/// A realized table and whether its minimization fell back.
#[derive(Clone, Debug)]
pub struct Realized {
    pub netlist: Netlist,
    pub fallback: bool,
}

pub fn realize(tt: &TruthTable, r: Realization, opts: &DnfOptions) -> Result<Realized> {
    Ok(match r {
        Realization::MuxTree => Realized {
            netlist: mux_tree_netlist(tt),
            fallback: false,
        },
        Realization::TwoLevel | Realization::SharedMultiLevel => {
            let cover = dnf_minimize(tt, opts)?;
            Realized {
                netlist: if r == Realization::TwoLevel {
                    unshared_multilevel(&cover)
                } else {
                    share_multilevel(&cover)
                },
                fallback: cover.any_fallback(),
            }
        }
    })
}

/// Realizes a complement-symmetric table from its lower half: with the most
/// significant input set, the remaining inputs and all outputs are inverted
/// by multiplexers.
pub fn realize_symmetric(tt: &TruthTable, inner: Realization, opts: &DnfOptions) -> Result<Realized> {
    if !tt.is_complement_symmetric() {
        return Err(Error::Precondition("table is not complement-symmetric".into()));
    }
    let half = tt.lower_half()?;
    let core = realize(&half, inner, opts)?;
    let w = tt.num_inputs;
    let mut net = Netlist::new(w);
    let sel = Signal::Input(w - 1);
    let ins: Vec<Signal> = (0..w - 1)
        .map(|i| {
            let y = Signal::Input(i);
            let ny = net.not(y);
            net.mux(sel, y, ny)
        })
        .collect();
    let outs = net.embed(&core.netlist, &ins);
    net.outputs = outs
        .into_iter()
        .map(|o| {
            let no = net.not(o);
            net.mux(sel, o, no)
        })
        .collect();
    Ok(Realized {
        netlist: net,
        fallback: core.fallback,
    })
}

/// Area and depth of one update block before pipelining.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockCost {
    pub logic: u64,
    /// Gate levels `N_L`.
    pub levels: u32,
    /// Bits entering and leaving the block, registered at every pipeline cut.
    pub io_bits: u32,
}

impl BlockCost {
    /// Two blocks in series.
    pub fn then(self, next: BlockCost) -> BlockCost {
        BlockCost {
            logic: self.logic + next.logic,
            levels: self.levels + next.levels,
            io_bits: self.io_bits.max(next.io_bits),
        }
    }

    /// Pipeline stages `ceil(N_L / D_p)`.
    pub fn stages(&self, d_p: u32) -> u32 {
        self.levels.div_ceil(d_p).max(1)
    }

    /// Logic plus one register bank of `io_bits` at each internal cut.
    pub fn with_pipeline(&self, d_p: u32, g: &GateCostTable) -> u64 {
        self.logic + (self.stages(d_p) as u64 - 1) * self.io_bits as u64 * g.dff
    }
}

/// Cost of a LUT realized in the given style, symmetric when possible.
pub fn lut_block_cost(lut: &Lut, r: Realization, symmetric: bool, g: &GateCostTable, opts: &DnfOptions) -> Result<(BlockCost, bool)> {
    let tt = TruthTable::from_lut(lut)?;
    let use_sym = symmetric && tt.is_complement_symmetric() && tt.num_inputs >= 2;
    let realized = match (r, use_sym) {
        (Realization::MuxTree, _) => {
            // Formula only; large tables are never instantiated.
            let c = mux_tree_cost(tt.num_inputs, tt.num_outputs, use_sym, g);
            return Ok((
                BlockCost {
                    logic: c.transistors,
                    levels: c.stages,
                    io_bits: tt.num_inputs + tt.num_outputs,
                },
                false,
            ));
        }
        (_, true) => realize_symmetric(&tt, r, opts)?,
        (_, false) => realize(&tt, r, opts)?,
    };
    let (logic, levels) = realized.netlist.cost(g);
    Ok((
        BlockCost {
            logic,
            levels,
            io_bits: tt.num_inputs + tt.num_outputs,
        },
        realized.fallback,
    ))
}

/// Cost of an update stage; chained tables are in series.
pub fn stage_cost(stage: &LutStage, r: Realization, symmetric: bool, g: &GateCostTable, opts: &DnfOptions) -> Result<(BlockCost, bool)> {
    let mut total: Option<BlockCost> = None;
    let mut fallback = false;
    for lut in stage.luts() {
        let (c, f) = lut_block_cost(lut, r, symmetric, g, opts)?;
        fallback |= f;
        total = Some(match total {
            Some(t) => t.then(c),
            None => c,
        });
    }
    total
        .map(|t| (t, fallback))
        .ok_or_else(|| Error::Precondition("stage without tables".into()))
}

/// Adder architecture of the arithmetic model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdderModel {
    #[default]
    LadnerFischer,
    RippleCarry,
}

/// Full-adder cell: 2 XOR, 2 AND and 1 OR.
pub fn full_adder_cell(g: &GateCostTable) -> u64 {
    2 * g.xor + 2 * g.and + g.or
}

/// Nodes of the Ladner-Fischer (minimum depth) prefix network for `w` bits:
/// at level `l`, every position with bit `l` set combines with its group.
pub fn prefix_nodes(w: u32) -> u64 {
    let levels = 32 - (w.max(1) - 1).leading_zeros();
    (0..levels)
        .map(|l| (0..w).filter(|i| i >> l & 1 == 1).count() as u64)
        .sum()
}

/// Area and depth of a `w`-bit adder. The prefix adder has a generate AND
/// and propagate XOR per bit, one AND plus OR per prefix node, and a sum XOR
/// per bit. The ripple adder chains full-adder cells.
pub fn adder_cost(w: u32, model: AdderModel, g: &GateCostTable) -> BlockCost {
    let w = w.max(1);
    match model {
        AdderModel::LadnerFischer => {
            let levels = 32 - (w - 1).leading_zeros();
            BlockCost {
                logic: w as u64 * (g.and + 2 * g.xor) + prefix_nodes(w) * (g.and + g.or),
                levels: 2 + 2 * levels,
                io_bits: 3 * w,
            }
        }
        AdderModel::RippleCarry => BlockCost {
            logic: w as u64 * full_adder_cell(g),
            levels: 1 + 2 * w,
            io_bits: 3 * w,
        },
    }
}

/// Area of the arithmetic equalizer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithmeticCost {
    pub alpha: BlockCost,
    pub beta: BlockCost,
    pub final_update: BlockCost,
    /// Transition adders of one recursion.
    pub branch_adders: u64,
    pub metric_width: u32,
}

/// Gate-count model of the fixed-point max-log updates.
///
/// A recursion holds per transition a branch-metric adder and an
/// add-compare adder, per state a comparator (subtracting adder with
/// inverters plus a multiplexer row) and a prior adder, and per non-zero
/// state a normalization subtractor. The Forney model adds a squarer per
/// transition priced as `ceil(w_r / 2)` adders. The final update sums
/// forward, branch and backward metrics per transition and reduces each
/// symbol hypothesis with a comparator tree.
pub fn arithmetic_update_cost(
    trellis: &Trellis,
    fmt: &FixedPointFormat,
    model: ObservationModel,
    adder: AdderModel,
    g: &GateCostTable,
) -> ArithmeticCost {
    let s = trellis.num_states as u64;
    let t = trellis.num_transitions() as u64;
    let w = fmt.w_entry;
    let add = adder_cost(w, adder, g);
    let squarer = match model {
        ObservationModel::Forney => fmt.w_r.div_ceil(2) as u64,
        ObservationModel::Ungerboeck => 0,
    };
    let inverters = w as u64 * g.not;
    let mux_row = w as u64 * g.mux2;
    let comparator = add.logic + inverters + mux_row;
    let branch = t * (1 + squarer) * add.logic;
    let recursion_logic = branch + t * add.logic + s * comparator + s * add.logic + (s - 1) * (add.logic + inverters);
    let branch_levels = add.levels * (1 + squarer as u32);
    // branch, add, compare (+ inverter, mux), prior, normalize (+ inverter)
    let recursion_levels = branch_levels + 4 * add.levels + 3;
    let metric_width = fmt.metric_width(trellis.num_states);
    let io = 2 * metric_width + fmt.w_r + w;
    let recursion = BlockCost {
        logic: recursion_logic,
        levels: recursion_levels,
        io_bits: io,
    };
    let tree_depth = 64 - (s.max(1) - 1).leading_zeros();
    let final_logic = branch + 2 * t * add.logic + 2 * (s - 1) * comparator + add.logic + inverters;
    let final_levels = branch_levels + 2 * add.levels + tree_depth * (add.levels + 2) + add.levels + 1;
    ArithmeticCost {
        alpha: recursion,
        beta: recursion,
        final_update: BlockCost {
            logic: final_logic,
            levels: final_levels,
            io_bits: 2 * metric_width + fmt.w_r + w,
        },
        branch_adders: t,
        metric_width,
    }
}

/// Cost inputs of one turbo iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationBlocks {
    pub alpha: BlockCost,
    pub beta: BlockCost,
    pub final_update: BlockCost,
    pub w_alpha: u32,
    pub w_beta: u32,
    pub w_e: u32,
}

/// A hardware configuration: one entry per turbo iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub label: String,
    pub iterations: Vec<IterationBlocks>,
    pub d_p: u32,
    pub gates: GateCostTable,
}

pub const DEFAULT_DP: u32 = 8;

/// Per-iteration terms of a cost report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationReport {
    pub xi_alpha: u64,
    pub xi_beta: u64,
    pub xi_e: u64,
    pub s_p: u32,
    pub s_pe: u32,
    /// `N_b * xi_update`.
    pub update_numerator: u128,
    /// `N_b * xi_update,ab`.
    pub update_ab_numerator: u128,
    /// `N_b * xi_memory`.
    pub memory_numerator: u128,
}

/// Transistors per equalized symbol for one `(N_b, N_o)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub label: String,
    pub n_b: usize,
    pub n_o: usize,
    pub iterations: Vec<IterationReport>,
    pub xi_update: f64,
    pub xi_update_ab: f64,
    pub xi_memory: f64,
    pub xi_eq: f64,
}

impl CostReport {
    pub fn update_numerator(&self) -> u128 {
        self.iterations.iter().map(|i| i.update_numerator).sum()
    }

    pub fn memory_numerator(&self) -> u128 {
        self.iterations.iter().map(|i| i.memory_numerator).sum()
    }

    pub fn eq_numerator(&self) -> u128 {
        self.update_numerator() + self.memory_numerator()
    }

    pub const CSV_HEADER: &'static str =
        "label,n_b,n_o,iterations,xi_update,xi_update_ab,xi_memory,xi_eq,s_p,s_pe,xi_alpha,xi_beta,xi_e";

    pub fn csv_row(&self) -> String {
        let join = |f: &dyn Fn(&IterationReport) -> String| {
            self.iterations.iter().map(f).collect::<Vec<_>>().join(";")
        };
        format!(
            "\"{}\",{},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{}",
            self.label,
            self.n_b,
            self.n_o,
            self.iterations.len(),
            self.xi_update,
            self.xi_update_ab,
            self.xi_memory,
            self.xi_eq,
            join(&|i| i.s_p.to_string()),
            join(&|i| i.s_pe.to_string()),
            join(&|i| i.xi_alpha.to_string()),
            join(&|i| i.xi_beta.to_string()),
            join(&|i| i.xi_e.to_string()),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} with N_b={} N_o={}", self.label, self.n_b, self.n_o);
        let _ = writeln!(s, "  xi_update     {:>14.1}", self.xi_update);
        let _ = writeln!(s, "  xi_update,ab  {:>14.1}", self.xi_update_ab);
        let _ = writeln!(s, "  xi_memory     {:>14.1}", self.xi_memory);
        let _ = writeln!(s, "  xi_eq         {:>14.1}", self.xi_eq);
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = writeln!(
                s,
                "  iteration {i}: xi_alpha={} xi_beta={} xi_e={} S_p={} S_pe={}",
                it.xi_alpha, it.xi_beta, it.xi_e, it.s_p, it.s_pe
            );
        }
        s
    }
}

/// `sum_{k=1}^{N_b/2-1} 2k` in closed form.
pub fn shift_register_series(n_b: usize) -> u128 {
    let h = (n_b / 2) as u128;
    h.saturating_sub(1) * h
}

/// Register stages of the X-shaped schedule counted one metric at a time:
/// the forward metric of position `p < N_b/2` is produced at cycle `p` and
/// consumed when the backward recursion arrives at cycle `N_b - 1 - p`; the
/// backward half mirrors this. Returns stages per direction.
pub fn x_structure_registers(n_b: usize) -> u128 {
    let mut stages = 0u128;
    for p in 0..n_b / 2 {
        let produced = p;
        let consumed = n_b - 1 - p;
        stages += (consumed - produced).saturating_sub(1) as u128;
    }
    stages
}

/// Evaluates update and memory cost for one sub-block length.
pub fn pipeline_memory_cost(model: &CostModel, n_b: usize, n_o: usize) -> Result<CostReport> {
    if n_b == 0 || n_b % 2 == 1 {
        return Err(Error::Precondition(format!("sub-block length {n_b} must be even and positive")));
    }
    if model.d_p == 0 || model.iterations.is_empty() {
        return Err(Error::Precondition("cost model needs D_p > 0 and at least one iteration".into()));
    }
    let g = &model.gates;
    let series = shift_register_series(n_b);
    let nb = n_b as u128;
    let no = n_o as u128;
    let iterations: Vec<IterationReport> = model
        .iterations
        .iter()
        .map(|it| {
            let xi_alpha = it.alpha.with_pipeline(model.d_p, g);
            let xi_beta = it.beta.with_pipeline(model.d_p, g);
            let xi_e = it.final_update.with_pipeline(model.d_p, g);
            let s_p = it.alpha.stages(model.d_p).max(it.beta.stages(model.d_p));
            let s_pe = it.final_update.stages(model.d_p);
            let ab = (nb + no) * (xi_alpha + xi_beta) as u128;
            let metric_bits = s_p as u128 * (it.w_alpha + it.w_beta) as u128 + s_pe as u128 * it.w_e as u128;
            IterationReport {
                xi_alpha,
                xi_beta,
                xi_e,
                s_p,
                s_pe,
                update_numerator: ab + nb * xi_e as u128,
                update_ab_numerator: ab,
                memory_numerator: metric_bits * g.dff as u128 * series,
            }
        })
        .collect();
    let per = |f: fn(&IterationReport) -> u128| iterations.iter().map(f).sum::<u128>() as f64 / n_b as f64;
    let xi_update = per(|i| i.update_numerator);
    let xi_memory = per(|i| i.memory_numerator);
    Ok(CostReport {
        label: model.label.clone(),
        n_b,
        n_o,
        xi_update,
        xi_update_ab: per(|i| i.update_ab_numerator),
        xi_memory,
        xi_eq: per(|i| i.update_numerator + i.memory_numerator),
        iterations,
    })
}

pub const SUBBLOCK_RANGE: (usize, usize) = (2, 2048);

/// Exhaustive scan of even `N_b` in the search range; ties keep the smaller.
pub fn optimize_subblock(model: &CostModel, n_o: usize) -> Result<CostReport> {
    let mut best: Option<CostReport> = None;
    for n_b in (SUBBLOCK_RANGE.0..=SUBBLOCK_RANGE.1).step_by(2) {
        let r = pipeline_memory_cost(model, n_b, n_o)?;
        // Compare exactly: a/n_b < c/m  <=>  a*m < c*n_b.
        let better = match &best {
            None => true,
            Some(b) => r.eq_numerator() * (b.n_b as u128) < b.eq_numerator() * (n_b as u128),
        };
        if better {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::Precondition("empty sub-block range".into()))
}

/// Label `(w_r,w)` or `(w_r,(w_0,w_1,...))` for per-iteration widths.
pub fn width_label(w_r: u32, widths: &[u32]) -> String {
    if widths.windows(2).all(|p| p[0] == p[1]) {
        format!("({},{})", w_r, widths.first().copied().unwrap_or(0))
    } else {
        let parts: Vec<String> = widths.iter().map(|w| w.to_string()).collect();
        format!("({},({}))", w_r, parts.join(","))
    }
}

/// Cost model of LUT equalizer designs, one per turbo iteration.
pub fn ib_cost_model(
    designs: &[&EqualizerDesign],
    r: Realization,
    g: &GateCostTable,
    opts: &DnfOptions,
) -> Result<(CostModel, bool)> {
    let first = designs
        .first()
        .ok_or_else(|| Error::Precondition("no designs to price".into()))?;
    let mut fallback = false;
    let mut iterations = Vec::new();
    for d in designs {
        let (a, fa) = stage_cost(&d.forward, r, d.symmetric, g, opts)?;
        let (b, fb) = stage_cost(&d.backward, r, d.symmetric, g, opts)?;
        let (e, fe) = stage_cost(&d.final_stage, r, d.symmetric, g, opts)?;
        fallback |= fa || fb || fe;
        iterations.push(IterationBlocks {
            alpha: a,
            beta: b,
            final_update: e,
            w_alpha: d.widths.w_alpha,
            w_beta: d.widths.w_beta,
            w_e: d.widths.w_e,
        });
    }
    let label = width_label(
        first.widths.w_r,
        &designs.iter().map(|d| d.widths.w_alpha).collect::<Vec<_>>(),
    );
    Ok((
        CostModel {
            label,
            iterations,
            d_p: DEFAULT_DP,
            gates: *g,
        },
        fallback,
    ))
}

/// Cost model of the arithmetic equalizer over `n_iterations` runs.
pub fn arithmetic_cost_model(
    trellis: &Trellis,
    fmt: &FixedPointFormat,
    model: ObservationModel,
    n_iterations: usize,
    g: &GateCostTable,
) -> CostModel {
    let c = arithmetic_update_cost(trellis, fmt, model, AdderModel::LadnerFischer, g);
    let it = IterationBlocks {
        alpha: c.alpha,
        beta: c.beta,
        final_update: c.final_update,
        w_alpha: c.metric_width,
        w_beta: c.metric_width,
        w_e: fmt.w_entry,
    };
    CostModel {
        label: format!("({},{})", fmt.w_r, c.metric_width),
        iterations: vec![it; n_iterations.max(1)],
        d_p: DEFAULT_DP,
        gates: *g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_trellis, ChannelSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g() -> GateCostTable {
        GateCostTable::default()
    }

    fn random_table(w_in: u32, w_out: u32, rng: &mut ChaCha8Rng) -> TruthTable {
        let rows = (0..1u32 << w_in).map(|_| rng.random_range(0..1u32 << w_out)).collect();
        TruthTable::new(w_in, w_out, rows).unwrap()
    }

    fn random_symmetric(w_in: u32, w_out: u32, rng: &mut ChaCha8Rng) -> TruthTable {
        let n = 1usize << w_in;
        let mask = (1u32 << w_out) - 1;
        let mut rows = vec![0; n];
        for y in 0..n / 2 {
            rows[y] = rng.random_range(0..=mask);
            rows[n - 1 - y] = !rows[y] & mask;
        }
        TruthTable::new(w_in, w_out, rows).unwrap()
    }

    /// Monotone threshold table, closer to designed LUTs than noise.
    fn staircase(w_in: u32, w_out: u32) -> TruthTable {
        let n = 1u32 << w_in;
        let rows = (0..n).map(|y| ((y as u64 * (1 << w_out)) / n as u64) as u32).collect();
        TruthTable::new(w_in, w_out, rows).unwrap()
    }

    #[test]
    fn gate_table_values() {
        let t = g();
        assert_eq!((t.and, t.or, t.not, t.nand, t.xor), (6, 6, 2, 4, 10));
        assert_eq!(t.dff, 18);
        assert_eq!(t.mux2, 20);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn netlist_cost_examples() {
        let mut n = Netlist::new(4);
        let a = n.and(Signal::Input(0), Signal::Input(1));
        n.outputs = vec![a];
        assert_eq!(n.cost(&g()), (6, 1));
        let mut n = Netlist::new(2);
        let x = n.push(GateKind::Xor, &[Signal::Input(0), Signal::Input(1)]);
        n.outputs = vec![x];
        assert_eq!(n.cost(&g()), (10, 1));
        let mut n = Netlist::new(4);
        let mut s = Signal::Input(0);
        for i in 1..4 {
            s = n.and(s, Signal::Input(i));
        }
        n.outputs = vec![s];
        assert_eq!(n.cost(&g()), (18, 3));
    }

    #[test]
    fn mux_tree_formula() {
        let c = mux_tree_cost(1, 1, false, &g());
        assert_eq!((c.muxes, c.stages), (1, 1));
        assert_eq!(mux_tree_cost(7, 3, false, &g()).muxes, 381);
        let plain = mux_tree_cost(7, 1, false, &g());
        let sym = mux_tree_cost(7, 1, true, &g());
        assert_eq!(plain.tree_muxes - sym.tree_muxes, 64);
        assert_eq!(sym.conversion_muxes, 6 + 1);
    }

    #[test]
    fn symmetric_mux_tree_is_cheaper() {
        for w_in in 2..=16 {
            for w_out in 1..=8 {
                let plain = mux_tree_cost(w_in, w_out, false, &g()).transistors;
                let sym = mux_tree_cost(w_in, w_out, true, &g()).transistors;
                if (w_in, w_out) == (2, 1) {
                    // Three muxes either way; the inverters tip the balance.
                    assert!(sym > plain);
                } else {
                    assert!(sym < plain, "w_in={w_in} w_out={w_out}");
                }
            }
        }
    }

    #[test]
    fn mux_netlist_matches_formula_and_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w_in in 1..=7 {
            let tt = random_table(w_in, 3, &mut rng);
            let net = mux_tree_netlist(&tt);
            let f = mux_tree_cost(w_in, 3, false, &g());
            assert_eq!(net.count(GateKind::Mux2) as u64, f.muxes);
            assert_eq!(net.depth(), f.stages);
            assert!(net.equivalent_to(&tt));
        }
    }

    #[test]
    fn dnf_known_functions() {
        let zero = TruthTable::new(3, 1, vec![0; 8]).unwrap();
        let c = dnf_minimize(&zero, &DnfOptions::default()).unwrap();
        assert!(c.outputs[0].is_empty());
        let xor = TruthTable::new(2, 1, vec![0, 1, 1, 0]).unwrap();
        let c = dnf_minimize(&xor, &DnfOptions::default()).unwrap();
        assert_eq!(c.outputs[0].len(), 2);
        assert!(c.outputs[0].iter().all(|p| p.literals(2) == 2));
        let one = TruthTable::new(3, 1, vec![1; 8]).unwrap();
        let c = dnf_minimize(&one, &DnfOptions::default()).unwrap();
        assert_eq!(c.outputs[0], vec![Cube { value: 0, mask: 7 }]);
    }

    #[test]
    fn dnf_random_tables_are_equivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let tt = random_table(8, 3, &mut rng);
            let c = dnf_minimize(&tt, &DnfOptions::default()).unwrap();
            assert!(!c.any_fallback());
            assert!(c.equivalent_to(&tt));
        }
    }

    #[test]
    fn dnf_limit_falls_back_to_minterms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tt = random_table(8, 2, &mut rng);
        let c = dnf_minimize(&tt, &DnfOptions { implicant_limit: 10 }).unwrap();
        assert!(c.any_fallback());
        assert!(c.equivalent_to(&tt));
        let big = TruthTable::new(17, 1, vec![0; 1 << 17]).unwrap();
        assert!(matches!(dnf_minimize(&big, &DnfOptions::default()), Err(Error::Capacity(_))));
    }

    #[test]
    fn shared_prefix_is_reused() {
        // x0 x1 x2 x3 + x0 x1 x2 !x3 on two outputs.
        let cover = Cover {
            num_inputs: 4,
            outputs: vec![
                vec![Cube { value: 0b1111, mask: 0 }],
                vec![Cube { value: 0b0111, mask: 0 }],
            ],
            fallback: vec![false; 2],
        };
        let shared = share_multilevel(&cover);
        let flat = unshared_multilevel(&cover);
        assert!(shared.count(GateKind::And) < flat.count(GateKind::And));
        assert_eq!(shared.count(GateKind::And), 4);
        for y in 0..16u32 {
            assert_eq!(shared.eval(y as u64) as u32, cover.eval(y));
        }
    }

    #[test]
    fn single_product_uses_k_minus_one_ands() {
        for k in 1..=8u32 {
            let cover = Cover {
                num_inputs: 8,
                outputs: vec![vec![Cube { value: 0xFF & !(0xFF << k), mask: 0xFF << k & 0xFF }]],
                fallback: vec![false],
            };
            let net = share_multilevel(&cover);
            assert_eq!(net.count(GateKind::And) as u32, k - 1);
            assert_eq!(net.count(GateKind::Or), 0);
        }
    }

    #[test]
    fn inverters_are_shared_per_input() {
        let cover = Cover {
            num_inputs: 3,
            outputs: vec![vec![Cube { value: 0b000, mask: 0b100 }, Cube { value: 0b100, mask: 0b010 }]],
            fallback: vec![false],
        };
        // Literals !x0 !x1 and !x0 x2: one inverter each for x0 and x1.
        let net = share_multilevel(&cover);
        assert_eq!(net.count(GateKind::Not), 2);
    }

    #[test]
    fn shared_never_exceeds_unshared() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..100 {
            let tt = if i % 2 == 0 { random_table(7, 3, &mut rng) } else { random_symmetric(8, 2, &mut rng) };
            let cover = dnf_minimize(&tt, &DnfOptions::default()).unwrap();
            let shared = share_multilevel(&cover);
            let flat = unshared_multilevel(&cover);
            assert!(shared.transistors(&g()) <= flat.transistors(&g()));
            assert!(shared.equivalent_to(&tt));
        }
    }

    #[test]
    fn symmetric_realizations_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for w in 2..=9 {
            let tt = random_symmetric(w, 3, &mut rng);
            for r in Realization::ALL {
                let sym = realize_symmetric(&tt, r, &DnfOptions::default()).unwrap();
                assert!(sym.netlist.equivalent_to(&tt), "w={w} {r:?}");
            }
        }
        let asym = TruthTable::new(2, 1, vec![1, 1, 1, 1]).unwrap();
        assert!(realize_symmetric(&asym, Realization::MuxTree, &DnfOptions::default()).is_err());
    }

    #[test]
    fn structured_table_minimizes_well() {
        let tt = staircase(10, 4);
        let c = dnf_minimize(&tt, &DnfOptions::default()).unwrap();
        assert!(c.equivalent_to(&tt));
        assert!(c.product_count() < 64);
        let shared = share_multilevel(&c);
        assert!(shared.transistors(&g()) < mux_tree_cost(10, 4, false, &g()).transistors);
    }

    #[test]
    fn adder_model() {
        assert_eq!(full_adder_cell(&g()), 38);
        assert_eq!(prefix_nodes(1), 0);
        assert_eq!(prefix_nodes(2), 1);
        assert_eq!(prefix_nodes(8), 12);
        assert_eq!(prefix_nodes(16), 32);
        for w in [2, 4, 8, 11, 16, 32] {
            let c1 = adder_cost(w, AdderModel::LadnerFischer, &g()).logic;
            let c2 = adder_cost(2 * w, AdderModel::LadnerFischer, &g()).logic;
            // Superlinear, with at most one extra prefix level of nodes.
            assert!(c2 > 2 * c1);
            assert!(c2 <= 2 * c1 + w as u64 * (g().and + g().or));
            assert!(adder_cost(2 * w, AdderModel::LadnerFischer, &g()).levels <= adder_cost(w, AdderModel::LadnerFischer, &g()).levels + 2);
        }
    }

    #[test]
    fn four_state_update_has_eight_branch_adders() {
        let spec = ChannelSpec::bpsk(&[1.0, 0.5, 0.25], 0.5).unwrap();
        let t = build_trellis(&spec).unwrap();
        let fmt = FixedPointFormat::for_channel(&spec, 7, 11).unwrap();
        let c = arithmetic_update_cost(&t, &fmt, ObservationModel::Ungerboeck, AdderModel::LadnerFischer, &g());
        assert_eq!(c.branch_adders, 8);
        assert_eq!(c.metric_width, 33);
        let forney = arithmetic_update_cost(&t, &fmt, ObservationModel::Forney, AdderModel::LadnerFischer, &g());
        assert!(forney.alpha.logic > c.alpha.logic);
    }

    fn toy_model(update: u64, memory_bits: u32) -> CostModel {
        let blk = BlockCost {
            logic: update,
            levels: 8,
            io_bits: 0,
        };
        CostModel {
            label: "toy".into(),
            iterations: vec![IterationBlocks {
                alpha: blk,
                beta: blk,
                final_update: BlockCost { logic: 0, ..blk },
                w_alpha: memory_bits,
                w_beta: memory_bits,
                w_e: 0,
            }],
            d_p: 8,
            gates: g(),
        }
    }

    #[test]
    fn memory_series_identities() {
        assert_eq!(shift_register_series(10), 20);
        for n_b in (2..=64).step_by(2) {
            let explicit: u128 = (1..n_b as u128 / 2).map(|k| 2 * k).sum();
            assert_eq!(shift_register_series(n_b), explicit);
            assert_eq!(x_structure_registers(n_b), explicit);
        }
    }

    #[test]
    fn pipeline_formula_degeneracies() {
        let m = toy_model(100, 4);
        let r = pipeline_memory_cost(&m, 10, 0).unwrap();
        assert_eq!(r.xi_update, 200.0);
        assert_eq!(r.eq_numerator(), r.update_numerator() + r.memory_numerator());
        assert!((r.xi_eq - r.xi_update - r.xi_memory).abs() < 1e-9);
        assert!(pipeline_memory_cost(&m, 11, 10).is_err());
        let mut deep = m.clone();
        deep.iterations[0].alpha.levels = 16;
        deep.iterations[0].beta.levels = 16;
        let r2 = pipeline_memory_cost(&deep, 10, 0).unwrap();
        assert_eq!(r2.iterations[0].s_p, 2 * r.iterations[0].s_p);
        assert_eq!(r2.memory_numerator(), 2 * r.memory_numerator());
    }

    #[test]
    fn subblock_optimum_extremes() {
        let no_memory = toy_model(1000, 0);
        assert_eq!(optimize_subblock(&no_memory, 10).unwrap().n_b, SUBBLOCK_RANGE.1);
        let no_update = toy_model(0, 8);
        assert_eq!(optimize_subblock(&no_update, 10).unwrap().n_b, 2);
        let both = toy_model(5000, 8);
        let best = optimize_subblock(&both, 10).unwrap();
        for nb in [best.n_b.saturating_sub(2), best.n_b + 2] {
            if nb >= 2 {
                assert!(best.xi_eq <= pipeline_memory_cost(&both, nb, 10).unwrap().xi_eq);
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(width_label(5, &[8, 8, 7]), "(5,(8,8,7))");
        assert_eq!(width_label(5, &[6, 6, 6]), "(5,6)");
        let spec = ChannelSpec::preset("epr4", 0.5).unwrap();
        let t = build_trellis(&spec).unwrap();
        let fmt = FixedPointFormat::for_channel(&spec, 7, 11).unwrap();
        let m = arithmetic_cost_model(&t, &fmt, ObservationModel::Ungerboeck, 1, &g());
        assert_eq!(m.label, "(7,77)");
    }

    proptest! {
        #[test]
        fn every_realization_is_equivalent(seed in any::<u64>(), w_in in 1u32..=9, w_out in 1u32..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tt = random_table(w_in, w_out, &mut rng);
            for r in Realization::ALL {
                let net = realize(&tt, r, &DnfOptions::default()).unwrap();
                prop_assert!(net.netlist.equivalent_to(&tt));
            }
        }

        #[test]
        fn memory_closed_form(h in 1usize..2000) {
            let n_b = 2 * h;
            prop_assert_eq!(shift_register_series(n_b), x_structure_registers(n_b));
        }
    }
}

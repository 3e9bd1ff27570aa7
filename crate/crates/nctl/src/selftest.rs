//! Built-in oracle checks run by `nctl selftest`.

use std::time::Instant;

use nctl_core::fmn::reference::fmn_log_prob_batch;
use nctl_core::fmn::{BaseModel, BernoulliModel};
use nctl_core::{
    Fmn, FmnConfig, GgmParams, GgmWeights, GlnConfig, GlnNetwork, KtModel, LayerSpec, NctlConfig,
    NctlNetwork, Ptw,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SelftestOptions {
    /// Perturb one mixing weight inside the gradient check, which must then fail.
    pub inject_fault: bool,
}

type Check = Box<dyn Fn() -> (bool, String)>;

pub fn run_selftest(opts: SelftestOptions) -> Vec<CheckResult> {
    let checks: [(&'static str, Check); 7] = [
        ("ptw-brute-force", Box::new(|| ptw_brute_force_check(4, 16))),
        ("fmn-telescoping", Box::new(telescoping_check)),
        ("fmn-ptw-reduction", Box::new(ptw_reduction_check)),
        ("bypass-gln-reduction", Box::new(|| bypass_check(2000))),
        (
            "gradient",
            Box::new(move || gradient_check(1000, opts.inject_fault)),
        ),
        ("collapse", Box::new(|| collapse_check(1000))),
        ("complexity", Box::new(complexity_check)),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = f();
            CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

/// Keeps the largest error seen; a NaN sticks.
fn track_worst(worst: &mut f64, err: f64) {
    if !(err <= *worst) && !worst.is_nan() {
        *worst = err;
    }
}

/// Leaves `(start, len)` and code length in bits of every pruning of the
/// depth-`depth` tree over `[start, start + len)`.
pub fn prunings(depth: u32, start: usize, len: usize) -> Vec<(Vec<(usize, usize)>, u32)> {
    if depth == 0 {
        return vec![(vec![(start, len)], 0)];
    }
    let half = len / 2;
    let left = prunings(depth - 1, start, half);
    let right = prunings(depth - 1, start + half, half);
    let mut out = vec![(vec![(start, len)], 1)];
    for (l, cl) in &left {
        for (r, cr) in &right {
            let mut leaves = l.clone();
            leaves.extend_from_slice(r);
            out.push((leaves, 1 + cl + cr));
        }
    }
    out
}

/// KT probability from the closed product form, independent of the model code.
fn kt_segment_log_prob(bits: &[bool]) -> f64 {
    let (mut zeros, mut ones, mut lp) = (0.0, 0.0, 0.0);
    for &b in bits {
        let p = if b { ones + 0.5 } else { zeros + 0.5 } / (zeros + ones + 1.0);
        lp += f64::ln(p);
        if b {
            ones += 1.0;
        } else {
            zeros += 1.0;
        }
    }
    lp
}

fn bernoulli_segment_log_prob(theta: f64, bits: &[bool]) -> f64 {
    bits.iter()
        .map(|&b| if b { theta.ln() } else { (1.0 - theta).ln() })
        .sum()
}

/// Every pruning of a depth-`d` tree, with leaves stored as heap-numbered
/// node ids (node `(start, len)` is `span/len + start/len`).
pub struct Prunings {
    pub span: usize,
    pub leaves: Vec<Vec<usize>>,
    pub bits: Vec<u32>,
    intervals: Vec<(usize, usize)>,
}

impl Prunings {
    pub fn new(depth: u32) -> Self {
        let span = 1usize << depth;
        let mut intervals = vec![(0, 0); 2 * span];
        let mut leaves = Vec::new();
        let mut bits = Vec::new();
        for (ls, cost) in prunings(depth, 0, span) {
            leaves.push(
                ls.iter()
                    .map(|&(s, l)| {
                        let key = span / l + s / l;
                        intervals[key] = (s, l);
                        key
                    })
                    .collect(),
            );
            bits.push(cost);
        }
        Self {
            span,
            leaves,
            bits,
            intervals,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// PTW log-probability of `bits` by summing over every pruning
    /// explicitly; each dyadic interval's segment probability is computed once.
    pub fn log_prob(&self, bits: &[bool], segment: impl Fn(&[bool]) -> f64) -> f64 {
        let mut node = vec![0.0; 2 * self.span];
        for (key, &(s, l)) in self.intervals.iter().enumerate() {
            if l > 0 {
                node[key] = segment(&bits[s.min(bits.len())..(s + l).min(bits.len())]);
            }
        }
        let terms: Vec<f64> = self
            .leaves
            .iter()
            .zip(&self.bits)
            .map(|(leaves, &cost)| {
                leaves.iter().map(|&k| node[k]).sum::<f64>() - cost as f64 * std::f64::consts::LN_2
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }
}

fn dfs_compare<M: BaseModel<Input = ()>>(
    fmn: &Fmn<M>,
    prefix: &mut Vec<bool>,
    max_len: usize,
    brute: &dyn Fn(&[bool]) -> f64,
    worst: &mut f64,
    visited: &mut u64,
) {
    *visited += 1;
    track_worst(worst, (fmn.log_prob() - brute(prefix)).abs());
    if prefix.len() == max_len {
        return;
    }
    for x in [false, true] {
        let mut next = fmn.clone();
        next.observe(&(), x).expect("within capacity");
        prefix.push(x);
        dfs_compare(&next, prefix, max_len, brute, worst, visited);
        prefix.pop();
    }
}

/// Pool-free FMN against brute-force enumeration for every string up to
/// `min(2^d, max_len)` symbols, depths `0..=max_depth`, KT and Bernoulli bases.
/// Returns the worst absolute log-probability gap and the strings visited.
pub fn ptw_brute_force(max_depth: u32, max_len: usize) -> (f64, u64) {
    let mut worst = 0.0f64;
    let mut visited = 0;
    for d in 0..=max_depth {
        let n = (1usize << d).min(max_len);
        let trees = Prunings::new(d);
        let kt = |b: &[bool]| trees.log_prob(b, kt_segment_log_prob);
        let fmn = Fmn::new(KtModel::new(), FmnConfig::without_pool(d)).expect("valid");
        dfs_compare(&fmn, &mut Vec::new(), n, &kt, &mut worst, &mut visited);
        let theta = 0.3;
        let be = |b: &[bool]| trees.log_prob(b, |s| bernoulli_segment_log_prob(theta, s));
        let fmn = Fmn::new(BernoulliModel::new(theta), FmnConfig::without_pool(d)).expect("valid");
        dfs_compare(&fmn, &mut Vec::new(), n, &be, &mut worst, &mut visited);
    }
    (worst, visited)
}

fn ptw_brute_force_check(max_depth: u32, max_len: usize) -> (bool, String) {
    let (worst, visited) = ptw_brute_force(max_depth, max_len);
    (
        worst < 1e-9,
        format!("{visited} strings, max |diff| {worst:.2e}"),
    )
}

fn piecewise_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut p = 0.5;
    (0..n)
        .map(|t| {
            if t % 24 == 0 {
                p = if rng.random_bool(0.5) { 0.1 } else { 0.9 };
            }
            rng.random_bool(p)
        })
        .collect()
}

fn telescoping_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut admissions = 0;
    for _ in 0..40 {
        let bits = piecewise_bits(&mut rng, 256);
        let cfg = FmnConfig {
            depth: 8,
            capacity: rng.random_range(1..6),
            admission_threshold: rng.random_range(-1.0..2.0),
        };
        let mut fmn = Fmn::new(KtModel::new(), cfg).expect("valid");
        let mut pools = Vec::new();
        let mut total = 0.0;
        for &x in &bits {
            pools.push(
                fmn.pool()
                    .members()
                    .iter()
                    .map(|m| m.model)
                    .collect::<Vec<_>>(),
            );
            let f = fmn.forecast(&()).expect("capacity");
            total += f.probability_of(x).ln();
            fmn.observe_with(f, &(), x).expect("capacity");
        }
        admissions += fmn.stats().admissions;
        let batch = fmn_log_prob_batch(8, &pools, &vec![(); bits.len()], &bits).expect("valid");
        track_worst(&mut worst, (batch - total).abs());
    }
    (
        worst < 1e-9 && admissions > 0,
        format!("40 strings of 256, {admissions} admissions, max |diff| {worst:.2e}"),
    )
}

fn ptw_reduction_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bits = piecewise_bits(&mut rng, 1024);
    let mut fmn = Fmn::new(KtModel::new(), FmnConfig::without_pool(10)).expect("valid");
    let mut ptw = Ptw::new(KtModel::new(), 10).expect("valid");
    let mut mismatches = 0;
    for &x in &bits {
        let a = fmn.observe(&(), x).expect("capacity");
        let b = ptw.observe(&(), x).expect("capacity");
        if a.to_bits() != b.to_bits() {
            mismatches += 1;
        }
    }
    (
        mismatches == 0,
        format!("1024 steps, {mismatches} bit mismatches"),
    )
}

fn small_gln(rng: &mut ChaCha8Rng, input_dim: usize, lr: f64) -> GlnConfig {
    let depth = rng.random_range(1..4);
    let mut sizes: Vec<usize> = (1..depth).map(|_| rng.random_range(1..5)).collect();
    sizes.push(1);
    GlnConfig {
        input_dim,
        context_bits: sizes.iter().map(|_| rng.random_range(0..4)).collect(),
        layers: LayerSpec::new(sizes).expect("nonempty"),
        params: GgmParams::new(lr),
        bias: rng.random_bool(0.5),
        seed: rng.random(),
    }
}

fn bypass_check(steps: usize) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gln_cfg = GlnConfig {
        input_dim: 8,
        layers: LayerSpec::new(vec![6, 3, 1]).expect("nonempty"),
        context_bits: vec![3, 2, 1],
        params: GgmParams::new(0.05),
        bias: true,
        seed: 17,
    };
    let mut gln = GlnNetwork::new(gln_cfg.clone()).expect("valid");
    let mut nctl = NctlNetwork::new(NctlConfig {
        gln: gln_cfg,
        fmn: FmnConfig::new(12),
        bypass_fmn: true,
    })
    .expect("valid");
    let mut mismatches = 0;
    for _ in 0..steps {
        let z: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = z[0] - z[5] > 0.3;
        let a = nctl.learn(&z, x).expect("step");
        let b = gln.update(&z, x).expect("step");
        if a.to_bits() != b.to_bits() {
            mismatches += 1;
        }
    }
    let same = nctl.map_network() == gln;
    (
        mismatches == 0 && same,
        format!("{steps} steps, {mismatches} output mismatches, final weights equal: {same}"),
    )
}

fn log_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

fn mixer_loss(w: &[f64], logits: &[f64], target: bool) -> f64 {
    let a: f64 = w.iter().zip(logits).map(|(w, l)| w * l).sum();
    if target {
        -log_sigmoid(a)
    } else {
        -log_sigmoid(-a)
    }
}

/// Worst relative error between the update's implied gradient and central
/// differences of the log loss over `cases` random mixers.
pub fn gradient_worst(cases: usize, inject_fault: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(2..9);
        let w: Vec<f64> = (0..k)
            .map(|_| rng.random_range(-1.0..1.0) / k as f64)
            .collect();
        let logits: Vec<f64> = (0..k)
            .map(|_| {
                let p: f64 = rng.random_range(0.01..0.99);
                (p / (1.0 - p)).ln()
            })
            .collect();
        let target = rng.random_bool(0.5);
        let mut weights = GgmWeights::from_rows(vec![w.clone()]).expect("one row");
        let mut seen = w.clone();
        if inject_fault {
            seen[0] += 0.5;
        }
        let q = GgmWeights::from_rows(vec![seen])
            .expect("one row")
            .predict(0, &logits);
        weights.apply_gradient(0, &logits, q, target, 1.0, f64::INFINITY);
        let analytic: Vec<f64> = w.iter().zip(weights.row(0)).map(|(a, b)| a - b).collect();
        let h = 1e-5;
        let numeric: Vec<f64> = (0..k)
            .map(|i| {
                let mut up = w.clone();
                let mut down = w.clone();
                up[i] += h;
                down[i] -= h;
                (mixer_loss(&up, &logits, target) - mixer_loss(&down, &logits, target)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        track_worst(&mut worst, diff / scale.max(1e-12));
    }
    worst
}

fn gradient_check(cases: usize, inject_fault: bool) -> (bool, String) {
    let worst = gradient_worst(cases, inject_fault);
    let tag = if inject_fault {
        " (fault injected)"
    } else {
        ""
    };
    (
        worst < 1e-4,
        format!("{cases} cases, max relative error {worst:.2e}{tag}"),
    )
}

/// Worst gap between the collapsed affine map and the forward pass over
/// `cases` random trained networks at points where no clipping occurs.
pub fn collapse_worst(cases: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut skipped = 0;
    let mut done = 0;
    while done < cases {
        let dim = rng.random_range(2..7);
        let mut net = GlnNetwork::new(small_gln(&mut rng, dim, 0.1)).expect("valid");
        for _ in 0..20 {
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            net.update(&z, z[0] > 0.0).expect("step");
        }
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let act = net.predict(&z).expect("forward");
        if act.clipping_active(net.config().params.prob_clip) {
            skipped += 1;
            continue;
        }
        let e = net.effective_weights(&z).expect("collapse");
        track_worst(&mut worst, (e.probability(&z) - act.output).abs());
        done += 1;
    }
    (worst, skipped)
}

fn collapse_check(cases: usize) -> (bool, String) {
    let (worst, skipped) = collapse_worst(cases);
    (
        worst < 1e-9,
        format!("{cases} cases ({skipped} clipped draws skipped), max |diff| {worst:.2e}"),
    )
}

fn complexity_check() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let depth = 9;
    let capacity = 4;
    let cfg = NctlConfig {
        gln: GlnConfig {
            input_dim: 6,
            layers: LayerSpec::new(vec![4, 2, 1]).expect("nonempty"),
            context_bits: vec![2, 2, 1],
            params: GgmParams::new(0.1),
            bias: true,
            seed: 7,
        },
        fmn: FmnConfig {
            depth,
            capacity,
            admission_threshold: 0.1,
        },
        bypass_fmn: false,
    };
    let m = cfg.gln.neuron_count() as u64;
    let bound = capacity as u64 * (depth as u64 + 1);
    let live_bound = capacity as u64 * (depth as u64 + 2);
    let mut net = NctlNetwork::new(cfg).expect("valid");
    let mut worst_calls = 0;
    let mut worst_live = 0;
    for t in 0..(1usize << depth) {
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = if (t / 64) % 2 == 0 {
            z[0] > 0.0
        } else {
            z[1] < 0.0
        };
        net.learn(&z, x).expect("step");
        let stats = net.fmn_stats();
        let calls: u64 = stats
            .iter()
            .map(|s| s.last_step_predictions.max(s.last_step_updates))
            .sum();
        worst_calls = worst_calls.max(calls);
        worst_live = worst_live.max(stats.iter().map(|s| s.max_live_copies).max().unwrap_or(0));
    }
    (
        worst_calls <= m * bound && worst_live <= live_bound,
        format!(
            "max calls/step {worst_calls} (bound {}), max live copies {worst_live} (bound {live_bound})",
            m * bound
        ),
    )
}

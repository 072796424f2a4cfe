//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria that need the real CIFAR-10 files read them from
//! `AMPGRAD_CIFAR10_DIR`; without it the training criteria that only check
//! equivalence or determinism run on a CIFAR-shaped synthetic proxy, and the
//! ones that need real images are reported as SKIP.

use std::cell::Cell;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ampgrad::config::DatasetSpec;
use ampgrad::data::{prepare, Prepared};
use ampgrad::runner::{run_one, RunSpec};
use ampgrad::ExperimentConfig;
use ampgrad_core::amplification::{amp_size, AmpSelection};
use ampgrad_core::autograd::{check_gradients, BnParams, Graph, Mode, NodeId, ParamId, RunningStats};
use ampgrad_core::checkpoint;
use ampgrad_core::data::{decode_records, encode_record, read_batch_file, load_cifar10, CIFAR_RECORD_BYTES};
use ampgrad_core::nn::{build_model, ArchConfig};
use ampgrad_core::rng::{self, Domain};
use ampgrad_core::schedule::{parse_schedule, Schedule, Template};
use ampgrad_core::trainer::{train, TrainOptions};
use ampgrad_core::Tensor;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const CIFAR_ENV: &str = "AMPGRAD_CIFAR10_DIR";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn cifar_dir() -> Option<PathBuf> {
    std::env::var_os(CIFAR_ENV).map(PathBuf::from)
}

// ---------------------------------------------------------------- 1

fn rand_f64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, Domain::Synthetic, 101);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng::unit_f64(&mut r) * 2.0 - 1.0).collect()).unwrap()
}

/// Distinct values, so max-pool and ReLU stay away from their kinks.
fn spread_f64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, Domain::Synthetic, 102), &mut order);
    Tensor::from_vec(shape, order.into_iter().map(|k| (k as f64 + 0.5) / n as f64 * 2.0 - 1.0).collect()).unwrap()
}

fn gradient_oracle() -> Verdict {
    const EPS: f64 = 1e-6;
    const FLOOR: f64 = 1e-6;
    let started = Instant::now();
    let bn = BnParams {
        eps: 1e-5,
        momentum: 0.1,
    };
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name, errs: Vec<f64>| worst.push((name, errs.into_iter().fold(0.0, f64::max)));

    let l = [rand_f64(&[4, 5], 1), rand_f64(&[3, 5], 2), rand_f64(&[3], 3)];
    record("linear", check_gradients(&l, |g, v| g.linear(v[0], v[1], v[2]), EPS, FLOOR).unwrap());
    let c = [rand_f64(&[1, 2, 4, 4], 4), rand_f64(&[2, 2, 3, 3], 5), rand_f64(&[2], 6)];
    record("conv2d", check_gradients(&c, |g, v| g.conv2d(v[0], v[1], v[2], 1, 1), EPS, FLOOR).unwrap());
    let c = [rand_f64(&[1, 2, 5, 5], 7), rand_f64(&[2, 2, 3, 3], 8), rand_f64(&[2], 9)];
    record("conv2d/s2", check_gradients(&c, |g, v| g.conv2d(v[0], v[1], v[2], 2, 1), EPS, FLOOR).unwrap());
    let b = [rand_f64(&[2, 2, 4, 4], 10), rand_f64(&[2], 11), rand_f64(&[2], 12)];
    let mut stats = RunningStats::new(2);
    record(
        "batchnorm",
        check_gradients(&b, |g, v| g.batch_norm(v[0], v[1], v[2], &mut stats, bn, Mode::Train), EPS, FLOOR).unwrap(),
    );
    record("relu", check_gradients(&[spread_f64(&[4, 8], 13)], |g, v| g.relu(v[0]), EPS, FLOOR).unwrap());
    let x = spread_f64(&[2, 2, 4, 4], 14);
    record("maxpool", check_gradients(&[x.clone()], |g, v| g.max_pool(v[0], 2, 2), EPS, FLOOR).unwrap());
    record("avgpool", check_gradients(&[x], |g, v| g.avg_pool(v[0], 2, 2), EPS, FLOOR).unwrap());
    record(
        "softmax-ce",
        check_gradients(&[rand_f64(&[4, 5], 15)], |g, v| g.softmax_cross_entropy(v[0], &[0, 3, 4, 1]), EPS, FLOOR)
            .unwrap(),
    );
    let r = [rand_f64(&[3, 4], 16), rand_f64(&[3, 4], 17)];
    record("residual add", check_gradients(&r, |g, v| g.residual_add(v[0], v[1]), EPS, FLOOR).unwrap());

    let secs = started.elapsed().as_secs_f64();
    let (name, err) = worst.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let ok = worst.iter().all(|(_, e)| *e < 1e-4) && secs < 30.0;
    verdict(
        ok,
        format!("{} layers, max rel err {:.2e} ({}), {:.2} s (limits 1e-4, 30 s)", worst.len(), err, name, secs),
    )
}

// ---------------------------------------------------------------- 2

#[derive(Clone, Copy, Debug)]
enum Op {
    Linear(usize),
    Relu,
    Bn,
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![(2usize..7).prop_map(Op::Linear), Just(Op::Relu), Just(Op::Bn)]
}

struct Amped {
    layers: Vec<(NodeId, Vec<ParamId>)>,
    grads: ampgrad_core::autograd::GradientMap<f32>,
}

/// Optional conv/BN/ReLU/pool stem, random dense ops, linear head, CE loss.
fn random_graph(conv: bool, ops: &[Op], seed: u64, amp: Option<usize>) -> Amped {
    let mut r = rng::stream(seed, Domain::Synthetic, 103);
    let mut rt = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| (rng::unit_f64(&mut r) * 2.0 - 1.0) as f32).collect()).unwrap()
    };
    let bn = BnParams {
        eps: 1e-5,
        momentum: 0.1,
    };
    let mut g: Graph<f32> = Graph::new();
    let mut next = 0;
    let mut param = |g: &mut Graph<f32>, t: Tensor<f32>| {
        next += 1;
        (g.param(ParamId(next - 1), t), ParamId(next - 1))
    };
    let mut layers = Vec::new();
    let (mut h, mut width);
    if conv {
        h = g.constant(rt(&[6, 2, 4, 4]));
        let (k, kid) = param(&mut g, rt(&[3, 2, 3, 3]));
        let (b, bid) = param(&mut g, rt(&[3]));
        h = g.conv2d(h, k, b, 1, 1).unwrap();
        layers.push((h, vec![kid, bid]));
        let (ga, gid) = param(&mut g, rt(&[3]));
        let (be, beid) = param(&mut g, rt(&[3]));
        h = g.batch_norm(h, ga, be, &mut RunningStats::new(3), bn, Mode::Train).unwrap();
        layers.push((h, vec![gid, beid]));
        h = g.relu(h).unwrap();
        layers.push((h, vec![]));
        h = g.max_pool(h, 2, 2).unwrap();
        layers.push((h, vec![]));
        h = g.flatten(h).unwrap();
        width = 12;
    } else {
        h = g.constant(rt(&[6, 5]));
        width = 5;
    }
    for op in ops.iter().chain(std::iter::once(&Op::Linear(3))) {
        let (node, params) = match *op {
            Op::Linear(out) => {
                let (w, wid) = param(&mut g, rt(&[out, width]));
                let (b, bid) = param(&mut g, rt(&[out]));
                width = out;
                (g.linear(h, w, b).unwrap(), vec![wid, bid])
            }
            Op::Relu => (g.relu(h).unwrap(), vec![]),
            Op::Bn => {
                let (ga, gid) = param(&mut g, rt(&[width]));
                let (be, beid) = param(&mut g, rt(&[width]));
                (g.batch_norm(h, ga, be, &mut RunningStats::new(width), bn, Mode::Train).unwrap(), vec![gid, beid])
            }
        };
        h = node;
        layers.push((node, params));
    }
    let loss = g.softmax_cross_entropy(h, &[0, 1, 2, 0, 1, 2]).unwrap();
    if let Some(sel) = amp {
        g.attach_grad_transform(layers[sel % layers.len()].0, 2.0).unwrap();
    }
    let grads = g.backward(loss).unwrap();
    Amped { layers, grads }
}

fn amplification_exactness() -> Verdict {
    let mut runner = TestRunner::new(PropConfig {
        cases: 50,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let cases = Cell::new(0);
    let strategy = (any::<bool>(), proptest::collection::vec(op_strategy(), 1..6), any::<u64>(), any::<usize>());
    let result = runner.run(&strategy, |(conv, ops, seed, pick)| {
        cases.set(cases.get() + 1);
        let base = random_graph(conv, &ops, seed, None);
        let sel = pick % base.layers.len();
        let amped = random_graph(conv, &ops, seed, Some(sel));
        for (i, (_, params)) in base.layers.iter().enumerate() {
            for &p in params {
                let b = base.grads.get(p).unwrap().data();
                let a = amped.grads.get(p).unwrap().data();
                for (x, y) in b.iter().zip(a) {
                    let expect = if i <= sel { x * 2.0 } else { *x };
                    prop_assert_eq!(expect.to_bits(), y.to_bits(), "layer {} (selected {})", i, sel);
                }
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => Verdict::Pass(format!("{} random graphs, upstream grads exactly 2x, downstream bit-identical", cases.get())),
        Err(e) => Verdict::Fail(format!("{}", e)),
    }
}

// ---------------------------------------------------------------- 3, 7, 8

/// Desk-scale data: the CIFAR subset when available, else the proxy.
fn desk_data() -> (Prepared, String) {
    let spec = match cifar_dir() {
        Some(dir) => DatasetSpec::Cifar10 {
            dir,
            train_subset: Some(5000),
            test_subset: Some(1000),
            subset_seed: 0,
        },
        None => DatasetSpec::Patterns {
            seed: 11,
            train: 5000,
            test: 1000,
            classes: 10,
            shape: [3, 32, 32],
            signal: 0.1,
            max_shift: 2,
        },
    };
    let name = match &spec {
        DatasetSpec::Cifar10 { .. } => "CIFAR-10 5k/1k subset".to_string(),
        _ => "CIFAR-shaped synthetic proxy 5k/1k".to_string(),
    };
    (prepare(&spec).expect("desk data"), name)
}

fn trajectory(data: &Prepared, schedule: &Schedule, seed: u64) -> Vec<Vec<u8>> {
    let cfg = ArchConfig::preset("cnn-small", data.train.sample_shape(), data.train.num_classes).unwrap();
    let mut model = build_model(&cfg, seed).unwrap();
    let opts = TrainOptions {
        seed,
        ..Default::default()
    };
    let mut snaps = Vec::new();
    train(&mut model, schedule, &data.train, &data.test, &opts, |r| snaps.push(checkpoint::to_bytes(r.model))).unwrap();
    snaps
}

fn windows(beta: f64, gamma: f64) -> Schedule {
    let mut phases = Template::DESK.baseline().unwrap().phases().to_vec();
    for p in &mut phases[1..3] {
        p.beta = beta;
        p.gamma = gamma;
    }
    Schedule::new(phases).unwrap()
}

fn equivalence(data: &Prepared, source: &str) -> Verdict {
    let started = Instant::now();
    let base = trajectory(data, &Template::DESK.baseline().unwrap(), 0);
    let unit = trajectory(data, &windows(0.5, 1.0), 0);
    let zero = trajectory(data, &windows(0.0, 5.0), 0);
    let secs = started.elapsed().as_secs_f64();
    let ok = base.len() == 30 && unit == base && zero == base && secs < 600.0;
    verdict(
        ok,
        format!(
            "cnn-small on {}, 30 epochs x 3 runs: (0.5, 1) {}, (0, 5) {}; {:.0} s (limit 600 s)",
            source,
            if unit == base { "bit-identical" } else { "DIFFERS" },
            if zero == base { "bit-identical" } else { "DIFFERS" },
            secs
        ),
    )
}

fn desk_config(out: &Path, dir: PathBuf) -> ExperimentConfig {
    let text = format!(
        r#"
arch = "cnn-small"
output_dir = "{}"
seeds = [0, 1, 2]
baseline_seeds = [0, 1, 2]
template = "desk"
[dataset]
kind = "cifar10"
dir = "{}"
train_subset = 5000
test_subset = 1000
[schedule]
labels = ["S1_0.5"]
"#,
        out.display(),
        dir.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn desk_sanity(out: &Path) -> Verdict {
    let Some(dir) = cifar_dir() else {
        return Verdict::Skip(format!("{} not set; needs the real CIFAR-10 binaries", CIFAR_ENV));
    };
    let cfg = desk_config(out, dir);
    let outcome = match ampgrad::run(&cfg) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(format!("{:#}", e)),
    };
    if !outcome.failures.is_empty() {
        return Verdict::Fail(format!("{} runs failed", outcome.failures.len()));
    }
    let s = &outcome.summary;
    let min_train = s.runs.iter().map(|r| r.final_train_acc).fold(f64::INFINITY, f64::min);
    let base = s.baseline.mean.unwrap();
    let amp = s.points[0].mean.unwrap();
    verdict(
        min_train > 70.0 && amp >= base - 1.0,
        format!(
            "min final train acc {:.2}% (> 70), S1_0.5 mean test {:.2}% vs baseline {:.2}% (>= baseline - 1.0)",
            min_train, amp, base
        ),
    )
}

fn metric_rows(path: &Path) -> Vec<String> {
    // every column but wall_ms
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(8);
            cells.join(",")
        })
        .collect()
}

fn determinism(data: &Prepared, source: &str, out: &Path) -> Verdict {
    let spec = RunSpec {
        label: "S1_0.5".into(),
        schedule: Template::DESK.s1(0.5, 2.0).unwrap(),
        seed: 0,
        baseline: false,
    };
    // with real data the first invocation is the criterion-7 run
    let dir = cifar_dir();
    let first_root = out.join("desk");
    let mut csvs = Vec::new();
    for (k, root) in [first_root.clone(), out.join("rerun")].iter().enumerate() {
        let existing = root.join(spec.rel_dir()).join("metrics.csv");
        if k == 0 && dir.is_some() && existing.exists() {
            csvs.push(existing);
            continue;
        }
        let mut cfg = desk_config(root, dir.clone().unwrap_or_default());
        cfg.seeds = vec![0];
        if let Err(e) = run_one(&cfg, data, &spec) {
            return Verdict::Fail(format!("{:#}", e));
        }
        csvs.push(existing);
    }
    let (a, b) = (metric_rows(&csvs[0]), metric_rows(&csvs[1]));
    verdict(
        a == b && a.len() == 31,
        format!("S1_0.5 seed 0 on {}: {} metric rows, identical apart from wall_ms: {}", source, a.len() - 1, a == b),
    )
}

// ---------------------------------------------------------------- 4

fn selection() -> Verdict {
    let exe = env!("CARGO_BIN_EXE_ampgrad");
    let betas: Vec<String> = (0..=10).map(|k| format!("{}", k as f64 / 10.0)).collect();
    let mut problems = Vec::new();
    for n in [8usize, 16, 31] {
        let invoke = || {
            let out = Command::new(exe)
                .args(["select", "--group-size", &n.to_string(), "--seed", "1234", "--beta", &betas.join(",")])
                .env("RUST_LOG", "off")
                .output()
                .expect("spawn ampgrad");
            String::from_utf8(out.stdout).unwrap()
        };
        let runs = [invoke(), invoke(), invoke()];
        if runs[0] != runs[1] || runs[1] != runs[2] || runs[0].is_empty() {
            problems.push(format!("|G|={}: selections differ across restarts", n));
        }
        for (k, line) in runs[0].lines().enumerate() {
            let sel = AmpSelection::parse_dump_line(line).unwrap();
            let beta = k as f64 / 10.0;
            let expect = (beta * n as f64).round() as usize;
            if sel.selected.len() != expect || amp_size(beta, n) != expect {
                problems.push(format!("|G|={} beta={}: {} selected, expected {}", n, beta, sel.selected.len(), expect));
            }
            if k == 10 && sel.selected != sel.group {
                problems.push(format!("|G|={}: beta=1 is not the whole group", n));
            }
        }
    }
    if problems.is_empty() {
        Verdict::Pass("|G| in {8,16,31} x 11 ratios: sizes round(beta|G|), 3 process restarts identical, beta=1 -> G".into())
    } else {
        Verdict::Fail(problems.join("; "))
    }
}

// ---------------------------------------------------------------- 5

fn schedule_lookups() -> Verdict {
    let s = parse_schedule("[(50,0.1,0,1),(100,0.1,0,1),(130,0.01,0,1),(150,0.01,0,1)]").unwrap();
    let lr = |e| s.lr_at_epoch(e).unwrap().lr;
    let mut ok = [1, 50, 100].iter().all(|&e| lr(e) == 0.1) && [101, 130, 150].iter().all(|&e| lr(e) == 0.01);
    let s2 = Schedule::from_label("S2_0.5_0.3", &Template::FULL).unwrap();
    let at = |e| s2.lr_at_epoch(e).unwrap();
    ok &= (at(75).beta, at(75).gamma) == (0.5, 2.0);
    ok &= (at(115).beta, at(115).gamma) == (0.3, 2.0);
    ok &= at(140).beta == 0.0;
    verdict(
        ok,
        format!(
            "lr 0.1 @1,50,100 and 0.01 @101,130,150; S2_0.5_0.3 (b,G) @75=({},{}) @115=({},{}) @140 b={}",
            at(75).beta,
            at(75).gamma,
            at(115).beta,
            at(115).gamma,
            at(140).beta
        ),
    )
}

// ---------------------------------------------------------------- 6

fn cifar_loader() -> Verdict {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let path = fixtures.join("cifar_two_records.bin");
    let raw = std::fs::read(&path).unwrap();
    let ds = read_batch_file(&path).unwrap();
    let pixel0 = |i: usize| ((i * i * 3 + i) % 251) as f32 / 255.0;
    let mut ok = ds.labels == [3, 9] && (0..3072).all(|i| ds.images.data()[i] == pixel0(i));
    let rebuilt: Vec<u8> = (0..ds.len()).flat_map(|r| encode_record(&ds, r).unwrap()).collect();
    ok &= rebuilt == raw;
    ok &= decode_records(&raw[..CIFAR_RECORD_BYTES - 1], "short").is_err();
    ok &= decode_records(&raw[..raw.len() - 5], "cut").is_err();
    let fixture = format!("fixture: labels {:?}, byte-exact re-serialization {}", ds.labels, rebuilt == raw);
    match cifar_dir() {
        None => {
            if ok {
                Verdict::Pass(format!("{}; corrupt lengths rejected; real files SKIPPED ({} not set)", fixture, CIFAR_ENV))
            } else {
                Verdict::Fail(fixture)
            }
        }
        Some(dir) => match load_cifar10(&dir) {
            Ok((train, test)) => {
                let labels_ok = train.labels.iter().chain(&test.labels).all(|&l| l < 10);
                verdict(
                    ok && train.len() == 50_000 && test.len() == 10_000 && labels_ok,
                    format!("{}; real files {} / {} records", fixture, train.len(), test.len()),
                )
            }
            Err(e) => Verdict::Fail(format!("{}; real files: {}", fixture, e)),
        },
    }
}

// ---------------------------------------------------------------- 9

fn bn_statistics() -> Verdict {
    let mut runner = TestRunner::new(PropConfig {
        cases: 64,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let worst = Cell::new((0.0f64, 0.0f64));
    let strategy = (4usize..9, 1usize..4, 4usize..7, -10.0f64..10.0, 0.5f64..20.0, any::<u64>());
    let result = runner.run(&strategy, |(n, c, hw, mean, std, seed)| {
        let mut r = rng::stream(seed, Domain::Synthetic, 104);
        let len = n * c * hw * hw;
        let data: Vec<f32> = (0..len)
            .map(|_| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
                (mean + std * z) as f32
            })
            .collect();
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(Tensor::from_vec(&[n, c, hw, hw], data).unwrap());
        let ga = g.param(ParamId(0), Tensor::full(&[c], 1.0));
        let be = g.param(ParamId(1), Tensor::zeros(&[c]));
        let bn = BnParams {
            eps: 1e-5,
            momentum: 0.1,
        };
        let y = g.batch_norm(x, ga, be, &mut RunningStats::new(c), bn, Mode::Train).unwrap();
        let y = g.value(y).unwrap().data().to_vec();
        let plane = hw * hw;
        for ch in 0..c {
            let vals: Vec<f64> =
                (0..n).flat_map(|i| y[(i * c + ch) * plane..(i * c + ch + 1) * plane].iter().map(|&v| v as f64)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            let w = worst.get();
            worst.set((w.0.max(m.abs()), w.1.max((v - 1.0).abs())));
            prop_assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-3, "mean {} var {}", m, v);
        }
        Ok(())
    });
    match result {
        Ok(()) => Verdict::Pass(format!(
            "64 random batches (N*H*W >= 64): max |mean| {:.1e} (< 1e-5), max |var-1| {:.1e} (< 1e-3)",
            worst.get().0,
            worst.get().1
        )),
        Err(e) => Verdict::Fail(format!("{}", e)),
    }
}

// ---------------------------------------------------------------- 10

fn label_round_trip() -> Verdict {
    let mut count = 0;
    let mut bad = Vec::new();
    for template in [Template::FULL, Template::DESK] {
        let base = template.baseline().unwrap();
        let mut points = ampgrad::sweep::sweep_step1(&base).unwrap();
        let mm: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        points.extend(ampgrad::sweep::sweep_step2(&base, &mm).unwrap());
        for p in &points {
            count += 1;
            match Schedule::from_label(p.label(), &template) {
                Ok(back) if back == p.schedule => {}
                _ => bad.push(p.label().to_string()),
            }
        }
    }
    verdict(bad.is_empty(), format!("{} generated S1/S2 labels, {} failed to parse back {:?}", count, bad.len(), bad))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the harnessed targets land here too
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |n: usize, name: &'static str, v: Verdict| {
        let (tag, detail) = match &v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} [{}]: {} - {}", n, name, tag, detail);
        results.push((n, name, v));
    };

    report(1, "gradient oracle", gradient_oracle());
    report(2, "amplification exactness", amplification_exactness());
    report(4, "selection", selection());
    report(5, "schedule state machine", schedule_lookups());
    report(6, "CIFAR-10 loader", cifar_loader());
    report(9, "BN statistics", bn_statistics());
    report(10, "label round-trip", label_round_trip());

    let (data, source) = desk_data();
    report(3, "gamma=1 / beta=0 equivalence", equivalence(&data, &source));
    report(7, "desk-scale training sanity", desk_sanity(&scratch.path().join("desk")));
    report(8, "determinism", determinism(&data, &source, scratch.path()));

    let failed: Vec<usize> = results.iter().filter(|r| matches!(r.2, Verdict::Fail(_))).map(|r| r.0).collect();
    let skipped = results.iter().filter(|r| matches!(r.2, Verdict::Skip(_))).count();
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        results.len() - failed.len() - skipped,
        failed.len(),
        skipped
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

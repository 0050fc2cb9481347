//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test fails if any does.
//!
//! Run with `cargo test -p qcluster-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::time::{Duration, Instant};

use qcluster_cli::report::render_row;
use qcluster_cli::{run_pipeline, InputSource, PipelineConfig};
use qcluster_core::agent::{reencode_identifiers, KnowledgeBase};
use qcluster_core::cluster::{calinski_harabasz, davies_bouldin, kmeans, silhouette, Method, MetricsRow};
use qcluster_core::ingest::{assemble_features, synth_transactions, PreprocessConfig, SynthProfile, TransactionRecord, TransactionTable};
use qcluster_core::quantum::{simulate_statevector, CircuitSpec, QnnModel, Strategy, TransformShape};
use qcluster_core::seed::mix_seed;
use qcluster_core::swav::{
    swav_objective, swav_objective_gradient, train_qnn_swav, BatchNoise, GradientMethod, PrototypeBank, TrainConfig,
};
use qcluster_core::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    let names = (0..rows[0].len()).map(|c| format!("x{c}")).collect();
    FeatureMatrix::from_rows(rows, names).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroid(points: &[&Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    (0..d).map(|c| points.iter().map(|p| p[c]).sum::<f64>() / points.len() as f64).collect()
}

fn groups<'a>(x: &'a [Vec<f64>], labels: &[usize]) -> Vec<Vec<&'a Vec<f64>>> {
    let k = labels.iter().max().unwrap() + 1;
    let mut g = vec![Vec::new(); k];
    for (p, &l) in x.iter().zip(labels) {
        g[l].push(p);
    }
    g
}

fn oracle_silhouette(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let g = groups(x, labels);
    let mut total = 0.0;
    for (i, p) in x.iter().enumerate() {
        let own = &g[labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().map(|q| dist(p, q)).sum::<f64>() / (own.len() - 1) as f64;
        let b = g
            .iter()
            .enumerate()
            .filter(|(c, m)| *c != labels[i] && !m.is_empty())
            .map(|(_, m)| m.iter().map(|q| dist(p, q)).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / x.len() as f64
}

fn oracle_davies_bouldin(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let g = groups(x, labels);
    let cents: Vec<Vec<f64>> = g.iter().map(|m| centroid(m)).collect();
    let scatter: Vec<f64> = g
        .iter()
        .zip(&cents)
        .map(|(m, c)| m.iter().map(|p| dist(p, c)).sum::<f64>() / m.len() as f64)
        .collect();
    let k = g.len();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scatter[i] + scatter[j]) / dist(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

fn oracle_calinski_harabasz(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let all: Vec<&Vec<f64>> = x.iter().collect();
    let mean = centroid(&all);
    let g = groups(x, labels);
    let (mut b, mut w) = (0.0, 0.0);
    for m in &g {
        let c = centroid(m);
        b += m.len() as f64 * dist(&c, &mean).powi(2);
        w += m.iter().map(|p| dist(p, &c).powi(2)).sum::<f64>();
    }
    let (n, k) = (x.len() as f64, g.len() as f64);
    (b / (k - 1.0)) / (w / (n - k))
}

fn metric_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 1..=50);
        let d = rng.random_range(1..=8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let m = matrix(&x);
        let pairs = [
            ("silhouette", silhouette(&m, &labels), oracle_silhouette(&x, &labels)),
            ("davies-bouldin", davies_bouldin(&m, &labels), oracle_davies_bouldin(&x, &labels)),
            ("calinski-harabasz", calinski_harabasz(&m, &labels), oracle_calinski_harabasz(&x, &labels)),
        ];
        for (name, got, want) in pairs {
            let got = got.map_err(|e| format!("case {case} {name}: {e}"))?;
            let err = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
            check(err <= 1e-9, || format!("case {case} (n={n}, d={d}, k={k}) {name}: {got} vs oracle {want}"))?;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, max scaled error {worst:.1e}, {elapsed:.2?}"))
}

fn hand_fixtures() -> Outcome {
    let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let labels = [0, 0, 1, 1];
    let m = matrix(&x);
    // a = 1 and b = (10 + sqrt(101)) / 2 for every point.
    let b = (10.0 + 101f64.sqrt()) / 2.0;
    let expected = [
        ("silhouette", (b - 1.0) / b, silhouette(&m, &labels)),
        ("davies-bouldin", (0.5 + 0.5) / 10.0, davies_bouldin(&m, &labels)),
        ("calinski-harabasz", (100.0 / 1.0) / (1.0 / 2.0), calinski_harabasz(&m, &labels)),
    ];
    let oracle = [
        oracle_silhouette(&x, &labels),
        oracle_davies_bouldin(&x, &labels),
        oracle_calinski_harabasz(&x, &labels),
    ];
    check((expected[0].1 - 0.90025).abs() < 1e-5, || format!("hand silhouette {}", expected[0].1))?;
    for ((name, hand, got), o) in expected.into_iter().zip(oracle) {
        let got = got.map_err(|e| format!("{name}: {e}"))?;
        check((hand - o).abs() < 1e-12, || format!("{name}: hand value {hand} vs oracle {o}"))?;
        check((got - hand).abs() < 1e-6, || format!("{name}: {got} vs {hand}"))?;
    }
    Ok("silhouette 0.900249, DB 0.1, CH 200".into())
}

fn set_partitions(n: usize, k: usize, labels: &mut Vec<usize>, used: usize, visit: &mut impl FnMut(&[usize])) {
    if labels.len() == n {
        if used == k {
            visit(labels);
        }
        return;
    }
    if k - used > n - labels.len() {
        return;
    }
    for l in 0..(used + 1).min(k) {
        labels.push(l);
        set_partitions(n, k, labels, used.max(l + 1), visit);
        labels.pop();
    }
}

fn sse(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    groups(x, labels)
        .iter()
        .map(|m| {
            let c = centroid(m);
            m.iter().map(|p| dist(p, &c).powi(2)).sum::<f64>()
        })
        .sum()
}

fn kmeans_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0D7);
    let mut instances = 0;
    for case in 0..200u64 {
        let n = rng.random_range(1..=10);
        let k = rng.random_range(1..=n.min(4));
        let d = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let mut best = f64::INFINITY;
        set_partitions(n, k, &mut Vec::new(), 0, &mut |l| best = best.min(sse(&x, l)));
        let fit = kmeans(&matrix(&x), k, 50, 300, mix_seed(7, &[case])).map_err(|e| e.to_string())?;
        let got = sse(&x, &fit.labels);
        check(got <= best + 1e-12 * best.max(1.0), || {
            format!("case {case} (n={n}, k={k}): kmeans SSE {got} vs exhaustive minimum {best}")
        })?;
        check((fit.inertia - got).abs() <= 1e-9 * got.max(1.0), || {
            format!("case {case}: reported inertia {} vs recomputed {got}", fit.inertia)
        })?;
        instances += 1;
    }
    Ok(format!("{instances} instances matched the exhaustive minimum"))
}

type Dense = Vec<Vec<f64>>;

fn kron(a: &Dense, b: &Dense) -> Dense {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![0.0; n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for p in 0..m {
                for q in 0..m {
                    out[i * m + p][j * m + q] = a[i][j] * b[p][q];
                }
            }
        }
    }
    out
}

fn ry(theta: f64) -> Dense {
    let (s, c) = (theta / 2.0).sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// CNOT on (q, q+1) of an n-qubit register, qubit 0 most significant.
fn cnot(n: usize, q: usize) -> Dense {
    let dim = 1 << n;
    let (cm, tm) = (1 << (n - 1 - q), 1 << (n - 2 - q));
    let mut out = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        let j = if i & cm != 0 { i ^ tm } else { i };
        out[j][i] = 1.0;
    }
    out
}

fn apply(m: &Dense, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dense_state(n: usize, params: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; 1 << n];
    v[0] = 1.0;
    for layer in params.chunks(n) {
        let rot = layer.iter().skip(1).fold(ry(layer[0]), |acc, &t| kron(&acc, &ry(t)));
        v = apply(&rot, &v);
        for q in 0..n - 1 {
            v = apply(&cnot(n, q), &v);
        }
    }
    v
}

fn statevector_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A7E);
    let mut worst_norm: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=6);
        let depth = rng.random_range(1..=5);
        let params: Vec<f64> = (0..n * depth).map(|_| rng.random_range(-10.0..10.0)).collect();
        let state = simulate_statevector(&CircuitSpec::new(n, depth, params.clone()).unwrap()).map_err(|e| e.to_string())?;
        let dev = (state.norm_sqr() - 1.0).abs();
        worst_norm = worst_norm.max(dev);
        check(dev < 1e-10, || format!("case {case}: norm deviation {dev:e}"))?;
        let oracle = dense_state(n, &params);
        let raw_norm = oracle.iter().map(|a| a * a).sum::<f64>();
        check((raw_norm - 1.0).abs() < 1e-10, || format!("case {case}: oracle norm {raw_norm}"))?;
        for (a, o) in state.amplitudes().iter().zip(&oracle) {
            worst_oracle = worst_oracle.max((a.re - o).abs() + a.im.abs());
        }
    }
    check(worst_oracle < 1e-10, || format!("random specs drift from the dense oracle by {worst_oracle:e}"))?;

    let fixtures: Vec<Vec<f64>> = vec![
        vec![0.0, 0.0],
        vec![std::f64::consts::PI, 0.0],
        vec![std::f64::consts::FRAC_PI_2, 0.0],
        vec![0.3, -1.7],
        vec![1.1, 2.2, -0.4, 0.9],
        vec![2.5, 0.1, 0.7, -3.0, 1.3, 0.05],
    ];
    let mut worst_fixture: f64 = 0.0;
    for params in &fixtures {
        let depth = params.len() / 2;
        let state = simulate_statevector(&CircuitSpec::new(2, depth, params.clone()).unwrap()).unwrap();
        let oracle = dense_state(2, params);
        for (a, o) in state.amplitudes().iter().zip(&oracle) {
            let e = (a.re - o).abs() + a.im.abs();
            worst_fixture = worst_fixture.max(e);
            check(e < 1e-12, || format!("2-qubit fixture {params:?}: {a} vs {o}"))?;
        }
    }
    // Bell-type check: Ry(pi/2) then CNOT gives (|00> + |11>)/sqrt(2).
    let bell = simulate_statevector(&CircuitSpec::new(2, 1, vec![std::f64::consts::FRAC_PI_2, 0.0]).unwrap()).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (a, o) in bell.amplitudes().iter().zip([h, 0.0, 0.0, h]) {
        check((a.re - o).abs() < 1e-12, || format!("bell amplitude {a} vs {o}"))?;
    }
    Ok(format!(
        "1000 specs, max norm deviation {worst_norm:.1e}; 2-qubit fixtures within {worst_fixture:.1e}"
    ))
}

fn objective_at(batch: &FeatureMatrix, model: &QnnModel, bank: &PrototypeBank, noise: &BatchNoise, theta: &[f64]) -> f64 {
    let m = QnnModel {
        circuit: model.circuit.with_params(theta.to_vec()).unwrap(),
        ..model.clone()
    };
    swav_objective(batch, &m, bank, noise, 12).unwrap()
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x96AD);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        // input 1 x output 1 needs 2 weights (1 qubit); input 1 x output 2 needs 4 (2 qubits).
        let output_dim = if trial % 2 == 0 { 1 } else { 2 };
        let shape = TransformShape { input_dim: 1, output_dim };
        let depth = rng.random_range(1..=3);
        let qubits = if output_dim == 1 { 1 } else { 2 };
        let theta: Vec<f64> = (0..qubits * depth).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let model = QnnModel::for_transform(shape, depth, theta.clone(), 1.0).unwrap();
        check(model.circuit.n_qubits() == qubits, || format!("expected {qubits} qubits"))?;
        let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let batch = matrix(&rows);
        let bank = PrototypeBank::random(3, output_dim, 0.1, 0.01, rng.random()).unwrap();
        let noise = BatchNoise::draw(batch.rows(), output_dim, 0.05, &mut rng);

        let analytic = swav_objective_gradient(&batch, &model, &bank, &noise, GradientMethod::ParameterShift, 12, h)
            .map_err(|e| e.to_string())?
            .theta;
        let mut numeric = Vec::with_capacity(theta.len());
        for k in 0..theta.len() {
            let mut plus = theta.clone();
            plus[k] += h;
            let mut minus = theta.clone();
            minus[k] -= h;
            numeric.push(
                (objective_at(&batch, &model, &bank, &noise, &plus) - objective_at(&batch, &model, &bank, &noise, &minus))
                    / (2.0 * h),
            );
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        let rel = diff / scale;
        worst = worst.max(rel);
        check(rel < 1e-3, || format!("trial {trial}: relative error {rel:e} ({analytic:?} vs {numeric:?})"))?;
    }
    Ok(format!("20 random angle sets, max relative error {worst:.1e}"))
}

fn three_blob_features(seed: u64) -> FeatureMatrix {
    let table = synth_transactions(seed, 90, &SynthProfile::three_blobs()).unwrap();
    assemble_features(&table, &PreprocessConfig::default()).unwrap()
}

fn training_progress() -> Outcome {
    let start = Instant::now();
    let mut improved = 0;
    let mut detail = Vec::new();
    for seed in 0..10u64 {
        let features = three_blob_features(mix_seed(seed, &[1])).standardized();
        let config = TrainConfig {
            seed: mix_seed(seed, &[3]),
            ..TrainConfig::default()
        };
        let bank = PrototypeBank::random(3, config.output_dim, config.temperature, config.smoothing, mix_seed(seed, &[5]))
            .map_err(|e| e.to_string())?;
        let trained = train_qnn_swav(&features, 1, &config, bank).map_err(|e| e.to_string())?;
        let (first, last) = (trained.loss_history[0], *trained.loss_history.last().unwrap());
        if last < first {
            improved += 1;
        }
        detail.push(format!("{first:.4}->{last:.4}"));
    }
    let elapsed = start.elapsed();
    check(improved >= 9, || format!("loss fell in {improved}/10 seeds: {}", detail.join(", ")))?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("loss fell in {improved}/10 seeds, {elapsed:.2?}"))
}

fn three_blob_config(out: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        input: InputSource::Synthetic {
            profile: SynthProfile::three_blobs(),
            n: 90,
        },
        k_range: vec![3],
        depth_range: vec![1],
        prototype_range: vec![3],
        num_epochs: 10,
        qf_runs: 20,
        seed,
        out_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn directional() -> Outcome {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_pipeline(&three_blob_config(dir.path(), seed)).map_err(|e| e.to_string())?;
        let cells = fs::read_to_string(dir.path().join("metrics_cells.csv")).map_err(|e| e.to_string())?;
        let (mut qnn_best, mut qf) = (f64::NEG_INFINITY, Vec::new());
        let mut reader = csv::Reader::from_reader(cells.as_bytes());
        for rec in reader.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let s: f64 = rec[5].parse().map_err(|e| format!("{e}"))?;
            match &rec[1] {
                "QNN" => qnn_best = qnn_best.max(s),
                "QF" => qf.push(s),
                other => return Err(format!("unexpected strategy {other}")),
            }
        }
        check(qf.len() == 20, || format!("seed {seed}: {} QF runs", qf.len()))?;
        let qf_mean = qf.iter().sum::<f64>() / qf.len() as f64;
        if qnn_best >= qf_mean {
            wins += 1;
        }
        detail.push(format!("{qnn_best:.9} vs {qf_mean:.9}"));
    }
    check(wins >= 8, || format!("QNN at least QF mean in {wins}/10 seeds: {}", detail.join(", ")))?;
    Ok(format!("QNN best-epoch >= QF mean in {wins}/10 seeds"))
}

/// The published table, one line per row, with its number formatting.
const PUBLISHED: [&str; 20] = [
    "3 | Quantum Features (Worst Run) | 1 | - | 0.394566 | 0.927151 | 3,847",
    "2 | Quantum Features (Average) | 1 | - | 0.660680 | 0.470618 | 133,976",
    "2 | Quantum Features (Best Run) | 1 | - | 0.996368 | 0.042230 | 1,260,727",
    "2 | QNN | 2 | 1 | 0.999777 | 1.111477e-8 | 15,833,657,123,341",
    "3 | Quantum Features (Worst Run) | 1 | - | 0.383393 | 0.868310 | 4,066",
    "3 | Quantum Features (Average) | 1 | - | 0.612198 | 0.553668 | 16,307,927,154",
    "3 | Quantum Features (Best Run) | 1 | - | 0.999994 | 0.000798 | 456,616,095,717",
    "3 | QNN | 4 | 5 | 0.999510 | 0.141294 | 168,665,013,271,780",
    "4 | Quantum Features (Worst Run) | 1 | - | 0.351097 | 0.935585 | 3,891",
    "4 | Quantum Features (Average) | 1 | - | 0.600428 | 0.577474 | 45,602,215,148",
    "4 | Quantum Features (Best Run) | 1 | - | 0.998005 | 0.223911 | 1,276,852,339,920",
    "4 | QNN | 9 | 9 | 0.999246 | 0.000054 | 1,307,035,577,888,410",
    "5 | Quantum Features (Worst Run) | 1 | - | 0.315429 | 1.058288 | 3,711",
    "5 | Quantum Features (Average) | 1 | - | 0.600791 | 0.567613 | 61,140,087,483",
    "5 | Quantum Features (Best Run) | 1 | - | 0.997542 | 0.305401 | 1,711,909,181,014",
    "5 | QNN | 6 | 1 | 0.998789 | 0.138369 | 7,704,660,919,690,170",
    "6 | Quantum Features (Worst Run) | 1 | - | 0.328886 | 0.993762 | 3,561",
    "6 | Quantum Features (Average) | 1 | - | 0.597184 | 0.580199 | 84,564,962,473",
    "6 | Quantum Features (Best Run) | 1 | - | 0.997905 | 0.262240 | 2,367,802,555,468",
    "6 | QNN | 6 | 1 | 0.998540 | 0.000125 | 23,337,479,575,752,000",
];

fn published_row(line: &str) -> MetricsRow {
    let f: Vec<&str> = line.split(" | ").collect();
    let method = match f[1] {
        "Quantum Features (Worst Run)" => Method::QfWorst,
        "Quantum Features (Average)" => Method::QfAverage,
        "Quantum Features (Best Run)" => Method::QfBest,
        "QNN" => Method::Qnn,
        other => panic!("unknown method {other}"),
    };
    let opt = |s: &str| (s != "-").then(|| s.parse().unwrap());
    MetricsRow {
        k: f[0].parse().unwrap(),
        method,
        depth: opt(f[2]),
        epoch: opt(f[3]),
        silhouette: f[4].parse().unwrap(),
        davies_bouldin: f[5].parse().unwrap(),
        calinski_harabasz: f[6].replace(',', "").parse().unwrap(),
    }
}

fn published_table_formatting() -> Outcome {
    for line in PUBLISHED {
        let rendered = render_row(&published_row(line));
        check(rendered == line, || format!("rendered {rendered:?}, published {line:?}"))?;
    }
    Ok("20 rows rendered byte-for-byte".into())
}

fn knowledge_base_completeness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        input: InputSource::Synthetic {
            profile: SynthProfile::three_blobs(),
            n: 60,
        },
        k_range: vec![2, 3],
        depth_range: vec![1, 2],
        num_epochs: 3,
        qf_runs: 5,
        out_dir: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    run_pipeline(&config).map_err(|e| e.to_string())?;
    let kb = KnowledgeBase::load(&dir.path().join("kb")).map_err(|e| e.to_string())?;
    kb.validate().map_err(|e| e.to_string())?;

    let partitions: BTreeSet<_> = kb.epoch_comparisons().map(|r| r.key).collect();
    check(partitions.len() == kb.epoch_comparisons().count(), || "duplicate epoch records".into())?;
    // One analysed partition per (strategy, k, depth).
    let cells: BTreeSet<_> = partitions.iter().map(|p| (p.strategy, p.k, p.depth)).collect();
    check(cells.len() == 2 * 2 * 2 && partitions.len() == 8, || format!("{} epoch records", partitions.len()))?;

    let expected_clusters: BTreeSet<_> = partitions.iter().flat_map(|p| (0..p.k).map(|c| p.cluster(c))).collect();
    let clusters: Vec<_> = kb.cluster_info().map(|c| c.key).collect();
    check(clusters.len() == expected_clusters.len(), || {
        format!("{} cluster records for {} clusters", clusters.len(), expected_clusters.len())
    })?;
    check(clusters.iter().copied().collect::<BTreeSet<_>>() == expected_clusters, || "cluster keys differ".into())?;

    for r in kb.inter_strategy() {
        check(partitions.contains(&r.qnn) && partitions.contains(&r.qf), || format!("dangling comparison {} / {}", r.qnn, r.qf))?;
        check(r.qnn.strategy == Strategy::Qnn && r.qf.strategy == Strategy::Qf, || "pair strategies swapped".into())?;
    }
    let knowledge = kb.strategy().ok_or("no strategy knowledge")?;
    let ks: Vec<usize> = knowledge.records.iter().map(|r| r.k).collect();
    check(ks == vec![2, 3], || format!("strategy records for k={ks:?}"))?;
    check(ks.contains(&knowledge.global.recommended_k), || "recommendation outside the k range".into())?;
    Ok(format!(
        "{} cluster records, {} epoch records, {} strategy records, integrity holds",
        clusters.len(),
        partitions.len(),
        ks.len()
    ))
}

fn tree_hash(root: &Path) -> (u64, BTreeMap<String, u64>) {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, u64>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                let mut h = DefaultHasher::new();
                fs::read(&path).unwrap().hash(&mut h);
                acc.insert(path.strip_prefix(root).unwrap().to_string_lossy().into_owned(), h.finish());
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(root, root, &mut files);
    let mut h = DefaultHasher::new();
    files.hash(&mut h);
    (h.finish(), files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = |out: &Path| PipelineConfig {
        k_range: vec![2, 3],
        depth_range: vec![1, 2],
        num_epochs: 3,
        qf_runs: 5,
        seed: 42,
        ..three_blob_config(out, 42)
    };
    run_pipeline(&config(a.path())).map_err(|e| e.to_string())?;
    run_pipeline(&config(b.path())).map_err(|e| e.to_string())?;
    let (ha, fa) = tree_hash(a.path());
    let (hb, fb) = tree_hash(b.path());
    if ha != hb {
        let differing: Vec<_> = fa.iter().filter(|(p, h)| fb.get(*p) != Some(h)).map(|(p, _)| p.clone()).collect();
        return Err(format!("trees differ in {differing:?}"));
    }
    Ok(format!("{} files, tree hash {ha:016x}", fa.len()))
}

fn random_identifier(rng: &mut ChaCha8Rng, pool: &[String]) -> String {
    if !pool.is_empty() && rng.random_bool(0.4) {
        return pool[rng.random_range(0..pool.len())].clone();
    }
    match rng.random_range(0..4) {
        0 => format!("0x{:040x}", rng.random::<u128>()),
        1 => format!("0x{:x}", rng.random_range(0u32..4096)),
        2 => ["TX", "ADDR", "TOK"][rng.random_range(0..3)].to_string() + &format!("-{}", rng.random_range(1..20)),
        _ => (0..rng.random_range(1..12)).map(|_| rng.random_range(b'A'..=b'Z') as char).collect(),
    }
}

fn reencoding_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D3A);
    let mut saved = 0usize;
    let mut raw_total = 0usize;
    for case in 0..1000 {
        let rows = rng.random_range(1..40);
        let mut pool: Vec<String> = Vec::new();
        let records: Vec<TransactionRecord> = (0..rows)
            .map(|_| {
                let mut id = || {
                    let s = random_identifier(&mut rng, &pool);
                    pool.push(s.clone());
                    s
                };
                let (hash, from, to, name, symbol) = (id(), id(), id(), id(), id());
                TransactionRecord {
                    block_number: rng.random_range(0..20_000_000),
                    transaction_hash: hash,
                    timestamp: rng.random_range(1_500_000_000..1_700_000_000),
                    from_address: from,
                    to_address: to,
                    token_name: name,
                    token_symbol: symbol,
                    token_value: rng.random_range(0.0..1e6),
                    gas_price: rng.random_range(1e9..2e11),
                }
            })
            .collect();
        let table = TransactionTable::new(records);
        let (compact, map) = reencode_identifiers(&table);
        let back = map.decode_table(&compact).map_err(|e| format!("case {case}: {e}"))?;
        check(back == table, || format!("case {case}: decoded table differs"))?;
        let raw = serde_json::to_string(&table.records).unwrap().len();
        let small = serde_json::to_string(&compact.records).unwrap().len();
        check(small <= raw, || format!("case {case}: compact {small} bytes > raw {raw} bytes"))?;
        saved += raw - small;
        raw_total += raw;
    }
    Ok(format!(
        "1000 tables round-tripped, compact context {:.1}% smaller overall",
        100.0 * saved as f64 / raw_total as f64
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("hand-computed fixtures", hand_fixtures),
        ("k-means optimality at desk scale", kmeans_optimality),
        ("statevector validity", statevector_validity),
        ("gradient correctness", gradient_correctness),
        ("training progress", training_progress),
        ("directional QNN vs QF", directional),
        ("published table formatting", published_table_formatting),
        ("knowledge-base completeness", knowledge_base_completeness),
        ("determinism", determinism),
        ("re-encoding round trip", reencoding_round_trip),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

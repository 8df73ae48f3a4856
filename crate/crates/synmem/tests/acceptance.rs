//! Acceptance suite. Prints one `[PASS]` or `[FAIL]` line per criterion and exits nonzero
//! if any criterion fails or exceeds its time budget.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use synmem::{validate_csv, Table};
use synmem_core::matrix::SynapseMatrix;
use synmem_core::quant::{eta, quantize_weight, quantize_weights, sigma, stochastic_round, weight_range};
use synmem_core::rng::seeded;
use synmem_core::snn::{
    bptt_gradients, train, van_rossum_grad, vr_distance, DenseLayer, Dynamics, LifParams, Network, Precision,
    SpikeMode, TrainConfig,
};
use synmem_core::store::{
    conv_forward_addresses, conv_reverse_addresses, BitmapStore, ConvGeometry, CrossbarStore, CsrStore,
    FunctionalStore, SynapseStore,
};

type Check = Result<String, String>;

/// Runs the shipped configs through the binary once and remembers where the output went.
struct Runs {
    root: tempfile::TempDir,
    done: HashMap<String, PathBuf>,
}

impl Runs {
    fn configs() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
    }

    fn invoke(&self, cmd: &str, tag: &str) -> Result<PathBuf, String> {
        let out = self.root.path().join(format!("{cmd}-{tag}"));
        let config = Self::configs().join(format!("{cmd}.toml"));
        let o = Command::new(env!("CARGO_BIN_EXE_synmem"))
            .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd} exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
        Ok(out)
    }

    fn first(&mut self, cmd: &str) -> Result<PathBuf, String> {
        if let Some(p) = self.done.get(cmd) {
            return Ok(p.clone());
        }
        let p = self.invoke(cmd, "a")?;
        self.done.insert(cmd.to_string(), p.clone());
        Ok(p)
    }

    fn table(&mut self, cmd: &str, file: &str) -> Result<Table, String> {
        let text = std::fs::read_to_string(self.first(cmd)?.join(file)).map_err(|e| e.to_string())?;
        validate_csv(&text).map_err(|e| e.to_string())
    }
}

fn num(t: &Table, row: usize, col: &str) -> f64 {
    t.cell(row, col).and_then(|c| c.parse().ok()).unwrap_or(f64::NAN)
}

fn find(t: &Table, want: &[(&str, &str)]) -> Result<usize, String> {
    (0..t.rows.len())
        .find(|&r| want.iter().all(|(c, v)| t.cell(r, c) == Some(v)))
        .ok_or_else(|| format!("no row with {want:?}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sorted(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    v.sort_by_key(|e| e.0);
    v
}

fn store_equivalence() -> Check {
    let densities = [0.05, 0.1, 0.25, 0.5, 0.75, 1.0];
    let mut rng = seeded(2024);
    let (mut mismatches, mut lookups) = (0usize, 0usize);
    for k in 0..240u64 {
        let (n_pre, n_post) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let density = densities[k as usize % densities.len()];
        let b_w = rng.random_range(2..=8);
        let m = SynapseMatrix::<f64>::random(n_pre, n_post, density, &mut seeded(k)).unwrap();
        let q = m.quantized(b_w);
        let stores: [Box<dyn SynapseStore<f64>>; 3] = [
            Box::new(CrossbarStore::build(&m, b_w).unwrap()),
            Box::new(CsrStore::build(&m, b_w).unwrap()),
            Box::new(BitmapStore::build(&m, b_w).unwrap()),
        ];
        for s in &stores {
            // Dense oracle: the crossbar returns every slot, the sparse schemes only stored synapses.
            let keep = |pre: usize, post: usize| !s.scheme().is_sparse() || q.has_synapse(pre, post);
            for pre in 0..n_pre {
                let want: Vec<_> = (0..n_post).filter(|&j| keep(pre, j)).map(|j| (j, q.weight(pre, j))).collect();
                mismatches += usize::from(sorted(s.forward_lookup(pre).unwrap().0) != want);
                lookups += 1;
            }
            for post in 0..n_post {
                let want: Vec<_> = (0..n_pre).filter(|&i| keep(i, post)).map(|i| (i, q.weight(i, post))).collect();
                mismatches += usize::from(sorted(s.reverse_lookup(post).unwrap().0) != want);
                lookups += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} of {lookups} lookups differ"))?;
    Ok(format!("240 matrices, {lookups} lookups, 0 mismatches"))
}

fn functional_correctness() -> Check {
    let mut rng = seeded(7);
    let (mut geometries, mut mismatches) = (0, 0usize);
    for in_h in 1..=8 {
        for in_w in 1..=8 {
            for (k_h, k_w) in [(1, 1), (1, 3), (3, 1), (3, 3)] {
                for (c_in, c_out) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                    let g = ConvGeometry::new(in_h, in_w, k_h, k_w, c_in, c_out).unwrap();
                    geometries += 1;
                    let kernel: Vec<f64> = (0..g.kernel_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let f = FunctionalStore::build(g, &kernel, 6).unwrap();
                    let csr = CsrStore::build(&f.materialize(), 6).unwrap();
                    for pre in 0..g.n_pre() {
                        mismatches += usize::from(sorted(f.forward_lookup(pre).unwrap().0) != sorted(csr.forward_lookup(pre).unwrap().0));
                    }
                    for post in 0..g.n_post() {
                        mismatches += usize::from(sorted(f.reverse_lookup(post).unwrap().0) != sorted(csr.reverse_lookup(post).unwrap().0));
                    }
                    // Brute-force transpose of the forward relation.
                    let mut transposed: Vec<Vec<(usize, _)>> = vec![Vec::new(); g.n_post()];
                    for pre in 0..g.n_pre() {
                        for l in conv_forward_addresses(&g, g.coord(pre)).unwrap() {
                            transposed[g.post_id(l.neuron)].push((pre, l.kernel));
                        }
                    }
                    for (post, want) in transposed.iter_mut().enumerate() {
                        let mut got: Vec<_> = conv_reverse_addresses(&g, g.coord(post))
                            .unwrap()
                            .into_iter()
                            .map(|l| (g.pre_id(l.neuron), l.kernel))
                            .collect();
                        let key = |e: &(usize, synmem_core::store::KernelIndex)| (e.0, e.1.ic, e.1.oc, e.1.pos_r, e.1.pos_c);
                        got.sort_by_key(key);
                        want.sort_by_key(key);
                        mismatches += usize::from(&got != want);
                    }
                }
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{geometries} geometries up to (8,8,3,3,2,2), 0 mismatches"))
}

fn storage_closed_forms() -> Check {
    let lg = |x: u64| if x <= 1 { 0 } else { 64 - (x - 1).leading_zeros() as u64 };
    let mut rng = seeded(99);
    for k in 0..100u64 {
        let (n_pre, n_post) = (rng.random_range(1..=80usize), rng.random_range(1..=80usize));
        let b_w = rng.random_range(2..=8u32);
        let m = SynapseMatrix::<f64>::random(n_pre, n_post, rng.random_range(0.0..=1.0), &mut seeded(k)).unwrap();
        let (np, nq, nnz, b) = (n_pre as u64, n_post as u64, m.nnz() as u64, b_w as u64);
        let cb = CrossbarStore::build(&m, b_w).unwrap().storage_bits();
        ensure(cb == np * nq * b, || format!("CB {n_pre}x{n_post}@{b_w}: {cb}"))?;
        let csr = CsrStore::build(&m, b_w).unwrap().storage_bits();
        let want = (np + 1) * lg(nnz + 1) + nnz * lg(nq) + nnz * b;
        ensure(csr == want, || format!("PB-CSR {n_pre}x{n_post}@{b_w}: {csr} != {want}"))?;
        let bmp = BitmapStore::build(&m, b_w).unwrap().storage_bits();
        let want = np * lg(nnz + 1) + np * nq.div_ceil(32) * 32 + nnz * b;
        ensure(bmp == want, || format!("PB-BMP {n_pre}x{n_post}@{b_w}: {bmp} != {want}"))?;

        let g = ConvGeometry::new(
            rng.random_range(1..=10),
            rng.random_range(1..=10),
            2 * rng.random_range(0..=2) + 1,
            2 * rng.random_range(0..=2) + 1,
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        )
        .unwrap();
        let f = FunctionalStore::build(g, &vec![0.5; g.kernel_len()], b_w).unwrap().storage_bits();
        ensure(f == (g.k_h * g.k_w * g.c_in * g.c_out) as u64 * b, || format!("functional {g:?}: {f}"))?;
    }
    let m = SynapseMatrix::<f64>::dense(728, 128, vec![0.25; 728 * 128]).unwrap();
    let cb = CrossbarStore::build(&m, 8).unwrap().storage_bits();
    ensure(cb == 745_472, || format!("CB 728x128x8: {cb}"))?;
    let g = ConvGeometry::new(28, 28, 3, 3, 32, 32).unwrap();
    let f = FunctionalStore::build(g, &vec![0.25; g.kernel_len()], 8).unwrap().storage_bits();
    ensure(f == 73_728, || format!("functional conv: {f}"))?;
    Ok("100 instances per scheme; CB 745,472 bits, functional 73,728 bits".into())
}

fn conv_rows(runs: &mut Runs) -> Result<(Table, usize, usize), String> {
    let t = runs.table("conv-sweep", "conv-sweep.csv")?;
    let csr = find(&t, &[("scheme", "PB-CSR"), ("b_w", "8")])?;
    let func = find(&t, &[("scheme", "Functional"), ("b_w", "8")])?;
    Ok((t, csr, func))
}

fn conv_backward(runs: &mut Runs) -> Check {
    let (t, csr, func) = conv_rows(runs)?;
    let ratio = num(&t, func, "bwd_pJ") / num(&t, csr, "bwd_pJ");
    ensure((0.30..=0.60).contains(&ratio), || format!("backward ratio {ratio:.4}"))?;
    let (fw, cr) = (num(&t, func, "bwd_weight_reads"), num(&t, csr, "bwd_reads"));
    ensure(fw < cr, || format!("functional weight reads {fw} vs PB-CSR reads {cr}"))?;
    Ok(format!("functional/PB-CSR backward = {ratio:.4}; weight reads {fw:.0} < {cr:.0}"))
}

fn forward_overhead(runs: &mut Runs) -> Check {
    let (t, csr, func) = conv_rows(runs)?;
    let ratio = num(&t, func, "fwd_pJ") / num(&t, csr, "fwd_pJ");
    ensure(ratio <= 1.10, || format!("forward ratio {ratio:.4}"))?;
    Ok(format!("functional/PB-CSR forward = {ratio:.4}"))
}

fn density_crossover(runs: &mut Runs) -> Check {
    let t = runs.table("density-leak-grid", "density-leak-grid.csv")?;
    let min_leak = (0..t.rows.len()).map(|r| num(&t, r, "leak_fraction")).fold(f64::INFINITY, f64::min);
    let mut line: Vec<(f64, String)> = (0..t.rows.len())
        .filter(|&r| num(&t, r, "leak_fraction") == min_leak)
        .map(|r| (num(&t, r, "density"), t.cell(r, "winner").unwrap().to_string()))
        .collect();
    line.sort_by(|a, b| a.0.total_cmp(&b.0));
    ensure(t.rows.len() == 100, || format!("{} grid points", t.rows.len()))?;
    let (lo, hi) = (&line[0], &line[line.len() - 1]);
    ensure(hi.0 == 1.0 && hi.1 == "CB", || format!("density 1.0 winner {}", hi.1))?;
    ensure(lo.0 == 0.05 && (lo.1 == "PB-CSR" || lo.1 == "PB-BMP"), || format!("density 0.05 winner {}", lo.1))?;
    let cross = line.windows(2).find(|w| w[0].1 != "CB" && w[1].1 == "CB").map(|w| w[1].0);
    let cross = cross.ok_or("no crossover to CB")?;
    Ok(format!("{} wins at 0.05, CB from density {cross:.3}, leak fraction {min_leak}", lo.1))
}

fn quantization_suite() -> Check {
    for b in 2..=16u32 {
        let s: f64 = sigma(b);
        ensure(s == 2f64.powi(1 - b as i32), || format!("sigma({b}) = {s}"))?;
        let (lo, hi): (f64, f64) = weight_range(b);
        ensure(hi == 1.0 - s && lo == -hi, || format!("weight_range({b}) = ({lo}, {hi})"))?;
        for fan_in in [1, 2, 3, 10, 100, 728, 4096] {
            let e: f64 = eta(b, fan_in);
            ensure(e > 0.0 && e.log2().fract() == 0.0, || format!("eta({b}, {fan_in}) = {e}"))?;
        }
    }
    let e: f64 = eta(8, 728);
    ensure(e == 16.0, || format!("eta(8, 728) = {e}"))?;

    let mut rng = seeded(5);
    let n = 100_000;
    let mut worst = 0.0f64;
    for (x, b) in [(0.3, 3), (-0.71, 4), (0.013, 6), (0.5, 2)] {
        let step: f64 = sigma(b);
        let mean = (0..n).map(|_| stochastic_round(x, step, &mut rng)).sum::<f64>() / n as f64;
        let frac = x / step - (x / step).floor();
        let se = (frac * (1.0 - frac)).sqrt() * step / (n as f64).sqrt();
        let z = if se == 0.0 { if mean == x { 0.0 } else { f64::INFINITY } } else { (mean - x).abs() / se };
        ensure(z <= 3.0, || format!("stochastic_round({x}) mean {mean}, {z:.2} standard errors"))?;
        worst = worst.max(z);
    }

    let values: Vec<f64> = (0..10_000).map(|_| rng.random_range(-2.0..2.0)).collect();
    for b in 2..=8 {
        let q = quantize_weights(&values, b);
        ensure(quantize_weights(&q, b) == q, || format!("quantize_weights not idempotent at {b} bits"))?;
        ensure(q.iter().zip(&values).all(|(&a, &v)| a == quantize_weight(v, b)), || "batch differs from scalar".into())?;
    }
    Ok(format!("closed forms for 2..=16 bits, eta(8,728)=16, rounding within {worst:.2} SE, idempotent on 10^4 values"))
}

fn gradient_check() -> Check {
    let mut worst = 0.0f64;
    for case in 0..24u64 {
        let mut rng = seeded(1000 + case);
        let sizes = [rng.random_range(2..=4usize), rng.random_range(2..=3), rng.random_range(1..=3)];
        let steps = rng.random_range(5..=10usize);
        let dynamics = if case % 3 == 2 { Dynamics::Binary } else { Dynamics::Lif };
        let p = LifParams { theta: 0.3, beta_s: 2.0, dynamics, ..Default::default() };
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weights = (0..w[0] * w[1]).map(|_| rng.random_range(-1.5..1.5)).collect();
                DenseLayer::new(w[0], w[1], weights, 1.0).unwrap()
            })
            .collect();
        let net = Network::new(layers).unwrap();
        let input: Vec<f64> = (0..sizes[0] * steps).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        let target: Vec<f64> = (0..sizes[2] * steps).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let loss = |n: &Network<f64>| {
            let ep = n.run(&input, steps, &p, SpikeMode::Soft, None).unwrap();
            vr_distance(ep.output(), &target, n.n_out(), steps, 4.0).unwrap()
        };
        let ep = net.run(&input, steps, &p, SpikeMode::Soft, None).unwrap();
        let (_, g_out) = van_rossum_grad(ep.output(), &target, net.n_out(), steps, 4.0).unwrap();
        let grads = bptt_gradients(&net, &ep, &g_out, &p).unwrap();
        let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
        for l in 0..net.layers.len() {
            for k in 0..net.layers[l].weights.len() {
                let h = 1e-6;
                let (mut up, mut dn) = (net.clone(), net.clone());
                up.layers[l].weights[k] += h;
                dn.layers[l].weights[k] -= h;
                let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
                diff += (grads[l][k] - fd).powi(2);
                na += grads[l][k].powi(2);
                nb += fd * fd;
            }
        }
        let rel = diff.sqrt() / na.sqrt().max(nb.sqrt());
        ensure(na > 0.0 && rel < 1e-4, || format!("case {case}: relative error {rel:e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("24 networks (<=10 neurons, <=10 steps), worst relative error {worst:.2e}"))
}

fn desk_learning() -> Check {
    let cfg = TrainConfig::desk_scale(Precision::Full { lr: 1e-3 });
    let r = train::<f64>(&cfg, &[]).map_err(|e| e.to_string())?;
    let v: Vec<f64> = r.curve.iter().map(|e| e.vr).collect();
    let (first, last) = (v[0], v[v.len() - 1]);
    ensure(last < 0.5 * first, || format!("final VR {last:.2} vs initial {first:.2}"))?;
    // 100-epoch moving average read at consecutive window ends from epoch 200 onwards.
    let blocks: Vec<f64> = (200..v.len()).step_by(100).filter(|s| s + 100 <= v.len()).map(|s| v[s..s + 100].iter().sum::<f64>() / 100.0).collect();
    let rises = blocks.windows(2).filter(|w| w[1] > w[0]).count();
    ensure(rises == 0, || format!("moving average rises {rises} times: {blocks:.2?}"))?;
    let sliding: Vec<f64> = v.windows(100).map(|w| w.iter().sum::<f64>() / 100.0).collect();
    let uptick = sliding[200..].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(format!(
        "VR {first:.2} -> {last:.2}; {} window averages nonincreasing; largest per-epoch uptick {uptick:.4}",
        blocks.len()
    ))
}

fn precision_sparsity(runs: &mut Runs) -> Check {
    let t = runs.table("train-frontier", "train-frontier.csv")?;
    let get = |b: &str, s: &str, col: &str| find(&t, &[("b_w", b), ("scheme", s)]).map(|r| num(&t, r, col));
    let (s2, s6) = (get("2", "CB", "mean_sparsity")?, get("6", "CB", "mean_sparsity")?);
    ensure(s2 > s6, || format!("sparsity 2-bit {s2:.4} vs 6-bit {s6:.4}"))?;
    let ratio = |b: &str| -> Result<f64, String> { Ok(get(b, "PB-BMP", "train_pJ")? / get(b, "CB", "train_pJ")?) };
    let (r2, r5) = (ratio("2")?, ratio("5")?);
    ensure(r2 < r5, || format!("PB-BMP/CB 2-bit {r2:.4} vs 5-bit {r5:.4}"))?;
    let (v2, v5) = (get("2", "CB", "final_vr")?, get("5", "CB", "final_vr")?);
    Ok(format!(
        "sparsity {s2:.3} (2b) > {s6:.3} (6b); PB-BMP/CB {r2:.3} (2b) < {r5:.3} (5b); final VR {v2:.1} / {v5:.1}"
    ))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn determinism(runs: &mut Runs) -> Check {
    let mut files = 0;
    for cmd in ["fc-sweep", "conv-sweep", "density-leak-grid", "train-frontier"] {
        let a = dir_bytes(&runs.first(cmd)?);
        let b = dir_bytes(&runs.invoke(cmd, "b")?);
        ensure(a == b, || format!("{cmd} output differs between runs"))?;
        files += a.len();
    }
    Ok(format!("4 commands rerun, {files} files byte-identical"))
}

fn main() {
    let mut runs = Runs { root: tempfile::tempdir().expect("temp dir"), done: HashMap::new() };
    type Criterion<'a> = (&'a str, u64, Box<dyn FnMut(&mut Runs) -> Check + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("store equivalence", 60, Box::new(|_| store_equivalence())),
        ("functional correctness", 600, Box::new(|_| functional_correctness())),
        ("storage closed forms", 600, Box::new(|_| storage_closed_forms())),
        ("conv backward advantage", 120, Box::new(conv_backward)),
        ("forward overhead bound", 120, Box::new(forward_overhead)),
        ("density crossover", 300, Box::new(density_crossover)),
        ("quantization suite", 600, Box::new(|_| quantization_suite())),
        ("gradient check", 30, Box::new(|_| gradient_check())),
        ("learning at desk scale", 600, Box::new(|_| desk_learning())),
        ("precision-sparsity direction", 1800, Box::new(precision_sparsity)),
        ("determinism", 1800, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, budget, mut check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut runs)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > Duration::from_secs(budget) => Err(format!("took {took:.1?}, budget {budget}s")),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail} ({took:.1?})", i + 1);
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

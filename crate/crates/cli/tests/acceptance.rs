//! End-to-end acceptance checks, one line per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradcheck, random, random_off_zero, GRAD_TOL};
use spikefuse::data::{synth_ett, synth_multimodal, write_csv, Sample, SynthTask, Target};
use spikefuse::fusion::{fuse, jwam_weights, similarity, JointModule, JointSpaceConfig, OutputHead, SigmaMode, Task};
use spikefuse::lif::{lif_step, LifParams, LifState, SpikeLayout};
use spikefuse::model::{InputShape, Model};
use spikefuse::numerics::{fft1d, ifft1d, Tape, Tensor, Var};
use spikefuse::param::Parameterized;
use spikefuse::train::{evaluate, train_loop, Control, VERSION};
use spikefuse::wavelet::{haar_dwt2d, haar_idwt2d, wavelet_packet1d, wavelet_packet1d_inverse};
use spikefuse_cli::config::{RunConfig, TaskKind};
use spikefuse_cli::{cmd_train, prepare, Common, CHECKPOINT_FILE, HISTORY_FILE};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn energy(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum()
}

fn numerics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1usize, 2, 8, 64, 512, 4096] {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let spec = ok(fft1d(&x))?;
        let back = ok(ifft1d(&spec))?;
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(err <= 1e-10, "fft round trip n={n}: {err:e}");
        let freq: f64 = spec.values().iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        let rel = (freq - energy(&x)).abs() / energy(&x);
        ensure!(rel <= 1e-9, "parseval n={n}: {rel:e}");
    }
    ensure!(fft1d(&[1.0, 2.0, 3.0]).is_err(), "fft accepted length 3");

    type Gen = fn(&mut ChaCha8Rng) -> Vec<Tensor>;
    type Op = fn(&mut Tape, &[Var]) -> Var;
    let ops: Vec<(&str, Gen, Op)> = vec![
        ("linear", |r| vec![random(r, &[2, 3, 4]), random(r, &[5, 4]), random(r, &[5])], |t, v| t.linear(v[0], v[1], Some(v[2])).unwrap()),
        ("conv2d", |r| vec![random(r, &[2, 2, 5, 5]), random(r, &[3, 2, 3, 3]), random(r, &[3])], |t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap()),
        ("conv2d_strided", |r| vec![random(r, &[1, 2, 6, 5]), random(r, &[2, 2, 3, 3])], |t, v| t.conv2d(v[0], v[1], None, 2, 0).unwrap()),
        ("avg_pool", |r| vec![random(r, &[2, 2, 4, 6])], |t, v| t.avg_pool2d(v[0], 2, 2).unwrap()),
        ("relu", |r| vec![random_off_zero(r, &[3, 7])], |t, v| t.relu(v[0])),
        ("softmax", |r| vec![random(r, &[3, 4, 5])], |t, v| t.softmax(v[0], 1).unwrap()),
        ("add", |r| vec![random(r, &[4, 3]), random(r, &[4, 3])], |t, v| t.add(v[0], v[1]).unwrap()),
        ("mul", |r| vec![random(r, &[4, 3]), random(r, &[4, 3])], |t, v| t.mul(v[0], v[1]).unwrap()),
        ("scale", |r| vec![random(r, &[5])], |t, v| t.scale(v[0], -1.7)),
        ("reshape", |r| vec![random(r, &[2, 6])], |t, v| {
            let y = t.reshape(v[0], &[3, 4]).unwrap();
            t.mul(y, y).unwrap()
        }),
        ("lif_charge", |r| vec![random(r, &[3, 4]), random(r, &[3, 4])], |t, v| t.lif_charge(v[0], v[1], 2.5, 0.1).unwrap()),
        ("reset", |r| vec![random(r, &[8]), random(r, &[8])], |t, v| t.reset(v[0], v[1], -0.2).unwrap()),
        ("spectral", |r| (0..5).map(|_| random(r, &[2, 3])).collect(), |t, v| t.spectral(v).unwrap()),
        ("mean_sq_diff", |r| vec![random(r, &[4, 2, 3]), random(r, &[4, 2, 3])], |t, v| t.mean_sq_diff(v[0], v[1]).unwrap()),
        ("exp_scaled", |r| vec![random(r, &[7])], |t, v| t.exp_scaled(v[0], -0.8)),
        ("stack_last", |r| vec![random(r, &[2, 3]), random(r, &[2, 3])], |t, v| {
            let s = t.stack_last(v).unwrap();
            t.mul(s, s).unwrap()
        }),
        ("scale_rows", |r| vec![random(r, &[3, 2, 4]), random(r, &[2, 2])], |t, v| t.scale_rows(v[0], v[1], 1).unwrap()),
        ("mean_axis0", |r| vec![random(r, &[4, 2, 3])], |t, v| t.mean_axis0(v[0]).unwrap()),
    ];
    let per_op = 6;
    let mut worst: f64 = 0.0;
    for (name, gen, f) in &ops {
        for _ in 0..per_op {
            let inputs = gen(&mut rng);
            let err = gradcheck(&mut rng, &inputs, f);
            ensure!(err <= GRAD_TOL, "{name}: relative error {err:e}");
            worst = worst.max(err);
        }
    }
    let instances = ops.len() * per_op;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{instances} gradient instances, worst {worst:.1e}, {:.1}s", elapsed.as_secs_f64()))
}

fn lif_closed_form() -> Outcome {
    let p = LifParams::default();
    let step = |v: f64, i: f64| {
        let (next, s) = lif_step(&LifState { v: Tensor::from_vec(vec![v]) }, &Tensor::from_vec(vec![i]), &p).unwrap();
        (next.v.data()[0], s.data()[0])
    };
    ensure!(step(0.5, 1.0) == (0.75, 0.0), "0.5 + 1.0 gave {:?}", step(0.5, 1.0));
    ensure!((p.charge(0.9, 1.5) - 1.2).abs() < 1e-15, "charge 0.9, 1.5 = {}", p.charge(0.9, 1.5));
    ensure!(step(0.9, 1.5) == (0.0, 1.0), "0.9 + 1.5 gave {:?}", step(0.9, 1.5));
    let mut worst: f64 = 0.0;
    for (tau, v_rest, v0) in [(2.0, 0.0, 0.9), (5.0, -0.3, -4.0), (1.5, 0.2, 1.1), (30.0, 1.0, -2.5)] {
        let q = LifParams { tau, v_rest, v_th: v_rest + 1.0, v_reset: v_rest, surrogate_slope: 2.0 };
        let mut state = LifState { v: Tensor::from_vec(vec![v0]) };
        for k in 1..=100 {
            let (next, s) = lif_step(&state, &Tensor::from_vec(vec![0.0]), &q).unwrap();
            ensure!(s.data()[0] == 0.0, "spike without input");
            let closed = v_rest + (v0 - v_rest) * (1.0 - 1.0 / tau).powi(k);
            worst = worst.max((next.v.data()[0] - closed).abs());
            state = next;
        }
    }
    ensure!(worst <= 1e-12, "decay error {worst:e}");
    Ok(format!("decay error {worst:.1e}"))
}

fn wavelet_exactness() -> Outcome {
    let img = ok(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]))?;
    let s = ok(haar_dwt2d(&img))?;
    let got = [s.ll.data()[0], s.lh.data()[0], s.hl.data()[0], s.hh.data()[0]];
    ensure!(got == [5.0, -1.0, -2.0, 0.0], "hand example gave {got:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut rec, mut en): (f64, f64) = (0.0, 0.0);
    for (h, w) in [(2, 2), (8, 16), (64, 64), (256, 256)] {
        let x = random(&mut rng, &[h, w]).map(|v| v * 100.0);
        let s = ok(haar_dwt2d(&x))?;
        rec = rec.max(ok(ok(haar_idwt2d(&s))?.max_abs_diff(&x))?);
        en = en.max((s.energy() - energy(x.data())).abs() / energy(x.data()));
    }
    for l in [4usize, 64, 1024, 256 * 256] {
        let x = random(&mut rng, &[l]).map(|v| v * 100.0);
        let s = ok(wavelet_packet1d(&x))?;
        rec = rec.max(ok(ok(wavelet_packet1d_inverse(&s))?.max_abs_diff(&x))?);
        en = en.max((s.energy() - energy(x.data())).abs() / energy(x.data()));
    }
    ensure!(rec <= 1e-10, "reconstruction error {rec:e}");
    ensure!(en <= 1e-9, "energy error {en:e}");
    Ok(format!("reconstruction {rec:.1e}, energy {en:.1e}"))
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn fusion_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (wi, wt) = jwam_weights(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        ensure!((wi + wt - 1.0).abs() <= 1e-12, "weights sum to {}", wi + wt);
        let len = rng.gen_range(1..30);
        let a = random(&mut rng, &[len]).map(|v| v * 50.0);
        ensure!(ok(similarity(&a, &a, rng.gen_range(1e-6..10.0)))? == 1.0, "sim(a, a) != 1");
    }

    let mut worst_ref: f64 = 0.0;
    for _ in 0..100 {
        let (n, b, d) = (rng.gen_range(1..6), rng.gen_range(1..4), rng.gen_range(1..9));
        let pos = |r: &mut ChaCha8Rng| random(r, &[n, b, d]).map(|v| v + 1.0);
        let (si, st) = (pos(&mut rng), pos(&mut rng));
        let ja = ok(si.zip_map(&st, |x, y| x + y))?;
        let p: Vec<f64> = (0..b)
            .flat_map(|_| {
                let w = rng.gen_range(0.0..1.0);
                [w, 1.0 - w]
            })
            .collect();
        let got = ok(fuse(&si, &st, &ja, &ok(Tensor::new(vec![b, 2], p.clone()))?))?;
        let root = (d as f64).sqrt();
        for plane in 0..n * b {
            let row = |t: &Tensor| t.data()[plane * d..][..d].to_vec();
            let (j, bidx) = (row(&ja), plane % b);
            let mut want = vec![0.0; d];
            for (m, s) in [row(&si), row(&st)].iter().enumerate() {
                let scores: Vec<f64> = (0..d).map(|k| s[k] * j[k] / root).collect();
                for (k, a) in softmax(&scores).into_iter().enumerate() {
                    want[k] += p[2 * bidx + m] * a * j[k];
                }
            }
            for k in 0..d {
                worst_ref = worst_ref.max((want[k] - got.data()[plane * d + k]).abs());
            }
        }
    }
    ensure!(worst_ref <= 1e-12, "fuse differs from reference by {worst_ref:e}");

    let mut worst_grad: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for k in 0..10 {
        let (t, b, fi, fs, d) = (4, 2, 3, 2, 4);
        let module = ok(JointModule::new(JointSpaceConfig { joint_width: d, sigma_floor: 1e-6 }, fi, fs, &mut rng))?;
        let task = if k % 2 == 0 { Task::Classification { classes: 3 } } else { Task::Regression { horizon: 2 } };
        let head = ok(OutputHead::new(Some(task), d, 5, &mut rng))?;
        let mut inputs: Vec<Tensor> = module.params().into_iter().map(|(_, p)| p.clone()).collect();
        inputs.extend(head.params().into_iter().map(|(_, p)| p.clone()));
        for x in inputs.iter_mut().filter(|x| x.rank() == 1) {
            *x = random(&mut rng, x.shape()).map(|v| v + 0.5);
        }
        let np = inputs.len();
        for f in [fi, fs] {
            for _ in 0..t {
                inputs.push(random(&mut rng, &[b, f]));
            }
        }
        worst_grad = worst_grad.max(gradcheck(&mut rng, &inputs, |tape, v| {
            let vars = module.forward(tape, &v[..4], &v[np..np + t], &v[np + t..], SigmaMode::Fixed(0.8)).unwrap();
            head.forward(tape, &v[4..np], vars.j_fusion).unwrap()
        }));

        let mut tape = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let vars = ok(module.forward(&mut tape, &vs[..4], &vs[np..np + t], &vs[np + t..], SigmaMode::Batch))?;
        for row in tape.value(vars.p_mtsa).data().chunks(2) {
            worst_sum = worst_sum.max((row[0] + row[1] - 1.0).abs());
        }
    }
    ensure!(worst_grad <= GRAD_TOL, "fusion gradient error {worst_grad:e}");
    ensure!(worst_sum <= 1e-12, "weights in forward sum off by {worst_sum:e}");
    Ok(format!("reference {worst_ref:.1e}, gradient {worst_grad:.1e}"))
}

fn shape_chain() -> Outcome {
    let data = ok(synth_multimodal(0, 2, SynthTask::Classify { classes: 3, len: 32 }))?;
    let refs: Vec<&Sample> = data.iter().collect();
    let cfg = RunConfig { steps: 4, ..Default::default() };
    let task = Task::Classification { classes: 3 };
    let mut chains = Vec::new();
    for wavelet in [true, false] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ok(Model::new(RunConfig { wavelet, ..cfg.clone() }.model(), task, ok(InputShape::of(&data[0]))?, &mut rng))?;
        let act = ok(m.activations(&ok(m.prepare(&refs))?))?;
        let (c, h, w) = m.image.output_extent();
        let (sc, sl) = m.series.output_extent();
        ensure!(act.image.layout() == SpikeLayout::Image && act.image.shape() == [4, 2, c, h, w], "image spikes {:?}", act.image.shape());
        ensure!(act.series.layout() == SpikeLayout::Series && act.series.shape() == [4, 2, sc, sl], "series spikes {:?}", act.series.shape());
        ensure!(act.fused.shape() == [4, 2, cfg.joint_width], "fused {:?}", act.fused.shape());
        ensure!(act.output.shape() == [2, 3], "logits {:?}", act.output.shape());
        chains.push(format!("{:?}->{:?}->{:?}->{:?}", act.image.shape(), act.series.shape(), act.fused.shape(), act.output.shape()));
    }
    Ok(chains.join("; "))
}

fn classify_config(seed: u64, wavelet: bool) -> RunConfig {
    RunConfig { seed, wavelet, patience: 100, ..Default::default() }
}

/// Trains on criterion 6's task; returns per-epoch validation accuracy.
fn classify_run(cfg: &RunConfig, stop_at: Option<f64>) -> Result<Vec<f64>, String> {
    let prepared = ok(prepare(cfg, None))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input = ok(InputShape::of(&prepared.split.train[0]))?;
    let mut model = ok(Model::new(cfg.model(), cfg.task_spec(), input, &mut rng))?;
    let mut acc = Vec::new();
    ok(train_loop(&mut model, &prepared.split.train, &prepared.split.val, &cfg.train(), &mut rng, |r| {
        let a = r.metrics.accuracy().unwrap_or(0.0);
        acc.push(a);
        match stop_at {
            Some(goal) if a >= goal => Control::Stop,
            _ => Control::Continue,
        }
    }))?;
    Ok(acc)
}

fn learning_classification() -> Outcome {
    let mut passed = 0;
    let mut slowest = Duration::ZERO;
    let mut epochs = Vec::new();
    for seed in 0..20 {
        let cfg = RunConfig { epochs: 30, ..classify_config(seed, true) };
        ensure!(cfg.synth_samples == 800 && cfg.synth_len == 64 && cfg.classes == 2, "task drifted from n=800, L=64");
        let start = Instant::now();
        let acc = classify_run(&cfg, Some(0.95))?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        if acc.last().is_some_and(|&a| a >= 0.95) && took < Duration::from_secs(300) {
            passed += 1;
            epochs.push(acc.len());
        }
    }
    ensure!(passed >= 18, "only {passed}/20 seeds reached 95%");
    Ok(format!(
        "{passed}/20 seeds reached 95% (max {} epochs), slowest run {:.1}s",
        epochs.iter().max().unwrap_or(&0),
        slowest.as_secs_f64()
    ))
}

fn learning_forecast() -> Outcome {
    let start = Instant::now();
    let dir = ok(tempfile::tempdir())?;
    let csv = dir.path().join("ett.csv");
    let mut buf = Vec::new();
    let rows = 2000;
    ok(write_csv(&synth_ett(11, rows), "date", &mut buf))?;
    ok(std::fs::write(&csv, buf))?;
    let cfg = RunConfig {
        task: TaskKind::Forecast,
        data: csv.to_string_lossy().into_owned(),
        lookback: 96,
        horizon: 24,
        joint_width: 32,
        head_hidden: 32,
        epochs: 6,
        patience: 100,
        seed: 11,
        ..Default::default()
    };
    let prepared = ok(prepare(&cfg, None))?;
    let target = prepared.channels.iter().position(|c| *c == cfg.target_column).ok_or("no target channel")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input = ok(InputShape::of(&prepared.split.train[0]))?;
    let mut model = ok(Model::new(cfg.model(), cfg.task_spec(), input, &mut rng))?;
    let (train, val) = (&prepared.split.train, &prepared.split.val);
    ok(train_loop(&mut model, train, val, &cfg.train(), &mut rng, |_| Control::Continue))?;
    let mse = ok(evaluate(&model, val, cfg.batch_size, cfg.loss))?.metrics.values()[0];

    let mut total = 0.0;
    let mut count = 0;
    for s in val {
        let last = s.series.data()[(target + 1) * cfg.lookback - 1];
        let Target::Horizon(h) = &s.target else { return Err("class target in forecast split".into()) };
        total += h.iter().map(|v| (v - last).powi(2)).sum::<f64>();
        count += h.len();
    }
    let naive = total / count as f64;
    let gain = 1.0 - mse / naive;
    let elapsed = start.elapsed();
    ensure!(gain >= 0.10, "model mse {mse:.4} vs naive {naive:.4} ({:.1}% better)", 100.0 * gain);
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(format!(
        "{rows} rows, val mse {mse:.4} vs last-value {naive:.4} ({:.0}% better), {:.0}s",
        100.0 * gain,
        elapsed.as_secs_f64()
    ))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn ablation() -> Outcome {
    let budget = 3;
    let (mut on, mut off) = (Vec::new(), Vec::new());
    for seed in 100..110 {
        for (wavelet, acc) in [(true, &mut on), (false, &mut off)] {
            let cfg = RunConfig { epochs: budget, ..classify_config(seed, wavelet) };
            acc.push(classify_run(&cfg, None)?.into_iter().fold(0.0, f64::max));
        }
    }
    let (m_on, m_off) = (median(on), median(off));
    ensure!(m_on >= m_off, "median with wavelet {m_on:.4} < without {m_off:.4}");
    Ok(format!("median val accuracy {m_on:.4} with wavelet, {m_off:.4} without ({budget} epochs, 10 seeds)"))
}

fn determinism() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let config = dir.path().join("run.toml");
    ok(std::fs::write(
        &config,
        "synth_samples = 120\nepochs = 3\nbatch_size = 16\nsteps = 4\nseed = 21\n",
    ))?;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let common = Common { config: Some(config.clone()), out: Some(dir.path().join(name)), ..Default::default() };
        let run = ok(cmd_train(&common))?;
        outputs.push((ok(std::fs::read(run.out_dir.join(HISTORY_FILE)))?, ok(std::fs::read(&run.checkpoint))?));
    }
    ensure!(outputs[0].0 == outputs[1].0, "history.csv differs");
    ensure!(outputs[0].1 == outputs[1].1, "checkpoint differs");
    Ok(format!("history {} bytes, checkpoint {} bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.insert(path.clone(), Vec::new());
                stack.push(path);
            } else {
                out.insert(path.clone(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn cli_contract() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let d = dir.path();
    let put = |name: &str, text: &[u8]| std::fs::write(d.join(name), text).unwrap();
    let bin = |args: &[&str]| -> i32 {
        let out = Command::new(env!("CARGO_BIN_EXE_spikefuse")).args(args).current_dir(d).output().unwrap();
        out.status.code().unwrap_or(-1)
    };

    let tiny = "synth_samples = 60\nsynth_len = 16\nepochs = 1\nbatch_size = 16\nimage_channels = [2]\n\
                series_hidden = [4]\njoint_width = 4\nhead_hidden = 4\nsteps = 2\npool_window = 2\n";
    put("good.toml", format!("{tiny}out = \"good\"\n").as_bytes());
    let mut ett = Vec::new();
    ok(write_csv(&synth_ett(3, 120), "date", &mut ett))?;
    let ett = String::from_utf8(ett).unwrap();
    let forecast = format!("{tiny}task = \"forecast\"\nlookback = 16\nhorizon = 4\nout = \"prior\"\n");
    let mut lines: Vec<String> = ett.lines().map(String::from).collect();
    put("ett.csv", ett.as_bytes());
    let cells: Vec<String> = lines[5].split(',').map(String::from).collect();
    lines[5] = format!("{},oops,{}", cells[0], cells[2..].join(","));
    put("malformed.csv", (lines.join("\n") + "\n").as_bytes());
    let cells: Vec<String> = lines[9].split(',').map(String::from).collect();
    lines[5] = ett.lines().nth(5).unwrap().to_string();
    lines[9] = format!("{},,{}", cells[0], cells[2..].join(","));
    put("gappy.csv", (lines.join("\n") + "\n").as_bytes());
    put("missing.toml", format!("{forecast}data = \"absent.csv\"\n").as_bytes());
    put("malformed.toml", format!("{forecast}data = \"malformed.csv\"\n").as_bytes());
    put("gap.toml", format!("{forecast}data = \"gappy.csv\"\ngap_policy = \"reject\"\n").as_bytes());
    put("typo.toml", format!("{tiny}epoks = 3\nout = \"prior\"\n").as_bytes());
    put("value.toml", format!("{tiny}tau = -1.0\nout = \"prior\"\n").as_bytes());
    put("syntax.toml", b"epochs = [\n");
    put("diverge.toml", format!("{tiny}learning_rate = 1e300\nout = \"prior\"\n").as_bytes());
    put("narrow.csv", b"a,b\n1,2\n");
    let beats = (0..16).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",") + "\n"
        + &(0..16).map(|i| (i as f64 * 0.3).sin().to_string()).collect::<Vec<_>>().join(",") + "\n";
    put("beats.csv", beats.as_bytes());

    let mut failures = Vec::new();
    let check = |what: &str, args: &[&str], want: i32, failures: &mut Vec<String>| {
        let got = bin(args);
        if got != want {
            failures.push(format!("{what}: exit {got}, want {want}"));
        }
    };
    for (what, args) in [
        ("train", &["train", "--config", "good.toml"][..]),
        ("eval", &["eval", "--checkpoint", "good/checkpoint.bin"]),
        ("predict", &["predict", "--checkpoint", "good/checkpoint.bin", "--input", "beats.csv"]),
        ("inspect", &["inspect", "--checkpoint", "good/checkpoint.bin", "--what", "heatmap"]),
        ("help", &["--help"]),
    ] {
        check(what, args, 0, &mut failures);
    }

    let good = ok(std::fs::read(d.join("good").join(CHECKPOINT_FILE)))?;
    ok(std::fs::create_dir(d.join("bad")))?;
    let mut flipped = good.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x01;
    ok(std::fs::write(d.join("bad/flipped.bin"), &flipped))?;
    let mut bumped = good.clone();
    bumped[8..12].copy_from_slice(&(VERSION + 1).to_le_bytes());
    ok(std::fs::write(d.join("bad/bumped.bin"), &bumped))?;
    ok(std::fs::write(d.join("bad/truncated.bin"), &good[..good.len() / 3]))?;
    ok(std::fs::create_dir(d.join("prior")))?;
    ok(std::fs::write(d.join("prior").join(HISTORY_FILE), "sentinel\n"))?;

    let faults: Vec<(&str, Vec<&str>, i32)> = vec![
        ("no subcommand", vec![], 1),
        ("unknown subcommand", vec!["fit"], 1),
        ("unknown flag", vec!["train", "--colour"], 1),
        ("missing config", vec!["train", "--config", "absent.toml"], 1),
        ("unknown key", vec!["train", "--config", "typo.toml"], 1),
        ("bad value", vec!["train", "--config", "value.toml"], 1),
        ("bad toml", vec!["train", "--config", "syntax.toml"], 1),
        ("eval without checkpoint", vec!["eval"], 1),
        ("missing csv", vec!["train", "--config", "missing.toml"], 2),
        ("malformed cell", vec!["train", "--config", "malformed.toml"], 2),
        ("rejected gap", vec!["train", "--config", "gap.toml"], 2),
        ("missing checkpoint", vec!["eval", "--checkpoint", "bad/none.bin"], 2),
        ("flipped checkpoint", vec!["eval", "--checkpoint", "bad/flipped.bin"], 2),
        ("future checkpoint", vec!["inspect", "--checkpoint", "bad/bumped.bin", "--what", "heatmap"], 2),
        ("truncated checkpoint", vec!["predict", "--checkpoint", "bad/truncated.bin", "--input", "beats.csv"], 2),
        ("narrow predict input", vec!["predict", "--checkpoint", "good/checkpoint.bin", "--input", "narrow.csv"], 2),
        ("missing predict input", vec!["predict", "--checkpoint", "good/checkpoint.bin", "--input", "absent.csv"], 2),
        ("diverging training", vec!["train", "--config", "diverge.toml"], 3),
    ];
    for (what, args, want) in &faults {
        let before = tree(d);
        check(what, args, *want, &mut failures);
        if tree(d) != before {
            failures.push(format!("{what}: files changed after a failed run"));
        }
    }
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    Ok(format!("4 subcommands ok, {} injected faults mapped and left no files", faults.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("numerics oracles", numerics),
        ("LIF closed form", lif_closed_form),
        ("wavelet exactness", wavelet_exactness),
        ("fusion contract", fusion_contract),
        ("shape chain", shape_chain),
        ("classification learning", learning_classification),
        ("forecast learning", learning_forecast),
        ("wavelet ablation", ablation),
        ("determinism", determinism),
        ("CLI contract", cli_contract),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradcheck, random, GRAD_TOL};
use spikefuse::fusion::{adapt_sigma, fuse, jwam_weights, similarity, JointModule, JointSpaceConfig, OutputHead, SigmaMode, Task};
use spikefuse::numerics::{Tape, Tensor, Var};
use spikefuse::param::Parameterized;

type Cube = Vec<Vec<Vec<f64>>>;

fn cube(t: &Tensor) -> Cube {
    let s = t.shape();
    (0..s[0])
        .map(|n| (0..s[1]).map(|b| t.data()[(n * s[1] + b) * s[2]..][..s[2]].to_vec()).collect())
        .collect()
}

fn nonneg(rng: &mut ChaCha8Rng, n: usize, b: usize, d: usize) -> Tensor {
    Tensor::new(vec![n, b, d], (0..n * b * d).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn reference_fuse(si: &Cube, st: &Cube, j: &Cube, p: &[[f64; 2]]) -> Cube {
    let d = j[0][0].len();
    let root = (d as f64).sqrt();
    let mut out = j.clone();
    for n in 0..j.len() {
        for b in 0..j[n].len() {
            let mut acc = vec![0.0; d];
            for (m, s) in [si, st].into_iter().enumerate() {
                let scores: Vec<f64> = (0..d).map(|k| s[n][b][k] * j[n][b][k] / root).collect();
                let a = softmax(&scores);
                for k in 0..d {
                    acc[k] += p[b][m] * a[k] * j[n][b][k];
                }
            }
            out[n][b] = acc;
        }
    }
    out
}

fn max_diff(a: &Cube, b: &Tensor) -> f64 {
    let flat: Vec<f64> = a.iter().flatten().flatten().copied().collect();
    flat.iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn fuse_matches_straight_line_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (n, b, d) = (rng.gen_range(1..6), rng.gen_range(1..4), rng.gen_range(1..9));
        let si = nonneg(&mut rng, n, b, d);
        let st = nonneg(&mut rng, n, b, d);
        let ja = si.zip_map(&st, |x, y| x + y).unwrap();
        let p: Vec<[f64; 2]> = (0..b)
            .map(|_| {
                let w = rng.gen_range(0.0..1.0);
                [w, 1.0 - w]
            })
            .collect();
        let pt = Tensor::new(vec![b, 2], p.iter().flatten().copied().collect()).unwrap();
        let got = fuse(&si, &st, &ja, &pt).unwrap();
        let want = reference_fuse(&cube(&si), &cube(&st), &cube(&ja), &p);
        assert!(max_diff(&want, &got) <= 1e-12);
    }
}

fn dft_features(steps: &[Tensor]) -> Cube {
    let t = steps.len();
    let n = t.next_power_of_two();
    let b = steps[0].shape()[0];
    let f = steps[0].len() / b;
    (0..n)
        .map(|k| {
            (0..b)
                .map(|s| {
                    let mut row = vec![0.0; 2 * f];
                    for q in 0..f {
                        for (tt, x) in steps.iter().enumerate() {
                            let ang = -2.0 * std::f64::consts::PI * (k * tt) as f64 / n as f64;
                            row[q] += x.data()[s * f + q] * ang.cos();
                            row[f + q] += x.data()[s * f + q] * ang.sin();
                        }
                    }
                    row
                })
                .collect()
        })
        .collect()
}

fn affine_relu(x: &Cube, w: &Tensor, bias: &Tensor) -> Cube {
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|plane| {
            plane
                .iter()
                .map(|row| {
                    (0..d_out)
                        .map(|o| {
                            let z: f64 = (0..d_in).map(|i| w.data()[o * d_in + i] * row[i]).sum::<f64>() + bias.data()[o];
                            z.max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn spikes(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| f64::from(rng.gen_bool(0.3))).collect()).unwrap()
}

#[test]
fn joint_module_matches_reference_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let t = rng.gen_range(2..7);
        let b = rng.gen_range(1..4);
        let (fi, fs, d) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(2..7));
        let cfg = JointSpaceConfig { joint_width: d, sigma_floor: 1e-6 };
        let mut module = JointModule::new(cfg, fi, fs, &mut rng).unwrap();
        module.psi_image.bias = random(&mut rng, &[d]);
        module.psi_series.bias = random(&mut rng, &[d]);
        let img: Vec<Tensor> = (0..t).map(|_| spikes(&mut rng, &[b, fi])).collect();
        let ser: Vec<Tensor> = (0..t).map(|_| spikes(&mut rng, &[b, fs])).collect();

        let mut tape = Tape::new();
        let params: Vec<Var> = module.params().into_iter().map(|(_, p)| tape.constant(p.clone())).collect();
        let iv: Vec<Var> = img.iter().map(|x| tape.constant(x.clone())).collect();
        let sv: Vec<Var> = ser.iter().map(|x| tape.constant(x.clone())).collect();
        let vars = module.forward(&mut tape, &params, &iv, &sv, SigmaMode::Batch).unwrap();

        let si = affine_relu(&dft_features(&img), &module.psi_image.weight, &module.psi_image.bias);
        let st = affine_relu(&dft_features(&ser), &module.psi_series.weight, &module.psi_series.bias);
        let n = si.len();
        let mut ja = si.clone();
        let mut diffs = Vec::new();
        for k in 0..n {
            for s in 0..b {
                for q in 0..d {
                    ja[k][s][q] = si[k][s][q] + st[k][s][q];
                }
            }
        }
        for src in [&si, &st] {
            for k in 0..n {
                for s in 0..b {
                    for q in 0..d {
                        diffs.push(src[k][s][q] - ja[k][s][q]);
                    }
                }
            }
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sigma2 = (diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / diffs.len() as f64).max(1e-6);
        assert!((vars.sigma2 - sigma2).abs() <= 1e-12 * sigma2.max(1.0));

        let mut p = Vec::new();
        for s in 0..b {
            let sim = |src: &Cube| {
                let msd: f64 = (0..n).flat_map(|k| (0..d).map(move |q| (k, q))).map(|(k, q)| (src[k][s][q] - ja[k][s][q]).powi(2)).sum::<f64>()
                    / (n * d) as f64;
                (-msd / (2.0 * sigma2)).exp()
            };
            let (a, c) = (sim(&si), sim(&st));
            assert!((tape.value(vars.sims).data()[2 * s] - a).abs() <= 1e-12);
            assert!((tape.value(vars.sims).data()[2 * s + 1] - c).abs() <= 1e-12);
            let w = softmax(&[a, c]);
            p.push([w[0], w[1]]);
        }
        let pm: Vec<f64> = p.iter().flatten().copied().collect();
        let got_p = tape.value(vars.p_mtsa).data();
        assert!(pm.iter().zip(got_p).all(|(x, y)| (x - y).abs() <= 1e-12));

        let want = reference_fuse(&si, &st, &ja, &p);
        assert!(max_diff(&want, tape.value(vars.j_fusion)) <= 1e-12);
    }
}

#[test]
fn fusion_subgraph_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10 {
        let (t, b, fi, fs, d) = (4, 2, 3, 2, 4);
        let cfg = JointSpaceConfig { joint_width: d, sigma_floor: 1e-6 };
        let module = JointModule::new(cfg, fi, fs, &mut rng).unwrap();
        let task = if k % 2 == 0 { Task::Classification { classes: 3 } } else { Task::Regression { horizon: 2 } };
        let head = OutputHead::new(Some(task), d, 5, &mut rng).unwrap();
        let mut inputs: Vec<Tensor> = module.params().into_iter().map(|(_, p)| p.clone()).collect();
        inputs.extend(head.params().into_iter().map(|(_, p)| p.clone()));
        // nudge every bias so no relu starts exactly at its kink
        for x in inputs.iter_mut().filter(|x| x.rank() == 1) {
            *x = random(&mut rng, x.shape()).map(|v| v + 0.5);
        }
        let np = inputs.len();
        for _ in 0..t {
            inputs.push(random(&mut rng, &[b, fi]));
        }
        for _ in 0..t {
            inputs.push(random(&mut rng, &[b, fs]));
        }
        let err = gradcheck(&mut rng, &inputs, |tape, v| {
            let vars = module
                .forward(tape, &v[..4], &v[np..np + t], &v[np + t..], SigmaMode::Fixed(0.8))
                .unwrap();
            head.forward(tape, &v[4..np], vars.j_fusion).unwrap()
        });
        assert!(err <= GRAD_TOL, "relative error {err:e}");
    }
}

proptest! {
    #[test]
    fn weights_are_a_distribution(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (wi, wt) = jwam_weights(a, b);
        prop_assert!(wi > 0.0 && wt > 0.0);
        prop_assert!((wi + wt - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn self_similarity_is_one(xs in prop::collection::vec(-1e3f64..1e3, 1..40), sigma2 in 1e-6f64..10.0) {
        let a = Tensor::from_vec(xs);
        prop_assert_eq!(similarity(&a, &a, sigma2).unwrap(), 1.0);
    }

    #[test]
    fn similarity_in_unit_interval(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
        sigma2 in 1e-3f64..10.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = similarity(&Tensor::from_vec(a), &Tensor::from_vec(b), sigma2).unwrap();
        prop_assert!(s >= 0.0 && s <= 1.0);
    }

    #[test]
    fn sigma_respects_floor(diffs in prop::collection::vec(-3.0f64..3.0, 0..50), floor in 1e-9f64..1.0) {
        prop_assert!(adapt_sigma(&diffs, floor) >= floor);
    }
}

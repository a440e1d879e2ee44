use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::pointcloud::{batch, CloudMeta, PointCloud};
use crate::tensor::{grad_check_detailed, Tape, Tensor, Var};

const META: CloudMeta = CloudMeta {
    n_fft: 64,
    sample_rate: 16_000,
    hop: None,
};

fn cfg(dim: usize, width: usize, heads: usize) -> MabConfig {
    MabConfig {
        query_dim: dim,
        key_dim: dim,
        width,
        heads,
        style: MabStyle::Standard,
        scale: AttnScale::PerHead,
        layer_norm: false,
    }
}

/// Overwrites every parameter (biases included) with seeded values in [-0.5, 0.5].
fn scramble(store: &mut ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in store.entries_mut() {
        e.data.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
}

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
    PointCloud::from_coords(dim, random_rows(n, dim, seed), META).unwrap()
}

fn permute_rows(x: &[f64], d: usize, perm: &[usize]) -> Vec<f64> {
    perm.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bind_all(store: &ParamStore<f64>, tape: &mut Tape<f64>) -> Bound {
    store.bind(tape, false)
}

fn run_mab(mab: &Mab, store: &ParamStore<f64>, x: (&[f64], usize), y: (&[f64], usize), mask: Option<&[bool]>) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = bind_all(store, &mut tape);
    let dq = mab.config().query_dim;
    let dk = mab.config().key_dim;
    let xv = tape.constant(vec![x.1, dq], x.0.to_vec());
    let yv = tape.constant(vec![y.1, dk], y.0.to_vec());
    let out = mab.forward(&mut tape, &p, xv, yv, mask).unwrap().out;
    tape.value(out).data.clone()
}

fn entry<'a>(store: &'a ParamStore<f64>, name: &str) -> &'a [f64] {
    &store.entries().iter().find(|e| e.name == name).unwrap().data
}

/// Scalar loop reference for a standard-style block with `d_in == width`.
fn naive_mab(store: &ParamStore<f64>, x: &[f64], n: usize, y: &[f64], m: usize, d: usize, heads: usize) -> Vec<f64> {
    let w = |name: &str| entry(store, &format!("mab.{name}")).to_vec();
    let (wq, bq, wk, wv, bv) = (w("q.weight"), w("q.bias"), w("k.weight"), w("v.weight"), w("v.bias"));
    let (wo, bo, wf, bf) = (w("o.weight"), w("o.bias"), w("ff.weight"), w("ff.bias"));
    let lin = |row: &[f64], wt: &[f64], b: Option<&[f64]>| -> Vec<f64> {
        (0..d)
            .map(|j| (0..d).map(|i| row[i] * wt[i * d + j]).sum::<f64>() + b.map_or(0.0, |b| b[j]))
            .collect()
    };
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let keys: Vec<Vec<f64>> = (0..m).map(|j| lin(&y[j * d..(j + 1) * d], &wk, None)).collect();
    let vals: Vec<Vec<f64>> = (0..m).map(|j| lin(&y[j * d..(j + 1) * d], &wv, Some(&bv))).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let q = lin(xi, &wq, Some(&bq));
        let mut att = vec![0.0; d];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let scores: Vec<f64> = keys
                .iter()
                .map(|k| cols.clone().map(|c| q[c] * k[c]).sum::<f64>() * scale)
                .collect();
            let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            for (j, s) in scores.iter().enumerate() {
                let a = (s - mx).exp() / z;
                for c in cols.clone() {
                    att[c] += a * vals[j][c];
                }
            }
        }
        let proj = lin(&att, &wo, Some(&bo));
        let hrow: Vec<f64> = xi.iter().zip(&proj).map(|(a, b)| a + b).collect();
        let ff = lin(&hrow, &wf, Some(&bf));
        out.extend(hrow.iter().zip(&ff).map(|(h, f)| h + if *f > 0.0 { *f } else { 0.01 * f }));
    }
    out
}

#[test]
fn mab_matches_scalar_reference() {
    for heads in [1, 2] {
        let mut store = ParamStore::new();
        let mab = Mab::new(&mut store, &mut Init::new(1), "mab", cfg(2, 2, heads));
        scramble(&mut store, 7);
        let x = random_rows(3, 2, 11);
        let y = random_rows(2, 2, 12);
        let got = run_mab(&mab, &store, (&x, 3), (&y, 2), None);
        let want = naive_mab(&store, &x, 3, &y, 2, 2, heads);
        assert!(max_abs_diff(&got, &want) < 1e-12, "heads {heads}: {got:?} vs {want:?}");
    }
}

#[test]
fn mab_single_key_gets_all_weight() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, &mut Init::new(2), "mab", cfg(3, 4, 2));
    scramble(&mut store, 3);
    let mut tape = Tape::new();
    let p = bind_all(&store, &mut tape);
    let x = tape.constant(vec![5, 3], random_rows(5, 3, 4));
    let y = tape.constant(vec![1, 3], random_rows(1, 3, 5));
    let att = mab.forward(&mut tape, &p, x, y, None).unwrap().attention;
    let probs = tape.attention_probs(att).unwrap();
    assert!(probs.probs.iter().all(|&w| w == 1.0));
}

#[test]
fn mab_key_permutation_invariance_and_query_equivariance() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, &mut Init::new(3), "mab", cfg(3, 8, 4));
    scramble(&mut store, 8);
    let (n, m) = (6, 9);
    let x = random_rows(n, 3, 1);
    let y = random_rows(m, 3, 2);
    let mut mask = vec![true; m];
    mask[4] = false;
    let base = run_mab(&mab, &store, (&x, n), (&y, m), Some(&mask));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    let yp = permute_rows(&y, 3, &perm);
    let mp: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
    let moved = run_mab(&mab, &store, (&x, n), (&yp, m), Some(&mp));
    assert!(max_abs_diff(&base, &moved) < 1e-9);

    let mut qperm: Vec<usize> = (0..n).collect();
    qperm.shuffle(&mut rng);
    let xp = permute_rows(&x, 3, &qperm);
    let out = run_mab(&mab, &store, (&xp, n), (&y, m), Some(&mask));
    assert!(max_abs_diff(&out, &permute_rows(&base, 8, &qperm)) < 1e-9);
}

#[test]
fn mab_rejects_fully_masked_keys() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, &mut Init::new(3), "mab", cfg(2, 2, 1));
    let mut tape = Tape::new();
    let p = bind_all(&store, &mut tape);
    let x = tape.constant(vec![1, 2], vec![0.1, 0.2]);
    let y = tape.constant(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
    let err = mab.forward(&mut tape, &p, x, y, Some(&[false, false])).unwrap_err();
    assert!(matches!(err, Error::FullyMasked { .. }));
}

#[test]
fn sab_is_mab_of_self() {
    let mut store = ParamStore::new();
    let sab = Sab::new(&mut store, &mut Init::new(4), "sab", cfg(4, 4, 2));
    scramble(&mut store, 4);
    let x = random_rows(5, 4, 6);
    let mut tape = Tape::new();
    let p = bind_all(&store, &mut tape);
    let xv = tape.constant(vec![5, 4], x.clone());
    let a = sab.forward(&mut tape, &p, xv, None).unwrap().out;
    let b = sab.mab.forward(&mut tape, &p, xv, xv, None).unwrap().out;
    assert_eq!(tape.value(a).data, tape.value(b).data);

    let single = tape.constant(vec![1, 4], vec![0.3, -0.2, 0.5, 0.1]);
    let s = sab.forward(&mut tape, &p, single, None).unwrap().out;
    assert!(tape.value(s).data.iter().all(|v| v.is_finite()));
}

fn run_set_block(f: impl Fn(&mut Tape<f64>, &Bound, Var) -> BlockOut, store: &ParamStore<f64>, x: &[f64], d: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let p = bind_all(store, &mut tape);
    let xv = tape.constant(vec![x.len() / d, d], x.to_vec());
    let out = f(&mut tape, &p, xv).out;
    tape.value(out).data.clone()
}

#[test]
fn sab_and_isab_are_permutation_equivariant() {
    let mut store = ParamStore::new();
    let sab = Sab::new(&mut store, &mut Init::new(5), "sab", cfg(3, 8, 2));
    let isab = Isab::new(&mut store, &mut Init::new(6), "isab", cfg(3, 8, 2), 4);
    scramble(&mut store, 10);
    let x = random_rows(11, 3, 3);
    let mut perm: Vec<usize> = (0..11).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let xp = permute_rows(&x, 3, &perm);

    let s = run_set_block(|t, p, v| sab.forward(t, p, v, None).unwrap(), &store, &x, 3);
    let sp = run_set_block(|t, p, v| sab.forward(t, p, v, None).unwrap(), &store, &xp, 3);
    assert!(max_abs_diff(&permute_rows(&s, 8, &perm), &sp) < 1e-9);

    let i = run_set_block(|t, p, v| isab.forward(t, p, v, None).unwrap(), &store, &x, 3);
    let ip = run_set_block(|t, p, v| isab.forward(t, p, v, None).unwrap(), &store, &xp, 3);
    assert!(max_abs_diff(&permute_rows(&i, 8, &perm), &ip) < 1e-9);
}

#[test]
fn isab_with_one_inducing_point_is_finite() {
    let mut store = ParamStore::new();
    let isab = Isab::new(&mut store, &mut Init::new(6), "isab", cfg(2, 4, 1), 1);
    let out = run_set_block(|t, p, v| isab.forward(t, p, v, None).unwrap(), &store, &random_rows(9, 2, 1), 2);
    assert_eq!(out.len(), 9 * 4);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn pma_invariance_and_duplication() {
    let mut store = ParamStore::new();
    let pma = Pma::new(&mut store, &mut Init::new(7), "pma", cfg(4, 4, 2));
    scramble(&mut store, 12);
    let x = random_rows(10, 4, 5);
    let base = run_set_block(|t, p, v| pma.forward(t, p, v, None).unwrap(), &store, &x, 4);
    assert_eq!(base.len(), 4);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rng);
        let out = run_set_block(|t, p, v| pma.forward(t, p, v, None).unwrap(), &store, &permute_rows(&x, 4, &perm), 4);
        assert!(max_abs_diff(&base, &out) < 1e-9);
    }

    let doubled: Vec<f64> = x.iter().chain(&x).copied().collect();
    let out = run_set_block(|t, p, v| pma.forward(t, p, v, None).unwrap(), &store, &doubled, 4);
    assert!(max_abs_diff(&base, &out) < 1e-9);

    let one = run_set_block(|t, p, v| pma.forward(t, p, v, None).unwrap(), &store, &x[..4], 4);
    assert!(one.iter().all(|v| v.is_finite()));
}

#[test]
fn pma_rejects_empty_cloud() {
    let mut store = ParamStore::new();
    let pma = Pma::new(&mut store, &mut Init::new(7), "pma", cfg(2, 2, 1));
    let mut tape = Tape::new();
    let p = bind_all(&store, &mut tape);
    let x = tape.constant(vec![2, 2], vec![0.0; 4]);
    assert!(pma.forward(&mut tape, &p, x, Some(&[false, false])).is_err());
}

/// Key biases shift every score in a row equally, so softmax cancels them and
/// their exact gradient is zero.
fn is_key_bias(name: &str) -> bool {
    name.ends_with(".k.bias")
}

/// Gradient check of `f` with respect to every entry of `store`. Key biases
/// are held fixed there and instead required to receive a vanishing gradient.
fn check_store(store: &ParamStore<f64>, eps: f64, f: impl Fn(&mut Tape<f64>, &Bound) -> crate::Result<Var>) -> f64 {
    let entries = store.entries();
    let checked: Vec<usize> = (0..entries.len()).filter(|&i| !is_key_bias(&entries[i].name)).collect();
    let tensors: Vec<Tensor<f64>> = checked
        .iter()
        .map(|&i| Tensor::new(entries[i].shape.clone(), entries[i].data.clone()).unwrap())
        .collect();
    let assemble = |tape: &mut Tape<f64>, vars: &[Var]| {
        let mut next = vars.iter();
        Bound(
            entries
                .iter()
                .map(|e| {
                    if is_key_bias(&e.name) {
                        tape.constant(e.shape.clone(), e.data.clone())
                    } else {
                        *next.next().unwrap()
                    }
                })
                .collect(),
        )
    };
    let r = grad_check_detailed(
        |tape, vars| {
            let p = assemble(tape, vars);
            f(tape, &p)
        },
        &tensors,
        eps,
    )
    .unwrap();
    eprintln!("worst {} [{}]: {r:?}", entries[checked[r.param]].name, r.element);

    let mut tape = Tape::new();
    let p = store.bind(&mut tape, true);
    let loss = f(&mut tape, &p).unwrap();
    tape.backward(loss).unwrap();
    for (e, g) in entries.iter().zip(store.grads(&tape, &p)) {
        if is_key_bias(&e.name) {
            assert!(g.iter().all(|x| x.abs() < 1e-12), "{}: {g:?}", e.name);
        }
    }
    r.max_rel_err
}

/// Contracts a block output with fixed weights to get a scalar loss.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> crate::Result<Var> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w = tape.constant(shape, random_rows(n, 1, seed));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

#[test]
fn blocks_pass_gradient_check() {
    for style in [MabStyle::Standard, MabStyle::Lean] {
        for layer_norm in [false, true] {
            let c = MabConfig {
                style,
                layer_norm,
                ..cfg(3, 4, 2)
            };
            let mut store = ParamStore::new();
            let mab = Mab::new(&mut store, &mut Init::new(1), "mab", MabConfig { key_dim: 2, ..c });
            let sab = Sab::new(&mut store, &mut Init::new(2), "sab", c);
            let isab = Isab::new(&mut store, &mut Init::new(3), "isab", c, 3);
            let pma = Pma::new(&mut store, &mut Init::new(4), "pma", c);
            scramble(&mut store, 99);
            let x = random_rows(4, 3, 1);
            let y = random_rows(3, 2, 2);
            let mask = [true, false, true, true];
            let input = |tape: &mut Tape<f64>| tape.constant(vec![4, 3], x.clone());

            let errs = [
                check_store(&store, 1e-4, |tape, p| {
                    let xv = input(tape);
                    let yv = tape.constant(vec![3, 2], y.clone());
                    let out = mab.forward(tape, p, xv, yv, Some(&[true, true, false]))?.out;
                    weighted_sum(tape, out, 1)
                }),
                check_store(&store, 1e-4, |tape, p| {
                    let xv = input(tape);
                    let out = sab.forward(tape, p, xv, Some(&mask))?.out;
                    weighted_sum(tape, out, 2)
                }),
                check_store(&store, 1e-4, |tape, p| {
                    let xv = input(tape);
                    let out = isab.forward(tape, p, xv, Some(&mask))?.out;
                    weighted_sum(tape, out, 3)
                }),
                check_store(&store, 1e-4, |tape, p| {
                    let xv = input(tape);
                    let out = pma.forward(tape, p, xv, Some(&mask))?.out;
                    weighted_sum(tape, out, 4)
                }),
            ];
            for (block, err) in ["MAB", "SAB", "ISAB", "PMA"].iter().zip(errs) {
                assert!(err < 1e-4, "{block} {style:?} ln={layer_norm}: rel err {err}");
            }
        }
    }
}

fn check_model(mut model: Classifier<f64>, input: ModelInput, label: usize, scramble_seed: Option<u64>) -> f64 {
    if let Some(s) = scramble_seed {
        scramble(model.params_mut(), s);
    }
    check_store(model.params(), 1e-3, |tape, p| {
        let f = model.forward(tape, p, &input, Mode::EVAL)?;
        tape.cross_entropy(f.logits, label)
    })
}

#[test]
fn models_pass_gradient_check() {
    let fst = Classifier::new(ModelSpec::fst(3).with_hidden(4, 2).with_inducing(3), 1).unwrap();
    let err = check_model(fst, ModelInput::Cloud(random_cloud(8, 2, 1)), 1, Some(5));
    assert!(err < 1e-4, "FST {err}");

    let tst = Classifier::new(ModelSpec::tst3(3).with_hidden(4, 2).with_inducing(3), 2).unwrap();
    let err = check_model(tst, ModelInput::Cloud(random_cloud(8, 3, 2)), 2, Some(6));
    assert!(err < 1e-4, "3ST {err}");

    let fb = Classifier::new(ModelSpec::fb_custom(6, vec![5, 4], 3), 3).unwrap();
    let err = check_model(fb, ModelInput::Vector(random_rows(6, 1, 3)), 0, Some(7));
    assert!(err < 1e-4, "FB {err}");

    let mut spec = ModelSpec::cnn(3).with_input_dim(8);
    spec.cnn_channels = 2;
    let cnn = Classifier::new(spec, 4).unwrap();
    let grid = ModelInput::Grid {
        frames: 10,
        bins: 8,
        data: random_rows(80, 1, 4),
    };
    let err = check_model(cnn, grid, 1, Some(8));
    assert!(err < 1e-5, "CNN {err}");
}

#[test]
fn pooled_mab_cross_entropy_gradient() {
    let mut store = ParamStore::new();
    let mab = Mab::new(&mut store, &mut Init::new(1), "mab", cfg(2, 4, 1));
    let pma = Pma::new(&mut store, &mut Init::new(2), "pma", cfg(4, 4, 1));
    let head = Linear::new(&mut store, &mut Init::new(3), "head", 4, 3, true, 1.0);
    scramble(&mut store, 4);
    let x = random_rows(4, 2, 9);
    let err = check_store(&store, 1e-3, |tape, p| {
        let xv = tape.constant(vec![4, 2], x.clone());
        let h = mab.forward(tape, p, xv, xv, None)?.out;
        let pooled = pma.forward(tape, p, h, None)?.out;
        let logits = head.forward(tape, p, pooled)?;
        tape.cross_entropy(logits, 2)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn parameter_counts() {
    let count = |spec: ModelSpec| Classifier::<f64>::new(spec, 0).unwrap().param_count();
    assert_eq!(count(ModelSpec::fb_toy(2)), 64 * 8 + 8 + 8 * 2 + 2);
    assert_eq!(count(ModelSpec::fb_toy(2)), 538);
    assert_eq!(count(ModelSpec::fb(10)), (1025 * 512 + 512) + (512 * 256 + 256) + (256 * 10 + 10));
    assert_eq!(count(ModelSpec::cnn(10)), 154_240);
    assert_eq!(count(ModelSpec::fst(10).lean()), 80_202);
    assert_eq!(count(ModelSpec::tst3(10).lean()), 80_394);

    // standard blocks: q, v, o, ff carry biases, keys do not
    let (d, k, c) = (64, 16, 10);
    let mab = |dq: usize, dk: usize| (dq * d + d) + dk * d + (dk * d + d) + 2 * (d * d + d);
    let st = |din: usize| {
        let embed = din * d + d;
        let isab = k * d + mab(d, d) + mab(d, d);
        embed + 2 * isab + d + mab(d, d) + d * c + c
    };
    assert_eq!(count(ModelSpec::fst(c)), st(2));
    assert_eq!(count(ModelSpec::tst3(c)), st(3));
    assert_eq!(count(ModelSpec::fst_toy(2)), {
        let (d, k) = (2usize, 16usize);
        let mab = (d * d + d) + d * d + (d * d + d) + 2 * (d * d + d);
        2 * (k * d + 2 * mab) + d + mab + d * 2 + 2
    });
}

#[test]
fn full_preset_orderings() {
    let count = |spec: ModelSpec| Classifier::<f64>::new(spec, 0).unwrap().param_count();
    assert!(count(ModelSpec::fst(10)) < count(ModelSpec::fb(10)));
    assert!(count(ModelSpec::tst3(10)) < count(ModelSpec::cnn(10)));
}

#[test]
fn analytic_macs_match_tape() {
    let specs = [
        ModelSpec::fst(4).with_hidden(8, 2).with_inducing(3),
        ModelSpec::tst3(4).with_hidden(8, 2),
        ModelSpec::fst(4).with_hidden(8, 2).lean(),
        {
            let mut s = ModelSpec::fst(4).with_hidden(8, 2);
            s.layer_norm = true;
            s
        },
        ModelSpec::fb_custom(12, vec![7, 5], 3),
        {
            let mut s = ModelSpec::cnn(3).with_input_dim(6);
            s.cnn_channels = 3;
            s.cnn_frames = 12;
            s
        },
    ];
    for spec in specs {
        let model = Classifier::<f64>::new(spec.clone(), 0).unwrap();
        let (input, n) = match spec.kind {
            ModelKind::Fst | ModelKind::Tst3 => (ModelInput::Cloud(random_cloud(13, spec.input_dim, 1)), 13),
            ModelKind::Fb => (ModelInput::Vector(vec![0.5; 12]), 0),
            ModelKind::Cnn => (
                ModelInput::Grid {
                    frames: 12,
                    bins: 6,
                    data: vec![0.5; 72],
                },
                0,
            ),
        };
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        model.forward(&mut tape, &p, &input, Mode::EVAL).unwrap();
        assert_eq!(tape.macs(), model.macs(n), "{:?}", spec.kind);
    }
}

#[test]
fn fst_accepts_any_cardinality() {
    let model = Classifier::<f64>::new(ModelSpec::fst(10).with_hidden(8, 2), 3).unwrap();
    for n in [1, 7, 1025] {
        let logits = model.logits(&ModelInput::Cloud(random_cloud(n, 2, n as u64))).unwrap();
        assert_eq!(logits.len(), 10);
        assert!(logits.iter().all(|v| v.is_finite()));
    }
    let tst = Classifier::<f64>::new(ModelSpec::tst3(5).with_hidden(8, 2), 3).unwrap();
    for n in [1, 7, 300] {
        assert_eq!(tst.logits(&ModelInput::Cloud(random_cloud(n, 3, 1))).unwrap().len(), 5);
    }
}

#[test]
fn batched_logits_match_single() {
    for (spec, dim) in [
        (ModelSpec::fst(4).with_hidden(8, 2), 2),
        (ModelSpec::tst3(4).with_hidden(8, 2), 3),
        (ModelSpec::fst(4).with_hidden(8, 2).lean(), 2),
    ] {
        let mut model = Classifier::<f64>::new(spec, 5).unwrap();
        scramble(model.params_mut(), 2);
        let clouds: Vec<PointCloud> = [3, 9, 5].iter().map(|&n| random_cloud(n, dim, n as u64)).collect();
        let batched = model.logits_batch(&batch(&clouds).unwrap()).unwrap();
        for (c, b) in clouds.iter().zip(&batched) {
            let single = model.logits(&ModelInput::Cloud(c.clone())).unwrap();
            assert!(max_abs_diff(&single, b) < 1e-6);
            let lone = model.logits_batch(&batch(std::slice::from_ref(c)).unwrap()).unwrap();
            assert!(max_abs_diff(&single, &lone[0]) < 1e-6);
        }
    }
}

#[test]
fn attention_weights_form_a_distribution() {
    let model = Classifier::<f64>::new(ModelSpec::fst(3).with_hidden(8, 4), 2).unwrap();
    let w = model.attention_weights(&random_cloud(40, 2, 3)).unwrap();
    assert_eq!(w.len(), 40);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(model.attention_weights(&random_cloud(1, 2, 3)).unwrap(), [1.0]);
}

#[test]
fn fb_contract() {
    let mut model = Classifier::<f64>::new(ModelSpec::fb(10), 0).unwrap();
    let err = model.logits(&ModelInput::Vector(vec![0.0; 513])).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
    model.params_mut().entries_mut().iter_mut().for_each(|e| e.data.fill(0.0));
    assert_eq!(model.logits(&ModelInput::Vector(vec![0.7; 1025])).unwrap(), [0.0; 10]);
    assert!(model.logits(&ModelInput::Cloud(random_cloud(3, 2, 1))).is_err());
}

#[test]
fn fb_dropout_only_in_training() {
    let model = Classifier::<f64>::new(ModelSpec::fb_toy(2), 0).unwrap();
    let x = ModelInput::Vector(random_rows(64, 1, 1));
    let run = |mode| {
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let f = model.forward(&mut tape, &p, &x, mode).unwrap();
        tape.value(f.logits).data.clone()
    };
    assert_eq!(run(Mode::EVAL), model.logits(&x).unwrap());
    assert_eq!(run(Mode::train(3)), run(Mode::train(3)));
    assert_ne!(run(Mode::train(3)), run(Mode::EVAL));
}

#[test]
fn cnn_contract() {
    let mut spec = ModelSpec::cnn(2).with_input_dim(4);
    spec.cnn_channels = 1;
    let mut model = Classifier::<f64>::new(spec, 0).unwrap();
    let grid = |frames| ModelInput::Grid {
        frames,
        bins: 4,
        data: vec![1.0; frames * 4],
    };
    assert!(matches!(model.logits(&grid(9)), Err(Error::InputTooShort { .. })));
    assert!(matches!(model.logits(&grid(11)), Err(Error::Dimension(_))));

    // all-ones kernel, zero bias: pre-activation 10 per bin; unit head picks it up
    for e in model.params_mut().entries_mut() {
        let fill = match e.name.as_str() {
            "conv.weight" => 1.0,
            "head.weight" => 1.0,
            _ => 0.0,
        };
        e.data.fill(fill);
    }
    assert_eq!(model.logits(&grid(10)).unwrap(), [40.0, 40.0]);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut model = Classifier::<f64>::new(ModelSpec::fst(3).with_hidden(4, 1), 9).unwrap();
    scramble(model.params_mut(), 1);
    let ck = Checkpoint::from_model(&model, serde_json::json!({"n_fft": 64}));
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let restored: Classifier<f64> = back.to_model().unwrap();
    assert_eq!(restored.params(), model.params());

    let mut wrong = ck.clone();
    wrong.format_version = 99;
    assert!(matches!(wrong.to_model::<f64>(), Err(Error::Schema(_))));
}

#[test]
fn single_precision_model_runs() {
    let model = Classifier::<f32>::new(ModelSpec::fst(3).with_hidden(4, 1), 1).unwrap();
    let w = model.attention_weights(&random_cloud(5, 2, 1)).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn logits_are_permutation_invariant(n in 1usize..64, seed in any::<u64>(), three_d in any::<bool>()) {
        let dim = if three_d { 3 } else { 2 };
        let spec = if three_d { ModelSpec::tst3(4) } else { ModelSpec::fst(4) };
        let model = Classifier::<f64>::new(spec.with_hidden(8, 2), seed).unwrap();
        let cloud = random_cloud(n, dim, seed);
        let base = model.logits(&ModelInput::Cloud(cloud.clone())).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let moved = PointCloud::from_coords(dim, permute_rows(cloud.coords(), dim, &perm), META).unwrap();
        let out = model.logits(&ModelInput::Cloud(moved)).unwrap();
        prop_assert!(max_abs_diff(&base, &out) < 1e-6);
    }

    #[test]
    fn zero_out_keeps_exactly_the_chosen_entries(v in prop::collection::vec(-5.0f64..5.0, 1..40), pick in any::<u64>()) {
        let keep: Vec<usize> = (0..v.len()).filter(|i| (pick >> (i % 64)) & 1 == 1).collect();
        let out = zero_out(&v, &keep).unwrap();
        for (i, (&a, &b)) in v.iter().zip(&out).enumerate() {
            prop_assert_eq!(b, if keep.contains(&i) { a } else { 0.0 });
        }
    }
}


use adadrug::checkpoint::{from_bytes, to_bytes};
use adadrug::data::{
    align_genes, binarize_ic50, class_balanced_probabilities, select_hvg, smote_upsample,
    weight_upsample, weighted_draws, BatchPlan, ExpressionMatrix, HvgParams, LabeledDomain,
};
use adadrug::eval::{aupr, auroc, predict_target, Reference};
use adadrug::losses;
use adadrug::model::{self, ArchSpec, ModelBundle};
use adadrug::numerics::{Matrix, Tape};
use adadrug::train::TrainConfig;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn matrix(
    rows: std::ops::RangeInclusive<usize>,
    cols: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0..10.0f64, r * c)
            .prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn with_shape(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
}

fn labeled(n: usize, labels: Vec<u8>, g: usize, seed: u64) -> LabeledDomain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * g)
        .map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0))
        .collect();
    let expr = ExpressionMatrix::with_generated_ids("c", Matrix::from_vec(n, g, values).unwrap());
    LabeledDomain::new(expr, labels).unwrap()
}

/// Both classes present, at least two of each.
fn labels() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 4..60).prop_filter("two of each class", |y| {
        let pos = y.iter().filter(|&&v| v == 1).count();
        pos >= 2 && y.len() - pos >= 2
    })
}

fn small_model(seed: u64) -> ModelBundle {
    let mut m = ModelBundle::init(&ArchSpec::with_hidden(7, 3, 5, 4), seed).unwrap();
    m.weighting = true;
    m
}

fn tie_free(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    labels()
        .prop_flat_map(move |y| {
            let len = y.len();
            (prop::collection::hash_set(-1000i32..1000, len), Just(y))
                .prop_map(|(s, y)| (s.into_iter().map(|v| v as f64 / 10.0).collect(), y))
        })
        .prop_filter("length", move |(s, _): &(Vec<f64>, Vec<u8>)| {
            n.contains(&s.len())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_and_zero_products_are_exact(a in matrix(1..=6, 1..=6)) {
        let (r, c) = a.shape();
        prop_assert_eq!(a.matmul(&Matrix::identity(c)).unwrap(), a.clone());
        prop_assert_eq!(Matrix::identity(r).matmul(&a).unwrap(), a.clone());
        prop_assert_eq!(a.matmul(&Matrix::zeros(c, 2)).unwrap(), Matrix::zeros(r, 2));
        let ai = a.matmul(&Matrix::identity(c)).unwrap();
        prop_assert_eq!(ai.matmul(&Matrix::identity(c)).unwrap(), a.matmul(&Matrix::identity(c).matmul(&Matrix::identity(c)).unwrap()).unwrap());
    }

    #[test]
    fn transposed_products_agree((a, b) in (1..5usize, 1..5usize, 1..5usize).prop_flat_map(|(r, k, c)| (with_shape(r, k), with_shape(k, c)))) {
        let ab = a.matmul(&b).unwrap();
        let nt = a.matmul_nt(&b.transpose()).unwrap();
        let tn = a.transpose().matmul_tn(&b).unwrap();
        let bt_at = b.transpose().matmul(&a.transpose()).unwrap().transpose();
        for other in [nt, tn, bt_at] {
            let diff = ab.zip_map(&other, "cmp", |x, y| x - y).unwrap().max_abs();
            prop_assert!(diff < 1e-12);
        }
    }

    #[test]
    fn backward_twice_accumulates(x in with_shape(3, 4)) {
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let s = t.sigmoid(v);
        let l = t.sum_all(s);
        t.backward(l).unwrap();
        let once = t.grad(v);
        t.backward(l).unwrap();
        prop_assert_eq!(t.grad(v), once.map(|g| 2.0 * g));
        t.zero_grads();
        prop_assert!(t.grad(v).as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn large_finite_inputs_stay_finite(v in prop::collection::vec(-1e6..1e6f64, 12)) {
        let x = Matrix::from_vec(3, 4, v).unwrap();
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let p = t.sigmoid(xv);
        prop_assert!(t.value(p).is_finite());
        let d = t.sum_rows(p);
        let col = t.scale(d, 0.25);
        let loss = losses::adv_loss(&mut t, &[col], Some(col)).unwrap();
        prop_assert!(t.value(loss).is_finite());
        t.backward(loss).unwrap();
        prop_assert!(t.grad(xv).is_finite());
    }

    #[test]
    fn forward_passes_are_pure(seed in 0u64..1000, x in with_shape(4, 7)) {
        let m = small_model(seed);
        prop_assert_eq!(model::encode(&m, &x).unwrap(), model::encode(&m, &x).unwrap());
        let h = model::encode(&m, &x).unwrap();
        prop_assert_eq!(model::predict(&m, &h).unwrap(), model::predict(&m, &h).unwrap());
        prop_assert_eq!(model::decode(&m, &h).unwrap(), model::decode(&m, &h).unwrap());
    }

    #[test]
    fn weight_generator_ignores_argument_order(seed in 0u64..1000, a in with_shape(5, 3), b in with_shape(5, 3)) {
        let m = small_model(seed);
        prop_assert_eq!(model::gen_weights(&m, &a, &b).unwrap(), model::gen_weights(&m, &b, &a).unwrap());
    }

    #[test]
    fn unit_and_shared_weights(seed in 0u64..1000, h in with_shape(5, 3), k in 1usize..5) {
        prop_assert_eq!(model::apply_weights(&h, &Matrix::filled(5, 3, 1.0)).unwrap(), h.clone());
        let m = small_model(seed);
        let w = model::gen_weights(&m, &h, &h).unwrap();
        let w_bar = model::mean_target_weight(&vec![w.clone(); k]).unwrap();
        let zt = model::apply_weights(&h, &w_bar).unwrap();
        let zs = model::apply_weights(&h, &w).unwrap();
        let diff = zt.zip_map(&zs, "cmp", |a, b| a - b).unwrap().max_abs();
        prop_assert!(diff <= 1e-15 * zs.max_abs().max(1.0));
    }

    #[test]
    fn losses_are_nonnegative(w in with_shape(3, 4), x in with_shape(5, 4), y in with_shape(5, 4)) {
        let mut t = Tape::new();
        let wv = t.constant(w.clone());
        let ind = losses::ind_loss(&mut t, &[wv, wv]).unwrap();
        prop_assert!(t.value(ind).item() >= 0.0);
        let (xv, yv) = (t.constant(x), t.constant(y));
        let reco = losses::reco_loss(&mut t, &[(xv, yv)], None).unwrap();
        prop_assert!(t.value(reco).item() >= 0.0);
        let exact = losses::reco_loss(&mut t, &[(xv, xv)], None).unwrap();
        prop_assert_eq!(t.value(exact).item(), 0.0);
    }

    #[test]
    fn permuted_identity_rows_are_independent(perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(), k in 1usize..5) {
        // one tuple; domain j contributes the unit vector e_perm[j]
        let mut t = Tape::new();
        let ws: Vec<_> = perm[..k]
            .iter()
            .map(|&i| t.constant(Matrix::from_rows(&[(0..4).map(|j| f64::from(u8::from(i == j))).collect::<Vec<_>>()])))
            .collect();
        let ind = losses::ind_loss(&mut t, &ws).unwrap();
        prop_assert_eq!(t.value(ind).item(), 0.0);
    }

    #[test]
    fn upsamplers_balance_exactly(y in labels(), seed in 0u64..1000, k in 1usize..7) {
        let d = labeled(y.len(), y, 3, seed);
        let max_class = d.labels.iter().filter(|&&v| v == 1).count().max(d.labels.iter().filter(|&&v| v == 0).count());
        let w = weight_upsample(&d, 2 * max_class, seed).unwrap();
        let pos = w.labels.iter().filter(|&&v| v == 1).count();
        prop_assert_eq!(2 * pos, w.labels.len());
        prop_assert_eq!(w.expr.values().rows(), w.labels.len());

        let s = smote_upsample(&d, k, seed).unwrap();
        let pos = s.domain.labels.iter().filter(|&&v| v == 1).count();
        prop_assert_eq!(2 * pos, s.domain.labels.len());
        prop_assert_eq!(s.domain.n_samples(), 2 * max_class);
        let x = s.domain.expr.values();
        let n0 = d.n_samples();
        for (j, row) in s.synthetic.iter().enumerate() {
            prop_assert!((0.0..1.0).contains(&row.lambda));
            prop_assert_eq!(d.labels[row.parent], d.labels[row.neighbor]);
            // distance from the synthetic point to the parent-neighbour segment
            let (p, q, z) = (x.row(row.parent), x.row(row.neighbor), x.row(n0 + j));
            let seg: Vec<f64> = p.iter().zip(q).map(|(a, b)| b - a).collect();
            let len2: f64 = seg.iter().map(|v| v * v).sum();
            let t = if len2 > 0.0 {
                (z.iter().zip(p).zip(&seg).map(|((zi, pi), si)| (zi - pi) * si).sum::<f64>() / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist = z.iter().zip(p).zip(&seg).map(|((zi, pi), si)| (zi - pi - t * si).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dist < 1e-9, "row {} is {} off its segment", j, dist);
        }
    }

    #[test]
    fn balanced_probabilities_sum_to_one(y in labels()) {
        let p = class_balanced_probabilities(&y).unwrap();
        let mass1: f64 = p.iter().zip(&y).filter(|(_, &l)| l == 1).map(|(v, _)| v).sum();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((mass1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_idempotent(g in 2usize..8, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats: Vec<ExpressionMatrix> = (0..3)
            .map(|k| {
                let mut genes: Vec<String> = (0..g + k).map(|i| format!("g{i}")).collect();
                genes.shuffle(&mut rng);
                let values = Matrix::from_vec(2, genes.len(), (0..2 * genes.len()).map(|v| v as f64).collect()).unwrap();
                ExpressionMatrix::new(vec!["a".into(), "b".into()], genes, values).unwrap()
            })
            .collect();
        let once = align_genes(&mats).unwrap();
        let twice = align_genes(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.iter().all(|m| m.genes() == once[0].genes()));
        prop_assert_eq!(once[0].genes().len(), g);
    }

    #[test]
    fn binarize_matches_two_pass_oracle(v in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        let mut total = 0.0;
        for x in &v {
            total += x;
        }
        let mean = total / v.len() as f64;
        let mut oracle = Vec::new();
        for x in &v {
            oracle.push(if *x < mean { 1 } else { 0 });
        }
        prop_assert_eq!(binarize_ic50(&v).unwrap(), oracle);
    }

    #[test]
    fn hvg_skips_constant_genes(seed in 0u64..500, n_top in 1usize..12, constant in prop::collection::vec(0usize..10, 1..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, g) = (12, 10);
        let mut values = Matrix::from_vec(n, g, (0..n * g).map(|_| rand::Rng::random_range(&mut rng, 0.1..5.0)).collect()).unwrap();
        for &c in &constant {
            for r in 0..n {
                values.set(r, c, 2.0);
            }
        }
        let genes: Vec<String> = (0..g).map(|i| format!("g{i}")).collect();
        let a = ExpressionMatrix::new((0..n).map(|i| format!("s{i}")).collect(), genes.clone(), values.clone()).unwrap();
        let b = ExpressionMatrix::new((0..n).map(|i| format!("other{i}")).collect(), genes, values).unwrap();
        let sel = select_hvg(&a, HvgParams::top(n_top));
        for &c in &constant {
            let name = format!("g{c}");
            prop_assert!(!sel.genes.contains(&name));
        }
        prop_assert_eq!(sel.genes, select_hvg(&b, HvgParams::top(n_top)).genes);
    }

    #[test]
    fn epoch_visits_largest_domain(sizes in prop::collection::vec(1usize..50, 1..4), target in 1usize..50, b in 1usize..16, seed in 0u64..100, epoch in 0u64..5) {
        let plan = BatchPlan::new(&sizes, target, b, seed, epoch).unwrap();
        let largest = sizes.iter().copied().chain([target]).max().unwrap();
        prop_assert_eq!(plan.len(), largest.div_ceil(b));
        let streams: Vec<(Vec<usize>, usize)> = (0..sizes.len())
            .map(|k| (plan.batches.iter().flat_map(|t| t.sources[k].clone()).collect(), sizes[k]))
            .chain([(plan.batches.iter().flat_map(|t| t.target.clone()).collect(), target)])
            .collect();
        for (stream, n) in streams {
            prop_assert_eq!(stream.len(), plan.len() * b);
            prop_assert!(stream.iter().all(|&i| i < n));
            if n == largest {
                let mut first: Vec<usize> = stream[..n].to_vec();
                first.sort_unstable();
                prop_assert_eq!(first, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms((s, y) in tie_free(4..60), a in 0.1..5.0f64, c in -5.0..5.0f64) {
        let base = auroc(&s, &y).unwrap();
        let exp: Vec<f64> = s.iter().map(|v| (v / 20.0).exp()).collect();
        let affine: Vec<f64> = s.iter().map(|v| a * v + c).collect();
        prop_assert!((auroc(&exp, &y).unwrap() - base).abs() < 1e-12);
        prop_assert!((auroc(&affine, &y).unwrap() - base).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((base + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
        let ap = aupr(&s, &y).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }

    #[test]
    fn perfect_ranker_beats_prevalence(y in labels()) {
        let s: Vec<f64> = y.iter().enumerate().map(|(i, &l)| f64::from(l) * 100.0 + i as f64 * 1e-3).collect();
        let prevalence = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        prop_assert_eq!(auroc(&s, &y).unwrap(), 1.0);
        let ap = aupr(&s, &y).unwrap();
        prop_assert!(ap >= prevalence);
        prop_assert!((ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoints_round_trip(genes in 2usize..9, latent in 1usize..5, hidden in 1usize..6, seed in 0u64..1000, step in 0u64..10_000) {
        let cfg = TrainConfig { latent_dim: latent, ae_hidden: hidden, head_hidden: hidden, seed, ..Default::default() };
        let m = ModelBundle::init(&cfg.arch(genes), seed).unwrap();
        let bytes = to_bytes(&m, &cfg, step).unwrap();
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(&back.model, &m);
        prop_assert_eq!(back.step, step);
        prop_assert_eq!(to_bytes(&back.model, &back.config, back.step).unwrap(), bytes);
    }

    #[test]
    fn mean_weight_is_elementwise_average(ws in prop::collection::vec(with_shape(3, 2), 1..5)) {
        let m = model::mean_target_weight(&ws).unwrap();
        for e in 0..6 {
            let avg = ws.iter().map(|w| w.as_slice()[e]).sum::<f64>() / ws.len() as f64;
            prop_assert!((m.as_slice()[e] - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_deterministic(seed in 0u64..1000, ref_seed in 0u64..1000, per_domain in 1usize..20) {
        let m = small_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: usize| Matrix::from_vec(r, 7, (0..r * 7).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        let target = draw(6);
        let sources = vec![draw(10), draw(12)];
        let refs = Reference { sources: &sources, per_domain, seed: ref_seed };
        let a = predict_target(&m, &target, Some(&refs)).unwrap();
        let b = predict_target(&m, &target, Some(&refs)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn weighted_draws_are_balanced() {
    let y: Vec<u8> = (0..100).map(|i| u8::from(i < 15)).collect();
    let p = class_balanced_probabilities(&y).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = weighted_draws(&p, 10_000, &mut rng).unwrap();
    let pos = draws.iter().filter(|&&i| y[i] == 1).count() as f64 / 10_000.0;
    assert!((pos - 0.5).abs() < 0.02, "{pos}");
}

#[test]
fn random_scores_average_to_prevalence() {
    let y: Vec<u8> = (0..200).map(|i| u8::from(i % 4 == 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let mut total = 0.0;
    for _ in 0..100 {
        s.shuffle(&mut rng);
        total += aupr(&s, &y).unwrap();
    }
    assert!((total / 100.0 - 0.25).abs() < 0.05);
}

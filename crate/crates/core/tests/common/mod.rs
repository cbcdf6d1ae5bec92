#![allow(dead_code)]

use adadrug::data::TupleBatch;
use adadrug::model::{Activation, ArchSpec, ModelBundle};
use adadrug::numerics::{Matrix, Tape, Var};
use adadrug::train::{build_step, Coupling, LossSwitches, StepGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL_ON: LossSwitches = LossSwitches {
    mda: true,
    ind: true,
    awg: true,
};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Small model and batch: G genes, d latent, K sources, B tuples.
pub fn small_problem(
    g: usize,
    d: usize,
    k: usize,
    b: usize,
    seed: u64,
) -> (ModelBundle, TupleBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arch = ArchSpec::with_hidden(g, d, 8, 6);
    // relu outputs land near their kink often enough to spoil finite differences
    arch.generator.output = Activation::Sigmoid;
    let mut model = ModelBundle::init(&arch, seed).unwrap();
    // zero biases would park dead rows exactly on a relu kink
    for p in model.params_mut().into_iter().filter(|p| p.rows() == 1) {
        *p = random_matrix(1, p.cols(), &mut rng).map(|v| 0.3 * v);
    }
    let x_sources = (0..k).map(|_| random_matrix(b, g, &mut rng)).collect();
    let y_sources = (0..k)
        .map(|_| {
            let y: Vec<f64> = (0..b).map(|i| (i % 2) as f64).collect();
            Matrix::column(&y)
        })
        .collect();
    let x_target = random_matrix(b, g, &mut rng);
    (
        model,
        TupleBatch {
            x_sources,
            y_sources,
            x_target,
        },
    )
}

pub type Pick = fn(&StepGraph) -> Var;

pub fn pick_reco(g: &StepGraph) -> Var {
    g.losses.reco
}
pub fn pick_ind(g: &StepGraph) -> Var {
    g.losses.ind.unwrap()
}
pub fn pick_adv(g: &StepGraph) -> Var {
    g.losses.adv.unwrap()
}
pub fn pick_cls(g: &StepGraph) -> Var {
    g.losses.cls
}
pub fn pick_total(g: &StepGraph) -> Var {
    g.total
}

pub fn loss_value(
    model: &ModelBundle,
    batch: &TupleBatch,
    switches: LossSwitches,
    pick: Pick,
) -> f64 {
    let mut tape = Tape::new();
    let graph = build_step(&mut tape, model, batch, switches, Coupling::Direct).unwrap();
    tape.value(pick(&graph)).item()
}

pub fn analytic_grads(
    model: &ModelBundle,
    batch: &TupleBatch,
    switches: LossSwitches,
    coupling: Coupling,
    pick: Pick,
) -> Vec<Matrix> {
    let mut tape = Tape::new();
    let graph = build_step(&mut tape, model, batch, switches, coupling).unwrap();
    tape.backward(pick(&graph)).unwrap();
    graph.bound.grads(&tape)
}

/// Central differences over every parameter entry.
pub fn numeric_grads(
    model: &ModelBundle,
    batch: &TupleBatch,
    switches: LossSwitches,
    pick: Pick,
    h: f64,
) -> Vec<Matrix> {
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.shape()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (pi, &(r, c)) in shapes.iter().enumerate() {
        let mut g = Matrix::zeros(r, c);
        for e in 0..r * c {
            let mut plus = model.clone();
            plus.params_mut()[pi].as_mut_slice()[e] += h;
            let mut minus = model.clone();
            minus.params_mut()[pi].as_mut_slice()[e] -= h;
            let f = (loss_value(&plus, batch, switches, pick)
                - loss_value(&minus, batch, switches, pick))
                / (2.0 * h);
            g.as_mut_slice()[e] = f;
        }
        out.push(g);
    }
    out
}

/// |a − n| / max(|a|, |n|, floor), maximized over all entries.
pub fn max_rel_err(a: &[Matrix], n: &[Matrix], floor: f64) -> f64 {
    a.iter()
        .zip(n)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()))
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

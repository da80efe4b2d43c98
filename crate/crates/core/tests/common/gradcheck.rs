//! Random-instance gradient checks. Each compares the analytic gradient with
//! central finite differences on one seeded instance.

use hilight_core::losses::{bce_loss, hilcl_loss, lcl_loss, recursive_regularization, total_loss, Objective};
use hilight_core::model::{backward, encode, Dropout};
use hilight_core::{
    BceMode, LabelMask, LabelSet, LclSpace, LossConfig, Matrix, ModelDims, ModelParams, NegativeIndex, NegativeMode,
    ScheduleConfig, ScheduleMode, Taxonomy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_errors, random_positives, random_tree, to_labelset, GradError, Tree};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn logits<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn small_tree<R: Rng>(rng: &mut R) -> Tree {
    random_tree(rng, 25, 4)
}

fn space(seed: u64) -> LclSpace {
    if seed & 1 == 0 {
        LclSpace::Logit
    } else {
        LclSpace::Sigmoid
    }
}

pub fn lcl(seed: u64) -> GradError {
    let mut r = rng(seed);
    let n = r.random_range(2..30);
    let z = logits(&mut r, n, 4.0);
    let label = r.random_range(0..n);
    let hard = LabelMask::from_ids(n, (0..n).filter(|&j| j != label && r.random_bool(0.5)));
    let sp = space(seed);
    let term = lcl_loss(&z, label, &hard, sp).unwrap();
    let mut grad = vec![0.0; n];
    for (j, g) in term.grad {
        grad[j] += g;
    }
    grad_errors(&z, &grad, |x| lcl_loss(x, label, &hard, sp).unwrap().loss)
}

fn random_schedule<R: Rng>(r: &mut R) -> (ScheduleConfig, usize) {
    let mode = match r.random_range(0..3) {
        0 => ScheduleMode::FineToCoarse,
        1 => ScheduleMode::CoarseToFine,
        _ => ScheduleMode::AllAtOnce,
    };
    let sched = ScheduleConfig { k: r.random_range(1..4), mode, ..Default::default() };
    (sched, r.random_range(0..12))
}

fn random_negatives<R: Rng>(r: &mut R) -> NegativeMode {
    match r.random_range(0..4) {
        0 => NegativeMode::LocalHard,
        1 => NegativeMode::SiblingsOnly,
        2 => NegativeMode::SubtreeOnly,
        _ => NegativeMode::RandomK { k: Some(r.random_range(1..5)), seed: 5 },
    }
}

pub fn hilcl(seed: u64) -> GradError {
    let mut r = rng(seed);
    let Tree { tax, parent, .. } = small_tree(&mut r);
    let pos = to_labelset(&random_positives(&mut r, &parent));
    let (sched, epoch) = random_schedule(&mut r);
    let index = NegativeIndex::build(&tax, random_negatives(&mut r)).unwrap();
    let z = logits(&mut r, tax.num_labels(), 4.0);
    let sp = space(seed);
    let f = |x: &[f64]| hilcl_loss(x, &pos, epoch, &sched, &index, &tax, sp, seed).unwrap();
    let grad = f(&z).grad_logits;
    grad_errors(&z, &grad, |x| f(x).loss)
}

pub fn bce(seed: u64, mode: BceMode) -> GradError {
    let mut r = rng(seed);
    let n = r.random_range(1..40);
    let z = logits(&mut r, n, 6.0);
    let mut pos: Vec<usize> = (0..n).filter(|_| r.random_bool(0.3)).collect();
    if pos.is_empty() {
        pos.push(0);
    }
    let pos = LabelSet::new(pos);
    let (_, grad) = bce_loss(&z, &pos, mode).unwrap();
    grad_errors(&z, &grad, |x| bce_loss(x, &pos, mode).unwrap().0)
}

pub fn rec_reg(seed: u64) -> GradError {
    let mut r = rng(seed);
    let tax = small_tree(&mut r).tax;
    let cols = r.random_range(1..6);
    let w = Matrix::from_vec(tax.num_labels(), cols, logits(&mut r, tax.num_labels() * cols, 1.0));
    let (_, grad) = recursive_regularization(&w, &tax);
    grad_errors(w.as_slice(), grad.as_slice(), |x| {
        recursive_regularization(&Matrix::from_vec(w.rows(), w.cols(), x.to_vec()), &tax).0
    })
}

fn flatten(p: &ModelParams) -> Vec<f64> {
    p.tensors().iter().flat_map(|(t, _)| t.iter().copied()).collect()
}

fn unflatten(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut p = template.clone();
    let mut off = 0;
    for (t, _) in p.tensors_mut() {
        t.copy_from_slice(&flat[off..off + t.len()]);
        off += t.len();
    }
    p
}

/// Total objective composed with the encoder, differentiated with respect
/// to every model parameter. The dropout mask is replayed from a fixed seed.
pub fn composed(seed: u64) -> GradError {
    let mut r = rng(seed);
    let Tree { tax, parent, .. } = small_tree(&mut r);
    let dims = ModelDims {
        vocab_size: r.random_range(3..15),
        embed_dim: r.random_range(1..5),
        hidden_dim: r.random_range(1..6),
        num_labels: tax.num_labels(),
    };
    let mut params = ModelParams::init(dims, &mut r);
    // biases start at zero; give them random values too
    params.enc_bias.iter_mut().chain(&mut params.head_bias).for_each(|b| *b = r.random_range(-0.5..0.5));
    let tokens: Vec<usize> = (0..r.random_range(1..8)).map(|_| r.random_range(0..dims.vocab_size)).collect();
    let pos = to_labelset(&random_positives(&mut r, &parent));
    let (sched, epoch) = random_schedule(&mut r);
    let index = NegativeIndex::build(&tax, random_negatives(&mut r)).unwrap();
    let cfg = LossConfig {
        lambda: r.random_range(0.0..1.0),
        bce_mode: if r.random_bool(0.5) { BceMode::Standard } else { BceMode::LiteralPositiveOnly },
        lcl_space: space(seed),
        rec_reg_weight: if r.random_bool(0.5) { r.random_range(0.0..0.5) } else { 0.0 },
        hilcl_mean: r.random_bool(0.5),
    };
    let rate = if r.random_bool(0.5) { 0.3 } else { 0.0 };
    let mask_seed = r.random::<u64>();

    let eval = |p: &ModelParams, tax: &Taxonomy| {
        let mut mr = ChaCha8Rng::seed_from_u64(mask_seed);
        let trace = encode(p, &tokens, Some(Dropout { rate, rng: &mut mr })).unwrap();
        let obj = Objective { cfg: &cfg, sched: &sched, index: &index, tax };
        let out = total_loss(&trace.logits, &pos, epoch, &obj, &p.head_weight, seed).unwrap();
        (trace, out)
    };

    let (trace, out) = eval(&params, &tax);
    let mut grads = backward(&trace, &out.grad_logits, &params).unwrap();
    if let Some(g) = &out.grad_head_weight {
        for (a, b) in grads.head_weight.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += b;
        }
    }
    let x = flatten(&params);
    let g = flatten(&grads);
    grad_errors(&x, &g, |flat| eval(&unflatten(&params, flat), &tax).1.total)
}

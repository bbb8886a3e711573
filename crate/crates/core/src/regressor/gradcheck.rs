use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{objective, objective_gradient, Regressor};
use crate::featurize::FeatureVector;
use crate::labelspace::IntensityVector;

const STEP: f64 = 1e-5;
const MAX_CHECKED: usize = 200;
/// Denominator floor: gradients smaller than this are compared in absolute terms.
const FLOOR: f64 = 1e-5;

/// Compares analytic gradients of the regularised MSE objective against central
/// finite differences on up to 200 randomly chosen parameters and returns the
/// largest relative error `|a - n| / max(|a|, |n|, 1e-5)`.
///
/// The parameter choice is driven by `seed`, so repeated calls agree exactly.
pub fn gradient_check<R: Regressor + Clone>(
    model: &R,
    xs: &[FeatureVector],
    ys: &[IntensityVector],
    l2: f64,
    seed: u64,
) -> f64 {
    assert!(!xs.is_empty(), "gradient check needs a non-empty batch");
    let mut grads = model.zero_grads();
    objective_gradient(model, xs, ys, l2, &mut grads);
    let analytic: Vec<f64> = grads.into_iter().flatten().collect();

    let total = model.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if total <= MAX_CHECKED {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, MAX_CHECKED).into_vec();
        v.sort_unstable();
        v
    };

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for flat in picks {
        let original = get_flat(&probe, flat);
        set_flat(&mut probe, flat, original + STEP);
        let up = objective(&probe, xs, ys, l2);
        set_flat(&mut probe, flat, original - STEP);
        let down = objective(&probe, xs, ys, l2);
        set_flat(&mut probe, flat, original);

        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[flat];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    worst
}

fn locate<R: Regressor + ?Sized>(model: &R, mut flat: usize) -> (usize, usize) {
    for (b, block) in model.blocks().iter().enumerate() {
        if flat < block.len() {
            return (b, flat);
        }
        flat -= block.len();
    }
    panic!("parameter index out of range");
}

fn get_flat<R: Regressor + ?Sized>(model: &R, flat: usize) -> f64 {
    let (b, i) = locate(model, flat);
    model.blocks()[b][i]
}

fn set_flat<R: Regressor + ?Sized>(model: &mut R, flat: usize, v: f64) {
    let (b, i) = locate(model, flat);
    model.blocks_mut()[b][i] = v;
}

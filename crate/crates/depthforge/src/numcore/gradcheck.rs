use rand::seq::index::sample;
use rand::Rng;

use super::adam::ParamSet;
use super::tensor::{Result, Tensor};

/// Compares analytic gradients of a scalar-valued fragment against
/// central finite differences over a random sample of at least
/// `samples` parameter entries (all of them when fewer exist).
///
/// Returns `max |analytic - fd| / max(1, |fd|)`. Reports only; the
/// parameter values are never mutated.
pub fn gradient_check<F, R>(
    f: F,
    params: &ParamSet,
    samples: usize,
    h: f64,
    rng: &mut R,
) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<Tensor>,
    R: Rng,
{
    params.zero_grads();
    let loss = f(params)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = (0..params.len())
        .map(|i| {
            let (_, t) = params.entry(i);
            t.grad().unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();
    params.zero_grads();

    let mut flat: Vec<(usize, usize)> = Vec::new();
    for i in 0..params.len() {
        let (_, t) = params.entry(i);
        for j in 0..t.numel() {
            flat.push((i, j));
        }
    }
    let picked: Vec<(usize, usize)> = if flat.len() <= samples {
        flat
    } else {
        sample(rng, flat.len(), samples)
            .into_iter()
            .map(|k| flat[k])
            .collect()
    };

    let mut worst: f64 = 0.0;
    for (pi, ej) in picked {
        let plus = f(&params.with_perturbed(pi, ej, h))?.item();
        let minus = f(&params.with_perturbed(pi, ej, -h))?.item();
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic[pi][ej] - fd).abs() / fd.abs().max(1.0);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_layer_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        params.insert("w", Tensor::randn_param(&[4, 3], 0.5, &mut rng));
        params.insert("b", Tensor::randn_param(&[3], 0.5, &mut rng));
        let x = Tensor::randn(&[4], 1.0, &mut rng);
        let err = gradient_check(
            |p| {
                let y = ops::add(&ops::matmul(&x, p.get("w"))?, p.get("b"))?;
                ops::mean(&ops::mul(&y, &y)?)
            },
            &params,
            100,
            1e-5,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-6, "linear layer fd error {err}");
    }
}

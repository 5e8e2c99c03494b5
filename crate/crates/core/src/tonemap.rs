//! Mu-law tone mapping and the tone-mapped L1 objective.

use ndarray::{ArrayBase, Data, Dimension};

use crate::error::{Error, Result};

/// Parameters of the mu-law compressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TonemapParams {
    pub mu: f64,
}

impl Default for TonemapParams {
    fn default() -> Self {
        Self { mu: 5000.0 }
    }
}

impl TonemapParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { mu })
    }
}

/// T(h) = log(1 + mu*h) / log(1 + mu) on a single value; caller clamps.
#[inline]
pub fn mu_law_scalar(h: f64, mu: f64) -> f64 {
    (1.0 + mu * h).ln() / (1.0 + mu).ln()
}

/// dT/dh = mu / ((1 + mu*h) * log(1 + mu)).
#[inline]
pub fn mu_law_slope(h: f64, mu: f64) -> f64 {
    mu / ((1.0 + mu * h) * (1.0 + mu).ln())
}

/// Elementwise mu-law tone mapping. Values above 1 are clamped before the
/// mapping; negative values are rejected.
pub fn mu_law<S, D>(h: &ArrayBase<S, D>, params: TonemapParams) -> Result<ndarray::Array<f64, D>>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if h.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::InvalidData(
            "mu_law input contains negative or NaN values".into(),
        ));
    }
    Ok(h.mapv(|v| mu_law_scalar(v.min(1.0), params.mu)))
}

/// Mean absolute difference between mu-law mapped `pred` and `target`.
pub fn tonemapped_l1<S, D>(
    pred: &ArrayBase<S, D>,
    target: &ArrayBase<S, D>,
    params: TonemapParams,
) -> Result<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if pred.shape() != target.shape() {
        return Err(Error::InvalidArgument(format!(
            "loss shape mismatch: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let mapped_pred = mu_law(pred, params)?;
    let mapped_target = mu_law(target, params)?;
    let n = mapped_pred.len() as f64;
    Ok(mapped_pred
        .iter()
        .zip(mapped_target.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array3};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn endpoints_are_exact() {
        let p = TonemapParams::default();
        assert_eq!(mu_law_scalar(0.0, p.mu), 0.0);
        assert_eq!(mu_law_scalar(1.0, p.mu), 1.0);
    }

    #[test]
    fn reciprocal_mu_point() {
        // T(1/mu) = log(2)/log(1+mu); value fixed by scalar evaluation.
        let p = TonemapParams::default();
        let got = mu_law_scalar(1.0 / p.mu, p.mu);
        assert!((got - 0.08138020244103332).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_input() {
        let arr = Array1::from_vec(vec![0.2, -0.1]);
        assert!(matches!(
            mu_law(&arr, TonemapParams::default()),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn values_above_one_are_clamped() {
        let arr = Array1::from_vec(vec![1.5]);
        let out = mu_law(&arr, TonemapParams::default()).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn loss_of_identical_arrays_is_zero() {
        let a = Array3::from_elem((2, 3, 4), 0.37);
        assert_eq!(tonemapped_l1(&a, &a, TonemapParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn zero_vs_one_loss_is_exactly_one() {
        let zero = Array3::from_elem((2, 2, 3), 0.0);
        let one = Array3::from_elem((2, 2, 3), 1.0);
        assert_eq!(
            tonemapped_l1(&zero, &one, TonemapParams::default()).unwrap(),
            1.0
        );
    }

    #[test]
    fn loss_matches_elementwise_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let p = TonemapParams::default();
        let a = Array3::from_shape_simple_fn((3, 5, 4), || rng.random_range(0.0..1.0));
        let b = Array3::from_shape_simple_fn((3, 5, 4), || rng.random_range(0.0..1.0));
        let got = tonemapped_l1(&a, &b, p).unwrap();

        // brute-force per-pixel loop oracle
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..3 {
            for j in 0..5 {
                for k in 0..4 {
                    let ta = (1.0 + p.mu * a[[i, j, k]]).ln() / (1.0 + p.mu).ln();
                    let tb = (1.0 + p.mu * b[[i, j, k]]).ln() / (1.0 + p.mu).ln();
                    total += (ta - tb).abs();
                    count += 1;
                }
            }
        }
        let expected = total / count as f64;
        assert!((got - expected).abs() < 1e-6);
    }

    #[test]
    fn loss_is_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = Array3::from_shape_simple_fn((2, 4, 3), || rng.random_range(0.0..1.0));
        let b = Array3::from_shape_simple_fn((2, 4, 3), || rng.random_range(0.0..1.0));
        let p = TonemapParams::default();
        assert_eq!(
            tonemapped_l1(&a, &b, p).unwrap(),
            tonemapped_l1(&b, &a, p).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        let a = Array3::<f64>::zeros((2, 2, 3));
        let b = Array3::<f64>::zeros((2, 3, 3));
        assert!(matches!(
            tonemapped_l1(&a, &b, TonemapParams::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn strictly_increasing_and_concave_on_grid() {
        let p = TonemapParams::default();
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&h| mu_law_scalar(h, p.mu)).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0], "mu_law not strictly increasing");
        }
        for w in vals.windows(3) {
            assert!(w[2] - w[1] < w[1] - w[0], "mu_law not concave");
        }
    }

    proptest::proptest! {
        #[test]
        fn endpoints_and_monotonicity_hold_for_any_mu(mu in 1e-3f64..1e6) {
            proptest::prop_assert_eq!(mu_law_scalar(0.0, mu), 0.0);
            proptest::prop_assert_eq!(mu_law_scalar(1.0, mu), 1.0);
            let mut last = -1.0;
            for i in 0..=40 {
                let v = mu_law_scalar(i as f64 / 40.0, mu);
                proptest::prop_assert!(v > last);
                proptest::prop_assert!((0.0..=1.0).contains(&v));
                last = v;
            }
        }
    }
}

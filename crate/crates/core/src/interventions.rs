//! Prediction- and allocation-level interventions.
//!
//! These run strictly outside model training: prediction transforms are
//! applied to the trained model's output right before the optimizer sees it,
//! and the allocation post-hook is applied to the optimizer's output right
//! before it becomes the held portfolio.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Caps every prediction at `+/- gamma`.
pub fn clip_predictions(r_hat: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Input(format!("clip width {gamma} must be positive")));
    }
    Ok(r_hat.map(|v| v.clamp(-gamma, gamma)))
}

/// Min-max rescales predictions onto `[-c, c]`, preserving their ranking.
/// A constant vector carries no ranking information and maps to zeros.
pub fn rescale_predictions(r_hat: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Input(format!("rescale half-width {c} must be positive")));
    }
    if r_hat.is_empty() {
        return Err(Error::Input("cannot rescale an empty prediction vector".into()));
    }
    let lo = r_hat.min();
    let hi = r_hat.max();
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(DVector::zeros(r_hat.len()));
    }
    // Group the ratio so the extremes map to 0 and 1 exactly, which pins the
    // output endpoints to -c and c bitwise.
    Ok(r_hat.map(|v| -c + 2.0 * c * ((v - lo) / span)))
}

/// Moves only a `delta` fraction of the way from the held portfolio toward
/// the target: `w_prev + delta * (w_target - w_prev)`.
pub fn partial_adjust(
    w_target: &DVector<f64>,
    w_prev: &DVector<f64>,
    delta: f64,
) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&delta) || !delta.is_finite() {
        return Err(Error::Input(format!(
            "adjustment speed {delta} must lie in [0, 1]"
        )));
    }
    if w_target.len() != w_prev.len() {
        return Err(Error::Shape(format!(
            "target has {} entries, held portfolio has {}",
            w_target.len(),
            w_prev.len()
        )));
    }
    // Convex-combination form so both endpoints are exact: delta = 0 returns
    // the held portfolio bitwise, delta = 1 returns the target bitwise.
    Ok(w_prev * (1.0 - delta) + w_target * delta)
}

/// Post-optimization hook applied to the target allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PostHook {
    /// Trade straight to the optimizer's target.
    Identity,
    /// Blend toward the target at the given speed.
    PartialAdjust { delta: f64 },
}

impl PostHook {
    pub fn apply(&self, w_target: &DVector<f64>, w_prev: &DVector<f64>) -> Result<DVector<f64>> {
        match *self {
            PostHook::Identity => Ok(w_target.clone()),
            PostHook::PartialAdjust { delta } => partial_adjust(w_target, w_prev, delta),
        }
    }
}

/// The named pipeline variants exposed on the command line and in grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantName {
    Standard,
    Clip,
    Rescale,
    Adj,
    ClipAdj,
    RescaleAdj,
}

impl VariantName {
    pub const ALL: [VariantName; 6] = [
        VariantName::Standard,
        VariantName::Clip,
        VariantName::Rescale,
        VariantName::Adj,
        VariantName::ClipAdj,
        VariantName::RescaleAdj,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::Standard => "standard",
            VariantName::Clip => "clip",
            VariantName::Rescale => "rescale",
            VariantName::Adj => "adj",
            VariantName::ClipAdj => "clip_adj",
            VariantName::RescaleAdj => "rescale_adj",
        }
    }

    pub fn parse(name: &str) -> Result<VariantName> {
        match name.trim() {
            "standard" => Ok(VariantName::Standard),
            "clip" => Ok(VariantName::Clip),
            "rescale" => Ok(VariantName::Rescale),
            "adj" => Ok(VariantName::Adj),
            "clip_adj" => Ok(VariantName::ClipAdj),
            "rescale_adj" => Ok(VariantName::RescaleAdj),
            other => Err(Error::Config {
                key: "variant".into(),
                msg: format!(
                    "unknown variant {other:?}; expected one of standard, clip, rescale, adj, clip_adj, rescale_adj"
                ),
            }),
        }
    }
}

impl std::fmt::Display for VariantName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A variant resolved against concrete intervention parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSpec {
    pub name: VariantName,
    pub clip_gamma: Option<f64>,
    pub rescale_c: Option<f64>,
    pub post_hook: PostHook,
}

impl VariantSpec {
    /// Resolves a named variant with the given intervention parameters.
    pub fn new(name: VariantName, gamma: f64, c: f64, delta: f64) -> VariantSpec {
        let (clip_gamma, rescale_c) = match name {
            VariantName::Clip | VariantName::ClipAdj => (Some(gamma), None),
            VariantName::Rescale | VariantName::RescaleAdj => (None, Some(c)),
            VariantName::Standard | VariantName::Adj => (None, None),
        };
        let post_hook = match name {
            VariantName::Adj | VariantName::ClipAdj | VariantName::RescaleAdj => {
                PostHook::PartialAdjust { delta }
            }
            _ => PostHook::Identity,
        };
        VariantSpec {
            name,
            clip_gamma,
            rescale_c,
            post_hook,
        }
    }

    /// Applies this variant's prediction transform.
    pub fn transform_predictions(&self, r_hat: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = r_hat.clone();
        if let Some(gamma) = self.clip_gamma {
            out = clip_predictions(&out, gamma)?;
        }
        if let Some(c) = self.rescale_c {
            out = rescale_predictions(&out, c)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    /// Winsorization one-liner used as an oracle for the clip transform.
    fn clip_oracle(v: f64, gamma: f64) -> f64 {
        v.max(-gamma).min(gamma)
    }

    #[test]
    fn clip_matches_the_winsorization_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = DVector::from_fn(200, |_, _| rng.random_range(-0.5..0.5));
        let clipped = clip_predictions(&input, 0.1).unwrap();
        for i in 0..200 {
            assert_eq!(clipped[i], clip_oracle(input[i], 0.1));
        }
    }

    #[test]
    fn clip_is_idempotent() {
        let input = vec(&[-0.4, -0.1, 0.0, 0.05, 0.3]);
        let once = clip_predictions(&input, 0.1).unwrap();
        let twice = clip_predictions(&once, 0.1).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn clip_leaves_interior_values_alone() {
        let input = vec(&[-0.09, 0.0, 0.0999]);
        let clipped = clip_predictions(&input, 0.1).unwrap();
        assert_eq!(clipped, input);
    }

    #[test]
    fn rescale_hits_both_endpoints_exactly() {
        let input = vec(&[0.02, 0.5, -0.3, 0.1]);
        let out = rescale_predictions(&input, 0.1).unwrap();
        assert_relative_eq!(out.max(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(out.min(), -0.1, epsilon = 1e-15);
    }

    #[test]
    fn rescale_preserves_the_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..12usize);
            let input = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let out = rescale_predictions(&input, 0.1).unwrap();
            let mut order_in: Vec<usize> = (0..n).collect();
            let mut order_out = order_in.clone();
            order_in.sort_by(|&a, &b| input[a].partial_cmp(&input[b]).unwrap());
            order_out.sort_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap());
            assert_eq!(order_in, order_out);
        }
    }

    #[test]
    fn rescale_maps_constant_vectors_to_zero() {
        let out = rescale_predictions(&vec(&[0.07, 0.07, 0.07]), 0.1).unwrap();
        assert_eq!(out, DVector::zeros(3));
    }

    #[test]
    fn partial_adjustment_scales_the_move_linearly() {
        let prev = vec(&[0.25, 0.25, 0.5]);
        let target = vec(&[0.5, 0.3, 0.2]);
        let out = partial_adjust(&target, &prev, 0.1).unwrap();
        for i in 0..3 {
            assert_relative_eq!(out[i] - prev[i], 0.1 * (target[i] - prev[i]), epsilon = 1e-15);
        }
        assert_relative_eq!(out.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_adjustment_caps_turnover_at_delta_times_full_trade() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let n = rng.random_range(2..10usize);
            let mut prev = DVector::from_fn(n, |_, _| -(rng.random_range(1e-9f64..1.0)).ln());
            prev /= prev.sum();
            let mut target = DVector::from_fn(n, |_, _| -(rng.random_range(1e-9f64..1.0)).ln());
            target /= target.sum();
            let out = partial_adjust(&target, &prev, 0.1).unwrap();
            let full: f64 = (0..n).map(|i| (target[i] - prev[i]).abs()).sum();
            let partial: f64 = (0..n).map(|i| (out[i] - prev[i]).abs()).sum();
            assert_relative_eq!(partial, 0.1 * full, epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_one_reaches_the_target_and_delta_zero_stays_put() {
        let prev = vec(&[0.6, 0.4]);
        let target = vec(&[0.1, 0.9]);
        assert_eq!(partial_adjust(&target, &prev, 1.0).unwrap(), target);
        assert_eq!(partial_adjust(&target, &prev, 0.0).unwrap(), prev);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let v = vec(&[0.1, 0.2]);
        assert!(clip_predictions(&v, 0.0).is_err());
        assert!(clip_predictions(&v, -0.1).is_err());
        assert!(rescale_predictions(&v, 0.0).is_err());
        assert!(partial_adjust(&v, &v, 1.5).is_err());
        assert!(partial_adjust(&v, &v, -0.1).is_err());
        assert!(partial_adjust(&v, &vec(&[1.0]), 0.5).is_err());
    }

    #[test]
    fn variant_specs_resolve_their_components() {
        let spec = VariantSpec::new(VariantName::ClipAdj, 0.1, 0.1, 0.1);
        assert_eq!(spec.clip_gamma, Some(0.1));
        assert_eq!(spec.rescale_c, None);
        assert_eq!(spec.post_hook, PostHook::PartialAdjust { delta: 0.1 });

        let spec = VariantSpec::new(VariantName::Standard, 0.1, 0.1, 0.1);
        assert_eq!(spec.clip_gamma, None);
        assert_eq!(spec.rescale_c, None);
        assert_eq!(spec.post_hook, PostHook::Identity);

        let spec = VariantSpec::new(VariantName::Rescale, 0.1, 0.1, 0.1);
        assert_eq!(spec.rescale_c, Some(0.1));
        assert_eq!(spec.post_hook, PostHook::Identity);
    }

    #[test]
    fn variant_names_round_trip_through_parse() {
        for name in VariantName::ALL {
            assert_eq!(VariantName::parse(name.as_str()).unwrap(), name);
        }
        assert!(VariantName::parse("bogus").is_err());
    }

    #[test]
    fn variant_transform_applies_the_right_map() {
        let r = vec(&[-0.4, 0.0, 0.2]);
        let clip = VariantSpec::new(VariantName::Clip, 0.1, 0.1, 0.1);
        assert_eq!(clip.transform_predictions(&r).unwrap(), vec(&[-0.1, 0.0, 0.1]));
        let rescale = VariantSpec::new(VariantName::RescaleAdj, 0.1, 0.1, 0.1);
        let out = rescale.transform_predictions(&r).unwrap();
        assert_relative_eq!(out[0], -0.1, epsilon = 1e-15);
        assert_relative_eq!(out[2], 0.1, epsilon = 1e-15);
        let standard = VariantSpec::new(VariantName::Adj, 0.1, 0.1, 0.1);
        assert_eq!(standard.transform_predictions(&r).unwrap(), r);
    }

    proptest! {
        #[test]
        fn rescaled_output_always_lies_inside_the_band(
            values in proptest::collection::vec(-1.0f64..1.0, 2..20)
        ) {
            let out = rescale_predictions(&DVector::from_vec(values), 0.1).unwrap();
            prop_assert!(out.iter().all(|v| (-0.1 - 1e-12..=0.1 + 1e-12).contains(v)));
        }

        #[test]
        fn partial_adjustment_stays_on_the_simplex(
            a in proptest::collection::vec(0.01f64..1.0, 5),
            b in proptest::collection::vec(0.01f64..1.0, 5),
            delta in 0.0f64..=1.0
        ) {
            let mut prev = DVector::from_vec(a);
            prev /= prev.sum();
            let mut target = DVector::from_vec(b);
            target /= target.sum();
            let out = partial_adjust(&target, &prev, delta).unwrap();
            prop_assert!((out.sum() - 1.0).abs() < 1e-9);
            prop_assert!(out.min() >= -1e-12);
        }
    }
}

//! Property-based invariants: nonnegativity and normalization hold over
//! randomized inputs, and the alpha-class differential forms stay glued to
//! their densities.

use predrisk::family::SampleBatch;
use predrisk::predictive::{bayes_predictive, estimative, normalization_gap, ObsDensity};
use predrisk::prior::finite_diff_residuals;
use predrisk::risk::kl_divergence;
use predrisk::{Family, Prior};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kl_between_poisson_plugins_is_nonnegative(
        lam1 in 0.05f64..20.0,
        lam2 in 0.05f64..20.0,
    ) {
        let fam = Family::poisson();
        let est = estimative(&fam, &SampleBatch::from_scalars(&[lam2])).unwrap();
        let kl = kl_divergence(&fam, &[lam1], &est).unwrap();
        prop_assert!(kl >= -1e-12, "kl = {kl}");
        if (lam1 - lam2).abs() > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn poisson_predictives_stay_normalized_and_positive(
        sum in 0u64..40,
        n in 1usize..20,
        alpha in 0.05f64..3.0,
    ) {
        let fam = Family::poisson();
        let prior = Prior::alpha(&fam, alpha).unwrap();
        let mut xs = vec![0.0; n];
        xs[0] = sum as f64; // any split of the count gives the same statistic
        let pd = bayes_predictive(&fam, &prior, &SampleBatch::from_scalars(&xs)).unwrap();
        prop_assert!(normalization_gap(&pd, &fam).unwrap() < 1e-6);
        for y in 0..10 {
            prop_assert!(pd.eval(&[y as f64]) > 0.0);
        }
    }

    #[test]
    fn alpha_prior_differentials_match_their_densities(
        alpha in -1.0f64..2.5,
        theta in 0.1f64..8.0,
    ) {
        let fam = Family::poisson();
        let pr = Prior::alpha(&fam, alpha).unwrap();
        let (ge, he) = finite_diff_residuals(&pr, &[theta]);
        prop_assert!(ge < 1e-6, "grad residual {ge}");
        prop_assert!(he < 1e-4, "hess residual {he}");
    }
}

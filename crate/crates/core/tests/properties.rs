//! Randomized invariants, one test per property.

mod common;
mod props;

macro_rules! properties {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name() {
                    panic!("{e}");
                }
            }
        )*

        #[test]
        fn every_property_is_listed() {
            let listed = [$(stringify!($name)),*].len();
            assert_eq!(listed, props::all().len());
        }
    };
}

properties!(
    labeling_is_deterministic,
    pixel_counts_cover_mask,
    circularity_scale_invariant,
    convex_circularity_bounded,
    droplet_segmentation_deterministic,
    speckles_keep_count,
    intensity_shift_cancels,
    droplets_meet_min_circularity,
    unmixing_round_trip,
    dye_ratio_exposure_scaling,
    concentrations_non_negative,
    fractions_sum_to_one,
    shift_antisymmetric,
    no_drift_accumulation,
    normalize_idempotent,
    aligned_centroids_stable,
    channel_transfer_invariance,
    field_ratio_bounds_and_scaling,
    stored_circularity_reproducible,
    no_identity_switches,
    rendering_deterministic,
    noise_free_round_trip,
    batch_determinism,
    stream_equals_batch,
    timing_sums,
    ordered_emission,
);

//! Randomized invariant checks shared by the property test target and the
//! acceptance binary. Each check runs `CASES` deterministic proptest cases.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

use crate::common::*;
use icell::brightfield::{
    build_background, droplet_metrics, segment_droplets, subtract_background, SegmentationConfig,
};
use icell::fluor::{
    analyze_field, live_dead, region_timeseries, segment_bands, segment_fluorescent, transfer_channel, ChannelMap,
    FluorConfig, HsvBand,
};
use icell::pipeline::{run_batch, run_stream, Mode, StageTimes, StreamConfig, TimingReport};
use icell::region::{circularity, label_components, Connectivity};
use icell::registration::{align_sequence, estimate_translation, normalize_exposure};
use icell::stainsep::{dye_ratio, unmix, Dye, StainBasis};
use icell::synth::{
    ellipse_perimeter, render_background, render_brightfield, render_fluorescence, render_sequence, CellShape,
    CellSpec, DyeSpec, Modality, SceneSpec,
};
use icell::{BinaryMask, RasterImage, Region};

pub const CASES: u32 = 100;

pub type Prop = fn() -> Result<(), String>;

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        max_shrink_iters: 32,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

pub fn all() -> Vec<(&'static str, Prop)> {
    vec![
        ("labeling is deterministic", labeling_is_deterministic),
        ("region pixel counts cover the mask", pixel_counts_cover_mask),
        ("circularity is scale invariant", circularity_scale_invariant),
        ("convex shapes have circularity at most one", convex_circularity_bounded),
        ("droplet segmentation is deterministic", droplet_segmentation_deterministic),
        ("speckles never change the droplet count", speckles_keep_count),
        ("uniform intensity shifts cancel", intensity_shift_cancels),
        ("reported droplets meet min_circularity", droplets_meet_min_circularity),
        ("unmixing round trip", unmixing_round_trip),
        ("dye ratio survives joint exposure scaling", dye_ratio_exposure_scaling),
        ("concentrations are non-negative", concentrations_non_negative),
        ("dye fractions sum to one", fractions_sum_to_one),
        ("shift estimation is antisymmetric", shift_antisymmetric),
        ("no drift against a common reference", no_drift_accumulation),
        ("exposure normalization is idempotent", normalize_idempotent),
        ("aligned centroids are stable", aligned_centroids_stable),
        ("channel transfer with a remapped band", channel_transfer_invariance),
        ("field ratio bounds and scaling", field_ratio_bounds_and_scaling),
        ("stored circularity is reproducible", stored_circularity_reproducible),
        ("static scenes keep cell identities", no_identity_switches),
        ("rendering is deterministic", rendering_deterministic),
        ("noise-free render round trip", noise_free_round_trip),
        ("batch runs are byte-identical", batch_determinism),
        ("stream output equals batch output", stream_equals_batch),
        ("stage times sum to the total", timing_sums),
        ("results are emitted in frame order", ordered_emission),
    ]
}

fn random_mask() -> impl Strategy<Value = BinaryMask> {
    (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::bool::weighted(0.45), w * h)
            .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
    })
}

fn connectivity() -> impl Strategy<Value = Connectivity> {
    prop_oneof![Just(Connectivity::Four), Just(Connectivity::Eight)]
}

pub fn labeling_is_deterministic() -> Result<(), String> {
    check((random_mask(), connectivity()), |(mask, conn)| {
        prop_assert_eq!(label_components(&mask, conn), label_components(&mask.clone(), conn));
        Ok(())
    })
}

pub fn pixel_counts_cover_mask() -> Result<(), String> {
    check((random_mask(), connectivity()), |(mask, conn)| {
        let regions = label_components(&mask, conn);
        prop_assert_eq!(regions.iter().map(|r| r.pixel_count).sum::<usize>(), mask.count());
        Ok(())
    })
}

pub fn circularity_scale_invariant() -> Result<(), String> {
    check((1.0f64..1e5, 1.0f64..3.0, 1e-3f64..1e3), |(area, slack, k)| {
        // Perimeters at or above the isoperimetric minimum for the area.
        let perimeter = slack * (4.0 * PI * area).sqrt();
        let a = circularity(area, perimeter).map_err(fail)?;
        let b = circularity(k * k * area, k * perimeter).map_err(fail)?;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{} vs {}", a, b);
        Ok(())
    })
}

pub fn convex_circularity_bounded() -> Result<(), String> {
    check(0.5f64..500.0, |s| {
        let circle = circularity(PI * s * s, 2.0 * PI * s).map_err(fail)?;
        let square = circularity(s * s, 4.0 * s).map_err(fail)?;
        let ellipse = circularity(PI * s * (s / 2.0), ellipse_perimeter(s, s / 2.0)).map_err(fail)?;
        prop_assert!((circle - 1.0).abs() < 1e-12);
        prop_assert!((square - PI / 4.0).abs() < 1e-12);
        prop_assert!(ellipse < 1.0 && ellipse > 0.8);
        for c in [circle, square, ellipse] {
            prop_assert!(c <= 1.0 + 1e-12);
        }
        Ok(())
    })
}

/// Up to three non-overlapping droplets on a 160 x 160 field.
fn droplet_scene() -> impl Strategy<Value = SceneSpec> {
    (
        prop::collection::vec((24.0f64..44.0, -6.0f64..6.0, -6.0f64..6.0), 1..=3),
        0.0f64..3.0,
        0.0f64..5.0,
        any::<u64>(),
        150u8..200,
    )
        .prop_map(|(drops, noise, texture, seed, level)| {
            let mut s = SceneSpec::blank(160, 160);
            s.background = [level, level.saturating_add(4), level.saturating_sub(3)];
            s.noise_sigma = noise;
            s.background_texture = texture;
            s.seed = seed;
            let slots = [(42.0, 42.0), (118.0, 48.0), (80.0, 116.0)];
            s.droplets = drops
                .iter()
                .zip(slots)
                .map(|(&(d, jx, jy), (x, y))| droplet(x + jx, y + jy, d))
                .collect();
            s
        })
}

fn segment_scene(spec: &SceneSpec, cfg: &SegmentationConfig) -> Result<Vec<Region>, TestCaseError> {
    let (frame, _) = render_brightfield(spec).map_err(fail)?;
    let bg = render_background(spec).map_err(fail)?;
    segment_with(&frame, &bg, cfg)
}

fn segment_with(frame: &RasterImage, bg: &RasterImage, cfg: &SegmentationConfig) -> Result<Vec<Region>, TestCaseError> {
    let model = build_background(std::slice::from_ref(bg)).map_err(fail)?;
    let diff = subtract_background(frame, &model).map_err(fail)?;
    segment_droplets(&diff, cfg).map_err(fail)
}

pub fn droplet_segmentation_deterministic() -> Result<(), String> {
    check(droplet_scene(), |spec| {
        let cfg = SegmentationConfig::default();
        let a = droplet_metrics(&segment_scene(&spec, &cfg)?, Some(1.3));
        let b = droplet_metrics(&segment_scene(&spec, &cfg)?, Some(1.3));
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn speckles_keep_count() -> Result<(), String> {
    check((droplet_scene(), 1usize..40), |(spec, n)| {
        let cfg = SegmentationConfig::default();
        let clean = segment_scene(&spec, &cfg)?.len();
        let mut dirty = spec.clone();
        dirty.speckles = n;
        prop_assert_eq!(segment_scene(&dirty, &cfg)?.len(), clean);
        prop_assert_eq!(clean, spec.droplets.len());
        Ok(())
    })
}

fn add_level(img: &RasterImage, k: i32) -> RasterImage {
    let mut out = img.clone();
    for v in out.pixels_mut() {
        *v = (*v as i32 + k).clamp(0, 255) as u8;
    }
    out
}

pub fn intensity_shift_cancels() -> Result<(), String> {
    check((droplet_scene(), -30i32..=30), |(spec, k)| {
        let cfg = SegmentationConfig::default();
        let (frame, _) = render_brightfield(&spec).map_err(fail)?;
        let bg = render_background(&spec).map_err(fail)?;
        let base = segment_with(&frame, &bg, &cfg)?;
        let shifted = segment_with(&add_level(&frame, k), &add_level(&bg, k), &cfg)?;
        prop_assert_eq!(base, shifted);
        Ok(())
    })
}

pub fn droplets_meet_min_circularity() -> Result<(), String> {
    check((droplet_scene(), 0.0f64..0.98, 0usize..30), |(mut spec, min_circ, speckles)| {
        spec.speckles = speckles;
        let cfg = SegmentationConfig {
            min_circularity: min_circ,
            min_area: 4,
            ..Default::default()
        };
        for r in droplet_metrics(&segment_scene(&spec, &cfg)?, None) {
            prop_assert!(r.circularity >= min_circ, "{} < {}", r.circularity, min_circ);
        }
        Ok(())
    })
}

fn basis(white: [f64; 3]) -> StainBasis {
    let dyes = two_dyes()
        .into_iter()
        .map(|d| Dye {
            name: d.name.clone(),
            od_vector: d.unit_vector(),
        })
        .collect();
    StainBasis::new(dyes, white).unwrap()
}

fn forward(spec_dyes: &[DyeSpec], conc: [f64; 2], white: [f64; 3]) -> [u8; 3] {
    let mut od = [0.0; 3];
    for (d, c) in spec_dyes.iter().zip(conc) {
        let u = d.unit_vector();
        for k in 0..3 {
            od[k] += c * u[k];
        }
    }
    [0, 1, 2].map(|k| (white[k] * 10f64.powf(-od[k])).round().clamp(0.0, 255.0) as u8)
}

fn full_roi(img: &RasterImage) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |_, _| true)
}

pub fn unmixing_round_trip() -> Result<(), String> {
    let white = [235.0, 235.0, 235.0];
    let b = basis(white);
    let dyes = two_dyes();
    check((0.1f64..=1.0, 0.1f64..=1.0), |(ca, cb)| {
        let px = forward(&dyes, [ca, cb], white);
        let img = RasterImage::filled(4, 4, &px).map_err(fail)?;
        let conc = unmix(&img, &b, &full_roi(&img)).map_err(fail)?;
        let (ga, gb) = (conc.at(0, 1, 1) as f64, conc.at(1, 1, 1) as f64);
        prop_assert!((ga / ca - 1.0).abs() <= 0.03, "c_a {} recovered as {}", ca, ga);
        prop_assert!((gb / cb - 1.0).abs() <= 0.03, "c_b {} recovered as {}", cb, gb);
        Ok(())
    })
}

fn scale_image(img: &RasterImage, k: f64) -> RasterImage {
    let mut out = img.clone();
    for v in out.pixels_mut() {
        *v = (*v as f64 * k).round().clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn dye_ratio_exposure_scaling() -> Result<(), String> {
    let white = [170.0, 170.0, 170.0];
    check((0.1f64..=1.0, 0.1f64..=1.0, 0.5f64..=1.5, any::<u64>()), |(ca, cb, k, seed)| {
        let mut spec = SceneSpec::blank(80, 80);
        spec.background = [170, 170, 170];
        spec.noise_sigma = 2.0;
        spec.seed = seed;
        spec.dyes = two_dyes();
        let mut d = droplet(40.0, 40.0, 64.0);
        d.concentrations = vec![ca, cb];
        spec.droplets = vec![d];
        let (img, _) = render_brightfield(&spec).map_err(fail)?;
        let disk = BinaryMask::from_fn(80, 80, |x, y| (x as f64 - 40.0).hypot(y as f64 - 40.0) <= 24.0);
        let region = label_components(&disk, Connectivity::Eight).remove(0);
        let ratio = |img: &RasterImage, b: &StainBasis| -> Result<f64, TestCaseError> {
            let conc = unmix(img, b, &disk).map_err(fail)?;
            Ok(dye_ratio(&conc, &region).map_err(fail)?.fractions[0].1)
        };
        let base = ratio(&img, &basis(white))?;
        let scaled = ratio(&scale_image(&img, k), &basis(white.map(|w| w * k)))?;
        prop_assert!((base - scaled).abs() <= 0.01, "fraction {} became {} at k = {}", base, scaled, k);
        Ok(())
    })
}

fn random_rgb_image() -> impl Strategy<Value = RasterImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h * 3).prop_map(move |px| RasterImage::new(w, h, 3, px).unwrap())
    })
}

fn random_basis() -> impl Strategy<Value = StainBasis> {
    (
        prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..=3),
        prop::array::uniform3(120.0f64..255.0),
    )
        .prop_filter_map("degenerate basis", |(vectors, white)| {
            let dyes = vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| Dye {
                    name: format!("d{i}"),
                    od_vector: v,
                })
                .collect();
            StainBasis::new(dyes, white).ok()
        })
}

pub fn concentrations_non_negative() -> Result<(), String> {
    check((random_rgb_image(), random_basis()), |(img, b)| {
        let conc = unmix(&img, &b, &full_roi(&img)).map_err(fail)?;
        for plane in &conc.concentrations {
            prop_assert!(plane.iter().all(|&c| c >= 0.0));
        }
        Ok(())
    })
}

pub fn fractions_sum_to_one() -> Result<(), String> {
    check((random_rgb_image(), random_basis()), |(img, b)| {
        let conc = unmix(&img, &b, &full_roi(&img)).map_err(fail)?;
        let all = Region::from_pixels(
            1,
            (0..img.height() as u32).flat_map(|y| (0..img.width() as u32).map(move |x| (x, y))).collect(),
        )
        .map_err(fail)?;
        let ratio = dye_ratio(&conc, &all).map_err(fail)?;
        let sum: f64 = ratio.fractions.iter().map(|f| f.1).sum();
        if ratio.empty {
            prop_assert!(sum == 0.0);
        } else {
            prop_assert!((sum - 1.0).abs() < 1e-12, "fractions sum to {}", sum);
        }
        Ok(())
    })
}

/// Textured 128 x 128 bright-field scene used by the registration checks.
fn registration_scene(seed: u64) -> SceneSpec {
    let mut s = SceneSpec::blank(128, 128);
    s.background_texture = 8.0;
    s.noise_sigma = 2.0;
    s.seed = seed;
    s.droplets = vec![droplet(40.0, 44.0, 30.0), droplet(88.0, 80.0, 40.0)];
    s
}

pub fn shift_antisymmetric() -> Result<(), String> {
    check((-10.0f64..10.0, -10.0f64..10.0, any::<u64>()), |(dx, dy, seed)| {
        let mut spec = registration_scene(seed);
        spec.frame_shift = [dx, dy];
        let (f, _) = render_sequence(&spec, Modality::Brightfield, 2).map_err(fail)?;
        let ab = estimate_translation(&f[0], &f[1], 32).map_err(fail)?;
        let ba = estimate_translation(&f[1], &f[0], 32).map_err(fail)?;
        prop_assert!((ab.dx + ba.dx).abs() <= 0.3 && (ab.dy + ba.dy).abs() <= 0.3, "{:?} vs {:?}", ab, ba);
        Ok(())
    })
}

pub fn no_drift_accumulation() -> Result<(), String> {
    // One case per frame of a 100-frame static sequence with independent noise.
    let (reference, _) = render_brightfield(&registration_scene(0)).map_err(|e| e.to_string())?;
    check(1u64..u64::MAX, |seed| {
        let (frame, _) = render_brightfield(&registration_scene(seed)).map_err(fail)?;
        let s = estimate_translation(&reference, &frame, 32).map_err(fail)?;
        prop_assert!(s.dx.abs() <= 0.5 && s.dy.abs() <= 0.5, "{:?}", s);
        Ok(())
    })
}

pub fn normalize_idempotent() -> Result<(), String> {
    let image = (8usize..40, 8usize..40, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| {
        (
            prop::collection::vec(20u8..180, w * h * c).prop_map(move |px| RasterImage::new(w, h, c, px).unwrap()),
            prop::collection::vec(0.7f64..1.3, c),
        )
    });
    check(image, |(reference, gains)| {
        let mut frame = reference.clone();
        let c = frame.channels();
        for (i, v) in frame.pixels_mut().iter_mut().enumerate() {
            *v = (*v as f64 / gains[i % c]).round().clamp(0.0, 255.0) as u8;
        }
        let once = normalize_exposure(&frame, &reference).map_err(fail)?.image;
        let twice = normalize_exposure(&once, &reference).map_err(fail)?.image;
        let worst = once.pixels().iter().zip(twice.pixels()).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0);
        prop_assert!(worst <= 1, "pixels moved by {} levels", worst);
        Ok(())
    })
}

pub fn aligned_centroids_stable() -> Result<(), String> {
    check((-3.0f64..3.0, -3.0f64..3.0, any::<u64>()), |(dx, dy, seed)| {
        let mut spec = SceneSpec::blank(160, 160);
        spec.noise_sigma = 2.0;
        spec.seed = seed;
        spec.droplets = vec![droplet(50.0, 50.0, 40.0), droplet(110.0, 100.0, 50.0)];
        spec.frame_shift = [dx, dy];
        let (frames, _) = render_sequence(&spec, Modality::Brightfield, 5).map_err(fail)?;
        let aligned = align_sequence(&frames, 32).map_err(fail)?;
        let bg = render_background(&spec).map_err(fail)?;
        let cfg = SegmentationConfig::default();
        let first = segment_with(&aligned.frames[0], &bg, &cfg)?;
        prop_assert_eq!(first.len(), 2);
        for f in &aligned.frames[1..] {
            let regions = segment_with(f, &bg, &cfg)?;
            prop_assert_eq!(regions.len(), 2);
            for (a, b) in first.iter().zip(&regions) {
                let d = (a.centroid.0 - b.centroid.0).abs().max((a.centroid.1 - b.centroid.1).abs());
                prop_assert!(d <= 1.0, "centroid moved {} px", d);
            }
        }
        Ok(())
    })
}

fn cell(x: f64, y: f64, radius: f64, color: [u8; 3]) -> CellSpec {
    CellSpec {
        center: [x, y],
        radius,
        shape: CellShape::Disk,
        color,
        intensity: 1.0,
    }
}

/// Up to nine fluorescent cells on a 3 x 3 grid of a 180 x 180 field.
fn cell_scene() -> impl Strategy<Value = SceneSpec> {
    let one = (
        8.0f64..20.0,
        -6.0f64..6.0,
        -6.0f64..6.0,
        prop::array::uniform3(0u8..=255),
        0.3f64..1.0,
    );
    (prop::collection::vec(one, 1..=9), 0.0f64..4.0, any::<u64>(), 0u8..15).prop_map(|(cells, noise, seed, floor)| {
        let mut s = SceneSpec::blank(180, 180);
        s.background = [floor; 3];
        s.noise_sigma = noise;
        s.seed = seed;
        s.cells = cells
            .into_iter()
            .enumerate()
            .map(|(i, (r, jx, jy, color, intensity))| CellSpec {
                intensity,
                ..cell(30.0 + 60.0 * (i % 3) as f64 + jx, 30.0 + 60.0 * (i / 3) as f64 + jy, r, color)
            })
            .collect();
        s
    })
}

pub fn pixel_sets(regions: &[Region]) -> Vec<(u32, Vec<(u32, u32)>)> {
    regions.iter().map(|r| (r.label, r.pixels().to_vec())).collect()
}

pub fn channel_transfer_invariance() -> Result<(), String> {
    check(cell_scene(), |spec| {
        let (img, _) = render_fluorescence(&spec).map_err(fail)?;
        let swap = ChannelMap::swap(0, 1).map_err(fail)?;
        let red = HsvBand::red();
        let moved = swap.remap_band(&red).map_err(fail)?;
        let a = segment_fluorescent(&img, &red, 20).map_err(fail)?;
        let b = segment_fluorescent(&transfer_channel(&img, &swap).map_err(fail)?, &moved, 20).map_err(fail)?;
        // Mean intensities permute with the channels; the regions themselves must not change.
        prop_assert_eq!(pixel_sets(&a), pixel_sets(&b));
        Ok(())
    })
}

pub fn field_ratio_bounds_and_scaling() -> Result<(), String> {
    check((cell_scene(), 0.5f64..=1.5), |(mut spec, k)| {
        // Keep every channel below 170 so scaling never saturates.
        for c in &mut spec.cells {
            c.intensity *= 0.66;
        }
        spec.background = [0, 0, 0];
        spec.noise_sigma = 0.0;
        let (img, _) = render_fluorescence(&spec).map_err(fail)?;
        let cfg = FluorConfig::default();
        let regions = segment_bands(&img, &cfg.segment_bands, cfg.min_area).map_err(fail)?;
        let base = live_dead(&img, &cfg.green_band, &cfg.red_band, &regions).map_err(fail)?;
        let scaled = live_dead(&scale_image(&img, k), &cfg.green_band, &cfg.red_band, &regions).map_err(fail)?;
        match (base.field_ratio, scaled.field_ratio) {
            (Some(a), Some(b)) => {
                prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                prop_assert!((a - b).abs() <= 0.01, "ratio {} became {} at k = {}", a, b, k);
            }
            (None, None) => prop_assert!(regions.is_empty() || base.regions.iter().all(|r| r.dim)),
            (a, b) => prop_assert!(false, "ratio {:?} became {:?}", a, b),
        }
        Ok(())
    })
}

pub fn stored_circularity_reproducible() -> Result<(), String> {
    check((cell_scene(), prop::option::of(0.1f64..5.0)), |(spec, pitch)| {
        let (img, _) = render_fluorescence(&spec).map_err(fail)?;
        let img = img.with_pixel_pitch(pitch).map_err(fail)?;
        let field = analyze_field(&img, &FluorConfig::default(), 0).map_err(fail)?;
        for c in &field.cells {
            let again = circularity(c.area, c.perimeter).map_err(fail)?;
            prop_assert_eq!(again.to_bits(), c.circularity.to_bits());
        }
        Ok(())
    })
}

pub fn no_identity_switches() -> Result<(), String> {
    check((cell_scene(), 2usize..6), |(mut spec, frames)| {
        for c in &mut spec.cells {
            c.color = [20, 230, 30];
            c.intensity = 1.0;
        }
        let (seq, _) = render_sequence(&spec, Modality::Fluorescence, frames).map_err(fail)?;
        let ts = region_timeseries(&seq, &HsvBand::green(), 20).map_err(fail)?;
        let n = ts.cell_counts[0];
        prop_assert!(ts.cell_counts.iter().all(|&c| c == n));
        prop_assert_eq!(ts.series.len(), n);
        for s in &ts.series {
            prop_assert_eq!(s.points.len(), frames);
            let c0 = s.points[0].centroid;
            for p in &s.points {
                prop_assert!((p.centroid.0 - c0.0).hypot(p.centroid.1 - c0.1) < 2.0);
            }
        }
        Ok(())
    })
}

pub fn rendering_deterministic() -> Result<(), String> {
    check((droplet_scene(), cell_scene(), 1usize..4), |(bf, fl, n)| {
        prop_assert_eq!(
            render_sequence(&bf, Modality::Brightfield, n).map_err(fail)?,
            render_sequence(&bf, Modality::Brightfield, n).map_err(fail)?
        );
        let (a, ta) = render_fluorescence(&fl).map_err(fail)?;
        let (b, tb) = render_fluorescence(&fl).map_err(fail)?;
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta.seed, fl.seed);
        prop_assert_eq!(ta, tb);
        Ok(())
    })
}

pub fn noise_free_round_trip() -> Result<(), String> {
    check((droplet_scene(), cell_scene()), |(mut bf, mut fl)| {
        bf.noise_sigma = 0.0;
        let (frame, truth) = render_brightfield(&bf).map_err(fail)?;
        let bg = render_background(&bf).map_err(fail)?;
        let records = droplet_metrics(&segment_with(&frame, &bg, &SegmentationConfig::default())?, None);
        prop_assert_eq!(records.len(), truth.droplets.len());
        for r in &records {
            let t = nearest(&truth.droplets, r.centroid);
            prop_assert!((r.diameter_px / t.diameter - 1.0).abs() <= 0.02, "{} vs {}", r.diameter_px, t.diameter);
        }
        fl.noise_sigma = 0.0;
        fl.background = [0, 0, 0];
        for (i, c) in fl.cells.iter_mut().enumerate() {
            c.center = [30.0 + 60.0 * (i % 3) as f64, 30.0 + 60.0 * (i / 3) as f64];
            c.radius = 22.0 + 0.3 * (c.radius - 8.0);
            c.color = [20, 230, 30];
            c.intensity = 1.0;
        }
        let (img, truth) = render_fluorescence(&fl).map_err(fail)?;
        let regions = segment_fluorescent(&img, &HsvBand::green(), 20).map_err(fail)?;
        prop_assert_eq!(regions.len(), truth.cells.len());
        for r in &regions {
            let t = truth
                .cells
                .iter()
                .min_by(|a, b| {
                    let d = |c: &[f64; 2]| (c[0] - r.centroid.0).hypot(c[1] - r.centroid.1);
                    d(&a.center).total_cmp(&d(&b.center))
                })
                .unwrap();
            prop_assert!((r.area() / t.area - 1.0).abs() <= 0.03, "cell area {} vs {}", r.area(), t.area);
        }
        Ok(())
    })
}

fn tiny_corpus(dir: &Path, seed: u64, frames: usize) {
    let mut s = SceneSpec::blank(72, 64);
    s.noise_sigma = 2.0;
    s.background_texture = 3.0;
    s.seed = seed;
    s.droplets = vec![droplet(22.0, 24.0, 22.0), droplet(50.0, 38.0, 26.0)];
    s.frame_shift = [0.6, -0.4];
    write_frames(dir, &s, Modality::Brightfield, frames);
}

fn tmpdir() -> Result<tempfile::TempDir, TestCaseError> {
    tempfile::tempdir().map_err(fail)
}

pub fn batch_determinism() -> Result<(), String> {
    check((any::<u64>(), 1usize..5, 1usize..5, any::<bool>()), |(seed, n, workers, align)| {
        let tmp = tmpdir()?;
        let input = tmp.path().join("in");
        tiny_corpus(&input, seed, n);
        let run = |name: &str| -> Result<Vec<String>, TestCaseError> {
            let out = tmp.path().join(name);
            let mut cfg = batch_config(Mode::Brightfield, &input, &out);
            cfg.workers = workers;
            cfg.align = align;
            cfg.max_shift = 8;
            run_batch(&cfg).map_err(fail)?;
            Ok(["results.csv", "summary.json"].iter().map(|f| read(&out.join(f))).collect())
        };
        prop_assert_eq!(run("a")?, run("b")?);
        Ok(())
    })
}

pub fn stream_equals_batch() -> Result<(), String> {
    check((any::<u64>(), 1usize..5, any::<bool>()), |(seed, n, align)| {
        let tmp = tmpdir()?;
        let input = tmp.path().join("in");
        tiny_corpus(&input, seed, n);
        let out = tmp.path().join("batch");
        let mut cfg = batch_config(Mode::Brightfield, &input, &out);
        cfg.align = align;
        cfg.max_shift = 8;
        run_batch(&cfg).map_err(fail)?;
        let streamed = tmp.path().join("stream");
        cfg.mode = None;
        cfg.output_dir = Some(streamed.clone());
        cfg.stream = StreamConfig {
            poll_ms: 2,
            stable_polls: 1,
            idle_timeout_ms: Some(40),
            ..Default::default()
        };
        run_stream(&cfg, Arc::new(AtomicBool::new(false))).map_err(fail)?;
        prop_assert_eq!(read(&out.join("results.csv")), read(&streamed.join("results.csv")));
        Ok(())
    })
}

pub fn timing_sums() -> Result<(), String> {
    check((prop::array::uniform5(0.0f64..5000.0), 1.0f64..5000.0), |(s, budget)| {
        let times = StageTimes {
            read: s[0],
            register: s[1],
            segment: s[2],
            analyze: s[3],
            write: s[4],
        };
        let r = TimingReport::new(7, &times, budget);
        let sum = r.read_ms + r.register_ms + r.segment_ms + r.deconvolve_or_morph_ms + r.write_ms;
        prop_assert!((sum - r.total_ms).abs() <= 1.0);
        prop_assert_eq!(r.budget_exceeded, r.total_ms > budget);
        // The rounded CSV row keeps the same relation.
        let v: Vec<f64> = r.csv_row().split(',').skip(1).take(6).map(|x| x.parse().unwrap()).collect();
        prop_assert!((v[..5].iter().sum::<f64>() - v[5]).abs() <= 1.0);
        Ok(())
    })
}

pub fn ordered_emission() -> Result<(), String> {
    check((any::<u64>(), 2usize..10, 2usize..8), |(seed, n, workers)| {
        let tmp = tmpdir()?;
        let input = tmp.path().join("in");
        tiny_corpus(&input, seed, n);
        let out = tmp.path().join("out");
        let mut cfg = batch_config(Mode::Brightfield, &input, &out);
        cfg.workers = workers;
        run_batch(&cfg).map_err(fail)?;
        let timing: Vec<usize> = csv_rows(&out.join("timing.csv")).iter().map(|r| r[0].parse().unwrap()).collect();
        prop_assert_eq!(timing, (0..n).collect::<Vec<_>>());
        let results: Vec<usize> = csv_rows(&out.join("results.csv")).iter().map(|r| r[0].parse().unwrap()).collect();
        prop_assert!(results.windows(2).all(|w| w[0] <= w[1]));
        Ok(())
    })
}

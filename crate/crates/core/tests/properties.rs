use aimc::characterization::{characterize, CharacterizationConfig};
use aimc::crossbar::{AdcParams, CellMode, CoreConfig, CrossbarCore};
use aimc::device::DeviceParams;
use aimc::experiments::{program_method, random_target, robust, Method};
use aimc::programming::{DeviceSelectionPlan, GdpConfig, IterativeConfig};
use aimc::snapshot;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn programmed(rows: usize, cols: usize, device: DeviceParams, seed: u64) -> CrossbarCore {
    let cfg = CoreConfig::preset(rows, cols, device, CellMode::Single, seed);
    let mut core = CrossbarCore::build(&cfg).unwrap();
    let target = random_target(rows, cols, 0.8, seed);
    let plan = DeviceSelectionPlan::for_core(&core, target.view()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0));
    core.apply_pulse_matrix(u.view(), &plan).unwrap();
    core
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_stay_within_full_scale(seed in 0u64..1000, scale in 0.1f64..4.0, bits in 4u32..12) {
        let mut cfg = CoreConfig::preset(16, 8, DeviceParams::pcm1(), CellMode::Two, seed);
        // A tiny full scale forces clipping.
        cfg.adc = AdcParams { n_bits: bits, i_max: 10.0, beta_nl: 0.1, sigma_lsb: 2.0 };
        let mut core = CrossbarCore::build(&cfg).unwrap();
        let plan = DeviceSelectionPlan::for_core(&core, Array2::from_elem((16, 8), 0.7).view()).unwrap();
        core.apply_pulse_matrix(Array2::from_elem((16, 8), 1.0).view(), &plan).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((16, 20), || scale * rng.random_range(-1.0..1.0));
        let y = core.mvm_batch(x.view()).unwrap();
        let fs = core.output_full_scale();
        prop_assert!(y.iter().all(|v| v.abs() <= fs * (1.0 + 1e-12)));
    }

    #[test]
    fn drift_advances_are_additive(seed in 0u64..1000, dt in 0.0f64..1e5) {
        let mut once = programmed(6, 5, DeviceParams::pcm1(), seed);
        let mut twice = once.clone();
        once.advance_clock(dt).unwrap();
        twice.advance_clock(dt / 2.0).unwrap();
        twice.advance_clock(dt / 2.0).unwrap();
        prop_assert!((once.clock() - twice.clock()).abs() <= 1e-9 * dt.max(1.0));
        let (a, b) = (once.true_weights(once.clock()).unwrap(), twice.true_weights(twice.clock()).unwrap());
        prop_assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-9));
    }
}

#[test]
fn zero_drift_exponent_is_time_invariant() {
    let device = DeviceParams { nu_mean: 0.0, nu_std: 0.0, ..DeviceParams::pcm1() };
    let mut core = programmed(8, 8, device, 3);
    let before = core.true_weights(core.clock()).unwrap();
    core.advance_clock(86_400.0).unwrap();
    assert_eq!(core.true_weights(core.clock()).unwrap(), before);
}

#[test]
fn mvm_is_independent_of_worker_count() {
    let core = programmed(64, 64, DeviceParams::pcm1(), 5);
    let x = random_target(64, 300, 1.0, 9);
    let run = |n| {
        let mut c = core.clone();
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| c.mvm_batch(x.view()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn snapshot_restores_a_programmed_core_mid_run() {
    let core_cfg = CoreConfig::preset(16, 16, DeviceParams::pcm2(), CellMode::Two, 21);
    let target = random_target(16, 16, 0.8, 21);
    let gdp = GdpConfig { iterations: 40, batch_size: 64, ..GdpConfig::default() };
    let char_cfg = CharacterizationConfig::default();
    let run = program_method(&core_cfg, target.view(), Method::GdpTd, &IterativeConfig::default(), &gdp, &char_cfg, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.snap");
    snapshot::save(&run.core, &path).unwrap();
    let mut restored = snapshot::load(&path).unwrap();
    let mut original = run.core;
    let plan = DeviceSelectionPlan::for_core(&original, target.view()).unwrap();
    let u = Array2::from_elem((16, 16), 0.3);
    for c in [&mut original, &mut restored] {
        c.apply_pulse_matrix(u.view(), &plan).unwrap();
        c.advance_clock(3600.0).unwrap();
    }
    assert_eq!(restored, original);
    assert_eq!(
        characterize(&restored, target.view(), &char_cfg).unwrap(),
        characterize(&original, target.view(), &char_cfg).unwrap()
    );
}

/// Two devices per polarity double the column current, so a strongly compressing
/// ADC leaves more unexplained (nonlinear) error than with one device.
#[test]
fn two_device_mode_has_more_nonlinear_error_under_strong_compression() {
    let median_nl = |method: Method| {
        let v: Vec<f64> = (1..=3)
            .map(|seed| {
                let mut cfg = CoreConfig::preset(64, 64, DeviceParams::pcm1(), method.mode(), seed);
                cfg.adc.beta_nl = 0.2;
                let target = random_target(64, 64, 0.8, seed);
                let run = program_method(
                    &cfg,
                    target.view(),
                    method,
                    &IterativeConfig::default(),
                    &GdpConfig::default(),
                    &CharacterizationConfig::default(),
                    None,
                )
                .unwrap();
                run.final_report().eps_nonlinear
            })
            .collect();
        robust(&v).unwrap().median
    };
    let (sd, td) = (median_nl(Method::GdpSd), median_nl(Method::GdpTd));
    assert!(td > sd, "two-device {td:.3}% vs single-device {sd:.3}%");
}

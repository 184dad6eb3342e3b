//! Browser bindings. Every function returns a JSON string for the page to plot.

use aimc::characterization::{characterize, CharacterizationConfig};
use aimc::crossbar::{AdcParams, CoreConfig};
use aimc::device::DeviceParams;
use aimc::experiments::{program_method, random_target, Method};
use aimc::programming::{GdpConfig, IterativeConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_SIZE: u32 = 128;

fn check_size(size: u32) -> Result<usize, String> {
    if !(4..=MAX_SIZE).contains(&size) {
        return Err(format!("array size must be within [4, {MAX_SIZE}], got {size}"));
    }
    Ok(size as usize)
}

fn device(name: &str) -> Result<DeviceParams, String> {
    DeviceParams::preset(name).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    eps_total: Vec<f64>,
    eps_weight: Vec<f64>,
}

#[derive(Serialize)]
struct Comparison {
    iterative: Curve,
    gdp: Curve,
}

fn curve(run: &aimc::experiments::ProgramRun) -> Curve {
    Curve {
        x: run.reports.iter().map(|(x, _)| *x).collect(),
        eps_total: run.reports.iter().map(|(_, r)| r.eps_total).collect(),
        eps_weight: run.reports.iter().map(|(_, r)| r.eps_weight).collect(),
    }
}

/// Error while programming one core with the iterative baseline (x = sweep) and with
/// GDP (x = iteration, sampled every 10).
#[wasm_bindgen]
pub fn programming_curves(size: u32, device_name: &str, seed: u32, iterations: u32) -> Result<String, String> {
    let n = check_size(size)?;
    if iterations == 0 {
        return Err("iterations must be >= 1".into());
    }
    let seed = u64::from(seed);
    let target = random_target(n, n, 0.8, seed);
    let gdp = GdpConfig { iterations: iterations as usize, ..GdpConfig::default() };
    let it = IterativeConfig::default();
    let ch = CharacterizationConfig::default();
    let run = |m: Method| {
        let cfg = CoreConfig::preset(n, n, device(device_name)?, m.mode(), seed);
        program_method(&cfg, target.view(), m, &it, &gdp, &ch, Some(10)).map_err(|e| e.to_string())
    };
    let out = Comparison { iterative: curve(&run(Method::IterativeSd)?), gdp: curve(&run(Method::GdpSd)?) };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Drift {
    seconds: Vec<f64>,
    iterative: Vec<f64>,
    gdp: Vec<f64>,
}

/// Weight error after programming at `points` log-spaced times up to `hours`.
#[wasm_bindgen]
pub fn drift_curve(size: u32, device_name: &str, seed: u32, hours: f64, points: u32) -> Result<String, String> {
    let n = check_size(size)?;
    if !(hours > 0.0 && hours <= 1e4) || points < 2 {
        return Err("need 0 < hours <= 10000 and at least 2 points".into());
    }
    let seed = u64::from(seed);
    let target = random_target(n, n, 0.8, seed);
    let end = hours * 3600.0;
    let seconds: Vec<f64> = (0..points).map(|k| end.powf(f64::from(k) / f64::from(points - 1))).collect();
    let ch = CharacterizationConfig::default();
    let trace = |m: Method| -> Result<Vec<f64>, String> {
        let cfg = CoreConfig::preset(n, n, device(device_name)?, m.mode(), seed);
        let run = program_method(&cfg, target.view(), m, &IterativeConfig::default(), &GdpConfig::default(), &ch, None)
            .map_err(|e| e.to_string())?;
        let mut core = run.core;
        let start = core.clock();
        seconds
            .iter()
            .map(|&t| {
                core.advance_clock(start + t - core.clock()).map_err(|e| e.to_string())?;
                Ok(characterize(&core, target.view(), &ch).map_err(|e| e.to_string())?.eps_weight)
            })
            .collect()
    };
    let out = Drift { iterative: trace(Method::IterativeSd)?, gdp: trace(Method::GdpSd)?, seconds };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Transfer {
    input: Vec<f64>,
    ideal: Vec<f64>,
    output: Vec<f64>,
}

/// Static ADC transfer: column signal in units of full scale against the decoded output,
/// swept over [-1.25, 1.25].
#[wasm_bindgen]
pub fn adc_transfer(n_bits: u32, beta_nl: f64, points: u32) -> Result<String, String> {
    let adc = AdcParams { n_bits, beta_nl, sigma_lsb: 0.0, i_max: 1.0 };
    adc.validate().map_err(|e| e.to_string())?;
    if points < 2 {
        return Err("need at least 2 points".into());
    }
    let input: Vec<f64> = (0..points).map(|k| -1.25 + 2.5 * f64::from(k) / f64::from(points - 1)).collect();
    let out = Transfer {
        ideal: input.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        output: input.iter().map(|&s| adc.convert(s) * adc.lsb()).collect(),
        input,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn programming_curves_have_matching_lengths() {
        let v = parse(programming_curves(8, "pcm1", 1, 40));
        for m in ["iterative", "gdp"] {
            let x = v[m]["x"].as_array().unwrap();
            assert!(!x.is_empty());
            assert_eq!(x.len(), v[m]["eps_total"].as_array().unwrap().len());
        }
        assert_eq!(v["gdp"]["x"].as_array().unwrap().last().unwrap().as_f64(), Some(40.0));
    }

    #[test]
    fn drift_curve_spans_the_requested_time() {
        let v = parse(drift_curve(8, "pcm1", 2, 24.0, 5));
        let t = v["seconds"].as_array().unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t[0].as_f64(), Some(1.0));
        assert!((t[4].as_f64().unwrap() - 86_400.0).abs() < 1e-6);
        assert_eq!(v["gdp"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn adc_transfer_clips_and_compresses() {
        let v = parse(adc_transfer(8, 0.2, 101));
        let out: Vec<f64> = v["output"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(out.iter().all(|y| y.abs() <= 1.0));
        assert!(out.windows(2).all(|w| w[1] >= w[0]));
        assert!(out[100] < 1.0 && out[100] > 0.7);
        assert_eq!(out[50], 0.0);
    }

    #[test]
    fn bad_arguments_are_errors() {
        assert!(programming_curves(2, "pcm1", 1, 10).is_err());
        assert!(programming_curves(8, "pcm9", 1, 10).is_err());
        assert!(drift_curve(8, "pcm1", 1, -1.0, 5).is_err());
        assert!(adc_transfer(2, 0.0, 10).is_err());
    }
}

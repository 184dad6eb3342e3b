//! Small MLP mapped onto one crossbar per layer. MVMs run on the simulated cores;
//! rescaling, biases and ReLU run in software.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::{characterize, CharacterizationConfig, CharacterizationReport};
use crate::crossbar::CrossbarCore;
use crate::error::{invalid, Error, Result};
use crate::experiments::{program_method, CoreSpec, Method};
use crate::programming::{GdpConfig, IterativeConfig};
use crate::rng::{self, domain};

pub const MLP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs x outputs`; the layer computes `W^T x + b`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Upper bound of this layer's input on the training set. Inputs are divided by it
    /// before encoding and outputs multiplied back.
    pub input_scale: f64,
}

impl Layer {
    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.inputs, self.outputs), self.weights.clone()).expect("validated shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    pub schema_version: u32,
    pub layers: Vec<Layer>,
    /// Software accuracy (%) on the training set, recorded when the fixture was made.
    pub train_accuracy: f64,
}

impl Mlp {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MLP_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "MLP fixture schema_version {} is not supported (expected {MLP_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Empty("MLP has no layers"));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape {
                    expected: format!("layer {k}: {}x{} weights and {} biases", l.inputs, l.outputs, l.outputs),
                    got: format!("{} weights and {} biases", l.weights.len(), l.bias.len()),
                });
            }
            if k > 0 && self.layers[k - 1].outputs != l.inputs {
                return Err(Error::Shape {
                    expected: format!("layer {k} with {} inputs", self.layers[k - 1].outputs),
                    got: format!("{} inputs", l.inputs),
                });
            }
            if !(l.input_scale > 0.0 && l.input_scale.is_finite()) {
                return Err(invalid("input_scale", format!("layer {k}: must be finite and > 0")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("MLP parameters"));
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let mlp: Mlp = serde_json::from_reader(r)?;
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Full-precision forward pass on `d x N` inputs; returns `classes x N` logits.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.matrix().t().dot(&a);
            add_bias(&mut z, &l.bias);
            if k + 1 < self.layers.len() {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn add_bias(z: &mut Array2<f64>, bias: &[f64]) {
    for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(bias) {
        row += b;
    }
}

pub fn argmax_columns(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(1))
        .map(|c| c.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0)
        .collect()
}

/// Top-1 accuracy in percent.
pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    100.0 * hits as f64 / labels.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N x d`, values in [-1, 1].
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate_for(&self, mlp: &Mlp) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("dataset has no samples"));
        }
        if self.dims() != mlp.inputs() {
            return Err(Error::Shape { expected: format!("{} features", mlp.inputs()), got: format!("{} features", self.dims()) });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= mlp.classes()) {
            return Err(invalid("label", format!("label {l} is not below the {} output classes", mlp.classes())));
        }
        Ok(())
    }

    /// Gaussian clusters around random centres, clipped to [-1, 1]. Splits of the same
    /// `seed` share centres and differ in their samples.
    pub fn synthetic(n: usize, dims: usize, classes: usize, spread: f64, seed: u64, split: u64) -> Self {
        let mut crng = rng::stream(seed, &[domain::DATASET, 0]);
        let centres = Array2::from_shape_simple_fn((classes, dims), || crng.random_range(-0.5..0.5));
        let mut rng = rng::stream(seed, &[domain::DATASET, 1, split]);
        let mut features = Array2::zeros((n, dims));
        let mut labels = Vec::with_capacity(n);
        for (i, mut row) in features.axis_iter_mut(Axis(0)).enumerate() {
            let c = i % classes;
            for (v, &m) in row.iter_mut().zip(centres.row(c)) {
                let z: f64 = rng.sample(StandardNormal);
                *v = (m + spread * z).clamp(-1.0, 1.0);
            }
            labels.push(c);
        }
        Self { features, labels }
    }

    /// CSV with one row per sample: features then the integer label. No header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows: Vec<f64> = vec![];
        let mut labels = vec![];
        let mut dims = None;
        for (n, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Config(format!("dataset line {}: need at least one feature and a label", n + 1)));
            }
            let d = rec.len() - 1;
            if *dims.get_or_insert(d) != d {
                return Err(Error::Config(format!("dataset line {}: expected {} features, found {d}", n + 1, dims.unwrap())));
            }
            for f in rec.iter().take(d) {
                let v: f64 = f.trim().parse().map_err(|_| Error::Config(format!("dataset line {}: bad number `{f}`", n + 1)))?;
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("dataset line {}: feature {v} outside [-1, 1]", n + 1)));
                }
                rows.push(v);
            }
            let l = &rec[d];
            labels.push(l.trim().parse().map_err(|_| Error::Config(format!("dataset line {}: bad label `{l}`", n + 1)))?);
        }
        let d = dims.ok_or(Error::Empty("dataset has no samples"))?;
        let features = Array2::from_shape_vec((labels.len(), d), rows).expect("row lengths checked");
        Ok(Self { features, labels })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for (row, l) in self.features.axis_iter(Axis(0)).zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            rec.push(l.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], epochs: 150, batch: 32, lr: 0.05, momentum: 0.9, seed: 7 }
    }
}

/// Offline software training with softmax cross-entropy and SGD with momentum.
pub fn train(data: &Dataset, classes: usize, cfg: &TrainConfig) -> Result<Mlp> {
    if data.is_empty() || cfg.batch == 0 {
        return Err(Error::Empty("training data"));
    }
    let mut sizes = vec![data.dims()];
    sizes.extend(&cfg.hidden);
    sizes.push(classes);
    let mut rng = rng::stream(cfg.seed, &[]);
    let mut ws: Vec<Array2<f64>> = vec![];
    let mut bs: Vec<Array1<f64>> = vec![];
    for k in 0..sizes.len() - 1 {
        let he = Normal::new(0.0, (2.0 / sizes[k] as f64).sqrt()).expect("positive std");
        ws.push(Array2::from_shape_simple_fn((sizes[k], sizes[k + 1]), || he.sample(&mut rng)));
        bs.push(Array1::zeros(sizes[k + 1]));
    }
    let mut vw: Vec<Array2<f64>> = ws.iter().map(|w| Array2::zeros(w.dim())).collect();
    let mut vb: Vec<Array1<f64>> = bs.iter().map(|b| Array1::zeros(b.len())).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let n_layers = ws.len();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let x = data.features.select(Axis(0), chunk).reversed_axes();
            let mut acts = vec![x];
            for k in 0..n_layers {
                let mut z = ws[k].t().dot(&acts[k]);
                for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(&bs[k]) {
                    row += b;
                }
                if k + 1 < n_layers {
                    z.mapv_inplace(relu);
                }
                acts.push(z);
            }
            // Softmax cross-entropy gradient w.r.t. the logits.
            let mut delta = acts[n_layers].clone();
            for (j, mut col) in delta.axis_iter_mut(Axis(1)).enumerate() {
                let m = col.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                col.mapv_inplace(|v| (v - m).exp());
                let s = col.sum();
                col /= s;
                col[data.labels[chunk[j]]] -= 1.0;
            }
            delta /= chunk.len() as f64;
            for k in (0..n_layers).rev() {
                let gw = acts[k].dot(&delta.t());
                let gb = delta.sum_axis(Axis(1));
                if k > 0 {
                    let mut back = ws[k].dot(&delta);
                    back.zip_mut_with(&acts[k], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    delta = back;
                }
                vw[k] = &vw[k] * cfg.momentum - &gw * cfg.lr;
                vb[k] = &vb[k] * cfg.momentum - &gb * cfg.lr;
                ws[k] += &vw[k];
                bs[k] += &vb[k];
            }
        }
    }
    let mut layers: Vec<Layer> = ws
        .iter()
        .zip(&bs)
        .map(|(w, b)| Layer {
            inputs: w.nrows(),
            outputs: w.ncols(),
            weights: w.iter().copied().collect(),
            bias: b.to_vec(),
            input_scale: 1.0,
        })
        .collect();
    // Input scales from the training set: the largest activation entering each layer.
    let mut a = data.features.t().to_owned();
    for layer in layers.iter_mut() {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        layer.input_scale = if scale > 0.0 { scale } else { 1.0 };
        let mut z = layer.matrix().t().dot(&a);
        add_bias(&mut z, &layer.bias);
        z.mapv_inplace(relu);
        a = z;
    }
    let mut mlp = Mlp { schema_version: MLP_SCHEMA_VERSION, layers, train_accuracy: 0.0 };
    let pred = argmax_columns(mlp.forward(data.features.t()).view());
    mlp.train_accuracy = accuracy(&pred, &data.labels);
    Ok(mlp)
}

/// Everything needed to program one MLP onto crossbars.
#[derive(Debug, Clone)]
pub struct MapConfig {
    /// Core template: device, ADC and timing. Rows/cols give the largest core a layer may use.
    pub core: CoreSpec,
    pub iterative: IterativeConfig,
    pub gdp: GdpConfig,
    pub characterization: CharacterizationConfig,
    /// Largest |weight| after per-layer normalization.
    pub target_range: f64,
}

#[derive(Debug, Clone)]
pub struct MappedLayer {
    /// `None` for an all-zero layer, which stays in software.
    pub core: Option<CrossbarCore>,
    /// Software weight per unit of core weight.
    pub weight_scale: f64,
    pub report: Option<CharacterizationReport>,
    pub warning: Option<String>,
}

/// Program every layer of `mlp` onto its own core with `method`.
pub fn map_layers(mlp: &Mlp, cfg: &MapConfig, method: Method, seed: u64) -> Result<Vec<MappedLayer>> {
    mlp.validate()?;
    if !(cfg.target_range > 0.0 && cfg.target_range <= 1.0) {
        return Err(invalid("target_range", "must be within (0, 1]"));
    }
    let device = cfg.core.device.resolve()?;
    let mut out = vec![];
    for (k, l) in mlp.layers.iter().enumerate() {
        if l.inputs > cfg.core.rows || l.outputs > cfg.core.cols {
            return Err(Error::LayerTooLarge {
                layer: k,
                rows: l.inputs,
                cols: l.outputs,
                max_rows: cfg.core.rows,
                max_cols: cfg.core.cols,
            });
        }
        let w = l.matrix();
        let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            out.push(MappedLayer {
                core: None,
                weight_scale: 0.0,
                report: None,
                warning: Some(format!("layer {k}: all weights are zero; {}", Error::DegenerateTarget)),
            });
            continue;
        }
        let scale = max / cfg.target_range;
        let target = w.mapv(|v| v / scale);
        let spec = CoreSpec { rows: l.inputs, cols: l.outputs, ..cfg.core.clone() };
        let core_seed = rng::mix(seed, &[k as u64]);
        let core_cfg = spec.core_config(device.clone(), method.mode(), core_seed);
        let char_cfg = CharacterizationConfig { seed: rng::mix(cfg.characterization.seed, &[seed, k as u64]), ..cfg.characterization.clone() };
        let run = program_method(&core_cfg, target.view(), method, &cfg.iterative, &cfg.gdp, &char_cfg, None)?;
        let report = characterize(&run.core, target.view(), &char_cfg)?;
        out.push(MappedLayer { core: Some(run.core), weight_scale: scale, report: Some(report), warning: None });
    }
    Ok(out)
}

/// Run the dataset through the mapped cores; returns top-1 accuracy in percent.
pub fn infer(layers: &mut [MappedLayer], mlp: &Mlp, data: &Dataset) -> Result<f64> {
    data.validate_for(mlp)?;
    if layers.len() != mlp.layers.len() {
        return Err(Error::Shape { expected: format!("{} mapped layers", mlp.layers.len()), got: layers.len().to_string() });
    }
    let mut a = data.features.t().to_owned();
    let last = mlp.layers.len() - 1;
    for (k, (m, l)) in layers.iter_mut().zip(&mlp.layers).enumerate() {
        let mut z = match &mut m.core {
            Some(core) => {
                let x = a.mapv(|v| (v / l.input_scale).clamp(-1.0, 1.0));
                core.mvm_batch(x.view())? * (m.weight_scale * l.input_scale)
            }
            None => Array2::zeros((l.outputs, a.ncols())),
        };
        add_bias(&mut z, &l.bias);
        if k < last {
            z.mapv_inplace(relu);
        }
        a = z;
    }
    Ok(accuracy(&argmax_columns(a.view()), &data.labels))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceRecord {
    pub method: Method,
    pub seed: u64,
    pub accuracy: f64,
    /// Per layer; NaN for layers kept in software.
    pub eps_total: Vec<f64>,
    pub eps_weight: Vec<f64>,
}

/// Map and evaluate every (method, seed) pair. Output order follows `methods` then `seeds`.
pub fn compare_methods(
    mlp: &Mlp,
    data: &Dataset,
    cfg: &MapConfig,
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<InferenceRecord>> {
    data.validate_for(mlp)?;
    let jobs: Vec<(Method, u64)> = methods.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    jobs.par_iter()
        .map(|&(method, seed)| {
            let mut layers = map_layers(mlp, cfg, method, seed)?;
            let accuracy = infer(&mut layers, mlp, data)?;
            let pick = |f: fn(&CharacterizationReport) -> f64| layers.iter().map(|l| l.report.as_ref().map_or(f64::NAN, f)).collect();
            Ok(InferenceRecord { method, seed, accuracy, eps_total: pick(|r| r.eps_total), eps_weight: pick(|r| r.eps_weight) })
        })
        .collect()
}

pub const INFERENCE_CSV_HEADER: [&str; 6] = ["method", "seed", "layer", "accuracy", "eps_total", "eps_weight"];

/// Long format: one row per (method, seed, layer).
pub fn write_inference_csv<W: Write>(records: &[InferenceRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(INFERENCE_CSV_HEADER)?;
    for r in records {
        for (k, (t, e)) in r.eps_total.iter().zip(&r.eps_weight).enumerate() {
            out.write_record([
                r.method.tag().to_string(),
                r.seed.to_string(),
                k.to_string(),
                format!("{:.4}", r.accuracy),
                format!("{t:.6}"),
                format!("{e:.6}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{AdcParams, InputEncoding};
    use crate::device::DeviceParams;
    use crate::experiments::DeviceChoice;

    fn tiny() -> (Mlp, Dataset) {
        let data = Dataset::synthetic(300, 6, 3, 0.15, 1, 0);
        let cfg = TrainConfig { hidden: vec![8], epochs: 60, ..Default::default() };
        (train(&data, 3, &cfg).unwrap(), data)
    }

    fn noiseless(max: usize) -> MapConfig {
        MapConfig {
            core: CoreSpec {
                rows: max,
                cols: max,
                device: DeviceChoice::Custom(DeviceParams::ideal()),
                adc: Some(AdcParams { n_bits: 16, i_max: 400.0, beta_nl: 0.0, sigma_lsb: 0.0 }),
                encoding: InputEncoding { n_in_bits: 12 },
                ..CoreSpec::default()
            },
            iterative: IterativeConfig::default(),
            gdp: GdpConfig::default(),
            characterization: CharacterizationConfig::default(),
            target_range: 0.8,
        }
    }

    #[test]
    fn training_learns_separable_clusters() {
        let (mlp, data) = tiny();
        assert!(mlp.train_accuracy > 90.0, "{}", mlp.train_accuracy);
        mlp.validate().unwrap();
        assert_eq!(mlp.layers[0].input_scale, data.features.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn noiseless_cores_match_software_predictions() {
        let (mlp, data) = tiny();
        let software = argmax_columns(mlp.forward(data.features.t()).view());
        let mut layers = map_layers(&mlp, &noiseless(16), Method::IterativeSd, 3).unwrap();
        let acc = infer(&mut layers, &mlp, &data).unwrap();
        assert_eq!(acc, accuracy(&software, &data.labels));
    }

    #[test]
    fn permuted_labels_give_chance_accuracy() {
        let (mlp, mut data) = tiny();
        let mut rng = rng::stream(5, &[]);
        data.labels.shuffle(&mut rng);
        let pred = argmax_columns(mlp.forward(data.features.t()).view());
        let acc = accuracy(&pred, &data.labels);
        assert!((acc - 100.0 / 3.0).abs() < 8.0, "{acc}");
    }

    #[test]
    fn zero_layer_stays_in_software_with_warning() {
        let (mut mlp, data) = tiny();
        mlp.layers[1].weights.iter_mut().for_each(|w| *w = 0.0);
        let mut layers = map_layers(&mlp, &noiseless(16), Method::GdpSd, 1).unwrap();
        assert!(layers[1].core.is_none());
        assert!(layers[1].warning.as_deref().unwrap().contains("degenerate"));
        infer(&mut layers, &mlp, &data).unwrap();
    }

    #[test]
    fn oversized_layer_is_rejected() {
        let (mlp, _) = tiny();
        let r = map_layers(&mlp, &noiseless(4), Method::GdpSd, 1);
        assert!(matches!(r, Err(Error::LayerTooLarge { layer: 0, .. })), "{r:?}");
    }

    #[test]
    fn mapping_is_deterministic() {
        let (mlp, _) = tiny();
        let cfg = MapConfig { core: CoreSpec { rows: 16, cols: 16, ..CoreSpec::default() }, ..noiseless(16) };
        let a = map_layers(&mlp, &cfg, Method::IterativeSd, 9).unwrap();
        let b = map_layers(&mlp, &cfg, Method::IterativeSd, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.core, y.core);
        }
    }

    #[test]
    fn fixture_and_dataset_round_trip() {
        let (mlp, data) = tiny();
        let mut buf = vec![];
        mlp.to_json(&mut buf).unwrap();
        assert_eq!(Mlp::from_json(buf.as_slice()).unwrap(), mlp);
        let mut csv = vec![];
        data.write_csv(&mut csv).unwrap();
        let back = Dataset::read_csv(csv.as_slice()).unwrap();
        assert_eq!(back.labels, data.labels);
        assert!((&back.features - &data.features).iter().all(|d| d.abs() <= 5e-7));
    }

    #[test]
    fn bad_fixture_is_rejected() {
        let (mut mlp, _) = tiny();
        mlp.layers[1].inputs += 1;
        assert!(mlp.validate().is_err());
        let (mut mlp, _) = tiny();
        mlp.schema_version = 99;
        assert!(matches!(mlp.validate(), Err(Error::Config(_))));
    }
}

#![allow(dead_code)]

use anomalens::detector::{AeDetector, Normalizer};
use anomalens::neuralnet::{Activation, DenseNetwork, Layer};
use anomalens::rng::SeededRng;
use ndarray::{Array1, Array2, ArrayView1};

pub const ACTIVATIONS: [Activation; 3] = [Activation::Identity, Activation::Sigmoid, Activation::Relu];

/// Random autoencoder-shaped network: `layers` dense layers whose last one
/// maps back to `input_dim`. Weights and biases are uniform in [-1, 1].
pub fn random_network(input_dim: usize, hidden: &[usize], activations: &[Activation], seed: u64) -> DenseNetwork {
    let mut rng = SeededRng::new(seed);
    let mut widths = hidden.to_vec();
    widths.push(input_dim);
    let mut prev = input_dim;
    let layers = widths
        .iter()
        .zip(activations)
        .map(|(&w, &a)| {
            let weights = Array2::from_shape_fn((w, prev), |_| rng.uniform_range(-1.0, 1.0));
            let biases = Array1::from_shape_fn(w, |_| rng.uniform_range(-1.0, 1.0));
            prev = w;
            Layer::new(weights, biases, a).unwrap()
        })
        .collect();
    DenseNetwork::new(input_dim, layers).unwrap()
}

pub fn random_point(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = SeededRng::new(seed);
    Array1::from_shape_fn(n, |_| rng.uniform())
}

/// Smallest |pre-activation| over the ReLU units, or infinity without any.
/// Finite differences are meaningless within a step of a kink.
pub fn relu_margin(net: &DenseNetwork, x: ArrayView1<f64>) -> f64 {
    let mut a = x.to_owned();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let z = layer.weights.dot(&a) + &layer.biases;
        if layer.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        a = z.mapv(|v| layer.activation.apply(v));
    }
    margin
}

pub const FD_STEP: f64 = 1e-6;
/// Denominator floor: below this gradient magnitude, absolute error is compared.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(FD_FLOOR)
}

fn mse_against(net: &DenseNetwork, x: ArrayView1<f64>, target: ArrayView1<f64>) -> f64 {
    let out = net.output(x).unwrap();
    (&out - &target).mapv(|v| v * v).sum() / out.len() as f64
}

/// Largest relative error of `grad_params` and `grad_input` against central
/// differences. The parameter gradient uses a random target distinct from `x`.
pub fn max_gradient_error(net: &DenseNetwork, x: ArrayView1<f64>, target: ArrayView1<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    let grads = net.grad_params(x, target).unwrap();
    let mut probe = net.clone();
    for (l, g) in grads.iter().enumerate() {
        for idx in 0..g.weights.len() {
            let (r, c) = (idx / g.weights.ncols(), idx % g.weights.ncols());
            let orig = probe.layers()[l].weights[[r, c]];
            probe.layers_mut()[l].weights[[r, c]] = orig + FD_STEP;
            let up = mse_against(&probe, x, target);
            probe.layers_mut()[l].weights[[r, c]] = orig - FD_STEP;
            let down = mse_against(&probe, x, target);
            probe.layers_mut()[l].weights[[r, c]] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * FD_STEP), g.weights[[r, c]]));
        }
        for i in 0..g.biases.len() {
            let orig = probe.layers()[l].biases[i];
            probe.layers_mut()[l].biases[i] = orig + FD_STEP;
            let up = mse_against(&probe, x, target);
            probe.layers_mut()[l].biases[i] = orig - FD_STEP;
            let down = mse_against(&probe, x, target);
            probe.layers_mut()[l].biases[i] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * FD_STEP), g.biases[i]));
        }
    }
    let gi = net.grad_input(x).unwrap();
    for i in 0..x.len() {
        let mut p = x.to_owned();
        p[i] += FD_STEP;
        let up = net.reconstruction_mse(p.view()).unwrap();
        p[i] -= 2.0 * FD_STEP;
        let down = net.reconstruction_mse(p.view()).unwrap();
        worst = worst.max(rel_err((up - down) / (2.0 * FD_STEP), gi[i]));
    }
    worst
}

/// Detector whose reconstruction is identically zero and whose normalizer is
/// the identity, so `MSE(z) = ||z||^2 / N`.
pub fn zero_map_detector(n: usize, threshold: f64) -> AeDetector {
    let mut train = Array2::zeros((2, n));
    train.row_mut(1).fill(1.0);
    let net = DenseNetwork::new(n, vec![Layer::zeros(n, n, Activation::Identity)]).unwrap();
    let norm = Normalizer::fit(train.view()).unwrap();
    AeDetector::from_parts(net, norm, train.view()).unwrap().with_threshold(threshold)
}

/// `sign(v) max(|v| - t, 0)`, written out independently of the library.
pub fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub mod repro {
    use anomalens::contribution::{estimate_contribution, ContributionConfig};
    use anomalens::datagen::{gen_multimodal, gen_simulated, MultimodalConfig, SimConfig};
    use anomalens::detector::{train_detector, AeArchitecture, PcaBaseline};
    use anomalens::experiments::{experiment_multimodal, experiment_sim61, MultimodalParams, Sim61Params};
    use anomalens::multimodal::{mae_estimate_contribution, train_mae, MaeArchitecture, MaeTrainConfig, ModalitySpec};
    use anomalens::neuralnet::{Activation, TrainConfig};
    use anomalens::persist::{load_model, save_model, to_json, Model};
    use ndarray::{Array2, ArrayView1};

    type Check = Result<String, String>;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    fn ensure(cond: bool, what: &str) -> Result<(), String> {
        if cond {
            Ok(())
        } else {
            Err(what.to_string())
        }
    }

    fn sim_data() -> (Array2<f64>, Array2<f64>) {
        let sim = SimConfig { n_components: 3, dims_per_component: 8, n_records: 300, seed: 2, ..SimConfig::default() };
        let train = gen_simulated(&sim).unwrap();
        let mut test = gen_simulated(&SimConfig { n_records: 20, seed: 3, ..sim }).unwrap();
        test.column_mut(4).mapv_inplace(|v| v * 6.0);
        (train, test)
    }

    fn round_trip(model: &Model, dir: &std::path::Path, name: &str) -> Result<Model, String> {
        let path = dir.join(name);
        save_model(&path, model).map_err(|e| e.to_string())?;
        let back = load_model(&path).map_err(|e| e.to_string())?;
        ensure(to_json(&back).unwrap() == to_json(model).unwrap(), "reloaded model serializes differently")?;
        Ok(back)
    }

    pub fn autoencoder(dir: &std::path::Path) -> Check {
        let (train, test) = sim_data();
        let cfg = TrainConfig { epochs: 30, batch_size: 30, learning_rate: 2.0, weight_decay: 1e-6, seed: 17 };
        let arch = AeArchitecture::shallow(3, Activation::Sigmoid, Activation::Identity);
        let (a, ra) = train_detector(train.view(), &arch, &cfg).map_err(|e| e.to_string())?;
        let (b, rb) = train_detector(train.view(), &arch, &cfg).map_err(|e| e.to_string())?;
        ensure(ra == rb, "training reports differ")?;
        ensure(to_json(&Model::Autoencoder(a.clone())).unwrap() == to_json(&Model::Autoencoder(b)).unwrap(), "trained models differ")?;
        let sa = a.score_rows(test.view()).unwrap();
        ensure(bits(&sa) == bits(&a.score_rows(test.view()).unwrap()), "repeated scoring differs")?;
        let Model::Autoencoder(back) = round_trip(&Model::Autoencoder(a.clone()), dir, "ae.json")? else {
            return Err("wrong kind after reload".into());
        };
        ensure(bits(&sa) == bits(&back.score_rows(test.view()).unwrap()), "scores change after reload")?;
        let cc = ContributionConfig::default();
        let mut explained = 0;
        for row in test.rows() {
            let e1 = estimate_contribution(&a, row, &cc).unwrap();
            let e2 = estimate_contribution(&back, row, &cc).unwrap();
            ensure(bits(e1.eta.as_slice().unwrap()) == bits(e2.eta.as_slice().unwrap()), "explanations differ")?;
            ensure(e1 == estimate_contribution(&a, row, &cc).unwrap(), "repeated explanation differs")?;
            explained += usize::from(e1.iterations > 0);
        }
        Ok(format!("autoencoder: {} scores, {} nontrivial explanations", sa.len(), explained))
    }

    pub fn multimodal(dir: &std::path::Path) -> Check {
        let mm = MultimodalConfig::default();
        let train = gen_multimodal(&mm, 200, 1, &[]).map_err(|e| e.to_string())?;
        let test = gen_multimodal(&mm, 20, 2, &[]).map_err(|e| e.to_string())?;
        let types = train
            .names
            .iter()
            .zip(&train.data)
            .map(|(n, d)| ModalitySpec::new(n, d.ncols(), (d.ncols() / 5).max(1)))
            .collect();
        let arch = MaeArchitecture::new(types, 6);
        let base = TrainConfig { epochs: 4, batch_size: 20, learning_rate: 0.05, weight_decay: 1e-6, seed: 8 };
        let cfg = MaeTrainConfig { pretrain: base.clone(), finetune: TrainConfig { seed: 9, ..base }, pretraining: true };
        let views: Vec<_> = train.data.iter().map(|d| d.view()).collect();
        let (a, ra) = train_mae(&views, &arch, &cfg).map_err(|e| e.to_string())?;
        let (b, rb) = train_mae(&views, &arch, &cfg).map_err(|e| e.to_string())?;
        ensure(ra == rb, "training reports differ")?;
        ensure(to_json(&Model::Multimodal(a.clone())).unwrap() == to_json(&Model::Multimodal(b)).unwrap(), "trained models differ")?;
        let tv: Vec<_> = test.data.iter().map(|d| d.view()).collect();
        let sa: Vec<f64> = a.score_rows(&tv).unwrap().iter().map(|s| s.wmse).collect();
        let Model::Multimodal(back) = round_trip(&Model::Multimodal(a.clone()), dir, "mae.json")? else {
            return Err("wrong kind after reload".into());
        };
        let sb: Vec<f64> = back.score_rows(&tv).unwrap().iter().map(|s| s.wmse).collect();
        ensure(bits(&sa) == bits(&sb), "scores change after reload")?;
        let cc = ContributionConfig::default();
        for i in 0..3 {
            let rec: Vec<ArrayView1<f64>> = test.data.iter().map(|d| d.row(i)).collect();
            let probe = a.clone().with_threshold(0.0);
            let e1 = mae_estimate_contribution(&probe, &rec, &cc).unwrap();
            let e2 = mae_estimate_contribution(&back.clone().with_threshold(0.0), &rec, &cc).unwrap();
            ensure(e1 == e2, "explanations differ after reload")?;
        }
        Ok(format!("multimodal: {} scores", sa.len()))
    }

    pub fn pca(dir: &std::path::Path) -> Check {
        let (train, test) = sim_data();
        let a = PcaBaseline::fit(train.view(), 4).map_err(|e| e.to_string())?;
        let b = PcaBaseline::fit(train.view(), 4).map_err(|e| e.to_string())?;
        ensure(a == b, "PCA fits differ")?;
        let sa = a.score_rows(test.view()).unwrap();
        let Model::Pca(back) = round_trip(&Model::Pca(a), dir, "pca.json")? else {
            return Err("wrong kind after reload".into());
        };
        ensure(bits(&sa) == bits(&back.score_rows(test.view()).unwrap()), "scores change after reload")?;
        Ok("pca: fit and reload".into())
    }

    pub fn experiments() -> Check {
        let mut p = Sim61Params::scaled(0.1);
        p.runs = 2;
        p.train.epochs = 30;
        let a = experiment_sim61(&p).map_err(|e| e.to_string())?;
        ensure(a == experiment_sim61(&p).unwrap(), "sim61 reports differ")?;
        let mut m = MultimodalParams { n_train: 150, n_test: 150, comparison_seeds: 1, trials: 2, n_faults: 3, ..MultimodalParams::default() };
        m.train.pretrain.epochs = 3;
        m.train.finetune.epochs = 3;
        let x = experiment_multimodal(&m).map_err(|e| e.to_string())?;
        ensure(x == experiment_multimodal(&m).unwrap(), "multimodal reports differ")?;
        Ok("experiments: sim61 and multimodal reports repeat exactly".into())
    }
}

//! Central-difference checks of every backward pass.

use gridsentry_core::grid::{normalized_adjacency, GridGraph};
use gridsentry_core::model::{BaselineConfig, DetectorModel, ModelSpec, ResidualOrder, TgnnConfig};
use gridsentry_core::nn::batch_norm::BatchNorm;
use gridsentry_core::nn::dense::Dense;
use gridsentry_core::nn::gradcheck::{finite_difference_check, DEFAULT_EPSILON};
use gridsentry_core::nn::gru::{gru_cell_forward, gru_sequence_backward, gru_sequence_forward, GruParams};
use gridsentry_core::nn::loss::bce_loss;
use gridsentry_core::nn::message_passing::{MessagePassing, SparseAdjacency};
use gridsentry_core::nn::{activation, Mode, Param};
use gridsentry_core::rng::{stream, substream, Stage, StageRng};
use rand::Rng;

const PROBES: u64 = 10;
const TOL: f64 = 1e-4;

fn uniform(rng: &mut StageRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn coords(rng: &mut StageRng, len: usize, k: usize) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    (0..k).map(|_| rng.random_range(0..len)).collect()
}

fn flatten(params: &[&mut Param]) -> Vec<f64> {
    params.iter().flat_map(|p| p.value.iter().copied()).collect()
}

fn flatten_grad(params: &[&mut Param]) -> Vec<f64> {
    params.iter().flat_map(|p| p.grad.iter().copied()).collect()
}

fn assign(params: &mut [&mut Param], flat: &[f64]) {
    let mut i = 0;
    for p in params.iter_mut() {
        let n = p.value.len();
        p.value.copy_from_slice(&flat[i..i + n]);
        i += n;
    }
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> SparseAdjacency {
    SparseAdjacency::from_dense(&normalized_adjacency(&GridGraph::from_edges(n, edges.iter().copied()))).unwrap()
}

fn ring5() -> Vec<(usize, usize)> {
    vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]
}

#[test]
fn dense_layer() {
    for probe in 0..PROBES {
        let mut rng = substream(1, Stage::Init, probe);
        let (rows, i, o) = (3, 4, 5);
        let mut layer = Dense::new(i, o, true, &mut rng);
        layer.bias.as_mut().unwrap().value = uniform(&mut rng, o, -0.5, 0.5);
        let x = uniform(&mut rng, rows * i, -1.0, 1.0);
        let c = uniform(&mut rng, rows * o, -1.0, 1.0);
        let dx = layer.backward(&x, rows, &c);
        let base = layer.clone();
        let worst_x = finite_difference_check(|x| dot(&base.forward(x, rows), &c), &x, &dx, DEFAULT_EPSILON, &(0..x.len()).collect::<Vec<_>>());
        let analytic = flatten_grad(&layer.params_mut());
        let point = flatten(&layer.params_mut());
        let worst_p = finite_difference_check(
            |w| {
                let mut l = base.clone();
                assign(&mut l.params_mut(), w);
                dot(&l.forward(&x, rows), &c)
            },
            &point,
            &analytic,
            DEFAULT_EPSILON,
            &(0..point.len()).collect::<Vec<_>>(),
        );
        assert!(worst_x <= 1e-6 && worst_p <= 1e-6, "probe {probe}: {worst_x:e} {worst_p:e}");
    }
}

#[test]
fn relu_away_from_kink() {
    let mut rng = stream(2, Stage::Init);
    let x: Vec<f64> = uniform(&mut rng, 40, -1.0, 1.0).into_iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
    let c = uniform(&mut rng, 40, -1.0, 1.0);
    let dx = activation::relu_backward(&x, &c);
    let worst = finite_difference_check(|x| dot(&activation::relu(x), &c), &x, &dx, DEFAULT_EPSILON, &(0..40).collect::<Vec<_>>());
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn sigmoid_and_tanh() {
    let mut rng = stream(3, Stage::Init);
    let x = uniform(&mut rng, 20, -3.0, 3.0);
    let c = uniform(&mut rng, 20, -1.0, 1.0);
    let all: Vec<usize> = (0..20).collect();
    let ds = activation::sigmoid_backward(&activation::sigmoid(&x), &c);
    assert!(finite_difference_check(|x| dot(&activation::sigmoid(x), &c), &x, &ds, DEFAULT_EPSILON, &all) <= 1e-6);
    let dt = activation::tanh_backward(&activation::tanh(&x), &c);
    assert!(finite_difference_check(|x| dot(&activation::tanh(x), &c), &x, &dt, DEFAULT_EPSILON, &all) <= 1e-6);
}

#[test]
fn bce_gradient() {
    let mut rng = stream(4, Stage::Init);
    let p = uniform(&mut rng, 12, 0.05, 0.95);
    let y: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
    let (_, g) = bce_loss(&p, &y).unwrap();
    let worst = finite_difference_check(|p| bce_loss(p, &y).unwrap().0, &p, &g, DEFAULT_EPSILON, &(0..12).collect::<Vec<_>>());
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn batch_norm_train_and_infer() {
    for probe in 0..PROBES {
        let mut rng = substream(5, Stage::Init, probe);
        let (rows, f) = (6, 3);
        let mut bn = BatchNorm::new(f);
        bn.gamma.value = uniform(&mut rng, f, 0.5, 1.5);
        bn.beta.value = uniform(&mut rng, f, -0.5, 0.5);
        bn.running_mean = uniform(&mut rng, f, -0.5, 0.5);
        bn.running_var = uniform(&mut rng, f, 0.5, 2.0);
        let x = uniform(&mut rng, rows * f, -2.0, 2.0);
        let c = uniform(&mut rng, rows * f, -1.0, 1.0);
        let all_x: Vec<usize> = (0..x.len()).collect();
        for mode in [Mode::Train, Mode::Infer] {
            let mut layer = bn.clone();
            let (_, cache) = layer.forward(&x, rows, mode).unwrap();
            let dx = layer.backward(&cache, &c);
            let base = bn.clone();
            let worst_x = finite_difference_check(|x| dot(&base.forward(x, rows, mode).unwrap().0, &c), &x, &dx, DEFAULT_EPSILON, &all_x);
            let analytic = flatten_grad(&layer.params_mut());
            let point = flatten(&layer.params_mut());
            let worst_p = finite_difference_check(
                |w| {
                    let mut l = base.clone();
                    assign(&mut l.params_mut(), w);
                    dot(&l.forward(&x, rows, mode).unwrap().0, &c)
                },
                &point,
                &analytic,
                DEFAULT_EPSILON,
                &(0..point.len()).collect::<Vec<_>>(),
            );
            assert!(worst_x <= TOL && worst_p <= TOL, "probe {probe} {mode:?}: {worst_x:e} {worst_p:e}");
        }
    }
}

#[test]
fn message_passing_layer() {
    let adj = adjacency(5, &ring5());
    for probe in 0..PROBES {
        let mut rng = substream(6, Stage::Init, probe);
        let (blocks, i, o) = (2, 3, 4);
        let mut mp = MessagePassing::new(i, o, true, &mut rng);
        mp.dense.bias.as_mut().unwrap().value = uniform(&mut rng, o, -0.5, 0.5);
        let x = uniform(&mut rng, blocks * 5 * i, -1.0, 1.0);
        let c = uniform(&mut rng, blocks * 5 * o, -1.0, 1.0);
        let (_, cache) = mp.forward(&adj, &x, blocks).unwrap();
        let dx = mp.backward(&adj, &cache, &c);
        let base = mp.clone();
        let worst_x = finite_difference_check(
            |x| dot(&base.forward(&adj, x, blocks).unwrap().0, &c),
            &x,
            &dx,
            DEFAULT_EPSILON,
            &(0..x.len()).collect::<Vec<_>>(),
        );
        let analytic = flatten_grad(&mp.params_mut());
        let point = flatten(&mp.params_mut());
        let worst_p = finite_difference_check(
            |w| {
                let mut l = base.clone();
                assign(&mut l.params_mut(), w);
                dot(&l.forward(&adj, &x, blocks).unwrap().0, &c)
            },
            &point,
            &analytic,
            DEFAULT_EPSILON,
            &(0..point.len()).collect::<Vec<_>>(),
        );
        assert!(worst_x <= TOL && worst_p <= TOL, "probe {probe}: {worst_x:e} {worst_p:e}");
    }
}

fn random_gru(rng: &mut StageRng, f: usize, h: usize) -> GruParams {
    let mut p = GruParams::init(f, h, true, rng);
    for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h].into_iter().flatten() {
        b.value = (0..h).map(|_| rng.random_range(-0.5..0.5)).collect();
    }
    p
}

#[test]
fn gru_cell_and_sequence() {
    for probe in 0..PROBES {
        let mut rng = substream(7, Stage::Init, probe);
        let (f, h, steps, rows) = (3, 4, 3, 2);
        let params = random_gru(&mut rng, f, h);
        let x = uniform(&mut rng, steps * rows * f, -1.0, 1.0);
        let c = uniform(&mut rng, steps * rows * h, -1.0, 1.0);
        let mut p = params.clone();
        let (_, cache) = gru_sequence_forward(&x, steps, rows, &p).unwrap();
        let dx = gru_sequence_backward(&mut p, &cache, &c);
        let worst_x = finite_difference_check(
            |x| dot(&gru_sequence_forward(x, steps, rows, &params).unwrap().0, &c),
            &x,
            &dx,
            DEFAULT_EPSILON,
            &(0..x.len()).collect::<Vec<_>>(),
        );
        let analytic = flatten_grad(&p.params_mut());
        let point = flatten(&p.params_mut());
        let worst_p = finite_difference_check(
            |w| {
                let mut q = params.clone();
                assign(&mut q.params_mut(), w);
                dot(&gru_sequence_forward(&x, steps, rows, &q).unwrap().0, &c)
            },
            &point,
            &analytic,
            DEFAULT_EPSILON,
            &(0..point.len()).collect::<Vec<_>>(),
        );
        assert!(worst_x <= TOL && worst_p <= TOL, "probe {probe}: {worst_x:e} {worst_p:e}");

        // The single cell is the one-step sequence.
        let x1 = &x[..f];
        let (h1, _) = gru_cell_forward(x1, &vec![0.0; h], &params).unwrap();
        assert_eq!(h1, gru_sequence_forward(x1, 1, 1, &params).unwrap().0);
    }
}

fn model_check(spec: ModelSpec, seed: u64, batch: usize) {
    let a_hat = normalized_adjacency(&GridGraph::from_edges(5, ring5()));
    for probe in 0..PROBES {
        let mut rng = substream(seed, Stage::Init, probe);
        let mut model = DetectorModel::new(spec, &a_hat, &mut rng).unwrap();
        let w = model.window();
        let x = uniform(&mut rng, w * batch * 5, -1.5, 1.5);
        let c = uniform(&mut rng, batch * 5, -1.0, 1.0);
        let eval = |m: &DetectorModel| {
            let mut drop = stream(probe, Stage::Dropout);
            dot(&m.forward(&x, batch, Mode::Train, &mut drop).unwrap().0, &c)
        };
        let mut drop = stream(probe, Stage::Dropout);
        let (_, cache) = model.forward(&x, batch, Mode::Train, &mut drop).unwrap();
        model.zero_grad();
        model.backward(&cache, &c);
        let analytic = flatten_grad(&model.params_mut());
        let point = flatten(&model.params_mut());
        let base = model.clone();
        let picks = coords(&mut rng, point.len(), 60);
        let worst = finite_difference_check(
            |v| {
                let mut m = base.clone();
                assign(&mut m.params_mut(), v);
                eval(&m)
            },
            &point,
            &analytic,
            DEFAULT_EPSILON,
            &picks,
        );
        assert!(worst <= TOL, "probe {probe}: {worst:e}");
    }
}

#[test]
fn one_layer_tgnn() {
    let spec = ModelSpec::Tgnn(TgnnConfig {
        layers: 1,
        hidden_dim: 4,
        window: 3,
        dropout: 0.3,
        ..TgnnConfig::default()
    });
    model_check(spec, 8, 2);
}

#[test]
fn three_layer_tgnn() {
    let spec = ModelSpec::Tgnn(TgnnConfig {
        layers: 3,
        hidden_dim: 4,
        window: 3,
        dropout: 0.3,
        ..TgnnConfig::default()
    });
    model_check(spec, 9, 2);
}

#[test]
fn three_layer_tgnn_post_addition() {
    let spec = ModelSpec::Tgnn(TgnnConfig {
        layers: 3,
        hidden_dim: 4,
        window: 3,
        dropout: 0.3,
        residual: ResidualOrder::PostAddition,
        ..TgnnConfig::default()
    });
    model_check(spec, 11, 2);
}

#[test]
fn baseline_gnn() {
    let spec = ModelSpec::Baseline(BaselineConfig {
        hidden_dim: 6,
        ffn_dim: 5,
        threshold: 0.5,
    });
    model_check(spec, 10, 3);
}

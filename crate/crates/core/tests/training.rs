use exodyn::neuralnet::{
    split_dataset, train_lm, Activation, Dataset, LmOptions, Mlp, Row, StopReason, INPUT_WIDTH, OUTPUT_WIDTH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(n: usize, seed: u64, target: impl Fn(&[f64]) -> [f64; OUTPUT_WIDTH]) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let mut row: Row = [0.0; INPUT_WIDTH + OUTPUT_WIDTH];
            for v in row[..INPUT_WIDTH].iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let y = target(&row[..INPUT_WIDTH]);
            row[INPUT_WIDTH..].copy_from_slice(&y);
            row
        })
        .collect();
    Dataset::new(rows)
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for net in 0..10 {
        let hidden = rng.gen_range(2..6);
        let (n_in, n_out) = (rng.gen_range(1..5), rng.gen_range(1..4));
        let mut mlp = Mlp::new(&[n_in, hidden, n_out], &[Activation::Tanh, Activation::Linear], net).unwrap();
        mlp.input_norm.mean = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        mlp.input_norm.scale = (0..n_in).map(|_| rng.gen_range(0.5..2.0)).collect();
        mlp.output_norm.mean = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        mlp.output_norm.scale = (0..n_out).map(|_| rng.gen_range(0.5..2.0)).collect();
        let base = mlp.params();
        for _ in 0..10 {
            let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let jac = mlp.jacobian(&x).unwrap();
            let h = 1e-6;
            let mut probe = mlp.clone();
            for j in 0..base.len() {
                let mut p = base.clone();
                p[j] = base[j] + h;
                probe.set_params(&p).unwrap();
                let up = probe.forward(&x).unwrap();
                p[j] = base[j] - h;
                probe.set_params(&p).unwrap();
                let down = probe.forward(&x).unwrap();
                for k in 0..n_out {
                    let fd = (up[k] - down[k]) / (2.0 * h);
                    let rel = (jac[(k, j)] - fd).abs() / fd.abs().max(1e-3);
                    assert!(rel < 1e-5, "net {net} param {j} output {k}: {} vs {fd}", jac[(k, j)]);
                }
            }
        }
    }
}

fn linear_net(seed: u64) -> Mlp {
    Mlp::new(&[INPUT_WIDTH, OUTPUT_WIDTH], &[Activation::Linear], seed).unwrap()
}

#[test]
fn lm_solves_linear_least_squares() {
    let data = random_rows(400, 1, |x| {
        let mut y = [0.0; OUTPUT_WIDTH];
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = 3.0 * k as f64 - 1.0 + x.iter().enumerate().map(|(i, v)| v * ((i * 7 + k) % 5) as f64).sum::<f64>();
        }
        y
    });
    let split = split_dataset(&data, 3).unwrap();
    let opts = LmOptions { max_iterations: 5, mse_goal: 1e-12, ..LmOptions::default() };
    let out = train_lm(&linear_net(0), &split, &opts).unwrap();
    let best = out.history.iter().filter(|r| r.accepted).map(|r| r.train_mse).fold(f64::INFINITY, f64::min);
    assert!(best < 1e-12, "train mse {best:e}");
    assert_eq!(out.stop, StopReason::MseGoal);
    assert!(out.history.last().unwrap().iteration <= 5);
}

#[test]
fn lm_handles_constant_targets() {
    let data = random_rows(200, 2, |_| [4.5; OUTPUT_WIDTH]);
    let split = split_dataset(&data, 1).unwrap();
    let mlp = Mlp::new(&[INPUT_WIDTH, 5, OUTPUT_WIDTH], &[Activation::Tanh, Activation::Linear], 3).unwrap();
    let out = train_lm(&mlp, &split, &LmOptions { max_iterations: 20, ..LmOptions::default() }).unwrap();
    assert!(out.history.iter().all(|r| r.train_mse.is_finite()));
    let y = out.mlp.forward(split.test.inputs(0)).unwrap();
    assert!(y.iter().all(|v| (v - 4.5).abs() < 0.05), "{y:?}");
}

#[test]
fn accepted_steps_decrease_training_error() {
    let data = random_rows(600, 4, |x| {
        let mut y = [0.0; OUTPUT_WIDTH];
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = 2.0 * (x[k] + 0.5 * x[k + 7]).tanh() + x[k + 14];
        }
        y
    });
    let split = split_dataset(&data, 5).unwrap();
    let mlp =
        Mlp::new(&[INPUT_WIDTH, 12, 7, OUTPUT_WIDTH], &[Activation::Tanh, Activation::Tanh, Activation::Linear], 6)
            .unwrap();
    let out =
        train_lm(&mlp, &split, &LmOptions { max_iterations: 40, patience: 1000, ..LmOptions::default() }).unwrap();
    let accepted: Vec<f64> = out.history.iter().filter(|r| r.accepted).map(|r| r.train_mse).collect();
    assert!(accepted.len() > 5);
    assert!(accepted.windows(2).all(|w| w[1] < w[0]));
    assert!(accepted.last().unwrap() < &(0.5 * accepted[0]));
    for r in out.history.iter().filter(|r| !r.accepted) {
        let before = out.history.iter().filter(|a| a.accepted && a.iteration < r.iteration).next_back().unwrap();
        assert!(r.train_mse >= before.train_mse);
    }
}

#[test]
fn training_is_deterministic() {
    let data = random_rows(300, 8, |x| {
        let mut y = [0.0; OUTPUT_WIDTH];
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = x[k].tanh() + x[22];
        }
        y
    });
    let split = split_dataset(&data, 9).unwrap();
    let mlp = Mlp::new(&[INPUT_WIDTH, 6, OUTPUT_WIDTH], &[Activation::Tanh, Activation::Linear], 10).unwrap();
    let opts = LmOptions { max_iterations: 10, ..LmOptions::default() };
    let a = train_lm(&mlp, &split, &opts).unwrap();
    let b = train_lm(&mlp, &split, &opts).unwrap();
    assert_eq!(a.mlp.to_json().unwrap(), b.mlp.to_json().unwrap());
    assert_eq!(a.history, b.history);
}

#[test]
fn train_rejects_wrong_shape() {
    let data = random_rows(50, 1, |_| [0.0; OUTPUT_WIDTH]);
    let split = split_dataset(&data, 0).unwrap();
    let mlp = Mlp::new(&[INPUT_WIDTH - 1, OUTPUT_WIDTH], &[Activation::Linear], 0).unwrap();
    assert!(train_lm(&mlp, &split, &LmOptions::default()).is_err());
}

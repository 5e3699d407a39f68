use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viterbi_par::models::{pair_count, pair_index, LinearGaussianSignal, SpikeTrains};
use viterbi_par::oracles::{exact_neural_normalizer, exact_neural_normalizer_grad};
use viterbi_par::{Likelihood, ModelSpec, Observations, Signal};

fn random_trials(neurons: usize, trials: usize, bins: usize, p: f64, seed: u64) -> Vec<Vec<Vec<u8>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            (0..bins)
                .map(|_| (0..neurons).map(|_| u8::from(rng.random_bool(p))).collect())
                .collect()
        })
        .collect()
}

fn models(trials: &[Vec<Vec<u8>>]) -> (ModelSpec, ModelSpec, SpikeTrains) {
    let neurons = trials[0][0].len();
    let d = pair_count(neurons);
    let spikes = SpikeTrains::from_trials(trials, None).unwrap();
    let signal = Signal::LinearGaussian(LinearGaussianSignal::isotropic_ar1(d, 0.9, 0.1, true).unwrap());
    let r = trials.len();
    let build = |lik| ModelSpec::new(signal.clone(), lik, Observations::Spikes(spikes.clone())).unwrap();
    (
        build(Likelihood::NeuralPseudo { neurons, trials: r }),
        build(Likelihood::NeuralExact { neurons, trials: r }),
        spikes,
    )
}

fn emission_grad_at_zero(m: &ModelSpec, t: usize) -> Vec<f64> {
    let mut g = vec![0.0; m.dim()];
    m.grad_log_g_add(t, &vec![0.0; m.dim()], 1.0, &mut g);
    g
}

/// Pseudo-likelihood gradient at zero coupling: `(1/2R) Σ_k (yⁱuʲ + yʲuⁱ)`, `u = y − c`.
fn pseudo_oracle(s: &SpikeTrains, t: usize) -> Vec<f64> {
    let (n, r) = (s.neurons(), s.trials());
    let c = s.rates();
    let mut g = vec![0.0; pair_count(n)];
    for k in 0..r {
        for i in 0..n {
            for j in i + 1..n {
                let (yi, yj) = (s.spike(t, k, i) as f64, s.spike(t, k, j) as f64);
                g[pair_index(n, i, j)] += (yi * (yj - c[j]) + yj * (yi - c[i])) / (2.0 * r as f64);
            }
        }
    }
    g
}

/// Exact-likelihood gradient at zero coupling: `S̄ⁱʲ − (½ − cⁱ)(½ − cʲ)`.
fn exact_oracle(s: &SpikeTrains, t: usize) -> Vec<f64> {
    let (n, r) = (s.neurons(), s.trials());
    let c = s.rates();
    let mut g = vec![0.0; pair_count(n)];
    for i in 0..n {
        for j in i + 1..n {
            let sbar: f64 = (0..r)
                .map(|k| (s.spike(t, k, i) as f64 - c[i]) * (s.spike(t, k, j) as f64 - c[j]))
                .sum::<f64>()
                / r as f64;
            g[pair_index(n, i, j)] = sbar - (0.5 - c[i]) * (0.5 - c[j]);
        }
    }
    g
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn emission_gradients_at_zero_match_their_closed_forms() {
    for neurons in 2..=4 {
        let trials = random_trials(neurons, 5, 6, 0.4, neurons as u64);
        let (pseudo, exact, s) = models(&trials);
        for t in 0..6 {
            assert!(max_diff(&emission_grad_at_zero(&pseudo, t), &pseudo_oracle(&s, t)) < 1e-14);
            assert!(max_diff(&emission_grad_at_zero(&exact, t), &exact_oracle(&s, t)) < 1e-14);
        }
    }
}

#[test]
fn pseudo_and_exact_gradients_agree_for_balanced_bins() {
    // Every bin holds a pattern and its complement, so bin means equal the rates (½).
    for neurons in 2..=4 {
        let half = random_trials(neurons, 3, 5, 0.5, 40 + neurons as u64);
        let mut trials = half.clone();
        for tr in &half {
            trials.push(tr.iter().map(|row| row.iter().map(|y| 1 - y).collect()).collect());
        }
        let (pseudo, exact, _) = models(&trials);
        for t in 0..5 {
            let (gp, ge) = (emission_grad_at_zero(&pseudo, t), emission_grad_at_zero(&exact, t));
            assert!(max_diff(&gp, &ge) < 1e-14, "N = {neurons}, t = {t}: {gp:?} vs {ge:?}");
        }
    }
}

#[test]
fn pseudo_and_exact_gradients_differ_for_unbalanced_bins() {
    let trials = vec![vec![vec![1, 1], vec![0, 0]], vec![vec![1, 1], vec![1, 0]]];
    let (pseudo, exact, _) = models(&trials);
    let (gp, ge) = (emission_grad_at_zero(&pseudo, 0), emission_grad_at_zero(&exact, 0));
    // c = (¾, ½); bin 0: y = (1,1) twice.
    assert!((gp[0] - 0.375).abs() < 1e-15, "{gp:?}");
    assert!((ge[0] - 0.125).abs() < 1e-15, "{ge:?}");
}

#[test]
fn normalizer_gradient_is_the_pair_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for neurons in 2..=4 {
        let d = pair_count(neurons);
        for _ in 0..100 {
            let rates: Vec<f64> = (0..neurons).map(|_| rng.random_range(0.05..0.95)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = exact_neural_normalizer_grad(&rates, &x).unwrap();
            let eps = 1e-5;
            for p in 0..d {
                let mut up = x.clone();
                let mut down = x.clone();
                up[p] += eps;
                down[p] -= eps;
                let fd = (exact_neural_normalizer(&rates, &up).unwrap() - exact_neural_normalizer(&rates, &down).unwrap())
                    / (2.0 * eps);
                assert!((fd - g[p]).abs() <= 1e-8, "N = {neurons}: {fd} vs {}", g[p]);
            }
        }
    }
}

#[test]
fn exact_model_rejects_large_populations() {
    let trials = random_trials(11, 1, 2, 0.5, 0);
    let spikes = SpikeTrains::from_trials(&trials, None).unwrap();
    let d = pair_count(11);
    let signal = Signal::LinearGaussian(
        LinearGaussianSignal::new(DMatrix::identity(d, d) * 0.5, vec![0.0; d], DMatrix::identity(d, d), vec![0.0; d], DMatrix::identity(d, d))
            .unwrap(),
    );
    let r = ModelSpec::new(signal, Likelihood::NeuralExact { neurons: 11, trials: 1 }, Observations::Spikes(spikes));
    assert!(matches!(r, Err(viterbi_par::Error::Size(_))));
}

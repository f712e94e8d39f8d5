use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trail_core::nn::gradcheck::check_gradient;
use trail_core::nn::{
    categorical_nll, softmax, Adam, Checkpoint, DenseNet, GradVector, HeadKind, MixtureHead, CHECKPOINT_MAGIC,
    LOG_STD_MAX, LOG_STD_MIN,
};

/// Diagonal-Gaussian mixture density evaluated directly from the textbook
/// formula, with log-std clamped like the loss.
fn mixture_nll_oracle(logits: &[f64], offsets: &[Vec<f64>], log_stds: &[Vec<f64>], anchor: &[f64], x: &[f64]) -> f64 {
    let zmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - zmax).exp()).sum();
    let mut density = 0.0;
    for k in 0..logits.len() {
        let w = (logits[k] - zmax).exp() / z;
        let mut p = 1.0;
        for i in 0..x.len() {
            let sigma = log_stds[k][i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
            let mu = anchor[i] + offsets[k][i];
            p *= (-(x[i] - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        }
        density += w * p;
    }
    -density.ln()
}

#[test]
fn mixture_nll_matches_density_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let k = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let head = MixtureHead::new(k, d);
        let row: Vec<f64> = (0..head.width()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let anchor: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let view = head.view(&row);
        let offsets: Vec<Vec<f64>> = (0..k).map(|m| view.offset(m).to_vec()).collect();
        let log_stds: Vec<Vec<f64>> = (0..k).map(|m| view.log_std(m).to_vec()).collect();
        let want = mixture_nll_oracle(view.logits(), &offsets, &log_stds, &anchor, &x);
        let (got, _) = view.nll(&anchor, &x);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn mixture_and_categorical_grads_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let head = MixtureHead::new(rng.random_range(1..=3), rng.random_range(1..=4));
        let row: Vec<f64> = (0..head.width()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let anchor: Vec<f64> = (0..head.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..head.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = head.view(&row).nll(&anchor, &x);
        let res = check_gradient(&row, &grad, 1e-5, 1e-6, |r| head.view(r).nll(&anchor, &x).0);
        assert!(res.max_rel_error < 1e-4, "{res:?}");

        let n = rng.random_range(2..6);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = rng.random_range(0..n);
        let (_, g) = categorical_nll(&logits, label);
        let res = check_gradient(&logits, &g, 1e-5, 1e-6, |l| categorical_nll(l, label).0);
        assert!(res.max_rel_error < 1e-6, "{res:?}");
    }
}

#[test]
fn net_backward_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let sizes = [3, 8, 8, 2];
        let net = DenseNet::new(&sizes, &mut rng).unwrap();
        let batch = 4;
        let input: Vec<f64> = (0..3 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..2 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &DenseNet| -> f64 {
            let c = n.forward_batch(&input, batch).unwrap();
            c.output().iter().zip(&w).map(|(o, w)| 0.5 * o * o * w).sum()
        };
        let cache = net.forward_batch(&input, batch).unwrap();
        let d_out: Vec<f64> = cache.output().iter().zip(&w).map(|(o, w)| o * w).collect();
        let grad = net.backward(&cache, &d_out).unwrap();
        let res = check_gradient(net.params(), &grad.0, 1e-5, 1e-6, |p| {
            loss(&DenseNet::from_params(&sizes, p.to_vec()).unwrap())
        });
        assert!(res.max_rel_error < 1e-4, "{res:?}");
    }
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let mut params = vec![1.0, -2.0, 0.5];
    let grad = GradVector(vec![0.3, -4.0, 1e-3]);
    let mut opt = Adam::new(3, 0.01);
    opt.step(&mut params, &grad, None).unwrap();
    // bias correction makes m_hat / sqrt(v_hat) = g / |g|
    for (p, (start, g)) in params.iter().zip([(1.0, 0.3), (-2.0, -4.0), (0.5, 1e-3)]) {
        let want = start - 0.01 * g / (f64::abs(g) + 1e-8);
        assert!((p - want).abs() < 1e-9);
    }
}

#[test]
fn adam_clip_bounds_effective_gradient() {
    let grad = GradVector(vec![60.0, 80.0]);
    let mut clipped = Adam::new(2, 0.1);
    let mut reference = Adam::new(2, 0.1);
    let mut p1 = vec![0.0, 0.0];
    let mut p2 = vec![0.0, 0.0];
    clipped.step(&mut p1, &grad, Some(1.0)).unwrap();
    reference.step(&mut p2, &GradVector(vec![0.6, 0.8]), None).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(clipped.first_moment(), reference.first_moment());
}

#[test]
fn adam_rejects_non_finite() {
    let mut opt = Adam::new(1, 0.1);
    let mut p = vec![0.0];
    assert!(opt.step(&mut p, &GradVector(vec![f64::NAN]), None).is_err());
    assert_eq!(p, vec![0.0]);
}

#[test]
fn corrupted_magic_fails_cleanly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ckpt = Checkpoint {
        head: HeadKind::Categorical { n_actions: 4 },
        net: DenseNet::new(&[4, 8, 8, 4], &mut rng).unwrap(),
    };
    let mut bytes = ckpt.encode();
    assert!(bytes.starts_with(CHECKPOINT_MAGIC.as_bytes()));
    bytes[0] ^= 0x20;
    assert!(Checkpoint::decode(&bytes).is_err());
    let good = ckpt.encode();
    assert!(Checkpoint::decode(&good[..good.len() - 3]).is_err());
}

#[test]
fn checkpoint_load_error_names_file() {
    let dir = std::env::temp_dir().join(format!("trail-nn-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.ckpt");
    std::fs::write(&path, b"NOTACKPT\n").unwrap();
    let msg = Checkpoint::load(&path).unwrap_err().to_string();
    assert!(msg.contains("broken.ckpt"), "{msg}");
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..16, k in 1usize..4, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = HeadKind::Mixture { k, dim: d };
        let mut net = DenseNet::new(&[2 * d + 1, hidden, hidden, head.out_dim()], &mut rng).unwrap();
        // include awkward values
        net.params_mut()[0] = -0.0;
        net.params_mut()[1] = f64::MIN_POSITIVE / 2.0;
        let ckpt = Checkpoint { head, net };
        let back = Checkpoint::decode(&ckpt.encode()).unwrap();
        prop_assert_eq!(back.head, ckpt.head);
        let a: Vec<u64> = ckpt.net.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = back.net.params().iter().map(|p| p.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = Checkpoint::decode(&bytes);
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-500.0f64..500.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn categorical_grad_sums_to_zero(logits in proptest::collection::vec(-20.0f64..20.0, 2..8), pick in any::<prop::sample::Index>()) {
        let label = pick.index(logits.len());
        let (loss, g) = categorical_nll(&logits, label);
        prop_assert!(loss >= 0.0);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trail_core::env::Action;
use trail_core::replay::{analytic_u_k, trim, PostProcess, ReplayBuffer, Trajectory};

fn traj_1d(values: &[i32]) -> Trajectory {
    let states = values.iter().map(|v| vec![*v as f64]).collect();
    let actions = (0..values.len().saturating_sub(1)).map(Action::Discrete).collect();
    Trajectory::new(states, actions)
}

/// Exact gap distribution by enumerating every `(episode, i, j)` draw with
/// its probability.
fn enumerate_gaps(lengths: &[usize]) -> Vec<f64> {
    let max = lengths.iter().max().unwrap() - 1;
    let mut p = vec![0.0; max];
    let pe = 1.0 / lengths.len() as f64;
    for &len in lengths {
        let pi = pe / (len - 1) as f64;
        for i in 0..len - 1 {
            let pj = pi / (len - 1 - i) as f64;
            for j in i + 1..len {
                p[j - i - 1] += pj;
            }
        }
    }
    p
}

fn buffer_of(lengths: &[usize]) -> ReplayBuffer {
    let mut b = ReplayBuffer::new(lengths.len(), PostProcess::Raw);
    for (e, &len) in lengths.iter().enumerate() {
        let vals: Vec<i32> = (0..len as i32).map(|i| i + 1000 * e as i32).collect();
        b.push(&traj_1d(&vals));
    }
    b
}

#[test]
fn analytic_gaps_match_enumeration() {
    for lengths in [vec![5], vec![2, 3, 9], vec![4, 4, 7, 12, 2]] {
        let b = buffer_of(&lengths);
        let dist = b.suffix_length_distribution();
        for (k, want) in enumerate_gaps(&lengths).iter().enumerate() {
            assert!((analytic_u_k(&dist, k + 1) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn length_five_values() {
    let exact = enumerate_gaps(&[5]);
    let want = [25.0 / 48.0, 13.0 / 48.0, 7.0 / 48.0, 3.0 / 48.0];
    for (a, b) in exact.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn empirical_gaps_converge() {
    let lengths = [3, 6, 10];
    let b = buffer_of(&lengths);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hist = b.gap_histogram(400_000, &mut rng).unwrap();
    for (got, want) in hist.iter().zip(enumerate_gaps(&lengths)) {
        assert!((got - want).abs() < 0.004, "{got} vs {want}");
    }
    for w in hist.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn fifo_eviction_and_skips() {
    let mut b = ReplayBuffer::new(2, PostProcess::Trim { tol: 0.0 });
    assert!(!b.push(&traj_1d(&[4, 4, 4])));
    assert_eq!(b.skipped(), 1);
    for first in [1, 2, 3] {
        assert!(b.push(&traj_1d(&[first, 9])));
    }
    assert_eq!(b.len(), 2);
    assert_eq!(b.get(0).unwrap().states[0], vec![2.0]);
    assert_eq!(b.inserted(), 3);
}

#[test]
fn empty_buffer_sampling_errors() {
    let b = ReplayBuffer::new(4, PostProcess::Raw);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(b.sample_gcsl(3, &mut rng).is_err());
    assert!(b.sample_trail(3, &mut rng).is_err());
    assert!(b.sample_pairs(3, &mut rng).is_err());
}

fn trajectory_strategy() -> impl Strategy<Value = Trajectory> {
    // small alphabet so duplicates (and full collapse) are common
    proptest::collection::vec(0i32..3, 1..40).prop_map(|v| traj_1d(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn trim_properties(t in trajectory_strategy()) {
        let once = trim(&t, 0.0);
        prop_assert_eq!(trim(&once, 0.0), once.clone());
        prop_assert!(!once.has_adjacent_duplicates(0.0));
        prop_assert_eq!(once.actions.len() + 1, once.states.len());
        prop_assert_eq!(&once.states[0], &t.states[0]);
        prop_assert_eq!(once.last(), t.last());
        // every kept transition is one of the original transitions
        for (k, a) in once.actions.iter().enumerate() {
            let Action::Discrete(idx) = a else { unreachable!() };
            prop_assert_eq!(&t.states[idx + 1], &once.states[k + 1]);
            prop_assert!(t.states[*idx] != t.states[idx + 1]);
        }
    }

    #[test]
    fn trim_is_noop_without_duplicates(n in 1usize..40) {
        let t = traj_1d(&(0..n as i32).collect::<Vec<_>>());
        prop_assert_eq!(trim(&t, 0.0), t);
    }

    #[test]
    fn samples_respect_index_ranges(lengths in proptest::collection::vec(2usize..15, 1..6), seed in any::<u64>()) {
        let b = buffer_of(&lengths);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in b.sample_gcsl(64, &mut rng).unwrap() {
            let (i, j) = (s.s[0] as i64 % 1000, s.g[0] as i64 % 1000);
            prop_assert!(i < j);
            prop_assert_eq!((j - i) as usize, s.gap);
            let Action::Discrete(a) = s.a else { unreachable!() };
            prop_assert_eq!(*a as i64, i);
        }
        for s in b.sample_trail(64, &mut rng).unwrap() {
            let (i, j, k) = (s.s[0], s.g[0], s.m[0]);
            prop_assert!(i < j && i <= k && k <= j);
            prop_assert!(((k - i) / (j - i) - s.t).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&s.t));
        }
        for p in b.sample_pairs(64, &mut rng).unwrap() {
            prop_assert!(p.s[0] < p.g[0]);
            prop_assert_eq!((p.s[0] / 1000.0).floor() as i64, (p.g[0] / 1000.0).floor() as i64);
        }
    }

    #[test]
    fn analytic_distribution_sums_to_one(lengths in proptest::collection::vec(2usize..30, 1..10)) {
        let b = buffer_of(&lengths);
        let dist = b.suffix_length_distribution();
        let max = *lengths.iter().max().unwrap();
        let total: f64 = (1..max).map(|k| analytic_u_k(&dist, k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trail_core::env::{Action, EnvConfig};
use trail_core::gcsl::Policy;
use trail_core::nn::{Adam, Checkpoint, DenseNet, HeadKind};
use trail_core::replay::{PostProcess, ReplayBuffer, Trajectory};

fn fixed_logits_policy(bias: [f64; 4]) -> Policy {
    // zero weights, so the output equals the last layer's biases
    let sizes = [4, 2, 2, 4];
    let mut net = DenseNet::zeros(&sizes).unwrap();
    let n = net.num_params();
    net.params_mut()[n - 4..].copy_from_slice(&bias);
    Policy::from_checkpoint(Checkpoint {
        head: HeadKind::Categorical { n_actions: 4 },
        net,
    })
    .unwrap()
}

#[test]
fn greedy_picks_argmax_with_low_index_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = [0.0, 0.0];
    let p = fixed_logits_policy([0.1, 2.0, -1.0, 0.0]);
    assert_eq!(p.act(&s, &s, &mut rng, true).unwrap(), Action::Discrete(1));
    let p = fixed_logits_policy([1.0, 3.0, 3.0, 0.0]);
    assert_eq!(p.act(&s, &s, &mut rng, true).unwrap(), Action::Discrete(1));
}

#[test]
fn one_step_dataset_is_memorized() {
    // every pair in a deterministic grid, labelled with the planner's first move
    let env = EnvConfig::Rooms {
        rooms_x: 1,
        rooms_y: 1,
        room_size: 4,
        layout_seed: 0,
        horizon: 10,
    }
    .build(0)
    .unwrap();
    let grid = env.as_grid().unwrap();
    let mut buffer = ReplayBuffer::new(1000, PostProcess::Raw);
    let free = grid.free_cells().to_vec();
    for &c in &free {
        for a in 0..4 {
            let n = grid.layout().neighbor(c, a);
            if n != c {
                buffer.push(&Trajectory::new(vec![grid.observe(c), grid.observe(n)], vec![Action::Discrete(a)]));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut policy = Policy::new(&env.spec(), 64, 1, &mut rng).unwrap();
    let mut opt = Adam::new(policy.net().num_params(), 3e-3);
    for _ in 0..3000 {
        let batch = buffer.sample_gcsl(64, &mut rng).unwrap();
        policy.train_step(&batch, &mut opt).unwrap();
    }
    let mut hits = 0;
    let mut total = 0;
    for t in buffer.episodes() {
        let a = policy.act(&t.states[0], &t.states[1], &mut rng, true).unwrap();
        hits += usize::from(a == t.actions[0]);
        total += 1;
    }
    assert!(hits as f64 >= 0.99 * total as f64, "{hits}/{total}");
}

#[test]
fn continuous_greedy_is_the_single_mean() {
    let env = EnvConfig::continuous_rooms(0.0).build(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policy = Policy::new(&env.spec(), 8, 1, &mut rng).unwrap();
    let (s, g) = ([0.1, 0.2], [-0.3, 0.4]);
    let out = policy.output(&s, &g).unwrap();
    let Action::Continuous(a) = policy.act(&s, &g, &mut rng, true).unwrap() else {
        panic!("continuous head")
    };
    assert_eq!(a, vec![out[1], out[2]]);
}

#[test]
fn mismatched_action_is_an_error() {
    let env = EnvConfig::nine_rooms().build(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy = Policy::new(&env.spec(), 8, 1, &mut rng).unwrap();
    let mut b = ReplayBuffer::new(2, PostProcess::Raw);
    b.push(&Trajectory::new(vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![Action::Continuous(vec![0.1, 0.0])]));
    let batch = b.sample_gcsl(2, &mut rng).unwrap();
    assert!(policy.loss_and_grad(&batch).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_invariant_to_logit_shift(l in proptest::array::uniform4(-5.0f64..5.0), c in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [0.0, 0.0];
        let a = fixed_logits_policy(l).act(&s, &s, &mut rng, true).unwrap();
        let shifted = [l[0] + c, l[1] + c, l[2] + c, l[3] + c];
        let b = fixed_logits_policy(shifted).act(&s, &s, &mut rng, true).unwrap();
        // a shift can only matter through rounding when two logits nearly tie
        let mut sorted = l;
        sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn batch_and_single_acting_agree(seed in any::<u64>()) {
        let env = EnvConfig::nine_rooms().build(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new(&env.spec(), 8, 1, &mut rng).unwrap();
        let s: Vec<[f64; 2]> = (0..5).map(|i| [i as f64 * 0.1, -0.2]).collect();
        let g = [0.4, 0.4];
        let refs: Vec<&[f64]> = s.iter().map(|x| x.as_slice()).collect();
        let gs: Vec<&[f64]> = vec![&g; 5];
        let batch = policy.act_batch(&refs, &gs, &mut rng, true).unwrap();
        for (x, a) in s.iter().zip(batch) {
            prop_assert_eq!(policy.act(x, &g, &mut rng, true).unwrap(), a);
        }
    }
}

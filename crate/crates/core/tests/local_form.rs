use nlscanon::backend::BackendSpec;
use nlscanon::chart::{ChartConfig, ChartContext};
use nlscanon::phase_space::{j_matrix, ModeLayout};
use nlscanon::sampling::{direction, perp_sample, rng, tagged_sample};

#[test]
fn block_elimination_matches_dense_solve() {
    let l = ModeLayout::new(4, &[1, -2]).unwrap();
    let chart = ChartContext::new(BackendSpec::toy().build(&l).unwrap(), &ChartConfig::default()).unwrap();
    for seed in 0..4 {
        let zs = tagged_sample(&l, &mut rng(seed, 1), 0.1);
        let z = &zs + perp_sample(&l, &mut rng(seed, 2), 1, 0.5 * chart.delta);
        let local = chart.patch(&zs).unwrap().local_l(&z).unwrap();
        let rhs = direction(&l, &mut rng(seed, 3), 0);
        for tau in [0.0, 0.3, 1.0] {
            let dense = -j_matrix(l.dim()) + local.matrix() * tau;
            let want = dense.lu().solve(&rhs).unwrap();
            let got = local.solve(tau, &rhs).unwrap();
            assert!((got - &want).norm() < 1e-12 * (1.0 + want.norm()), "seed {seed} tau {tau}");
        }
    }
}

#[path = "support/oracle.rs"]
mod oracle;

use matrix_arena::equilibrium::{dominant_strategies, pure_nash, DEFAULT_TOLERANCE};
use matrix_arena::game::{GameSpec, Objective, PayoffMatrix, StrategyId};
use matrix_arena::metrics::{
    cross_language_inconsistency_raw, internal_variability_raw, variability_over_rounds_raw, CellValue, ResultTensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_tensor(y: &oracle::Dense) -> ResultTensor {
    let mut t = ResultTensor::new("m", "g", y[0][0][0].len() as u32);
    for (a, pa) in y.iter().enumerate() {
        for (b, pb) in pa.iter().enumerate() {
            for (c, pc) in pb.iter().enumerate() {
                for (d, pd) in pc.iter().enumerate() {
                    for (r, v) in pd.iter().enumerate() {
                        let key = (format!("lang{a}"), format!("combo{b}"), format!("rk{c}"));
                        t.insert(&key.0, &key.1, &key.2, d as u32 + 1, r as u32, CellValue::uniform(*v));
                    }
                }
            }
        }
    }
    t
}

fn random_dense(rng: &mut ChaCha8Rng) -> oracle::Dense {
    loop {
        let (na, nb, nc, nd, nr) =
            (rng.random_range(2..=3), rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(2..=4), rng.random_range(1..=2));
        if na * nb * nc * nd * nr > 32 {
            continue;
        }
        return (0..na)
            .map(|_| {
                (0..nb)
                    .map(|_| (0..nc).map(|_| (0..nd).map(|_| (0..nr).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()).collect())
                    .collect()
            })
            .collect();
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let y = random_dense(&mut rng);
        let t = to_tensor(&y);
        assert!((internal_variability_raw(&t).unwrap() - oracle::iv(&y)).abs() <= 1e-12);
        assert!((cross_language_inconsistency_raw(&t).unwrap() - oracle::ci(&y)).abs() <= 1e-12);
        assert!((variability_over_rounds_raw(&t).unwrap() - oracle::vr(&y)).abs() <= 1e-12);
    }
}

fn sid(i: usize) -> StrategyId {
    StrategyId::from_index(i).unwrap()
}

#[test]
fn equilibria_match_deviation_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..2000 {
        // small integer payoffs make ties common
        let mut cells = [[(0.0, 0.0); 2]; 2];
        for row in cells.iter_mut() {
            for cell in row.iter_mut() {
                *cell = (rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64);
            }
        }
        let minimize = i % 2 == 1;
        let objective = if minimize { Objective::Minimize } else { Objective::Maximize };
        let g = GameSpec::new("g", "custom", ["A", "B"], PayoffMatrix::new(cells), 1, objective).unwrap();
        let mut got: Vec<(usize, usize)> = pure_nash(&g).iter().map(|p| (p.p1.index(), p.p2.index())).collect();
        got.sort();
        assert_eq!(got, oracle::pure_nash(&cells, minimize, DEFAULT_TOLERANCE), "{cells:?} {objective:?}");
        let (d1, d2) = dominant_strategies(&g);
        let want = oracle::dominant(&cells, minimize, DEFAULT_TOLERANCE);
        assert_eq!([d1, d2], want.map(|o| o.map(sid)), "{cells:?} {objective:?}");
    }
}

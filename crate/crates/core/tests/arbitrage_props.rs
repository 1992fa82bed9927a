use proptest::prelude::*;
use zll_core::arbitrage::{arb_signal, find_equilibrium_trade};
use zll_core::engine::{execute, quote_borrow, quote_lend};
use zll_core::pricing::bs_call;
use zll_core::{MarketParams, PoolState, Side};

fn market() -> impl Strategy<Value = (PoolState, MarketParams, f64, f64)> {
    (
        5.0..60.0f64,
        500.0..8000.0f64,
        0.2..2.0f64,
        0.0..1.0f64,
        0.2..1.5f64,
        0.0..0.5f64,
        0.0..0.5f64,
        0.02..1.0f64,
    )
        .prop_map(|(q_c, spot, ratio, alpha, sigma, s_bid, s_ask, tau)| {
            (
                PoolState::new(q_c, q_c * spot * ratio).unwrap(),
                MarketParams::new(alpha, sigma, s_bid, s_ask, 1.0).unwrap(),
                spot,
                tau,
            )
        })
}

/// Edge recomputed from the parity formula with no shared code beyond the
/// call price.
fn oracle_edge(q_c: f64, k: f64, params: &MarketParams, spot: f64, tau: f64, side: Side) -> f64 {
    let strike = k / (q_c * q_c);
    let tv = bs_call(spot, strike, params.sigma, tau).unwrap() - spot + strike;
    let x = params.alpha * 0.4 * spot * params.sigma * tau.sqrt();
    match side {
        Side::Borrow => tv - x * (1.0 + params.s_ask),
        Side::Lend => x * (1.0 - params.s_bid) - tv,
    }
}

fn with_tau(mut pool: PoolState, params: &MarketParams, tau: f64) -> PoolState {
    pool.now_years = params.term_years - tau;
    pool
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn signals_are_mutually_exclusive((pool, params, spot, tau) in market()) {
        let b = arb_signal(&pool, &params, spot, tau, Side::Borrow).unwrap();
        let l = arb_signal(&pool, &params, spot, tau, Side::Lend).unwrap();
        prop_assert!(!(b.active && l.active));
    }

    #[test]
    fn equilibrium_matches_grid_search((pool, params, spot, tau) in market(), borrow in any::<bool>()) {
        let side = if borrow { Side::Borrow } else { Side::Lend };
        let pool = with_tau(pool, &params, tau);
        prop_assume!(arb_signal(&pool, &params, spot, tau, side).unwrap().active);
        let Ok(t) = find_equilibrium_trade(&pool, &params, spot, tau, side) else { return Ok(()) };
        prop_assume!(!t.constrained);

        let post = |d: f64| match side {
            Side::Borrow => pool.q_c + d,
            Side::Lend => pool.q_c - d,
        };
        let edge = |d: f64| oracle_edge(post(d), pool.k, &params, spot, tau, side);
        // Coarse scan for the first non-positive edge, then a 1e-6 q_c scan
        // inside that cell.
        let coarse = 1e-3 * pool.q_c;
        let limit = match side { Side::Borrow => 1e4 * pool.q_c, Side::Lend => pool.q_c };
        let mut hi = coarse;
        while edge(hi) > 0.0 && hi < limit {
            hi += coarse;
        }
        let fine = 1e-6 * pool.q_c;
        let mut d = (hi - coarse).max(0.0);
        while edge(d) > 0.0 && d < hi {
            d += fine;
        }
        prop_assert!((t.delta_q_c - d).abs() <= 2.0 * fine, "solver {} grid {}", t.delta_q_c, d);
        prop_assert!(t.edge_after <= 0.0);
        prop_assert!(t.edge_after.abs() <= 1e-6 * spot, "edge after {}", t.edge_after);
    }

    #[test]
    fn trading_moves_the_strike_the_right_way((pool, params, spot, tau) in market(), borrow in any::<bool>()) {
        let side = if borrow { Side::Borrow } else { Side::Lend };
        let mut pool = with_tau(pool, &params, tau);
        prop_assume!(arb_signal(&pool, &params, spot, tau, side).unwrap().active);
        let Ok(t) = find_equilibrium_trade(&pool, &params, spot, tau, side) else { return Ok(()) };
        let before = pool.marginal_strike();
        let q = match side {
            Side::Borrow => quote_borrow(&pool, &params, t.delta_q_c, spot).unwrap(),
            Side::Lend => quote_lend(&pool, &params, t.delta_q_c, spot).unwrap(),
        };
        execute(&mut pool, &q).unwrap();
        let after = pool.marginal_strike();
        match side {
            Side::Borrow => prop_assert!(after < before),
            Side::Lend => prop_assert!(after > before),
        }
        prop_assert!(!arb_signal(&pool, &params, spot, tau, side).unwrap().active);
        // Closing one side with spreads in place never opens the other.
        let other = if borrow { Side::Lend } else { Side::Borrow };
        prop_assert!(!arb_signal(&pool, &params, spot, tau, other).unwrap().active);
    }

    #[test]
    fn edge_signs_match_the_signal((pool, params, spot, tau) in market()) {
        for side in [Side::Borrow, Side::Lend] {
            let s = arb_signal(&pool, &params, spot, tau, side).unwrap();
            prop_assert_eq!(s.active, s.edge > 0.0);
            let o = oracle_edge(pool.q_c, pool.k, &params, spot, tau, side);
            prop_assert!((s.edge - o).abs() <= 1e-8 * spot);
        }
    }
}

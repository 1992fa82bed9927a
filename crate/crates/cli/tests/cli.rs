use std::path::Path;
use std::process::{Command, Output};

use zll_core::engine::SettlementReport;
use zll_core::fixture::TermTables;
use zll_core::Quote;

fn zll(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zll"))
        .args(args)
        .env_remove("ZLL_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn borrow_quote_on_reference_market() {
    let o = zll(&["quote", "--side", "borrow", "--qc", "1", "--spot", "4000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("cash received   2,426 USDC"), "{text}");
    assert!(text.contains("repayment       3,226 USDC"), "{text}");

    let o = zll(&["quote", "--side", "borrow", "--qc", "1", "--spot", "4000", "--json"]);
    let q: Quote = serde_json::from_slice(&o.stdout).unwrap();
    assert!((q.cash_leg - 2426.0).abs() < 1.0);
    assert!((q.delta_q_b - 3226.0).abs() < 1.0);
}

#[test]
fn lend_quote_by_cash() {
    let o = zll(&["quote", "--side", "lend", "--cash", "1000", "--spot", "4000", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let q: Quote = serde_json::from_slice(&o.stdout).unwrap();
    assert!((q.delta_q_c - 0.388).abs() < 1e-3, "{}", q.delta_q_c);
    assert!((q.delta_q_b - 1310.0).abs() < 1.0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(zll(&["quote", "--side", "borrow", "--qc", "1"]).status.code(), Some(2));
    assert_eq!(
        zll(&["quote", "--side", "sideways", "--qc", "1", "--spot", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        zll(&["quote", "--side", "borrow", "--cash", "5", "--spot", "4000"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        zll(&["quote", "--side", "lend", "--spot", "4000"]).status.code(),
        Some(2)
    );
    assert_eq!(
        zll(&["quote", "--side", "lend", "--qc", "1", "--cash", "5", "--spot", "4000"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(zll(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(zll(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_1() {
    let o = zll(&["quote", "--side", "lend", "--qc", "30", "--spot", "4000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert_eq!(
        zll(&["quote", "--side", "borrow", "--qc", "1", "--spot=-4"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn params_come_from_zll_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("params.json");
    std::fs::write(
        &p,
        r#"{"alpha":0.0,"sigma":1.0,"s_bid":0.0,"s_ask":0.0,"term_years":1.0}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_zll"))
        .args(["quote", "--side", "borrow", "--qc", "1", "--spot", "4000", "--json"])
        .env("ZLL_CONFIG", &p)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let q: Quote = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(q.oblivious_put, 0.0);
    assert_eq!(q.cash_leg, q.delta_q_b);
}

#[test]
fn tables_match_the_reference_rows() {
    let o = zll(&["tables", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let t: TermTables = serde_json::from_slice(&o.stdout).unwrap();
    let cash: Vec<f64> = t
        .borrow
        .iter()
        .map(|r| r.quote.as_ref().unwrap().cash_leg.round())
        .collect();
    assert_eq!(cash, [2426.0, 10286.0, 17000.0, 24000.0]);
    let repay = t
        .lend
        .iter()
        .find(|r| r.input == 10_000.0)
        .unwrap()
        .quote
        .as_ref()
        .unwrap()
        .delta_q_b;
    assert!((repay - 12706.0).abs() < 1.0);
    assert!(stdout(&zll(&["tables"])).contains("Borrowers"));
}

#[test]
fn empty_fixture_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.json");
    std::fs::write(&p, "").unwrap();
    assert_eq!(
        zll(&["tables", "--fixture", p.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn lp_payoff_grid() {
    let o = zll(&["payoff", "--figure", "lp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s_t,value");
    assert!(lines.contains(&"0,-925"));
    assert!(lines.contains(&"2000,75"));
    assert!(stdout(&zll(&["payoff", "--figure", "borrower"]))
        .lines()
        .any(|l| l == "0,-2150"));
}

fn write_backtest(dir: &Path, price_file: &str) -> std::path::PathBuf {
    let t0 = chrono::DateTime::parse_from_rfc3339("2021-01-01T00:00:00Z").unwrap();
    let mut csv = String::from("timestamp,price\n");
    for d in 0..=100 {
        let ts = t0 + chrono::Duration::days(d);
        let price = 2000.0 * (1.0 + 0.1 * (d as f64 / 7.0).sin());
        csv.push_str(&format!("{},{price}\n", ts.to_rfc3339()));
    }
    std::fs::write(dir.join("prices.csv"), csv).unwrap();
    let config = format!(
        r#"{{"params":{{"alpha":0.5,"sigma":1.0,"s_bid":0.5,"s_ask":0.1,"term_years":1.0}},
            "initial_q_c":30,"initial_q_b":40000,"price_file":"{price_file}",
            "start":"2021-01-01T00:00:00Z","term_days":90,"sample_interval":86400}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn backtest_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_backtest(dir.path(), "prices.csv");
    let out = dir.path().join("out");
    let o = zll(&["backtest", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").is_file());
    assert!(out.join("series.csv").is_file());
    assert!(stdout(&o).contains("outperformance"));
}

#[test]
fn backtest_with_missing_prices_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_backtest(dir.path(), "nowhere.csv");
    let o = zll(&[
        "backtest",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn settle_an_expired_pool() {
    use zll_core::engine::{execute, quote_borrow};
    use zll_core::fixture::ReferenceMarket;

    let m = ReferenceMarket::bundled();
    let mut pool = m.pool().unwrap();
    let q = quote_borrow(&pool, &m.params, 1.0, 4000.0).unwrap();
    execute(&mut pool, &q).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.json");
    std::fs::write(&path, serde_json::to_string(&pool).unwrap()).unwrap();
    assert_eq!(
        zll(&["settle", "--pool", path.to_str().unwrap(), "--spot", "5000"])
            .status
            .code(),
        Some(1)
    );

    pool.now_years = 1.0;
    std::fs::write(&path, serde_json::to_string(&pool).unwrap()).unwrap();
    let o = zll(&["settle", "--pool", path.to_str().unwrap(), "--spot", "5000", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let rep: SettlementReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep.flows[0].settled_in_cash);
    assert_eq!(rep.flows[0].pool_cash, q.delta_q_b);
    let text = stdout(&zll(&["settle", "--pool", path.to_str().unwrap(), "--spot", "1000"]));
    assert!(text.contains("walked away"), "{text}");
}

use std::process::{Command, Output};

fn ecc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecc"))
        .args(args)
        .env_remove("ECC_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn enumerate_single_node() {
    let o = ecc(&["enumerate", "--nodes", "1"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0].join(","), "n,theta,coverage,chains,r_pct,l_ms,e_mj,time_s");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][3], "8");
    assert_eq!(rows[1][4].parse::<f64>().unwrap(), 100.0);
}

#[test]
fn json_and_csv_carry_the_same_values() {
    let base = ["analyze", "--nodes", "4", "--theta", "1e-4"];
    let csv = ecc(&base);
    let json = ecc(&[&base[..], &["--format", "json"]].concat());
    assert!(csv.status.success() && json.status.success());
    let rows = csv_rows(&stdout(&csv));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    let obj = &parsed[0];
    for (k, v) in rows[0].iter().zip(&rows[1]) {
        if k == "time_s" {
            continue;
        }
        let j = &obj[k.as_str()];
        assert_eq!(j.as_f64().unwrap(), v.parse::<f64>().unwrap(), "{k}");
    }
}

#[test]
fn analyze_writes_pdf_and_chain_dump() {
    let dir = std::env::temp_dir().join(format!("ecc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let pdf = dir.join("pdf.csv");
    let dump = dir.join("chains.txt");
    let o = ecc(&[
        "analyze",
        "--nodes",
        "3",
        "--theta",
        "1e-4",
        "--pdf-out",
        pdf.to_str().unwrap(),
        "--dump-chains",
        dump.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    let chains: usize = rows[1][3].parse().unwrap();
    let dump_text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(dump_text.lines().count(), chains);
    assert!(dump_text.lines().all(|l| l.starts_with("p=") && l.ends_with(']')));
    let pdf_text = std::fs::read_to_string(&pdf).unwrap();
    assert!(pdf_text.starts_with("t_ms,p\n"));
    let mass: f64 = csv_rows(&pdf_text)[1..]
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum();
    let coverage: f64 = rows[1][2].parse().unwrap();
    let r_pct: f64 = rows[1][4].parse().unwrap();
    assert!((mass - 3.0 * coverage * r_pct / 100.0).abs() < 1e-9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_min_be_raises_delivery_ratio() {
    let o = ecc(&[
        "sweep", "--param", "mac_min_be", "--from", "2", "--to", "4", "--nodes", "8", "--theta",
        "1e-4", "--set", "mac_max_be=5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0][0], "param");
    assert_eq!(rows.len(), 4);
    let r: Vec<f64> = rows[1..].iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
}

#[test]
fn debug_lambda_prints_first_window() {
    let o = ecc(&["debug", "lambda", "1", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "{0, 20, 40, 60, 80, 100, 120, 140}");
}

#[test]
fn exit_codes() {
    assert_eq!(ecc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ecc(&["analyze", "--nodes", "x"]).status.code(), Some(2));
    assert_eq!(ecc(&["analyze", "--nodes", "0"]).status.code(), Some(1));
    assert_eq!(ecc(&["analyze", "--nodes", "2", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(ecc(&["debug", "lambda", "9", "1"]).status.code(), Some(1));
}

#[test]
fn compare_passes_where_the_engine_is_exact() {
    let args = [
        "compare", "--nodes", "2", "--min-be", "2", "--max-be", "3", "--max-backoffs", "1",
        "--max-retries", "1", "--theta", "0", "--runs", "200000",
    ];
    let o = ecc(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let strict = ecc(&[&args[..], &["--sigma", "0"]].concat());
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn workers_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_ecc"))
        .args(["analyze", "--nodes", "6", "--theta", "1e-4"])
        .env("ECC_WORKERS", "3")
        .output()
        .unwrap();
    let reference = ecc(&["analyze", "--nodes", "6", "--theta", "1e-4", "--workers", "1"]);
    let strip = |o: &Output| {
        csv_rows(&stdout(o))[1][..7].join(",")
    };
    assert!(o.status.success());
    assert_eq!(strip(&o), strip(&reference));
    let bad = Command::new(env!("CARGO_BIN_EXE_ecc"))
        .args(["analyze", "--nodes", "6"])
        .env("ECC_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_histogram_sums_to_runs() {
    let path = std::env::temp_dir().join(format!("ecc-hist-{}.csv", std::process::id()));
    let o = ecc(&[
        "simulate", "--nodes", "2", "--runs", "5000", "--seed", "3", "--histogram",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let rows = csv_rows(&text);
    assert_eq!(rows[0].join(","), "events,count,p");
    let total: u64 = rows[1..].iter().map(|r| r[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 5000);
    assert!(rows[1..].iter().all(|r| r[0].starts_with('S') || r[0].starts_with('F')));
}

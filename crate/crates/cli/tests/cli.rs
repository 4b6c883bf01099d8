use std::path::Path;
use std::process::{Command, Output};

use cocyclo::{builtin, load_rule, FourierMatrix};

fn cocyclo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocyclo"))
        .args(args)
        .env_remove("COCYCLO_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in output"))
        .to_string()
}

#[test]
fn validate_builtin_fibonacci() {
    let o = cocyclo(&["rule", "validate", "builtin:fibonacci"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(field(&text, "primitive"), "true");
    let lambda: f64 = field(&text, "lambda_pf").parse().unwrap();
    assert!((lambda - 1.618034).abs() < 1e-6);
    assert!(text.starts_with("# cocyclo "));
    assert!(text.contains("# seed="));
}

#[test]
fn table1_matches_published_values() {
    const PUBLISHED: [f64; 12] = [
        0.693, 0.478, 0.379, 0.334, 0.302, 0.274, 0.252, 0.235, 0.220, 0.208, 0.198, 0.189,
    ];
    let o = cocyclo(&["reproduce", "table1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = body(&text);
    assert_eq!(rows[0], "N,mN,err");
    assert_eq!(rows.len(), 13);
    for (row, p) in rows[1..].iter().zip(PUBLISHED) {
        let m: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((m - p).abs() < 1e-3, "{row}");
    }
}

#[test]
fn verdict_exit_codes() {
    let o = cocyclo(&["verdict", "builtin:abcd"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "conclusion"), "singular-diffraction");
    let threshold: f64 = field(&text, "threshold").parse().unwrap();
    assert!((threshold - 0.34657).abs() < 1e-5);

    let dir = tempfile::tempdir().unwrap();
    let twin = dir.path().join("twin.json");
    std::fs::write(&twin, r#"{"name":"twin","dimension":1,"symbolic":{"images":["ab","ab"]}}"#).unwrap();
    let o = cocyclo(&["verdict", twin.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&stdout(&o), "conclusion"), "inapplicable");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"x","dimension":"one"}"#).unwrap();
    let o = cocyclo(&["rule", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension"));
}

#[test]
fn export_roundtrip_keeps_fourier_matrix() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fibonacci", "abcd", "block-fig1", "frank-robinson", "staggered(2,2,[sqrt(2)])"] {
        let path = dir.path().join("rule.json");
        let o = cocyclo(&["catalogue", "export", name, "-o", path.to_str().unwrap()]);
        assert!(o.status.success(), "{name}");
        let loaded = load_rule(Path::new(&path)).unwrap();
        let original = builtin(name).unwrap();
        assert!(
            FourierMatrix::from_rule(&loaded).same_entries(&original.fourier_matrix()),
            "{name}"
        );
    }
}

#[test]
fn bodies_do_not_depend_on_worker_count() {
    let runs: Vec<Vec<&[&str]>> = vec![
        vec![&["lyapunov", "birkhoff", "builtin:abcd", "--reduced", "--samples", "8", "--iters", "300"]],
        vec![&["correlate", "builtin:fibonacci", "--level", "10", "--range", "8"]],
        vec![&["lyapunov", "bound", "builtin:block-fig1", "--max-n", "2"]],
    ];
    for args in runs.into_iter().flatten() {
        let mut one = vec!["--workers", "1"];
        one.extend_from_slice(args);
        let mut four = vec!["--workers", "4"];
        four.extend_from_slice(args);
        let a = cocyclo(&one);
        let b = cocyclo(&four);
        assert!(a.status.success() && b.status.success(), "{args:?}");
        assert_eq!(stdout(&a), stdout(&b), "{args:?}");
    }
}

#[test]
fn seed_flag_changes_samples() {
    let args = ["lyapunov", "birkhoff", "builtin:abcd", "--reduced", "--samples", "2", "--iters", "50"];
    let a = stdout(&cocyclo(&args));
    let mut seeded = args.to_vec();
    seeded.extend_from_slice(&["--seed", "7"]);
    let b = stdout(&cocyclo(&seeded));
    assert_ne!(body(&a), body(&b));
    assert!(b.contains("# seed=7"));
}

#[test]
fn correlation_and_riesz_outputs() {
    let o = cocyclo(&["correlate", "builtin:fibonacci", "--level", "12", "--range", "20", "--check"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(body(&text)[0] == "i,j,z-coeffs,z-float,nu");
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# max_residual="))
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-2);

    let o = cocyclo(&["riesz", "staggered:0.5", "--depth", "3", "--grid", "20"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = body(&text);
    assert_eq!(rows[0], "k1,k2,density,F");
    assert_eq!(rows.len(), 1 + 21 * 21);
    let last: f64 = rows[rows.len() - 1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((last - 1.0).abs() < 0.05);

    let o = cocyclo(&["riesz", "fejer:2", "--depth", "12", "--grid", "20"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn fejer_reproduction_is_exact() {
    let o = cocyclo(&["reproduce", "fejer", "--m", "2", "--depth", "3"]);
    let text = stdout(&o);
    let rows = body(&text);
    assert_eq!(rows.len(), 1 + 15);
    assert!(rows.contains(&"-7,0.125,1/8"));
    assert!(rows.contains(&"0,1,1"));
}

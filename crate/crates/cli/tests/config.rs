use subdiff_cli::config::SCHEMES;
use subdiff_cli::ExperimentConfig;

#[test]
fn defaults_validate() {
    let c = ExperimentConfig::default();
    c.validate().unwrap();
    assert_eq!(c.alphas(), vec![0.5]);
    assert_eq!(c.resolution(), (100, 200));
}

#[test]
fn dotted_keys_and_tables_agree() {
    let a = ExperimentConfig::from_str("problem.alpha = 0.7\nscheme.names = [\"fxp-b-split\"]\n").unwrap();
    let b = ExperimentConfig::from_str("[problem]\nalpha = 0.7\n[scheme]\nnames = [\"fxp-b-split\"]\n").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.problem.alpha, 0.7);
}

#[test]
fn errors_name_the_field() {
    let cases = [
        ("truth.q = \"x +\"", "truth.q"),
        ("problem.bogus = 1", "bogus"),
        ("problem.alpha = 1.5", "problem.alpha"),
        ("problem.bc_left = \"sticky\"", "problem.bc_left"),
        ("truth.f = \"x\"", "truth.f"),
        ("scheme.names = [\"fxp-c\"]", "scheme.names"),
        ("scheme.names = [\"gauss-seidel\"]", "scheme.names"),
        ("noise.deltas = [1.5]", "noise.deltas"),
        ("noise.seeds = []", "noise.seeds"),
        ("problem.intervals = 2", "problem.intervals"),
    ];
    for (src, field) in cases {
        let e = ExperimentConfig::from_str(src).unwrap_err();
        assert!(e.to_string().contains(field), "{src}: {e}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn echo_roundtrips() {
    let c = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_str(&c.echo()).unwrap(), c);
}

#[test]
fn half_resolution_halves_the_grid() {
    let c = ExperimentConfig::from_str("problem.half_resolution = true").unwrap();
    assert_eq!(c.resolution(), (50, 100));
}

#[test]
fn shipped_configs_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap();
            assert!(c.scheme.names.iter().all(|s| SCHEMES.contains(&s.as_str())));
            n += 1;
        }
    }
    assert!(n >= 2);
}

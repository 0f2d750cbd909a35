use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand_distr::{Distribution, StandardNormal};
use xqgram::cli::output::{decode, PartialRecord, PeakRecord, PortmanteauRecord, RhoRecord};
use xqgram::cli::Format;
use xqgram::rng::substream;
use xqgram::selfnorm::CriticalValueTable;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xqgram"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("XQGRAM_CRITVAL_TABLE").output().unwrap()
}

fn panel(dir: &Path, t: usize) -> PathBuf {
    let mut rng = substream(3, &[]);
    let mut text = String::from("date,ret,var,vix\n");
    let mut prev = 0.0f64;
    for i in 0..t {
        let v: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let r = (0.3 + 0.7 * prev * prev).sqrt() * e;
        text.push_str(&format!("{i},{r},{v},{z}\n"));
        prev = v;
    }
    let p = dir.join("panel.csv");
    fs::write(&p, text).unwrap();
    p
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn ending<'a>(files: &'a [PathBuf], suffix: &str) -> &'a PathBuf {
    files.iter().find(|f| f.to_string_lossy().ends_with(suffix)).unwrap()
}

#[test]
fn cq_outputs_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = panel(dir.path(), 400);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = run(&[
            "cq", "--input", input.to_str().unwrap(), "--x1", "ret", "--x2", "var",
            "--alpha1", "0.1,0.5", "--alpha2", "0.1", "--max-lag", "5", "--B", "200",
            "--seed", "9", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("peak_lag="));
    }
    let fa = files_in(&out_a);
    let fb = files_in(&out_b);
    assert_eq!(fa.len(), 4);
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    let rho: Vec<RhoRecord> = decode(&fs::read(ending(&fa, "-rho.csv")).unwrap(), Format::Csv).unwrap();
    assert_eq!(rho.len(), 2 * 5);
    for r in &rho {
        assert!(r.rho_hat.abs() <= 1.0);
        assert!(r.ci_low <= r.ci_high);
        assert!(r.band_low <= r.band_high);
    }
    // re-encoding the parsed records reproduces the file
    let bytes = fs::read(ending(&fa, "-rho.csv")).unwrap();
    assert_eq!(xqgram::cli::output::encode(&rho, Format::Csv), bytes);
    let port: Vec<PortmanteauRecord> = decode(&fs::read(ending(&fa, "-portmanteau.csv")).unwrap(), Format::Csv).unwrap();
    assert_eq!(port.len(), 2 * 5);
    let peaks: Vec<PeakRecord> = decode(&fs::read(ending(&fa, "-peaks.csv")).unwrap(), Format::Csv).unwrap();
    assert_eq!(peaks.len(), 2);
    // the strong lag-1 volatility link shows at the lower tail
    assert_eq!(peaks[0].peak_lag, 1);
}

#[test]
fn json_mirrors_csv_and_config_changes_name() {
    let dir = tempfile::tempdir().unwrap();
    let input = panel(dir.path(), 300);
    let base = |fmt: &str, seed: &str, out: &Path| {
        let o = run(&[
            "cq", "--input", input.to_str().unwrap(), "--x1", "ret", "--x2", "var",
            "--alpha1", "0.2", "--alpha2", "0.2", "--lags", "1,3", "--method", "sn",
            "--seed", seed, "--format", fmt, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files_in(out)
    };
    let csv = base("csv", "1", &dir.path().join("c"));
    let json = base("json", "1", &dir.path().join("j"));
    let a: Vec<RhoRecord> = decode(&fs::read(ending(&csv, "-rho.csv")).unwrap(), Format::Csv).unwrap();
    let b: Vec<RhoRecord> = decode(&fs::read(ending(&json, "-rho.json")).unwrap(), Format::Json).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 3]);
    let other = base("csv", "2", &dir.path().join("c"));
    assert_eq!(other.len(), 8);
}

#[test]
fn partial_emits_one_record_per_lag() {
    let dir = tempfile::tempdir().unwrap();
    let input = panel(dir.path(), 1000);
    let out = dir.path().join("o");
    let o = run(&[
        "partial", "--input", input.to_str().unwrap(), "--x1", "ret", "--x2", "var",
        "--controls", "vix", "--beta", "0.95", "--alpha1", "0.1", "--alpha2", "0.1",
        "--max-lag", "60", "--method", "sn", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = files_in(&out);
    let recs: Vec<PartialRecord> = decode(&fs::read(&files[0]).unwrap(), Format::Csv).unwrap();
    assert_eq!(recs.len(), 60);
    assert!(recs.iter().all(|r| r.partial.abs() <= 1.0 && r.plain.abs() <= 1.0 && r.ci_low <= r.ci_high));
}

#[test]
fn duplicated_control_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = panel(dir.path(), 200);
    let o = run(&[
        "partial", "--input", input.to_str().unwrap(), "--x1", "ret", "--x2", "var",
        "--controls", "vix,vix", "--beta", "0.5", "--alpha1", "0.5", "--alpha2", "0.5",
        "--lags", "1", "--B", "100", "--gamma", "0.2", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("singular") && err.contains("vix, vix"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = panel(dir.path(), 100);
    let inp = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    // absent column: data error
    let o = run(&["cq", "--input", inp, "--x1", "ret", "--x2", "nope", "--alpha1", "0.5", "--alpha2", "0.5", "--max-lag", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    // blank cell: data error with its row
    let holes = dir.path().join("holes.csv");
    fs::write(&holes, "a,b\n1,2\n3,\n5,6\n").unwrap();
    let o = run(&["cq", "--input", holes.to_str().unwrap(), "--x1", "a", "--x2", "b", "--alpha1", "0.5", "--alpha2", "0.5", "--max-lag", "1", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data row 2"));
    // empty lag range: configuration error
    let o = run(&["cq", "--input", inp, "--x1", "ret", "--x2", "var", "--alpha1", "0.5", "--alpha2", "0.5", "--max-lag", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    // invalid dgp id: usage error
    let o = run(&["mc", "--dgp", "3", "--T", "100", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    // simulation below the replication minimum
    let o = run(&["critvals", "--p", "1", "--n-rep", "100", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_writes_table_with_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["mc", "--dgp", "1", "--method", "sb", "--T", "200", "--p", "1", "--alpha", "0.5", "--nrep", "20", "--B", "50", "--seed", "7", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = files_in(dir.path());
    let csv = fs::read_to_string(ending(&files, ".csv")).unwrap();
    assert!(csv.starts_with("dgp,method,T,p,alpha,reject_freq,mc_se,nrep,B_or_table,seed"));
    assert_eq!(csv.lines().count(), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("alpha=0.5"));
}

#[test]
fn table_override_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // regenerate the shipped p=1 entries with their recorded provenance
    let shipped = CriticalValueTable::builtin();
    let e = *shipped.get(1, 0.1, 0.05).unwrap();
    let o = run(&[
        "critvals", "--p", "1", "--omega", "0.05,0.1", "--tau", "0.01,0.05,0.1",
        "--n-grid", &e.n_grid.to_string(), "--n-rep", &e.n_rep.to_string(), "--seed", &e.seed.to_string(), "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("critvals.csv");
    let regenerated = CriticalValueTable::parse(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(regenerated.entries().len(), 6);
    for r in regenerated.entries() {
        let s = shipped.lookup(r.p, r.omega, r.tau).unwrap();
        assert!((r.value - s).abs() / s < 0.02);
    }

    // an override table without the needed entry is a configuration error
    let input = panel(dir.path(), 300);
    let bad = dir.path().join("tiny.csv");
    fs::write(&bad, "# xqgram self-normalized critical values, format 1\np,omega,tau,value,n_grid,n_rep,seed\n2,0.1,0.05,112,1000,50000,1\n").unwrap();
    let o = bin()
        .args(["cq", "--input", input.to_str().unwrap(), "--x1", "ret", "--x2", "var", "--alpha1", "0.5", "--alpha2", "0.5", "--max-lag", "2", "--method", "sn", "--out", out])
        .env("XQGRAM_CRITVAL_TABLE", &bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

//! Black-box tests of the `bonefrag` binary: fixture corpora on disk, the
//! real subcommands, and assertions on files, stdout, stderr and exit codes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bonefrag::dataset::write_features_csv;
use bonefrag::mesh::{shapes, TriangleMesh};
use bonefrag::synth::generate_blob_dataset;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bonefrag"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn write_ascii_ply(path: &Path, mesh: &TriangleMesh) {
    let mut text = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(text, "element vertex {}", mesh.vertices().len());
    text.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(text, "element face {}", mesh.faces().len());
    text.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in mesh.vertices() {
        let _ = writeln!(text, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(text, "3 {} {} {}", f[0], f[1], f[2]);
    }
    std::fs::write(path, text).unwrap();
}

/// Two fragments (3 and 4 breaks) with meshes, curve points and metadata.
struct Corpus {
    dir: TempDir,
}

impl Corpus {
    fn build() -> Corpus {
        let dir = TempDir::new().unwrap();
        let meshes = dir.path().join("meshes");
        std::fs::create_dir(&meshes).unwrap();
        write_ascii_ply(&meshes.join("frag_a.ply"), &shapes::boxy(3.0, 2.0, 1.0));
        write_ascii_ply(&meshes.join("frag_b.ply"), &shapes::boxy(2.0, 1.5, 1.0));

        let mut points =
            String::from("fragment_id,break_id,point_index,x,y,z,angle_deg,is_endpoint\n");
        let mut meta =
            String::from("fragment_id,break_id,interior_edge,interrupted,ridge_notch,interior_notch\n");
        for (frag, n_breaks) in [("frag_a", 3usize), ("frag_b", 4usize)] {
            for b in 0..n_breaks {
                let y = b as f64;
                let angles = [88.0 + b as f64, 101.0 - 2.0 * b as f64];
                let _ = writeln!(points, "{frag},b{b},0,0.0,{y},0.0,,true");
                let _ = writeln!(points, "{frag},b{b},1,1.0,{y},0.1,{},false", angles[0]);
                let _ = writeln!(points, "{frag},b{b},2,2.0,{y},0.2,{},false", angles[1]);
                let _ = writeln!(points, "{frag},b{b},3,3.0,{y},0.1,,true");
                let edge = if b % 2 == 0 { "break" } else { "endosteal" };
                let _ = writeln!(meta, "{frag},b{b},{edge},false,{},false", b == 1);
            }
        }
        std::fs::write(dir.path().join("points.csv"), points).unwrap();
        std::fs::write(dir.path().join("break_meta.csv"), meta).unwrap();
        std::fs::write(
            dir.path().join("fragment_meta.csv"),
            "fragment_id,label,trabecula\nfrag_a,carnivore,true\nfrag_b,hammerstone,false\n",
        )
        .unwrap();
        Corpus { dir }
    }

    fn extract_args(&self) -> Vec<String> {
        vec![
            "extract".into(),
            "--mesh-dir".into(),
            "meshes".into(),
            "--points".into(),
            "points.csv".into(),
            "--break-meta".into(),
            "break_meta.csv".into(),
            "--fragment-meta".into(),
            "fragment_meta.csv".into(),
            "--out-prefix".into(),
            "out/corpus".into(),
        ]
    }

    fn run_extract(&self) -> Output {
        let args = self.extract_args();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(self.dir.path(), &refs)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn extract_produces_tables_and_manifest_reproducibly() {
    let corpus = Corpus::build();
    let out = corpus.run_extract();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let breaks = corpus.path("out/corpus_breaks.csv");
    let fragments = corpus.path("out/corpus_fragments.csv");
    let manifest = corpus.path("out/corpus_manifest.txt");
    assert_eq!(data_rows(&breaks), 7, "3 + 4 breaks");
    assert_eq!(data_rows(&fragments), 2);
    let manifest_text = std::fs::read_to_string(&manifest).unwrap();
    assert!(manifest_text.contains("frag_a: label=carnivore, breaks=3"));
    assert!(manifest_text.contains("frag_b: label=hammerstone, breaks=4"));
    assert!(manifest_text.contains("watertight=yes"));

    let before = (
        std::fs::read(&breaks).unwrap(),
        std::fs::read(&fragments).unwrap(),
        std::fs::read(&manifest).unwrap(),
    );
    let again = corpus.run_extract();
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read(&breaks).unwrap(), before.0);
    assert_eq!(std::fs::read(&fragments).unwrap(), before.1);
    assert_eq!(std::fs::read(&manifest).unwrap(), before.2);
}

#[test]
fn extract_rejects_annotations_for_unknown_fragments() {
    let corpus = Corpus::build();
    let mut points = std::fs::read_to_string(corpus.path("points.csv")).unwrap();
    points.push_str("ghost,b0,0,0,0,0,,true\nghost,b0,1,1,0,0,90,false\nghost,b0,2,2,0,0,,true\n");
    std::fs::write(corpus.path("points.csv"), points).unwrap();
    let mut meta = std::fs::read_to_string(corpus.path("break_meta.csv")).unwrap();
    meta.push_str("ghost,b0,break,false,false,false\n");
    std::fs::write(corpus.path("break_meta.csv"), meta).unwrap();

    let out = corpus.run_extract();
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("unknown fragment 'ghost'"),
        "stderr: {}",
        stderr(&out)
    );
    assert!(!corpus.path("out/corpus_breaks.csv").exists());
    assert!(!corpus.path("out/corpus_manifest.txt").exists());
}

#[test]
fn extract_rejects_missing_mesh_before_writing_anything() {
    let corpus = Corpus::build();
    std::fs::remove_file(corpus.path("meshes/frag_b.ply")).unwrap();
    let out = corpus.run_extract();
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("missing mesh") && err.contains("frag_b"), "stderr: {err}");
    assert!(!corpus.path("out/corpus_breaks.csv").exists());
}

#[test]
fn experiment_runs_grouped_trials_from_flags_plus_config() {
    let dir = TempDir::new().unwrap();
    let table = generate_blob_dataset(30, 3, 4.0, 9).unwrap();
    write_features_csv(&table, &dir.path().join("blobs.csv")).unwrap();
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{"algorithms": [
            {"algorithm": "knn", "params": {"k": 5}},
            {"algorithm": "lda", "params": {}}
        ]}"#,
    )
    .unwrap();

    let out = run(
        dir.path(),
        &[
            "--seed", "9", "--config", "exp.json", "experiment",
            "--dataset", "blobs.csv", "--protocol", "fragment_level",
            "--n-trials", "5", "--out", "report.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("master_seed = 9"));

    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3, "header + one row per algorithm");
    assert!(lines[0].starts_with("algorithm,level,protocol,n_trials,mean_accuracy"));
    for line in &lines[1..] {
        let mean: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(mean >= 0.9, "well-separated blobs scored {mean}");
    }
    assert!(dir.path().join("report.csv.config.json").is_file());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let table = generate_blob_dataset(10, 2, 4.0, 1).unwrap();
    write_features_csv(&table, &dir.path().join("blobs.csv")).unwrap();
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{"algorithms": [{"algorithm": "lda", "params": {}}]}"#,
    )
    .unwrap();

    // Missing required parameter (no --out anywhere).
    let out = run(
        dir.path(),
        &["--config", "exp.json", "experiment", "--dataset", "blobs.csv",
          "--protocol", "fragment_level"],
    );
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("out"));

    // Zero trials.
    let out = run(
        dir.path(),
        &["--config", "exp.json", "experiment", "--dataset", "blobs.csv",
          "--protocol", "fragment_level", "--n-trials", "0", "--out", "r.csv"],
    );
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("r.csv").exists());

    // Protocol that contradicts the table level.
    let out = run(
        dir.path(),
        &["--config", "exp.json", "experiment", "--dataset", "blobs.csv",
          "--protocol", "break_level_voted", "--out", "r.csv"],
    );
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // Unknown protocol name.
    let out = run(
        dir.path(),
        &["--config", "exp.json", "experiment", "--dataset", "blobs.csv",
          "--protocol", "nonsense", "--out", "r.csv"],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nonsense"));

    // Zero worker threads.
    let out = run(
        dir.path(),
        &["--threads", "0", "--config", "exp.json", "experiment",
          "--dataset", "blobs.csv", "--protocol", "fragment_level", "--out", "r.csv"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn audit_writes_one_row_per_protocol_algorithm_cell() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("audit.json"),
        r#"{
            "n_fragments": 10, "breaks_per_fragment": 3,
            "n_fragment_features": 4, "n_break_features": 2,
            "algorithms": [
                {"algorithm": "lda", "params": {}},
                {"algorithm": "gaussian_nb", "params": {}},
                {"algorithm": "knn", "params": {"k": 1}}
            ]
        }"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["--seed", "5", "--config", "audit.json", "audit",
          "--n-trials", "2", "--out", "audit.csv"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("master_seed = 5"));

    let csv = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "protocol,algorithm,mean_accuracy,std_accuracy,n_trials,seed");
    assert_eq!(lines.len(), 1 + 3 * 3, "3 protocols x 3 algorithms");
    for proto in ["break_level_split", "frag_split_bootstrapped", "frag_split_proper"] {
        assert_eq!(lines.iter().filter(|l| l.starts_with(proto)).count(), 3);
    }
    assert!(dir.path().join("audit.csv.config.json").is_file());
}

#[test]
fn ingest_cleans_external_csv_and_reports_decisions() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("raw.csv"),
        "specimen,mass_g,side,notch,agent\n\
         s1,12.5,left,present,carnivore\n\
         s2,8.1,right,absent,hammerstone\n\
         s3,9.9,left,maybe,carnivore\n\
         s4,,left,present,carnivore\n\
         s5,11.0,mid,absent,hammerstone\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("schema.json"),
        r#"{
            "level": "fragment",
            "columns": {
                "specimen": "drop",
                "mass_g": "numeric",
                "side": "categorical",
                "notch": "boolean",
                "agent": "label"
            }
        }"#,
    )
    .unwrap();

    let out = run(
        dir.path(),
        &["ingest", "--input", "raw.csv", "--schema", "schema.json",
          "--out", "clean.csv"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("corrupted boolean"), "stdout: {text}");

    let clean = std::fs::read_to_string(dir.path().join("clean.csv")).unwrap();
    let header = clean.lines().next().unwrap();
    // `notch` is corrupted ('maybe') so the whole column is excluded; `side`
    // one-hot encodes with its first level dropped; the empty-mass row goes.
    assert!(header.contains("mass_g"));
    assert!(header.contains("side=mid") && header.contains("side=right"));
    assert!(!header.contains("side=left"));
    assert!(!header.contains("notch"));
    assert_eq!(clean.lines().count() - 1, 4, "row with empty mass_g is rejected");

    let report = std::fs::read_to_string(dir.path().join("clean.csv.report.txt")).unwrap();
    assert!(report.contains("resolved config:"));
    assert!(report.contains("corrupted boolean"));
}

#[test]
fn spectral_separates_plain_blobs_and_exports_scatter() {
    let dir = TempDir::new().unwrap();
    let table = generate_blob_dataset(20, 2, 50.0, 13).unwrap();
    write_features_csv(&table, &dir.path().join("blobs.csv")).unwrap();

    let out = run(
        dir.path(),
        &["--seed", "4", "spectral", "--dataset", "blobs.csv", "--k", "2",
          "--k-neighbors", "6", "--out", "clusters.csv", "--scatter", "embed.csv"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report = std::fs::read_to_string(dir.path().join("clusters.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("level,k,accuracy"));
    let accuracy: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(accuracy, 1.0, "two far-apart blobs must separate exactly");

    let scatter = std::fs::read_to_string(dir.path().join("embed.csv")).unwrap();
    assert_eq!(scatter.lines().next().unwrap(), "id,x,y,label");
    assert_eq!(scatter.lines().count(), 1 + 40);

    // Scatter plus a non-2-D embedding is refused before anything is written.
    let bad = run(
        dir.path(),
        &["--seed", "4", "spectral", "--dataset", "blobs.csv", "--k", "3",
          "--k-neighbors", "6", "--out", "c3.csv", "--scatter", "e3.csv"],
    );
    assert_eq!(code(&bad), 2, "stderr: {}", stderr(&bad));
    assert!(!dir.path().join("c3.csv").exists());
    assert!(!dir.path().join("e3.csv").exists());
}

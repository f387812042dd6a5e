use std::path::Path;
use std::process::{Command, Output};

fn asrkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asrkit"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const CORPUS: &str = "a b c\na b c\na b d\nb c\nc a b\n";

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = asrkit(tmp.path(), &["lm", "ppl", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    write(tmp.path(), "corpus.txt", CORPUS);
    write(tmp.path(), "vocab.txt", "a\nb\nc\n");
    let out = asrkit(
        tmp.path(),
        &["lm", "train", "--corpus", "corpus.txt", "--vocab", "vocab.txt", "--prune", "x,y", "--out", "lm.arpa"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    write(tmp.path(), "bad.toml", "colour = 1\n");
    let out = asrkit(tmp.path(), &["--config", "bad.toml", "vocab", "oov", "--vocab", "vocab.txt", "--text", "corpus.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_1_and_name_the_location() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "broken.arpa", "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\ta\nhello\n\n\\end\\\n");
    write(tmp.path(), "text.txt", "a\n");
    let out = asrkit(tmp.path(), &["lm", "ppl", "--model", "broken.arpa", "--text", "text.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.arpa") && err.contains('6'), "{err}");

    let out = asrkit(tmp.path(), &["lm", "ppl", "--model", "missing.arpa", "--text", "text.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "corpus.txt", "ab ba abba\nab ba\nbab ab aab\naa ba ab\nbaa ab\n");
    write(dir, "dict.txt", "AB  AA1 B\nBA  B AA0\nABBA  AA1 B B AA0\nBAB  B AA1 B\nAA  AA1 AA0\n");
    let steps: [&[&str]; 4] = [
        &["vocab", "build", "--corpus", "corpus.txt", "--min-count", "1", "--out", "vocab{}.txt"],
        &["lm", "train", "--corpus", "corpus.txt", "--vocab", "vocab{}.txt", "--order", "3", "--out", "lm{}.arpa"],
        &["--seed", "3", "g2p", "train", "--dict", "dict.txt", "--order", "2", "--out", "g2p{}.bin"],
        &["lexicon", "build", "--vocab", "vocab{}.txt", "--g2p", "g2p{}.bin", "--variants", "threshold-0.8", "--out", "lex{}.txt"],
    ];
    for run in ["1", "2"] {
        for step in steps {
            let args: Vec<String> = step.iter().map(|a| a.replace("{}", run)).collect();
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = asrkit(dir, &args);
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for name in ["vocab", "lm", "g2p", "lex"] {
        let ext = match name {
            "lm" => "arpa",
            "g2p" => "bin",
            _ => "txt",
        };
        let a = std::fs::read(dir.join(format!("{name}1.{ext}"))).unwrap();
        let b = std::fs::read(dir.join(format!("{name}2.{ext}"))).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }

    let out = asrkit(dir, &["lm", "ppl", "--model", "lm1.arpa", "--text", "corpus.txt"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("PPL=") && stdout.contains("OOV=0.00%"), "{stdout}");
}

"""End-to-end command line checks, run in process through main()."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from posehar.cli import main

CONFIG = {
    "seed": 11,
    "mode": "basic",
    "pca_components": 2,
    "som": {"q": 2, "m": 2, "epochs": 3},
    "augment": {"z": 1, "sigma": 0.01},
    "classifier": {"conv_blocks": [[6, 3]], "recurrent_units": 6,
                   "max_epochs": 3, "batch_size": 8},
    "protocol": {"kind": "kfold", "folds": 3},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One full pipeline run shared by the assertions below."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(CONFIG))
    base = ["--config", str(config)]

    assert main(base + ["synth", "--out", str(root / "raw"), "--actors", "3",
                        "--archetypes", "wave-one-arm,squat",
                        "--frames", "12"]) == 0
    assert main(base + ["preprocess", "--manifest", str(root / "raw/manifest.json"),
                        "--out", str(root / "norm")]) == 0
    assert main(base + ["augment", "--manifest", str(root / "norm/manifest.json"),
                        "--out", str(root / "aug")]) == 0
    assert main(base + ["build-libraries",
                        "--manifest", str(root / "aug/manifest.json"),
                        "--out", str(root / "bundle.npz")]) == 0
    assert main(base + ["embed", "--manifest", str(root / "aug/manifest.json"),
                        "--out", str(root / "emb")]) == 0
    assert main(base + ["embed", "--manifest", str(root / "norm/manifest.json"),
                        "--mode", "advanced", "--bundle", str(root / "bundle.npz"),
                        "--out", str(root / "embadv")]) == 0
    assert main(base + ["train", "--embedded", str(root / "emb/manifest.json"),
                        "--out", str(root / "model.npz")]) == 0
    return root


def test_synth_writes_records_and_manifest(workdir):
    manifest = json.loads((workdir / "raw/manifest.json").read_text())
    assert manifest["format"] == "posehar-manifest/1"
    assert manifest["actions"] == ["squat", "wave-one-arm"]
    assert len(manifest["entries"]) == 6
    for entry in manifest["entries"]:
        assert (workdir / "raw" / entry["path"]).exists()


def test_preprocess_reports(workdir):
    report = json.loads((workdir / "norm/report.json").read_text())
    assert len(report) == 6
    assert all(r["frames_in"] == 12 for r in report)
    first = (workdir / "norm" / json.loads(
        (workdir / "norm/manifest.json").read_text())["entries"][0]["path"])
    assert first.read_text().startswith("#posehar-seq v1")


def test_augment_doubles_with_flips(workdir):
    manifest = json.loads((workdir / "aug/manifest.json").read_text())
    # z=1 noised copy plus flips of everything: 2 * N * (1 + 1)
    assert len(manifest["entries"]) == 24


def test_embedding_channel_counts(workdir):
    basic = json.loads((workdir / "emb/manifest.json").read_text())
    path = workdir / "emb" / basic["entries"][0]["path"]
    header = json.loads(path.read_text().splitlines()[0].split(" ", 2)[2])
    assert header["channels"][0] == "pose/01/x"
    assert len(header["channels"]) == 56
    advanced = json.loads((workdir / "embadv/manifest.json").read_text())
    path = workdir / "embadv" / advanced["entries"][0]["path"]
    header = json.loads(path.read_text().splitlines()[0].split(" ", 2)[2])
    assert len(header["channels"]) == 56 + 10 * 2


def predict(workdir, capsys, target, extra=()):
    code = main(["predict", "--model", str(workdir / "model.npz"),
                 "--mode", "basic", "--input", str(target), *extra])
    assert code == 0
    return json.loads(capsys.readouterr().out)


def test_predict_accepts_raw_normalized_and_embedded(workdir, capsys):
    raw = sorted((workdir / "raw").glob("*.seq"))[0]
    norm = sorted((workdir / "norm").glob("*.seq"))[0]
    emb = sorted((workdir / "emb").glob("*.emb"))[0]
    results = [predict(workdir, capsys, p) for p in (raw, norm, emb)]
    for result in results:
        assert set(result) == {"label", "probabilities"}
        assert result["label"] in result["probabilities"]
        total = sum(result["probabilities"].values())
        assert total == pytest.approx(1.0, abs=1e-9)
    # raw and normalized go through the same preprocessing, so they agree
    assert results[0] == results[1]


def test_evaluate_writes_report(workdir, capsys):
    out = workdir / "report.json"
    code = main(["--config", str(workdir / "config.json"), "evaluate",
                 "--manifest", str(workdir / "raw/manifest.json"),
                 "--mode", "baseline", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "absolute accuracy:" in printed
    report = json.loads(out.read_text())
    assert report["format"] == "posehar-report/1"
    assert report["actions"] == ["squat", "wave-one-arm"]
    assert report["config"]["mode"] == "baseline"
    assert len(report["per_fold"]) == 3
    assert sum(f["test_samples"] for f in report["per_fold"]) == 6


def test_bench_reports_throughput(capsys):
    assert main(["bench", "--actions", "2", "--prototypes", "4",
                 "--frames", "64"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["embedding_channels"] == 56 + 10 * 2
    assert result["embedding_frames_per_second"] > 0
    assert result["inference_ms_per_clip"] > 0


def read_all(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_synth_is_byte_deterministic(tmp_path):
    for out in ("one", "two"):
        assert main(["synth", "--out", str(tmp_path / out), "--actors", "2",
                     "--archetypes", "march", "--frames", "8",
                     "--seed", "5"]) == 0
    assert read_all(tmp_path / "one") == read_all(tmp_path / "two")


def test_seed_flag_position_and_precedence(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"seed": 1}))
    # flag before the subcommand, flag after it, and flag overriding config
    assert main(["--seed", "5", "synth", "--out", str(tmp_path / "before"),
                 "--actors", "1", "--archetypes", "still", "--frames", "4"]) == 0
    assert main(["synth", "--seed", "5", "--out", str(tmp_path / "after"),
                 "--actors", "1", "--archetypes", "still", "--frames", "4"]) == 0
    assert main(["--config", str(config), "--seed", "5", "synth",
                 "--out", str(tmp_path / "override"),
                 "--actors", "1", "--archetypes", "still", "--frames", "4"]) == 0
    assert main(["--config", str(config), "synth",
                 "--out", str(tmp_path / "fromfile"),
                 "--actors", "1", "--archetypes", "still", "--frames", "4"]) == 0
    before = read_all(tmp_path / "before")
    assert read_all(tmp_path / "after") == before
    assert read_all(tmp_path / "override") == before
    assert read_all(tmp_path / "fromfile") != before


def test_exit_codes(tmp_path, capsys):
    # missing input data -> 3
    assert main(["preprocess", "--manifest", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "x")]) == 3
    # malformed config file -> 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad), "synth", "--out", str(tmp_path / "y")]) == 2
    # bad option value -> 2
    assert main(["synth", "--out", str(tmp_path / "z"),
                 "--viewpoints", "above"]) == 2
    # unknown flags are an argparse error, also 2
    with pytest.raises(SystemExit) as err:
        main(["synth", "--bogus"])
    assert err.value.code == 2
    capsys.readouterr()


def test_train_rejects_bad_classifier_settings(workdir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"classifier": {"dropout": 2.0}}))
    assert main(["--config", str(config), "train",
                 "--embedded", str(workdir / "emb/manifest.json"),
                 "--out", str(tmp_path / "model.npz")]) == 2


def test_console_script_is_installed(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "posehar.cli", "synth", "--out",
         str(tmp_path / "s"), "--actors", "1", "--archetypes", "still",
         "--frames", "4"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "wrote 1 samples" in proc.stdout
    missing = subprocess.run(
        ["posehar", "predict", "--model", str(tmp_path / "absent.npz"),
         "--input", str(tmp_path / "absent.seq")],
        capture_output=True, text=True)
    assert missing.returncode == 3


def test_advanced_embed_requires_bundle(workdir, tmp_path):
    assert main(["embed", "--manifest", str(workdir / "norm/manifest.json"),
                 "--mode", "advanced", "--out", str(tmp_path / "e")]) == 2


def test_mismatched_lattice_and_components(workdir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"som": {"q": 2, "m": 2, "epochs": 2},
                                  "pca_components": 3}))
    assert main(["--config", str(config), "build-libraries",
                 "--manifest", str(workdir / "norm/manifest.json"),
                 "--out", str(tmp_path / "b.npz")]) == 2

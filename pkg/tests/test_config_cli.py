import json
import socket

import numpy as np
import pytest

from sonotree.cli import main
from sonotree.config import ConfigError, RunConfig, parse_config


class TestConfigParsing:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        config = parse_config(path)
        assert config == RunConfig()

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("seed = 3\n")
        config = parse_config(path, {"seed": "7"})
        assert config.seed == 7

    def test_comments_and_types(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "# a comment\n"
            "top_s = 4\n"
            "lr = 0.01  # inline comment\n"
            "numeric = false\n"
            'levels = "cm"\n')
        config = parse_config(path)
        assert config.top_s == 4 and config.lr == 0.01
        assert config.numeric is False and config.levels == "cm"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("no_such_key = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(path)

    def test_validation_aggregates_errors(self):
        config = RunConfig(top_s=0, gate="sideways", folds=1)
        errors = config.validate()
        assert len(errors) >= 3
        assert any("top_s" in e for e in errors)
        assert any("gate" in e for e in errors)

    def test_top_s_zero_message(self):
        errors = RunConfig(top_s=0).validate()
        assert any("top_s must be >= 1" in e for e in errors)

    def test_missing_path_reported(self):
        errors = RunConfig(images="/no/such/dir").validate(
            required_paths=("images",))
        assert any("does not exist" in e for e in errors)


class TestCliExitCodes:
    def test_bad_config_exits_1(self, tmp_path, capsys):
        rc = main(["extract", "--images", str(tmp_path / "missing"),
                   "-o", str(tmp_path / "out")])
        assert rc == 1
        assert "configuration errors" in capsys.readouterr().err

    def test_eval_without_checkpoint_exits_1(self, tmp_path, capsys):
        features = tmp_path / "features.jsonl"
        features.write_text("")
        patients = tmp_path / "patients.csv"
        patients.write_text(
            "id,age,sex,height_cm,weight_kg,bmi,falls,sppb,label\n"
            "p0,70,F,160,64,25,0,10,control\n")
        rc = main(["eval", "--features", str(features),
                   "--patients", str(patients),
                   "--checkpoint", str(tmp_path / "nope"),
                   "-o", str(tmp_path / "out")])
        assert rc == 1
        assert "checkpoint not found" in capsys.readouterr().err

    def test_unknown_set_key_exits_1(self, tmp_path, capsys):
        rc = main(["synth", "-o", str(tmp_path / "d"), "--set", "bogus=1"])
        assert rc == 1

    def test_synth_writes_manifest_and_is_idempotent(self, tmp_path):
        out = tmp_path / "ds"
        rc = main(["synth", "-o", str(out), "--seed", "5",
                   "--set", "patients_n=4", "--set", "images_per_patient=2"])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        first_hash = manifest["dataset"]["content_hash"]
        rc = main(["synth", "-o", str(tmp_path / "ds2"), "--seed", "5",
                   "--set", "patients_n=4", "--set", "images_per_patient=2"])
        assert rc == 0
        manifest2 = json.loads((tmp_path / "ds2" / "manifest.json").read_text())
        assert manifest2["dataset"]["content_hash"] == first_hash


class TestOfflineGuard:
    def test_offline_kb_build_makes_no_network_calls(self, tmp_path, monkeypatch):
        # any socket connection attempt fails loudly
        def guard(*args, **kwargs):
            raise AssertionError("network access attempted in offline mode")

        monkeypatch.setattr(socket.socket, "connect", guard)

        patients = tmp_path / "patients.csv"
        patients.write_text(
            "id,age,sex,height_cm,weight_kg,bmi,falls,sppb,label\n"
            "p0,72,F,160,82,32.0,1,5,sarcopenic\n"
            "p1,55,M,178,72,22.7,0,11,control\n")
        out = tmp_path / "kb"
        rc = main(["build-kb", "--patients", str(patients), "-o", str(out),
                   "--offline", "--set", "seed=2"])
        assert rc == 0
        assert (out / "sentences.jsonl").exists()
        assert (out / "embeddings.jsonl").exists()
        assert (out / "model.json").exists()
        assert (out / "manifest.json").exists()
        assert (out / "patient_text.jsonl").exists()

    def test_kb_build_hash_stable_across_runs(self, tmp_path):
        patients = tmp_path / "patients.csv"
        patients.write_text(
            "id,age,sex,height_cm,weight_kg,bmi,falls,sppb,label\n"
            "p0,72,F,160,82,32.0,1,5,sarcopenic\n"
            "p1,55,M,178,72,22.7,0,11,control\n")
        hashes = set()
        for run in range(2):
            out = tmp_path / f"kb{run}"
            rc = main(["build-kb", "--patients", str(patients), "-o", str(out),
                       "--offline", "--set", "seed=2"])
            assert rc == 0
            manifest = json.loads((out / "manifest.json").read_text())
            hashes.add(manifest["kb_hash"])
        assert len(hashes) == 1

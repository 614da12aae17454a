"""End-to-end tests of the command-line interface through main()."""

import json

import pytest

from towertune.datagen import load_dataset
from towertune.harness.cli import EXIT_FAILED, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

TINY = """
# desk-scale smoke configuration
n = 64
d_img = 6
d_txt = 6
k_concepts = 8
hidden = 6
d_embed = 4
pretrain_epochs = 2
pretrain_batch = 32
batch_size = 32
osr_epochs = 2
finetune_epochs = 2
seed = 3
record_timing = false
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


class TestChecks:
    def test_grad_check_passes(self, capsys):
        assert main(["grad-check", "--seed", "1", "--trials", "4"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out

    def test_grad_check_impossible_tolerance_fails(self, capsys):
        code = main(["grad-check", "--seed", "1", "--trials", "2", "--tolerance", "1e-18"])
        assert code == EXIT_FAILED
        assert "FAIL" in capsys.readouterr().out

    def test_oracle_check_passes(self, capsys):
        code = main(["oracle-check", "--seed", "0", "--n", "16"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "gcl" in out and "hgcl" in out


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE
        capsys.readouterr()

    def test_no_subcommand(self, capsys):
        assert main([]) == EXIT_USAGE
        capsys.readouterr()

    def test_missing_seed(self, tmp_path, capsys):
        code = main(["gen-data", "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "seed" in capsys.readouterr().err

    def test_bad_set_key(self, cfg_file, tmp_path, capsys):
        code = main([
            "gen-data", "--config", cfg_file, "--out", str(tmp_path),
            "--set", "warp_factor=9",
        ])
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["gen-data", "--config", str(tmp_path / "absent.cfg")])
        assert code == EXIT_USAGE
        capsys.readouterr()


class TestPipeline:
    def test_full_pipeline(self, cfg_file, tmp_path, capsys):
        """pretrain, osr, finetune, eval, and report chain through shared
        checkpoints and all exit zero."""
        root = tmp_path
        base = ["--config", cfg_file]

        def stage(name):
            return ["--out", str(root / name)]

        assert main(["pretrain"] + base + stage("pre")) == EXIT_OK
        assert main(
            ["osr"] + base + stage("osr")
            + ["--init", str(root / "pre" / "model0.ckpt")]
        ) == EXIT_OK
        assert main(
            ["finetune"] + base + stage("ft")
            + ["--init", str(root / "osr" / "final.ckpt")]
        ) == EXIT_OK
        assert main(
            ["eval"] + base + stage("ft")
            + ["--ckpt", str(root / "ft" / "final.ckpt")]
        ) == EXIT_OK
        assert main(["report", "--dir", str(root / "ft")]) == EXIT_OK

        text = capsys.readouterr().out
        assert "passed" in text
        summary = json.loads((root / "ft" / "summary.json").read_text())
        assert summary["passed"] is True

    def test_gen_data_writes_loadable_corpus(self, cfg_file, tmp_path, capsys):
        out_file = tmp_path / "corpus.fcds"
        code = main([
            "gen-data", "--config", cfg_file, "--out-file", str(out_file),
        ])
        assert code == EXIT_OK
        capsys.readouterr()
        ds = load_dataset(out_file)
        assert ds.n == 64
        assert ds.images.shape == (64, 6)

    def test_finetune_standalone(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "solo")
        code = main(["finetune", "--config", cfg_file, "--out", out])
        assert code == EXIT_OK
        capsys.readouterr()
        assert (tmp_path / "solo" / "metrics.csv").exists()

    def test_set_override_reflected_in_summary(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "ov")
        code = main([
            "finetune", "--config", cfg_file, "--out", out,
            "--set", "margin=0.25", "--set", "arm=gcl_cold",
        ])
        assert code == EXIT_OK
        capsys.readouterr()
        summary = json.loads((tmp_path / "ov" / "summary.json").read_text())
        assert summary["config"]["margin"] == 0.25
        assert summary["arm"] == "gcl_cold"

    def test_osr_refuses_mbcl_arm(self, cfg_file, tmp_path, capsys):
        code = main([
            "osr", "--config", cfg_file, "--out", str(tmp_path / "x"),
            "--set", "arm=mbcl",
        ])
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_eval_rejects_corrupted_checkpoint(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert main(["pretrain", "--config", cfg_file, "--out", out]) == EXIT_OK
        ckpt = tmp_path / "run" / "model0.ckpt"
        raw = bytearray(ckpt.read_bytes())
        raw[len(raw) // 2] ^= 0x10
        ckpt.write_bytes(bytes(raw))
        code = main(["eval", "--config", cfg_file, "--out", out, "--ckpt", str(ckpt)])
        assert code == EXIT_USAGE
        capsys.readouterr()

    def test_eval_hash_mismatch_needs_force(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert main(["pretrain", "--config", cfg_file, "--out", out]) == EXIT_OK
        ckpt = f"{out}/model0.ckpt"
        mismatched = [
            "eval", "--config", cfg_file, "--out", out,
            "--set", "margin=0.33", "--ckpt", ckpt,
        ]
        assert main(mismatched) == EXIT_USAGE
        assert main(mismatched + ["--force"]) == EXIT_OK
        capsys.readouterr()


class TestSweepCommands:
    def test_exp_margin(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "margin")
        code = main([
            "exp-margin", "--config", cfg_file, "--out", out,
            "--margins", "0.05,0.2",
        ])
        assert code == EXIT_OK
        capsys.readouterr()
        assert (tmp_path / "margin" / "margin.csv").exists()
        summary = json.loads((tmp_path / "margin" / "margin_summary.json").read_text())
        assert summary["best_margin"] in (0.05, 0.2)

    def test_exp_osr_scaling(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "scaling")
        code = main([
            "exp-osr-scaling", "--config", cfg_file, "--out", out,
            "--epochs-list", "1,2", "--count", "2",
        ])
        assert code == EXIT_OK
        capsys.readouterr()
        assert (tmp_path / "scaling" / "scaling.csv").exists()

    def test_exp_coldstart(self, cfg_file, tmp_path, capsys):
        out = str(tmp_path / "cold")
        code = main([
            "exp-coldstart", "--config", cfg_file, "--out", out, "--count", "2",
        ])
        assert code == EXIT_OK
        capsys.readouterr()
        assert (tmp_path / "cold" / "coldstart.csv").exists()
        summary = json.loads((tmp_path / "cold" / "coldstart_summary.json").read_text())
        assert len(summary["seeds"]) == 2
        assert set(summary["dip_counts"]) == {"hgcl_osr", "gcl_cold", "mbcl"}

"""Config validation, subcommand artifacts, exit codes, and determinism."""

import json
import math

import numpy as np
import pytest

from vardrop import ParameterError, ParseError
from vardrop.cli import canonical_json, main, parse_config_file, validate_config


class TestValidateConfig:
    def test_empty_gives_defaults(self):
        config = validate_config({})
        assert config.T == 96
        assert config.B == 32
        assert config.epsilon == 25
        assert config.k == 3
        assert config.vardrop_on is True
        assert (config.train_frac, config.val_frac, config.test_frac) == (
            0.7, 0.1, 0.2,
        )

    def test_epsilon_range_names_bound(self):
        with pytest.raises(ParameterError) as err:
            validate_config({"epsilon": "60"})
        message = str(err.value)
        assert "epsilon" in message
        assert "48" in message

    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError) as err:
            validate_config({"epsilonn": "25"})
        assert "epsilonn" in str(err.value)

    def test_k_capped_by_epsilon(self):
        with pytest.raises(ParameterError) as err:
            validate_config({"k": "30", "epsilon": "25"})
        assert "k" in str(err.value)

    def test_type_errors_name_key(self):
        with pytest.raises(ParameterError) as err:
            validate_config({"B": "many"})
        assert "B" in str(err.value)
        with pytest.raises(ParameterError):
            validate_config({"vardrop_on": "maybe"})

    def test_bool_spellings(self):
        assert validate_config({"vardrop_on": "off"}).vardrop_on is False
        assert validate_config({"vardrop_on": "1"}).vardrop_on is True

    def test_fraction_sum_checked(self):
        with pytest.raises(ParameterError) as err:
            validate_config({"train_frac": "0.5", "val_frac": "0.1"})
        assert "sum to 1" in str(err.value)

    def test_sweep_lists_validated(self):
        with pytest.raises(ParameterError):
            validate_config({"sweep_ks": "2,zero"})
        with pytest.raises(ParameterError):
            validate_config({"sweep_gss": "0,5"})
        # entries are normalized so the echo is canonical
        config = validate_config({"sweep_gss": " 1, 5 ,10 "})
        assert config.sweep_gss == "1,5,10"

    def test_seed_env_fallback(self, monkeypatch):
        monkeypatch.setenv("VARDROP_SEED", "777")
        assert validate_config({}).seed == 777
        # explicit key beats the environment
        assert validate_config({"seed": "3"}).seed == 3
        monkeypatch.delenv("VARDROP_SEED")
        assert validate_config({}).seed == 0


class TestParseConfigFile:
    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# run\nT=48\n\nk = 4\n")
        assert parse_config_file(str(path)) == {"T": "48", "k": "4"}

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("T=48\njust words\n")
        with pytest.raises(ParseError) as err:
            parse_config_file(str(path))
        assert f"{path}:2" in str(err.value)

    def test_missing_file_is_io_error(self):
        from vardrop import PipelineIOError

        with pytest.raises(PipelineIOError):
            parse_config_file("/nonexistent/run.cfg")


class TestCanonicalJson:
    def test_sorted_compact_and_newline(self):
        text = canonical_json({"b": 1, "a": [1.5, True, None]})
        assert text == '{"a":[1.5,true,null],"b":1}\n'

    def test_float_formatting(self):
        assert canonical_json(0.1) == "0.1\n"
        assert canonical_json(2.0 / 3.0) == "0.666666666667\n"

    def test_ndarray(self):
        assert canonical_json(np.arange(3)) == "[0,1,2]\n"


def fig4a_csv(path):
    t = np.arange(96)
    v0 = (3.0 * np.sin(2 * np.pi * 4 * t / 96)
          + 1.0 * np.sin(2 * np.pi * 8 * t / 96)
          + 2.0 * np.sin(2 * np.pi * 12 * t / 96))
    v1 = (2.0 * np.sin(2 * np.pi * 4 * t / 96)
          + 1.0 * np.sin(2 * np.pi * 8 * t / 96)
          + 3.0 * np.sin(2 * np.pi * 12 * t / 96))
    lines = ["a,b"] + [f"{v0[i]:.17g},{v1[i]:.17g}" for i in range(96)]
    path.write_text("\n".join(lines) + "\n")


TINY_TRAIN = [
    "--synth_n=8", "--synth_g=2", "--synth_length=400", "--synth_sigma=0.05",
    "--T=24", "--H=8", "--epsilon=12", "--k=3", "--gs=1", "--B=8",
    "--d=8", "--d_k=4", "--lr=0.01", "--epochs=2", "--seed=5",
]


def read(path):
    return path.read_bytes()


class TestMain:
    def test_synth_artifacts(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main([
            "synth", "-o", str(out),
            "--synth_n=6", "--synth_g=3", "--synth_length=200", "--seed=1",
        ])
        assert code == 0
        assert (out / "config.echo").exists()
        sidecar = json.loads((out / "labels.json").read_text())
        assert sidecar["labels"] == [0, 1, 2, 0, 1, 2]
        assert len(sidecar["prototypes"]) == 3
        for proto in sidecar["prototypes"]:
            assert set(proto) == {"bins", "amps"}
            assert len(proto["bins"]) == len(proto["amps"])
        data = (out / "data.csv").read_text().splitlines()
        assert data[0] == "v000,v001,v002,v003,v004,v005"
        assert len(data) == 201
        assert "synth: wrote 6 variates" in capsys.readouterr().out

    def test_hash_fixture_groups(self, tmp_path, capsys):
        csv_path = tmp_path / "fig.csv"
        fig4a_csv(csv_path)
        out = tmp_path / "o"
        code = main([
            "hash", "-o", str(out),
            f"--data={csv_path}", "--k=3", "--epsilon=25", "--T=96",
        ])
        assert code == 0
        payload = json.loads((out / "hashes.json").read_text())
        assert payload["hashes"] == ["4-12-8", "12-4-8"]
        assert payload["groups"] == {"4-12-8": [0], "12-4-8": [1]}
        assert payload["k"] == 3
        assert "2 variates -> 2 groups" in capsys.readouterr().out

    def test_reduce_report_schema(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "reduce", "-o", str(out),
            "--synth_n=12", "--synth_g=3", "--synth_length=192",
            "--T=96", "--gs=2", "--seed=4",
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"gs", "seed", "retained", "delta", "per_group"}
        assert report["gs"] == 2
        assert len(report["retained"]) == 6
        assert report["delta"] == 0.5
        assert all(len(v) == 2 for v in report["per_group"].values())
        rows = (out / "reduction.csv").read_text().splitlines()
        assert rows[0] == "iteration,tokens_used,delta"
        assert rows[1].startswith("0,6,0.5")

    def test_analyze_artifacts(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main([
            "analyze", "-o", str(out),
            "--synth_n=8", "--synth_g=2", "--synth_length=300",
            "--T=48", "--epsilon=24", "--shift_count=3", "--seed=2",
        ])
        assert code == 0
        corr = (out / "corr_matrix.csv").read_text().splitlines()
        assert corr[0] == "v000,v001,v002,v003,v004,v005,v006,v007"
        assert len(corr) == 9
        hist = (out / "redundancy.csv").read_text().splitlines()
        assert hist[0] == "bin,count"
        assert len(hist) == 41
        counts = [int(line.split(",")[1]) for line in hist[1:]]
        assert sum(counts) == 8
        shift = json.loads((out / "shift.json").read_text())
        assert set(shift) == {"T", "starts", "max_shift", "mean_frobenius",
                              "pair_shift"}
        assert len(shift["starts"]) == 3
        assert "strong_frac" in capsys.readouterr().out

    def test_train_artifacts(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main(["train", "-o", str(out)] + TINY_TRAIN)
        assert code == 0
        for name in ("config.echo", "metrics.csv", "reduction.csv",
                     "hashes.json", "report.json", "checkpoint.npz",
                     "timing.txt"):
            assert (out / name).exists(), name
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "epoch,batch,loss,tokens_used,delta,flops"
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"epochs", "reduction", "flops", "val_loss",
                               "checkpoint"}
        assert len(report["epochs"]) == 2
        assert report["reduction"]["mean_tokens"] == 2.0  # two groups, gs=1
        assert report["flops"]["attention"] < report["flops"]["total"]
        ck = np.load(out / "checkpoint.npz")
        assert ck["w_embed"].shape == (24, 8)
        assert int(ck["seed"]) == 5
        lines = capsys.readouterr().out.splitlines()
        assert any(line.startswith("epoch 0: loss=") for line in lines)
        assert lines[-1].startswith("train: done, val_loss=")

    def test_train_dense_vs_reduced(self, tmp_path):
        out_on = tmp_path / "on"
        out_off = tmp_path / "off"
        assert main(["train", "-o", str(out_on)] + TINY_TRAIN) == 0
        assert main(
            ["train", "-o", str(out_off)] + TINY_TRAIN + ["--vardrop_on=false"]
        ) == 0
        echo_on = (out_on / "config.echo").read_text().splitlines()
        echo_off = (out_off / "config.echo").read_text().splitlines()
        diff = set(echo_on) ^ set(echo_off)
        assert diff == {"vardrop_on=true", "vardrop_on=false"}
        for line in (out_off / "reduction.csv").read_text().splitlines()[1:]:
            _, tokens, delta = line.split(",")
            assert tokens == "8"
            assert float(delta) == 0.0
        on_report = json.loads((out_on / "report.json").read_text())
        off_report = json.loads((out_off / "report.json").read_text())
        assert on_report["reduction"]["mean_delta"] > 0.5
        assert off_report["reduction"]["mean_delta"] == 0.0
        assert on_report["flops"]["total"] < off_report["flops"]["total"]

    def test_train_runs_are_byte_identical(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["train", "-o", str(out_a)] + TINY_TRAIN) == 0
        assert main(["train", "-o", str(out_b)] + TINY_TRAIN) == 0
        for name in ("config.echo", "metrics.csv", "reduction.csv",
                     "hashes.json", "report.json", "checkpoint.npz"):
            assert read(out_a / name) == read(out_b / name), name

    def test_sweep_csv(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "sweep", "-o", str(out),
            "--synth_n=8", "--synth_g=2", "--synth_length=400",
            "--T=24", "--H=8", "--epsilon=12", "--B=8",
            "--d=8", "--d_k=4", "--epochs=1", "--seed=6",
            "--sweep_ks=2,3", "--sweep_gss=1,4",
        ])
        assert code == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == "k,gs,delta,val_loss"
        assert len(rows) == 5
        assert [row.split(",")[:2] for row in rows[1:]] == [
            ["2", "1"], ["2", "4"], ["3", "1"], ["3", "4"],
        ]

    def test_bench_ratio(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main([
            "bench", "-o", str(out),
            "--bench_n=321", "--bench_delta=0.6333", "--T=96", "--d=512",
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_reduced"] == round(0.3667 * 321)
        predicted = (1.0 - 0.6333) ** 2
        assert math.isclose(report["predicted_ratio"], predicted, rel_tol=1e-9)
        assert abs(report["attention_ratio"] - predicted) < 2e-3
        assert abs(report["attention_ratio"] - 0.1345) < 1e-3
        for side in ("dense", "reduced"):
            assert set(report[side]) == {
                "embed", "qkv", "scores", "softmax", "context", "head",
                "attention", "total",
            }
        assert "bench: attention ratio" in capsys.readouterr().out

    def test_config_file_and_override_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed=5\nsynth_n=6\nsynth_g=3\nsynth_length=200\n")
        out = tmp_path / "o"
        code = main(["synth", "-c", str(cfg), "-o", str(out), "--seed=9"])
        assert code == 0
        echo = (out / "config.echo").read_text()
        assert "seed=9" in echo
        assert "synth_n=6" in echo

    def test_config_echo_round_trips(self, tmp_path):
        out = tmp_path / "o"
        assert main(["synth", "-o", str(out), "--synth_length=150"]) == 0
        raw = parse_config_file(str(out / "config.echo"))
        config = validate_config(raw)
        assert config == validate_config({"synth_length": "150"})


class TestExitCodes:
    def test_validation_error(self, tmp_path, capsys):
        code = main(["hash", "-o", str(tmp_path / "o"), "--epsilon=60"])
        assert code == 3
        err = capsys.readouterr().err
        assert err.startswith("error [validation]:")

    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\nx,4\n")
        code = main(["hash", "-o", str(tmp_path / "o"), f"--data={bad}", "--T=2",
                     "--epsilon=1", "--k=1"])
        assert code == 2
        assert "error [parse]:" in capsys.readouterr().err

    def test_io_error(self, tmp_path, capsys):
        code = main([
            "hash", "-o", str(tmp_path / "o"), "--data=/nonexistent/x.csv",
        ])
        assert code == 5
        assert "error [io]:" in capsys.readouterr().err

    def test_numeric_error(self, tmp_path, capsys):
        code = main(
            ["train", "-o", str(tmp_path / "o")] + TINY_TRAIN
            + ["--lr=1e9", "--epochs=4"]
        )
        assert code == 4
        assert "error [numeric]:" in capsys.readouterr().err

    def test_malformed_override(self, tmp_path, capsys):
        code = main(["synth", "-o", str(tmp_path / "o"), "--seed", "9"])
        assert code == 3
        assert "--key=value" in capsys.readouterr().err

    def test_sweep_k_above_epsilon_fails_at_run_time(self, tmp_path, capsys):
        code = main([
            "sweep", "-o", str(tmp_path / "o"),
            "--synth_n=8", "--synth_g=2", "--synth_length=400",
            "--T=24", "--H=8", "--epsilon=12", "--B=8",
            "--d=8", "--d_k=4", "--epochs=1",
            "--sweep_ks=13", "--sweep_gss=1",
        ])
        assert code == 3
        assert "error [validation]:" in capsys.readouterr().err

    def test_short_split_is_validation_error(self, tmp_path, capsys):
        code = main([
            "train", "-o", str(tmp_path / "o"),
            "--synth_n=4", "--synth_g=2", "--synth_length=300",
        ])
        assert code == 3
        assert "error [validation]:" in capsys.readouterr().err

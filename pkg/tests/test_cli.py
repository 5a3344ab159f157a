import hashlib
import json
from pathlib import Path

import pytest

from tapelab.cli import main, verify_manifest
from tapelab.sim import config_to_text

from conftest import small_config


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A small simulated run shared by the read-only CLI tests."""
    base = tmp_path_factory.mktemp("cli_run")
    cfg_path = base / "scenario.txt"
    cfg_path.write_text(config_to_text(
        small_config(seed=33, rate=8.0, duration_s=400, n_symbols=3)))
    out = base / "run"
    assert main(["simulate", "--config", str(cfg_path),
                 "--out", str(out)]) == 0
    return out


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out.strip()
    assert code == 0, out
    assert out.count("\n") == 0  # exactly one JSON line on stdout
    return json.loads(out)


def tape_digests(run: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(run.glob("*.tape"))}


class TestSimulate:
    def test_outputs_and_manifest(self, run_dir):
        manifest = verify_manifest(run_dir)
        assert set(manifest["tapes"]) == {"sip_a", "sip_b", "sip_c",
                                          "ground_truth"}
        assert (run_dir / "symbols.csv").exists()
        assert (run_dir / "config.txt").exists()
        counts = manifest["record_counts"]
        assert counts["ground_truth"] == (counts["sip_a"] + counts["sip_b"]
                                          + counts["sip_c"])
        assert set(manifest["timings_s"]) == {"generate", "consolidate",
                                              "write"}

    def test_seed_determinism_and_override(self, run_dir, tmp_path, capsys):
        cfg_path = tmp_path / "scenario.txt"
        cfg_path.write_text(config_to_text(
            small_config(seed=33, rate=8.0, duration_s=400, n_symbols=3)))
        again = tmp_path / "again"
        summary = run_json(capsys, ["simulate", "--config", str(cfg_path),
                                    "--out", str(again)])
        assert tape_digests(again) == tape_digests(run_dir)
        assert (summary["scenario_hash"]
                == json.loads((run_dir / "manifest.json").read_text())
                ["scenario_hash"])
        other = tmp_path / "other"
        run_json(capsys, ["simulate", "--config", str(cfg_path),
                          "--seed", "99", "--out", str(other)])
        assert tape_digests(other) != tape_digests(run_dir)

    def test_config_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("seed = 1\n")
        code = main(["simulate", "--config", str(bad),
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert "symbol" in capsys.readouterr().err

    def test_missing_config_exit_4(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "nope.txt"),
                     "--out", str(tmp_path / "x")])
        assert code == 4


class TestAnalyze:
    def test_oos_json_schema(self, run_dir, capsys):
        tape = str(run_dir / "sip_c.tape")
        summary = run_json(capsys, ["analyze", "oos", "--tape", tape,
                                    "--symbol", "SYM0"])
        assert {"with_trf", "ex_trf", "oos_percent", "oos_count",
                "total_trades", "outputs"} <= set(summary)
        again = run_json(capsys, ["analyze", "oos", "--tape", tape,
                                  "--symbol", "SYM0"])
        assert set(summary) == set(again)

    def test_oos_zero_latency_ground_truth(self, run_dir, capsys):
        summary = run_json(capsys, ["analyze", "oos",
                                    "--tape", str(run_dir / "ground_truth.tape"),
                                    "--symbol", "SYM0"])
        assert summary["oos_percent"] == 0.0

    def test_unknown_ticker_exit_4(self, run_dir, capsys):
        code = main(["analyze", "oos", "--tape", str(run_dir / "sip_c.tape"),
                     "--symbol", "ZZZZ"])
        assert code == 4
        assert "ZZZZ" in capsys.readouterr().err

    def test_missing_symbol_flag_exit_2(self, run_dir, capsys):
        code = main(["analyze", "oos",
                     "--tape", str(run_dir / "sip_c.tape")])
        assert code == 2

    def test_latency(self, run_dir, tmp_path, capsys):
        summary = run_json(capsys, [
            "analyze", "latency", "--tape", str(run_dir / "sip_c.tape"),
            "--out", str(tmp_path)])
        assert summary["group_by"] == "sip_exchange"
        assert len(summary["groups"]) >= 1
        assert (tmp_path / "latency_all.csv").exists()

    def test_nbbo_and_windows_and_returns(self, run_dir, tmp_path, capsys):
        tape = str(run_dir / "sip_c.tape")
        nbbo = run_json(capsys, ["analyze", "nbbo", "--tape", tape,
                                 "--symbol", "SYM0", "--out", str(tmp_path)])
        assert {"quotes", "crosses", "locks", "time_in_state_us"} <= set(nbbo)
        windows = run_json(capsys, ["analyze", "windows", "--tape", tape,
                                    "--symbol", "SYM0",
                                    "--out", str(tmp_path)])
        assert windows["messages"] > 0
        returns = run_json(capsys, ["analyze", "returns", "--tape", tape,
                                    "--symbol", "SYM0"])
        assert {"n_returns", "mismatch_count", "sign_flip_count"} <= set(returns)

    def test_descriptive_and_scatter_and_trend(self, run_dir, tmp_path,
                                               capsys):
        tapes = [str(run_dir / f"sip_{s}.tape") for s in "abc"]
        argv = ["analyze", "descriptive"]
        for t in tapes:
            argv += ["--tape", t]
        argv += ["--out", str(tmp_path)]
        desc = run_json(capsys, argv)
        assert desc["total_trades"] > 0
        argv = ["analyze", "scatter"]
        for t in tapes:
            argv += ["--tape", t]
        argv += ["--out", str(tmp_path)]
        scatter = run_json(capsys, argv)
        assert scatter["symbols"] == 3
        argv = ["analyze", "trend"]
        for t in tapes:
            argv += ["--tape", t]
        argv += ["--out", str(tmp_path)]
        trend = run_json(capsys, argv)
        assert "slope" in trend and "r_squared" in trend

    def test_corrupt_tape_exit_3(self, run_dir, tmp_path, capsys):
        bad = tmp_path / "bad.tape"
        bad.write_bytes(b"NOTATAPE" + bytes(64))
        (tmp_path / "symbols.csv").write_text(
            (run_dir / "symbols.csv").read_text())
        code = main(["analyze", "latency", "--tape", str(bad)])
        assert code == 3

    def test_missing_tape_exit_4(self, tmp_path):
        code = main(["analyze", "latency",
                     "--tape", str(tmp_path / "absent.tape")])
        assert code == 4

    def test_inputs_never_mutated(self, run_dir, tmp_path, capsys):
        tape = run_dir / "sip_c.tape"
        before = hashlib.sha256(tape.read_bytes()).hexdigest()
        run_json(capsys, ["analyze", "oos", "--tape", str(tape),
                          "--symbol", "SYM0", "--out", str(tmp_path)])
        run_json(capsys, ["analyze", "nbbo", "--tape", str(tape),
                          "--symbol", "SYM0", "--out", str(tmp_path)])
        assert hashlib.sha256(tape.read_bytes()).hexdigest() == before


class TestReport:
    def test_report_idempotent(self, run_dir, capsys):
        assert main(["report", str(run_dir)]) == 0
        capsys.readouterr()
        rep = run_dir / "report"
        first = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                 for p in sorted(rep.iterdir())}
        manifest_first = (run_dir / "manifest.json").read_bytes()
        assert main(["report", str(run_dir)]) == 0
        capsys.readouterr()
        second = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                  for p in sorted(rep.iterdir())}
        assert first == second
        assert (run_dir / "manifest.json").read_bytes() == manifest_first

    def test_table_sorted_by_volume(self, run_dir):
        lines = (run_dir / "report" / "table1.csv").read_text().splitlines()
        assert lines[0].startswith("ticker,oos_percent,total_trades,listing")
        totals = [int(line.split(",")[2]) for line in lines[1:]]
        assert totals == sorted(totals, reverse=True)
        assert len(totals) == 3

    def test_manifest_analyses_filled(self, run_dir):
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["analyses"]

    def test_missing_tape_exit_4(self, run_dir, tmp_path, capsys):
        import shutil
        broken = tmp_path / "broken"
        shutil.copytree(run_dir, broken)
        (broken / "sip_b.tape").unlink()
        code = main(["report", str(broken)])
        assert code == 4
        assert "sip_b.tape" in capsys.readouterr().err

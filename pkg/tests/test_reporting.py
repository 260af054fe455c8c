"""Tests for src/reporting.py — CSV/JSON/binary output generation and the manifest."""

import json

import numpy as np
import pandas as pd
import pytest

from src.diagnostics import summarize_chains
from src.errors import InputValidationError
from src.reporting import (
    DRAWS_HEADER_SIZE,
    build_manifest,
    config_digest,
    draws_frame,
    estimates_frame,
    read_draws_binary,
    to_json,
    write_all_outputs,
    write_csv,
    write_draws_binary,
    write_json,
)
from src.sampler import SamplerConfig, run_chain


@pytest.fixture
def chains(small_design, half_hyper):
    cfg = SamplerConfig(burn_in=10, draws=25, seed=4)
    return [run_chain(small_design, half_hyper, cfg, chain=m) for m in range(2)]


class TestJson:
    def test_non_finite_become_null(self):
        data = json.loads(to_json({"a": float("nan"), "b": float("inf"), "c": -float("inf"), "d": 1.5}))
        assert data == {"a": None, "b": None, "c": None, "d": 1.5}

    def test_numpy_values(self):
        data = json.loads(to_json({"x": np.arange(3), "y": np.float64(2.0), "z": np.int64(4)}))
        assert data == {"x": [0, 1, 2], "y": 2.0, "z": 4}

    def test_sorted_keys(self):
        assert to_json({"b": 1, "a": 2}).index('"a"') < to_json({"b": 1, "a": 2}).index('"b"')

    def test_write_leaves_no_temp_files(self, tmp_path):
        write_json({"k": 1}, tmp_path / "out.json")
        assert [p.name for p in tmp_path.iterdir()] == ["out.json"]

    def test_digest_depends_on_content(self):
        assert config_digest({"a": 1}) == config_digest({"a": 1})
        assert config_digest({"a": 1}) != config_digest({"a": 2})


class TestCsv:
    def test_round_trip_precision(self, tmp_path):
        value = 0.1 + 0.2
        write_csv(pd.DataFrame({"v": [value]}), tmp_path / "t.csv")
        assert pd.read_csv(tmp_path / "t.csv")["v"].iloc[0] == value

    def test_unix_newlines(self, tmp_path):
        write_csv(pd.DataFrame({"v": [1, 2]}), tmp_path / "t.csv")
        assert b"\r\n" not in (tmp_path / "t.csv").read_bytes()


class TestDraws:
    def test_frame_has_chain_column(self, chains):
        df = draws_frame(chains)
        assert df.columns[0] == "chain"
        assert len(df) == 50
        assert df["chain"].tolist() == [0] * 25 + [1] * 25

    def test_binary_round_trip(self, chains, tmp_path):
        path = tmp_path / "draws.bin"
        write_draws_binary(chains, path)
        matrix, n_chains = read_draws_binary(path)
        assert n_chains == 2
        assert np.array_equal(matrix, np.vstack([c.matrix() for c in chains]))
        assert path.stat().st_size == DRAWS_HEADER_SIZE + matrix.size * 8

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"x" * 80)
        with pytest.raises(InputValidationError):
            read_draws_binary(path)


class TestOutputs:
    def test_write_all_csv(self, chains, tmp_path):
        manifest = build_manifest("fit", {"data": "d.csv"}, tmp_path, {"seed": 4}, 4, [])
        outputs = write_all_outputs(chains, summarize_chains(chains), tmp_path, "csv", manifest)
        assert sorted(outputs) == ["draws.csv", "manifest.json", "summary.csv"]
        written = json.loads((tmp_path / "manifest.json").read_text())
        assert written["command"] == "fit"
        assert written["draw_columns"][0] == "chain"
        assert len(written["hyperparameters"]) == 2
        summary = pd.read_csv(tmp_path / "summary.csv")
        assert "psrf" in summary.columns and len(summary) == 6

    def test_write_all_binary(self, chains, tmp_path):
        manifest = build_manifest("fit", {}, tmp_path, {}, 4, [])
        write_all_outputs(chains, summarize_chains(chains), tmp_path, "binary", manifest)
        written = json.loads((tmp_path / "manifest.json").read_text())
        assert written["outputs"] == ["draws.bin", "manifest.json", "summary.csv"]
        assert written["draw_columns"] == chains[0].column_names()

    def test_manifest_fields(self, tmp_path):
        m = build_manifest("simulate", {"scenario": "s.json"}, tmp_path, {"n": 1}, 7, ["b", "a"])
        assert m["outputs"] == ["a", "b"]
        assert m["seed"] == 7 and m["version"]
        assert m["config_digest"] == config_digest({"n": 1})


class TestEstimatesFrame:
    def test_long_layout(self):
        truths = np.array([[1.0, 0.0], [1.0, 0.0]])
        df = estimates_frame(truths, {"ols": truths + 0.1}, ["x1", "x2"])
        assert len(df) == 4
        assert df.loc[df["method"] == "ols", "x1"].tolist() == [1.1, 1.1]

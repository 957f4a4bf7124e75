import csv
import json

import numpy as np
import pytest

from signed_balance.dataio import (
    EdgeFormatError,
    emit_outputs,
    load_fit_config,
    load_model,
    parse_edge_csv,
    read_edge_file,
    read_strata,
    write_edge_csv,
    write_json,
)
from signed_balance.estimation import FitConfig, fit_joint
from signed_balance.graph import from_edge_list
from signed_balance.model import ExplicitPolar, LatentParams, LinearPolar


class TestParseEdges:
    def test_single_edge_without_header(self):
        data = parse_edge_csv("a,b,1\n")
        assert data.edges == [(0, 1, 1)] and data.labels == {"a": 0, "b": 1}

    def test_header_and_first_appearance_order(self):
        data = parse_edge_csv("src,dst,sign\nz,y,-1\ny,x,+1\n")
        assert data.names == ["z", "y", "x"]
        A = data.adjacency()
        assert A.entries[0, 1] == -1 and A.entries[1, 2] == 1

    def test_conflicting_duplicate(self):
        with pytest.raises(EdgeFormatError, match="conflicting"):
            parse_edge_csv("a,b,1\nb,a,-1\n")

    def test_same_sign_duplicate_merges(self):
        assert len(parse_edge_csv("a,b,1\nb,a,1\n").edges) == 1

    @pytest.mark.parametrize("text, match", [("a,b,maybe\n", "unknown sign"), ("a,a,1\n", "self-loop"),
                                             ("a,b\n", "expected 3 fields"), (",b,1\n", "empty")])
    def test_malformed(self, text, match):
        with pytest.raises(EdgeFormatError, match=match):
            parse_edge_csv(text)

    def test_majority_years_tie_is_negative(self):
        rows = [f"us,uk,{y},alliance" for y in (1940, 1941, 1942)] + [f"uk,us,{y},dispute" for y in (1943, 1944, 1945)]
        data = parse_edge_csv("src,dst,year,type\n" + "\n".join(rows), majority_years=True)
        assert data.edges == [(0, 1, -1)]

    def test_majority_years_strict_majority(self):
        text = "a,b,1940,1\na,b,1941,1\na,b,1941,1\nb,a,1942,-1\nc,a,1940,-1\n"
        data = parse_edge_csv(text, majority_years=True)
        assert sorted(data.edges) == [(0, 1, 1), (0, 2, -1)]

    def test_round_trip_through_file(self, tmp_path):
        A = from_edge_list([(0, 1, 1), (1, 2, -1), (0, 3, 1)], 4)
        write_edge_csv(A, tmp_path / "e.csv", ["n0", "n1", "n2", "n3"])
        data = read_edge_file(tmp_path / "e.csv")
        order = [data.labels[f"n{i}"] for i in range(4)]
        assert np.array_equal(data.adjacency().entries[np.ix_(order, order)], A.entries)

    def test_strata(self, tmp_path):
        data = parse_edge_csv("a,b,1\nb,c,-1\n")
        (tmp_path / "s.csv").write_text("src,dst,stratum\nb,a,x\nc,b,y\n")
        assert read_strata(tmp_path / "s.csv", data.labels) == {(0, 1): "x", (1, 2): "y"}
        (tmp_path / "bad.csv").write_text("a,q,x\n")
        with pytest.raises(EdgeFormatError, match="unknown node"):
            read_strata(tmp_path / "bad.csv", data.labels)


class TestSerialisation:
    def test_model_json_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        p = LatentParams(rng.standard_normal(6) / 3, rng.standard_normal((6, 2)) * 1e-7,
                         LinearPolar(rng.standard_normal(2), np.pi))
        write_json({"params": p.to_dict()}, tmp_path / "m.json")
        q = load_model(tmp_path / "m.json")
        assert np.array_equal(p.alpha, q.alpha) and np.array_equal(p.Z, q.Z)
        assert np.array_equal(p.polar.w, q.polar.w) and p.polar.gamma == q.polar.gamma

    def test_fit_config_overrides(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"k": 3, "lambda": 0.2, "tau": 1.0}))
        cfg = load_fit_config(tmp_path / "c.json", lam=0.7, seed=None)
        assert (cfg.k, cfg.lam, cfg.tau) == (3, 0.7, 1.0)
        assert load_fit_config(None) == FitConfig()

    def test_emit_outputs_for_a_fit(self, tmp_path):
        A = from_edge_list([(0, 1, 1), (1, 2, 1), (0, 2, 1), (2, 3, -1), (3, 4, -1), (1, 4, 1), (0, 5, -1)], 6)
        res = fit_joint(A, FitConfig(k=1, max_iter=50))
        files = emit_outputs(res, tmp_path / "out", labels=list("abcdef"))
        with open(files["embedding"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["label", "alpha", "z_1", "v"]
        assert len(rows) == 7 and all(len(r) == 1 + 3 for r in rows)
        with open(files["trace"]) as fh:
            trace = list(csv.DictReader(fh))
        assert list(trace[0]) == ["iter", "objective", "grad_norm"]
        assert len(trace) == res.iterations + 1
        doc = json.loads(files["model"].read_text())
        assert doc["labels"] == list("abcdef") and doc["iterations"] == res.iterations

    def test_three_node_embedding_shape(self, tmp_path):
        p = LatentParams(np.zeros(3), np.ones((3, 2)), ExplicitPolar(np.arange(3.0)))
        files = emit_outputs(p, tmp_path)
        rows = list(csv.reader(open(files["embedding"])))
        assert len(rows) - 1 == 3 and len(rows[0]) == 2 + 3
        assert "trace" not in files

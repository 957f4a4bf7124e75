"""Reading edge lists and configs, writing fitted models, traces and embeddings.

Node labels are strings everywhere in this module; integer indices are an
internal detail assigned in order of first appearance.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Hashable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .estimation import FitConfig, FitResult
from .graph import SignedAdjacency, from_edge_list
from .model import LatentParams

POSITIVE_TOKENS = {"1", "+1", "+", "pos", "positive", "ally", "alliance"}
NEGATIVE_TOKENS = {"-1", "-", "neg", "negative", "enemy", "dispute", "conflict"}


class EdgeFormatError(ValueError):
    """An edge file could not be parsed."""


@dataclass(frozen=True)
class EdgeData:
    edges: list[tuple[int, int, int]]
    labels: dict[str, int]

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def names(self) -> list[str]:
        return sorted(self.labels, key=self.labels.__getitem__)

    def adjacency(self) -> SignedAdjacency:
        return from_edge_list(self.edges, self.n)


def _parse_sign(token: str, lineno: int) -> int:
    t = token.strip().lower()
    if t in POSITIVE_TOKENS:
        return 1
    if t in NEGATIVE_TOKENS:
        return -1
    raise EdgeFormatError(f"line {lineno}: unknown sign token {token!r}")


def _rows(stream: IO[str] | str, header: tuple[str, ...]):
    """Yield ``(lineno, fields)`` skipping blanks, comments and an optional header."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, row in enumerate(csv.reader(stream), start=1):
        fields = [f.strip() for f in row]
        if not fields or all(f == "" for f in fields) or fields[0].startswith("#"):
            continue
        if lineno == 1 and tuple(f.lower() for f in fields) == header:
            continue
        if len(fields) != len(header):
            raise EdgeFormatError(f"line {lineno}: expected {len(header)} fields "
                                  f"({','.join(header)}), got {len(fields)}")
        yield lineno, fields


def _index(labels: dict[str, int], name: str) -> int:
    if name not in labels:
        labels[name] = len(labels)
    return labels[name]


def parse_edge_csv(stream: IO[str] | str, majority_years: bool = False) -> EdgeData:
    """Parse a signed edge list.

    The default format is ``src,dst,sign`` with signs such as ``1``/``-1``
    (header optional). With ``majority_years`` the input is the long format
    ``src,dst,year,type`` and each pair is signed positive only when it has
    strictly more distinct positive years than negative ones, so ties become
    negative. Repeated pairs with the same sign are merged; conflicting signs,
    self-loops and malformed rows raise ``EdgeFormatError``.
    """
    labels: dict[str, int] = {}
    if not majority_years:
        signs: dict[tuple[int, int], int] = {}
        for lineno, (src, dst, token) in _rows(stream, ("src", "dst", "sign")):
            if not src or not dst:
                raise EdgeFormatError(f"line {lineno}: empty node label")
            if src == dst:
                raise EdgeFormatError(f"line {lineno}: self-loop at {src!r}")
            s = _parse_sign(token, lineno)
            i, j = _index(labels, src), _index(labels, dst)
            key = (min(i, j), max(i, j))
            if signs.get(key, s) != s:
                raise EdgeFormatError(f"line {lineno}: conflicting duplicate for pair ({src}, {dst})")
            signs[key] = s
        return EdgeData([(i, j, s) for (i, j), s in signs.items()], labels)

    years: dict[tuple[int, int], tuple[set, set]] = {}
    for lineno, (src, dst, year, token) in _rows(stream, ("src", "dst", "year", "type")):
        if not src or not dst:
            raise EdgeFormatError(f"line {lineno}: empty node label")
        if src == dst:
            raise EdgeFormatError(f"line {lineno}: self-loop at {src!r}")
        if not year:
            raise EdgeFormatError(f"line {lineno}: empty year")
        s = _parse_sign(token, lineno)
        i, j = _index(labels, src), _index(labels, dst)
        pos, neg = years.setdefault((min(i, j), max(i, j)), (set(), set()))
        (pos if s > 0 else neg).add(year)
    edges = [(i, j, 1 if len(pos) > len(neg) else -1) for (i, j), (pos, neg) in years.items()]
    return EdgeData(edges, labels)


def read_edge_file(path: str | Path, majority_years: bool = False) -> EdgeData:
    with open(path, newline="") as fh:
        return parse_edge_csv(fh, majority_years)


def read_strata(path: str | Path, labels: Mapping[str, int]) -> dict[tuple[int, int], Hashable]:
    """Read ``src,dst,stratum`` rows into the pair-to-label mapping used by the permutation test."""
    strata = {}
    with open(path, newline="") as fh:
        for lineno, (src, dst, label) in _rows(fh, ("src", "dst", "stratum")):
            if src not in labels or dst not in labels:
                raise EdgeFormatError(f"line {lineno}: unknown node in stratum row ({src}, {dst})")
            i, j = labels[src], labels[dst]
            strata[(min(i, j), max(i, j))] = label
    return strata


def write_edge_csv(A: SignedAdjacency, path: str | Path, names: list[str] | None = None) -> None:
    rows, cols, signs = A.edges()
    names = names or [str(i) for i in range(A.n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("src", "dst", "sign"))
        for i, j, s in zip(rows, cols, signs):
            writer.writerow((names[i], names[j], int(s)))


def write_json(obj, path: str | Path) -> None:
    # json writes floats with repr, which round-trips doubles exactly
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, allow_nan=True)
        fh.write("\n")


def read_json(path: str | Path):
    with open(path) as fh:
        return json.load(fh)


def load_model(path: str | Path) -> LatentParams:
    d = read_json(path)
    return LatentParams.from_dict(d.get("params", d))


def load_fit_config(path: str | Path | None, **overrides) -> FitConfig:
    base = {} if path is None else read_json(path)
    if "lambda" in base:
        base["lam"] = base.pop("lambda")
    base.update({k: v for k, v in overrides.items() if v is not None})
    return FitConfig.from_dict(base)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_trace(fit: FitResult, path: str | Path) -> None:
    """``iter,objective,grad_norm``; row 0 is the starting point and has no gradient norm."""
    grads = np.concatenate([[np.nan], fit.grad_norm_trace])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iter", "objective", "grad_norm"))
        for it, (val, g) in enumerate(zip(fit.objective_trace, grads)):
            writer.writerow((it, repr(float(val)), repr(float(g))))


def emit_outputs(result: FitResult | LatentParams, out_path: str | Path, labels: list[str] | None = None,
                 extra: dict | None = None, traces: Mapping[str, FitResult] | None = None) -> dict[str, Path]:
    """Write ``model.json``, ``trace.csv`` and ``embedding.csv`` into ``out_path``.

    The embedding has one row per node, ``label,alpha,z_1..z_k,v``. ``traces``
    maps stage names to fits in running order; the last one is written to
    ``trace.csv`` and earlier ones to ``trace_<stage>.csv``. By default a
    ``FitResult`` contributes its own trace.
    """
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    params = result.params if isinstance(result, FitResult) else result
    if traces is None and isinstance(result, FitResult):
        traces = {"fit": result}
    files = {}

    doc = {"params": params.to_dict()}
    if isinstance(result, FitResult):
        doc.update(iterations=result.iterations, converged=result.converged,
                   diagnostics=_jsonable(result.diagnostics))
    if labels is not None:
        doc["labels"] = list(labels)
    if extra:
        doc.update(_jsonable(extra))
    files["model"] = out / "model.json"
    write_json(doc, files["model"])

    if traces:
        # the last stage is the one that produced the returned parameters
        stages = list(traces.items())
        for pos, (stage, fit) in enumerate(stages):
            name = "trace.csv" if pos == len(stages) - 1 else f"trace_{stage}.csv"
            files["trace" if pos == len(stages) - 1 else f"trace_{stage}"] = out / name
            write_trace(fit, out / name)

    if params.alpha is not None and params.Z is not None:
        files["embedding"] = out / "embedding.csv"
        names = labels or [str(i) for i in range(params.n)]
        v = params.v if params.polar is not None else np.full(params.n, np.nan)
        with open(files["embedding"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("label", "alpha", *(f"z_{c + 1}" for c in range(params.k)), "v"))
            for i in range(params.n):
                writer.writerow((names[i], repr(float(params.alpha[i])),
                                 *(repr(float(z)) for z in params.Z[i]), repr(float(v[i]))))
    return files

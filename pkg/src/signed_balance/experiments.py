"""Simulation sweeps: ground-truth generation, fitting with each method, error tables."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimation import (
    FitConfig,
    WarmInit,
    default_one_step_size,
    fit_joint,
    fit_separate_edges,
    fit_separate_signs,
    one_step_joint,
)
from .model import ExplicitPolar, LatentParams, LinearPolar, build_eta, build_theta, sample_network
from .objective import relative_errors, sign_distance

logger = logging.getLogger(__name__)

METHODS = ("separate", "one_step_joint", "joint")
COLUMNS = ("method", "n", "k", "alpha_offset", "gamma_star", "rep", "err_Z", "err_v", "err_Theta",
           "err_eta", "err_v_centered", "density", "positive_fraction")
ERROR_FIELDS = ("err_Z", "err_v", "err_Theta", "err_eta", "err_v_centered")


@dataclass(frozen=True)
class SimConfig:
    """One cell of a simulation sweep.

    ``alpha_offset`` shifts every degree parameter down (sparser networks) and
    ``gamma_star`` is the intercept of the polar rule (more positive edges).
    ``w_scale`` multiplies the default polar slope ``1_k / sqrt(k)``.
    """

    n: int
    k: int = 2
    alpha_offset: float = 0.0
    gamma_star: float = 0.0
    reps: int = 20
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    w_scale: float = 1.0
    lam: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.k < 1 or self.n < 3 * self.k:
            raise ValueError(f"need k >= 1 and n >= 3k, got n={self.n}, k={self.k}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.alpha_offset < 0:
            raise ValueError("alpha_offset must be nonnegative")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown SimConfig fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["lambda"] = d.pop("lam")
        return d


def _rep_seeds(seed: int, rep: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent (truth, network) seed sequences for one replication."""
    truth, network = np.random.SeedSequence([seed, rep]).spawn(2)
    return truth, network


def make_ground_truth(config: SimConfig, rep: int = 0) -> LatentParams:
    """Draw ``(alpha*, Z*, w*, gamma*)`` for one replication.

    ``Z*`` has iid standard normal entries, is column-centred and then scaled by
    one global constant so that ``||Z* Z*^T||_F = n``. Degrees are
    ``alpha*_i = -alpha_offset - a_i / sum(a)`` with ``a_i ~ U(1, 3)``. The draws
    depend only on ``(seed, rep)``, so sweeping ``alpha_offset`` or
    ``gamma_star`` changes nothing else about the truth.
    """
    rng = np.random.default_rng(_rep_seeds(config.seed, rep)[0])
    Z = rng.standard_normal((config.n, config.k))
    Z -= Z.mean(axis=0)
    Z *= math.sqrt(config.n / np.linalg.norm(Z @ Z.T))
    a = rng.uniform(1.0, 3.0, config.n)
    alpha = -config.alpha_offset - a / a.sum()
    w = np.full(config.k, config.w_scale / math.sqrt(config.k))
    return LatentParams(alpha, Z, LinearPolar(w, config.gamma_star))


@dataclass
class ResultTable:
    """Rows of per-replication errors; failed fits carry NaN errors and an ``error`` note."""

    rows: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def ok_rows(self) -> list[dict]:
        return [r for r in self.rows if not r.get("error")]

    def failures(self) -> list[dict]:
        return [r for r in self.rows if r.get("error")]

    def column(self, name: str, **where) -> np.ndarray:
        return np.array([r[name] for r in self.ok_rows()
                         if all(r[key] == val for key, val in where.items())], dtype=float)

    def to_csv(self, path: str | Path) -> None:
        """Write the successful rows in the fixed column order."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for r in self.ok_rows():
                writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in COLUMNS])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResultTable":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                row = {c: rec[c] for c in COLUMNS}
                for c in ("n", "k", "rep"):
                    row[c] = int(row[c])
                for c in COLUMNS[3:]:
                    if c != "rep":
                        row[c] = float(row[c])
                rows.append(row)
        return cls(rows)


def _centered_error(v_hat: np.ndarray, v_star: np.ndarray) -> float:
    """``||J v_hat - kappa J v*|| / ||J v*||`` with ``kappa`` the sign aligning ``v_hat`` to ``v*``."""
    _, kappa = sign_distance(v_hat, v_star)
    jh, js = v_hat - v_hat.mean(), v_star - v_star.mean()
    return float(np.linalg.norm(jh - kappa * js) / np.linalg.norm(js))


def _errors(est: LatentParams, truth: LatentParams) -> dict[str, float]:
    errs = relative_errors(est, truth)
    errs["err_v_centered"] = _centered_error(est.v, truth.v)
    return {key: float(val) for key, val in errs.items()}


def _run_rep(config: SimConfig, rep: int, fit_config: FitConfig) -> list[dict]:
    truth = make_ground_truth(config, rep)
    A = sample_network(build_theta(truth.alpha, truth.Z), build_eta(truth), seed=_rep_seeds(config.seed, rep)[1])
    base = {"n": config.n, "k": config.k, "alpha_offset": float(config.alpha_offset),
            "gamma_star": float(config.gamma_star), "rep": rep,
            "density": A.density(), "positive_fraction": A.positive_fraction()}
    fit_config = replace(fit_config, k=config.k, lam=config.lam)

    def failed(method, exc):
        logger.warning("fit %s failed for n=%d rep=%d: %s", method, config.n, rep, exc)
        return {"method": method, **base, **{f: float("nan") for f in ERROR_FIELDS}, "error": str(exc)}

    rows = []
    try:
        edges = fit_separate_edges(A, fit_config)
        signs = fit_separate_signs(A, fit_config)
    except Exception as exc:  # noqa: BLE001 - any fit failure is recorded, never fatal
        return [failed(m, exc) for m in config.methods]
    separate = LatentParams(edges.params.alpha, edges.params.Z, signs.params.polar)
    for method in config.methods:
        try:
            if method == "separate":
                est = separate
            elif method == "one_step_joint":
                tau_z = default_one_step_size(separate.Z, separate.v, fit_config.tau)
                Z_hat, v_bar, _, _ = one_step_joint(A, separate.alpha, separate.Z, separate.v, config.lam, tau_z)
                est = LatentParams(separate.alpha, Z_hat, ExplicitPolar(v_bar))
            else:
                est = fit_joint(A, replace(fit_config, init=WarmInit(separate))).params
            errs = _errors(est, truth)
            if not all(math.isfinite(e) for e in errs.values()):
                raise FloatingPointError("non-finite error metric")
            rows.append({"method": method, **base, **errs, "error": ""})
        except Exception as exc:  # noqa: BLE001
            rows.append(failed(method, exc))
    return rows


def run_experiment(sweep: Sequence[SimConfig], fit_config: FitConfig | None = None,
                   progress: bool = False) -> ResultTable:
    """Simulate and fit every ``config x rep`` cell of the sweep.

    Each replication draws its truth and network from ``SeedSequence([seed, rep])``,
    so rows are reproducible on their own and independent of sweep order. The
    separate fit is shared by the three methods: one-step starts from it and
    the joint fit is warm-started at it.
    """
    if not sweep:
        raise ValueError("sweep is empty")
    fit_config = fit_config or FitConfig()
    table = ResultTable()
    for config in sweep:
        for rep in range(config.reps):
            table.rows.extend(_run_rep(config, rep, fit_config))
            if progress:
                logger.info("n=%d k=%d offset=%g gamma=%g rep %d/%d done", config.n, config.k,
                            config.alpha_offset, config.gamma_star, rep + 1, config.reps)
    return table


def fit_slope(table: ResultTable | Iterable[dict], x_field: str, y_field: str,
              group: str | Sequence[str] = "method") -> dict:
    """Least-squares slope of ``log(mean y)`` against ``log(x)`` within each group.

    Returns ``{group_value: slope}``; with several group fields the keys are tuples.
    """
    rows = table.ok_rows() if isinstance(table, ResultTable) else list(table)
    keys = (group,) if isinstance(group, str) else tuple(group)
    cells: dict = {}
    for r in rows:
        g = r[keys[0]] if len(keys) == 1 else tuple(r[key] for key in keys)
        cells.setdefault(g, {}).setdefault(float(r[x_field]), []).append(float(r[y_field]))
    if not cells:
        raise ValueError("no rows to fit")
    slopes = {}
    for g, by_x in cells.items():
        if len(by_x) < 2:
            raise ValueError(f"group {g!r} has fewer than 2 distinct {x_field} values")
        xs = np.array(sorted(by_x))
        ys = np.array([np.mean(by_x[x]) for x in xs])
        if np.any(xs <= 0) or np.any(ys <= 0):
            raise ValueError(f"group {g!r} has nonpositive values; logs are undefined")
        slopes[g] = float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
    return slopes


def load_sweep(path: str | Path) -> list[SimConfig]:
    """Read a JSON list of ``SimConfig`` objects."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = [data]
    return [SimConfig.from_dict(d) for d in data]

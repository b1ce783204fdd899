"""Flat ``section.key=value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Matrices use ``;`` between rows
and ``,`` between entries.  ``emit`` writes every key in canonical order, so
``emit(parse(emit(c))) == emit(c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, LipschitzOnlineError
from ..harness import RetrainPolicy
from ..losses import LOSS_KINDS, make_loss
from ..processes import build_ar, build_markov

BASELINES = ("oracle", "histogram", "constant")


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.split(",")] if s.strip() else []


def _ints(s: str) -> list[int]:
    return [int(t) for t in s.split(",")] if s.strip() else []


def _matrix(s: str) -> list[list[float]]:
    return [[float(t) for t in row.split(",")] for row in s.split(";")] if s.strip() else []


def _names(s: str) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()]


def _str(s: str) -> str:
    return s.strip()


def _fmt_float(v) -> str:
    return repr(float(v))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return ";".join(",".join(_fmt_float(x) for x in row) for row in v)
        return ",".join(_fmt_float(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


# key -> (parser, default)
SCHEMA: dict = {
    "process.kind": (_str, "markov"),
    "process.kernel": (_matrix, [[0.9, 0.1], [0.1, 0.9]]),
    "process.embedding": (_matrix, [[0.0], [1.0]]),
    "process.order": (_int, 1),
    "process.n": (_int, 1),
    "process.ergodic": (_bool, True),
    "process.ar.coefficients": (_floats, [0.5]),
    "process.ar.noise": (_float, 0.1),
    "process.ar.mean": (_float, 0.5),
    "process.ar.init": (_floats, [0.5]),
    "loss.kind": (_str, "squared"),
    "loss.tau": (_float, 0.5),
    "strategy.d": (_int, 1),
    "strategy.erm": (_bool, True),
    "strategy.fitter": (_str, "envelope"),
    "strategy.L0": (_float, 1.0),
    "strategy.frozen": (_bool, False),
    "strategy.retrain": (_str, "doubling"),
    "strategy.baselines": (_names, ["oracle"]),
    "strategy.histogram.resolutions": (_ints, [1, 2, 4, 8]),
    "strategy.histogram.eta": (_float, 2.0),
    "strategy.mlp.layers": (_int, 2),
    "strategy.mlp.width": (_int, 16),
    "strategy.mlp.epochs": (_int, 50),
    "run.T": (_int, 10000),
    "run.seeds": (_ints, [0, 1, 2, 3, 4]),
    "run.out": (_str, "out"),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})
    lines: dict = field(default_factory=dict)  # key -> source line number

    def __getitem__(self, key):
        return self.values[key]

    def __setitem__(self, key, value):
        if key not in SCHEMA:
            raise ConfigError("unknown key", field=key)
        self.values[key] = value

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and emit(self) == emit(other)

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, line=self.lines.get(key), field=key)


def parse(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", line=lineno, field=key)
        if key in seen:
            raise ConfigError("duplicate key", line=lineno, field=key)
        seen.add(key)
        try:
            cfg.values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, field=key) from None
        cfg.lines[key] = lineno
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse(text)


def emit(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={_fmt(cfg.values[k])}\n" for k in SCHEMA)


def validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["process.kind"] not in ("markov", "ar"):
        raise cfg.error("must be 'markov' or 'ar'", "process.kind")
    if v["loss.kind"] not in LOSS_KINDS:
        raise cfg.error(f"must be one of {', '.join(LOSS_KINDS)}", "loss.kind")
    if not 0.0 < v["loss.tau"] < 1.0:
        raise cfg.error("must lie in (0, 1)", "loss.tau")
    if v["strategy.fitter"] not in ("envelope", "mlp"):
        raise cfg.error("must be 'envelope' or 'mlp'", "strategy.fitter")
    if not v["strategy.L0"] > 0:
        raise cfg.error("must be positive", "strategy.L0")
    if v["strategy.d"] < 0:
        raise cfg.error("must be >= 0", "strategy.d")
    try:
        RetrainPolicy.parse(v["strategy.retrain"])
    except (LipschitzOnlineError, ValueError) as exc:
        raise cfg.error(str(exc), "strategy.retrain") from None
    for b in v["strategy.baselines"]:
        if b not in BASELINES:
            raise cfg.error(f"unknown baseline {b!r}; expected {', '.join(BASELINES)}", "strategy.baselines")
    if not v["strategy.erm"] and not v["strategy.baselines"]:
        raise cfg.error("no strategy selected", "strategy.erm")
    if any(r < 1 for r in v["strategy.histogram.resolutions"]) or not v["strategy.histogram.resolutions"]:
        raise cfg.error("resolutions must be positive integers", "strategy.histogram.resolutions")
    if v["strategy.mlp.layers"] < 1 or v["strategy.mlp.width"] < 1 or v["strategy.mlp.epochs"] < 1:
        raise cfg.error("MLP sizes must be positive", "strategy.mlp.layers")
    if v["run.T"] < 2:
        raise cfg.error("must be >= 2", "run.T")
    if v["run.T"] <= v["strategy.d"]:
        raise cfg.error("horizon must exceed the memory d", "run.T")
    if not v["run.seeds"] or any(s < 0 or s >= 2**64 for s in v["run.seeds"]):
        raise cfg.error("need at least one seed in [0, 2^64)", "run.seeds")
    if len(set(v["run.seeds"])) != len(v["run.seeds"]):
        raise cfg.error("seeds must be distinct", "run.seeds")
    if v["process.kind"] == "markov" and "oracle" in v["strategy.baselines"] and v["strategy.d"] < v["process.order"]:
        raise cfg.error("oracle baseline needs strategy.d >= process.order", "strategy.d")


def build_process(cfg: ExperimentConfig):
    """Validated process object; kernel problems are reported against ``process.kernel``."""
    v = cfg.values
    if v["process.kind"] == "markov":
        emb = np.asarray(v["process.embedding"], dtype=float)
        try:
            return build_markov(v["process.kernel"], emb, v["process.order"], v["process.n"], ergodic=v["process.ergodic"])
        except LipschitzOnlineError as exc:
            key = "process.embedding" if "embedding" in str(exc) else "process.kernel"
            raise cfg.error(str(exc), key) from None
    try:
        proc = build_ar(v["process.ar.coefficients"], v["process.ar.noise"], v["process.ar.mean"], v["process.ar.init"])
    except (LipschitzOnlineError, ValueError) as exc:
        raise cfg.error(str(exc), "process.ar.coefficients") from None
    if v["process.n"] != 1:
        raise cfg.error("AR sources are scalar; set process.n=1", "process.n")
    return proc


def build_loss(cfg: ExperimentConfig):
    return make_loss(cfg["loss.kind"], cfg["loss.tau"])

"""Versioned flat-file format for fitted predictors.

Layout::

    lipschitz-predictor v1
    kind=envelope|mlp
    L=<budget>
    m_eff=<context dimension>
    dims=<comma-separated sizes>
    <body rows, comma-separated, row-major, 17 significant digits>

Envelope bodies hold one row per anchor (point coordinates then values).
MLP bodies hold, per layer, a ``layer <i> cap=<c>`` line, the weight rows,
and a ``bias`` line followed by the bias row.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .envelope import LipschitzFn
from .mlp import SpectralMLP

MAGIC = "lipschitz-predictor v1"


def _fmt(row) -> str:
    return ",".join(f"{float(v):.17g}" for v in row)


def _parse(line: str) -> list[float]:
    return [float(t) for t in line.split(",")] if line.strip() else []


def save_predictor(path, fn) -> None:
    lines = [MAGIC]
    if isinstance(fn, LipschitzFn):
        U = len(fn.points)
        lines += ["kind=envelope", f"L={fn.L:.17g}", f"m_eff={fn.m_eff}", f"dims={U},{fn.m_eff},{fn.n_out}"]
        lines += [_fmt(np.concatenate([p, v])) for p, v in zip(fn.points, fn.values)]
    elif isinstance(fn, SpectralMLP):
        dims = [fn.in_dim] + [W.shape[0] for W in fn.weights]
        lines += ["kind=mlp", f"L={fn.budget:.17g}", f"m_eff={fn.in_dim}", "dims=" + ",".join(map(str, dims))]
        for i, (W, b, c) in enumerate(zip(fn.weights, fn.biases, fn.caps)):
            lines.append(f"layer {i} cap={c:.17g}")
            lines += [_fmt(r) for r in W]
            lines += ["bias", _fmt(b)]
    else:
        raise ValidationError(f"cannot serialize {type(fn).__name__}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_predictor(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValidationError(f"{path}: not a {MAGIC} file")
    head = dict(l.split("=", 1) for l in lines[1:5])
    dims = [int(t) for t in head["dims"].split(",")]
    body = lines[5:]
    if head["kind"] == "envelope":
        U, m, n = dims
        rows = np.array([_parse(l) for l in body[:U]]).reshape(U, m + n)
        return LipschitzFn(rows[:, :m].copy(), rows[:, m:].copy(), float(head["L"]))
    if head["kind"] == "mlp":
        Ws, bs, caps = [], [], []
        pos = 0
        for i in range(len(dims) - 1):
            tag, cap = body[pos].split(" cap=")
            if tag != f"layer {i}":
                raise ValidationError(f"{path}: expected layer {i}, got {tag!r}")
            caps.append(float(cap))
            out, inp = dims[i + 1], dims[i]
            W = np.array([_parse(l) for l in body[pos + 1 : pos + 1 + out]]).reshape(out, inp)
            if body[pos + 1 + out] != "bias":
                raise ValidationError(f"{path}: missing bias for layer {i}")
            bs.append(np.array(_parse(body[pos + 2 + out])).reshape(out))
            Ws.append(W)
            pos += out + 3
        return SpectralMLP(Ws, bs, caps)
    raise ValidationError(f"{path}: unknown predictor kind {head['kind']!r}")

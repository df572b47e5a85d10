"""Parameter serialization: flat key=value text and JSON.

Flat format, one ``key = value`` pair per line:

* ``#`` starts a comment; blank lines are ignored.
* integers are decimal and round-trip bit-exactly;
* reals use Python's shortest round-tripping repr (<= 17 significant
  digits), so save -> load -> save is byte-stable;
* lists are comma-separated scalars; booleans are ``true``/``false``;
* bare words are strings.

Only the defining data is stored (mode, kmax, c, targets, block ranges);
derived quantities such as block masses and horizons are recomputed on
load, which keeps files small even when horizons have millions of digits.
"""

from __future__ import annotations

import json

from .blocks import (BlockSpec, MassTarget, SequenceParams, TargetKind,
                     parity_of)
from .errors import ParamsError
from .weights import WeightMode, build_weights

SCHEMA_VERSION = 1


def _scalar_to_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float, str)):
        return repr(v) if isinstance(v, float) else str(v)
    raise TypeError(f"unsupported scalar {type(v)!r}")


def _scalar_from_text(s: str):
    if s == "true":
        return True
    if s == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def encode_flat(entries: dict) -> str:
    lines = []
    for key, v in entries.items():
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            body = ",".join(_scalar_to_text(x) for x in v)
        else:
            body = _scalar_to_text(v)
        lines.append(f"{key} = {body}")
    return "\n".join(lines) + "\n"


def decode_flat(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError("malformed config line", line=lineno, text=raw)
        key, _, body = line.partition("=")
        body = body.strip()
        if "," in body:
            out[key.strip()] = [_scalar_from_text(p.strip())
                                for p in body.split(",")]
        else:
            out[key.strip()] = _scalar_from_text(body)
    return out


def params_to_dict(params: SequenceParams) -> dict:
    d = {
        "schema": SCHEMA_VERSION,
        "kmax": params.kmax,
        "weight_mode": params.weights.mode.value,
    }
    if params.weights.decay is not None:
        d["c"] = [float(x) for x in params.weights.decay]
    t = params.mass_target
    if t is not None:
        d["target_kind"] = t.kind.value
        d["target_tolerance"] = t.tolerance
        if t.kind is TargetKind.GEOMETRIC:
            d["target_rho"] = t.rho
        elif t.kind is TargetKind.EXPLICIT:
            d["target_explicit"] = list(t.explicit)
    d["block_k_lo"] = [b.k_lo for b in params.blocks]
    d["block_k_hi"] = [b.k_hi for b in params.blocks]
    d["block_target"] = [b.target for b in params.blocks]
    d["block_complete"] = [b.complete for b in params.blocks]
    return d


def params_from_dict(d: dict) -> SequenceParams:
    if d.get("schema") != SCHEMA_VERSION:
        raise ParamsError("unknown config schema", schema=d.get("schema"))
    mode = WeightMode(d["weight_mode"])
    c = d.get("c")
    if c is not None and not isinstance(c, list):
        c = [c]
    weights = build_weights(mode, int(d["kmax"]), c=c)
    target = None
    kind = d.get("target_kind")
    if kind is not None:
        tol = float(d.get("target_tolerance", 1.0))
        kind = TargetKind(kind)
        if kind is TargetKind.GEOMETRIC:
            target = MassTarget.geometric(float(d["target_rho"]), tol)
        elif kind is TargetKind.EXPLICIT:
            ex = d["target_explicit"]
            if not isinstance(ex, list):
                ex = [ex]
            target = MassTarget.explicit_targets(ex, tol)
        else:
            target = MassTarget.double_exp(tol)

    def as_list(key):
        v = d[key]
        return v if isinstance(v, list) else [v]

    los, his = as_list("block_k_lo"), as_list("block_k_hi")
    targets, completes = as_list("block_target"), as_list("block_complete")
    if not len(los) == len(his) == len(targets) == len(completes):
        raise ParamsError("block arrays must share one length")
    blocks = []
    for i, (lo, hi) in enumerate(zip(los, his)):
        l = i + 1
        blocks.append(BlockSpec(l, int(lo), int(hi),
                                weights.mass(int(lo), int(hi)), parity_of(l),
                                float(targets[i]), bool(completes[i])))
    return SequenceParams(weights, tuple(blocks), mass_target=target)


def params_to_text(params: SequenceParams) -> str:
    return encode_flat(params_to_dict(params))


def params_from_text(text: str) -> SequenceParams:
    return params_from_dict(decode_flat(text))


def params_to_json(params: SequenceParams) -> str:
    return json.dumps(params_to_dict(params), indent=2) + "\n"


def params_from_json(text: str) -> SequenceParams:
    return params_from_dict(json.loads(text))


def save_params(params: SequenceParams, path) -> None:
    text = (params_to_json(params) if str(path).endswith(".json")
            else params_to_text(params))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_params(path) -> SequenceParams:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        return params_from_json(text)
    return params_from_text(text)

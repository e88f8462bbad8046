"""JSON formats for channels and protocol plans.

Complex numbers are ``[re, im]`` pairs, matrices are lists of rows. Floats
are written with Python's shortest round-trip repr, so a plan written,
read back and written again is byte-identical.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np

from .core import CHANNEL_TOL, DensityOperator, KrausChannel, PureState, completeness_residual
from .errors import ChannelFileError, InvalidChannelError, ShapeError, SynthesisError
from .protocol import ProtocolPlan, Round, StatePairTransform

#: Channel files whose completeness residual exceeds this are rejected on load.
FILE_COMPLETENESS_TOL = 1e-6
PLAN_FORMAT = "opdisc-plan/1"

PathLike = Union[str, Path]


def render_json(data: Any) -> str:
    """Canonical machine output: two-space indent, keys in insertion order, trailing newline."""
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


# ==================================================================================================
# Encoding
# ==================================================================================================


def encode_vector(v: np.ndarray) -> List[List[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def encode_matrix(m: np.ndarray) -> List[List[List[float]]]:
    return [encode_vector(row) for row in np.asarray(m, dtype=complex)]


def channel_to_dict(channel: KrausChannel) -> dict:
    out = {"dim": channel.dim}
    if channel.name is not None:
        out["name"] = channel.name
    out["kraus"] = [encode_matrix(k) for k in channel.kraus]
    return out


def _transform_to_dict(tr: StatePairTransform) -> dict:
    return {
        "kraus": [encode_matrix(k) for k in tr.kraus],
        "source_a": encode_matrix(tr.source_a.matrix),
        "source_b": encode_vector(tr.source_b.amplitudes),
        "target_a": encode_vector(tr.target_a.amplitudes),
        "target_b": encode_vector(tr.target_b.amplitudes),
    }


def plan_to_dict(plan: ProtocolPlan) -> dict:
    return {
        "format": PLAN_FORMAT,
        "channel": channel_to_dict(plan.channel),
        "claimed_queries": plan.claimed_queries,
        "final_measurement_vector": encode_vector(plan.final_measurement_vector.amplitudes),
        "rounds": [
            {
                "index": r.index,
                "pre_transform": None if r.pre_transform is None else _transform_to_dict(r.pre_transform),
                "input_if_E": encode_vector(r.input_if_E.amplitudes),
                "input_if_I": encode_vector(r.input_if_I.amplitudes),
                "predicted_overlap_after": r.predicted_overlap_after,
            }
            for r in plan.rounds
        ],
    }


# ==================================================================================================
# Decoding
# ==================================================================================================


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ChannelFileError(f"expected a number, got {type(x).__name__}", where)
    if not math.isfinite(x):
        raise ChannelFileError("number is not finite", where)
    return float(x)


def _integer(x: Any, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ChannelFileError(f"expected an integer, got {type(x).__name__}", where)
    return x


def decode_complex(x: Any, where: str) -> complex:
    if not isinstance(x, list) or len(x) != 2:
        raise ChannelFileError("complex entry must be a pair [re, im]", where)
    return complex(_number(x[0], where + "[0]"), _number(x[1], where + "[1]"))


def decode_vector(x: Any, where: str, dim: Optional[int] = None) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise ChannelFileError("expected a nonempty array of [re, im] pairs", where)
    if dim is not None and len(x) != dim:
        raise ChannelFileError(f"expected {dim} entries, got {len(x)}", where)
    return np.array([decode_complex(z, f"{where}[{i}]") for i, z in enumerate(x)], dtype=complex)


def decode_matrix(x: Any, where: str, dim: int) -> np.ndarray:
    if not isinstance(x, list):
        raise ChannelFileError("matrix must be an array of rows", where)
    if len(x) != dim:
        raise ChannelFileError(f"matrix has {len(x)} rows, expected {dim}", where)
    rows = []
    for i, row in enumerate(x):
        if not isinstance(row, list):
            raise ChannelFileError("row must be an array", f"{where}[{i}]")
        if len(row) != dim:
            raise ChannelFileError(f"row has {len(row)} entries, expected {dim}", f"{where}[{i}]")
        rows.append(decode_vector(row, f"{where}[{i}]", dim))
    return np.array(rows)


def _parse_text(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelFileError(exc.msg, f"{source}:{exc.lineno}:{exc.colno}") from None


def _read(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ChannelFileError(f"not UTF-8 text ({exc.reason})", str(path)) from None


def complete(channel: KrausChannel) -> KrausChannel:
    """Rescale Kraus operators by ``S^{-1/2}``, ``S = sum E^dagger E``, so completeness holds to rounding."""
    s = np.einsum("kji,kjl->il", channel.stack.conj(), channel.stack)
    lam, v = np.linalg.eigh(s)
    if lam[0] <= 0:
        raise InvalidChannelError("Kraus operators have a common kernel; cannot be made trace preserving")
    inv_sqrt = (v / np.sqrt(lam)) @ v.conj().T
    return KrausChannel(tuple(k @ inv_sqrt for k in channel.kraus), name=channel.name)


def channel_from_dict(data: Any, where: str = "$", check: bool = True) -> KrausChannel:
    """Decode a channel object.

    With ``check`` a completeness residual above ``1e-6`` is rejected, and a
    residual between the validity tolerance and ``1e-6`` (a file written
    with few decimals) is removed by :func:`complete`.
    """
    if not isinstance(data, dict):
        raise ChannelFileError("channel must be an object", where)
    if "dim" not in data:
        raise ChannelFileError("missing field 'dim'", where)
    if "kraus" not in data:
        raise ChannelFileError("missing field 'kraus'", where)
    dim = _integer(data["dim"], f"{where}.dim")
    if dim < 1:
        raise ChannelFileError("dim must be positive", f"{where}.dim")
    name = data.get("name")
    if name is not None and not isinstance(name, str):
        raise ChannelFileError("name must be a string", f"{where}.name")
    kraus = data["kraus"]
    if not isinstance(kraus, list) or not kraus:
        raise ChannelFileError("kraus must be a nonempty array of matrices", f"{where}.kraus")
    mats = [decode_matrix(k, f"{where}.kraus[{i}]", dim) for i, k in enumerate(kraus)]
    try:
        channel = KrausChannel(tuple(mats), name=name)
    except ShapeError as exc:
        raise ChannelFileError(str(exc), f"{where}.kraus") from None
    if check:
        residual = completeness_residual(channel)
        if residual > FILE_COMPLETENESS_TOL:
            raise InvalidChannelError(f"completeness residual {residual:.3e} exceeds {FILE_COMPLETENESS_TOL:g}")
        if residual > CHANNEL_TOL:
            channel = complete(channel)
    return channel


def load_channel(path: PathLike, check: bool = True) -> KrausChannel:
    return channel_from_dict(_parse_text(_read(path), str(path)), str(path), check)


def _transform_from_dict(data: Any, where: str, dim: int) -> StatePairTransform:
    if not isinstance(data, dict):
        raise ChannelFileError("transform must be an object", where)
    for key in ("kraus", "source_a", "source_b", "target_a", "target_b"):
        if key not in data:
            raise ChannelFileError(f"missing field '{key}'", where)
    if not isinstance(data["kraus"], list) or not data["kraus"]:
        raise ChannelFileError("kraus must be a nonempty array", f"{where}.kraus")
    kraus = tuple(decode_matrix(k, f"{where}.kraus[{i}]", dim) for i, k in enumerate(data["kraus"]))
    return StatePairTransform(
        kraus=kraus,
        source_a=DensityOperator(decode_matrix(data["source_a"], f"{where}.source_a", dim)),
        source_b=_state(data["source_b"], f"{where}.source_b", dim),
        target_a=_state(data["target_a"], f"{where}.target_a", dim),
        target_b=_state(data["target_b"], f"{where}.target_b", dim),
    )


def _state(x: Any, where: str, dim: int) -> PureState:
    try:
        return PureState.from_canonical(decode_vector(x, where, dim))
    except ValueError as exc:
        raise ChannelFileError(str(exc), where) from None


def plan_from_dict(data: Any, where: str = "$") -> ProtocolPlan:
    if not isinstance(data, dict):
        raise ChannelFileError("plan must be an object", where)
    if data.get("format") != PLAN_FORMAT:
        raise ChannelFileError(f"unknown plan format {data.get('format')!r}", f"{where}.format")
    for key in ("channel", "claimed_queries", "final_measurement_vector", "rounds"):
        if key not in data:
            raise ChannelFileError(f"missing field '{key}'", where)
    channel = channel_from_dict(data["channel"], f"{where}.channel", check=False)
    dim = channel.dim
    rounds = []
    if not isinstance(data["rounds"], list) or not data["rounds"]:
        raise ChannelFileError("rounds must be a nonempty array", f"{where}.rounds")
    for i, r in enumerate(data["rounds"]):
        at = f"{where}.rounds[{i}]"
        if not isinstance(r, dict):
            raise ChannelFileError("round must be an object", at)
        for key in ("index", "pre_transform", "input_if_E", "input_if_I", "predicted_overlap_after"):
            if key not in r:
                raise ChannelFileError(f"missing field '{key}'", at)
        pre = r["pre_transform"]
        rounds.append(
            Round(
                index=_integer(r["index"], f"{at}.index"),
                pre_transform=None if pre is None else _transform_from_dict(pre, f"{at}.pre_transform", dim),
                input_if_E=_state(r["input_if_E"], f"{at}.input_if_E", dim),
                input_if_I=_state(r["input_if_I"], f"{at}.input_if_I", dim),
                predicted_overlap_after=_number(r["predicted_overlap_after"], f"{at}.predicted_overlap_after"),
            )
        )
    final = _state(data["final_measurement_vector"], f"{where}.final_measurement_vector", dim)
    claimed = _integer(data["claimed_queries"], f"{where}.claimed_queries")
    try:
        return ProtocolPlan(channel=channel, rounds=tuple(rounds), final_measurement_vector=final, claimed_queries=claimed)
    except SynthesisError as exc:
        raise ChannelFileError(str(exc), where) from None


def load_document(path: PathLike) -> Tuple[str, Any]:
    """Parse a file and tell plans from channels: returns ``("plan" | "channel", data)``."""
    data = _parse_text(_read(path), str(path))
    kind = "plan" if isinstance(data, dict) and "rounds" in data else "channel"
    return kind, data


def save_json(path: PathLike, data: Any) -> None:
    Path(path).write_text(render_json(data), encoding="utf-8")

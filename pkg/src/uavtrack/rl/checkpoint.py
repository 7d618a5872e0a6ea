"""Network checkpoints.

Binary layout: one JSON header line, then ``n_params`` little-endian float64
values.  Text mode writes a single JSON document with the parameters as a
list of floats (repr round-trips exactly).
"""

from __future__ import annotations

import json
import os
import warnings

import numpy as np

from .nets import PolicyNetwork

MAGIC = "uavtrack-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, truncated or mismatched checkpoint files."""


def _header(net: PolicyNetwork, env_hash, mode, meta) -> dict:
    return {
        "magic": MAGIC,
        "version": VERSION,
        "mode": mode,
        "sizes": list(net.sizes),
        "activations": list(net.activations),
        "gaussian": net.gaussian,
        "log_std": [float(v) for v in net.log_std] if net.gaussian else None,
        "n_params": int(net.n_params),
        "env_config_hash": env_hash,
        "meta": meta or {},
    }


def save_checkpoint(net: PolicyNetwork, path, env_hash=None, text=False, meta=None) -> None:
    header = _header(net, env_hash, "text" if text else "binary", meta)
    tmp = f"{path}.tmp"
    if text:
        header["params"] = [float(v) for v in net.params]
        with open(tmp, "w") as fh:
            json.dump(header, fh, indent=1)
            fh.write("\n")
    else:
        with open(tmp, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(net.params.astype("<f8").tobytes())
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[PolicyNetwork, dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    try:
        if blob.lstrip().startswith(b"{") and b"\n" in blob and _is_binary(blob):
            head, _, body = blob.partition(b"\n")
            header = json.loads(head)
            params = None
        else:
            header = json.loads(blob)
            body = None
            params = header.get("params")
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header in {path}") from exc

    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    try:
        net = PolicyNetwork(header["sizes"], gaussian=header["gaussian"])
        n = int(header["n_params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint header in {path}") from exc
    if n != net.n_params:
        raise CheckpointError(f"parameter count {n} does not match layer sizes {header['sizes']}")

    if body is not None:
        if len(body) != 8 * n:
            raise CheckpointError(f"truncated parameter block: {len(body)} bytes, expected {8 * n}")
        values = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        if not isinstance(params, list) or len(params) != n:
            raise CheckpointError("text checkpoint has a missing or short parameter list")
        try:
            values = np.asarray(params, dtype=float)
        except (TypeError, ValueError) as exc:
            raise CheckpointError("non-numeric parameters") from exc
    net.set_params(values)
    return net, header


def _is_binary(blob: bytes) -> bool:
    head = blob.partition(b"\n")[0]
    try:
        return json.loads(head).get("mode") == "binary"
    except (json.JSONDecodeError, UnicodeDecodeError, AttributeError):
        return False


def load_checkpoint(path, env_hash=None) -> PolicyNetwork:
    """Load a network; warns when it was trained under a different env config."""
    net, header = read_checkpoint(path)
    stored = header.get("env_config_hash")
    if env_hash is not None and stored is not None and stored != env_hash:
        warnings.warn(
            f"checkpoint {path} was trained under env config {stored}, current is {env_hash}",
            stacklevel=2,
        )
    return net

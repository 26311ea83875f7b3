"""Bit-exact network checkpoints.

File layout (all multi-byte integers little-endian):

    bytes 0..8    magic  b"PLINCKPT"
    bytes 8..12   u32    format version (currently 1)
    bytes 12..20  u64    header length H
    bytes 20..20+H       UTF-8 JSON header
    remainder            raw array payload

The header carries the architecture spec, the init seed, free-form training
metadata (epoch, omega, accuracies, ...) and one entry per array giving its
name, dtype ("<f8" or "|b1"), shape, and byte offset/length within the
payload.  Values are stored as raw 64-bit little-endian floats, so a save /
load round trip reproduces forward outputs bit-exactly.
"""

import json

import numpy as np

from .network import LayerSpec, Network, NetworkSpec

MAGIC = b"PLINCKPT"
VERSION = 1


class CheckpointError(Exception):
    pass


_GROUPS = ("weight", "bias", "slopes", "frozen", "gain")


def _net_arrays(net):
    per_layer = {
        "weight": net.weights,
        "bias": net.biases,
        "slopes": net.slopes,
        "frozen": net.frozen,
        "gain": net.gains,
    }
    for group in _GROUPS:
        for i, arr in enumerate(per_layer[group]):
            if arr is not None:
                yield f"{group}{i}", arr


def _spec_to_json(spec):
    return {
        "layers": [
            {
                "n_in": l.n_in,
                "n_out": l.n_out,
                "activation": l.activation,
                "bias": l.bias,
            }
            for l in spec.layers
        ],
        "spans": [list(s) for s in spec.spans],
    }


def _spec_from_json(obj):
    return NetworkSpec(
        layers=tuple(
            LayerSpec(l["n_in"], l["n_out"], l["activation"], l["bias"])
            for l in obj["layers"]
        ),
        spans=tuple((int(s), int(e)) for s, e in obj["spans"]),
    )


def save(net, path, metadata=None):
    """Write a checkpoint; metadata must be JSON-serializable."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in _net_arrays(net):
        dtype = "|b1" if arr.dtype == np.bool_ else "<f8"
        raw = np.ascontiguousarray(arr).astype(dtype).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {
            "spec": _spec_to_json(net.spec),
            "seed": net.seed,
            "metadata": metadata or {},
            "arrays": entries,
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)


def load(path):
    """Read a checkpoint; returns (Network, metadata)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 20:
        raise CheckpointError(
            f"{path}: truncated preamble, need 20 bytes, found {len(blob)}"
        )
    if blob[:8] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {blob[:8]!r} at offset 0, expected {MAGIC!r}"
        )
    version = int.from_bytes(blob[8:12], "little")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}, expected {VERSION}"
        )
    hlen = int.from_bytes(blob[12:20], "little")
    if len(blob) < 20 + hlen:
        raise CheckpointError(
            f"{path}: truncated header, need {hlen} bytes at offset 20, "
            f"found {len(blob) - 20}"
        )
    try:
        header = json.loads(blob[20 : 20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    payload = blob[20 + hlen :]
    arrays = {}
    for entry in header["arrays"]:
        lo, nbytes = entry["offset"], entry["nbytes"]
        if lo + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: truncated payload for array {entry['name']!r}: need "
                f"{nbytes} bytes at payload offset {lo}, found {len(payload) - lo}"
            )
        arr = np.frombuffer(
            payload[lo : lo + nbytes], dtype=entry["dtype"]
        ).reshape(entry["shape"])
        native = np.bool_ if entry["dtype"] == "|b1" else np.float64
        arrays[entry["name"]] = arr.astype(native)
    spec = _spec_from_json(header["spec"])
    spec.validate()
    n = len(spec.layers)

    def group(name):
        return [arrays.get(f"{name}{i}") for i in range(n)]

    net = Network(
        spec=spec,
        seed=int(header["seed"]),
        weights=group("weight"),
        biases=group("bias"),
        slopes=group("slopes"),
        frozen=group("frozen"),
        gains=group("gain"),
    )
    for i, layer in enumerate(spec.layers):
        if net.weights[i] is None or net.weights[i].shape != (layer.n_in, layer.n_out):
            raise CheckpointError(f"{path}: missing or misshapen weight{i}")
    return net, header["metadata"]

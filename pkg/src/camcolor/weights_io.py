"""Weights file format.

Layout: one magic line, one JSON header line (format version, architecture
config, tensor manifest with byte offsets), then raw little-endian float32
payload in manifest order. Loading then saving reproduces the bytes exactly;
version or architecture mismatches are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DataError
from .network import ArchConfig, TranslatorPair, init_translator_pair

MAGIC = b"camcolor-weights v1\n"
FORMAT_VERSION = 1


def save_weights(path, pair: TranslatorPair) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name, p in pair.parameters():
        blob = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(p.data.shape),
                         "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    arch = asdict(pair.arch)
    arch["scales"] = list(arch["scales"])
    header = {"format_version": FORMAT_VERSION, "arch": arch,
              "manifest": manifest, "payload_bytes": offset}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_weights(path, expect_arch: ArchConfig | None = None) -> TranslatorPair:
    path = Path(path)
    if not path.exists():
        raise DataError(f"weights file {path} does not exist")
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise DataError(
                f"{path} is not a camcolor v{FORMAT_VERSION} weights file "
                f"(magic {magic!r}); cross-version loads are not supported")
        try:
            header = json.loads(fh.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"corrupt weights header in {path}: {exc}") from exc
        payload = fh.read()

    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported weights format version "
                        f"{header.get('format_version')} in {path}")
    if len(payload) != header["payload_bytes"]:
        raise DataError(f"{path}: payload is {len(payload)} bytes, header "
                        f"promises {header['payload_bytes']}")
    arch_d = dict(header["arch"])
    arch_d["scales"] = tuple(arch_d["scales"])
    arch = ArchConfig(**arch_d)
    if expect_arch is not None and arch != expect_arch:
        raise DataError(f"{path} holds weights for a different architecture: "
                        f"{arch} != {expect_arch}")

    pair = init_translator_pair(arch, seed=0)
    params = pair.parameters()
    manifest = header["manifest"]
    if [m["name"] for m in manifest] != [n for n, _ in params]:
        raise DataError(f"{path}: tensor manifest does not match the declared "
                        "architecture")
    for m, (name, p) in zip(manifest, params):
        shape = tuple(m["shape"])
        if shape != p.data.shape:
            raise DataError(f"{path}: {name} has shape {shape}, architecture "
                            f"needs {p.data.shape}")
        count = int(np.prod(shape)) if shape else 1
        end = m["offset"] + 4 * count
        if end > len(payload):
            raise DataError(f"{path}: {name} blob overruns the payload")
        arr = np.frombuffer(payload, dtype="<f4", count=count,
                            offset=m["offset"]).reshape(shape)
        p.data = arr.astype(np.float32).copy()
    return pair

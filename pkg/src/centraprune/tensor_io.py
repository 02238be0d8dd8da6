"""Single-tensor binary files, layer directories and dataset directories.

File layout::

    0..5    magic b"\\x93CPRUN"
    6       format version (1)
    7..8    header length H, little-endian u16
    9..9+H  ASCII "dtype=<f32|f64>;shape=<d0,d1,...>;" space-padded so the
            payload starts on a 16-byte boundary
    rest    little-endian row-major payload

A layer directory holds ``weights`` ([d, n], neurons are columns), ``bias``
([n]) and a ``meta`` JSON manifest. A dataset directory holds ``x``, ``y``
and ``meta.json``.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    IoFailure,
    MalformedHeader,
    MissingFile,
    ShapeMismatch,
    UnsupportedDtype,
)

MAGIC = b"\x93CPRUN"
VERSION = 1
ALIGN = 16
_PREFIX_LEN = len(MAGIC) + 1 + 2

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_TAGS = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}
_HEADER_RE = re.compile(r"dtype=(?P<dtype>[^;]*);shape=(?P<shape>[0-9,]*);")

ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass(eq=False)
class TensorFile:
    """A shaped float32/float64 buffer. Equality is bitwise."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.dtype not in _TAGS:
            raise UnsupportedDtype(f"unsupported dtype {data.dtype}")
        self.data = np.ascontiguousarray(data)

    @property
    def shape(self) -> list[int]:
        return list(self.data.shape)

    @property
    def dtype(self) -> str:
        return _TAGS[self.data.dtype]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorFile):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


def encode_tensor(t: TensorFile) -> bytes:
    header = f"dtype={t.dtype};shape={','.join(str(s) for s in t.shape)};"
    pad = (-(_PREFIX_LEN + len(header))) % ALIGN
    header += " " * pad
    if len(header) > 0xFFFF:
        raise ShapeMismatch("header too long")
    payload = t.data.astype(_DTYPES[t.dtype], copy=False).tobytes(order="C")
    return MAGIC + bytes([VERSION]) + struct.pack("<H", len(header)) + header.encode("ascii") + payload


def decode_tensor(raw: bytes) -> TensorFile:
    if len(raw) < _PREFIX_LEN or raw[: len(MAGIC)] != MAGIC:
        raise MalformedHeader("bad magic")
    if raw[len(MAGIC)] != VERSION:
        raise MalformedHeader(f"unsupported format version {raw[len(MAGIC)]}")
    (hlen,) = struct.unpack("<H", raw[len(MAGIC) + 1 : _PREFIX_LEN])
    if len(raw) < _PREFIX_LEN + hlen:
        raise MalformedHeader("truncated header")
    try:
        header = raw[_PREFIX_LEN : _PREFIX_LEN + hlen].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc
    m = _HEADER_RE.fullmatch(header.rstrip(" "))
    if m is None:
        raise MalformedHeader(f"unparseable header {header!r}")
    tag = m.group("dtype")
    if tag not in _DTYPES:
        raise UnsupportedDtype(f"unsupported dtype {tag!r}")
    dims = m.group("shape")
    try:
        shape = tuple(int(s) for s in dims.split(",")) if dims else ()
    except ValueError as exc:
        raise MalformedHeader(f"bad shape {dims!r}") from exc
    dtype = _DTYPES[tag]
    payload = raw[_PREFIX_LEN + hlen :]
    count = int(np.prod(shape, dtype=np.int64))
    if len(payload) != count * dtype.itemsize:
        raise ShapeMismatch(
            f"header shape {list(shape)} needs {count * dtype.itemsize} bytes, payload has {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return TensorFile(data.astype(dtype.newbyteorder("="), copy=True))


def read_tensor(path: str | os.PathLike) -> TensorFile:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such tensor file: {path}")
    return decode_tensor(path.read_bytes())


def atomic_write_bytes(path: str | os.PathLike, raw: bytes) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_tensor(path: str | os.PathLike, t: TensorFile | np.ndarray) -> None:
    if not isinstance(t, TensorFile):
        t = TensorFile(t)
    atomic_write_bytes(path, encode_tensor(t))


def commit_files(directory: str | os.PathLike, files: dict[str, bytes]) -> None:
    """Write several files under ``directory`` all-or-nothing.

    Every file is first written to a temporary sibling; only when all of them
    are on disk are they renamed into place.
    """
    directory = Path(directory)
    staged: list[tuple[str, Path]] = []
    try:
        for rel, raw in files.items():
            target = directory / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
            staged.append((tmp, target))
            with os.fdopen(fd, "wb") as fh:
                fh.write(raw)
        for tmp, target in staged:
            os.replace(tmp, target)
    except OSError as exc:
        for tmp, _ in staged:
            try:
                os.unlink(tmp)
            except OSError:
                pass
        raise IoFailure(f"cannot write into {directory}: {exc}") from exc


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_json(path: str | os.PathLike, obj: Any) -> None:
    atomic_write_bytes(path, dump_json(obj).encode("utf-8"))


def read_json(path: str | os.PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"{path} is not valid JSON: {exc}") from exc


@dataclass
class LayerBundle:
    """Dense layer parameters: ``weights`` is [d, n] float64, ``bias`` is [n]."""

    weights: np.ndarray
    bias: np.ndarray
    name: str = "dense"
    activation: str = "linear"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DimensionMismatch(
                f"weights must be 2-D and bias 1-D, got {self.weights.shape} and {self.bias.shape}"
            )
        if self.weights.shape[1] != self.bias.shape[0]:
            raise DimensionMismatch(
                f"weights have {self.weights.shape[1]} columns but bias has {self.bias.shape[0]} entries"
            )
        if self.activation not in ACTIVATIONS:
            raise DimensionMismatch(f"unknown activation {self.activation!r}")

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[1]

    @property
    def num_params(self) -> int:
        return self.weights.size + self.bias.size

    def meta(self) -> dict:
        return {"name": self.name, "activation": self.activation, "d": self.d, "n": self.n}


def read_layer(directory: str | os.PathLike) -> LayerBundle:
    directory = Path(directory)
    for fname in ("weights", "bias", "meta"):
        if not (directory / fname).is_file():
            raise MissingFile(f"layer directory {directory} has no {fname!r} file")
    weights = read_tensor(directory / "weights").data
    bias = read_tensor(directory / "bias").data
    meta = read_json(directory / "meta")
    if weights.ndim != 2 or bias.ndim != 1 or weights.shape[1] != bias.shape[0]:
        raise DimensionMismatch(f"weights {list(weights.shape)} do not match bias {list(bias.shape)}")
    if (meta.get("d"), meta.get("n")) != weights.shape:
        raise DimensionMismatch(f"meta d/n disagree with weights shape {list(weights.shape)}")
    return LayerBundle(
        weights=weights.astype(np.float64),
        bias=bias.astype(np.float64),
        name=str(meta.get("name", directory.name)),
        activation=str(meta.get("activation", "linear")),
    )


def layer_files(layer: LayerBundle, prefix: str = "") -> dict[str, bytes]:
    return {
        prefix + "weights": encode_tensor(TensorFile(layer.weights)),
        prefix + "bias": encode_tensor(TensorFile(layer.bias)),
        prefix + "meta": dump_json(layer.meta()).encode("utf-8"),
    }


def write_layer(directory: str | os.PathLike, layer: LayerBundle) -> None:
    commit_files(directory, layer_files(layer))


@dataclass
class Dataset:
    """Feature matrix plus integer class labels."""

    x: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = field(default="data")

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ShapeMismatch(f"x {self.x.shape} and y {self.y.shape} disagree")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ShapeMismatch(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.y.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes, self.name)


def read_dataset(directory: str | os.PathLike) -> Dataset:
    directory = Path(directory)
    for fname in ("x", "y", "meta.json"):
        if not (directory / fname).is_file():
            raise MissingFile(f"dataset directory {directory} has no {fname!r} file")
    meta = read_json(directory / "meta.json")
    x = read_tensor(directory / "x").data.astype(np.float64)
    y = read_tensor(directory / "y").data
    if y.ndim != 1 or np.any(y != np.round(y)):
        raise ShapeMismatch("labels must be a 1-D tensor of integers")
    data = Dataset(x, y.astype(np.int64), int(meta["num_classes"]), str(meta.get("name", directory.name)))
    if len(data) == 0:
        raise EmptyDataset(f"dataset {directory} is empty")
    return data


def write_dataset(directory: str | os.PathLike, data: Dataset) -> None:
    commit_files(
        directory,
        {
            "x": encode_tensor(TensorFile(data.x)),
            "y": encode_tensor(TensorFile(data.y.astype(np.float64))),
            "meta.json": dump_json({"name": data.name, "num_classes": data.num_classes}).encode("utf-8"),
        },
    )

"""VCUB tensor container, model checkpoints, JSON run configs and PGM/PPM export.

VCUB layout (all integers little-endian)::

    b"VCUB" | u8 version=1 | u16 record count
    per record: u16 name length | UTF-8 name | u8 dtype (0=f32, 1=f64, 2=u8)
                | u8 ndim | u32 dim * ndim | payload, row-major little-endian
"""
import dataclasses
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, FileFormatError
from .gap_tv import GapTvConfig
from .training import TrainConfig, config_dict
from .unfold_net import ModelConfig, UnfoldModel

MAGIC = b"VCUB"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint8"): 2}
MODEL_HEADER = "__model__"


def _atomic_write(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_vcub(records):
    """Serialize ``{name: ndarray}`` (insertion order kept) to VCUB bytes."""
    if len(records) > 0xFFFF:
        raise FileFormatError("too many records for a VCUB file")
    parts = [MAGIC, struct.pack("<BH", VERSION, len(records))]
    for name, arr in records.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise FileFormatError(f"record {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FileFormatError(f"record {name!r}: name or rank too large")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def decode_vcub(buf):
    mv = memoryview(buf)
    if bytes(mv[:4]) != MAGIC:
        raise FileFormatError("not a VCUB file (bad magic)")
    try:
        version, count = struct.unpack_from("<BH", mv, 4)
        if version != VERSION:
            raise FileFormatError(f"unsupported VCUB version {version}")
        off = 7
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", mv, off)
            off += 2
            name = bytes(mv[off:off + nlen]).decode("utf-8")
            off += nlen
            code, ndim = struct.unpack_from("<BB", mv, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", mv, off)
            off += 4 * ndim
            if code not in _DTYPES:
                raise FileFormatError(f"record {name!r}: unknown dtype code {code}")
            dt = _DTYPES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            if off + nbytes > len(mv):
                raise FileFormatError(f"record {name!r}: truncated payload")
            if name in out:
                raise FileFormatError(f"duplicate record name {name!r}")
            arr = np.frombuffer(mv[off:off + nbytes], dtype=dt).reshape(dims)
            out[name] = arr.astype(dt.newbyteorder("="), copy=True)
            off += nbytes
    except struct.error as exc:
        raise FileFormatError(f"truncated VCUB file: {exc}") from None
    if off != len(mv):
        raise FileFormatError(f"{len(mv) - off} trailing bytes after last record")
    return out


def write_vcub(path, records):
    _atomic_write(path, encode_vcub(records))


def read_vcub(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from None
    return decode_vcub(data)


def read_record(path, name):
    recs = read_vcub(path)
    if name not in recs:
        raise FileFormatError(f"{path}: no record named {name!r} (has {sorted(recs)})")
    return recs[name]


# ---------------------------------------------------------------------------
# checkpoints


def _json_record(obj):
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def save_checkpoint(path, model):
    records = {MODEL_HEADER: _json_record(model.hyperparameters())}
    records.update(model.state_dict())
    write_vcub(path, records)


def load_checkpoint(path):
    recs = read_vcub(path)
    if MODEL_HEADER not in recs:
        raise FileFormatError(f"{path}: missing {MODEL_HEADER} header record")
    hyper = json.loads(recs.pop(MODEL_HEADER).tobytes().decode("utf-8"))
    model = UnfoldModel(ModelConfig(**hyper))
    model.load_state_dict(recs)
    return model


# ---------------------------------------------------------------------------
# run configuration


def _from_dict(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section {section!r}: {exc}") from None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gap_tv: GapTvConfig = field(default_factory=GapTvConfig)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {"model": ModelConfig, "train": TrainConfig, "gap_tv": GapTvConfig}
        for key in data:
            if key not in sections:
                raise ConfigError(f"unknown key {key}")
        return cls(**{k: _from_dict(c, data.get(k, {}), k) for k, c in sections.items()})

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def to_dict(self):
        return {"model": dataclasses.asdict(self.model),
                "train": config_dict(self.train),
                "gap_tv": dataclasses.asdict(self.gap_tv)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# PGM / PPM


def to_bytes8(v):
    """round-half-up of 255 * clip(v, 0, 1)."""
    return np.floor(255.0 * np.clip(v, 0.0, 1.0) + 0.5).astype(np.uint8)


def write_pnm(path, frame):
    """Binary PGM (2-D frame) or PPM (H x W x 3 frame) from values in [0, 1]."""
    frame = np.asarray(frame)
    px = to_bytes8(frame)
    if frame.ndim == 2:
        header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n"
    elif frame.ndim == 3 and frame.shape[2] == 3:
        header = f"P6\n{frame.shape[1]} {frame.shape[0]}\n255\n"
    else:
        raise FileFormatError(f"cannot export frame of shape {frame.shape}")
    try:
        _atomic_write(path, header.encode("ascii") + px.tobytes())
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from None


def read_pnm(path):
    """Read a binary P5/P6 file back to float values in [0, 1]."""
    data = Path(path).read_bytes()
    tokens, off = [], 0
    while len(tokens) < 4:
        while data[off:off + 1].isspace():
            off += 1
        if data[off:off + 1] == b"#":
            off = data.index(b"\n", off) + 1
            continue
        start = off
        while not data[off:off + 1].isspace():
            off += 1
        tokens.append(data[start:off].decode("ascii"))
    off += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in ("P5", "P6"):
        raise FileFormatError(f"{path}: unsupported PNM variant {magic} / maxval {maxval}")
    shape = (h, w) if magic == "P5" else (h, w, 3)
    px = np.frombuffer(data[off:], dtype=np.uint8)
    if px.size != int(np.prod(shape)):
        raise FileFormatError(f"{path}: payload size does not match header")
    return px.reshape(shape).astype(np.float64) / 255.0


def export_pgm_ppm(cube, directory, prefix="frame"):
    """One file per frame: ``(W, H, T)`` -> PGM, ``(W, H, T, 3)`` -> PPM.

    Axis 0 of the cube becomes image rows.
    """
    cube = np.asarray(cube)
    directory = Path(directory)
    paths = []
    ext = "pgm" if cube.ndim == 3 else "ppm"
    for t in range(cube.shape[2]):
        p = directory / f"{prefix}_{t:03d}.{ext}"
        write_pnm(p, cube[:, :, t])
        paths.append(p)
    return paths


def import_pgm_ppm(paths):
    return np.stack([read_pnm(p) for p in paths], axis=2)

"""Deterministic export of shot records.

Binary layout (all little-endian)::

    offset  size  field
    0       4     magic  b"NVSR"
    4       4     uint32 format version (1)
    8       4     uint32 n_nvs
    12      8     uint64 n_shots
    20      8     uint64 rng seed
    28      64    ASCII sequence hash (sha256 hex)
    92      ...   float64 arrays, in order:
                  nv_ids[n_nvs], thresholds[n_nvs],
                  counts, charge_bit, true_charge, spin_prep,
                  crosstalk_reset  (each [n_shots * n_nvs], shot-major),
                  random_flag[n_shots]
"""
import io
import os
import struct
import tempfile

import numpy as np

from ..errors import ConfigError
from .core import ShotRecords

MAGIC = b"NVSR"
VERSION = 1
_HEADER = struct.Struct("<4sIIQQ64s")
_MATRIX_FIELDS = ("counts", "charge_bit", "true_charge", "spin_prep", "crosstalk_reset")
_DTYPES = {"charge_bit": np.int8, "true_charge": np.int8, "spin_prep": np.int8, "crosstalk_reset": bool}


def atomic_write(path, data, mode="wb"):
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def records_to_bytes(rec):
    n_shots, n_nvs = rec.counts.shape
    header = _HEADER.pack(MAGIC, VERSION, n_nvs, n_shots, rec.seed, rec.sequence_hash.encode("ascii").ljust(64, b"\0"))
    parts = [header, rec.nv_ids.astype("<f8").tobytes(), np.asarray(rec.thresholds).astype("<f8").tobytes()]
    for name in _MATRIX_FIELDS:
        parts.append(np.asarray(getattr(rec, name)).astype("<f8").tobytes())
    parts.append(rec.random_flag.astype("<f8").tobytes())
    return b"".join(parts)


def records_from_bytes(blob):
    magic, version, n_nvs, n_shots, seed, digest = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ConfigError("not a shot-record file (bad magic)")
    if version != VERSION:
        raise ConfigError(f"unsupported record version {version}")
    pos = _HEADER.size

    def take(count):
        nonlocal pos
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        return arr

    nv_ids = take(n_nvs).astype(int)
    thresholds = take(n_nvs).copy()
    fields = {}
    for name in _MATRIX_FIELDS:
        arr = take(n_shots * n_nvs).reshape(n_shots, n_nvs)
        fields[name] = arr.astype(_DTYPES.get(name, float))
    flags = take(n_shots).astype(np.int8)
    return ShotRecords(nv_ids, random_flag=flags, thresholds=thresholds, seed=int(seed),
                       sequence_hash=digest.rstrip(b"\0").decode("ascii"), **fields)


def write_records_binary(path, rec):
    atomic_write(path, records_to_bytes(rec))


def read_records_binary(path):
    with open(path, "rb") as fh:
        return records_from_bytes(fh.read())


CSV_COLUMNS = ("shot_index", "nv_id", "counts", "charge_bit", "true_charge", "spin_prep", "crosstalk_reset", "random_flag")


def records_to_csv(rec):
    """Long-format CSV text, one row per (shot, NV)."""
    n_shots, n_nvs = rec.counts.shape
    shot = np.repeat(np.arange(n_shots), n_nvs)
    cols = [
        shot,
        np.tile(rec.nv_ids, n_shots),
        rec.counts.ravel(),
        rec.charge_bit.ravel(),
        rec.true_charge.ravel(),
        rec.spin_prep.ravel(),
        rec.crosstalk_reset.ravel().astype(int),
        np.repeat(rec.random_flag, n_nvs),
    ]
    buf = io.StringIO()
    buf.write(f"# seed={rec.seed}\n# sequence_hash={rec.sequence_hash}\n")
    buf.write("# thresholds=" + ",".join(f"{t:.9g}" for t in rec.thresholds) + "\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    table = np.column_stack(cols)
    np.savetxt(buf, table, fmt=["%d", "%d", "%.17g", "%d", "%d", "%d", "%d", "%d"], delimiter=",")
    return buf.getvalue()


def write_records_csv(path, rec):
    atomic_write(path, records_to_csv(rec), mode="w")


def read_records_csv(path):
    meta = {}
    n_skip = 0
    with open(path) as fh:
        for line in fh:
            n_skip += 1
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    # skiprows counts the comment lines and the column header
    table = np.loadtxt(path, delimiter=",", skiprows=n_skip, ndmin=2)
    thresholds = np.array([float(v) for v in meta["thresholds"].split(",")]) if meta.get("thresholds") else np.array([])
    nv_ids = np.unique(table[:, 1]).astype(int)
    n_nvs = len(thresholds) or len(nv_ids)
    n_shots = table.shape[0] // n_nvs
    nv_ids = table[:n_nvs, 1].astype(int)
    grab = lambda j, dtype: table[:, j].reshape(n_shots, n_nvs).astype(dtype)
    return ShotRecords(
        nv_ids=nv_ids,
        counts=grab(2, float),
        charge_bit=grab(3, np.int8),
        true_charge=grab(4, np.int8),
        spin_prep=grab(5, np.int8),
        crosstalk_reset=grab(6, bool),
        random_flag=table[::n_nvs, 7].astype(np.int8),
        thresholds=thresholds,
        seed=int(meta.get("seed", 0)),
        sequence_hash=meta.get("sequence_hash", ""),
    )


def trajectory_to_csv(traj):
    lines = ["attempt,mean,variance,stderr"]
    for i, (m, v, s) in enumerate(zip(traj.mean, traj.variance, traj.stderr)):
        lines.append(f"{i},{m:.9g},{v:.9g},{s:.9g}")
    return "\n".join(lines) + "\n"

"""Reading and writing sample blocks, CA matrices, dictionaries and results."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy import sparse

from .caf import CycleAutocorrelationMatrix
from .recovery import DictionaryKind, StructureDictionary
from .signals import ConfigurationError, SampleRecord

_CA_HEADER = np.dtype("<u4")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_iq(record: SampleRecord, path, sample_rate: float = 1.0) -> Path:
    """Interleaved little-endian float32 (re, im) plus a ``<file>.json`` header."""
    path = Path(path)
    body = np.empty(2 * record.n, dtype="<f4")
    body[0::2] = record.samples.real
    body[1::2] = record.samples.imag
    path.write_bytes(body.tobytes())
    sidecar_path(path).write_text(json.dumps({"n": record.n, "sample_rate": sample_rate}) + "\n")
    return path


def write_iq_csv(record: SampleRecord, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "re", "im"])
        for i, v in enumerate(record.samples):
            writer.writerow([i, repr(float(v.real)), repr(float(v.imag))])
    return path


def _read_iq_csv(path: Path) -> np.ndarray:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"index", "re", "im"} <= set(rows[0]):
        raise ConfigurationError(f"{path}: CSV needs columns index, re, im")
    rows.sort(key=lambda r: int(r["index"]))
    if [int(r["index"]) for r in rows] != list(range(len(rows))):
        raise ConfigurationError(f"{path}: indices must run 0..n-1 without gaps")
    return np.array([complex(float(r["re"]), float(r["im"])) for r in rows])


def read_iq(path) -> tuple[SampleRecord, float]:
    """Load a binary IQ file (with its sidecar, when present) or an (index, re, im) CSV."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return SampleRecord(_read_iq_csv(path)), 1.0
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size % 2:
        raise ConfigurationError(f"{path}: odd number of float32 values")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    rate = 1.0
    side = sidecar_path(path)
    if side.exists():
        header = json.loads(side.read_text())
        if int(header.get("n", samples.size)) != samples.size:
            raise ConfigurationError(f"{path}: header says n={header['n']}, file holds {samples.size}")
        rate = float(header.get("sample_rate", 1.0))
    return SampleRecord(samples, sample_period=1.0 / rate), rate


def write_ca_csv(ca: CycleAutocorrelationMatrix, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "d", "re", "im"])
        for k in range(ca.n):
            for col, d in enumerate(ca.delays):
                v = ca.entries[k, col]
                writer.writerow([k, d, repr(float(v.real)), repr(float(v.imag))])
    return path


def read_ca_csv(path) -> CycleAutocorrelationMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    delays = sorted({int(r["d"]) for r in rows})
    n = max(int(r["k"]) for r in rows) + 1
    out = np.zeros((n, len(delays)), dtype=np.complex128)
    col = {d: i for i, d in enumerate(delays)}
    for r in rows:
        out[int(r["k"]), col[int(r["d"])]] = complex(float(r["re"]), float(r["im"]))
    return CycleAutocorrelationMatrix(out, tuple(delays))


def write_ca_binary(ca: CycleAutocorrelationMatrix, path) -> Path:
    """uint32 N, uint32 M_d, int32 delays, then row-major complex64, all little-endian."""
    path = Path(path)
    head = np.array([ca.n, len(ca.delays)], dtype="<u4").tobytes()
    head += np.asarray(ca.delays, dtype="<i4").tobytes()
    path.write_bytes(head + ca.entries.astype("<c8").tobytes())
    return path


def read_ca_binary(path) -> CycleAutocorrelationMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ConfigurationError(f"{path}: truncated header")
    n, m_d = np.frombuffer(blob[:8], dtype="<u4")
    n, m_d = int(n), int(m_d)
    expected = 8 + 4 * m_d + 8 * n * m_d
    if len(blob) != expected:
        raise ConfigurationError(f"{path}: expected {expected} bytes, found {len(blob)}")
    delays = tuple(int(d) for d in np.frombuffer(blob[8:8 + 4 * m_d], dtype="<i4"))
    body = np.frombuffer(blob[8 + 4 * m_d:], dtype="<c8").reshape(n, m_d)
    return CycleAutocorrelationMatrix(body.astype(np.complex128), delays)


def write_dictionary_csv(dictionary: StructureDictionary, path) -> Path:
    path = Path(path)
    coo = dictionary.entries.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for i in order:
            writer.writerow([int(coo.row[i]), int(coo.col[i]), repr(float(coo.data[i]))])
    return path


def read_dictionary_csv(path, n: int, kind: DictionaryKind | str, delay: int | None = None) -> StructureDictionary:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    r = np.array([int(x["row"]) for x in rows], dtype=int)
    c = np.array([int(x["col"]) for x in rows], dtype=int)
    v = np.array([float(x["value"]) for x in rows])
    mat = sparse.csc_array((v, (r, c)), shape=(n, n // 2))
    return StructureDictionary(mat, DictionaryKind(kind), delay)


def write_json(obj, path) -> Path:
    path = Path(path)
    payload = obj.to_dict() if hasattr(obj, "to_dict") else obj
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path

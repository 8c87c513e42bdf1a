"""On-disk dataset and attack-batch formats.

Scenario datasets exist in two interchangeable forms: a length-prefixed
binary layout and a JSON-lines mirror.  Both carry the case name and a
schema version in their header.  Attack batches are JSON-lines.  Hashes are
SHA-256 over file bytes and anchor the no-spillage checks.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .powerflow import StateVector
from .sfdia import AttackSampleLabel

DATASET_MAGIC = b"FDBDS001"
SCHEMA_VERSION = 1
VARIANT_CODES = {"none": 0, "perfect": 1, "noisy_params": 2, "noisy_state": 3}
VARIANT_NAMES = {v: k for k, v in VARIANT_CODES.items()}


@dataclass(frozen=True)
class DatasetRecord:
    timestamp_index: int
    true_state: np.ndarray
    measurements: np.ndarray
    estimated_state: np.ndarray | None = None
    label: AttackSampleLabel | None = None

    def estimated(self) -> StateVector:
        if self.estimated_state is None:
            raise ValueError("record carries no estimated state")
        return StateVector.from_array(self.estimated_state)


@dataclass(frozen=True)
class DatasetHeader:
    case_name: str
    n_state: int
    n_measurements: int
    has_labels: bool
    profile: str = ""
    schema_version: int = SCHEMA_VERSION


def _label_doc(label):
    return {"attacked": label.attacked, "variant": label.variant,
            "mask": np.nonzero(label.compromised_state_mask)[0].tolist()}


def _label_from(doc, n_state):
    mask = np.zeros(n_state, dtype=bool)
    mask[doc["mask"]] = True
    return AttackSampleLabel(attacked=doc["attacked"], variant=doc["variant"],
                             compromised_state_mask=mask)


def write_dataset_jsonl(path, header: DatasetHeader, records) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({
            "schema": "fdibench-dataset/1", "version": header.schema_version,
            "case": header.case_name, "n_state": header.n_state,
            "n_measurements": header.n_measurements,
            "has_labels": header.has_labels, "profile": header.profile,
        }) + "\n")
        for rec in records:
            doc = {
                "t": rec.timestamp_index,
                "true_state": rec.true_state.tolist(),
                "measurements": rec.measurements.tolist(),
                "estimated_state": (rec.estimated_state.tolist()
                                    if rec.estimated_state is not None else None),
            }
            if header.has_labels:
                doc["label"] = _label_doc(rec.label)
            fh.write(json.dumps(doc) + "\n")


def read_dataset_jsonl(path):
    with open(path) as fh:
        head = json.loads(fh.readline())
        if head.get("schema") != "fdibench-dataset/1":
            raise ValueError(f"unsupported dataset schema {head.get('schema')!r}")
        header = DatasetHeader(case_name=head["case"], n_state=head["n_state"],
                               n_measurements=head["n_measurements"],
                               has_labels=head["has_labels"],
                               profile=head.get("profile", ""),
                               schema_version=head["version"])
        records = []
        for line in fh:
            doc = json.loads(line)
            est = doc.get("estimated_state")
            records.append(DatasetRecord(
                timestamp_index=doc["t"],
                true_state=np.array(doc["true_state"]),
                measurements=np.array(doc["measurements"]),
                estimated_state=np.array(est) if est is not None else None,
                label=_label_from(doc["label"], header.n_state)
                if header.has_labels else None))
    return header, records


def _pack_record(rec: DatasetRecord, header: DatasetHeader) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<q", rec.timestamp_index))
    buf.write(np.ascontiguousarray(rec.true_state, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(rec.measurements, dtype="<f8").tobytes())
    has_est = rec.estimated_state is not None
    buf.write(struct.pack("<B", has_est))
    if has_est:
        buf.write(np.ascontiguousarray(rec.estimated_state, dtype="<f8").tobytes())
    if header.has_labels:
        label = rec.label
        buf.write(struct.pack("<BB", label.attacked, VARIANT_CODES[label.variant]))
        buf.write(np.packbits(label.compromised_state_mask).tobytes())
    return buf.getvalue()


def write_dataset_binary(path, header: DatasetHeader, records) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        name = header.case_name.encode()
        profile = header.profile.encode()
        fh.write(struct.pack("<IHH", header.schema_version, len(name), len(profile)))
        fh.write(name)
        fh.write(profile)
        fh.write(struct.pack("<qqB", header.n_state, header.n_measurements,
                             header.has_labels))
        for rec in records:
            payload = _pack_record(rec, header)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def read_dataset_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != DATASET_MAGIC:
        raise ValueError(f"not a dataset file (bad magic {data[:8]!r})")
    off = 8
    version, name_len, prof_len = struct.unpack_from("<IHH", data, off)
    off += 8
    name = data[off:off + name_len].decode()
    off += name_len
    profile = data[off:off + prof_len].decode()
    off += prof_len
    n_state, n_meas, has_labels = struct.unpack_from("<qqB", data, off)
    off += 17
    header = DatasetHeader(case_name=name, n_state=n_state, n_measurements=n_meas,
                           has_labels=bool(has_labels), profile=profile,
                           schema_version=version)
    records = []
    mask_bytes = (n_state + 7) // 8
    while off < len(data):
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        end = off + length
        (t,) = struct.unpack_from("<q", data, off)
        off += 8
        true_state = np.frombuffer(data, "<f8", n_state, off).copy()
        off += 8 * n_state
        meas = np.frombuffer(data, "<f8", n_meas, off).copy()
        off += 8 * n_meas
        (has_est,) = struct.unpack_from("<B", data, off)
        off += 1
        est = None
        if has_est:
            est = np.frombuffer(data, "<f8", n_state, off).copy()
            off += 8 * n_state
        label = None
        if has_labels:
            attacked, variant = struct.unpack_from("<BB", data, off)
            off += 2
            bits = np.unpackbits(np.frombuffer(data, np.uint8, mask_bytes, off))
            off += mask_bytes
            label = AttackSampleLabel(attacked=bool(attacked),
                                      variant=VARIANT_NAMES[variant],
                                      compromised_state_mask=bits[:n_state].astype(bool))
        if off != end:
            raise ValueError(f"record at t={t} has inconsistent length")
        records.append(DatasetRecord(timestamp_index=t, true_state=true_state,
                                     measurements=meas, estimated_state=est,
                                     label=label))
    return header, records


def write_dataset(stem, header: DatasetHeader, records) -> dict:
    """Write the binary file plus its JSON-lines mirror; returns both paths."""
    records = list(records)
    binary = f"{stem}.bin"
    mirror = f"{stem}.jsonl"
    write_dataset_binary(binary, header, records)
    write_dataset_jsonl(mirror, header, records)
    return {"binary": binary, "jsonl": mirror}


def read_dataset(path):
    """Read either format, sniffing by magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == DATASET_MAGIC:
        return read_dataset_binary(path)
    return read_dataset_jsonl(path)


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Attack batches
# ---------------------------------------------------------------------------

def write_attack_batch(path, rows) -> None:
    """JSON-lines of per-sample attack records."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": "fdibench-attacks/1"}) + "\n")
        for row in rows:
            fh.write(json.dumps({
                "sample_id": row["sample_id"],
                "epsilon": row["epsilon"],
                "mode": row["mode"],
                "selected_indices": list(row["selected_indices"]),
                "eta": [float(v) for v in row["eta"]],
                "lambda_star": row["lambda_star"],
                "lambda_2": row["lambda_2"],
            }) + "\n")


def read_attack_batch(path):
    with open(path) as fh:
        head = json.loads(fh.readline())
        if head.get("schema") != "fdibench-attacks/1":
            raise ValueError(f"unsupported attack batch schema {head.get('schema')!r}")
        return [json.loads(line) for line in fh]

"""On-disk formats: EEGB recordings, EEGC checkpoints, manifests, datasets and reports.

All binary integers and floats are little-endian. Every artifact carries a
format version and readers reject versions they do not know.
"""
import csv
import io
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .exceptions import ParseError
from .experiment import Cohort
from .preprocessing import Recording
from .spectral import to_network_input
from .training import CURVE_COLUMNS

EEGB_MAGIC = b"EEGB"
EEGB_VERSION = 1
EEGC_MAGIC = b"EEGC"
EEGC_VERSION = 1
MANIFEST_VERSION = 1
DATASET_VERSION = 1
METRICS_VERSION = 1
SEX_UNKNOWN = 255


class _Reader:
    """Cursor over a byte buffer that reports the offset of any failure."""

    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n, what):
        if n > len(self.buf) - self.pos:
            raise ParseError(f"truncated {what}: expected {n} bytes, found "
                             f"{len(self.buf) - self.pos}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))[0]

    def string(self, what):
        start = self.pos
        n = self.unpack("I", f"{what} length")
        try:
            return str(self.take(n, what), "utf-8")
        except UnicodeDecodeError:
            raise ParseError(f"{what} is not valid UTF-8", start) from None

    def remaining(self):
        return len(self.buf) - self.pos


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _check_magic(r, magic, version, kind):
    got = bytes(r.take(4, "magic"))
    if got != magic:
        raise ParseError(f"bad magic {got!r}, expected {magic!r}", 0)
    v = r.unpack("I", "version")
    if v != version:
        raise ParseError(f"unsupported {kind} version {v}", 4)


# --- EEGB recordings -------------------------------------------------------

def encode_eegb(rec: Recording) -> bytes:
    sex = SEX_UNKNOWN if rec.sex is None else int(rec.sex)
    if sex not in (0, 1, SEX_UNKNOWN):
        raise ValueError("sex must be 0, 1 or unknown")
    n_ch, n = rec.data.shape
    parts = [EEGB_MAGIC, struct.pack("<IIQdB", EEGB_VERSION, n_ch, n, rec.sample_rate_hz, sex),
             _pack_str(rec.subject_id)]
    parts += [_pack_str(name) for name in rec.channel_names]
    parts.append(struct.pack("<I", len(rec.annotations)))
    for label, start, end in rec.annotations:
        parts += [_pack_str(label), struct.pack("<QQ", start, end)]
    parts.append(np.ascontiguousarray(rec.data, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_eegb(buf) -> Recording:
    r = _Reader(buf)
    _check_magic(r, EEGB_MAGIC, EEGB_VERSION, "EEGB")
    n_ch = r.unpack("I", "channel count")
    n = r.unpack("Q", "sample count")
    fs = r.unpack("d", "sample rate")
    sex_at = r.pos
    sex = r.unpack("B", "sex")
    if sex not in (0, 1, SEX_UNKNOWN):
        raise ParseError(f"invalid sex code {sex}", sex_at)
    subject = r.string("subject id")
    if n_ch * 4 > r.remaining():
        raise ParseError(f"channel count {n_ch} exceeds the file size", 8)
    names = [r.string(f"channel name {i}") for i in range(n_ch)]
    count_at = r.pos
    n_ann = r.unpack("I", "annotation count")
    if n_ann * 20 > r.remaining():
        raise ParseError(f"annotation count {n_ann} exceeds the file size", count_at)
    anns = []
    for i in range(n_ann):
        label = r.string(f"annotation {i} label")
        start, end = r.unpack("Q", "annotation start"), r.unpack("Q", "annotation end")
        anns.append((label, start, end))
    expected = n_ch * n * 4
    if r.remaining() != expected:
        raise ParseError(f"data section has {r.remaining()} bytes, expected {expected} "
                         f"({n_ch} channels x {n} samples x 4)", r.pos)
    data = np.frombuffer(r.take(expected, "data"), dtype="<f4").reshape(n_ch, n)
    try:
        return Recording(subject, None if sex == SEX_UNKNOWN else sex, fs, names,
                         data.astype(np.float32), anns)
    except ValueError as e:
        raise ParseError(str(e)) from None


def write_eegb(path, rec: Recording):
    with open(path, "wb") as f:
        f.write(encode_eegb(rec))


def read_eegb(path) -> Recording:
    with open(path, "rb") as f:
        return decode_eegb(f.read())


# --- EEGC checkpoints ------------------------------------------------------

@dataclass
class Checkpoint:
    model: str
    epoch: int
    params: Dict[str, np.ndarray]
    seed: int = 0
    config: Dict = field(default_factory=dict)
    optimizer: Optional[Dict[str, np.ndarray]] = None

    def n_scalars(self):
        return int(sum(v.size for v in self.params.values()))


def _pack_tensors(tensors):
    parts = [struct.pack("<I", len(tensors))]
    for name, v in tensors.items():
        v = np.asarray(v)
        if v.dtype != np.float32:
            raise ValueError(f"tensor {name!r} is {v.dtype}; checkpoints hold float32 data")
        parts += [_pack_str(name), struct.pack("<I", v.ndim),
                  struct.pack(f"<{v.ndim}I", *v.shape), v.astype("<f4").tobytes()]
    return parts


def _read_tensors(r, what):
    count_at = r.pos
    n = r.unpack("I", f"{what} count")
    if n * 8 > r.remaining():
        raise ParseError(f"{what} count {n} exceeds the file size", count_at)
    out = {}
    for _ in range(n):
        name = r.string(f"{what} name")
        rank = r.unpack("I", f"rank of {name}")
        if rank * 4 > r.remaining():
            raise ParseError(f"rank {rank} of {name} exceeds the file size", r.pos - 4)
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        size = math.prod(dims)
        out[name] = np.frombuffer(r.take(4 * size, f"data of {name}"), dtype="<f4") \
            .reshape(dims).astype(np.float32)
    return out


def encode_checkpoint(ck: Checkpoint) -> bytes:
    parts = [EEGC_MAGIC, struct.pack("<I", EEGC_VERSION), _pack_str(ck.model),
             struct.pack("<IQ", ck.epoch, ck.seed),
             _pack_str(json.dumps(ck.config, sort_keys=True))]
    parts += _pack_tensors(ck.params)
    if ck.optimizer is None:
        parts.append(struct.pack("<B", 0))
    else:
        opt = dict(ck.optimizer)
        t = int(opt.pop("t"))
        parts.append(struct.pack("<BQ", 1, t))
        parts += _pack_tensors(opt)
    return b"".join(parts)


def decode_checkpoint(buf) -> Checkpoint:
    r = _Reader(buf)
    _check_magic(r, EEGC_MAGIC, EEGC_VERSION, "EEGC")
    model = r.string("model name")
    epoch = r.unpack("I", "epoch")
    seed = r.unpack("Q", "seed")
    cfg_at = r.pos
    try:
        config = json.loads(r.string("config"))
    except json.JSONDecodeError:
        raise ParseError("config blob is not valid JSON", cfg_at) from None
    params = _read_tensors(r, "tensor")
    has_opt = r.unpack("B", "optimizer flag")
    optimizer = None
    if has_opt == 1:
        t = r.unpack("Q", "optimizer step")
        optimizer = {"t": np.array(t, dtype=np.int64), **_read_tensors(r, "optimizer tensor")}
    elif has_opt != 0:
        raise ParseError(f"invalid optimizer flag {has_opt}", r.pos - 1)
    if r.remaining():
        raise ParseError(f"{r.remaining()} unexpected trailing bytes", r.pos)
    return Checkpoint(model, epoch, params, seed, config, optimizer)


def save_checkpoint(path, net, epoch, optimizer=None, config=None, params=None):
    """Write ``net`` (or an explicit ``params`` snapshot) to an EEGC file."""
    ck = Checkpoint(net.name, int(epoch),
                    dict(params if params is not None else net.named_parameters()),
                    int(net.seed), dict(config or {}),
                    optimizer.state_dict() if optimizer is not None else None)
    with open(path, "wb") as f:
        f.write(encode_checkpoint(ck))
    return ck


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())


def restore_network(ck: Checkpoint, net):
    """Copy checkpoint parameters into ``net``; the model names must match."""
    if ck.model != net.name:
        raise ValueError(f"checkpoint holds {ck.model!r}, network is {net.name!r}")
    net.load_parameters(ck.params)
    return net


def network_from_checkpoint(ck: Checkpoint):
    from .models import build
    net = build(ck.model, width=float(ck.config.get("width", 1.0)), seed=ck.seed,
                input_scale=float(ck.config.get("input_scale", 1.0)))
    return restore_network(ck, net)


# --- JSON documents --------------------------------------------------------

def _versioned(doc, kind, version):
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise ParseError(f"not a {kind} document")
    if doc.get("version") != version:
        raise ParseError(f"unsupported {kind} version {doc.get('version')!r}")
    return doc


def _load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", e.pos) from None


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_manifest(path, entries: List[Dict]):
    """``entries``: dicts with ``path`` (relative to the manifest), ``subject_id``, ``sex``."""
    doc = {"format": "manifest", "version": MANIFEST_VERSION,
           "recordings": [{"path": e["path"], "subject_id": e["subject_id"], "sex": e["sex"]}
                          for e in entries]}
    _dump_json(path, doc)


def read_manifest(path) -> List[Dict]:
    doc = _versioned(_load_json(path), "manifest", MANIFEST_VERSION)
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for e in doc["recordings"]:
        if not {"path", "subject_id", "sex"} <= set(e):
            raise ParseError(f"manifest entry missing keys: {e}")
        out.append(dict(e, path=os.path.join(base, e["path"])))
    return out


def read_config(path) -> Dict:
    """Flat JSON object of config keys; an optional ``version`` must be 1."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    if doc.pop("version", 1) != 1:
        raise ParseError("unsupported config version")
    return doc


def metrics_document(model, seed, eval_epoch, per_sample, per_subject, n_samples,
                     n_subjects, config=None):
    return {"format": "metrics", "version": METRICS_VERSION, "model": model, "seed": int(seed),
            "eval_epoch": int(eval_epoch), "per_sample": float(per_sample),
            "per_subject": float(per_subject), "n_samples": int(n_samples),
            "n_subjects": int(n_subjects), "config": dict(config or {})}


def write_metrics(path, doc):
    _dump_json(path, _versioned(doc, "metrics", METRICS_VERSION))


def read_metrics(path):
    return _versioned(_load_json(path), "metrics", METRICS_VERSION)


# --- curves CSV ------------------------------------------------------------

def curves_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in rows:
        w.writerow([int(row["epoch"])] + [repr(float(row[c])) for c in CURVE_COLUMNS[1:]])
    return buf.getvalue()


def write_curves(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(curves_csv(rows))


def read_curves(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CURVE_COLUMNS:
            raise ParseError(f"unexpected curves header {header}")
        return [{"epoch": int(r[0]), **{c: float(v) for c, v in zip(CURVE_COLUMNS[1:], r[1:])}}
                for r in reader]


# --- datasets (npz) --------------------------------------------------------

def write_dataset(path, cohort: Cohort, pixels=None):
    """Save a cohort; spectral cohorts are stored as their uint8 images."""
    arrays = {"format": np.array("dataset"), "version": np.array(DATASET_VERSION),
              "kind": np.array(cohort.kind), "y": cohort.y,
              "subjects": cohort.subjects.astype(str),
              "provenance": np.array(json.dumps(cohort.provenance, sort_keys=True))}
    if cohort.kind == "raw":
        arrays["X"] = cohort.X[:, 0].astype(np.float32)
    else:
        if pixels is None:
            pixels = _to_pixels(cohort.X, cohort.kind)
        arrays["pixels"] = np.asarray(pixels, dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def _to_pixels(X, kind):
    p = np.rint(np.asarray(X) * 255.0).astype(np.uint8)
    return p.transpose(0, 2, 3, 1) if kind == "chromatic" else p[:, 0]


def read_dataset(path) -> Cohort:
    try:
        with np.load(path, allow_pickle=False) as z:
            d = {k: z[k] for k in z.files}
    except (ValueError, OSError) as e:
        raise ParseError(f"not a dataset file: {e}") from None
    if str(d.get("format", "")) != "dataset":
        raise ParseError("not a dataset file")
    if int(d["version"]) != DATASET_VERSION:
        raise ParseError(f"unsupported dataset version {int(d['version'])}")
    kind = str(d["kind"])
    if kind == "raw":
        X = d["X"].astype(np.float32)[:, None]
    else:
        X = to_network_input(d["pixels"], kind)
    return Cohort(X, d["y"], d["subjects"], kind, json.loads(str(d["provenance"])))

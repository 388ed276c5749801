"""File formats: annotations, maps, partitions, proxies, reports.

JSON documents carry a ``"format": "<name>/<major>"`` tag and readers
reject any other major version. Floats are written with ``repr`` in JSON and
``%.17g`` in CSV, both of which round-trip 64-bit floats exactly.

Binary maps use a 16-byte little-endian header followed by row-major cells:

* density / local-count maps: ``b"UEPD"``, u32 height, u32 width,
  u32 patch size (0 for a pixel density map), then float64 cells;
* class maps: ``b"UEPC"``, u32 height, u32 width, u16 cell width in bytes
  (1, 2 or 4), u16 interval count ``m``, then unsigned integer cells.
"""

from __future__ import annotations

import csv
import json
import math
import re
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .density import CountCollection, DensityMap, KernelSpec, LocalCountMap, PointAnnotation
from .errors import DataError, FormatVersionError, ParameterError
from .partition import Partition
from .proxies import IphPair, ProxyTable
from .quantize import ClassMap, ErrorReport
from .simulate import Cell, ComparisonMatrix, IphReport, NoiseModel

PARTITION_FORMAT = "uep-partition/1"
PROXIES_FORMAT = "uep-proxies/1"
IPH_FORMAT = "uep-iph/1"
REPORT_FORMAT = "uep-report/1"
COMPARISON_FORMAT = "uep-comparison/1"
IPH_REPORT_FORMAT = "uep-iph-report/1"
MANIFEST_FORMAT = "uep-manifest/1"
RUNCONFIG_FORMAT = "uep-runconfig/1"

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_HDR = struct.Struct("<4sIII")
_CHDR = struct.Struct("<4sIIHH")


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _nan_to_none(v):
    return [None if (isinstance(x, float) and math.isnan(x)) else x for x in v]


def _none_to_nan(v):
    return [float("nan") if x is None else x for x in v]


def check_format(doc: dict, expected: str) -> None:
    tag = doc.get("format") if isinstance(doc, dict) else None
    name, _, major = expected.partition("/")
    if not isinstance(tag, str):
        raise FormatVersionError(f"missing format tag, expected {expected!r}")
    got_name, _, got_major = tag.partition("/")
    if got_name != name:
        raise FormatVersionError(f"expected a {name!r} document, got {tag!r}")
    if got_major != major:
        raise FormatVersionError(f"unsupported {name} version {got_major!r}; this reader handles {major!r}")


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


# -- annotations -------------------------------------------------------------

def _annotation_from_obj(obj, where: str) -> PointAnnotation:
    try:
        return PointAnnotation(str(obj["image_id"]), int(obj["width"]), int(obj["height"]),
                               np.asarray(obj.get("points", []), dtype=np.float64).reshape(-1, 2))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{where}: malformed annotation ({exc})") from None


def load_annotations(path, fmt: str | None = None, dims=None) -> list[PointAnnotation]:
    """Read annotations from JSON (one object or a list) or CSV.

    CSV rows are ``image_id,x,y`` (an optional header is skipped) and need a
    dimensions sidecar ``image_id,width,height``; images listed in the
    sidecar without points load as empty annotations.
    """
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "json")
    if fmt == "json":
        doc = read_json(path)
        items = doc if isinstance(doc, list) else [doc]
        return [_annotation_from_obj(o, f"{path} item {i}") for i, o in enumerate(items)]
    if fmt != "csv":
        raise ParameterError(f"unknown annotation format {fmt!r}")
    if dims is None:
        raise ParameterError("CSV annotations need a dimensions sidecar (image_id,width,height)")
    sizes: dict[str, tuple[int, int]] = {}
    with open(dims, newline="") as fh:
        for line, row in enumerate(csv.reader(fh), 1):
            if not row or (line == 1 and row[0].strip() == "image_id"):
                continue
            try:
                sizes[row[0].strip()] = (int(row[1]), int(row[2]))
            except (IndexError, ValueError):
                raise DataError(f"{dims}:{line}: expected image_id,width,height, got {row!r}") from None
    points: dict[str, list] = {k: [] for k in sizes}
    with open(path, newline="") as fh:
        for line, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            try:
                x, y = float(row[1]), float(row[2])
            except (IndexError, ValueError):
                if line == 1:
                    continue
                raise DataError(f"{path}:{line}: expected image_id,x,y, got {row!r}") from None
            key = row[0].strip()
            if key not in points:
                raise DataError(f"{path}:{line}: image {key!r} missing from dimensions sidecar")
            points[key].append((x, y))
    return [PointAnnotation(k, w, h, np.array(points[k], dtype=np.float64).reshape(-1, 2))
            for k, (w, h) in sizes.items()]


def save_annotations(anns: Sequence[PointAnnotation], path, dims=None) -> None:
    path = Path(path)
    if path.suffix.lower() != ".csv":
        write_json([{"image_id": a.image_id, "width": a.width, "height": a.height,
                     "points": a.points.tolist()} for a in anns], path)
        return
    if dims is None:
        raise ParameterError("CSV annotations need a dimensions sidecar path")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "x", "y"])
        for a in anns:
            for x, y in a.points:
                w.writerow([a.image_id, _g(x), _g(y)])
    with open(dims, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "width", "height"])
        for a in anns:
            w.writerow([a.image_id, a.width, a.height])


# -- grids ---------------------------------------------------------------------

def write_grid_csv(values: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for row in np.atleast_2d(values):
            fh.write(",".join(_g(v) for v in row) + "\n")


def read_grid_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line, text in enumerate(fh, 1):
            if text.strip():
                try:
                    rows.append([float(v) for v in text.split(",")])
                except ValueError:
                    raise DataError(f"{path}:{line}: non-numeric cell") from None
    if len({len(r) for r in rows}) > 1:
        raise DataError(f"{path}: ragged grid")
    return np.array(rows, dtype=np.float64)


def write_map_bin(values: np.ndarray, path, patch_size: int = 0) -> None:
    v = np.ascontiguousarray(values, dtype="<f8")
    h, w = v.shape
    with open(path, "wb") as fh:
        fh.write(_HDR.pack(b"UEPD", h, w, patch_size))
        fh.write(v.tobytes())


def read_map_bin(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if len(raw) < _HDR.size:
        raise DataError(f"{path}: truncated header")
    magic, h, w, s = _HDR.unpack_from(raw)
    if magic != b"UEPD":
        raise DataError(f"{path}: bad magic {magic!r}, expected b'UEPD'")
    if len(raw) != _HDR.size + 8 * h * w:
        raise DataError(f"{path}: expected {h}x{w} float64 cells")
    return np.frombuffer(raw, dtype="<f8", offset=_HDR.size).reshape(h, w).astype(np.float64), s


def write_class_bin(c: ClassMap, path) -> None:
    width = 1 if c.m <= 0xFF else 2 if c.m <= 0xFFFF else 4
    if c.m > 0xFFFF:
        raise ParameterError(f"class maps support at most 65535 intervals, got {c.m}")
    h, w = c.shape
    with open(path, "wb") as fh:
        fh.write(_CHDR.pack(b"UEPC", h, w, width, c.m))
        fh.write(np.ascontiguousarray(c.values, dtype=f"<u{width}").tobytes())


def read_class_bin(path, image_id: str | None = None) -> ClassMap:
    raw = Path(path).read_bytes()
    if len(raw) < _CHDR.size:
        raise DataError(f"{path}: truncated header")
    magic, h, w, width, m = _CHDR.unpack_from(raw)
    if magic != b"UEPC":
        raise DataError(f"{path}: bad magic {magic!r}, expected b'UEPC'")
    if width not in (1, 2, 4) or len(raw) != _CHDR.size + width * h * w:
        raise DataError(f"{path}: bad cell width {width} or size")
    v = np.frombuffer(raw, dtype=f"<u{width}", offset=_CHDR.size).reshape(h, w).astype(np.int64)
    return ClassMap(image_id or Path(path).stem, v, m)


def _check_id(image_id: str):
    if not _ID_RE.match(image_id):
        raise DataError(f"image id {image_id!r} is not usable as a file name")


def save_maps(maps: Iterable[DensityMap | LocalCountMap | ClassMap], directory, fmt: str = "bin") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for mp in maps:
        _check_id(mp.image_id)
        if isinstance(mp, ClassMap):
            path = d / f"{mp.image_id}.uepc"
            write_class_bin(mp, path)
        elif fmt == "csv":
            path = d / f"{mp.image_id}.csv"
            write_grid_csv(mp.values, path)
        else:
            path = d / f"{mp.image_id}.uepd"
            write_map_bin(mp.values, path, getattr(mp, "patch_size", 0))
        written.append(path)
    return written


def _map_files(directory, suffixes):
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix in suffixes)
    if not files:
        raise DataError(f"{d}: no map files ({', '.join(suffixes)})")
    return files


def load_density_maps(directory) -> list[DensityMap]:
    out = []
    for f in _map_files(directory, (".uepd", ".csv")):
        v = read_map_bin(f)[0] if f.suffix == ".uepd" else read_grid_csv(f)
        out.append(DensityMap(f.stem, v))
    return out


def load_local_count_maps(directory, patch_size: int | None = None) -> list[LocalCountMap]:
    out = []
    for f in _map_files(directory, (".uepd", ".csv")):
        if f.suffix == ".uepd":
            v, s = read_map_bin(f)
        else:
            v, s = read_grid_csv(f), 0
        out.append(LocalCountMap(f.stem, patch_size or s or 8, v))
    return out


def load_class_maps(directory) -> list[ClassMap]:
    return [read_class_bin(f) for f in _map_files(directory, (".uepc",))]


# -- count collections -----------------------------------------------------------

def save_counts(t: CountCollection, path) -> None:
    with open(path, "w") as fh:
        fh.write("count\n")
        fh.writelines(_g(v) + "\n" for v in t.counts)


def load_counts(path) -> CountCollection:
    vals = []
    with open(path) as fh:
        for line, text in enumerate(fh, 1):
            text = text.strip()
            if not text or (line == 1 and text == "count"):
                continue
            try:
                vals.append(float(text))
            except ValueError:
                raise DataError(f"{path}:{line}: not a number: {text!r}") from None
    if not vals:
        raise DataError(f"{path}: no counts")
    return CountCollection.from_values(vals)


# -- partitions and proxies ---------------------------------------------------------

def partition_to_dict(p: Partition) -> dict:
    return {"format": PARTITION_FORMAT, "strategy": p.strategy, "m": p.m, "t0": p.t0,
            "borders": p.borders.tolist(), "t_max": p.t_max, "epsilon": p.epsilon,
            "final_l_bar": p.final_l_bar}


def partition_from_dict(doc: dict) -> Partition:
    check_format(doc, PARTITION_FORMAT)
    p = Partition(np.array(doc["borders"], dtype=np.float64), doc.get("strategy", "explicit"),
                  doc.get("epsilon"), doc.get("final_l_bar"))
    if "m" in doc and doc["m"] != p.m:
        raise DataError(f"partition declares m={doc['m']} but has {p.m} intervals")
    return p


def proxies_to_dict(t: ProxyTable) -> dict:
    return {"format": PROXIES_FORMAT, "method": t.method, "proxies": t.proxies.tolist(),
            "empty_flags": t.empty.tolist()}


def proxies_from_dict(doc: dict) -> ProxyTable:
    check_format(doc, PROXIES_FORMAT)
    return ProxyTable(np.array(doc["proxies"], dtype=np.float64), doc["method"], np.array(doc["empty_flags"], bool))


def iph_to_dict(pair: IphPair) -> dict:
    def head(h):
        return {"partition": partition_to_dict(h[0]), "proxies": proxies_to_dict(h[1])}
    return {"format": IPH_FORMAT, "head0": head(pair.head0), "head1": head(pair.head1)}


def iph_from_dict(doc: dict) -> IphPair:
    check_format(doc, IPH_FORMAT)

    def head(h):
        return partition_from_dict(h["partition"]), proxies_from_dict(h["proxies"])
    return IphPair(head(doc["head0"]), head(doc["head1"]))


def save_partition(p: Partition, path):
    write_json(partition_to_dict(p), path)


def load_partition(path) -> Partition:
    return partition_from_dict(read_json(path))


def save_proxies(t: ProxyTable, path):
    write_json(proxies_to_dict(t), path)


def load_proxies(path) -> ProxyTable:
    return proxies_from_dict(read_json(path))


def save_iph(pair: IphPair, path):
    write_json(iph_to_dict(pair), path)


def load_iph(path) -> IphPair:
    return iph_from_dict(read_json(path))


# -- reports ---------------------------------------------------------------------

_INTERVAL_COLUMNS = ("interval", "n", "length", "nl", "signed_sum", "abs_sum", "misclass", "class_mae")


def report_to_dict(r: ErrorReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": r.kind,
        "summary": r.summary(),
        "meta": r.meta,
        "clamped": r.clamped,
        "images": {"image_id": list(r.image_ids), "signed": r.signed.tolist()},
        "intervals": {
            "n": r.n.tolist(), "length": r.length.tolist(), "signed_sum": r.signed_sum.tolist(),
            "abs_sum": r.abs_sum.tolist(), "misclass": r.misclass.tolist(),
            "class_mae": _nan_to_none(r.class_mae.tolist()),
        },
    }


def report_from_dict(doc: dict) -> ErrorReport:
    check_format(doc, REPORT_FORMAT)
    iv = doc["intervals"]
    return ErrorReport(
        list(doc["images"]["image_id"]), np.array(doc["images"]["signed"], dtype=np.float64),
        np.array(iv["n"], dtype=np.int64), np.array(iv["length"], dtype=np.float64),
        np.array(iv["signed_sum"], dtype=np.float64), np.array(iv["abs_sum"], dtype=np.float64),
        np.array(iv["misclass"], dtype=np.float64), int(doc.get("clamped", 0)), doc.get("kind", "decomposition"),
        dict(doc.get("meta", {})),
    )


def save_report(r: ErrorReport, path):
    write_json(report_to_dict(r), path)


def load_report(path) -> ErrorReport:
    return report_from_dict(read_json(path))


def write_report_csv(r: ErrorReport, path) -> None:
    """One row per interval, then a ``total`` row of column sums."""
    cm = r.class_mae
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_INTERVAL_COLUMNS)
        for i in range(r.n.size):
            w.writerow([i, int(r.n[i]), _g(r.length[i]), _g(r.nl[i]), _g(r.signed_sum[i]), _g(r.abs_sum[i]),
                        _g(r.misclass[i]), "" if math.isnan(cm[i]) else _g(cm[i])])
        w.writerow(["total", int(r.n.sum()), _g(r.length.sum()), _g(r.nl.sum()), _g(r.signed_sum.sum()),
                    _g(r.abs_sum.sum()), _g(r.misclass.sum()), ""])


def read_report_csv(path) -> dict[str, list]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {"intervals": [r for r in rows if r["interval"] != "total"],
            "total": next(r for r in rows if r["interval"] == "total")}


def comparison_to_dict(cm: ComparisonMatrix) -> dict:
    cells = []
    for c in cm.rows():
        d = {"strategy": c.strategy, "method": c.method, "infeasible": c.infeasible}
        if c.infeasible is None:
            d.update({
                "mae": c.mae, "mse": c.mse, "disc_error": c.disc_error, "nl_cv": c.nl_cv,
                "signed": c.signed.tolist(), "disc_signed": c.disc_signed.tolist(),
                "n": c.n.tolist(), "length": c.length.tolist(), "abs_sum": c.abs_sum.tolist(),
            })
        cells.append(d)
    return {"format": COMPARISON_FORMAT, "strategies": cm.strategies, "methods": cm.methods,
            "seeds": list(cm.seeds), "image_ids": cm.image_ids, "meta": cm.meta, "cells": cells}


def comparison_from_dict(doc: dict) -> ComparisonMatrix:
    check_format(doc, COMPARISON_FORMAT)
    cm = ComparisonMatrix(list(doc["strategies"]), list(doc["methods"]), list(doc["seeds"]),
                          list(doc["image_ids"]), meta=dict(doc.get("meta", {})))
    for d in doc["cells"]:
        if d.get("infeasible") is not None:
            cell = Cell(d["strategy"], d["method"], infeasible=d["infeasible"])
        else:
            cell = Cell(d["strategy"], d["method"], np.array(d["signed"], dtype=np.float64),
                        np.array(d["disc_signed"], dtype=np.float64), float(d["nl_cv"]),
                        np.array(d["n"], dtype=np.int64), np.array(d["length"], dtype=np.float64),
                        np.array(d["abs_sum"], dtype=np.float64))
        cm.cells[(cell.strategy, cell.method)] = cell
    return cm


def save_comparison(cm: ComparisonMatrix, path):
    write_json(comparison_to_dict(cm), path)


def load_comparison(path) -> ComparisonMatrix:
    return comparison_from_dict(read_json(path))


def write_comparison_csv(cm: ComparisonMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "method", "mae", "mse", "disc_error", "nl_cv", "infeasible"])
        for c in cm.rows():
            if c.infeasible is not None:
                w.writerow([c.strategy, c.method, "", "", "", "", c.infeasible])
            else:
                w.writerow([c.strategy, c.method, _g(c.mae), _g(c.mse), _g(c.disc_error), _g(c.nl_cv), ""])


def write_per_image_csv(cm: ComparisonMatrix, path) -> None:
    """Every stored per-image error, enough to recompute each matrix cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "method", "seed", "image_id", "signed", "disc_signed"])
        for c in cm.rows():
            if c.infeasible is not None:
                continue
            for si, seed in enumerate(cm.seeds):
                for ii, img in enumerate(cm.image_ids):
                    w.writerow([c.strategy, c.method, seed, img, _g(c.signed[si, ii]), _g(c.disc_signed[ii])])


def write_plot_data(cm: ComparisonMatrix, path) -> None:
    """Per-interval contribution series: class index, n_i, l_i, n_i*l_i, class MAE."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "method", "class", "n", "length", "nl", "class_mae"])
        for c in cm.rows():
            if c.infeasible is not None:
                continue
            cmae = c.class_mae
            for i in range(c.n.size):
                w.writerow([c.strategy, c.method, i, int(c.n[i]), _g(c.length[i]), _g(c.n[i] * c.length[i]),
                            "" if math.isnan(cmae[i]) else _g(cmae[i])])


def iph_report_to_dict(r: IphReport) -> dict:
    return {"format": IPH_REPORT_FORMAT, "summary": r.summary(), "seeds": list(r.seeds),
            "image_ids": r.image_ids, "single": r.single.tolist(), "double": r.double.tolist(),
            "head0_correct": r.head0_correct.tolist(), "head1_correct": r.head1_correct.tolist(),
            "both_correct": r.both_correct.tolist(), "mode": r.mode, "shared_noise": r.shared_noise}


# -- run configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    m: int = 25
    t0: float = 1.6e-4
    epsilon: float | None = None
    strategy: str = "uep"
    proxies: str = "mcp"
    noise: str = "adjacent:0.1"
    seed: int = 0
    out: str = "."

    def __post_init__(self):
        if self.m < 2:
            raise ParameterError(f"m must be >= 2, got {self.m}")
        if not self.t0 > 0:
            raise ParameterError(f"t0 must be positive, got {self.t0}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        NoiseModel.parse(self.noise)

    def to_dict(self) -> dict:
        return {"format": RUNCONFIG_FORMAT, **asdict(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        check_format(doc, RUNCONFIG_FORMAT)
        return cls(**{k: v for k, v in doc.items() if k != "format"})


@dataclass
class DatasetManifest:
    name: str
    split: str
    annotations: list[str]
    kernel: KernelSpec = field(default_factory=KernelSpec)
    patch_size: int = 8
    dims: str | None = None
    notes: str = ""

    def __post_init__(self):
        if self.split not in ("train", "eval"):
            raise ParameterError(f"split must be 'train' or 'eval', got {self.split!r}")
        if self.patch_size < 1:
            raise ParameterError(f"patch size must be >= 1, got {self.patch_size}")

    def load(self) -> list[PointAnnotation]:
        out = []
        for a in self.annotations:
            out.extend(load_annotations(a, dims=self.dims))
        return out


def load_manifest(path) -> DatasetManifest:
    """Read a manifest; relative paths resolve against the manifest's folder."""
    doc = read_json(path)
    check_format(doc, MANIFEST_FORMAT)
    base = Path(path).parent
    files = [str(base / f) for f in doc["annotations"]]
    dims = str(base / doc["dims"]) if doc.get("dims") else None
    for f in files + ([dims] if dims else []):
        if not Path(f).exists():
            raise DataError(f"manifest {path}: missing file {f}")
    k = doc.get("kernel", {})
    return DatasetManifest(doc["name"], doc["split"], files, KernelSpec(**k), int(doc.get("patch_size", 8)),
                           dims, doc.get("notes", ""))

"""Historical power ingestion, day windowing, normalization and batching."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class SiteSeries:
    site_id: str
    capacity_mw: float
    resolution_minutes: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.capacity_mw <= 0:
            raise DataError(f"site {self.site_id}: capacity must be > 0")
        if self.resolution_minutes <= 0:
            raise DataError(f"site {self.site_id}: resolution must be > 0")
        if np.any(self.values < 0):
            raise DataError(f"site {self.site_id}: negative power values")


@dataclass
class ScenarioBatch:
    """Scenarios of shape ``(n_samples, n_sites, timesteps)`` in capacity units."""

    samples: np.ndarray
    provenance: str = "historical"
    labels: Optional[np.ndarray] = None
    family: Optional[str] = None
    site_ids: tuple = ()
    capacity_mw: tuple = ()
    overage_count: int = 0
    dropped_points: int = 0
    units: str = "normalized"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[:, None, :]
        if s.ndim != 3:
            raise DataError(f"scenario samples must be 3-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("scenario values must be finite")
        if self.units == "normalized" and s.size and (s.min() < 0 or s.max() > 1):
            raise DataError("normalized scenario values must lie in [0, 1]")
        self.samples = s
        if not self.site_ids:
            self.site_ids = tuple(f"site{k}" for k in range(s.shape[1]))
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != s.shape[0]:
                raise DataError("one label per sample required")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_sites(self) -> int:
        return self.samples.shape[1]

    @property
    def timesteps(self) -> int:
        return self.samples.shape[2]

    def flat(self) -> np.ndarray:
        return self.samples.reshape(self.n_samples, -1)

    def subset(self, idx) -> "ScenarioBatch":
        labels = None if self.labels is None else self.labels[idx]
        return ScenarioBatch(self.samples[idx], self.provenance, labels, self.family,
                             self.site_ids, self.capacity_mw, units=self.units)


def load_manifest(path) -> dict:
    """Read a dataset manifest (JSON with a ``sites`` mapping)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest JSON: {exc}") from None
    sites = doc.get("sites")
    if not isinstance(sites, dict) or not sites:
        raise DataError(f"{path}: manifest needs a non-empty 'sites' mapping")
    for sid, meta in sites.items():
        for key in ("capacity_mw", "resolution_minutes"):
            if key not in meta:
                raise DataError(f"{path}: site {sid!r} missing {key!r}")
    return doc


def load_csv(path, manifest: dict) -> list[SiteSeries]:
    """Parse ``timestamp,<site>,...`` rows into one :class:`SiteSeries` per site.

    Row numbers in errors are 1-based file lines (header is line 1).
    """
    path = Path(path)
    sites_meta = manifest["sites"]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        if header[0].strip() != "timestamp":
            raise DataError(f"{path}: first column must be 'timestamp'")
        columns = [h.strip() for h in header[1:]]
        for sid in sites_meta:
            if sid not in columns:
                raise DataError(f"{path}: missing column for site {sid!r}")
        order = [columns.index(sid) + 1 for sid in sites_meta]
        values = []
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno}: bad timestamp {row[0]!r}") from None
            if prev is not None and ts <= prev:
                raise DataError(f"{path}: row {lineno}: timestamps not strictly increasing")
            prev = ts
            try:
                vals = [float(row[k]) for k in order]
            except ValueError:
                raise DataError(f"{path}: row {lineno}: missing or non-numeric value") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}: row {lineno}: non-finite value")
            if min(vals) < 0:
                raise DataError(f"{path}: row {lineno}: negative power value")
            values.append(vals)
    if not values:
        raise DataError(f"{path}: no data rows")
    arr = np.array(values)
    return [
        SiteSeries(sid, float(meta["capacity_mw"]), int(meta["resolution_minutes"]), arr[:, j])
        for j, (sid, meta) in enumerate(sites_meta.items())
    ]


def points_per_day(resolution_minutes: int) -> int:
    if (24 * 60) % resolution_minutes:
        raise DataError(f"resolution {resolution_minutes} min does not divide a day")
    return 24 * 60 // resolution_minutes


def window_into_days(series: Sequence[SiteSeries]) -> ScenarioBatch:
    """Cut aligned site series into non-overlapping day windows, still in MW."""
    if not series:
        raise DataError("no series given")
    res = {s.resolution_minutes for s in series}
    lengths = {len(s.values) for s in series}
    if len(res) != 1 or len(lengths) != 1:
        raise DataError("series must share resolution and length")
    ppd = points_per_day(res.pop())
    length = lengths.pop()
    n_days = length // ppd
    if n_days == 0:
        raise DataError(f"series of {length} points is shorter than one day ({ppd} points)")
    dropped = length - n_days * ppd
    if dropped:
        log.warning("dropping %d trailing points (partial day)", dropped)
    stacked = np.stack([s.values[: n_days * ppd].reshape(n_days, ppd) for s in series], axis=1)
    return ScenarioBatch(
        stacked,
        site_ids=tuple(s.site_id for s in series),
        capacity_mw=tuple(s.capacity_mw for s in series),
        dropped_points=dropped,
        units="mw",
    )


def normalize(raw: np.ndarray | ScenarioBatch, capacity=None) -> ScenarioBatch:
    """Divide MW by capacity and clamp at 1, counting clamped entries.

    ``capacity`` is a scalar or one value per site; for a windowed batch it
    defaults to the batch's own capacities.
    """
    if isinstance(raw, ScenarioBatch):
        values, meta = raw.samples, raw
        if capacity is None:
            capacity = meta.capacity_mw
    else:
        values, meta = np.asarray(raw, dtype=np.float64), None
        if values.ndim == 2:
            values = values[:, None, :]
    cap = np.asarray(capacity, dtype=np.float64)
    if np.any(cap <= 0):
        raise DataError("capacity must be > 0")
    cap_b = cap.reshape(1, -1, 1) if cap.ndim == 1 else cap
    scaled = values / cap_b
    over = int(np.count_nonzero(scaled > 1.0))
    if over:
        log.warning("%d values exceed capacity; clamped to 1.0", over)
    scaled = np.minimum(scaled, 1.0)
    n_sites = scaled.shape[1]
    caps = tuple(float(c) for c in np.broadcast_to(cap.ravel(), (n_sites,))) if cap.ndim <= 1 else ()
    out = ScenarioBatch(
        scaled,
        provenance="historical",
        site_ids=meta.site_ids if meta is not None else (),
        capacity_mw=caps,
    )
    out.overage_count = over
    out.dropped_points = meta.dropped_points if meta is not None else 0
    return out


def denormalize(batch: ScenarioBatch, capacity=None) -> np.ndarray:
    cap = np.asarray(capacity if capacity is not None else batch.capacity_mw, dtype=np.float64)
    return batch.samples * cap.reshape(1, -1, 1) if cap.ndim == 1 else batch.samples * cap


def shuffle_and_batch(batch: ScenarioBatch, m: int, rng: np.random.Generator,
                      drop_last: bool = False) -> Iterator[np.ndarray]:
    """One epoch of sample mini-batches drawn without replacement."""
    n = batch.n_samples
    if m < 1 or m > n:
        raise DataError(f"batch size {m} invalid for {n} samples")
    perm = rng.permutation(n)
    stop = n - n % m if drop_last else n
    for start in range(0, stop, m):
        yield batch.samples[perm[start:start + m]]


@dataclass
class BatchStream:
    """Endless mini-batch stream that reshuffles each data epoch.

    Its state (rng, permutation, cursor) is plain data so it can be
    checkpointed and resumed bit-exactly.
    """

    n: int
    m: int
    rng: np.random.Generator
    perm: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cursor: int = 0
    data_epoch: int = 0

    def __post_init__(self):
        if self.m < 1 or self.m > self.n:
            raise DataError(f"batch size {self.m} invalid for {self.n} samples")

    def next(self) -> np.ndarray:
        if self.cursor + self.m > len(self.perm):
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
            self.data_epoch += 1
        idx = self.perm[self.cursor:self.cursor + self.m]
        self.cursor += self.m
        return idx


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def write_dataset(batch: ScenarioBatch, out_dir, capacity_mw: float = 16.0,
                  start: str = "2020-01-01T00:00:00", extra_manifest: dict | None = None) -> dict:
    """Write ``dataset.csv`` (MW, one column per site), ``labels.csv`` and ``manifest.json``.

    Days are laid end to end, so reading the CSV back and windowing it
    recovers the samples in order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = batch.timesteps
    res = 24 * 60 // T
    if res * T != 24 * 60:
        raise DataError(f"{T} timesteps per day do not give a whole-minute resolution")
    t0 = datetime.fromisoformat(start)
    series = batch.samples.transpose(1, 0, 2).reshape(batch.n_sites, -1) * capacity_mw
    with open(out / "dataset.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *batch.site_ids])
        for k in range(series.shape[1]):
            ts = (t0 + timedelta(minutes=res * k)).isoformat()
            w.writerow([ts, *(_fmt(v) for v in series[:, k])])
    if batch.labels is not None:
        with open(out / "labels.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "label"])
            for k, lab in enumerate(batch.labels):
                w.writerow([k, lab])
    manifest = {
        "data": "dataset.csv",
        "labels": "labels.csv" if batch.labels is not None else None,
        "family": batch.family,
        "timesteps_per_day": T,
        "sites": {sid: {"capacity_mw": capacity_mw, "resolution_minutes": res} for sid in batch.site_ids},
    }
    manifest.update(extra_manifest or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(manifest_path) -> ScenarioBatch:
    """Load a manifest-described dataset as a normalized, optionally labelled batch."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    root = manifest_path.parent
    data_file = manifest.get("data")
    if not data_file:
        raise DataError(f"{manifest_path}: manifest has no 'data' entry")
    batch = normalize(window_into_days(load_csv(root / data_file, manifest)))
    batch.provenance = "historical"
    batch.family = manifest.get("family")
    if manifest.get("labels"):
        with open(root / manifest["labels"], newline="") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) != batch.n_samples:
            raise DataError(f"{len(rows)} labels for {batch.n_samples} samples")
        batch.labels = np.array([r["label"] for r in rows])
    return batch


def write_scenarios(path, batches: dict, capacity_mw=None) -> None:
    """Write ``generator,scenario,site,t0..`` rows; ``capacity_mw`` switches to MW."""
    path = Path(path)
    items = list(batches.items())
    if not items:
        raise DataError("nothing to write")
    T = items[0][1].timesteps
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generator", "scenario", "site", *(f"t{k}" for k in range(T))])
        for gen, batch in items:
            vals = batch.samples
            if capacity_mw is not None:
                vals = vals * np.asarray(capacity_mw, dtype=np.float64).reshape(1, -1, 1)
            for s in range(batch.n_samples):
                for j, sid in enumerate(batch.site_ids):
                    w.writerow([gen, s, sid, *(_fmt(v) for v in vals[s, j])])


def read_scenarios(path) -> dict:
    """Inverse of :func:`write_scenarios` for normalized files."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["generator", "scenario", "site"]:
            raise DataError(f"{path}: not a scenario file")
        rows: dict = {}
        sites: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno}: wrong field count")
            gen, scen, site = row[0], int(row[1]), row[2]
            sites.setdefault(gen, [])
            if site not in sites[gen]:
                sites[gen].append(site)
            rows.setdefault(gen, {}).setdefault(scen, {})[site] = [float(v) for v in row[3:]]
    out = {}
    for gen, scen_map in rows.items():
        arr = np.array([[scen_map[s][site] for site in sites[gen]] for s in sorted(scen_map)])
        out[gen] = ScenarioBatch(arr, provenance=f"generated({gen})", site_ids=tuple(sites[gen]))
    return out

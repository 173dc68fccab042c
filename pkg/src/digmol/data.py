"""Dataset CSVs, flat run configuration files, and embedding export."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .encoder import EncoderConfig
from .smiles import SmilesError, parse_smiles

log = logging.getLogger(__name__)


class MissingColumn(ValueError):
    pass


class NoValidMolecules(ValueError):
    pass


class UnknownConfigKey(ValueError):
    pass


# --- datasets --------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetFile:
    path: str | Path
    smiles_column: str = "smiles"
    label_columns: tuple[str, ...] | None = None  # None: every other column
    task: str = "classification"


@dataclass
class Dataset:
    graphs: list
    labels: np.ndarray  # (n, T), NaN where a label is missing
    smiles: list[str]
    rows: list[int]  # 1-based data row numbers in the source file
    task_names: list[str]
    task: str = "classification"
    failures: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.graphs)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.labels)


def _parse_label(cell: str) -> float:
    cell = cell.strip()
    if cell == "":
        return math.nan
    value = float(cell)
    if not math.isfinite(value):
        raise ValueError(f"non-finite label {cell!r}")
    return value


def load_dataset(file: DatasetFile | str | Path, **kwargs) -> Dataset:
    """Parse every row of a dataset CSV, collecting failures instead of raising.

    Rows whose SMILES does not parse, whose labels are not numeric, or whose
    column count is wrong are reported in ``failures`` as (row, reason) and
    skipped. Duplicate SMILES are kept.
    """
    if not isinstance(file, DatasetFile):
        file = DatasetFile(file, **kwargs)
    text = Path(file.path).read_bytes().decode("utf-8", errors="replace")
    return read_dataset_text(text, file)


def read_dataset_text(text: str, file: DatasetFile) -> Dataset:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except (StopIteration, csv.Error):
        raise MissingColumn(f"no header row in {file.path}") from None
    header = [h.strip() for h in header]
    if file.smiles_column not in header:
        raise MissingColumn(f"column {file.smiles_column!r} not in header {header}")
    names = list(file.label_columns) if file.label_columns is not None else [h for h in header if h != file.smiles_column]
    missing = [n for n in names if n not in header]
    if missing:
        raise MissingColumn(f"label columns {missing} not in header {header}")
    s_col = header.index(file.smiles_column)
    l_cols = [header.index(n) for n in names]

    graphs, labels, smiles, rows, failures = [], [], [], [], []
    row_no = 0
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            row_no += 1
            failures.append((row_no, f"csv: {exc}"))
            continue
        row_no += 1
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            failures.append((row_no, f"expected {len(header)} fields, found {len(row)}"))
            continue
        try:
            y = [_parse_label(row[c]) for c in l_cols]
        except ValueError as exc:
            failures.append((row_no, f"label: {exc}"))
            continue
        try:
            g = parse_smiles(row[s_col].strip())
        except SmilesError as exc:
            failures.append((row_no, f"smiles: {exc}"))
            continue
        graphs.append(g)
        labels.append(y)
        smiles.append(row[s_col].strip())
        rows.append(row_no)
    if not graphs:
        raise NoValidMolecules(f"no parseable molecules in {file.path} ({len(failures)} failures)")
    lab = np.array(labels, dtype=np.float64).reshape(len(graphs), len(names))
    return Dataset(graphs, lab, smiles, rows, names, file.task, failures)


# --- run configuration ------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Flat knob set shared by the pretrain and finetune commands.

    ``epochs``, ``batch_size`` and ``lr`` apply to whichever stage runs.
    """

    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    temperature: float = 0.1
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    momentum: float = 0.8
    mask_ratio: float = 0.25
    unidir_ratio: float = 0.25
    emb_dim: int = 64
    num_layer: int = 5
    k_steps: int = 2
    epsilon: float = 0.5
    proj_hidden: int = 64
    proj_dim: int = 32
    mode: str = "diffusion"
    head_hidden: int = 64
    dropout: float = 0.0
    seed: int = 0

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """Parse ``key=value`` lines; ``#`` starts a comment; unknown keys are errors."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            if key not in types:
                raise UnknownConfigKey(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value)
        absent = sorted(set(types) - set(values))
        if absent:
            log.info("config defaults applied for: %s", ", ".join(absent))
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def override(self, **kwargs) -> "RunConfig":
        unknown = set(kwargs) - {f.name for f in fields(self)}
        if unknown:
            raise UnknownConfigKey(f"unknown keys {sorted(unknown)}")
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            hidden=self.emb_dim,
            n_layers=self.num_layer,
            k_steps=self.k_steps,
            epsilon=self.epsilon,
            proj_hidden=self.proj_hidden,
            out_dim=self.proj_dim,
        )

    def pretrain_config(self):
        from .trainer import PretrainConfig

        return PretrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr,
            tau=self.temperature,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            m=self.momentum,
            augment=AugmentConfig(self.mask_ratio, self.unidir_ratio, self.seed),
            encoder=self.encoder_config(),
            mode=self.mode,
            seed=self.seed,
        )

    def finetune_config(self):
        from .trainer import FinetuneConfig

        return FinetuneConfig(self.epochs, self.batch_size, self.lr, self.head_hidden, self.dropout, self.seed)


def _coerce(kind, value: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


# --- embeddings --------------------------------------------------------------------


def pca_2d(x: np.ndarray, seed: int = 0, tol: float = 1e-13, max_iter: int = 10_000) -> np.ndarray:
    """Project rows onto the top two principal axes found by power iteration.

    Each axis is sign-fixed so its largest-magnitude entry is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    rng = np.random.default_rng(seed)
    axes = []
    for _ in range(min(2, x.shape[1])):
        v = rng.standard_normal(x.shape[1])
        for a in axes:
            v -= (v @ a) * a
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = cov @ v
            for a in axes:
                w -= (w @ a) * a
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            w /= norm
            done = np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol
            v = w
            if done:
                break
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        axes.append(v)
    proj = centered @ np.array(axes).T
    if proj.shape[1] < 2:
        proj = np.hstack([proj, np.zeros((proj.shape[0], 2 - proj.shape[1]))])
    return proj


def export_embeddings(source, graphs, out_path=None, ids=None, mode: str | None = None) -> np.ndarray:
    """Write ``id, h_0..h_{D-1}, pc1, pc2`` rows and return the numeric table."""
    from .trainer import _encoder_of, embed

    encoder, default_mode = _encoder_of(source)
    h = embed(graphs, encoder, mode or default_mode)
    table = np.hstack([h, pca_2d(h)])
    if out_path is not None:
        ids = list(range(len(h))) if ids is None else list(ids)
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [f"h{i}" for i in range(h.shape[1])] + ["pc1", "pc2"])
            for i, row in zip(ids, table):
                w.writerow([i] + [repr(float(v)) for v in row])
    return table

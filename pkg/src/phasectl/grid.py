"""State/control containers, goal patterns, and field serialization.

Conventions fixed here and relied on everywhere else:

* grids are square, periodic (torus), row-major;
* cell (i, j) flattens to index k = i*n + j;
* the stacked control vector interleaves per cell as [T_k, h_k], so a grid
  with n*n cells has a control vector of length 2*n*n.

Binary field format: magic ``PFLD``, version byte 0x01, uint32 little-endian
n, then n*n IEEE-754 little-endian float64 values row-major. Control files
use the same layout with magic ``CFLD`` and two n*n blocks (T then h).
Text format is CSV: n lines of n comma-separated decimal floats (2n lines
for controls, T rows first).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FieldFormatError

_FIELD_MAGIC = b"PFLD"
_CONTROL_MAGIC = b"CFLD"
_FORMAT_VERSION = 1

# |phi| beyond this is flagged as overshoot (transient overshoot is physical
# for the explicit scheme, so it is a diagnostic, not an error)
OVERSHOOT_THRESHOLD = 2.0


def flatten_index(i: int, j: int, n: int) -> int:
    """Map cell (i, j) to its row-major flat index."""
    return i * n + j


def unflatten_index(k: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`flatten_index`."""
    return k // n, k % n


@dataclass(frozen=True)
class GridSpec:
    """Square periodic grid: ``n`` cells per axis, spatial step ``dx``."""

    n: int
    dx: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigurationError(f"grid size n must be an integer >= 2, got {self.n!r}")
        if not self.dx > 0:
            raise ConfigurationError(f"grid step dx must be positive, got {self.dx!r}")

    @property
    def n_cells(self) -> int:
        return self.n * self.n


def _as_grid_array(values, spec: GridSpec, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (spec.n, spec.n):
        raise ConfigurationError(
            f"{name} shape {arr.shape} does not match grid {spec.n}x{spec.n}"
        )
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ConfigurationError(f"{name} contains non-finite value at cell {tuple(bad)}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PhaseField:
    """Immutable n x n order-parameter field."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid_array(self.values, self.spec, "field"))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "PhaseField":
        return cls(spec, np.zeros((spec.n, spec.n)))

    @classmethod
    def from_vector(cls, spec: GridSpec, vec) -> "PhaseField":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.n_cells,):
            raise ConfigurationError(
                f"state vector length {vec.size} does not match grid ({spec.n_cells} cells)"
            )
        return cls(spec, vec.reshape(spec.n, spec.n))

    def to_vector(self) -> np.ndarray:
        """Row-major flattening to a length n*n vector."""
        return self.values.reshape(-1).copy()

    @property
    def has_overshoot(self) -> bool:
        """True when |phi| > 2 anywhere (diagnostic, not an error)."""
        return bool(np.any(np.abs(self.values) > OVERSHOOT_THRESHOLD))

    def shifted(self, di: int, dj: int) -> "PhaseField":
        """Field translated by (di, dj) on the torus."""
        return PhaseField(self.spec, np.roll(np.roll(self.values, di, axis=0), dj, axis=1))


@dataclass(frozen=True)
class ControlField:
    """Immutable per-cell (T, h) actuation."""

    spec: GridSpec
    t_vals: np.ndarray
    h_vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t_vals", _as_grid_array(self.t_vals, self.spec, "control T"))
        object.__setattr__(self, "h_vals", _as_grid_array(self.h_vals, self.spec, "control h"))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ControlField":
        z = np.zeros((spec.n, spec.n))
        return cls(spec, z, z)

    @classmethod
    def uniform(cls, spec: GridSpec, t: float, h: float) -> "ControlField":
        return cls(spec, np.full((spec.n, spec.n), float(t)), np.full((spec.n, spec.n), float(h)))

    @classmethod
    def from_vector(cls, spec: GridSpec, vec) -> "ControlField":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (2 * spec.n_cells,):
            raise ConfigurationError(
                f"control vector length {vec.size} does not match grid "
                f"({2 * spec.n_cells} channels)"
            )
        t = vec[0::2].reshape(spec.n, spec.n)
        h = vec[1::2].reshape(spec.n, spec.n)
        return cls(spec, t, h)

    def to_vector(self) -> np.ndarray:
        """Interleaved [T_k, h_k] stacking, length 2*n*n."""
        u = np.empty(2 * self.spec.n_cells)
        u[0::2] = self.t_vals.reshape(-1)
        u[1::2] = self.h_vals.reshape(-1)
        return u

    def shifted(self, di: int, dj: int) -> "ControlField":
        roll = lambda a: np.roll(np.roll(a, di, axis=0), dj, axis=1)
        return ControlField(self.spec, roll(self.t_vals), roll(self.h_vals))


@dataclass(frozen=True)
class GoalPattern:
    """Target phase distribution with entries exactly +/-1."""

    kind: str
    field: PhaseField

    def __post_init__(self):
        if not np.all(np.abs(self.field.values) == 1.0):
            raise ConfigurationError("goal pattern entries must be exactly +1 or -1")


def make_goal(spec: GridSpec, kind: str, partitions: int) -> GoalPattern:
    """Build a banded or checkerboard goal pattern.

    ``partitions`` is the number of bands (rows of stripes) or blocks per
    axis; it must divide n. Even partition counts give a zero-mean pattern,
    which conserved (Cahn-Hilliard) dynamics require when starting from a
    zero field.
    """
    n = spec.n
    if partitions < 1 or n % partitions != 0:
        raise ConfigurationError(
            f"partition count {partitions} does not divide grid size {n}"
        )
    size = n // partitions
    idx = np.arange(n) // size
    if kind == "banded":
        rows = np.where(idx % 2 == 0, 1.0, -1.0)
        values = np.tile(rows[:, None], (1, n))
    elif kind == "checkerboard":
        values = np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)
    else:
        raise ConfigurationError(f"unknown goal kind {kind!r} (expected banded or checkerboard)")
    return GoalPattern(kind, PhaseField(spec, values))


def goal_from_field(field: PhaseField) -> GoalPattern:
    """Wrap a +/-1 valued field (e.g. loaded from file) as a custom goal."""
    return GoalPattern("custom", field)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _write_binary_blocks(path, magic: bytes, n: int, blocks) -> None:
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(bytes([_FORMAT_VERSION]))
        fh.write(struct.pack("<I", n))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def _read_binary_blocks(path, magic: bytes, n_blocks: int):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != magic:
        raise FieldFormatError(
            f"{path}: bad magic bytes {data[:4]!r} at byte 0 (expected {magic!r})"
        )
    if len(data) < 9:
        raise FieldFormatError(f"{path}: truncated header ({len(data)} bytes)")
    version = data[4]
    if version != _FORMAT_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version} at byte 4")
    n = struct.unpack("<I", data[5:9])[0]
    if n < 2:
        raise FieldFormatError(f"{path}: declared grid size {n} at byte 5 is invalid")
    expect = n_blocks * n * n * 8
    payload = data[9:]
    if len(payload) != expect:
        raise FieldFormatError(
            f"{path}: payload holds {len(payload)} bytes from byte 9, "
            f"expected {expect} ({n_blocks} x {n}x{n} float64)"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0][0])
        raise FieldFormatError(f"{path}: non-finite value at element {bad} (byte {9 + 8 * bad})")
    return n, values.reshape(n_blocks, n, n)


def _parse_text_rows(path, expected_rows=None):
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise FieldFormatError(f"{path}: line {lineno}: {exc}") from None
            rows.append((lineno, row))
    if not rows:
        raise FieldFormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise FieldFormatError(
                f"{path}: line {lineno}: {len(row)} values, expected {width}"
            )
        if not all(np.isfinite(row)):
            raise FieldFormatError(f"{path}: line {lineno}: non-finite value")
    if expected_rows is not None and len(rows) != expected_rows:
        raise FieldFormatError(
            f"{path}: {len(rows)} data rows, expected {expected_rows}"
        )
    return width, np.array([row for _, row in rows], dtype=float)


def write_field(field: PhaseField, path, format: str = "binary") -> None:
    """Write a field; binary round-trips bit-exactly, text to ~1e-15 relative."""
    if format == "binary":
        _write_binary_blocks(path, _FIELD_MAGIC, field.spec.n, [field.values])
    elif format == "text":
        with open(path, "w") as fh:
            for row in field.values:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    else:
        raise ConfigurationError(f"unknown field format {format!r} (expected binary or text)")


def read_field(path) -> PhaseField:
    """Read a field file, sniffing binary (PFLD magic) vs text CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _FIELD_MAGIC:
        n, blocks = _read_binary_blocks(path, _FIELD_MAGIC, 1)
        return PhaseField(GridSpec(n), blocks[0])
    if head == _CONTROL_MAGIC:
        raise FieldFormatError(f"{path}: control file (CFLD) passed where a field was expected")
    width, values = _parse_text_rows(path)
    if values.shape[0] != width:
        raise FieldFormatError(
            f"{path}: {values.shape[0]} rows x {width} columns is not square"
        )
    return PhaseField(GridSpec(width), values)


def write_control(control: ControlField, path, format: str = "binary") -> None:
    if format == "binary":
        _write_binary_blocks(
            path, _CONTROL_MAGIC, control.spec.n, [control.t_vals, control.h_vals]
        )
    elif format == "text":
        with open(path, "w") as fh:
            for block in (control.t_vals, control.h_vals):
                for row in block:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    else:
        raise ConfigurationError(f"unknown control format {format!r} (expected binary or text)")


def read_control(path) -> ControlField:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _CONTROL_MAGIC:
        n, blocks = _read_binary_blocks(path, _CONTROL_MAGIC, 2)
        spec = GridSpec(n)
        return ControlField(spec, blocks[0], blocks[1])
    if head == _FIELD_MAGIC:
        raise FieldFormatError(f"{path}: field file (PFLD) passed where a control was expected")
    width, values = _parse_text_rows(path)
    if values.shape[0] != 2 * width:
        raise FieldFormatError(
            f"{path}: control CSV needs 2n rows of n values (T rows then h rows), "
            f"got {values.shape[0]} rows x {width} columns"
        )
    spec = GridSpec(width)
    return ControlField(spec, values[:width], values[width:])

"""Core data types for linear-mixture hyperspectral unmixing.

The observed scene is an ``n x m`` matrix ``X`` (bands by pixels) that is
approximated by ``A @ S`` with an ``n x r`` endmember matrix ``A`` and an
``r x m`` abundance matrix ``S``.  Pixels are laid out in raster order, so
pixel ``j`` sits at image position ``(j // cols_px, j % cols_px)``.

All types validate on construction and hold read-only copies of their
arrays.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvariantViolation

VARIANTS = ("fnorm", "div")
INIT_METHODS = ("nndsvd", "random")
NNDSVD_FILLS = ("mean", "zeros", "random")

# (gamma, theta) reported as best for each variant on the simulated scene
DEFAULT_PARAMS = {"fnorm": (3.0, 0.4), "div": (8.0, 0.4)}


def _frozen_array(data, name, ndim=2):
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise InvariantViolation(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


def _check_nonnegative(arr, name):
    if arr.size and arr.min() < 0:
        raise InvariantViolation(f"{name} has negative entries (min {arr.min():g})")


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """Observed scene as an ``n_bands x n_pixels`` matrix plus its raster shape."""

    data: np.ndarray
    rows_px: int
    cols_px: int
    wavelengths: Optional[np.ndarray] = None
    band_names: Optional[tuple] = None

    def __post_init__(self):
        data = _frozen_array(self.data, "cube data")
        object.__setattr__(self, "data", data)
        rows, cols = int(self.rows_px), int(self.cols_px)
        if rows < 1 or cols < 1:
            raise InvariantViolation("rows_px and cols_px must be positive")
        if rows * cols != data.shape[1]:
            raise DimensionMismatch("m", rows * cols, data.shape[1], "rows_px*cols_px vs pixels")
        object.__setattr__(self, "rows_px", rows)
        object.__setattr__(self, "cols_px", cols)
        if self.wavelengths is not None:
            wl = _frozen_array(self.wavelengths, "wavelengths", ndim=1)
            if wl.shape[0] != data.shape[0]:
                raise DimensionMismatch("n", data.shape[0], wl.shape[0], "wavelengths")
            if wl.shape[0] > 1 and np.any(np.diff(wl) <= 0):
                raise InvariantViolation("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", wl)
        if self.band_names is not None:
            names = tuple(str(b) for b in self.band_names)
            if len(names) != data.shape[0]:
                raise DimensionMismatch("n", data.shape[0], len(names), "band_names")
            object.__setattr__(self, "band_names", names)

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def to_image(self) -> np.ndarray:
        """Return the cube as a ``(n_bands, rows_px, cols_px)`` array."""
        return self.data.reshape(self.n_bands, self.rows_px, self.cols_px)

    @classmethod
    def from_image(cls, image, wavelengths=None, band_names=None) -> "SpectralCube":
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3:
            raise InvariantViolation(f"image must be (bands, rows, cols), got {image.shape}")
        n, rows, cols = image.shape
        return cls(image.reshape(n, rows * cols), rows, cols, wavelengths, band_names)

    def with_data(self, data) -> "SpectralCube":
        return SpectralCube(data, self.rows_px, self.cols_px, self.wavelengths, self.band_names)


@dataclass(frozen=True, eq=False)
class EndmemberMatrix:
    """``n x r`` matrix whose columns are endmember spectra."""

    data: np.ndarray
    names: Optional[tuple] = None

    def __post_init__(self):
        data = _frozen_array(self.data, "endmember matrix")
        _check_nonnegative(data, "endmember matrix")
        if data.shape[1] < 1:
            raise InvariantViolation("endmember matrix needs at least one column")
        zero_cols = np.flatnonzero(~np.any(data > 0, axis=0))
        if zero_cols.size:
            raise InvariantViolation(f"endmember column(s) {zero_cols.tolist()} are identically zero")
        object.__setattr__(self, "data", data)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != data.shape[1]:
                raise DimensionMismatch("r", data.shape[1], len(names), "endmember names")
            object.__setattr__(self, "names", names)

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def r(self) -> int:
        return self.data.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.data[:, i]


@dataclass(frozen=True, eq=False)
class AbundanceMatrix:
    """``r x m`` matrix of per-pixel endmember fractions.

    Sum-to-one is not enforced here; only the synthetic generator and
    explicit renormalization produce columns that sum to one.
    """

    data: np.ndarray

    def __post_init__(self):
        data = _frozen_array(self.data, "abundance matrix")
        _check_nonnegative(data, "abundance matrix")
        object.__setattr__(self, "data", data)

    @property
    def r(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    def maps(self, rows_px: int, cols_px: int) -> np.ndarray:
        return self.data.reshape(self.r, rows_px, cols_px)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters for the baseline and kurtosis-constrained solvers.

    ``gamma`` and ``theta`` default per variant when left as ``None``.
    ``normalize=None`` rescales endmember columns only when ``gamma > 0``,
    since unit variance matters only to the kurtosis gradient; ``True`` or
    ``False`` forces it.  ``normalize_divisor`` selects dividing endmember columns by their
    standard deviation (unit variance) or by their variance.  ``stop_on``
    picks whether the relative-change stopping rule watches the full
    objective or only the data-fit term.
    """

    variant: str = "fnorm"
    gamma: Optional[float] = None
    theta: Optional[float] = None
    t_max: int = 1000
    c_min: float = 1e-5
    init: str = "nndsvd"
    seed: int = 0
    epsilon_guard: float = 1e-12
    compensate_normalization: bool = True
    normalize: Optional[bool] = None
    normalize_divisor: str = "std"
    stop_on: str = "objective"
    nndsvd_fill: str = "mean"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvariantViolation(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        g0, th0 = DEFAULT_PARAMS[self.variant]
        if self.gamma is None:
            object.__setattr__(self, "gamma", g0)
        if self.theta is None:
            object.__setattr__(self, "theta", th0)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "theta", float(self.theta))
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise InvariantViolation(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.theta <= 1.0:
            raise InvariantViolation(f"theta must lie in [0, 1], got {self.theta}")
        if int(self.t_max) < 1:
            raise InvariantViolation("t_max must be >= 1")
        object.__setattr__(self, "t_max", int(self.t_max))
        if not self.c_min > 0:
            raise InvariantViolation("c_min must be > 0")
        if not self.epsilon_guard > 0:
            raise InvariantViolation("epsilon_guard must be > 0")
        if self.init not in INIT_METHODS:
            raise InvariantViolation(f"init must be one of {INIT_METHODS}")
        if int(self.seed) < 0:
            raise InvariantViolation("seed must be unsigned")
        object.__setattr__(self, "seed", int(self.seed))
        if self.normalize_divisor not in ("std", "variance"):
            raise InvariantViolation("normalize_divisor must be 'std' or 'variance'")
        if self.stop_on not in ("objective", "fit"):
            raise InvariantViolation("stop_on must be 'objective' or 'fit'")
        if self.nndsvd_fill not in NNDSVD_FILLS:
            raise InvariantViolation(f"nndsvd_fill must be one of {NNDSVD_FILLS}")

    @property
    def normalizes(self) -> bool:
        return self.gamma > 0 if self.normalize is None else bool(self.normalize)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(**d)


@dataclass(eq=False)
class UnmixResult:
    """Output of a solver run.

    Traces hold one entry for the initial point followed by one per
    iteration.  ``kurtosis_trace`` stores average *excess* kurtosis, so
    ``objective = fit - gamma * (kurtosis + 3)`` entry-wise.
    """

    endmembers: EndmemberMatrix
    abundances: AbundanceMatrix
    objective_trace: list
    fit_trace: list
    kurtosis_trace: list
    iterations_run: int
    termination: str
    config: SolverConfig
    floored_count: int = 0
    clamped_count: int = 0
    degenerate_kurtosis: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def smoothing(self) -> np.ndarray:
        from .kbsnmf import smoothing_matrix

        return smoothing_matrix(self.abundances.r, self.config.theta).data

    @property
    def effective_abundances(self) -> np.ndarray:
        """Abundances as they enter the reconstruction, ``M @ S``."""
        return self.smoothing @ self.abundances.data

    def reconstruction(self) -> np.ndarray:
        return self.endmembers.data @ self.effective_abundances


def _shape(x):
    return np.shape(getattr(x, "data", x))


def validate_dimensions(cube, A, S) -> None:
    """Check that ``cube`` (n x m), ``A`` (n x r) and ``S`` (r x m) agree.

    Accepts model types or plain 2-D arrays.  Raises ``DimensionMismatch``
    naming the first inconsistent axis.
    """
    xs, as_, ss = _shape(cube), _shape(A), _shape(S)
    for name, shp in (("X", xs), ("A", as_), ("S", ss)):
        if len(shp) != 2:
            raise DimensionMismatch("ndim", 2, len(shp), name)
    n, m = xs
    if as_[0] != n:
        raise DimensionMismatch("n", n, as_[0], "rows of A vs bands of X")
    if ss[1] != m:
        raise DimensionMismatch("m", m, ss[1], "columns of S vs pixels of X")
    if ss[0] != as_[1]:
        raise DimensionMismatch("r", as_[1], ss[0], "rows of S vs columns of A")


def as_array(x) -> np.ndarray:
    """Unwrap a model type to its float64 array."""
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def pixel_index(row: int, col: int, cols_px: int) -> int:
    return row * cols_px + col


__all__ = [
    "SpectralCube",
    "EndmemberMatrix",
    "AbundanceMatrix",
    "SolverConfig",
    "UnmixResult",
    "validate_dimensions",
    "as_array",
    "pixel_index",
    "DEFAULT_PARAMS",
]


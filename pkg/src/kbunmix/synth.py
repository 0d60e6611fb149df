"""Synthetic linear-mixture scenes and SNR-controlled noise.

Abundance maps are Gaussian random fields: white noise smoothed by an
isotropic Gaussian kernel (periodic boundary), scaled to unit marginal
variance, multiplied by ``contrast`` and pushed through a softmax across
endmembers.  An optional purity cap shrinks over-pure pixels toward the
uniform mixture so the largest fraction equals ``purity``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import softmax

from .errors import InvalidSpec, LibraryTooSmall
from .model import AbundanceMatrix, EndmemberMatrix, SpectralCube, as_array

WAVELENGTH_RANGE = (400.0, 2500.0)
DEFAULT_BANDS = 224


@dataclass(frozen=True, eq=False)
class SpectralLibrary:
    """Named reflectance spectra sharing one wavelength grid.

    ``spectra`` has one column per material, shape ``(n_bands, k)``.
    """

    names: tuple
    spectra: np.ndarray
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        spectra = np.array(self.spectra, dtype=np.float64)
        if spectra.ndim != 2:
            raise InvalidSpec("library spectra must be 2-D (bands x materials)")
        names = tuple(str(s) for s in self.names)
        if len(names) != spectra.shape[1]:
            raise InvalidSpec(f"{len(names)} names for {spectra.shape[1]} spectra")
        if len(set(names)) != len(names):
            raise InvalidSpec("library names must be unique")
        spectra.flags.writeable = False
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "names", names)
        if self.wavelengths is not None:
            wl = np.array(self.wavelengths, dtype=np.float64)
            if wl.shape != (spectra.shape[0],):
                raise InvalidSpec("wavelengths must match the band count")
            wl.flags.writeable = False
            object.__setattr__(self, "wavelengths", wl)

    def __len__(self):
        return len(self.names)

    @property
    def n_bands(self) -> int:
        return self.spectra.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.spectra[:, self.names.index(name)]

    def select(self, which) -> "SpectralLibrary":
        """Sub-library by count (first ``k``) or by a sequence of names."""
        if isinstance(which, (int, np.integer)):
            if which > len(self):
                raise LibraryTooSmall(f"need {which} spectra, library has {len(self)}")
            idx = list(range(which))
        else:
            missing = [w for w in which if w not in self.names]
            if missing:
                raise InvalidSpec(f"unknown library names: {missing}")
            idx = [self.names.index(w) for w in which]
        return SpectralLibrary(tuple(self.names[i] for i in idx), self.spectra[:, idx],
                               self.wavelengths)

    def bands(self, start: int, stop: int) -> "SpectralLibrary":
        if not 0 <= start < stop <= self.n_bands:
            raise InvalidSpec(f"band range [{start}, {stop}) outside 0..{self.n_bands}")
        wl = None if self.wavelengths is None else self.wavelengths[start:stop]
        return SpectralLibrary(self.names, self.spectra[start:stop], wl)

    def resample(self, n_bands: int) -> "SpectralLibrary":
        """Linear interpolation onto ``n_bands`` evenly spaced samples of the same range."""
        if n_bands == self.n_bands:
            return self
        if n_bands < 2:
            raise InvalidSpec("need at least two bands")
        old = self.wavelengths if self.wavelengths is not None else np.arange(self.n_bands, dtype=float)
        new = np.linspace(old[0], old[-1], n_bands)
        cols = [np.interp(new, old, self.spectra[:, i]) for i in range(len(self))]
        return SpectralLibrary(self.names, np.column_stack(cols),
                               new if self.wavelengths is not None else None)


def _bumps(w, features):
    out = np.zeros_like(w)
    for center, width, height in features:
        out += height * np.exp(-0.5 * ((w - center) / width) ** 2)
    return out


# Stand-in materials: (continuum at 400 nm, continuum at 2500 nm, features)
# where each feature is (center nm, width nm, height); negative heights are
# absorption bands.  Shapes are invented; only the names follow the
# simulated study's materials and common mineral labels.
_MATERIALS = {
    "Seawater": (0.03, 0.002, [(470, 60, 0.07), (560, 35, 0.025), (700, 200, -0.025)]),
    "Clintonite": (0.04, 0.30, [(800, 220, 0.38), (1250, 260, 0.12), (480, 60, -0.02),
                                (1900, 50, -0.08), (2320, 45, -0.10)]),
    "Sodiumbicarbonate": (0.86, 0.80, [(1450, 60, -0.22), (1950, 70, -0.34), (1200, 40, -0.08),
                                       (2200, 35, -0.12), (420, 40, -0.10)]),
    "Alunite": (0.45, 0.55, [(1430, 35, -0.18), (1760, 30, -0.10), (2170, 25, -0.25),
                             (2320, 30, -0.12)]),
    "Andradite": (0.08, 0.30, [(1000, 220, -0.06), (560, 60, 0.10), (1500, 400, 0.15)]),
    "Buddingtonite": (0.40, 0.35, [(1560, 50, -0.15), (2020, 45, -0.20), (2120, 35, -0.14),
                                   (800, 250, 0.12)]),
    "Kaolinite": (0.55, 0.60, [(1400, 25, -0.20), (1915, 40, -0.12), (2165, 20, -0.18),
                               (2205, 20, -0.25)]),
    "Muscovite": (0.35, 0.52, [(1410, 30, -0.14), (2200, 30, -0.22), (2350, 35, -0.12),
                               (1100, 300, 0.10)]),
    "Montmorillonite": (0.50, 0.45, [(1410, 40, -0.16), (1910, 55, -0.28), (2210, 35, -0.14)]),
    "Nontronite": (0.10, 0.40, [(650, 70, -0.04), (950, 110, -0.10), (1430, 40, -0.10),
                                (2290, 30, -0.14), (750, 80, 0.12)]),
    "Pyrope": (0.12, 0.55, [(1250, 300, -0.22), (600, 80, 0.15), (2000, 200, 0.10)]),
    "Sphene": (0.25, 0.60, [(450, 60, -0.15), (1000, 400, 0.20)]),
    "Chalcedony": (0.70, 0.50, [(1420, 45, -0.12), (1920, 60, -0.24), (2250, 80, -0.18),
                                (2450, 50, -0.15)]),
    "Dumortierite": (0.28, 0.36, [(600, 50, 0.22), (2280, 40, -0.12), (1500, 120, -0.10),
                                  (1750, 100, 0.08)]),
    "Grass": (0.04, 0.08, [(550, 35, 0.08), (900, 200, 0.45), (1650, 160, 0.20),
                           (1450, 60, -0.15), (1950, 70, -0.10), (2200, 150, 0.08)]),
    "Asphalt": (0.05, 0.14, [(1700, 500, 0.04), (2300, 60, -0.03)]),
}


def bundled_library(n_bands: int = DEFAULT_BANDS) -> SpectralLibrary:
    """Analytic stand-in reflectance library on ``n_bands`` samples of 400-2500 nm."""
    w = np.linspace(*WAVELENGTH_RANGE, n_bands)
    t = (w - WAVELENGTH_RANGE[0]) / (WAVELENGTH_RANGE[1] - WAVELENGTH_RANGE[0])
    cols = []
    for start, end, features in _MATERIALS.values():
        spec = start + (end - start) * t + _bumps(w, features)
        cols.append(np.clip(spec, 0.001, 1.0))
    return SpectralLibrary(tuple(_MATERIALS), np.column_stack(cols), w)


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Parameters of a synthetic scene.

    ``library`` defaults to :func:`bundled_library` sampled at ``n_bands``
    bands.  ``endmember_names`` picks materials by name, otherwise the
    first ``r`` library entries are used.
    """

    r: int = 3
    rows_px: int = 64
    cols_px: int = 64
    field_scale: float = 8.0
    purity: float = 1.0
    seed: int = 0
    library: Optional[SpectralLibrary] = None
    band_range: Optional[tuple] = None
    n_bands: Optional[int] = None
    contrast: float = 2.0
    endmember_names: Optional[Sequence[str]] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r < 1:
            raise InvalidSpec("r must be >= 1")
        if self.rows_px < 1 or self.cols_px < 1:
            raise InvalidSpec("spatial size must be positive")
        if not self.field_scale > 0:
            raise InvalidSpec("field_scale must be > 0")
        if not 0 < self.purity <= 1:
            raise InvalidSpec("purity must lie in (0, 1]")
        if self.purity < 1.0 / self.r:
            raise InvalidSpec(f"purity {self.purity} is below the uniform share 1/{self.r}")
        if self.contrast < 0:
            raise InvalidSpec("contrast must be >= 0")
        if self.seed < 0:
            raise InvalidSpec("seed must be unsigned")
        if self.endmember_names is not None and len(self.endmember_names) != self.r:
            raise InvalidSpec("endmember_names must have r entries")

    def resolved_library(self) -> SpectralLibrary:
        lib = self.library
        if lib is None:
            lib = bundled_library(self.n_bands or DEFAULT_BANDS)
        if self.band_range is not None:
            lib = lib.bands(*self.band_range)
        if self.n_bands is not None and lib.n_bands != self.n_bands:
            lib = lib.resample(self.n_bands)
        if len(lib) < self.r:
            raise LibraryTooSmall(f"scene needs {self.r} spectra, library has {len(lib)}")
        return lib.select(list(self.endmember_names) if self.endmember_names else self.r)


def _unit_field(rng, rows, cols, scale):
    noise = rng.standard_normal((rows, cols))
    smooth = gaussian_filter(noise, scale, mode="wrap")
    delta = np.zeros((rows, cols))
    delta[0, 0] = 1.0
    # std of filtered unit white noise is the l2 norm of the (wrapped) kernel
    k = np.linalg.norm(gaussian_filter(delta, scale, mode="wrap"))
    return smooth / k


def cap_purity(S, purity):
    """Shrink columns whose largest share exceeds ``purity`` toward uniform."""
    S = np.array(S, dtype=np.float64)
    r = S.shape[0]
    if purity >= 1.0 or r == 1:
        return S
    top = S.max(axis=0)
    over = top > purity
    lam = (purity - 1.0 / r) / (top[over] - 1.0 / r)
    S[:, over] = lam * S[:, over] + (1.0 - lam) / r
    return S


def generate_abundances(spec: SynthSpec) -> AbundanceMatrix:
    rng = np.random.default_rng(spec.seed)
    fields = np.stack([
        _unit_field(rng, spec.rows_px, spec.cols_px, spec.field_scale).ravel()
        for _ in range(spec.r)
    ])
    S = softmax(spec.contrast * fields, axis=0)
    S = cap_purity(S, spec.purity)
    S = S / S.sum(axis=0)
    return AbundanceMatrix(S)


def generate_cube(spec: SynthSpec):
    """Noise-free scene ``X = A @ S``.

    Returns ``(cube, endmembers, abundances)``.
    """
    lib = spec.resolved_library()
    A = EndmemberMatrix(lib.spectra, lib.names)
    S = generate_abundances(spec)
    X = A.data @ S.data
    cube = SpectralCube(X, spec.rows_px, spec.cols_px, wavelengths=lib.wavelengths)
    return cube, A, S


def signal_power(X) -> float:
    """Mean over pixels of ``x^T x / n``, i.e. the mean squared entry."""
    X = as_array(X)
    return float(np.mean(X * X))


def realized_snr(clean, noisy) -> float:
    """``10 log10(E[x^T x] / E[e^T e])`` with ``e = noisy - clean``."""
    X, Y = as_array(clean), as_array(noisy)
    E = Y - X
    return 10.0 * math.log10(float(np.sum(X * X)) / float(np.sum(E * E)))


def add_noise(cube, snr_db: float, seed: int = 0, clamp: bool = False,
              exact_power: bool = True):
    """Add zero-mean white Gaussian noise at ``snr_db``.

    ``snr_db = inf`` returns the input unchanged.  With ``exact_power``
    the drawn noise is rescaled so its mean power hits the target exactly;
    otherwise the realized SNR carries the usual sampling scatter.  With
    ``clamp`` negative results are set to zero.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return cube
    X = as_array(cube)
    var = signal_power(X) / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(X.shape)
    if exact_power:
        noise *= math.sqrt(var / np.mean(noise * noise))
    else:
        noise *= math.sqrt(var)
    Y = X + noise
    if clamp:
        np.maximum(Y, 0.0, out=Y)
    if isinstance(cube, SpectralCube):
        return cube.with_data(Y)
    return Y

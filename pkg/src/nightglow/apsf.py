"""Atmospheric point spread function (APSF).

The scattered intensity of an isotropic point source seen through a medium of
optical thickness ``T`` is a Legendre series in ``mu = cos(theta)``::

    I(T, mu) = sum_{m>=1} g_m(T) * (L_{m-1}(mu) + L_m(mu))
    g_m(T)   = exp(-beta_m * T - alpha_m * log T)
    alpha_m  = m + 1
    beta_m   = (2m + 1) / m * (1 - q**(m - 1))

with the source intensity taken as 1. The angular table is scaled by ``T**2``
and mapped radially onto a square kernel for image convolution.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from nightglow.errors import CacheInvalidError, DegenerateKernelError, NumericError, ParameterError
from nightglow.imgio import atomic_write_bytes

log = logging.getLogger(__name__)

LUT_MAGIC = b"NGLEGLUT"
LUT_VERSION = 1
_LUT_HEADER = struct.Struct("<8sIII")
DEFAULT_LUT_GRID = 10001

_LOG_MAX = np.log(np.finfo(np.float64).max) - 10.0


def legendre_table(mu, max_order: int) -> np.ndarray:
    """Rows ``L_0(mu) .. L_max_order(mu)`` by the three-term recurrence."""
    mu = np.asarray(mu, dtype=np.float64)
    if max_order < 0:
        raise ParameterError("Legendre order must be >= 0")
    if np.any(np.abs(mu) > 1.0):
        raise ParameterError("Legendre argument must satisfy |mu| <= 1")
    table = np.empty((max_order + 1,) + mu.shape)
    table[0] = 1.0
    if max_order >= 1:
        table[1] = mu
    for m in range(1, max_order):
        table[m + 1] = ((2 * m + 1) * mu * table[m] - m * table[m - 1]) / (m + 1)
    return table


def legendre_eval(m: int, mu):
    """Legendre polynomial ``L_m(mu)``; scalar in, scalar out."""
    if m < 0:
        raise ParameterError("Legendre order must be >= 0")
    out = legendre_table(mu, m)[m]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ApsfParams:
    T: float = 1.2
    q: float = 0.9
    num_terms: int = 200
    num_angles: int = 721

    def __post_init__(self):
        if not self.T > 0:
            raise ParameterError("T must be > 0")
        if not 0 < self.q < 1:
            raise ParameterError("q must be in (0, 1)")
        if self.num_terms < 1:
            raise ParameterError("num_terms must be >= 1")
        if self.num_angles < 3 or self.num_angles % 2 == 0:
            raise ParameterError("num_angles must be odd and >= 3")


def beta_m(m, q):
    m = np.asarray(m, dtype=np.float64)
    return (2 * m + 1) / m * (1 - q ** (m - 1))


def g_m(m, T, q):
    """Series coefficient ``exp(-beta_m T - alpha_m log T)``."""
    m = np.asarray(m, dtype=np.float64)
    return np.exp(-beta_m(m, q) * T - (m + 1) * np.log(T))


def _scaled_coefficients(T, q, num_terms):
    # T**2 * g_m folded into the exponent: exact 1.0 for m == 1 since beta_1 == 0
    m = np.arange(1, num_terms + 1, dtype=np.float64)
    expo = -beta_m(m, q) * T - (m - 1) * np.log(T)
    if expo.max() > _LOG_MAX:
        raise NumericError(
            f"APSF series overflows for T={T}, num_terms={num_terms}; raise T or lower num_terms"
        )
    return np.exp(expo)


def apsf_series(theta_deg, T: float, q: float, num_terms: int = 200, lut=None) -> np.ndarray:
    """Unclamped ``T**2 * I(T, cos theta)`` at arbitrary angles in degrees.

    With ``lut`` the Legendre values come from table interpolation, otherwise
    from the direct recurrence.
    """
    ApsfParams(T=T, q=q, num_terms=num_terms)
    theta = np.abs(np.asarray(theta_deg, dtype=np.float64))
    coef = _scaled_coefficients(T, q, num_terms)
    if lut is None:
        table = legendre_table(np.cos(np.radians(theta)), num_terms)
    else:
        table = lut.at_theta(np.radians(theta), num_terms)
    pair = table[:-1] + table[1:]
    return np.tensordot(coef, pair, axes=1)


@dataclass
class Apsf1D:
    angles: np.ndarray  # degrees, symmetric about 0
    weights: np.ndarray  # clamped at 0
    raw: np.ndarray  # before clamping
    params: ApsfParams = field(default_factory=ApsfParams)


def angle_grid(num_angles: int) -> np.ndarray:
    half = np.linspace(0.0, 180.0, (num_angles + 1) // 2)
    return np.concatenate([-half[:0:-1], half])


def apsf_weights(params: ApsfParams = None, lut=None) -> Apsf1D:
    params = params or ApsfParams()
    angles = angle_grid(params.num_angles)
    raw = apsf_series(angles, params.T, params.q, params.num_terms, lut=lut)
    return Apsf1D(angles=angles, weights=np.maximum(raw, 0.0), raw=raw, params=params)


def apsf_kernel_2d(apsf: Apsf1D, size: int = 127, normalize: bool = True) -> np.ndarray:
    """Map the angular table onto a ``size x size`` radially symmetric kernel.

    Radius ``r`` maps linearly to ``theta = 180 * r / R_max`` with
    ``R_max = (size - 1) / 2``; corners beyond ``R_max`` clamp to 180 degrees.
    """
    if size < 1 or size % 2 == 0:
        raise ParameterError("kernel size must be odd and >= 1")
    center = len(apsf.angles) // 2
    angles = apsf.angles[center:]
    weights = apsf.weights[center:]
    if not np.any(weights > 0):
        raise DegenerateKernelError("APSF weights are all zero")

    r_max = (size - 1) / 2
    if size == 1:
        kernel = np.array([[weights[0]]])
    else:
        offs = np.arange(size) - r_max
        radius = np.hypot(offs[:, None], offs[None, :])
        theta = np.minimum(radius / r_max * 180.0, 180.0)
        kernel = np.interp(theta, angles, weights)

    total = kernel.sum()
    if not total > 0:
        raise DegenerateKernelError(f"kernel of size {size} has zero mass")
    return kernel / total if normalize else kernel


class LegendreLUT:
    """Legendre values tabulated on a uniform grid in theta over [0, pi].

    Interpolation is a clamped cubic spline in theta: ``L_m(cos theta)`` is
    even about both ends so the end slopes are exactly zero, and a theta grid
    resolves high orders near ``mu = +-1`` far better than a uniform mu grid.
    """

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] < 4:
            raise CacheInvalidError(f"bad LUT table shape {table.shape}")
        self.table = table
        self.theta = np.linspace(0.0, np.pi, table.shape[1])
        self._spline = None

    @classmethod
    def build(cls, grid_size: int = DEFAULT_LUT_GRID, max_order: int = 200):
        if grid_size < 4:
            raise ParameterError("LUT grid needs at least 4 samples")
        theta = np.linspace(0.0, np.pi, grid_size)
        return cls(legendre_table(np.cos(theta), max_order))

    @property
    def max_order(self) -> int:
        return self.table.shape[0] - 1

    @property
    def grid_size(self) -> int:
        return self.table.shape[1]

    def at_theta(self, theta_rad, max_order: int = None) -> np.ndarray:
        max_order = self.max_order if max_order is None else max_order
        if max_order > self.max_order:
            raise ParameterError(f"LUT holds orders up to {self.max_order}, asked for {max_order}")
        if self._spline is None:
            self._spline = CubicSpline(self.theta, self.table, axis=1, bc_type="clamped")
        theta = np.clip(np.abs(np.asarray(theta_rad, dtype=np.float64)), 0.0, np.pi)
        return self._spline(theta)[: max_order + 1]

    def __call__(self, m: int, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if np.any(np.abs(mu) > 1.0):
            raise ParameterError("Legendre argument must satisfy |mu| <= 1")
        out = self.at_theta(np.arccos(mu), m)[m]
        return float(out) if out.ndim == 0 else out

    def to_bytes(self) -> bytes:
        header = _LUT_HEADER.pack(LUT_MAGIC, LUT_VERSION, self.max_order, self.grid_size)
        return header + np.ascontiguousarray(self.table, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes):
        if len(payload) < _LUT_HEADER.size:
            raise CacheInvalidError("LUT file truncated before header end")
        magic, version, max_order, grid = _LUT_HEADER.unpack_from(payload)
        if magic != LUT_MAGIC:
            raise CacheInvalidError("LUT file has wrong magic")
        if version != LUT_VERSION:
            raise CacheInvalidError(f"LUT version {version} != {LUT_VERSION}")
        body = payload[_LUT_HEADER.size:]
        if len(body) != (max_order + 1) * grid * 8:
            raise CacheInvalidError("LUT body size does not match header")
        table = np.frombuffer(body, dtype="<f8").reshape(max_order + 1, grid)
        return cls(table.astype(np.float64))


def read_lut(path) -> LegendreLUT:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise CacheInvalidError(f"cannot read LUT {path}: {exc}") from exc
    return LegendreLUT.from_bytes(payload)


def write_lut(lut: LegendreLUT, path) -> None:
    atomic_write_bytes(path, lut.to_bytes())


def lut_cache(path, grid_size: int = DEFAULT_LUT_GRID, max_order: int = 200) -> LegendreLUT:
    """Load the cached table at ``path``, regenerating it when absent or stale."""
    try:
        lut = read_lut(path)
        if lut.grid_size == grid_size and lut.max_order >= max_order:
            return lut
        log.info("LUT %s does not match grid=%d order=%d; regenerating", path, grid_size, max_order)
    except CacheInvalidError as exc:
        log.info("regenerating LUT %s (%s)", path, exc)
    lut = LegendreLUT.build(grid_size, max_order)
    write_lut(lut, path)
    return lut

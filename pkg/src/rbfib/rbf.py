"""Polyharmonic-spline interpolation on the sphere and operator matrices.

An :class:`RbfSystem` holds the factored saddle matrix

    [ Phi  P ]
    [ P^T  0 ]

for one set of data sites.  Interpolation and every operator matrix reuse that
single factorization.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .sphere import DERIVATIVE_KINDS, HarmonicBasis, as_sites, chord_distance, eval_harmonics

log = logging.getLogger(__name__)

OP_KINDS = ("evaluate",) + DERIVATIVE_KINDS

# reciprocal condition numbers below this are treated as singular
RCOND_FLOOR = 1e3 * np.finfo(float).eps


class IllPosedSiteSet(np.linalg.LinAlgError):
    """The site set gives a singular (or numerically singular) saddle matrix."""


def phs_kernel(targets, sources, exponent: int, kind: str = "evaluate") -> np.ndarray:
    """Matrix of ``L r^k`` with ``r`` the chord distance, ``L`` acting on ``targets``.

    Returns shape ``(n_targets, n_sources)``.
    """
    if kind not in OP_KINDS:
        raise ValueError(f"unsupported operator kind {kind!r}")
    t = as_sites(targets)
    s = as_sites(sources)
    th, ph = t[:, 0:1], t[:, 1:2]
    thk, phk = s[None, :, 0], s[None, :, 1]
    cp, sp = np.cos(ph), np.sin(ph)
    cpk, spk = np.cos(phk), np.sin(phk)
    dth = th - thk
    cd, sd = np.cos(dth), np.sin(dth)
    u = cp * cpk * cd + sp * spk
    r2 = np.maximum(2.0 * (1.0 - u), 0.0)
    half = exponent / 2.0
    if kind == "evaluate":
        return r2 ** half
    if exponent < 3:
        raise ValueError("derivative operators need a kernel exponent of at least 3")
    pos = r2 > 0.0
    safe = np.where(pos, r2, 1.0)
    f1 = np.where(pos, half * safe ** (half - 1.0), 0.0)
    # chain rule through r^2 = 2(1 - u)
    u_t = -cp * cpk * sd
    u_p = -sp * cpk * cd + cp * spk
    if kind == "theta":
        return -2.0 * f1 * u_t
    if kind == "phi":
        return -2.0 * f1 * u_p
    f2 = np.where(pos, half * (half - 1.0) * safe ** (half - 2.0), 0.0)
    if kind == "theta_theta":
        return 4.0 * f2 * u_t * u_t - 2.0 * f1 * (-cp * cpk * cd)
    if kind == "theta_phi":
        return 4.0 * f2 * u_t * u_p - 2.0 * f1 * (sp * cpk * sd)
    return 4.0 * f2 * u_p * u_p + 2.0 * f1 * u


def _harmonics(basis: HarmonicBasis, sites, kind: str) -> np.ndarray:
    return eval_harmonics(basis, sites, None if kind == "evaluate" else kind)


def _site_digest(sites: np.ndarray) -> bytes:
    return hashlib.sha1(np.ascontiguousarray(sites, dtype=float).tobytes()).digest()[:8]


@dataclass(frozen=True, eq=False)
class RbfSystem:
    data_sites: np.ndarray
    kernel_exponent: int
    basis: HarmonicBasis
    saddle: np.ndarray = field(repr=False)
    _ldu: np.ndarray = field(repr=False)
    _ipiv: np.ndarray = field(repr=False)
    rcond: float = 0.0

    @property
    def n_data(self) -> int:
        return self.data_sites.shape[0]

    @property
    def n_poly(self) -> int:
        return self.basis.count

    def _backsolve(self, b: np.ndarray) -> np.ndarray:
        x, info = lapack.dsytrs(self._ldu, self._ipiv, b)
        if info != 0:
            raise np.linalg.LinAlgError(f"dsytrs failed with info={info}")
        return x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the saddle system against one or more right-hand sides.

        One step of iterative refinement recovers most of the digits lost to
        the conditioning of the kernel block.
        """
        b = np.asarray(rhs, dtype=float)
        x = self._backsolve(b)
        return x + self._backsolve(b - self.saddle @ x)

    def digest(self) -> bytes:
        return _site_digest(self.data_sites)


def build_system(data_sites, kernel_exponent: int = 7, max_degree: int = 5) -> RbfSystem:
    """Assemble and factor the saddle matrix for ``data_sites``."""
    sites = as_sites(data_sites).copy()
    k = int(kernel_exponent)
    if k != kernel_exponent or k < 1 or k % 2 == 0:
        raise ValueError(f"kernel exponent must be an odd integer >= 1, got {kernel_exponent}")
    basis = HarmonicBasis(max_degree)
    n_d, n_p = sites.shape[0], basis.count
    if n_d < 2 * n_p:
        raise ValueError(f"{n_d} data sites is fewer than twice the {n_p} harmonics")
    dist = chord_distance(sites[:, None, :], sites[None, :, :])
    np.fill_diagonal(dist, np.inf)
    if dist.min() <= 0.0:
        raise IllPosedSiteSet("data sites contain duplicates")

    phi = phs_kernel(sites, sites, k)
    phi = 0.5 * (phi + phi.T)
    P = eval_harmonics(basis, sites)
    A = np.zeros((n_d + n_p, n_d + n_p))
    A[:n_d, :n_d] = phi
    A[:n_d, n_d:] = P
    A[n_d:, :n_d] = P.T
    anorm = np.abs(A).sum(axis=0).max()
    ldu, ipiv, info = lapack.dsytrf(A)
    if info > 0:
        raise IllPosedSiteSet(f"saddle matrix is exactly singular (dsytrf info={info})")
    if info < 0:
        raise np.linalg.LinAlgError(f"dsytrf failed with info={info}")
    rcond, _ = lapack.dsycon(ldu, ipiv, anorm)
    if rcond < RCOND_FLOOR:
        raise IllPosedSiteSet(f"saddle matrix is numerically singular (rcond={rcond:.3e})")
    log.debug("built RBF system n_d=%d n_p=%d k=%d rcond=%.3e", n_d, n_p, k, rcond)
    return RbfSystem(sites, k, basis, A, ldu, ipiv, float(rcond))


@dataclass(frozen=True)
class RbfCoefficients:
    """Kernel weights ``c`` (n_d, m) and harmonic weights ``d`` (n_p, m)."""

    c: np.ndarray
    d: np.ndarray

    def evaluate(self, system: RbfSystem, sites, kind: str = "evaluate") -> np.ndarray:
        """Apply ``kind`` to the interpolant and evaluate at ``sites``."""
        return (phs_kernel(sites, system.data_sites, system.kernel_exponent, kind) @ self.c
                + _harmonics(system.basis, sites, kind) @ self.d)


def interpolate(system: RbfSystem, samples) -> RbfCoefficients:
    """Fit interpolation coefficients to samples at the data sites.

    ``samples`` may be a vector of length ``n_d`` or an ``(n_d, m)`` matrix, in
    which case each column is interpolated independently.
    """
    y = np.asarray(samples, dtype=float)
    vector = y.ndim == 1
    y2 = y[:, None] if vector else y
    if y2.ndim != 2 or y2.shape[0] != system.n_data:
        raise ValueError(f"expected {system.n_data} samples, got shape {y.shape}")
    rhs = np.zeros((system.n_data + system.n_poly, y2.shape[1]))
    rhs[: system.n_data] = y2
    sol = system.solve(rhs)
    c, d = sol[: system.n_data], sol[system.n_data:]
    if vector:
        c, d = c[:, 0], d[:, 0]
    return RbfCoefficients(c, d)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    op_kind: str
    target_sites: np.ndarray
    entries: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __matmul__(self, samples):
        return apply_operator(self, samples)


def build_operator_matrix(system: RbfSystem, op_kind: str, target_sites) -> OperatorMatrix:
    """Dense matrix mapping samples at the data sites to ``op_kind`` of the
    interpolant at ``target_sites``."""
    if op_kind not in OP_KINDS:
        raise ValueError(f"unsupported operator kind {op_kind!r}")
    targets = as_sites(target_sites).copy()
    lhs = np.empty((system.n_data + system.n_poly, targets.shape[0]))
    lhs[: system.n_data] = phs_kernel(targets, system.data_sites, system.kernel_exponent, op_kind).T
    lhs[system.n_data:] = _harmonics(system.basis, targets, op_kind).T
    sol = system.solve(lhs)
    entries = np.ascontiguousarray(sol[: system.n_data].T)
    return OperatorMatrix(op_kind, targets, entries)


def apply_operator(matrix: OperatorMatrix, samples) -> np.ndarray:
    y = np.asarray(samples, dtype=float)
    if y.shape[0] != matrix.entries.shape[1]:
        raise ValueError(
            f"operator expects {matrix.entries.shape[1]} samples, got {y.shape[0]}")
    return matrix.entries @ y


# ---------------------------------------------------------------------------
# binary cache of operator matrices

_MAGIC = b"RBFOPM01"
_HEADER = struct.Struct("<8sIQQIII8s8s")
CACHE_VERSION = 1


def save_operator(path, matrix: OperatorMatrix, system: RbfSystem) -> None:
    """Write ``matrix`` as a versioned header followed by row-major float64."""
    n_t, n_d = matrix.entries.shape
    header = _HEADER.pack(_MAGIC, CACHE_VERSION, n_t, n_d, system.kernel_exponent,
                          system.basis.max_degree, OP_KINDS.index(matrix.op_kind),
                          system.digest(), _site_digest(matrix.target_sites))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes())


def load_operator(path, system: RbfSystem, op_kind: str, target_sites) -> OperatorMatrix | None:
    """Read a cached matrix, or ``None`` if the file is missing or stale."""
    path = Path(path)
    if not path.exists():
        return None
    targets = as_sites(target_sites)
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            return None
        magic, version, n_t, n_d, k, deg, kind, dsig, tsig = _HEADER.unpack(raw)
        expected = (_MAGIC, CACHE_VERSION, targets.shape[0], system.n_data,
                    system.kernel_exponent, system.basis.max_degree,
                    OP_KINDS.index(op_kind), system.digest(), _site_digest(targets))
        if (magic, version, n_t, n_d, k, deg, kind, dsig, tsig) != expected:
            log.info("ignoring stale operator cache %s", path)
            return None
        body = fh.read()
    if len(body) != 8 * n_t * n_d:
        log.info("ignoring truncated operator cache %s", path)
        return None
    entries = np.frombuffer(body, dtype="<f8")
    return OperatorMatrix(op_kind, targets.copy(), entries.reshape(n_t, n_d).astype(float))


class OperatorCache:
    """Directory of cached operator matrices keyed by (n_d, n_s, k, degree, kind)."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path_for(self, system: RbfSystem, op_kind: str, n_target: int) -> Path:
        name = (f"op_nd{system.n_data}_nt{n_target}_k{system.kernel_exponent}"
                f"_deg{system.basis.max_degree}_{op_kind}.bin")
        return self.directory / name

    def get(self, system: RbfSystem, op_kind: str, target_sites) -> OperatorMatrix:
        targets = as_sites(target_sites)
        path = self.path_for(system, op_kind, targets.shape[0])
        cached = load_operator(path, system, op_kind, targets)
        if cached is not None:
            return cached
        op = build_operator_matrix(system, op_kind, targets)
        save_operator(path, op, system)
        return op

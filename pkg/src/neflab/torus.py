"""Flat complex tori and their spectral calculus.

The torus X = (R/Z)^{2n} carries real coordinates ordered
(x_1, y_1, ..., x_n, y_n) with z_j = x_j + i y_j.  A Kahler form is a
constant positive definite Hermitian matrix ``g`` and the complex Hessian
of a function u is the matrix field ``H[j, k] = d^2 u / dz_j dzbar_k``,
computed with FFTs.  Volumes are measured so that the unit torus with
``g`` has volume ``det(g)``.
"""

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "PeriodicField",
    "HermitianField",
    "NefClassSpec",
    "ProblemSpec",
    "complex_hessian",
    "det_ratio",
    "sigma_k_ratio",
    "integrate",
    "cohomology_constants",
    "fourier_field",
    "as_hermitian",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``N`` points per real axis on the torus of complex dimension ``n``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension n must be 1 or 2, got {self.n}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")

    @property
    def dim(self):
        return 2 * self.n

    @property
    def shape(self):
        return (self.N,) * self.dim

    @property
    def size(self):
        return self.N**self.dim

    def coords(self):
        """Sparse broadcastable coordinate arrays, one per real axis, in [0, 1)."""
        x = np.arange(self.N) / self.N
        out = []
        for a in range(self.dim):
            shp = [1] * self.dim
            shp[a] = self.N
            out.append(x.reshape(shp))
        return out

    def _freq(self, axis, cut_nyquist):
        k = sfft.fftfreq(self.N, 1.0 / self.N)
        if cut_nyquist:
            k = np.where(np.abs(k) == self.N // 2, 0.0, k)
        shp = [1] * self.dim
        shp[axis] = self.N
        return k.reshape(shp)

    @cached_property
    def symbols(self):
        """Fourier symbols of d^2/dz_j dzbar_k, indexed ``[j][k]``.

        Diagonal symbols keep the Nyquist mode (they are even in the
        frequency); off-diagonal ones are built from first-derivative
        factors with the Nyquist mode removed so that the output field is
        exactly Hermitian.
        """
        n = self.n
        a = []
        for j in range(n):
            p = self._freq(2 * j, True)
            q = self._freq(2 * j + 1, True)
            a.append(q + 1j * p)
        sym = [[None] * n for _ in range(n)]
        for j in range(n):
            p = self._freq(2 * j, False)
            q = self._freq(2 * j + 1, False)
            sym[j][j] = -np.pi**2 * (p**2 + q**2)
            for k in range(n):
                if k != j:
                    sym[j][k] = -np.pi**2 * a[j] * np.conj(a[k])
        return sym

    def fft(self, values):
        return sfft.fftn(values)

    def ifft(self, spectrum):
        return sfft.ifftn(spectrum)


def as_hermitian(m, n=None):
    """Coerce a scalar / nested list / array into an n x n complex Hermitian matrix."""
    arr = np.atleast_2d(np.asarray(m, dtype=complex))
    if n is not None and arr.shape != (n, n):
        if arr.shape == (1, 1):
            arr = arr[0, 0] * np.eye(n, dtype=complex)
        else:
            raise ValueError(f"expected a {n}x{n} matrix, got shape {arr.shape}")
    if not np.allclose(arr, arr.conj().T, rtol=1e-12, atol=1e-14):
        raise ValueError("matrix is not Hermitian")
    return 0.5 * (arr + arr.conj().T)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains NaN or Inf")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            return PeriodicField(self.grid, self.values + other.values)
        return PeriodicField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            return PeriodicField(self.grid, self.values - other.values)
        return PeriodicField(self.grid, self.values - other)

    def __neg__(self):
        return PeriodicField(self.grid, -self.values)

    def __mul__(self, c):
        return PeriodicField(self.grid, self.values * c)

    __rmul__ = __mul__

    def max(self):
        return float(self.values.max())

    def min(self):
        return float(self.values.min())


@dataclass(frozen=True, eq=False)
class HermitianField:
    """An n x n Hermitian matrix at every grid point, stored with trailing (n, n) axes."""

    grid: Grid
    matrices: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=complex)
        n = self.grid.n
        if m.shape != self.grid.shape + (n, n):
            raise ValueError(f"matrix field shape {m.shape} does not fit grid")
        herm_err = np.abs(m - np.swapaxes(m, -1, -2).conj()).max()
        scale = max(1.0, float(np.abs(m).max()))
        if herm_err > 1e-12 * scale:
            raise ValueError(f"matrix field is not Hermitian (error {herm_err:.3e})")
        object.__setattr__(self, "matrices", m)

    def __add__(self, other):
        if isinstance(other, HermitianField):
            return HermitianField(self.grid, self.matrices + other.matrices)
        return HermitianField(self.grid, self.matrices + np.asarray(other, dtype=complex))


# -- raw array kernels (used in solver hot loops) ---------------------------


def hessian_values(grid, u):
    """Complex Hessian of a real array ``u``; returns shape ``grid.shape + (n, n)``."""
    uh = grid.fft(u)
    sym = grid.symbols
    n = grid.n
    out = np.empty(grid.shape + (n, n), dtype=complex)
    if n == 1:
        out[..., 0, 0] = grid.ifft(sym[0][0] * uh).real
        return out
    diag = grid.ifft(sym[0][0] * uh + 1j * (sym[1][1] * uh))
    off = grid.ifft(sym[0][1] * uh)
    out[..., 0, 0] = diag.real
    out[..., 1, 1] = diag.imag
    out[..., 0, 1] = off
    out[..., 1, 0] = off.conj()
    return out


def trace_against(b, h):
    """Pointwise tr(b h) for matrix fields with trailing (n, n) axes."""
    return np.einsum("...jl,...lj->...", b, h).real


def sigma_values(a, g, k):
    """Pointwise sigma_k(g^{-1} a) (unnormalized) for n <= 2."""
    n = a.shape[-1]
    ginv = np.linalg.inv(g)
    if k == 1:
        return trace_against(np.broadcast_to(ginv, a.shape), a)
    if k == 2 and n == 2:
        det_a = (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]).real
        return det_a / np.linalg.det(g).real
    raise ValueError(f"k={k} out of range for n={n}")


def newton_tensor(a, g, k):
    """Coefficient field T with d sigma_k(g^{-1} a)[da] = tr(T da).

    T = T_{k-1}(M) g^{-1} with M = g^{-1} a and the Newton tensors
    T_0 = I, T_j = sigma_j(M) I - M T_{j-1}.
    """
    n = a.shape[-1]
    ginv = np.linalg.inv(g)
    if k == 1:
        return np.broadcast_to(ginv, a.shape).copy()
    m = np.einsum("jl,...lk->...jk", ginv, a)
    eye = np.eye(n)
    t = np.broadcast_to(eye, m.shape).astype(complex)
    for j in range(1, k):
        sj = sigma_values(a, g, j)
        t = sj[..., None, None] * eye - m @ t
    return t @ ginv


def eigen_values(a, g):
    """Eigenvalues of g^{-1} a at every point, ascending, shape ``(..., n)``."""
    n = a.shape[-1]
    w, v = np.linalg.eigh(g)
    ghalf = (v / np.sqrt(w)) @ v.conj().T
    if n == 1:
        return (a[..., 0, 0].real / g[0, 0].real)[..., None]
    b = np.einsum("jl,...lm,mk->...jk", ghalf, a, ghalf)
    mid = 0.5 * (b[..., 0, 0].real + b[..., 1, 1].real)
    half = 0.5 * (b[..., 0, 0].real - b[..., 1, 1].real)
    rad = np.sqrt(half**2 + np.abs(b[..., 0, 1]) ** 2)
    return np.stack([mid - rad, mid + rad], axis=-1)


def normalized_sigmas(lam, k):
    """sigma_j(lam) / C(n, j) for j = 1..k, stacked on the last axis."""
    n = lam.shape[-1]
    out = [lam.sum(axis=-1) / n]
    if k >= 2:
        out.append(lam[..., 0] * lam[..., 1])
    return np.stack(out[:k], axis=-1)


# -- public operations -------------------------------------------------------


def complex_hessian(u):
    """Return i dd-bar u as a HermitianField (entries d^2 u / dz_j dzbar_k)."""
    return HermitianField(u.grid, hessian_values(u.grid, u.values))


def det_ratio(a, g):
    """Pointwise det(g^{-1} a), i.e. (a)^n / omega^n.  May be negative."""
    g = as_hermitian(g, a.grid.n)
    return PeriodicField(a.grid, sigma_values(a.matrices, g, a.grid.n))


def sigma_k_ratio(a, g, k):
    """Pointwise a^k wedge omega^{n-k} / omega^n = sigma_k(lambda) / C(n, k)."""
    n = a.grid.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    g = as_hermitian(g, n)
    return PeriodicField(a.grid, sigma_values(a.matrices, g, k) / comb(n, k))


def integrate(f, g=None):
    """Integral of f against omega^n; the unit torus has volume det(g)."""
    vol = 1.0 if g is None else float(np.linalg.det(as_hermitian(g, f.grid.n)).real)
    return float(np.mean(f.values)) * vol


def fourier_field(grid, modes):
    """Real trigonometric polynomial.

    ``modes`` is an iterable of dicts ``{"k": [k_1, ..., k_2n], "cos": a, "sin": b}``
    giving a cos(2 pi k.x) + b sin(2 pi k.x).
    """
    xs = grid.coords()
    vals = np.zeros(grid.shape)
    for mode in modes:
        kvec = mode["k"]
        if len(kvec) != grid.dim:
            raise ValueError(f"mode {kvec} needs {grid.dim} integer wavenumbers")
        phase = sum(2 * np.pi * kk * x for kk, x in zip(kvec, xs))
        vals = vals + mode.get("cos", 0.0) * np.cos(phase) + mode.get("sin", 0.0) * np.sin(phase)
    return PeriodicField(grid, np.broadcast_to(vals, grid.shape).copy())


@dataclass(frozen=True, eq=False)
class NefClassSpec:
    """chi = chi0 + i dd-bar rho with chi0 constant positive semidefinite."""

    chi0: np.ndarray
    rho: PeriodicField

    def __post_init__(self):
        chi0 = as_hermitian(self.chi0, self.rho.grid.n)
        if np.linalg.eigvalsh(chi0).min() < -1e-12:
            raise ValueError("chi0 must be positive semidefinite")
        object.__setattr__(self, "chi0", chi0)

    @property
    def nu(self):
        """Numerical dimension: rank of chi0."""
        return int(np.sum(np.linalg.eigvalsh(self.chi0) > 1e-10))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    grid: Grid
    g: np.ndarray
    nef: NefClassSpec
    F_raw: PeriodicField
    p: float

    def __post_init__(self):
        g = as_hermitian(self.g, self.grid.n)
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("Kahler form g must be positive definite")
        if not self.p > self.grid.n:
            raise ValueError(f"exponent p must exceed n={self.grid.n}, got p={self.p}")
        if self.nef.rho.grid != self.grid or self.F_raw.grid != self.grid:
            raise ValueError("rho and F_raw must live on the problem grid")
        object.__setattr__(self, "g", g)

    @property
    def n(self):
        return self.grid.n

    @cached_property
    def volume(self):
        return float(np.linalg.det(self.g).real)

    @cached_property
    def F_hat(self):
        """F_raw shifted so that the integral of e^F equals the volume."""
        f = self.F_raw.values
        fmax = f.max()
        shift = -fmax - np.log(np.mean(np.exp(f - fmax)))
        return PeriodicField(self.grid, f + shift)

    @cached_property
    def rho_hessian(self):
        return hessian_values(self.grid, self.nef.rho.values)

    def ghat(self, t):
        """Matrix values of chi0 + i dd-bar rho + t g at every point."""
        return self.rho_hessian + (self.nef.chi0 + t * self.g)

    def ghat_field(self, t):
        return HermitianField(self.grid, self.ghat(t))

    def kahler_potential(self):
        """u = -rho - max(-rho): u <= 0 and ghat_t + i dd-bar u = chi0 + t g > 0."""
        u = -self.nef.rho.values
        return PeriodicField(self.grid, u - u.max())


def cohomology_constants(spec, t, k=None):
    """c_t = int ghat_t^k wedge omega^{n-k} / int e^{F_hat} omega^n."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    k = spec.n if k is None else k
    top = sigma_k_ratio(spec.ghat_field(t), spec.g, k)
    mass = PeriodicField(spec.grid, np.exp(spec.F_hat.values))
    return integrate(top, spec.g) / integrate(mass, spec.g)

"""Complex linear-algebra and transform kernels.

Every function here is pure and accepts plain numpy arrays. Matrices are
``complex128`` arrays; most routines broadcast over leading batch axes so
that per-subcarrier problems can be solved in one call.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError

PINV_RTOL = 1e-12


def as_complex_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a non-empty, finite complex array with ndim >= 2."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim < 2 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_fft_size(v: np.ndarray, size: int | None, axis: int) -> int:
    n = v.shape[axis]
    if size is not None and size != n:
        raise InvalidDimensionError(f"fft size {size} does not match length {n}")
    if not _is_power_of_two(n):
        raise InvalidDimensionError(f"fft length must be a power of two, got {n}")
    return n


def fft(v, size: int | None = None, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along ``axis`` (power-of-two lengths only)."""
    v = np.asarray(v, dtype=np.complex128)
    _check_fft_size(v, size, axis)
    return np.fft.fft(v, axis=axis)


def ifft(v, size: int | None = None, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fft`, including the ``1/size`` factor."""
    v = np.asarray(v, dtype=np.complex128)
    _check_fft_size(v, size, axis)
    return np.fft.ifft(v, axis=axis)


def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD returning ``(U, sigma, V)`` with ``m = U @ diag(sigma) @ V^H``.

    ``sigma`` is sorted in descending order. Note that ``V`` (not ``V^H``)
    is returned, so its columns are the right singular vectors.
    """
    m = as_complex_matrix(m)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return u, s, np.conj(np.swapaxes(vh, -1, -2))


def pseudo_inverse(m, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``rtol * sigma_max`` are treated as zero.
    """
    u, s, v = svd(m)
    smax = s[..., :1]
    keep = s > rtol * smax
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (v * s_inv[..., None, :]) @ np.conj(np.swapaxes(u, -1, -2))


def lmmse_estimate(observed, reference, noise_var: float) -> np.ndarray:
    """Regularized least-squares fit ``observed ~= H @ reference``.

    Returns ``observed @ reference^H @ (reference @ reference^H + noise_var*I)^-1``.
    Leading axes are treated as a batch. With ``noise_var == 0`` the
    solution is computed as ``observed @ pinv(reference)``, which agrees
    with the formula whenever the Gram matrix is invertible and still
    gives the minimum-norm answer when it is not.
    """
    y = as_complex_matrix(observed, "observed")
    r = as_complex_matrix(reference, "reference")
    if y.shape[-1] != r.shape[-1]:
        raise InvalidDimensionError(
            f"observed has {y.shape[-1]} columns but reference has {r.shape[-1]}"
        )
    if noise_var < 0:
        raise InvalidInputError("noise_var must be non-negative")
    if noise_var == 0:
        return y @ pseudo_inverse(r)
    r_h = np.conj(np.swapaxes(r, -1, -2))
    gram = r @ r_h + noise_var * np.eye(r.shape[-2])
    rhs = r @ np.conj(np.swapaxes(y, -1, -2))
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return y @ r_h @ pseudo_inverse(gram)
    return np.conj(np.swapaxes(sol, -1, -2))


def spectral_radius(m) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    m = as_complex_matrix(m)
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def to_pairs(arr) -> list:
    """Nested ``[re, im]`` lists for JSON export of a complex array."""
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def from_pairs(data) -> np.ndarray:
    """Inverse of :func:`to_pairs`."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape[-1:] != (2,):
        raise InvalidInputError("complex data must end in [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, a sequence of ints, or an existing ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)

"""Symmetric matrix primitives.

Every spectral operation in the package goes through one backend, the
symmetric eigendecomposition :func:`numpy.linalg.eigh`.  Matrices are plain
``numpy`` arrays; :func:`as_sym` validates and symmetrizes an input.
"""

import numpy as np

from .errors import NotPSDError, NumericError

__all__ = [
    "as_sym",
    "psd_eps",
    "sym_eigh",
    "sym_func",
    "sym_expm",
    "spectral_norm",
    "psd_sqrt",
    "psd_clip",
    "loewner_leq",
    "min_eig",
    "max_eig",
    "trace",
    "is_pd",
]


def as_sym(a, name="matrix", atol=None):
    """Return a float copy of a square matrix, exactly symmetrized.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Input matrix.  A scalar is promoted to a 1x1 matrix.
    name : str
        Used in error messages.
    atol : float, optional
        If given, raise when ``max|a - a.T| > atol`` instead of silently
        averaging the asymmetry away.

    Returns
    -------
    ndarray, shape (d, d)
        ``(a + a.T) / 2``.
    """
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if atol is not None and np.max(np.abs(a - a.T)) > atol:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def psd_eps(a):
    """Round-off tolerance ``1e-10 * (1 + ||a||)`` used for PSD checks."""
    return 1e-10 * (1.0 + spectral_norm(a))


def sym_eigh(a):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Orthonormal eigenvectors as columns.
    """
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigendecomposition failed: {exc}") from exc


def sym_func(a, f):
    """Apply a scalar function to a symmetric matrix through its spectrum."""
    w, v = sym_eigh(a)
    out = (v * f(w)) @ v.T
    return 0.5 * (out + out.T)


def sym_expm(a, t=1.0):
    """Matrix exponential ``exp(t a)`` of a symmetric matrix.

    Examples
    --------
    >>> sym_expm(np.diag([1.0, 2.0]), np.log(2.0)).round(12)
    array([[2., 0.],
           [0., 4.]])
    """
    return sym_func(a, lambda w: np.exp(t * w))


def spectral_norm(a):
    """Spectral norm of a symmetric matrix, i.e. ``max |eigenvalue|``."""
    w = np.linalg.eigvalsh(a)
    return float(np.max(np.abs(w)))


def min_eig(a):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(a)[0])


def max_eig(a):
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(a)[-1])


def trace(a):
    """Trace of a square matrix."""
    return float(np.trace(a))


def is_pd(a):
    """True if the symmetric matrix ``a`` is positive definite."""
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def psd_clip(a, eps=None):
    """Project a nearly PSD matrix onto the PSD cone.

    Eigenvalues in ``[-eps, 0)`` are set to zero.  Matrices that already
    have a nonnegative spectrum are returned symmetrized but otherwise
    untouched.

    Raises
    ------
    NotPSDError
        If some eigenvalue is below ``-eps``.
    """
    a = 0.5 * (a + a.T)
    w, v = sym_eigh(a)
    if eps is None:
        eps = 1e-10 * (1.0 + np.max(np.abs(w)))
    if w[0] >= 0.0:
        return a
    if w[0] < -eps:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} below -{eps:.1e}")
    out = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (out + out.T)


def psd_sqrt(a, eps=None):
    """Unique symmetric PSD square root.

    Parameters
    ----------
    a : array_like
        Symmetric PSD matrix.  Eigenvalues down to ``-eps`` are treated as
        zero.
    eps : float, optional
        Defaults to :func:`psd_eps` of ``a``.

    Raises
    ------
    NotPSDError
        If ``a`` has an eigenvalue below ``-eps``.
    """
    a = as_sym(a)
    w, v = sym_eigh(a)
    if eps is None:
        eps = 1e-10 * (1.0 + np.max(np.abs(w)))
    if w[0] < -eps:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} below -{eps:.1e}")
    out = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    return 0.5 * (out + out.T)


def loewner_leq(a, b, tol=1e-12):
    """Loewner order test ``a <= b``, i.e. ``b - a`` is PSD up to ``tol``.

    Returns
    -------
    bool
        ``min_eig(b - a) >= -tol``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = b - a
    return bool(min_eig(0.5 * (diff + diff.T)) >= -tol)

import numpy as np

from .errors import FactorizationFailure


def cholesky_factor(A, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
        raise FactorizationFailure(f"{name} must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(f"{name} is not positive definite") from exc

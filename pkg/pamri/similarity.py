import numpy as np


"""
Histogram NMI between raw patches and the temperature it drives.
NMI(A, B) = 2 I(A; B) / (H(A) + H(B)) on a bins x bins joint histogram over [0, 1]^2.
"""


def _bin_indices(patch: np.ndarray, bins: int) -> np.ndarray:
    # values outside [0, 1] (intensity augmentation) land in the edge bins
    return np.clip(np.floor(np.asarray(patch, dtype=np.float64).ravel() * bins), 0, bins - 1).astype(np.int64)


def _entropy(counts: np.ndarray, total: int) -> float:
    # sorted summation makes the value independent of histogram orientation
    p = np.sort(counts[counts > 0].astype(np.float64) / total)
    return float(-np.sum(p * np.log(p)))


def _nmi_from_indices(ia: np.ndarray, ib: np.ndarray, bins: int) -> float:
    total = ia.size
    joint = np.bincount(ia * bins + ib, minlength=bins * bins)
    h_a = _entropy(np.bincount(ia, minlength=bins), total)
    h_b = _entropy(np.bincount(ib, minlength=bins), total)
    marginal_sum = h_a + h_b
    if marginal_sum == 0.0:
        # both constant
        return 1.0 if ia[0] == ib[0] else 0.0
    mutual = marginal_sum - _entropy(joint, total)
    return float(np.clip(2.0 * mutual / marginal_sum, 0.0, 1.0))


def nmi(p_a: np.ndarray, p_b: np.ndarray, bins: int = 32) -> float:
    if np.shape(p_a) != np.shape(p_b):
        raise ValueError(f"nmi: patch shapes differ {np.shape(p_a)} vs {np.shape(p_b)}")
    if bins < 2:
        raise ValueError(f"nmi: bins must be >= 2, got {bins}")
    return _nmi_from_indices(_bin_indices(p_a, bins), _bin_indices(p_b, bins), bins)


def nmi_matrix(patches_a: np.ndarray, patches_b: np.ndarray, bins: int = 32) -> np.ndarray:
    """M[i, j] = nmi(patches_a[i], patches_b[j])."""
    index_a = [_bin_indices(p, bins) for p in patches_a]
    index_b = [_bin_indices(p, bins) for p in patches_b]
    matrix = np.empty((len(index_a), len(index_b)))
    for i, ia in enumerate(index_a):
        for j, ib in enumerate(index_b):
            matrix[i, j] = _nmi_from_indices(ia, ib, bins)
    return matrix


def adaptive_tau(nmi_value, tau_min: float = 0.05, tau_max: float = 0.5):
    """tau_min at NMI = 1, tau_max at NMI = 0, affine in between. Works elementwise on arrays."""
    tau = tau_min + (tau_max - tau_min) * (1.0 - np.asarray(nmi_value, dtype=np.float64))
    return tau if tau.ndim else float(tau)

"""Log-domain primitives and the finite-difference gradient oracle.

All probability mass in this package is accumulated as natural-log
values (float64).  Linear-domain numbers appear only inside single
softmax or renormalization steps.  Exact ``-inf`` is the canonical
representation of zero probability and is handled explicitly here so it
never turns into NaN downstream.
"""

from dataclasses import dataclass

import numpy as np

from tslab.errors import OracleFailureError

NEG_INF = -float("inf")

# Floor used by the relative-error metric so that near-zero gradient
# coordinates are compared absolutely rather than relatively.
REL_ERROR_FLOOR = 1e-8


def log_sum_exp(values):
    """Stable log(sum(exp(values))) over a one-dimensional collection.

    Shifts by the maximum before exponentiation.  Exact -inf entries
    contribute zero mass; if every entry is -inf the result is -inf.
    An empty collection is a contract violation.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("log_sum_exp expects a one-dimensional collection")
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty collection is undefined")
    if np.isnan(arr).any():
        raise ValueError("log_sum_exp input contains NaN")
    m = arr.max()
    if m == NEG_INF:
        return NEG_INF
    # Drop -inf entries instead of summing their exact-zero exp terms:
    # extra zeros reshape numpy's pairwise summation tree, which can
    # move the result by an ulp and break bitwise neutrality.
    finite = arr[arr != NEG_INF]
    return float(m + np.log(np.exp(finite - m).sum()))


def stable_softmax(logits):
    """Softmax with max-shift; requires finite logits.

    Adding a constant to every logit leaves the result unchanged up to
    rounding of the shifted inputs, and the output sums to 1 to within
    one final division.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("stable_softmax of an empty collection is undefined")
    if not np.isfinite(arr).all():
        raise ValueError("stable_softmax requires finite logits")
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(logits):
    """Log of stable_softmax, computed without leaving the log domain."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("log_softmax of an empty collection is undefined")
    if not np.isfinite(arr).all():
        raise ValueError("log_softmax requires finite logits")
    shifted = arr - arr.max()
    return shifted - np.log(np.exp(shifted).sum())


def relative_error(analytic, numeric):
    """|a - n| / max(|a|, |n|, 1e-8), elementwise over two vectors."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError("relative_error requires vectors of equal shape")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_ERROR_FLOOR)
    return np.abs(a - n) / denom


def finite_diff_gradient(loss_fn, params, epsilon=1e-5):
    """Central-difference gradient of a scalar loss at ``params``.

    loss_fn maps a flat float64 vector to a scalar.  Each coordinate is
    probed at +/- epsilon.  A non-finite probe raises OracleFailureError
    naming the coordinate.
    """
    theta = np.asarray(params, dtype=np.float64)
    if theta.ndim != 1:
        raise ValueError("finite_diff_gradient expects a flat parameter vector")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        probe = theta.copy()
        probe[i] = theta[i] + epsilon
        up = float(loss_fn(probe))
        probe[i] = theta[i] - epsilon
        down = float(loss_fn(probe))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise OracleFailureError(
                f"non-finite loss probe at coordinate {i}: f(+eps)={up}, f(-eps)={down}"
            )
        grad[i] = (up - down) / (2.0 * epsilon)
    return grad


@dataclass
class GradCheckReport:
    """Comparison of an analytic gradient against the central-difference oracle."""

    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    max_rel_error: float
    worst_coordinate: int

    def __post_init__(self):
        if not (len(self.analytic) == len(self.numeric) == len(self.rel_errors)):
            raise ValueError("gradient report vectors must have equal length")


def grad_check(loss_fn, analytic_grad, params, epsilon=1e-5):
    """Build a GradCheckReport for ``analytic_grad`` at ``params``.

    analytic_grad may be a precomputed vector or a callable returning one.
    """
    if callable(analytic_grad):
        analytic = np.asarray(analytic_grad(np.asarray(params, dtype=np.float64)))
    else:
        analytic = np.asarray(analytic_grad, dtype=np.float64)
    numeric = finite_diff_gradient(loss_fn, params, epsilon)
    errs = relative_error(analytic, numeric)
    worst = int(np.argmax(errs)) if errs.size else 0
    max_err = float(errs[worst]) if errs.size else 0.0
    return GradCheckReport(
        analytic=analytic,
        numeric=numeric,
        rel_errors=errs,
        max_rel_error=max_err,
        worst_coordinate=worst,
    )

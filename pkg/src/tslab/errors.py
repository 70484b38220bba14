"""Error types shared across the package.

Most contract violations (bad shapes, invalid configuration values,
unknown labels, out-of-range weights) raise plain ValueError with a
message naming the offending argument.  The two classes below mark
failures of the verification machinery itself, which tests need to
distinguish from ordinary bad input.
"""


class OracleScaleError(RuntimeError):
    """A brute-force enumeration guard was exceeded.

    Raised before starting an enumeration whose cost bound (documented
    per operation) would be violated, so callers never wait on an
    intractable oracle.
    """


class OracleFailureError(RuntimeError):
    """A finite-difference probe produced a non-finite loss.

    The message names the parameter coordinate at which the probe failed
    so the offending weight can be inspected directly.
    """

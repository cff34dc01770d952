"""Covariance-robust dynamic watermarking toolkit.

Simulates watermarked closed-loop LTI systems under sensor attacks and
implements the nonrobust and covariance-robust window test statistics,
including the constrained log-det solver behind the robust ones.
"""

__version__ = "0.1.0"

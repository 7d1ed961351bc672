"""qscount: quadratic forms over Q_p and Q_S, S-arithmetic geometry of
numbers, and counting of S-integral vectors in dilated regions."""

__version__ = "0.1.0"

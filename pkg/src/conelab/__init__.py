"""conelab: symmetric-cone calculus, k-Hessian Green functions on balls,
and a finite-difference harness for maximum-principle experiments."""

__version__ = "0.1.0"

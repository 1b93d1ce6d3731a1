"""Sequence representation learning and frame-wise activity recognition
for multichannel motion recordings.

The package splits into numerically careful building blocks (numerics, lstm,
mdn, optim), the four sequence models built from them (models), dataset
handling and the one-labeled-trial-per-user split protocol (data), evaluation
metrics (metrics), and the experiment drivers plus command line (experiments,
cli).
"""

__version__ = "0.1.0"

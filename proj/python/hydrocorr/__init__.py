"""Unsupervised water-extent mapping from SAR time series and river-gauge
elevations: a correlation-trained convolutional network, four classical
baselines, and validation metrics. The heavy lifting lives in the C++
extension module."""

try:
    from hydrocorr._hydrocorr import *  # noqa: F401,F403  (installed wheel)
    from hydrocorr._hydrocorr import __version__  # noqa: F401
except ImportError:  # in-tree build: extension on PYTHONPATH
    from _hydrocorr import *  # noqa: F401,F403
    from _hydrocorr import __version__  # noqa: F401

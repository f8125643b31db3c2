"""Multi-channel learned acoustic front-end and OPUS bitrate degradation lab."""

__version__ = "0.1.0"

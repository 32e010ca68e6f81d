"""Physical-web toolchain: network-proximity fingerprints, ambient context,
a condition-expression DSL, HTML adaptation, a localhost gateway, and a
deterministic device simulator."""

__version__ = "0.1.0"

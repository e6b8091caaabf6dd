"""Sampled-data H-infinity loop-back interference cancelation for
amplify-and-forward full-duplex relays."""

__version__ = "0.1.0"

"""Degrees of freedom of the 3-user ``(p, p+1)`` MIMO interference channel.

Asymmetric complex signaling (ACS) over ``2p+1`` symbol extensions, a change
of basis that zeroes cross-channel entries, alignment chains solved block by
block, zero-forcing receivers and the rank checks that certify
``p(p+1)/(2p+1)`` degrees of freedom per user.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

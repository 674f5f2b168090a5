"""Implicit subspace prior learning for dual-blind image restoration.

Thin re-export of the compiled extension; see the project README for the
full C++ library and CLI.
"""

try:
    from ._ispl import *  # noqa: F401,F403  (installed package layout)
    from ._ispl import __version__  # noqa: F401
except ImportError:  # development layout: extension on sys.path
    from _ispl import *  # noqa: F401,F403
    from _ispl import __version__  # noqa: F401

"""Python interface to the ckdprog pipeline."""

try:
    from ._ckdprog import *  # noqa: F401,F403
    from ._ckdprog import __version__  # noqa: F401
except ImportError:  # running against an in-tree build
    from _ckdprog import *  # noqa: F401,F403
    from _ckdprog import __version__  # noqa: F401

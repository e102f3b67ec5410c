"""Inextensible elastic rod simulation with impulse constraints and a
block-parallel execution engine."""

__version__ = "0.1.0"

try:
    from . import _core  # noqa: F401
    HAVE_COMPILED_CORE = True
except ImportError:
    _core = None
    HAVE_COMPILED_CORE = False

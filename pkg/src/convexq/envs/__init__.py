from . import fvrs, tiger

__all__ = ["fvrs", "tiger"]

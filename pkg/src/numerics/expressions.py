"""Space-time expressions for initial data and forcing."""
from __future__ import annotations

from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy

from src.exceptions import ContractViolation

_SYMBOLS = sympy.symbols("x y t")
_ALLOWED = {str(s): s for s in _SYMBOLS}


class SpaceTimeExpression:
    """A scalar expression in x, y and t evaluated on grid coordinates"""

    def __init__(self, source: str):
        try:
            self.expr = sympy.sympify(source, locals=_ALLOWED)
        except (sympy.SympifyError, TypeError, SyntaxError) as e:
            raise ContractViolation(f"cannot parse expression {source!r}: {e}") from e
        unknown = {str(s) for s in self.expr.free_symbols} - set(_ALLOWED)
        if unknown:
            raise ContractViolation(f"expression {source!r} uses unknown symbols {sorted(unknown)}")
        self.source = source

    def __getstate__(self):
        return {"source": self.source}

    def __setstate__(self, state):
        self.__init__(state["source"])

    @cached_property
    def _fn(self) -> Callable:
        return sympy.lambdify(_SYMBOLS, self.expr, modules="numpy")

    @property
    def is_time_dependent(self) -> bool:
        return _SYMBOLS[2] in self.expr.free_symbols

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def __call__(self, coords: Sequence[np.ndarray], t: float = 0.0) -> np.ndarray:
        x = coords[0]
        y = coords[1] if len(coords) > 1 else np.zeros_like(x)
        values = np.broadcast_to(np.asarray(self._fn(x, y, t), dtype=float), x.shape)
        return np.array(values, dtype=float)

"""Small test-only observable families and Hamiltonians."""

import numpy as np

from minmaxent.hamiltonian import EffectiveHamiltonian
from minmaxent.observables import ObservableSet


class PowerObservables(ObservableSet):
    """``f_k(x) = x^p_k`` for a 1D input; no parameters."""

    family = "powers"

    def __init__(self, powers):
        self.powers = tuple(powers)
        self.n_obs = len(self.powers)
        self.input_dim = 1
        self.theta = np.zeros(0)

    def _values(self, x):
        return np.column_stack([x[:, 0] ** p for p in self.powers])

    def _param_grad(self, x, w):
        return np.zeros(0)


def double_well(bounds=None) -> EffectiveHamiltonian:
    """``(x^2 - 1)^2`` up to the additive constant."""
    return EffectiveHamiltonian(PowerObservables((4, 2)), [1.0, -2.0], bounds=bounds)


def constant_scores(row):
    """A stand-in bias network returning the same scores for every input."""
    row = np.asarray(row, dtype=np.float64)

    def net(x):
        n = np.asarray(x).reshape(len(x), -1).shape[0]
        return np.tile(row, (n, 1)) if row.ndim else np.full(n, float(row))

    return net


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line

"""CVaR on uniform-cost Markov chains from transient distributions.

If the chain has not reached the goal by step ``n`` with probability ``g_n``, then
VaR_t is the first ``n`` with ``g_n <= t`` and CVaR_t = n + K_n / t, where ``K_n`` is
the expected remaining cost weighted by the step-``n`` distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from .linalg import to_fraction
from .model import EXACT, AssumptionError, Mdp, Number, NumericMode
from .risk import RiskResult
from .ssp import solve_ssp


class NotAChainError(ValueError):
    pass


@dataclass(frozen=True)
class TransientDistribution:
    step: int
    probs: tuple[Number, ...]
    not_goal: Number
    expected_remaining: Number


class MarkovChain:
    """Transition matrix and expected remaining costs of a unit-cost chain."""

    def __init__(self, m: Mdp, mode: NumericMode = EXACT, e=None):
        if not m.is_chain:
            raise NotAChainError("model is not a Markov chain")
        if not m.is_uniform:
            raise NotAChainError("chain costs are not uniform; use the value-iteration engine")
        self.mdp = m
        self.mode = mode
        self.e = tuple(e) if e is not None else solve_ssp(m, mode).e
        n = m.n_states
        self.nongoal = np.array([s not in m.goals for s in m.states])
        if mode.exact:
            zero = gmpy2.mpq(0)
            mat = np.full((n, n), zero, dtype=object)
            for s in m.states:
                for t, p in m.actions[s][0].successors:
                    mat[s, t] = gmpy2.mpq(p.numerator, p.denominator)
            self._e_vec = np.array([gmpy2.mpq(x.numerator, x.denominator) for x in map(to_fraction, self.e)], dtype=object)
        else:
            mat = np.zeros((n, n))
            for s in m.states:
                for t, p in m.actions[s][0].successors:
                    mat[s, t] = float(p)
            self._e_vec = np.array([float(x) for x in self.e])
        self.matrix = mat

    @classmethod
    def from_mdp(cls, m: Mdp, mode: NumericMode = EXACT) -> "MarkovChain":
        return cls(m, mode)

    def _zero_vec(self):
        if self.mode.exact:
            return np.full(self.mdp.n_states, gmpy2.mpq(0), dtype=object)
        return np.zeros(self.mdp.n_states)

    def _wrap(self, step: int, vec) -> TransientDistribution:
        g = vec[self.nongoal].sum() if self.nongoal.any() else vec[:0].sum()
        k = (vec * self._e_vec).sum()
        if self.mode.exact:
            conv = to_fraction
            return TransientDistribution(step, tuple(conv(x) for x in vec), conv(g), conv(k))
        return TransientDistribution(step, tuple(float(x) for x in vec), float(g), float(k))

    def _unwrap(self, d: TransientDistribution):
        if self.mode.exact:
            return np.array([gmpy2.mpq(p.numerator, p.denominator) for p in map(to_fraction, d.probs)], dtype=object)
        return np.array(d.probs, dtype=float)

    def var_cap(self, t) -> int:
        """Upper bound on VaR_t: Markov's inequality gives P[X > v] <= e(init) / v."""
        return math.ceil(to_fraction(self.e[self.mdp.initial]) / to_fraction(t) if self.mode.exact
                         else float(self.e[self.mdp.initial]) / float(t) * (1 + 1e-9)) + 1


def initial_distribution(chain: MarkovChain) -> TransientDistribution:
    v = chain._zero_vec()
    v[chain.mdp.initial] = 1
    return chain._wrap(0, v)


def step_distribution(chain: MarkovChain, d: TransientDistribution, k: int) -> TransientDistribution:
    if k < 1:
        raise ValueError("k must be positive")
    v = chain._unwrap(d)
    for _ in range(k):
        v = v.dot(chain.matrix)
    return chain._wrap(d.step + k, v)


def find_var(chain: MarkovChain, t) -> tuple[int, TransientDistribution]:
    """Smallest ``n`` with ``g_n <= t`` and the transient distribution at that step.

    Squares the transition matrix until the bracket [2^(k-1), 2^k] contains the
    answer, then descends through the stored powers like a binary search.
    """
    if not 0 < t <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {t}")
    t = chain.mode.convert(t)
    cap = chain.var_cap(t)
    v0 = chain._unwrap(initial_distribution(chain))

    def g(vec):
        return vec[chain.nongoal].sum()

    if g(v0) <= t:
        return 0, chain._wrap(0, v0)
    powers = [chain.matrix]
    at_pow = [v0.dot(chain.matrix)]  # distribution after 2^k steps
    while g(at_pow[-1]) > t:
        if 2 ** (len(powers) - 1) > cap:
            raise AssumptionError(f"VaR search exceeded the bound {cap}; the goal is not reached almost surely")
        sq = powers[-1].dot(powers[-1])
        powers.append(sq)
        at_pow.append(v0.dot(sq))
    k = len(powers) - 1
    if k == 0:
        return 1, chain._wrap(1, at_pow[0])
    # invariant: g at step n exceeds t, g at step n + 2^(j+1) does not
    n, vec = 2 ** (k - 1), at_pow[k - 1]
    for j in range(k - 2, -1, -1):
        cand = vec.dot(powers[j])
        if g(cand) > t:
            n += 2 ** j
            vec = cand
    return n + 1, chain._wrap(n + 1, vec.dot(powers[0]))


def find_var_naive(chain: MarkovChain, t) -> tuple[int, TransientDistribution]:
    """One matrix step at a time; reference implementation for :func:`find_var`."""
    t = chain.mode.convert(t)
    cap = chain.var_cap(t)
    d = initial_distribution(chain)
    while d.not_goal > t:
        if d.step > cap:
            raise AssumptionError(f"VaR search exceeded the bound {cap}")
        d = step_distribution(chain, d, 1)
    return d.step, d


def cvar_chain(m: Mdp | MarkovChain, t, mode: NumericMode = EXACT) -> RiskResult:
    chain = m if isinstance(m, MarkovChain) else MarkovChain(m, mode)
    n, d = find_var(chain, t)
    t = chain.mode.convert(t)
    return RiskResult(n, n + d.expected_remaining / t)

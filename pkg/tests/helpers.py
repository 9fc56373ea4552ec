"""Independent reference computations used as test oracles."""

import itertools

import numpy as np

from linregret.mdp import TabularMdp


def random_tabular(rng, S, A, H):
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    R = rng.uniform(0, 1, size=(H, S, A))
    init = rng.dirichlet(np.ones(S))
    return TabularMdp(P, R, init)


def forward_value(tab, policy, s1):
    """Expected return of a deterministic (H, S) policy by forward occupancy propagation."""
    occ = np.zeros(tab.S)
    occ[s1] = 1.0
    total = 0.0
    for h in range(tab.H):
        nxt = np.zeros(tab.S)
        for s in range(tab.S):
            a = policy[h][s]
            total += occ[s] * tab.rewards[h, s, a]
            nxt += occ[s] * tab.transitions[h, s, a]
        occ = nxt
    return total


def brute_force_optimum(tab):
    """Max over all A^(S*H) deterministic policies, per start state."""
    best = np.full(tab.S, -np.inf)
    for flat in itertools.product(range(tab.A), repeat=tab.S * tab.H):
        pol = np.array(flat).reshape(tab.H, tab.S)
        for s in range(tab.S):
            best[s] = max(best[s], forward_value(tab, pol, s))
    return best


def monte_carlo_value(tab, policy_probs, s1, n, seed):
    """Sample mean and standard error of the return under a stochastic (H, S, A) policy."""
    rng = np.random.default_rng(seed)
    returns = np.zeros(n)
    s = np.full(n, s1)
    for h in range(tab.H):
        cum_pi = np.cumsum(policy_probs[h][s], axis=1)
        a = (rng.random((n, 1)) > cum_pi).sum(axis=1)
        a = np.minimum(a, tab.A - 1)
        returns += tab.rewards[h, s, a]
        cum_p = np.cumsum(tab.transitions[h, s, a], axis=1)
        s = np.minimum((rng.random((n, 1)) > cum_p).sum(axis=1), tab.S - 1)
    return returns.mean(), returns.std(ddof=1) / np.sqrt(n)

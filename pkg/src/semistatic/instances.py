"""Built-in markets used by the CLI, the tests and the reproduction checks."""
from __future__ import annotations

import numpy as np

from .market import MarketModel, Node, ScenarioTree, build_market


def one_period(prices, probs, payoffs=(), s0=1.0, names=None, name="") -> MarketModel:
    """Single-period tree; ``prices`` is a list of terminal stock vectors (or scalars)."""
    prices = [np.atleast_1d(np.asarray(p, dtype=float)) for p in prices]
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    nodes = [Node("root", None, 0, 1.0)]
    stocks = {"root": s0}
    for k, (pr, pk) in enumerate(zip(prices, probs)):
        nid = f"w{k + 1}"
        nodes.append(Node(nid, "root", 1, float(pk)))
        stocks[nid] = pr
    tree = ScenarioTree.build(nodes, 1)
    names = names or [f"f{j + 1}" for j in range(len(payoffs))]
    derivs = [(nm, dict(zip(tree.terminals, map(float, f)))) for nm, f in zip(names, payoffs)]
    return build_market(tree, stocks, derivs, name=name)


def instance_a() -> MarketModel:
    """S: 1 -> {2, 1, 1/2} with equal probabilities, at-the-money call."""
    return one_period([2.0, 1.0, 0.5], [1 / 3, 1 / 3, 1 / 3], payoffs=[[1.0, 0.0, 0.0]],
                      names=["call"], name="instance-a")


def binary_claim_market() -> MarketModel:
    """No stocks; one claim paying +1 w.p. 2/3 and -1 w.p. 1/3."""
    nodes = [Node("root", None, 0, 1.0), Node("up", "root", 1, 2 / 3), Node("down", "root", 1, 1 / 3)]
    tree = ScenarioTree.build(nodes, 1)
    stocks = {nd.id: np.zeros(0) for nd in nodes}
    return build_market(tree, stocks, [("f", {"up": 1.0, "down": -1.0})], name="s10")


def binomial_tree(T: int, s0: float = 1.0, up: float = 1.2, down: float = 0.9, prob_up: float = 0.5,
                  payoff=None, name="binomial") -> MarketModel:
    """Non-recombining binomial tree; ``payoff`` maps terminal stock price to a claim."""
    nodes = [Node("r", None, 0, 1.0)]
    stocks = {"r": np.array([s0])}
    frontier = ["r"]
    for t in range(1, T + 1):
        nxt = []
        for nid in frontier:
            for tag, fac, pr in (("u", up, prob_up), ("d", down, 1 - prob_up)):
                cid = nid + tag
                nodes.append(Node(cid, nid, t, pr))
                stocks[cid] = stocks[nid] * fac
                nxt.append(cid)
        frontier = nxt
    tree = ScenarioTree.build(nodes, T)
    derivs = []
    if payoff is not None:
        derivs.append(("claim", {t: float(payoff(stocks[t][0])) for t in tree.terminals}))
    return build_market(tree, stocks, derivs, name=name)


BUILTIN = {"instance-a": instance_a, "s10": binary_claim_market}

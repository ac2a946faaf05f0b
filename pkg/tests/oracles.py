"""Brute-force reference computations, deliberately independent of the package."""

from __future__ import annotations


def incident_double_sum(zeta, chi):
    total = 0
    for z in zeta:
        for c in chi:
            total += z * c
    return total


def joint_table(transmitted, received, priors, likelihood):
    """{(tx, rx): P(tx, rx)} built from plain nested lists."""
    table = {}
    for i, tx in enumerate(transmitted):
        for j, rx in enumerate(received):
            table[(tx, rx)] = float(priors[i]) * float(likelihood[i][j])
    return table


def p_abnormal_joint(transmitted, received, priors, likelihood):
    """Joint mass on pairs whose received operation differs from the sent channel.

    Symbols are (entity, channel) / (channel, operation) tuples.
    """
    table = joint_table(transmitted, received, priors, likelihood)
    return sum(p for (tx, rx), p in table.items() if rx[1] != tx[1])


def posterior_joint(transmitted, received, priors, likelihood, rx):
    table = joint_table(transmitted, received, priors, likelihood)
    column = {t: p for (t, r), p in table.items() if r == rx}
    marginal = sum(column.values())
    return {t: p / marginal for t, p in column.items()}


def gap_groups(times_ms, threshold_ms):
    """Partition indices by transitive closure of |t_a - t_b| <= threshold (O(n^2) union-find)."""
    n = len(times_ms)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(n):
            if a != b and abs(times_ms[a] - times_ms[b]) <= threshold_ms:
                parent[find(a)] = find(b)
    groups = {}
    for a in range(n):
        groups.setdefault(find(a), set()).add(a)
    return sorted((frozenset(g) for g in groups.values()), key=lambda g: min(times_ms[i] for i in g))

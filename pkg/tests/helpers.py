import math

import numpy as np

from bell_lab.prob_core import MomentTriple


def random_valid_moments(rng, n, bound=0.99, exchangeable_fraction=0.5):
    """Valid MomentTriples with |m1|, |m2| <= bound.

    A share of the draws is put on the exchangeable surface m2 = m1*m12 so both
    sides of the equivalence get exercised; the rest come from Dirichlet joints.
    """
    out = []
    while len(out) < n:
        if rng.random() < exchangeable_fraction:
            m1, m12 = rng.uniform(-bound, bound), rng.uniform(-1, 1)
            m2 = m1 * m12
        else:
            p = rng.dirichlet(np.ones(4))
            m1 = p[0] + p[1] - p[2] - p[3]
            m2 = p[0] + p[2] - p[1] - p[3]
            m12 = p[0] + p[3] - p[1] - p[2]
        if abs(m1) > bound or abs(m2) > bound:
            continue
        if min(1 + s1 * m1 + s2 * m2 + s1 * s2 * m12
               for s1 in (1, -1) for s2 in (1, -1)) < 0:
            continue
        out.append(MomentTriple(float(m1), float(m2), float(m12)))
    return out


THETA_GRID = np.linspace(0.0, math.pi, 1000)

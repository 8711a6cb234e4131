"""From gap distances to net contributions.

A client's loss share is its fraction of the total weighted distance to the
estimated truth. Net contribution divides one unit of credit in inverse
proportion to the loss shares.
"""
from fractions import Fraction

import numpy as np

from freca.aggregation import Regulation, fedtruth
from freca.contribution import gap_distance, loss_share, net_contribution
from freca.params import ModelUpdate

shares = [0.1, 0.2, 0.3, 0.4]
net = net_contribution(shares)
print("loss shares     :", shares)
print("net contribution:", [str(Fraction(c).limit_denominator(100)) for c in net])
# share * contribution is the same for every client
print("share x net     :", [round(s * c, 6) for s, c in zip(shares, net)])

# With g(p) = 1/p every client's weighted distance equals the total distance,
# so loss shares (and net contributions) are uniform. With -log p they are not.
rng = np.random.default_rng(1)
updates = [ModelUpdate(k, rng.standard_normal(20) * (1 + k), 10) for k in range(4)]
for reg in (Regulation("reciprocal"), Regulation("neg_log")):
    res = fedtruth(updates, reg=reg)
    _, gaps = gap_distance(updates, res, reg=reg)
    print(f"{reg.kind:>10}: net =", [round(c, 4) for c in net_contribution(loss_share(gaps))])

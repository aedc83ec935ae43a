"""
Latin hypercube samples with spread-out points
==============================================

Plain Latin hypercube sampling puts one point in every row and column
stratum but can still cluster points. LHSMDU draws five times as many
random points, repeatedly drops the one closest to its neighbours, and only
then assigns strata.
"""

import numpy as np

from boxverify import Box, lhsmdu
from boxverify.sampler import strata

box = Box((-1.0, 0.0), (1.0, 10.0))
samples = lhsmdu(12, box, seed=3)
print(samples.points.round(3))

###############################################################################
# Each column of ``strata`` is a permutation of ``0..n-1``: the Latin property.
s = strata(samples.points, box)
print(s.T)
assert all(sorted(col) == list(range(12)) for col in s.T)


###############################################################################
# Compare the smallest pairwise distance with independent uniform draws, in
# unit-box coordinates.
def closest_pair(points):
    u = (points - np.array(box.lo)) / (np.array(box.hi) - np.array(box.lo))
    d = np.linalg.norm(u[:, None] - u[None], axis=-1)
    return d[np.triu_indices(len(u), 1)].min()


rng = np.random.default_rng(0)
iid = [closest_pair(np.array(box.lo) + rng.random((12, 2)) * np.array([2.0, 10.0])) for _ in range(50)]
mdu = [closest_pair(lhsmdu(12, box, seed=k).points) for k in range(50)]
print(f"median closest pair: iid {np.median(iid):.3f}, lhsmdu {np.median(mdu):.3f}")

"""
Initialization bias in continuous-time estimators
=================================================

Four agents on a small undirected graph track the average of constant
references. The basic estimator needs its auxiliary states to start with
zero sum; here they do not, and the error settles at a uniform offset.
The proportional-integral estimator forgets the bad start.
"""

import numpy as np

from dacsim import ct
from dacsim.graph import GRAPH_B
from dacsim.signals import Constant, SignalBundle

refs = SignalBundle(tuple(Constant(v) for v in (1.0, -2.0, 3.0, 5.0)))
p0 = [0.4, -0.1, 0.3, 0.2]   # sums to 0.8 instead of 0

basic = ct.integrate(ct.BasicDac(), GRAPH_B, refs, 20.0, 1e-3, init={"p": p0})
pidac = ct.integrate(ct.PiDac(1.0), GRAPH_B, refs, 20.0, 1e-3, init={"p": p0, "q": p0})

# The offset predicted for the basic estimator is -sum(p0)/n per agent
print("basic final error :", np.round(basic.error()[-1], 6))
print("predicted offset  :", -sum(p0) / 4)
print("PI final error    :", np.abs(pidac.error()[-1]).max())

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    ax[0].plot(basic.t, basic.error())
    ax[0].set_title("basic")
    ax[1].plot(pidac.t, pidac.error())
    ax[1].set_title("proportional-integral")
    for a in ax:
        a.set_xlabel("t [s]")
    ax[0].set_ylabel("x_i - average")
    fig.tight_layout()
    fig.savefig("bias_and_robustness.png", dpi=120)

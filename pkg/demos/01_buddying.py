# %% [markdown]
# # Buddying a synthetic feeder
#
# Each unmonitored customer on a feeder is matched to a monitored profile
# from the same group. The simple algorithm picks the profile whose mean
# daily demand is closest to the customer's meter reading. The genetic
# algorithm trades that customer-level fit against the fit to the measured
# substation demand, controlled by the weight w.

# %%
import numpy as np

from lvbuddy.buddying import GAConfig, cost, ga_buddy, simple_buddy
from lvbuddy.evaluation import rmae
from lvbuddy.model import aggregate_assignment
from lvbuddy.synthgen import ScenarioConfig, generate_network

net = generate_network(ScenarioConfig(seed=3, n_feeders=5, nondomestic_prob=0.2))
w = net.windows
train = net.pool.window(w.train_start, w.train_days)
test = net.pool.window(w.test_start, w.test_days)
print(f"{len(net.pool)} monitored profiles, {len(net.feeders)} feeders")

# %% Simple algorithm versus GA at a few weights
feeder = net.feeders[0]
actual = feeder.substation_series.window(w.test_start, w.test_days)
sa = simple_buddy(feeder, train)
print(f"feeder {feeder.id}: {feeder.M} customers, {feeder.M_com} non-domestic")
print(f"  SA        test RMAE {rmae(actual, aggregate_assignment(feeder, sa, test)):.4f}")
for wt in (0.0, 0.5, 1.0):
    res = ga_buddy(feeder, train, GAConfig(w=wt, seed=1))
    err = rmae(actual, aggregate_assignment(feeder, res.assignment, test))
    print(f"  GA w={wt:.1f} test RMAE {err:.4f}  cost {res.cost.total:.4f}  generations {len(res.trace)}")

# %% The cost at w = 0 only looks at the substation, at w = 1 only at the meters
res = ga_buddy(feeder, train, GAConfig(w=0.0, seed=1))
for wt in (0.0, 1.0):
    print(f"w={wt}: SA {cost(feeder, sa, train, wt).total:.4f}  GA(w=0) {cost(feeder, res.assignment, train, wt).total:.4f}")

# %% Error against weight, averaged over feeders
weights = np.linspace(0, 1, 6)
errs = np.zeros((len(net.feeders), weights.size))
for i, f in enumerate(net.feeders):
    act = f.substation_series.window(w.test_start, w.test_days)
    for j, wt in enumerate(weights):
        a = ga_buddy(f, train, GAConfig(w=float(wt), seed=i)).assignment
        errs[i, j] = rmae(act, aggregate_assignment(f, a, test))
for wt, e in zip(weights, errs.mean(axis=0)):
    print(f"w={wt:.1f}  mean test RMAE {e:.4f}")
